use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mptcp_sim::cc::CcKind;
use mptcp_sim::harness::{self, RunMatrix};
use mptcp_sim::metrics::{score_runs, Sigma};
use mptcp_sim::sched::SchedKind;

#[derive(Parser)]
#[command(name = "mptcp-sim", version, about = "Two-path MPTCP scheduler and congestion control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Population,
    Sample,
}

impl From<SigmaArg> for Sigma {
    fn from(s: SigmaArg) -> Self {
        match s {
            SigmaArg::Population => Sigma::Population,
            SigmaArg::Sample => Sigma::Sample,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenario matrix and write CSVs.
    Run {
        /// Matrix file; the built-in 29-scenario matrix when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Master seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scheduler: Option<SchedKind>,
        #[arg(long)]
        cca: Option<CcKind>,
        #[arg(long)]
        scenario: Option<String>,
        /// Override the iteration count.
        #[arg(long)]
        iterations: Option<u32>,
        /// Write traces/<run-id>.log for every run.
        #[arg(long)]
        traces: bool,
    },
    /// Recompute the score tables from an existing runs.csv.
    Score {
        runs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        sigma: Option<SigmaArg>,
    },
    /// Print the matrix.
    List {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(config: Option<&Path>) -> Result<RunMatrix> {
    Ok(match config {
        Some(p) => RunMatrix::load(p)?,
        None => RunMatrix::default_matrix(),
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            out,
            jobs,
            seed,
            scheduler,
            cca,
            scenario,
            iterations,
            traces,
        } => {
            let mut m = load(config.as_deref())?;
            if let Some(s) = seed {
                m.master_seed = s;
            }
            if let Some(i) = iterations {
                if i == 0 {
                    bail!("--iterations must be at least 1");
                }
                m.iterations = i;
            }
            m.restrict(scheduler, cca, scenario.as_deref())?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if jobs == 0 {
                bail!("--jobs must be at least 1");
            }
            eprintln!("running {} simulations on {jobs} threads", m.len());
            let trace_dir = traces.then(|| out.join("traces"));
            let results = harness::execute(&m, jobs, trace_dir.as_deref())
                .with_context(|| format!("writing traces under {}", out.display()))?;
            let summary = harness::emit(&results, &out, m.sigma)
                .with_context(|| format!("writing results to {}", out.display()))?;
            eprintln!("{} runs written to {}", summary.runs, out.join("runs.csv").display());
            match &summary.scores {
                Ok(t) => {
                    for cca in t.ranking() {
                        let overall = t.cca_overall[&cca].map_or("absent".to_string(), |v| format!("{v:.4}"));
                        eprintln!("  {cca:8} overall {overall}");
                    }
                }
                Err(e) => eprintln!("scores not written: {e}"),
            }
            for (id, e) in &summary.failures {
                eprintln!("run {id} failed: {e}");
            }
            Ok(if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Score { runs, out, sigma } => {
            let records = harness::read_runs_csv(&runs)
                .with_context(|| format!("reading {}", runs.display()))?;
            let table = score_runs(&records, sigma.map(Sigma::from).unwrap_or_default())?;
            let out = out.unwrap_or_else(|| runs.parent().map(Path::to_path_buf).unwrap_or_default());
            std::fs::create_dir_all(&out)?;
            harness::write_scores(&out, &table)?;
            for cca in table.ranking() {
                let score = table.cca_score[&cca];
                let cv = table.cca_cv[&cca].map_or("absent".to_string(), |v| format!("{v:.4}"));
                let overall = table.cca_overall[&cca].map_or("absent".to_string(), |v| format!("{v:.4}"));
                println!("{cca:8} score {score:.4} cv {cv} overall {overall}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::List { config } => {
            let m = load(config.as_deref())?;
            println!(
                "{} scenarios x {} schedulers x {} ccas x {} iterations = {} runs",
                m.scenarios.len(),
                m.schedulers.len(),
                m.ccas.len(),
                m.iterations,
                m.len()
            );
            for s in &m.scenarios {
                println!("{:6} {:13} sf1 {:22} sf2 {}", s.id, s.family.name(), s.sf1_spec.to_string(), s.sf2_spec);
            }
            let names = |v: Vec<&str>| v.join(",");
            println!("schedulers: {}", names(m.schedulers.iter().map(|s| s.name()).collect()));
            println!("ccas: {}", names(m.ccas.iter().map(|c| c.name()).collect()));
            Ok(ExitCode::SUCCESS)
        }
    }
}
