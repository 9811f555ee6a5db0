//! Scenario matrix: configuration, parallel execution and CSV output.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::cc::CcKind;
use crate::engine::{derive_seed, SimTime};
use crate::metrics::{score_runs, MetricsError, RunRecord, ScoreTable, Sigma};
use crate::path::{PathConfig, PathError};
use crate::sched::SchedKind;
use crate::sim::{self, SimConfig};

pub const DEFAULT_MATRIX: &str = include_str!("../../../configs/default_matrix.toml");
pub const DEFAULT_MASTER_SEED: u64 = 42;

pub const RUNS_HEADER: [&str; 11] = [
    "scenario", "family", "scheduler", "cca", "iteration", "sf1_gp", "sf2_gp", "agg_gp", "sf1_rtx",
    "sf2_rtx", "avg_ppd_ms",
];
pub const SCORES_HEADER: [&str; 5] = ["table", "cca", "family", "scheduler", "value"];
pub const DIST_HEADER: [&str; 4] = ["cca", "scheduler", "x", "p"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("{field} out of range: {value}")]
    Range { field: String, value: f64 },
    #[error("unknown {what} {name:?}")]
    Unknown { what: &'static str, name: String },
    #[error("duplicate scenario id {0:?}")]
    DuplicateScenario(String),
    #[error("{0} selects nothing")]
    Empty(&'static str),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Homogeneous,
    Mild,
    Intense,
    VeryIntense,
    Mixed,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Homogeneous,
        Family::Mild,
        Family::Intense,
        Family::VeryIntense,
        Family::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Homogeneous => "homogeneous",
            Family::Mild => "mild",
            Family::Intense => "intense",
            Family::VeryIntense => "very_intense",
            Family::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ConfigError::Unknown {
                what: "family",
                name: s.to_string(),
            })
    }
}

/// Path parameters as written in the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub rate_mbps: f64,
    pub rtt_ms: f64,
    pub loss_pct: f64,
}

impl PathSpec {
    fn build(&self, field: &str) -> Result<PathConfig, ConfigError> {
        PathConfig::from_table(self.rate_mbps, self.rtt_ms, self.loss_pct).map_err(|e| match e {
            PathError::Range { field: f, value } => ConfigError::Range {
                field: format!("{field}.{f}"),
                value,
            },
            PathError::UnknownSubflow(_) => unreachable!("not produced by from_table"),
        })
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Mbps/{}ms/{}%", self.rate_mbps, self.rtt_ms, self.loss_pct)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    master_seed: Option<u64>,
    duration_s: Option<f64>,
    iterations: Option<u32>,
    schedulers: Option<Vec<String>>,
    ccas: Option<Vec<String>>,
    l3: Option<PathSpec>,
    options: Option<RawOptions>,
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    llhd_beta: Option<f64>,
    ecf_beta: Option<f64>,
    sigma: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    family: String,
    sf1: PathSpec,
    sf2: PathSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub family: Family,
    pub sf1_spec: PathSpec,
    pub sf2_spec: PathSpec,
    pub sf1: PathConfig,
    pub sf2: PathConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMatrix {
    pub master_seed: u64,
    pub duration_s: f64,
    pub iterations: u32,
    pub schedulers: Vec<SchedKind>,
    pub ccas: Vec<CcKind>,
    pub l3: PathConfig,
    pub scenarios: Vec<Scenario>,
    pub llhd_beta: f64,
    pub ecf_beta: f64,
    pub sigma: Sigma,
}

/// One cell of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunKey {
    pub scenario: usize,
    pub scheduler: SchedKind,
    pub cca: CcKind,
    pub iteration: u32,
}

fn parse_error(src: &str, e: toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    let message = e.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| {
            src.lines()
                .nth(line.saturating_sub(1))
                .and_then(|l| l.split('=').next())
                .map(|k| k.trim().trim_matches(['[', ']']).to_string())
                .unwrap_or_default()
        });
    ConfigError::Parse {
        line,
        field,
        message,
    }
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::Range {
            field: field.to_string(),
            value: v,
        })
    }
}

impl RunMatrix {
    pub fn default_matrix() -> Self {
        RunMatrix::from_toml(DEFAULT_MATRIX).expect("built-in matrix parses")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunMatrix::from_toml(&src)
    }

    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| parse_error(src, e))?;
        let duration_s = positive("duration_s", raw.duration_s.unwrap_or(30.0))?;
        let iterations = raw.iterations.unwrap_or(5);
        if iterations == 0 {
            return Err(ConfigError::Range {
                field: "iterations".into(),
                value: 0.0,
            });
        }
        let schedulers = match raw.schedulers {
            None => SchedKind::MATRIX.to_vec(),
            Some(v) => v
                .iter()
                .map(|s| {
                    s.parse().map_err(|_| ConfigError::Unknown {
                        what: "scheduler",
                        name: s.clone(),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let ccas = match raw.ccas {
            None => CcKind::MATRIX.to_vec(),
            Some(v) => v
                .iter()
                .map(|s| {
                    s.parse().map_err(|_| ConfigError::Unknown {
                        what: "cca",
                        name: s.clone(),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let l3 = match raw.l3 {
            Some(p) => p.build("l3")?,
            None => sim::default_l3(),
        };
        let opts = raw.options.unwrap_or(RawOptions {
            llhd_beta: None,
            ecf_beta: None,
            sigma: None,
        });
        let llhd_beta = positive("options.llhd_beta", opts.llhd_beta.unwrap_or(crate::sched::LLHD_BETA))?;
        let ecf_beta = positive("options.ecf_beta", opts.ecf_beta.unwrap_or(crate::sched::ECF_BETA))?;
        let sigma = match opts.sigma.as_deref() {
            None | Some("population") => Sigma::Population,
            Some("sample") => Sigma::Sample,
            Some(other) => {
                return Err(ConfigError::Unknown {
                    what: "sigma",
                    name: other.to_string(),
                })
            }
        };
        let mut seen = BTreeSet::new();
        let mut scenarios = Vec::with_capacity(raw.scenario.len());
        for s in raw.scenario {
            if !seen.insert(s.id.clone()) {
                return Err(ConfigError::DuplicateScenario(s.id));
            }
            scenarios.push(Scenario {
                family: s.family.parse()?,
                sf1: s.sf1.build(&format!("{}.sf1", s.id))?,
                sf2: s.sf2.build(&format!("{}.sf2", s.id))?,
                sf1_spec: s.sf1,
                sf2_spec: s.sf2,
                id: s.id,
            });
        }
        let m = RunMatrix {
            master_seed: raw.master_seed.unwrap_or(DEFAULT_MASTER_SEED),
            duration_s,
            iterations,
            schedulers,
            ccas,
            l3,
            scenarios,
            llhd_beta,
            ecf_beta,
            sigma,
        };
        m.check_nonempty()?;
        Ok(m)
    }

    fn check_nonempty(&self) -> Result<(), ConfigError> {
        if self.scenarios.is_empty() {
            return Err(ConfigError::Empty("scenario list"));
        }
        if self.schedulers.is_empty() {
            return Err(ConfigError::Empty("scheduler list"));
        }
        if self.ccas.is_empty() {
            return Err(ConfigError::Empty("cca list"));
        }
        Ok(())
    }

    /// Narrows the matrix to one scheduler, CCA or scenario id.
    pub fn restrict(
        &mut self,
        scheduler: Option<SchedKind>,
        cca: Option<CcKind>,
        scenario: Option<&str>,
    ) -> Result<(), ConfigError> {
        if let Some(s) = scheduler {
            self.schedulers = vec![s];
        }
        if let Some(c) = cca {
            self.ccas = vec![c];
        }
        if let Some(id) = scenario {
            self.scenarios.retain(|s| s.id == id);
            if self.scenarios.is_empty() {
                return Err(ConfigError::Unknown {
                    what: "scenario",
                    name: id.to_string(),
                });
            }
        }
        self.check_nonempty()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len() * self.schedulers.len() * self.ccas.len() * self.iterations as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every run, in (scenario, scheduler, cca, iteration) order.
    pub fn runs(&self) -> Vec<RunKey> {
        let mut v = Vec::with_capacity(self.len());
        for scenario in 0..self.scenarios.len() {
            for &scheduler in &self.schedulers {
                for &cca in &self.ccas {
                    for iteration in 1..=self.iterations {
                        v.push(RunKey {
                            scenario,
                            scheduler,
                            cca,
                            iteration,
                        });
                    }
                }
            }
        }
        v
    }

    pub fn run_id(&self, k: &RunKey) -> String {
        format!(
            "{}-{}-{}-{}",
            self.scenarios[k.scenario].id, k.scheduler, k.cca, k.iteration
        )
    }

    pub fn seed(&self, k: &RunKey) -> u64 {
        let label = format!(
            "{}/{}/{}/{}",
            self.scenarios[k.scenario].id, k.scheduler, k.cca, k.iteration
        );
        derive_seed(self.master_seed, &label)
    }

    pub fn sim_config(&self, k: &RunKey) -> SimConfig {
        let sc = &self.scenarios[k.scenario];
        let mut cfg = SimConfig::new(sc.sf1.clone(), sc.sf2.clone(), k.scheduler, k.cca, self.seed(k));
        cfg.l3 = self.l3.clone();
        cfg.duration = SimTime::from_secs_f64(self.duration_s);
        cfg.llhd_beta = self.llhd_beta;
        cfg.ecf_beta = self.ecf_beta;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub key: RunKey,
    pub run_id: String,
    pub outcome: Result<RunRecord, String>,
}

fn run_one(m: &RunMatrix, k: &RunKey, trace_dir: Option<&Path>) -> RunResult {
    let run_id = m.run_id(k);
    let mut cfg = m.sim_config(k);
    cfg.traces = trace_dir.is_some();
    let sc = &m.scenarios[k.scenario];
    let outcome = sim::run(cfg).map_err(|e| e.to_string()).and_then(|out| {
        if let (Some(dir), Some(lines)) = (trace_dir, out.trace.as_ref()) {
            let mut text = lines.join("\n");
            text.push('\n');
            fs::write(dir.join(format!("{run_id}.log")), text).map_err(|e| e.to_string())?;
        }
        let bytes = [out.subflows[0].delivered_bytes, out.subflows[1].delivered_bytes];
        let rtx = [out.subflows[0].retransmissions, out.subflows[1].retransmissions];
        Ok(RunRecord::from_bytes(
            (&sc.id, sc.family.name(), k.scheduler.name(), k.cca.name(), k.iteration),
            bytes,
            rtx,
            out.duration_s,
        ))
    });
    RunResult {
        key: k.clone(),
        run_id,
        outcome,
    }
}

/// Runs every cell on a pool of `jobs` threads. Results come back in run
/// order whatever the pool size.
pub fn execute(m: &RunMatrix, jobs: usize, trace_dir: Option<&Path>) -> io::Result<Vec<RunResult>> {
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(io::Error::other)?;
    let keys = m.runs();
    Ok(pool.install(|| keys.par_iter().map(|k| run_one(m, k, trace_dir)).collect()))
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RUNS_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.family.clone(),
            r.scheduler.clone(),
            r.cca.clone(),
            r.iteration.to_string(),
            r.sf1_gp.to_string(),
            r.sf2_gp.to_string(),
            r.agg_gp.to_string(),
            r.sf1_rtx.to_string(),
            r.sf2_rtx.to_string(),
            r.avg_ppd_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[derive(Debug, Error)]
pub enum RunsCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: bad {field} value {value:?}")]
    Field {
        row: usize,
        field: &'static str,
        value: String,
    },
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>, RunsCsvError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RUNS_HEADER {
        return Err(RunsCsvError::Header(header));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        fn num<T: FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T, RunsCsvError> {
            rec[idx].parse().map_err(|_| RunsCsvError::Field {
                row,
                field: RUNS_HEADER[idx],
                value: rec[idx].to_string(),
            })
        }
        out.push(RunRecord {
            scenario: rec[0].to_string(),
            family: rec[1].to_string(),
            scheduler: rec[2].to_string(),
            cca: rec[3].to_string(),
            iteration: num(&rec, 4, row)?,
            sf1_gp: num(&rec, 5, row)?,
            sf2_gp: num(&rec, 6, row)?,
            agg_gp: num(&rec, 7, row)?,
            sf1_rtx: num(&rec, 8, row)?,
            sf2_rtx: num(&rec, 9, row)?,
            avg_ppd_ms: num(&rec, 10, row)?,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores(out_dir: &Path, t: &ScoreTable) -> io::Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("scores.csv")).map_err(csv_err)?;
    w.write_record(SCORES_HEADER).map_err(csv_err)?;
    for ((cca, fam, sched), v) in &t.ps_score {
        w.write_record(["ps_score", cca, fam, sched, &v.to_string()]).map_err(csv_err)?;
    }
    for ((cca, fam), v) in &t.family_score {
        w.write_record(["cca_family_score", cca, fam, "", &v.to_string()]).map_err(csv_err)?;
    }
    for (cca, v) in &t.cca_score {
        w.write_record(["cca_score", cca, "", "", &v.to_string()]).map_err(csv_err)?;
    }
    for (cca, v) in &t.cca_cv {
        w.write_record(["cca_cv", cca, "", "", &opt(*v)]).map_err(csv_err)?;
    }
    for (cca, v) in &t.cca_overall {
        w.write_record(["cca_overall_score", cca, "", "", &opt(*v)]).map_err(csv_err)?;
    }
    w.flush()?;

    for (name, series) in [("eccdf.csv", &t.eccdf), ("ecdf.csv", &t.ecdf)] {
        let mut w = csv::Writer::from_path(out_dir.join(name)).map_err(csv_err)?;
        w.write_record(DIST_HEADER).map_err(csv_err)?;
        for ((cca, sched), pts) in series {
            for (x, p) in pts {
                w.write_record([cca, sched, &x.to_string(), &p.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct EmitSummary {
    pub runs: usize,
    pub failures: Vec<(String, String)>,
    pub scores: Result<ScoreTable, MetricsError>,
}

/// Writes runs.csv, and scores.csv plus the distribution series when the
/// successful runs form a complete grid. Failed runs go to failures.csv.
pub fn emit(results: &[RunResult], out_dir: &Path, sigma: Sigma) -> io::Result<EmitSummary> {
    fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match &r.outcome {
            Ok(rec) => records.push(rec.clone()),
            Err(e) => failures.push((r.run_id.clone(), e.clone())),
        }
    }
    write_runs_csv(&out_dir.join("runs.csv"), &records)?;
    if !failures.is_empty() {
        let mut w = csv::Writer::from_path(out_dir.join("failures.csv")).map_err(csv_err)?;
        w.write_record(["run", "error"]).map_err(csv_err)?;
        for (id, e) in &failures {
            w.write_record([id, e]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let scores = score_runs(&records, sigma);
    if let Ok(t) = &scores {
        write_scores(out_dir, t)?;
    }
    Ok(EmitSummary {
        runs: records.len(),
        failures,
        scores,
    })
}
