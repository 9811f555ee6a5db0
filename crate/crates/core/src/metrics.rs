//! Goodput, per-packet delay and the score pipeline over a set of runs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::path::WIRE_MSS;

/// Aggregate goodput ceiling of the two 100 Mbps paths.
pub const MAX_GP_MBPS: f64 = 200.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no bytes delivered")]
    ZeroBytes,
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("missing score for cca {cca}, family {family}, scheduler {scheduler}")]
    IncompleteGrid {
        cca: String,
        family: String,
        scheduler: String,
    },
    #[error("empty input")]
    EmptyInput,
}

pub fn goodput_mbps(bytes: u64, duration_s: f64) -> f64 {
    bytes as f64 * 8.0 / (duration_s * 1024.0 * 1024.0)
}

/// Milliseconds per packet at the delivered packet rate.
pub fn per_packet_delay_ms(total_bytes: u64, mss: u32, duration_s: f64) -> Result<f64, MetricsError> {
    if total_bytes == 0 {
        return Err(MetricsError::ZeroBytes);
    }
    let pps = total_bytes as f64 / (mss as f64 * duration_s);
    Ok(1.0 / pps * 1000.0)
}

pub fn ps_score(avg_gp: &[f64], family_size: usize, max_gp: f64) -> Result<f64, MetricsError> {
    if avg_gp.len() != family_size {
        return Err(MetricsError::SizeMismatch {
            expected: family_size,
            got: avg_gp.len(),
        });
    }
    Ok(avg_gp.iter().map(|g| g / (family_size as f64 * max_gp)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sigma {
    #[default]
    Population,
    Sample,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64], sigma: Sigma) -> f64 {
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu).powi(2)).sum();
    let n = match sigma {
        Sigma::Population => values.len() as f64,
        Sigma::Sample => (values.len() as f64 - 1.0).max(1.0),
    };
    (ss / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaScores {
    pub per_family: Vec<f64>,
    pub score: f64,
    pub cv: Option<f64>,
    pub overall: Option<f64>,
}

/// `ps[f][s]` holds the score of scheduler `s` in family `f`.
pub fn cca_scores(ps: &[Vec<f64>], sigma: Sigma) -> Result<CcaScores, MetricsError> {
    if ps.is_empty() || ps.iter().any(|row| row.is_empty()) {
        return Err(MetricsError::EmptyInput);
    }
    let per_family: Vec<f64> = ps
        .iter()
        .map(|row| row.iter().map(|v| v / row.len() as f64).sum())
        .collect();
    let score = per_family.iter().sum::<f64>() / per_family.len() as f64;
    let sd = std_dev(&per_family, sigma);
    let cv = (score != 0.0).then(|| sd / score);
    let overall = cv.filter(|&c| c != 0.0).map(|c| score / c);
    Ok(CcaScores {
        per_family,
        score,
        cv,
        overall,
    })
}

fn sorted(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(x, P[X <= x])` at every distinct sample value.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let v = sorted(values)?;
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    Ok(out)
}

/// `(x, P[X >= x])` at every distinct sample value.
pub fn eccdf(values: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let v = sorted(values)?;
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if out.last().is_some_and(|l| l.0 == x) {
            continue;
        }
        out.push((x, (v.len() - i) as f64 / n));
    }
    Ok(out)
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub family: String,
    pub scheduler: String,
    pub cca: String,
    pub iteration: u32,
    pub sf1_gp: f64,
    pub sf2_gp: f64,
    pub agg_gp: f64,
    pub sf1_rtx: u64,
    pub sf2_rtx: u64,
    pub avg_ppd_ms: f64,
}

impl RunRecord {
    pub fn from_bytes(
        key: (&str, &str, &str, &str, u32),
        sf_bytes: [u64; 2],
        sf_rtx: [u64; 2],
        duration_s: f64,
    ) -> Self {
        let total = sf_bytes[0] + sf_bytes[1];
        RunRecord {
            scenario: key.0.to_string(),
            family: key.1.to_string(),
            scheduler: key.2.to_string(),
            cca: key.3.to_string(),
            iteration: key.4,
            sf1_gp: goodput_mbps(sf_bytes[0], duration_s),
            sf2_gp: goodput_mbps(sf_bytes[1], duration_s),
            agg_gp: goodput_mbps(total, duration_s),
            sf1_rtx: sf_rtx[0],
            sf2_rtx: sf_rtx[1],
            avg_ppd_ms: per_packet_delay_ms(total, WIRE_MSS, duration_s).unwrap_or(f64::INFINITY),
        }
    }
}

/// Every score table derived from a set of runs. Keys are names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    /// (cca, family, scheduler)
    pub ps_score: BTreeMap<(String, String, String), f64>,
    /// (cca, family)
    pub family_score: BTreeMap<(String, String), f64>,
    pub cca_score: BTreeMap<String, f64>,
    pub cca_cv: BTreeMap<String, Option<f64>>,
    pub cca_overall: BTreeMap<String, Option<f64>>,
    /// (cca, scheduler) -> goodput ECCDF over scenario averages.
    pub eccdf: BTreeMap<(String, String), Vec<(f64, f64)>>,
    /// (cca, scheduler) -> per-packet delay ECDF over scenario averages.
    pub ecdf: BTreeMap<(String, String), Vec<(f64, f64)>>,
}

impl ScoreTable {
    /// CCAs ordered by overall score, best first; absent scores last.
    pub fn ranking(&self) -> Vec<String> {
        let mut v: Vec<(String, f64)> = self
            .cca_overall
            .iter()
            .map(|(k, s)| (k.clone(), s.unwrap_or(f64::NEG_INFINITY)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.into_iter().map(|(k, _)| k).collect()
    }
}

#[derive(Default)]
struct Avg {
    gp: f64,
    ppd: f64,
    n: u32,
}

pub fn score_runs(records: &[RunRecord], sigma: Sigma) -> Result<ScoreTable, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    // (cca, scheduler, family, scenario) -> iteration average
    let mut avg: BTreeMap<(&str, &str, &str, &str), Avg> = BTreeMap::new();
    let mut family_members: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut ccas = BTreeSet::new();
    let mut schedulers = BTreeSet::new();
    for r in records {
        let a = avg
            .entry((&r.cca, &r.scheduler, &r.family, &r.scenario))
            .or_default();
        a.gp += r.agg_gp;
        a.ppd += r.avg_ppd_ms;
        a.n += 1;
        family_members.entry(&r.family).or_default().insert(&r.scenario);
        ccas.insert(r.cca.as_str());
        schedulers.insert(r.scheduler.as_str());
    }

    let mut table = ScoreTable::default();
    for &cca in &ccas {
        let mut grid = Vec::new();
        for (&family, members) in &family_members {
            let mut row = Vec::new();
            for &sched in &schedulers {
                let gps: Vec<f64> = members
                    .iter()
                    .filter_map(|&sc| avg.get(&(cca, sched, family, sc)))
                    .map(|a| a.gp / a.n as f64)
                    .collect();
                if gps.len() != members.len() {
                    return Err(MetricsError::IncompleteGrid {
                        cca: cca.to_string(),
                        family: family.to_string(),
                        scheduler: sched.to_string(),
                    });
                }
                let ps = ps_score(&gps, members.len(), MAX_GP_MBPS)?;
                table
                    .ps_score
                    .insert((cca.to_string(), family.to_string(), sched.to_string()), ps);
                row.push(ps);
            }
            grid.push(row);
        }
        let s = cca_scores(&grid, sigma)?;
        for ((&family, _), v) in family_members.iter().zip(&s.per_family) {
            table
                .family_score
                .insert((cca.to_string(), family.to_string()), *v);
        }
        table.cca_score.insert(cca.to_string(), s.score);
        table.cca_cv.insert(cca.to_string(), s.cv);
        table.cca_overall.insert(cca.to_string(), s.overall);

        for &sched in &schedulers {
            let (gps, ppds): (Vec<f64>, Vec<f64>) = avg
                .iter()
                .filter(|(k, _)| k.0 == cca && k.1 == sched)
                .map(|(_, a)| (a.gp / a.n as f64, a.ppd / a.n as f64))
                .unzip();
            let key = (cca.to_string(), sched.to_string());
            table.eccdf.insert(key.clone(), eccdf(&gps)?);
            table.ecdf.insert(key, ecdf(&ppds)?);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
    }

    #[test]
    fn goodput_examples() {
        assert!(close(goodput_mbps(393_216_000, 30.0), 100.0));
        assert_eq!(goodput_mbps(0, 30.0), 0.0);
        assert!(close(goodput_mbps(131_072, 1.0), 1.0));
    }

    #[test]
    fn ppd_examples() {
        assert!(close(per_packet_delay_ms(1514 * 30_000, 1514, 30.0).unwrap(), 1.0));
        assert!(close(per_packet_delay_ms(1514 * 30, 1514, 30.0).unwrap(), 1000.0));
        assert_eq!(per_packet_delay_ms(0, 1514, 30.0), Err(MetricsError::ZeroBytes));
    }

    #[test]
    fn score_examples() {
        assert!(close(ps_score(&[100.0, 100.0], 2, 200.0).unwrap(), 0.5));
        assert!(ps_score(&[1.0], 2, 200.0).is_err());
        let s = cca_scores(&[vec![0.4, 0.6]], Sigma::Population).unwrap();
        assert!(close(s.per_family[0], 0.5));
        let s = cca_scores(&[vec![0.4], vec![0.6]], Sigma::Population).unwrap();
        assert!(close(s.score, 0.5));
        assert!(close(s.cv.unwrap(), 0.2));
        assert!(close(s.overall.unwrap(), 2.5));
        let s = cca_scores(&[vec![0.3], vec![0.3]], Sigma::Population).unwrap();
        assert_eq!(s.cv, Some(0.0));
        assert_eq!(s.overall, None);
    }

    #[test]
    fn distribution_examples() {
        let e = ecdf(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(e[1].1, 2.0 / 3.0));
        let c = eccdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c[0], (1.0, 1.0));
        assert!(ecdf(&[]).is_err());
    }
}
