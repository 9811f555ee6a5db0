//! Coupled loss-based controllers: LIA, OLIA and BALIA.
//!
//! All three keep Reno slow start and fast recovery and only replace the
//! congestion-avoidance increase (and, for BALIA, the decrease). Windows are
//! in bytes and round-trip times in seconds; the per-ACK increase formulas
//! are expressed per packet and scaled by `MSS * bytes_acked`.

use super::{srtt_of, AckSample, CcKind, CongestionControl};
use crate::engine::SimTime;
use crate::subflow::{reno_increase, SubflowState};

/// Windows and round trips of the subflows that take part in coupling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathSet {
    pub idx: Vec<usize>,
    pub w: Vec<f64>,
    pub rtt: Vec<f64>,
}

impl PathSet {
    pub fn collect(subs: &[SubflowState]) -> Self {
        let mut set = PathSet::default();
        for (i, s) in subs.iter().enumerate() {
            if s.closed {
                continue;
            }
            if let Some(rtt) = srtt_of(s) {
                set.idx.push(i);
                set.w.push(s.cwnd);
                set.rtt.push(rtt);
            }
        }
        set
    }

    pub fn position(&self, r: usize) -> Option<usize> {
        self.idx.iter().position(|&i| i == r)
    }
}

pub fn lia_alpha(w: &[f64], rtt: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let best = w
        .iter()
        .zip(rtt)
        .map(|(w, r)| w / (r * r))
        .fold(f64::MIN, f64::max);
    let denom: f64 = w.iter().zip(rtt).map(|(w, r)| w / r).sum();
    total * best / (denom * denom)
}

pub fn lia_increase(w_r: f64, total: f64, alpha: f64, bytes_acked: f64, mss: f64) -> f64 {
    (alpha * bytes_acked * mss / total).min(bytes_acked * mss / w_r)
}

/// Cached value refreshed once per round trip or after a loss.
#[derive(Debug, Clone, Copy, Default)]
struct Refresh {
    stamp: Option<SimTime>,
}

impl Refresh {
    fn due(&self, now: SimTime, rtt: f64) -> bool {
        match self.stamp {
            None => true,
            Some(t) => (now - t).as_secs_f64() >= rtt,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lia {
    pub alpha: f64,
    refresh: Refresh,
}

impl Lia {
    pub fn new(_n: usize) -> Self {
        Lia {
            alpha: 1.0,
            refresh: Refresh::default(),
        }
    }
}

impl CongestionControl for Lia {
    fn kind(&self) -> CcKind {
        CcKind::Lia
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        if subs[r].cwnd < subs[r].ssthresh {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        }
        let set = PathSet::collect(subs);
        let Some(p) = set.position(r) else {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        };
        if self.refresh.due(ack.now, set.rtt[p]) {
            self.alpha = lia_alpha(&set.w, &set.rtt);
            self.refresh.stamp = Some(ack.now);
        }
        let total: f64 = set.w.iter().sum();
        let sub = &mut subs[r];
        sub.cwnd += lia_increase(
            sub.cwnd,
            total,
            self.alpha,
            ack.newly_acked as f64,
            sub.smss_f(),
        );
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        self.refresh.stamp = None;
        let sub = &subs[r];
        (sub.cwnd / 2.0).max(2.0 * sub.smss_f())
    }

    fn on_rto(&mut self, _subs: &mut [SubflowState], _r: usize, _now: SimTime) {
        self.refresh.stamp = None;
    }
}

/// Membership of each path in the best-path set and the largest-window set.
pub fn olia_sets(w: &[f64], rtt: &[f64], l: &[f64]) -> (Vec<bool>, Vec<bool>) {
    let quality: Vec<f64> = l.iter().zip(rtt).map(|(l, r)| l / (r * r)).collect();
    let best_q = quality.iter().copied().fold(f64::MIN, f64::max);
    let max_w = w.iter().copied().fold(f64::MIN, f64::max);
    (
        quality.iter().map(|&q| q == best_q).collect(),
        w.iter().map(|&x| x == max_w).collect(),
    )
}

pub fn olia_a(r: usize, best: &[bool], max_w: &[bool]) -> f64 {
    let n = best.len() as f64;
    let collected = best.iter().zip(max_w).filter(|(b, m)| **b && !**m).count();
    let n_max = max_w.iter().filter(|m| **m).count();
    if collected == 0 {
        return 0.0;
    }
    if best[r] && !max_w[r] {
        (1.0 / n) / collected as f64
    } else if max_w[r] {
        -(1.0 / n) / n_max as f64
    } else {
        0.0
    }
}

pub fn olia_increase(w: &[f64], rtt: &[f64], r: usize, a_r: f64, bytes_acked: f64, mss: f64) -> f64 {
    let sum: f64 = w.iter().zip(rtt).map(|(w, r)| w / r).sum();
    let term = (w[r] / (rtt[r] * rtt[r])) / (sum * sum) + a_r / w[r];
    term * mss * bytes_acked
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct LossInterval {
    since_last: f64,
    between_last_two: f64,
}

impl LossInterval {
    fn value(&self) -> f64 {
        self.since_last.max(self.between_last_two)
    }

    fn on_loss(&mut self) {
        self.between_last_two = self.since_last;
        self.since_last = 0.0;
    }
}

#[derive(Debug, Clone)]
pub struct Olia {
    loss: Vec<LossInterval>,
    a: Vec<f64>,
    refresh: Refresh,
}

impl Olia {
    pub fn new(n: usize) -> Self {
        Olia {
            loss: vec![LossInterval::default(); n],
            a: vec![0.0; n],
            refresh: Refresh::default(),
        }
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }
}

impl CongestionControl for Olia {
    fn kind(&self) -> CcKind {
        CcKind::Olia
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        self.loss[r].since_last += ack.newly_acked as f64;
        if subs[r].cwnd < subs[r].ssthresh {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        }
        let set = PathSet::collect(subs);
        let Some(p) = set.position(r) else {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        };
        if self.refresh.due(ack.now, set.rtt[p]) {
            let l: Vec<f64> = set.idx.iter().map(|&i| self.loss[i].value()).collect();
            let (best, max_w) = olia_sets(&set.w, &set.rtt, &l);
            self.a.iter_mut().for_each(|a| *a = 0.0);
            for (k, &i) in set.idx.iter().enumerate() {
                self.a[i] = olia_a(k, &best, &max_w);
            }
            self.refresh.stamp = Some(ack.now);
        }
        let sub_mss = subs[r].smss_f();
        let inc = olia_increase(
            &set.w,
            &set.rtt,
            p,
            self.a[r],
            ack.newly_acked as f64,
            sub_mss,
        );
        let sub = &mut subs[r];
        sub.cwnd = (sub.cwnd + inc).max(sub_mss);
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        self.loss[r].on_loss();
        self.refresh.stamp = None;
        let sub = &subs[r];
        (sub.cwnd / 2.0).max(2.0 * sub.smss_f())
    }

    fn on_rto(&mut self, _subs: &mut [SubflowState], r: usize, _now: SimTime) {
        self.loss[r].on_loss();
        self.refresh.stamp = None;
    }
}

fn balia_a(w: &[f64], rtt: &[f64], r: usize) -> (f64, Vec<f64>) {
    let x: Vec<f64> = w.iter().zip(rtt).map(|(w, r)| w / r).collect();
    let max_x = x.iter().copied().fold(f64::MIN, f64::max);
    (max_x / x[r], x)
}

pub fn balia_increase(w: &[f64], rtt: &[f64], r: usize, bytes_acked: f64, mss: f64) -> f64 {
    let (a, x) = balia_a(w, rtt, r);
    let sum: f64 = x.iter().sum();
    x[r] / (rtt[r] * sum * sum) * ((1.0 + a) / 2.0) * ((4.0 + a) / 5.0) * mss * bytes_acked
}

/// Window after a loss on path `r`.
pub fn balia_decrease(w: &[f64], rtt: &[f64], r: usize) -> f64 {
    let (a, _) = balia_a(w, rtt, r);
    w[r] - (w[r] / 2.0) * a.min(1.5)
}

#[derive(Debug, Clone, Default)]
pub struct Balia;

impl Balia {
    pub fn new(_n: usize) -> Self {
        Balia
    }
}

impl CongestionControl for Balia {
    fn kind(&self) -> CcKind {
        CcKind::Balia
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        if subs[r].cwnd < subs[r].ssthresh {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        }
        let set = PathSet::collect(subs);
        let Some(p) = set.position(r) else {
            reno_increase(&mut subs[r], ack.newly_acked);
            return;
        };
        let sub = &mut subs[r];
        sub.cwnd += balia_increase(&set.w, &set.rtt, p, ack.newly_acked as f64, sub.smss_f());
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        let set = PathSet::collect(subs);
        let sub = &subs[r];
        let w = match set.position(r) {
            Some(p) => balia_decrease(&set.w, &set.rtt, p),
            None => sub.cwnd / 2.0,
        };
        w.max(2.0 * sub.smss_f())
    }
}
