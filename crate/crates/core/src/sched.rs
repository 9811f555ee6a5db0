//! Packet schedulers. Each decision is a function of a read-only snapshot of
//! the subflows plus a little per-scheduler state.

use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubflowView {
    /// Seconds.
    pub srtt: f64,
    /// Seconds.
    pub rttvar: f64,
    /// Bytes.
    pub cwnd: f64,
    /// Bytes.
    pub inflight: f64,
    pub smss: f64,
    /// Has send allowance, pacing permits a send, and is not closed.
    pub available: bool,
    pub backup: bool,
    /// Bytes per second over the recent window.
    pub goodput: f64,
    /// Not closed.
    pub active: bool,
}

impl SubflowView {
    pub fn room(&self) -> f64 {
        self.cwnd - self.inflight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedView {
    pub now: SimTime,
    pub subflows: Vec<SubflowView>,
    /// Usable connection-level send window, bytes.
    pub send_window: f64,
    /// Bytes waiting in the send buffer.
    pub remaining: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchedDecision {
    pub target: Option<usize>,
    pub duplicate_on: Option<usize>,
}

impl SchedDecision {
    pub const NONE: SchedDecision = SchedDecision {
        target: None,
        duplicate_on: None,
    };

    pub fn to(i: usize) -> Self {
        SchedDecision {
            target: Some(i),
            duplicate_on: None,
        }
    }

    fn from_opt(i: Option<usize>) -> Self {
        SchedDecision {
            target: i,
            duplicate_on: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedKind {
    MinRtt,
    Blest,
    Ecf,
    Rr,
    Llhd,
    Remp,
}

impl SchedKind {
    /// The five schedulers of the evaluation matrix.
    pub const MATRIX: [SchedKind; 5] = [
        SchedKind::MinRtt,
        SchedKind::Blest,
        SchedKind::Ecf,
        SchedKind::Rr,
        SchedKind::Llhd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedKind::MinRtt => "minrtt",
            SchedKind::Blest => "blest",
            SchedKind::Ecf => "ecf",
            SchedKind::Rr => "rr",
            SchedKind::Llhd => "llhd",
            SchedKind::Remp => "remp",
        }
    }
}

impl fmt::Display for SchedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scheduler {0:?}")]
pub struct UnknownScheduler(pub String);

impl FromStr for SchedKind {
    type Err = UnknownScheduler;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "minrtt" | "default" => SchedKind::MinRtt,
            "blest" => SchedKind::Blest,
            "ecf" => SchedKind::Ecf,
            "rr" | "roundrobin" => SchedKind::Rr,
            "llhd" => SchedKind::Llhd,
            "remp" | "redundant" => SchedKind::Remp,
            _ => return Err(UnknownScheduler(s.to_string())),
        })
    }
}

/// Lowest-srtt subflow among those passing `filter`; ties go to the lower index.
pub fn min_rtt_among(view: &SchedView, filter: impl Fn(&SubflowView) -> bool) -> Option<usize> {
    let mut srtt_min = f64::INFINITY;
    let mut best = None;
    for (i, sf) in view.subflows.iter().enumerate() {
        if filter(sf) && sf.srtt < srtt_min {
            srtt_min = sf.srtt;
            best = Some(i);
        }
    }
    best
}

pub fn minrtt(view: &SchedView) -> SchedDecision {
    let normal = min_rtt_among(view, |s| s.available && !s.backup);
    SchedDecision::from_opt(normal.or_else(|| min_rtt_among(view, |s| s.available && s.backup)))
}

/// Fastest active subflow and the fastest available one among the rest.
fn fast_and_slow(view: &SchedView) -> Option<(usize, Option<usize>)> {
    let f = min_rtt_among(view, |s| s.active)?;
    let rest = view
        .subflows
        .iter()
        .enumerate()
        .filter(|&(i, s)| i != f && s.available)
        .min_by(|a, b| a.1.srtt.total_cmp(&b.1.srtt))
        .map(|(i, _)| i);
    Some((f, rest))
}

pub fn blest_x(fast: &SubflowView, slow: &SubflowView) -> f64 {
    let rtt_s = slow.srtt / fast.srtt;
    let cwnd_f = fast.cwnd / fast.smss;
    fast.smss * (cwnd_f + (rtt_s - 1.0) / 2.0) * rtt_s
}

pub fn blest(view: &SchedView, lambda: f64) -> SchedDecision {
    let Some((f, slow)) = fast_and_slow(view) else {
        return SchedDecision::NONE;
    };
    if view.subflows[f].available {
        return SchedDecision::to(f);
    }
    let Some(s) = slow else {
        return SchedDecision::NONE;
    };
    let (fast, sl) = (&view.subflows[f], &view.subflows[s]);
    let x = blest_x(fast, sl);
    let inflight_s = sl.inflight / sl.smss;
    if x * lambda <= view.send_window - sl.smss * (inflight_s + 1.0) {
        SchedDecision::to(s)
    } else {
        SchedDecision::NONE
    }
}

pub fn ecf(view: &SchedView, waiting: &mut bool, beta: f64) -> SchedDecision {
    let Some((f, slow)) = fast_and_slow(view) else {
        return SchedDecision::NONE;
    };
    if view.subflows[f].available {
        return SchedDecision::to(f);
    }
    let Some(s) = slow else {
        return SchedDecision::NONE;
    };
    let (xf, xs) = (&view.subflows[f], &view.subflows[s]);
    let k = view.remaining;
    let n = 1.0 + k / xf.cwnd;
    let delta = xf.rttvar.max(xs.rttvar);
    let w = if *waiting { 1.0 } else { 0.0 };
    if n * xf.srtt < (1.0 + w * beta) * (xs.srtt + delta) {
        if k / xs.cwnd * xs.srtt >= 2.0 * xf.srtt + delta {
            *waiting = true;
            SchedDecision::NONE
        } else {
            SchedDecision::to(s)
        }
    } else {
        *waiting = false;
        SchedDecision::to(s)
    }
}

/// Next subflow from `cursor` with room for `num_segments` full segments.
pub fn roundrobin(view: &SchedView, cursor: &mut usize, num_segments: u32) -> SchedDecision {
    let n = view.subflows.len();
    for step in 0..n {
        let i = (*cursor + step) % n;
        let sf = &view.subflows[i];
        if sf.available && sf.room() >= num_segments as f64 * sf.smss {
            *cursor = (i + 1) % n;
            return SchedDecision::to(i);
        }
    }
    SchedDecision::NONE
}

pub fn llhd_gamma(view: &SchedView, i: usize, beta: f64) -> f64 {
    let active = view.subflows.iter().filter(|s| s.active);
    let gp_max = active.clone().map(|s| s.goodput).fold(0.0, f64::max);
    let rtt_max = active.map(|s| s.srtt).fold(0.0, f64::max);
    let sf = &view.subflows[i];
    let gp_n = if gp_max > 0.0 { sf.goodput / gp_max } else { 0.0 };
    let rtt_term = if sf.srtt > 0.0 { rtt_max / sf.srtt } else { 1.0 };
    gp_n + beta * rtt_term
}

pub fn llhd(view: &SchedView, beta: f64) -> SchedDecision {
    let pick = |backup: bool| {
        let mut gamma_max = 0.0;
        let mut best = None;
        for (i, sf) in view.subflows.iter().enumerate() {
            if sf.backup != backup || !sf.available {
                continue;
            }
            let g = llhd_gamma(view, i, beta);
            if g > gamma_max {
                gamma_max = g;
                best = Some(i);
            }
        }
        best
    };
    SchedDecision::from_opt(pick(false).or_else(|| pick(true)))
}

pub fn remp(view: &SchedView) -> SchedDecision {
    let mut avail = view
        .subflows
        .iter()
        .enumerate()
        .filter(|(_, s)| s.available)
        .map(|(i, _)| i);
    SchedDecision {
        target: avail.next(),
        duplicate_on: avail.next(),
    }
}

pub const BLEST_LAMBDA_STEP: f64 = 0.125;
pub const BLEST_LAMBDA_DECAY: f64 = 0.99;
pub const ECF_BETA: f64 = 0.25;
pub const LLHD_BETA: f64 = 0.001;
pub const LLHD_BETA_CODE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct Scheduler {
    pub kind: SchedKind,
    pub lambda: f64,
    lambda_raised_at: Option<SimTime>,
    lambda_decayed_at: Option<SimTime>,
    pub waiting: bool,
    pub ecf_beta: f64,
    pub cursor: usize,
    pub num_segments: u32,
    pub llhd_beta: f64,
}

impl Scheduler {
    pub fn new(kind: SchedKind) -> Self {
        Scheduler {
            kind,
            lambda: 1.0,
            lambda_raised_at: None,
            lambda_decayed_at: None,
            waiting: false,
            ecf_beta: ECF_BETA,
            cursor: 0,
            num_segments: 1,
            llhd_beta: LLHD_BETA,
        }
    }

    pub fn decide(&mut self, view: &SchedView) -> SchedDecision {
        match self.kind {
            SchedKind::MinRtt => minrtt(view),
            SchedKind::Blest => {
                self.decay_lambda(view);
                blest(view, self.lambda)
            }
            SchedKind::Ecf => ecf(view, &mut self.waiting, self.ecf_beta),
            SchedKind::Rr => roundrobin(view, &mut self.cursor, self.num_segments),
            SchedKind::Llhd => llhd(view, self.llhd_beta),
            SchedKind::Remp => remp(view),
        }
    }

    /// Whether the scheduler resends the head-of-line segment on a free
    /// subflow when the connection window blocks new data.
    pub fn opportunistic(&self) -> bool {
        self.kind == SchedKind::MinRtt
    }

    /// The connection window stopped a send while a subflow had room.
    pub fn on_window_blocked(&mut self, view: &SchedView) {
        if self.kind != SchedKind::Blest {
            return;
        }
        let srtt_f = fast_srtt(view);
        let due = self
            .lambda_raised_at
            .is_none_or(|t| (view.now - t).as_secs_f64() >= srtt_f);
        if due {
            self.lambda += BLEST_LAMBDA_STEP;
            self.lambda_raised_at = Some(view.now);
            self.lambda_decayed_at = Some(view.now);
        }
    }

    fn decay_lambda(&mut self, view: &SchedView) {
        let srtt_f = fast_srtt(view);
        let last = self.lambda_decayed_at.get_or_insert(view.now);
        if (view.now - *last).as_secs_f64() >= srtt_f && srtt_f > 0.0 {
            self.lambda = (self.lambda * BLEST_LAMBDA_DECAY).max(1.0);
            *last = view.now;
        }
    }
}

fn fast_srtt(view: &SchedView) -> f64 {
    min_rtt_among(view, |s| s.active).map_or(0.0, |i| view.subflows[i].srtt)
}
