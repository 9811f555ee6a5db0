//! Coupled multipath BBR. Each subflow runs BBR; on every entry into ProbeBW
//! cycle index 3 the subflow checks whether the connection would be better
//! off without its weakest subflow, and how many subflows appear to share
//! its bottleneck.

use super::bbr::{apply_mark, build_states, init_states, BbrAck, BbrState};
use super::{AckSample, CcKind, CongestionControl};
use crate::engine::SimTime;
use crate::subflow::{RecoveryMode, SubflowState};

pub const ALPHA: f64 = 20.0;
pub const BETA: f64 = 40.0;
pub const STOP_COUNT_LIMIT: u32 = 5;

/// Per-subflow bandwidth view read by the hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubflowBw {
    /// Bottleneck bandwidth estimate, bytes per second.
    pub bw: f64,
    /// Latest delivery rate, bytes per second.
    pub del_rt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HookOutcome {
    pub final_number_of_sfs_in_btlneck: u32,
    pub close: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmpbbrState {
    pub alpha: f64,
    pub beta: f64,
    pub stop_lowest_bw_sf_count: u32,
    pub last_number_of_sfs_in_btlneck: u32,
    pub final_number_of_sfs_in_btlneck: u32,
}

impl Default for CmpbbrState {
    fn default() -> Self {
        CmpbbrState {
            alpha: ALPHA,
            beta: BETA,
            stop_lowest_bw_sf_count: 0,
            last_number_of_sfs_in_btlneck: 0,
            final_number_of_sfs_in_btlneck: 1,
        }
    }
}

impl CmpbbrState {
    /// Runs both goals for subflow `this` over the open subflows in `all`.
    pub fn probe_hook(&mut self, this: usize, all: &[SubflowBw]) -> HookOutcome {
        let bw_this = all[this].bw;

        let mut total_del_rt = 0.0;
        let mut lowest = f64::INFINITY;
        let mut highest = 0.0f64;
        let mut total_number_of_sfs = 0u32;
        for sf in all {
            total_number_of_sfs += 1;
            total_del_rt += sf.del_rt;
            if lowest > sf.bw {
                lowest = sf.bw;
            }
            if highest < sf.bw {
                highest = sf.bw;
            }
        }
        let threshold = highest * (1.0 - self.beta / 100.0);
        if threshold > total_del_rt
            && self.last_number_of_sfs_in_btlneck < 2
            && total_number_of_sfs > 1
            && lowest != highest
        {
            self.stop_lowest_bw_sf_count += 1;
        } else {
            self.stop_lowest_bw_sf_count = 0;
        }
        let mut close = false;
        if self.stop_lowest_bw_sf_count >= STOP_COUNT_LIMIT
            && total_number_of_sfs > 1
            && bw_this == lowest
        {
            self.stop_lowest_bw_sf_count = STOP_COUNT_LIMIT;
            close = true;
        }

        let lower = bw_this * (1.0 - self.alpha / 100.0);
        let upper = bw_this * (1.0 + self.alpha / 100.0);
        let number = all.iter().filter(|sf| sf.bw >= lower && sf.bw <= upper).count() as u32;
        self.final_number_of_sfs_in_btlneck = if number > 1 && self.last_number_of_sfs_in_btlneck > 1 {
            number
        } else if number == 1 && self.last_number_of_sfs_in_btlneck > 1 {
            self.last_number_of_sfs_in_btlneck
        } else {
            1
        };
        self.last_number_of_sfs_in_btlneck = number;

        HookOutcome {
            final_number_of_sfs_in_btlneck: self.final_number_of_sfs_in_btlneck,
            close,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CmpBbr {
    pub bbr: Vec<BbrState>,
    pub coupled: Vec<CmpbbrState>,
    closed: Vec<bool>,
    pending_close: Vec<usize>,
}

impl CmpBbr {
    pub fn new(n: usize, seed: u64) -> Self {
        CmpBbr {
            bbr: build_states(n, seed),
            coupled: vec![CmpbbrState::default(); n],
            closed: vec![false; n],
            pending_close: Vec::new(),
        }
    }

    fn run_hook(&mut self, subs: &[SubflowState], r: usize) {
        let open: Vec<usize> = (0..subs.len())
            .filter(|&i| !self.closed[i] && !subs[i].closed)
            .collect();
        let Some(this) = open.iter().position(|&i| i == r) else {
            return;
        };
        let view: Vec<SubflowBw> = open
            .iter()
            .map(|&i| SubflowBw {
                bw: self.bbr[i].raw_btl_bw(),
                del_rt: self.bbr[i].last_delivery_rate,
            })
            .collect();
        let out = self.coupled[r].probe_hook(this, &view);
        self.bbr[r].bw_divisor = out.final_number_of_sfs_in_btlneck as f64;
        if out.close && open.len() > 1 {
            self.closed[r] = true;
            self.pending_close.push(r);
        }
    }
}

impl CongestionControl for CmpBbr {
    fn kind(&self) -> CcKind {
        CcKind::CmpBbr
    }

    fn recovery_mode(&self) -> RecoveryMode {
        RecoveryMode::Controller
    }

    fn init(&mut self, subs: &mut [SubflowState], now: SimTime) {
        init_states(&mut self.bbr, subs, now);
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        let a = BbrAck::from_sample(ack, &subs[r]);
        let mut cwnd = subs[r].cwnd;
        let mark = self.bbr[r].update_model_and_state(&a, &mut cwnd);
        if self.bbr[r].take_cycle3_entry() && !self.closed[r] {
            self.run_hook(subs, r);
        }
        self.bbr[r].update_control_parameters(&a, &mut cwnd);
        subs[r].cwnd = cwnd;
        apply_mark(&mut subs[r], mark);
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        subs[r].ssthresh
    }

    fn on_enter_recovery(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        let sub = &mut subs[r];
        self.bbr[r].enter_recovery(&mut sub.cwnd, ack.inflight as f64, ack.delivered as f64);
    }

    fn on_exit_recovery(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        self.bbr[r].exit_recovery(&mut subs[r].cwnd);
    }

    fn on_rto(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        let sub = &mut subs[r];
        let in_recovery = sub.in_fast_recovery || sub.in_loss;
        self.bbr[r].on_rto(&mut sub.cwnd, in_recovery);
    }

    fn on_send(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        let sub = &subs[r];
        self.bbr[r].on_transmit(sub.inflight(), sub.app_limited_until != 0);
    }

    fn pacing_rate(&self, r: usize) -> Option<f64> {
        let p = self.bbr[r].pacing_rate;
        (p > 0.0).then_some(p)
    }

    fn take_closed(&mut self) -> Vec<usize> {
        std::mem::take(&mut self.pending_close)
    }
}
