//! Weighted Vegas: delay-based coupled control. Windows in packets, times in
//! seconds. Window changes happen once per round, where a round lasts one
//! base RTT of the subflow.

use thiserror::Error;

use super::{AckSample, CcKind, CongestionControl};
use crate::engine::SimTime;
use crate::subflow::SubflowState;

pub const TOTAL_ALPHA: f64 = 10.0;
pub const ALPHA_FLOOR: f64 = 2.0;
pub const CWND_FLOOR: f64 = 2.0;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WvegasError {
    #[error("round ended without RTT samples")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WvegasState {
    pub total_alpha: f64,
    pub alpha: Vec<f64>,
    pub weights: Vec<f64>,
    pub equilibrium_rates: Vec<f64>,
    pub queue_delays: Vec<f64>,
    pub base_rtt: Vec<f64>,
    pub sampled_rtts: Vec<f64>,
    pub sampled_num: Vec<u32>,
}

impl WvegasState {
    pub fn new(n: usize) -> Self {
        WvegasState {
            total_alpha: TOTAL_ALPHA,
            alpha: vec![ALPHA_FLOOR; n],
            weights: vec![0.0; n],
            equilibrium_rates: vec![0.0; n],
            queue_delays: vec![0.0; n],
            base_rtt: vec![f64::INFINITY; n],
            sampled_rtts: vec![0.0; n],
            sampled_num: vec![0; n],
        }
    }

    pub fn add_sample(&mut self, r: usize, rtt: f64) {
        self.base_rtt[r] = self.base_rtt[r].min(rtt);
        self.sampled_rtts[r] += rtt;
        self.sampled_num[r] += 1;
    }

    /// End-of-round update of `cwnd` (packets) for subflow `r`. The round's
    /// samples are consumed either way.
    pub fn round_end(&mut self, r: usize, cwnd: &mut f64) -> Result<(), WvegasError> {
        if self.sampled_num[r] == 0 {
            return Err(WvegasError::NoSamples);
        }
        let rtt = self.sampled_rtts[r] / self.sampled_num[r] as f64;
        self.sampled_rtts[r] = 0.0;
        self.sampled_num[r] = 0;
        let base = self.base_rtt[r];
        let diff = *cwnd * (rtt - base) / rtt;

        if diff >= self.alpha[r] {
            self.equilibrium_rates[r] = *cwnd / rtt;
            self.adjust_weights();
            self.alpha[r] = self.weights[r] * self.total_alpha;
            self.alpha[r] = self.alpha[r].max(ALPHA_FLOOR);
        }

        if diff < self.alpha[r] {
            *cwnd += 1.0;
        } else if diff > self.alpha[r] {
            *cwnd -= 1.0;
        }

        let q = rtt - base;
        if self.queue_delays[r] == 0.0 || self.queue_delays[r] > q {
            self.queue_delays[r] = q;
        }
        if q >= 2.0 * self.queue_delays[r] {
            let backoff_factor = 0.5 * base / rtt;
            *cwnd *= backoff_factor;
            self.queue_delays[r] = 0.0;
        }
        *cwnd = cwnd.max(CWND_FLOOR);
        Ok(())
    }

    pub fn adjust_weights(&mut self) {
        let total_rate: f64 = self.equilibrium_rates.iter().sum();
        for r in 0..self.weights.len() {
            if self.equilibrium_rates[r] != 0.0 {
                self.weights[r] = self.equilibrium_rates[r] / total_rate;
            }
        }
    }

    pub fn on_loss(&mut self, r: usize) {
        self.equilibrium_rates[r] = 0.0;
        self.queue_delays[r] = 0.0;
    }
}

#[derive(Debug, Clone)]
pub struct WVegas {
    pub state: WvegasState,
    round_start: Vec<Option<SimTime>>,
}

impl WVegas {
    pub fn new(n: usize) -> Self {
        WVegas {
            state: WvegasState::new(n),
            round_start: vec![None; n],
        }
    }
}

impl CongestionControl for WVegas {
    fn kind(&self) -> CcKind {
        CcKind::WVegas
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        if let Some(rtt) = ack.rtt {
            self.state.add_sample(r, rtt.as_secs_f64());
        }
        let Some(start) = self.round_start[r] else {
            self.round_start[r] = Some(ack.now);
            return;
        };
        let base = self.state.base_rtt[r];
        if !base.is_finite() || (ack.now - start).as_secs_f64() < base {
            return;
        }
        self.round_start[r] = Some(ack.now);
        let sub = &mut subs[r];
        let smss = sub.smss_f();
        let mut w = sub.cwnd / smss;
        if self.state.round_end(r, &mut w).is_ok() {
            sub.cwnd = w * smss;
        }
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        self.state.on_loss(r);
        subs[r].reno_ssthresh()
    }

    fn on_rto(&mut self, _subs: &mut [SubflowState], r: usize, _now: SimTime) {
        self.state.on_loss(r);
    }
}
