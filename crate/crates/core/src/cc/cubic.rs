//! CUBIC. Window state is kept in packets and time in seconds; the wrapper
//! converts to and from the byte-granular subflow window.

use super::{srtt_of, AckSample, CcKind, CongestionControl};
use crate::engine::SimTime;
use crate::subflow::SubflowState;

pub const C: f64 = 0.4;
pub const BETA: f64 = 0.2;
pub const TCP_FRIENDLINESS: bool = true;
pub const FAST_CONVERGENCE: bool = true;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CubicState {
    pub w_last_max: f64,
    /// Seconds; zero means no epoch is running.
    pub epoch_start: f64,
    pub origin_point: f64,
    /// Seconds; zero means no sample yet.
    pub d_min: f64,
    pub w_tcp: f64,
    pub k: f64,
    pub ack_cnt: f64,
    pub cwnd_cnt: f64,
    pub cnt: f64,
}

impl CubicState {
    pub fn reset(&mut self) {
        self.w_last_max = 0.0;
        self.epoch_start = 0.0;
        self.origin_point = 0.0;
        self.d_min = 0.0;
        self.w_tcp = 0.0;
        self.k = 0.0;
        self.ack_cnt = 0.0;
    }

    /// Per-ACK step. `cwnd` and `ssthresh` are in packets, `now` and `rtt`
    /// in seconds.
    pub fn on_ack(&mut self, cwnd: &mut f64, ssthresh: f64, now: f64, rtt: f64) {
        if self.d_min != 0.0 {
            self.d_min = self.d_min.min(rtt);
        } else {
            self.d_min = rtt;
        }
        if *cwnd <= ssthresh {
            *cwnd += 1.0;
        } else {
            self.cnt = self.update(*cwnd, now);
            if self.cwnd_cnt > self.cnt {
                *cwnd += 1.0;
                self.cwnd_cnt = 0.0;
            } else {
                self.cwnd_cnt += 1.0;
            }
        }
    }

    fn update(&mut self, cwnd: f64, now: f64) -> f64 {
        self.ack_cnt += 1.0;
        if self.epoch_start <= 0.0 {
            self.epoch_start = now;
            if cwnd < self.w_last_max {
                self.k = ((self.w_last_max - cwnd) / C).cbrt();
                self.origin_point = self.w_last_max;
            } else {
                self.k = 0.0;
                self.origin_point = cwnd;
            }
            self.ack_cnt = 1.0;
            self.w_tcp = cwnd;
        }
        let t = now + self.d_min - self.epoch_start;
        let target = self.origin_point + C * (t - self.k).powi(3);
        let mut cnt = if target > cwnd {
            cwnd / (target - cwnd)
        } else {
            100.0 * cwnd
        };
        if TCP_FRIENDLINESS {
            cnt = self.tcp_friendliness(cwnd, cnt);
        }
        cnt
    }

    fn tcp_friendliness(&mut self, cwnd: f64, mut cnt: f64) -> f64 {
        self.w_tcp += 3.0 * BETA / (2.0 - BETA) * self.ack_cnt / cwnd;
        self.ack_cnt = 0.0;
        if self.w_tcp > cwnd {
            let max_cnt = cwnd / (self.w_tcp - cwnd);
            if cnt > max_cnt {
                cnt = max_cnt;
            }
        }
        cnt
    }

    /// Loss step; returns the new `ssthresh`, which is also the new `cwnd`.
    pub fn on_loss(&mut self, cwnd: &mut f64) -> f64 {
        self.epoch_start = 0.0;
        if *cwnd < self.w_last_max && FAST_CONVERGENCE {
            self.w_last_max = *cwnd * (2.0 - BETA) / 2.0;
        } else {
            self.w_last_max = *cwnd;
        }
        *cwnd *= 1.0 - BETA;
        *cwnd
    }
}

#[derive(Debug, Clone)]
pub struct Cubic {
    pub states: Vec<CubicState>,
}

impl Cubic {
    pub fn new(n: usize) -> Self {
        Cubic {
            states: vec![CubicState::default(); n],
        }
    }
}

impl CongestionControl for Cubic {
    fn kind(&self) -> CcKind {
        CcKind::Cubic
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        let sub = &mut subs[r];
        let smss = sub.smss_f();
        let Some(rtt) = ack.rtt.map(SimTime::as_secs_f64).or_else(|| srtt_of(sub)) else {
            return;
        };
        let mut w = sub.cwnd / smss;
        self.states[r].on_ack(&mut w, sub.ssthresh / smss, ack.now.as_secs_f64(), rtt);
        sub.cwnd = w * smss;
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        let sub = &mut subs[r];
        let smss = sub.smss_f();
        let mut w = sub.cwnd / smss;
        let ss = self.states[r].on_loss(&mut w);
        (ss * smss).max(2.0 * smss)
    }

    fn on_rto(&mut self, _subs: &mut [SubflowState], r: usize, _now: SimTime) {
        self.states[r].reset();
    }
}
