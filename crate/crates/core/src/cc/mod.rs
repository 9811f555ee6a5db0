//! Congestion controllers behind one hook interface.
//!
//! A controller is a connection-level object that sees every subflow, which
//! lets the coupled algorithms read the aggregate state they need. Hooks are
//! invoked by the simulation loop; `RecoveryMode` decides which of them fire
//! during loss recovery.

pub mod bbr;
pub mod cmpbbr;
pub mod coupled;
pub mod cubic;
pub mod wvegas;

use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::subflow::{reno_increase, RateSample, RecoveryMode, SubflowState};

pub use bbr::{Bbr, BbrMode, BbrState};
pub use cmpbbr::{CmpBbr, CmpbbrState};
pub use coupled::{Balia, Lia, Olia};
pub use cubic::{Cubic, CubicState};
pub use wvegas::{WVegas, WvegasState};

/// Everything a controller learns from one ACK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckSample {
    pub now: SimTime,
    pub newly_acked: u64,
    /// Bytes newly delivered, including duplicate-ACK credit.
    pub delivered: u64,
    /// Round trip of the newest never-retransmitted segment acknowledged.
    pub rtt: Option<SimTime>,
    pub rate: Option<RateSample>,
    pub prior_inflight: u64,
    pub inflight: u64,
    /// Bytes newly marked lost.
    pub lost: u64,
}

pub trait CongestionControl: Send {
    fn kind(&self) -> CcKind;

    fn recovery_mode(&self) -> RecoveryMode {
        RecoveryMode::Reno
    }

    fn init(&mut self, _subs: &mut [SubflowState], _now: SimTime) {}

    /// Window growth. In Reno mode this is only called for ACKs that advance
    /// `snd_una` outside fast recovery; controllers that own recovery see
    /// every ACK.
    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample);

    /// Slow-start threshold to adopt on a duplicate-ACK loss (Reno mode).
    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, now: SimTime) -> f64;

    fn on_enter_recovery(&mut self, _subs: &mut [SubflowState], _r: usize, _ack: &AckSample) {}

    fn on_exit_recovery(&mut self, _subs: &mut [SubflowState], _r: usize, _now: SimTime) {}

    fn on_rto(&mut self, _subs: &mut [SubflowState], _r: usize, _now: SimTime) {}

    fn on_send(&mut self, _subs: &mut [SubflowState], _r: usize, _now: SimTime) {}

    /// Payload bytes per second, if the controller paces.
    fn pacing_rate(&self, _r: usize) -> Option<f64> {
        None
    }

    /// Subflows the controller has decided to close since the last call.
    fn take_closed(&mut self) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CcKind {
    Reno,
    Cubic,
    Lia,
    Olia,
    Balia,
    WVegas,
    Bbr,
    CmpBbr,
}

impl CcKind {
    /// The seven controllers of the evaluation matrix.
    pub const MATRIX: [CcKind; 7] = [
        CcKind::Cubic,
        CcKind::Lia,
        CcKind::Olia,
        CcKind::Balia,
        CcKind::WVegas,
        CcKind::Bbr,
        CcKind::CmpBbr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CcKind::Reno => "reno",
            CcKind::Cubic => "cubic",
            CcKind::Lia => "lia",
            CcKind::Olia => "olia",
            CcKind::Balia => "balia",
            CcKind::WVegas => "wvegas",
            CcKind::Bbr => "bbr",
            CcKind::CmpBbr => "cmpbbr",
        }
    }

    pub fn build(self, n_subflows: usize, seed: u64) -> Box<dyn CongestionControl> {
        match self {
            CcKind::Reno => Box::new(Reno),
            CcKind::Cubic => Box::new(Cubic::new(n_subflows)),
            CcKind::Lia => Box::new(Lia::new(n_subflows)),
            CcKind::Olia => Box::new(Olia::new(n_subflows)),
            CcKind::Balia => Box::new(Balia::new(n_subflows)),
            CcKind::WVegas => Box::new(WVegas::new(n_subflows)),
            CcKind::Bbr => Box::new(Bbr::new(n_subflows, seed)),
            CcKind::CmpBbr => Box::new(CmpBbr::new(n_subflows, seed)),
        }
    }
}

impl fmt::Display for CcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown congestion control {0:?}")]
pub struct UnknownCc(pub String);

impl FromStr for CcKind {
    type Err = UnknownCc;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "reno" => CcKind::Reno,
            "cubic" => CcKind::Cubic,
            "lia" | "coupled" => CcKind::Lia,
            "olia" => CcKind::Olia,
            "balia" => CcKind::Balia,
            "wvegas" => CcKind::WVegas,
            "bbr" => CcKind::Bbr,
            "cmpbbr" | "c-mpbbr" => CcKind::CmpBbr,
            _ => return Err(UnknownCc(s.to_string())),
        })
    }
}

/// Uncoupled NewReno, the base the loss-based controllers build on.
#[derive(Debug, Clone, Default)]
pub struct Reno;

impl CongestionControl for Reno {
    fn kind(&self) -> CcKind {
        CcKind::Reno
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        reno_increase(&mut subs[r], ack.newly_acked);
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        subs[r].reno_ssthresh()
    }
}

/// Seconds of smoothed RTT, or `None` before the first sample.
pub(crate) fn srtt_of(sub: &SubflowState) -> Option<f64> {
    sub.rtt.has_sample().then(|| sub.rtt.srtt_secs()).filter(|&s| s > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subflow::SMSS;

    #[test]
    fn names_round_trip() {
        for k in CcKind::MATRIX.into_iter().chain([CcKind::Reno]) {
            assert_eq!(k.name().parse::<CcKind>().unwrap(), k);
        }
        assert!("vegas".parse::<CcKind>().is_err());
    }

    #[test]
    fn reno_slow_start_and_avoidance() {
        let s = SMSS as f64;
        let mut subs = vec![SubflowState::new(1, SMSS, RecoveryMode::Reno)];
        subs[0].cwnd = 2.0 * s;
        let ack = AckSample {
            now: SimTime::ZERO,
            newly_acked: SMSS as u64,
            delivered: SMSS as u64,
            rtt: None,
            rate: None,
            prior_inflight: 0,
            inflight: 0,
            lost: 0,
        };
        Reno.on_ack(&mut subs, 0, &ack);
        assert_eq!(subs[0].cwnd, 3.0 * s);

        subs[0].cwnd = 10.0 * s;
        subs[0].ssthresh = 5.0 * s;
        Reno.on_ack(&mut subs, 0, &ack);
        assert!((subs[0].cwnd - (10.0 * s + s / 10.0)).abs() < 1e-9);

        subs[0].cwnd = 10.0 * s;
        for _ in 0..10 {
            Reno.on_ack(&mut subs, 0, &ack);
        }
        let grown = subs[0].cwnd / s - 10.0;
        assert!((grown - 1.0).abs() < 0.05, "grew {grown} segments");
    }
}
