//! BBR version 1. Windows in bytes, rates in bytes per second, times in
//! seconds. The model update and the control update are separate steps so
//! the coupled variant can act on the model in between.

use std::collections::VecDeque;
use std::f64::consts::LN_2;

use super::{AckSample, CcKind, CongestionControl};
use crate::engine::{RngStream, SimTime};
use crate::subflow::{initial_window, RateSample, RecoveryMode, SubflowState};

pub const HIGH_GAIN: f64 = 2.0 / LN_2;
pub const BTLBW_FILTER_LEN: u64 = 10;
pub const RTPROP_FILTER_LEN: f64 = 10.0;
pub const PROBE_RTT_DURATION: f64 = 0.2;
pub const MIN_PIPE_PACKETS: f64 = 4.0;
pub const GAIN_CYCLE: [f64; 8] = [5.0 / 4.0, 3.0 / 4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
pub const GAIN_CYCLE_LEN: usize = GAIN_CYCLE.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BbrMode {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

/// Windowed maximum over the last `window` rounds.
#[derive(Debug, Clone, Default)]
pub struct MaxFilter {
    samples: VecDeque<(u64, f64)>,
    window: u64,
}

impl MaxFilter {
    pub fn new(window: u64) -> Self {
        MaxFilter {
            samples: VecDeque::new(),
            window,
        }
    }

    pub fn update(&mut self, round: u64, value: f64) {
        while self.samples.back().is_some_and(|&(_, v)| v <= value) {
            self.samples.pop_back();
        }
        self.samples.push_back((round, value));
        while self
            .samples
            .front()
            .is_some_and(|&(t, _)| t + self.window <= round)
        {
            self.samples.pop_front();
        }
    }

    pub fn get(&self) -> f64 {
        self.samples.front().map_or(0.0, |&(_, v)| v)
    }
}

/// What one ACK tells the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbrAck {
    pub now: f64,
    /// Cumulative bytes delivered on the subflow after this ACK.
    pub delivered: u64,
    pub newly_delivered: f64,
    pub lost: f64,
    pub prior_inflight: f64,
    pub inflight: f64,
    pub rtt: Option<f64>,
    pub rate: Option<RateSample>,
    pub in_recovery: bool,
}

impl BbrAck {
    pub fn from_sample(ack: &AckSample, sub: &SubflowState) -> Self {
        BbrAck {
            now: ack.now.as_secs_f64(),
            delivered: sub.delivered,
            newly_delivered: ack.delivered as f64,
            lost: ack.lost as f64,
            prior_inflight: ack.prior_inflight as f64,
            inflight: ack.inflight as f64,
            rtt: ack.rtt.map(SimTime::as_secs_f64),
            rate: ack.rate,
            in_recovery: sub.in_fast_recovery || sub.in_loss,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BbrState {
    pub mode: BbrMode,
    pub btlbw_filter: MaxFilter,
    /// Divides the filtered bandwidth before use; 1 for plain BBR.
    pub bw_divisor: f64,
    pub rtprop: f64,
    pub rtprop_stamp: f64,
    pub rtprop_expired: bool,
    pub pacing_rate: f64,
    pub pacing_gain: f64,
    pub cwnd_gain: f64,
    pub cycle_index: usize,
    pub cycle_stamp: f64,
    pub full_bw: f64,
    pub full_bw_count: u32,
    pub filled_pipe: bool,
    pub delivered: u64,
    pub next_round_delivered: u64,
    pub round_count: u64,
    pub round_start: bool,
    pub probe_rtt_done_stamp: f64,
    pub probe_rtt_round_done: bool,
    pub prior_cwnd: f64,
    pub send_quantum: f64,
    pub packet_conservation: bool,
    pub idle_restart: bool,
    pub target_cwnd: f64,
    pub last_delivery_rate: f64,
    pub smss: f64,
    pub initial_cwnd: f64,
    /// Latched when ProbeBW advances onto cycle index 3.
    pub cycle3_entered: bool,
    rng: RngStream,
}

impl BbrState {
    pub fn new(smss: u32, rng: RngStream) -> Self {
        let smss_f = smss as f64;
        BbrState {
            mode: BbrMode::Startup,
            btlbw_filter: MaxFilter::new(BTLBW_FILTER_LEN),
            bw_divisor: 1.0,
            rtprop: f64::INFINITY,
            rtprop_stamp: 0.0,
            rtprop_expired: false,
            pacing_rate: 0.0,
            pacing_gain: HIGH_GAIN,
            cwnd_gain: HIGH_GAIN,
            cycle_index: 0,
            cycle_stamp: 0.0,
            full_bw: 0.0,
            full_bw_count: 0,
            filled_pipe: false,
            delivered: 0,
            next_round_delivered: 0,
            round_count: 0,
            round_start: false,
            probe_rtt_done_stamp: 0.0,
            probe_rtt_round_done: false,
            prior_cwnd: 0.0,
            send_quantum: smss_f,
            packet_conservation: false,
            idle_restart: false,
            target_cwnd: 0.0,
            last_delivery_rate: 0.0,
            smss: smss_f,
            initial_cwnd: initial_window(smss) as f64,
            cycle3_entered: false,
            rng,
        }
    }

    pub fn init(&mut self, now: f64, srtt: Option<f64>) {
        self.btlbw_filter = MaxFilter::new(BTLBW_FILTER_LEN);
        self.rtprop = srtt.unwrap_or(f64::INFINITY);
        self.rtprop_stamp = now;
        self.probe_rtt_done_stamp = 0.0;
        self.probe_rtt_round_done = false;
        self.packet_conservation = false;
        self.prior_cwnd = 0.0;
        self.idle_restart = false;
        self.next_round_delivered = 0;
        self.round_start = false;
        self.round_count = 0;
        self.filled_pipe = false;
        self.full_bw = 0.0;
        self.full_bw_count = 0;
        let nominal_bandwidth = self.initial_cwnd / srtt.unwrap_or(0.001);
        self.pacing_rate = HIGH_GAIN * nominal_bandwidth;
        self.enter_startup();
    }

    pub fn raw_btl_bw(&self) -> f64 {
        self.btlbw_filter.get()
    }

    pub fn btl_bw(&self) -> f64 {
        self.raw_btl_bw() / self.bw_divisor
    }

    pub fn min_pipe_cwnd(&self) -> f64 {
        MIN_PIPE_PACKETS * self.smss
    }

    pub fn inflight(&self, gain: f64) -> f64 {
        if self.rtprop == f64::INFINITY {
            return self.initial_cwnd;
        }
        let quanta = 3.0 * self.send_quantum;
        let estimated_bdp = self.btl_bw() * self.rtprop;
        gain * estimated_bdp + quanta
    }

    /// Full per-ACK step. Returns an application-limited mark for the
    /// subflow when ProbeRTT wants low-rate samples ignored.
    pub fn on_ack(&mut self, a: &BbrAck, cwnd: &mut f64) -> Option<u64> {
        let mark = self.update_model_and_state(a, cwnd);
        self.update_control_parameters(a, cwnd);
        mark
    }

    pub fn update_model_and_state(&mut self, a: &BbrAck, cwnd: &mut f64) -> Option<u64> {
        self.update_btlbw(a);
        self.check_cycle_phase(a);
        self.check_full_pipe(a);
        self.check_drain(a);
        self.update_rtprop(a);
        self.check_probe_rtt(a, cwnd)
    }

    pub fn update_control_parameters(&mut self, a: &BbrAck, cwnd: &mut f64) {
        self.set_pacing_rate();
        self.set_send_quantum();
        self.set_cwnd(a, cwnd);
    }

    fn update_round(&mut self, a: &BbrAck, rs: &RateSample) {
        self.delivered = a.delivered;
        if rs.prior_delivered >= self.next_round_delivered {
            self.next_round_delivered = self.delivered;
            self.round_count += 1;
            self.round_start = true;
            self.packet_conservation = false;
        } else {
            self.round_start = false;
        }
    }

    fn update_btlbw(&mut self, a: &BbrAck) {
        self.delivered = a.delivered;
        let Some(rs) = a.rate else {
            self.round_start = false;
            return;
        };
        self.update_round(a, &rs);
        self.last_delivery_rate = rs.delivery_rate;
        if rs.delivery_rate >= self.raw_btl_bw() || !rs.is_app_limited {
            self.btlbw_filter.update(self.round_count, rs.delivery_rate);
        }
    }

    fn check_cycle_phase(&mut self, a: &BbrAck) {
        if self.mode == BbrMode::ProbeBw && self.is_next_cycle_phase(a) {
            self.advance_cycle_phase(a.now);
        }
    }

    fn is_next_cycle_phase(&self, a: &BbrAck) -> bool {
        let is_full_length = (a.now - self.cycle_stamp) > self.rtprop;
        if self.pacing_gain == 1.0 {
            return is_full_length;
        }
        if self.pacing_gain > 1.0 {
            return is_full_length
                && (a.lost > 0.0 || a.prior_inflight >= self.inflight(self.pacing_gain));
        }
        is_full_length || a.prior_inflight <= self.inflight(1.0)
    }

    fn advance_cycle_phase(&mut self, now: f64) {
        self.cycle_stamp = now;
        self.cycle_index = (self.cycle_index + 1) % GAIN_CYCLE_LEN;
        self.pacing_gain = GAIN_CYCLE[self.cycle_index];
        if self.mode == BbrMode::ProbeBw && self.cycle_index == 3 {
            self.cycle3_entered = true;
        }
    }

    fn check_full_pipe(&mut self, a: &BbrAck) {
        let app_limited = a.rate.is_some_and(|rs| rs.is_app_limited);
        if self.filled_pipe || !self.round_start || app_limited {
            return;
        }
        if self.btl_bw() >= self.full_bw * 1.25 {
            self.full_bw = self.btl_bw();
            self.full_bw_count = 0;
            return;
        }
        self.full_bw_count += 1;
        if self.full_bw_count >= 3 {
            self.filled_pipe = true;
        }
    }

    fn check_drain(&mut self, a: &BbrAck) {
        if self.mode == BbrMode::Startup && self.filled_pipe {
            self.enter_drain();
        }
        if self.mode == BbrMode::Drain && a.inflight <= self.inflight(1.0) {
            self.enter_probe_bw(a.now);
        }
    }

    fn update_rtprop(&mut self, a: &BbrAck) {
        self.rtprop_expired = a.now > self.rtprop_stamp + RTPROP_FILTER_LEN;
        if let Some(rtt) = a.rtt {
            if rtt >= 0.0 && (rtt <= self.rtprop || self.rtprop_expired) {
                self.rtprop = rtt;
                self.rtprop_stamp = a.now;
            }
        }
    }

    fn check_probe_rtt(&mut self, a: &BbrAck, cwnd: &mut f64) -> Option<u64> {
        if self.mode != BbrMode::ProbeRtt && self.rtprop_expired && !self.idle_restart {
            self.enter_probe_rtt();
            self.prior_cwnd = self.save_cwnd(*cwnd, a.in_recovery);
            self.probe_rtt_done_stamp = 0.0;
        }
        let mark = if self.mode == BbrMode::ProbeRtt {
            Some(self.handle_probe_rtt(a, cwnd))
        } else {
            None
        };
        self.idle_restart = false;
        mark
    }

    fn enter_probe_rtt(&mut self) {
        self.mode = BbrMode::ProbeRtt;
        self.pacing_gain = 1.0;
        self.cwnd_gain = 1.0;
    }

    fn handle_probe_rtt(&mut self, a: &BbrAck, cwnd: &mut f64) -> u64 {
        let mark = (a.delivered + a.inflight as u64).max(1);
        if self.probe_rtt_done_stamp == 0.0 && a.inflight <= self.min_pipe_cwnd() {
            self.probe_rtt_done_stamp = a.now + PROBE_RTT_DURATION;
            self.probe_rtt_round_done = false;
            self.next_round_delivered = self.delivered;
        } else if self.probe_rtt_done_stamp != 0.0 {
            if self.round_start {
                self.probe_rtt_round_done = true;
            }
            if self.probe_rtt_round_done && a.now > self.probe_rtt_done_stamp {
                self.rtprop_stamp = a.now;
                self.restore_cwnd(cwnd);
                self.exit_probe_rtt(a.now);
            }
        }
        mark
    }

    fn exit_probe_rtt(&mut self, now: f64) {
        if self.filled_pipe {
            self.enter_probe_bw(now);
        } else {
            self.enter_startup();
        }
    }

    fn enter_startup(&mut self) {
        self.mode = BbrMode::Startup;
        self.pacing_gain = HIGH_GAIN;
        self.cwnd_gain = HIGH_GAIN;
    }

    fn enter_drain(&mut self) {
        self.mode = BbrMode::Drain;
        self.pacing_gain = 1.0 / HIGH_GAIN;
        self.cwnd_gain = HIGH_GAIN;
    }

    fn enter_probe_bw(&mut self, now: f64) {
        self.mode = BbrMode::ProbeBw;
        self.pacing_gain = 1.0;
        self.cwnd_gain = 2.0;
        let draw = self.rng.int_in_range(0, 6) as usize;
        self.cycle_index = GAIN_CYCLE_LEN - 1 - draw;
        self.advance_cycle_phase(now);
    }

    fn set_pacing_rate(&mut self) {
        self.set_pacing_rate_with_gain(self.pacing_gain);
    }

    fn set_pacing_rate_with_gain(&mut self, pacing_gain: f64) {
        let rate = pacing_gain * self.btl_bw();
        if self.filled_pipe || rate > self.pacing_rate {
            self.pacing_rate = rate;
        }
    }

    fn set_send_quantum(&mut self) {
        self.send_quantum = if self.pacing_rate < 150_000.0 {
            self.smss
        } else if self.pacing_rate < 3_000_000.0 {
            2.0 * self.smss
        } else {
            (self.pacing_rate * 0.001).min(65536.0)
        };
    }

    fn set_cwnd(&mut self, a: &BbrAck, cwnd: &mut f64) {
        self.target_cwnd = self.inflight(self.cwnd_gain);
        self.modulate_cwnd_for_recovery(a, cwnd);
        if !self.packet_conservation {
            if self.filled_pipe {
                *cwnd = (*cwnd + a.newly_delivered).min(self.target_cwnd);
            } else if *cwnd < self.target_cwnd || (self.delivered as f64) < self.initial_cwnd {
                *cwnd += a.newly_delivered;
            }
            *cwnd = cwnd.max(self.min_pipe_cwnd());
        }
        self.modulate_cwnd_for_probe_rtt(cwnd);
    }

    fn modulate_cwnd_for_recovery(&self, a: &BbrAck, cwnd: &mut f64) {
        if a.lost > 0.0 {
            *cwnd = (*cwnd - a.lost).max(self.smss);
        }
        if self.packet_conservation {
            *cwnd = cwnd.max(a.inflight + a.newly_delivered);
        }
    }

    fn modulate_cwnd_for_probe_rtt(&self, cwnd: &mut f64) {
        if self.mode == BbrMode::ProbeRtt {
            *cwnd = cwnd.min(self.min_pipe_cwnd());
        }
    }

    pub fn save_cwnd(&self, cwnd: f64, in_recovery: bool) -> f64 {
        if !in_recovery && self.mode != BbrMode::ProbeRtt {
            cwnd
        } else {
            self.prior_cwnd.max(cwnd)
        }
    }

    pub fn restore_cwnd(&self, cwnd: &mut f64) {
        *cwnd = cwnd.max(self.prior_cwnd);
    }

    pub fn on_transmit(&mut self, inflight: u64, app_limited: bool) {
        if inflight == 0 && app_limited {
            self.idle_restart = true;
            if self.mode == BbrMode::ProbeBw {
                self.set_pacing_rate_with_gain(1.0);
            }
        }
    }

    pub fn enter_recovery(&mut self, cwnd: &mut f64, inflight: f64, newly_delivered: f64) {
        self.prior_cwnd = self.save_cwnd(*cwnd, false);
        self.packet_conservation = true;
        self.next_round_delivered = self.delivered;
        *cwnd = inflight + newly_delivered.max(self.smss);
    }

    pub fn exit_recovery(&mut self, cwnd: &mut f64) {
        self.packet_conservation = false;
        self.restore_cwnd(cwnd);
    }

    pub fn on_rto(&mut self, cwnd: &mut f64, in_recovery: bool) {
        self.prior_cwnd = self.save_cwnd(*cwnd, in_recovery);
        self.packet_conservation = false;
        *cwnd = self.smss;
    }

    pub fn take_cycle3_entry(&mut self) -> bool {
        std::mem::take(&mut self.cycle3_entered)
    }
}

pub(crate) fn build_states(n: usize, seed: u64) -> Vec<BbrState> {
    (0..n)
        .map(|i| BbrState::new(crate::subflow::SMSS, RngStream::new(seed, format!("bbr-{}", i + 1))))
        .collect()
}

pub(crate) fn init_states(states: &mut [BbrState], subs: &mut [SubflowState], now: SimTime) {
    for (st, sub) in states.iter_mut().zip(subs.iter_mut()) {
        let srtt = sub.rtt.has_sample().then(|| sub.rtt.srtt_secs());
        st.smss = sub.smss_f();
        st.initial_cwnd = initial_window(sub.smss) as f64;
        st.init(now.as_secs_f64(), srtt);
        sub.cwnd = st.initial_cwnd;
    }
}

pub(crate) fn apply_mark(sub: &mut SubflowState, mark: Option<u64>) {
    if let Some(m) = mark {
        sub.app_limited_until = m;
    }
}

#[derive(Debug, Clone)]
pub struct Bbr {
    pub states: Vec<BbrState>,
}

impl Bbr {
    pub fn new(n: usize, seed: u64) -> Self {
        Bbr {
            states: build_states(n, seed),
        }
    }
}

impl CongestionControl for Bbr {
    fn kind(&self) -> CcKind {
        CcKind::Bbr
    }

    fn recovery_mode(&self) -> RecoveryMode {
        RecoveryMode::Controller
    }

    fn init(&mut self, subs: &mut [SubflowState], now: SimTime) {
        init_states(&mut self.states, subs, now);
    }

    fn on_ack(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        let sub = &mut subs[r];
        let a = BbrAck::from_sample(ack, sub);
        let mark = self.states[r].on_ack(&a, &mut sub.cwnd);
        apply_mark(sub, mark);
    }

    fn loss_ssthresh(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) -> f64 {
        subs[r].ssthresh
    }

    fn on_enter_recovery(&mut self, subs: &mut [SubflowState], r: usize, ack: &AckSample) {
        let sub = &mut subs[r];
        self.states[r].enter_recovery(&mut sub.cwnd, ack.inflight as f64, ack.delivered as f64);
    }

    fn on_exit_recovery(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        self.states[r].exit_recovery(&mut subs[r].cwnd);
    }

    fn on_rto(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        let sub = &mut subs[r];
        let in_recovery = sub.in_fast_recovery || sub.in_loss;
        self.states[r].on_rto(&mut sub.cwnd, in_recovery);
    }

    fn on_send(&mut self, subs: &mut [SubflowState], r: usize, _now: SimTime) {
        let sub = &subs[r];
        self.states[r].on_transmit(sub.inflight(), sub.app_limited_until != 0);
    }

    fn pacing_rate(&self, r: usize) -> Option<f64> {
        let p = self.states[r].pacing_rate;
        (p > 0.0).then_some(p)
    }
}
