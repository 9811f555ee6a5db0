//! Per-subflow TCP sender machinery: sequence space, RTT/RTO estimation,
//! duplicate-ACK loss detection, NewReno fast recovery and RTO handling.
//!
//! Window arithmetic that depends on the congestion controller is left to the
//! `cc` module. When the controller is loss-based the Reno recovery rules here
//! manage `cwnd` during recovery; otherwise the controller does.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::SimTime;

/// Payload bytes per full segment.
pub const SMSS: u32 = 1448;
pub const RTO_MIN: SimTime = SimTime::from_millis(200);
pub const RTO_MAX: SimTime = SimTime::from_secs(60);
pub const RTO_INITIAL: SimTime = SimTime::from_secs(1);
pub const DUPACK_THRESHOLD: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubflowError {
    #[error("ack {ack} beyond snd_nxt {snd_nxt}")]
    AckBeyondSent { ack: u64, snd_nxt: u64 },
    #[error("ack {0} does not fall on a segment boundary")]
    MisalignedAck(u64),
}

/// Initial congestion window in bytes for a given SMSS.
pub fn initial_window(smss: u32) -> u32 {
    assert!(smss > 0, "smss must be positive");
    if smss > 2190 {
        2 * smss
    } else if smss > 1095 {
        3 * smss
    } else {
        4 * smss
    }
}

/// Bytes the sender may still put on the wire.
pub fn allowed_send(cwnd: f64, rwnd: f64, flight: f64) -> f64 {
    (cwnd.min(rwnd) - flight).max(0.0)
}

/// Who manages `cwnd` while the subflow is recovering from loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Fast recovery inflation, deflation and RTO collapse happen here.
    Reno,
    /// The congestion controller owns `cwnd`; in-flight accounting credits
    /// duplicate ACKs as delivered segments.
    Controller,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub subflow_seq: u64,
    pub dsn: u64,
    pub len: u32,
    pub sent_at: SimTime,
    pub retransmitted: bool,
    /// Resent because the retransmission timer fired.
    pub rto_resent: bool,
    /// Connection-level data that had already been sent on some subflow.
    pub reinjected: bool,
    pub sacked: bool,
    /// Marked lost and not yet resent.
    pub lost: bool,
    pub delivered: u64,
    pub delivered_time: SimTime,
    pub first_sent_time: SimTime,
    pub app_limited: bool,
}

impl SegmentRecord {
    pub fn end(&self) -> u64 {
        self.subflow_seq + self.len as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttEstimator {
    srtt_ns: f64,
    rttvar_ns: f64,
    rto: SimTime,
    samples: u64,
}

impl Default for RttEstimator {
    fn default() -> Self {
        RttEstimator {
            srtt_ns: 0.0,
            rttvar_ns: 0.0,
            rto: RTO_INITIAL,
            samples: 0,
        }
    }
}

impl RttEstimator {
    pub fn sample(&mut self, rtt: SimTime) {
        let r = rtt.as_nanos() as f64;
        if self.samples == 0 {
            self.srtt_ns = r;
            self.rttvar_ns = r / 2.0;
        } else {
            let err = r - self.srtt_ns;
            self.srtt_ns += err / 8.0;
            self.rttvar_ns += (err.abs() - self.rttvar_ns) / 4.0;
        }
        self.samples += 1;
        let rto = SimTime::from_nanos((self.srtt_ns + 4.0 * self.rttvar_ns).ceil() as u64);
        self.rto = rto.max(RTO_MIN).min(RTO_MAX);
    }

    pub fn has_sample(&self) -> bool {
        self.samples > 0
    }

    pub fn srtt(&self) -> SimTime {
        SimTime::from_nanos(self.srtt_ns.round() as u64)
    }

    pub fn srtt_secs(&self) -> f64 {
        self.srtt_ns * 1e-9
    }

    pub fn rttvar_secs(&self) -> f64 {
        self.rttvar_ns * 1e-9
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn backoff(&mut self) {
        self.rto = SimTime(self.rto.0.saturating_mul(2)).min(RTO_MAX);
    }
}

/// Delivery-rate sample generated by an ACK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    /// Bytes per second.
    pub delivery_rate: f64,
    pub delivered: u64,
    pub interval: SimTime,
    /// Value of the delivered counter when the sampled segment was sent.
    pub prior_delivered: u64,
    pub is_app_limited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckKind {
    Stale,
    Duplicate,
    Advance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AckOutcome {
    pub kind: AckKind,
    pub newly_acked: u64,
    /// Bytes newly delivered, counting selectively acknowledged segments.
    pub delivered: u64,
    /// Sample fed to the SRTT estimator, if any.
    pub rtt: Option<SimTime>,
    /// Round trip of the newest never-retransmitted segment covered, taken
    /// even during recovery.
    pub rtt_any: Option<SimTime>,
    pub fast_retransmit: bool,
    pub partial_ack: bool,
    pub exit_recovery: bool,
    pub rate: Option<RateSample>,
    pub prior_inflight: u64,
}

impl AckOutcome {
    fn new(kind: AckKind, prior_inflight: u64) -> Self {
        AckOutcome {
            kind,
            newly_acked: 0,
            delivered: 0,
            rtt: None,
            rtt_any: None,
            fast_retransmit: false,
            partial_ack: false,
            exit_recovery: false,
            rate: None,
            prior_inflight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtoOutcome {
    /// `(dsn, len)` of every segment still unacknowledged on this subflow.
    pub outstanding: Vec<(u64, u32)>,
    pub prior_cwnd: f64,
}

#[derive(Debug, Clone)]
pub struct SubflowState {
    /// 1-based subflow number.
    pub id: usize,
    pub snd_una: u64,
    pub snd_nxt: u64,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub smss: u32,
    pub rtt: RttEstimator,
    pub min_rtt: Option<SimTime>,
    pub dup_ack_count: u32,
    pub in_fast_recovery: bool,
    /// Set by an RTO until everything outstanding at that moment is acked.
    pub in_loss: bool,
    recover: Option<u64>,
    recovery_start: SimTime,
    pub records: VecDeque<SegmentRecord>,
    /// Bytes selectively acknowledged above `snd_una`.
    pub sacked_bytes: u64,
    /// Bytes marked lost and not yet resent.
    pub lost_bytes: u64,
    lost_queue: VecDeque<u64>,
    /// Records below this sequence have been judged for loss.
    loss_frontier: u64,
    sacked_above_frontier: u32,
    /// Resent segments in send order: (seq, resend time, later sacks seen).
    rtx_watch: VecDeque<(u64, SimTime, u32)>,
    pub retransmit_count: u64,
    pub rto_count: u64,
    pub fast_retransmit_count: u64,
    pub stale_acks: u64,
    pub backup: bool,
    pub closed: bool,
    pub mode: RecoveryMode,
    pub limited_transmit: bool,
    pub delivered: u64,
    pub delivered_time: SimTime,
    pub first_sent_time: SimTime,
    /// Nonzero while the sender is marked application limited.
    pub app_limited_until: u64,
    pub rto_deadline: Option<SimTime>,
    pub next_send_at: SimTime,
    pub last_penalized: Option<SimTime>,
    pub bytes_sent: u64,
}

impl SubflowState {
    pub fn new(id: usize, smss: u32, mode: RecoveryMode) -> Self {
        SubflowState {
            id,
            snd_una: 0,
            snd_nxt: 0,
            cwnd: initial_window(smss) as f64,
            ssthresh: f64::INFINITY,
            smss,
            rtt: RttEstimator::default(),
            min_rtt: None,
            dup_ack_count: 0,
            in_fast_recovery: false,
            in_loss: false,
            recover: None,
            recovery_start: SimTime::ZERO,
            records: VecDeque::new(),
            sacked_bytes: 0,
            lost_bytes: 0,
            lost_queue: VecDeque::new(),
            loss_frontier: 0,
            sacked_above_frontier: 0,
            rtx_watch: VecDeque::new(),
            retransmit_count: 0,
            rto_count: 0,
            fast_retransmit_count: 0,
            stale_acks: 0,
            backup: false,
            closed: false,
            mode,
            limited_transmit: false,
            delivered: 0,
            delivered_time: SimTime::ZERO,
            first_sent_time: SimTime::ZERO,
            app_limited_until: 0,
            rto_deadline: None,
            next_send_at: SimTime::ZERO,
            last_penalized: None,
            bytes_sent: 0,
        }
    }

    /// Seeds the RTT estimator with a connection-setup round trip.
    pub fn seed_rtt(&mut self, rtt: SimTime) {
        self.rtt.sample(rtt);
        self.min_rtt = Some(self.min_rtt.map_or(rtt, |m| m.min(rtt)));
    }

    pub fn smss_f(&self) -> f64 {
        self.smss as f64
    }

    pub fn outstanding(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    /// Bytes marked lost and not yet resent.
    pub fn lost_pending(&self) -> u64 {
        self.lost_bytes
    }

    /// Unacknowledged bytes believed to be in the network. After an RTO
    /// selectively acknowledged data no longer counts.
    pub fn flight_size(&self) -> u64 {
        let sacked = if self.in_loss { self.sacked_bytes } else { 0 };
        self.outstanding() - self.lost_bytes - sacked
    }

    /// Outstanding bytes that are neither selectively acknowledged nor
    /// marked lost.
    pub fn pipe(&self) -> u64 {
        self.outstanding() - self.lost_bytes - self.sacked_bytes
    }

    /// In-flight measure used for the send decision.
    pub fn inflight(&self) -> u64 {
        match self.mode {
            RecoveryMode::Reno => self.flight_size(),
            RecoveryMode::Controller => self.pipe(),
        }
    }

    pub fn allowed(&self, rwnd: f64) -> f64 {
        let mut cwnd = self.cwnd;
        if self.limited_transmit
            && !self.in_fast_recovery
            && (1..DUPACK_THRESHOLD).contains(&self.dup_ack_count)
        {
            cwnd += 2.0 * self.smss_f();
        }
        allowed_send(cwnd, rwnd, self.inflight() as f64)
    }

    /// Standard loss response of the slow-start threshold.
    pub fn reno_ssthresh(&self) -> f64 {
        (self.flight_size() as f64 / 2.0).max(2.0 * self.smss_f())
    }

    fn rate_fields_on_send(&mut self, now: SimTime) -> (u64, SimTime, SimTime, bool) {
        if self.pipe() == 0 {
            self.first_sent_time = now;
            self.delivered_time = now;
        }
        (
            self.delivered,
            self.delivered_time,
            self.first_sent_time,
            self.app_limited_until != 0,
        )
    }

    fn arm_rto(&mut self, now: SimTime) {
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rtt.rto());
        }
    }

    /// Records a new-data transmission and returns its subflow sequence number.
    pub fn record_send(&mut self, now: SimTime, dsn: u64, len: u32, reinjected: bool) -> u64 {
        debug_assert!(len > 0 && len <= self.smss);
        let (delivered, delivered_time, first_sent_time, app_limited) =
            self.rate_fields_on_send(now);
        let seq = self.snd_nxt;
        self.records.push_back(SegmentRecord {
            subflow_seq: seq,
            dsn,
            len,
            sent_at: now,
            retransmitted: false,
            rto_resent: false,
            reinjected,
            sacked: false,
            lost: false,
            delivered,
            delivered_time,
            first_sent_time,
            app_limited,
        });
        self.snd_nxt += len as u64;
        self.bytes_sent += len as u64;
        self.arm_rto(now);
        seq
    }

    fn index_of(&self, seq: u64) -> Option<usize> {
        self.records
            .binary_search_by_key(&seq, |r| r.subflow_seq)
            .ok()
    }

    /// Index of the next segment marked lost and awaiting retransmission.
    pub fn pending_retransmit(&mut self) -> Option<usize> {
        while let Some(&seq) = self.lost_queue.front() {
            if seq >= self.snd_una {
                if let Some(idx) = self.index_of(seq) {
                    if self.records[idx].lost {
                        return Some(idx);
                    }
                }
            }
            self.lost_queue.pop_front();
        }
        None
    }

    /// True when the head segment has not been resent in the current
    /// recovery episode.
    pub fn head_needs_retransmit(&self) -> bool {
        self.records
            .front()
            .is_some_and(|r| r.sent_at < self.recovery_start || !r.retransmitted)
    }

    /// Resends the record at `idx` and returns a copy of it.
    pub fn retransmit(&mut self, idx: usize, now: SimTime) -> SegmentRecord {
        let (delivered, delivered_time, first_sent_time, app_limited) =
            self.rate_fields_on_send(now);
        let in_loss = self.in_loss;
        let rec = &mut self.records[idx];
        rec.sent_at = now;
        rec.retransmitted = true;
        rec.delivered = delivered;
        rec.delivered_time = delivered_time;
        rec.first_sent_time = first_sent_time;
        rec.app_limited = app_limited;
        if in_loss && idx == 0 {
            rec.rto_resent = true;
        }
        let was_lost = std::mem::replace(&mut rec.lost, false);
        let copy = rec.clone();
        if was_lost {
            self.lost_bytes -= copy.len as u64;
        }
        self.rtx_watch.push_back((copy.subflow_seq, now, 0));
        self.retransmit_count += 1;
        self.bytes_sent += copy.len as u64;
        self.arm_rto(now);
        copy
    }

    /// Processes a cumulative subflow ACK without selective information.
    pub fn on_ack(&mut self, ack_seq: u64, now: SimTime) -> Result<AckOutcome, SubflowError> {
        self.on_ack_sack(ack_seq, None, now)
    }

    /// Processes a cumulative subflow ACK that also reports the segment at
    /// `sack` as received out of order.
    pub fn on_ack_sack(
        &mut self,
        ack_seq: u64,
        sack: Option<u64>,
        now: SimTime,
    ) -> Result<AckOutcome, SubflowError> {
        let prior_inflight = self.pipe();
        if ack_seq < self.snd_una {
            self.stale_acks += 1;
            return Ok(AckOutcome::new(AckKind::Stale, prior_inflight));
        }
        if ack_seq > self.snd_nxt {
            return Err(SubflowError::AckBeyondSent {
                ack: ack_seq,
                snd_nxt: self.snd_nxt,
            });
        }
        let mut newest_sent: Option<(SimTime, bool)> = None;
        let mut sampled: Option<SegmentRecord> = None;
        let mut delivered_now = 0u64;

        if let Some(idx) = sack.filter(|&s| s >= ack_seq).and_then(|s| self.index_of(s)) {
            let rec = &mut self.records[idx];
            if !rec.sacked {
                rec.sacked = true;
                let len = rec.len as u64;
                let was_lost = std::mem::replace(&mut rec.lost, false);
                let rec = rec.clone();
                if was_lost {
                    self.lost_bytes -= len;
                }
                self.sacked_bytes += len;
                if rec.subflow_seq >= self.loss_frontier {
                    self.sacked_above_frontier += 1;
                }
                delivered_now += len;
                self.watch_resent(rec.sent_at);
                newest_sent = Some((rec.sent_at, rec.retransmitted));
                sampled = Some(rec);
            }
        }

        let mut out = if ack_seq == self.snd_una {
            self.on_dup_ack(prior_inflight)
        } else {
            AckOutcome::new(AckKind::Advance, prior_inflight)
        };

        if out.kind == AckKind::Advance {
            out.newly_acked = ack_seq - self.snd_una;
            while let Some(front) = self.records.front() {
                if front.end() > ack_seq {
                    if front.subflow_seq < ack_seq {
                        return Err(SubflowError::MisalignedAck(ack_seq));
                    }
                    break;
                }
                let rec = self.records.pop_front().expect("front exists");
                let len = rec.len as u64;
                if rec.sacked {
                    self.sacked_bytes -= len;
                    if rec.subflow_seq >= self.loss_frontier {
                        self.sacked_above_frontier -= 1;
                    }
                    continue;
                }
                if rec.lost {
                    self.lost_bytes -= len;
                }
                delivered_now += len;
                if newest_sent.is_none_or(|(t, _)| rec.sent_at >= t) {
                    newest_sent = Some((rec.sent_at, rec.retransmitted));
                }
                if sampled.as_ref().is_none_or(|s| rec.delivered >= s.delivered) {
                    sampled = Some(rec);
                }
            }
            self.loss_frontier = self.loss_frontier.max(ack_seq);

            let had_dupacks = self.dup_ack_count > 0;
            self.snd_una = ack_seq;
            self.dup_ack_count = 0;

            if let Some((sent_at, false)) = newest_sent {
                let r = now - sent_at;
                if !self.in_fast_recovery && !had_dupacks {
                    self.rtt.sample(r);
                    out.rtt = Some(r);
                }
            }

            let smss = self.smss as u64;
            let newly = out.newly_acked;
            if self.in_fast_recovery {
                let recover = self.recover.unwrap_or(0);
                if ack_seq >= recover {
                    self.in_fast_recovery = false;
                    out.exit_recovery = true;
                    if self.mode == RecoveryMode::Reno {
                        self.cwnd = self.ssthresh.max(self.smss_f());
                    }
                } else {
                    out.partial_ack = true;
                    if self.mode == RecoveryMode::Reno {
                        let mut cwnd = self.cwnd - newly as f64;
                        if newly >= smss {
                            cwnd += self.smss_f();
                        }
                        self.cwnd = cwnd.max(self.smss_f());
                    }
                }
            }
            if self.in_loss && ack_seq >= self.recover.unwrap_or(0) {
                self.in_loss = false;
                out.exit_recovery = true;
            }
            self.rto_deadline = if self.snd_una == self.snd_nxt {
                None
            } else {
                Some(now + self.rtt.rto())
            };
        }

        if let Some((sent_at, false)) = newest_sent {
            let r = now - sent_at;
            out.rtt_any = Some(r);
            self.min_rtt = Some(self.min_rtt.map_or(r, |m| m.min(r)));
        }

        self.delivered += delivered_now;
        out.delivered = delivered_now;
        if let Some(rec) = sampled {
            out.rate = self.rate_sample(&rec, now);
        }
        if self.app_limited_until != 0 && self.delivered > self.app_limited_until {
            self.app_limited_until = 0;
        }

        self.mark_losses();
        if !self.in_fast_recovery
            && !self.in_loss
            && self.lost_bytes > 0
            && self.recover.is_none_or(|r| self.snd_una > r)
        {
            out.fast_retransmit = true;
        }
        Ok(out)
    }

    fn rate_sample(&mut self, rec: &SegmentRecord, now: SimTime) -> Option<RateSample> {
        self.delivered_time = now;
        let send_elapsed = rec.sent_at.saturating_sub(rec.first_sent_time);
        let ack_elapsed = now.saturating_sub(rec.delivered_time);
        let interval = send_elapsed.max(ack_elapsed);
        self.first_sent_time = rec.sent_at;
        let delivered = self.delivered - rec.delivered;
        let min_rtt = self.min_rtt.unwrap_or(SimTime::ZERO);
        (interval > SimTime::ZERO && interval >= min_rtt).then(|| RateSample {
            delivery_rate: delivered as f64 / interval.as_secs_f64(),
            delivered,
            interval,
            prior_delivered: rec.delivered,
            is_app_limited: rec.app_limited,
        })
    }

    /// Marks a record lost once `DUPACK_THRESHOLD` later segments have been
    /// selectively acknowledged. Resent records are left to the timer.
    fn mark_losses(&mut self) {
        if self.sacked_above_frontier < DUPACK_THRESHOLD || self.loss_frontier >= self.snd_nxt {
            return;
        }
        let Some(mut idx) = self.index_of(self.loss_frontier.max(self.snd_una)) else {
            return;
        };
        while idx < self.records.len() && self.sacked_above_frontier >= DUPACK_THRESHOLD {
            let rec = &mut self.records[idx];
            if rec.sacked {
                self.sacked_above_frontier -= 1;
            } else if !rec.lost && !rec.retransmitted {
                rec.lost = true;
                self.lost_bytes += rec.len as u64;
                self.lost_queue.push_back(rec.subflow_seq);
            }
            self.loss_frontier = rec.end();
            idx += 1;
        }
    }

    /// Counts a selective ACK for a segment sent at `sent_at` against every
    /// resent segment that went out earlier; a resend outrun by
    /// `DUPACK_THRESHOLD` later segments is marked lost again.
    fn watch_resent(&mut self, sent_at: SimTime) {
        let mut i = 0;
        while i < self.rtx_watch.len() && self.rtx_watch[i].1 < sent_at {
            let (seq, at, seen) = self.rtx_watch[i];
            let live = self
                .index_of(seq)
                .filter(|&idx| {
                    let r = &self.records[idx];
                    r.sent_at == at && !r.sacked && !r.lost
                });
            let Some(idx) = live else {
                self.rtx_watch.remove(i);
                continue;
            };
            if seen + 1 >= DUPACK_THRESHOLD {
                let rec = &mut self.records[idx];
                rec.lost = true;
                self.lost_bytes += rec.len as u64;
                self.lost_queue.push_back(seq);
                self.rtx_watch.remove(i);
            } else {
                self.rtx_watch[i].2 += 1;
                i += 1;
            }
        }
    }

    fn on_dup_ack(&mut self, prior_inflight: u64) -> AckOutcome {
        let mut out = AckOutcome::new(AckKind::Duplicate, prior_inflight);
        if self.snd_una == self.snd_nxt {
            return out;
        }
        self.dup_ack_count += 1;
        if self.in_fast_recovery {
            if self.mode == RecoveryMode::Reno {
                self.cwnd += self.smss_f();
            }
        } else if self.dup_ack_count == DUPACK_THRESHOLD
            && !self.in_loss
            && self.recover.is_none_or(|r| self.snd_una > r)
        {
            out.fast_retransmit = true;
        }
        out
    }

    /// Enters fast recovery after the third duplicate ACK. In Reno mode the
    /// window becomes `ssthresh + 3 * SMSS`; otherwise only the flags change
    /// and `ssthresh` is left to the controller.
    pub fn enter_fast_recovery(&mut self, ssthresh: f64, now: SimTime) {
        self.in_fast_recovery = true;
        self.recover = Some(self.snd_nxt);
        self.recovery_start = now;
        self.fast_retransmit_count += 1;
        if self.mode == RecoveryMode::Reno {
            self.ssthresh = ssthresh;
            self.cwnd = ssthresh + 3.0 * self.smss_f();
        }
    }

    /// Retransmission timer expiry. Every outstanding segment not
    /// selectively acknowledged is marked lost.
    pub fn on_rto(&mut self, now: SimTime) -> RtoOutcome {
        debug_assert!(self.outstanding() > 0, "RTO with nothing outstanding");
        let prior_cwnd = self.cwnd;
        let head_resent = self.records.front().is_some_and(|r| r.rto_resent);
        if !head_resent {
            self.ssthresh = self.reno_ssthresh();
        }
        if self.mode == RecoveryMode::Reno {
            self.cwnd = self.smss_f();
        }
        self.rtt.backoff();
        self.rto_count += 1;
        self.in_fast_recovery = false;
        self.in_loss = true;
        self.dup_ack_count = 0;
        self.recover = Some(self.snd_nxt);
        self.recovery_start = now;
        self.lost_queue.clear();
        self.rtx_watch.clear();
        self.lost_bytes = 0;
        for rec in self.records.iter_mut().filter(|r| !r.sacked) {
            rec.lost = true;
            self.lost_bytes += rec.len as u64;
            self.lost_queue.push_back(rec.subflow_seq);
        }
        self.loss_frontier = self.snd_nxt;
        self.sacked_above_frontier = 0;
        self.rto_deadline = Some(now + self.rtt.rto());
        RtoOutcome {
            outstanding: self.records.iter().map(|r| (r.dsn, r.len)).collect(),
            prior_cwnd,
        }
    }

    /// Restarts the timer after a retransmission if none is pending.
    pub fn rearm_rto(&mut self, now: SimTime) {
        self.arm_rto(now);
    }
}

/// Reno window growth: slow start below `ssthresh`, one SMSS per round trip
/// above it.
pub fn reno_increase(sub: &mut SubflowState, newly_acked: u64) {
    let smss = sub.smss_f();
    if sub.cwnd < sub.ssthresh {
        sub.cwnd += (newly_acked as f64).min(smss);
    } else {
        sub.cwnd += smss * smss / sub.cwnd;
    }
}
