//! One simulated connection: two subflows over the three-link topology, a
//! greedy application source, one scheduler and one congestion controller.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cc::{AckSample, CcKind, CongestionControl};
use crate::conn::{buffer_capacity, ConnError, MetaReceiver, MetaSender};
use crate::engine::{EngineError, EventKind, EventQueue, SimTime};
use crate::path::{route, Direction, Enqueue, LinkId, PathConfig, PathError, Topology, WIRE_MSS};
use crate::sched::{SchedKind, SchedView, Scheduler, SubflowView};
use crate::subflow::{AckKind, RecoveryMode, SubflowError, SubflowState, SMSS};

pub const HEADER_BYTES: u32 = WIRE_MSS - SMSS;
pub const SAMPLE_INTERVAL: SimTime = SimTime::from_micros(500);
const GP_BUCKET: SimTime = SimTime::from_millis(10);
const GP_BUCKETS: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Subflow(#[from] SubflowError),
    #[error(transparent)]
    Conn(#[from] ConnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub sf1: PathConfig,
    pub sf2: PathConfig,
    pub l3: PathConfig,
    pub duration: SimTime,
    pub scheduler: SchedKind,
    pub cca: CcKind,
    pub seed: u64,
    pub llhd_beta: f64,
    pub ecf_beta: f64,
    pub traces: bool,
    /// Log every in-order application hand-off.
    pub record_deliveries: bool,
}

impl SimConfig {
    pub fn new(sf1: PathConfig, sf2: PathConfig, scheduler: SchedKind, cca: CcKind, seed: u64) -> Self {
        SimConfig {
            sf1,
            sf2,
            l3: default_l3(),
            duration: SimTime::from_secs(30),
            scheduler,
            cca,
            seed,
            llhd_beta: crate::sched::LLHD_BETA,
            ecf_beta: crate::sched::ECF_BETA,
            traces: false,
            record_deliveries: false,
        }
    }
}

/// 2 Gbps, no delay, no loss.
pub fn default_l3() -> PathConfig {
    PathConfig::from_table(2000.0, 0.0, 0.0).expect("valid constant link")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubflowResult {
    pub delivered_bytes: u64,
    pub retransmissions: u64,
    pub rto_count: u64,
    pub fast_retransmits: u64,
    pub bytes_sent: u64,
    /// Mean of the sampled smoothed RTT, seconds.
    pub mean_srtt: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub subflows: Vec<SubflowResult>,
    pub delivered_bytes: u64,
    pub duration_s: f64,
    pub ofo_mean_bytes: f64,
    pub ofo_max_bytes: u64,
    pub ofo_samples: u64,
    pub duplicate_bytes: u64,
    pub reinjections: u64,
    pub events: u64,
    pub sent_dsn: u64,
    pub deliveries: Option<Vec<(u64, u64)>>,
    pub trace: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Router { sf: usize, seq: u64, dsn: u64, len: u32 },
    Receiver { sf: usize, seq: u64, dsn: u64, len: u32 },
    Ack { sf: usize, ack: u64, sack: Option<u64>, data_ack: u64, rwnd: u64 },
    Rto { sf: usize },
    Pace { sf: usize },
    Sample,
}

/// Acked bytes over the last second in 10 ms buckets.
#[derive(Debug, Clone)]
struct GoodputWindow {
    buckets: [u64; GP_BUCKETS],
    current: u64,
    sum: u64,
}

impl GoodputWindow {
    fn new() -> Self {
        GoodputWindow {
            buckets: [0; GP_BUCKETS],
            current: 0,
            sum: 0,
        }
    }

    fn advance(&mut self, now: SimTime) {
        let b = now.0 / GP_BUCKET.0;
        if b <= self.current {
            return;
        }
        let steps = (b - self.current).min(GP_BUCKETS as u64);
        for k in 1..=steps {
            let idx = ((self.current + k) % GP_BUCKETS as u64) as usize;
            self.sum -= self.buckets[idx];
            self.buckets[idx] = 0;
        }
        self.current = b;
    }

    fn add(&mut self, now: SimTime, bytes: u64) {
        self.advance(now);
        self.buckets[(self.current % GP_BUCKETS as u64) as usize] += bytes;
        self.sum += bytes;
    }

    fn rate(&mut self, now: SimTime) -> f64 {
        self.advance(now);
        self.sum as f64
    }
}

pub struct Simulation {
    cfg: SimConfig,
    q: EventQueue<Ev>,
    topo: Topology,
    subs: Vec<SubflowState>,
    cc: Box<dyn CongestionControl>,
    sched: Scheduler,
    snd: MetaSender,
    rcv: MetaReceiver,
    access: [LinkId; 2],
    ack_delay: [SimTime; 2],
    rto_at: [Option<SimTime>; 2],
    pace_at: [Option<SimTime>; 2],
    goodput: [GoodputWindow; 2],
    ofo_sum: f64,
    ofo_max: u64,
    samples: u64,
    srtt_sum: [f64; 2],
    trace: Option<Vec<String>>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let topo = Topology::new(cfg.sf1.clone(), cfg.sf2.clone(), cfg.l3.clone(), cfg.seed);
        let mut cc = cfg.cca.build(2, cfg.seed);
        let mode = cc.recovery_mode();
        let mut subs: Vec<SubflowState> = (1..=2).map(|id| SubflowState::new(id, SMSS, mode)).collect();
        let mut ack_delay = [SimTime::ZERO; 2];
        let mut access = [LinkId::L1; 2];
        let mut rtt_max = 0.0f64;
        for (i, sub) in subs.iter_mut().enumerate() {
            let base = topo.base_rtt(i + 1)?;
            sub.seed_rtt(base);
            rtt_max = rtt_max.max(base.as_secs_f64());
            let rev = route(Direction::Reverse, i + 1)?;
            ack_delay[i] = topo.propagation(&rev);
            access[i] = route(Direction::Forward, i + 1)?[0];
        }
        cc.init(&mut subs, SimTime::ZERO);
        let buf_cap = buffer_capacity(&[cfg.sf1.rate as f64, cfg.sf2.rate as f64], rtt_max);
        let mut rcv = MetaReceiver::new(2, buf_cap);
        if cfg.record_deliveries {
            rcv.deliveries = Some(Vec::new());
        }
        let mut sched = Scheduler::new(cfg.scheduler);
        sched.llhd_beta = cfg.llhd_beta;
        sched.ecf_beta = cfg.ecf_beta;
        Ok(Simulation {
            trace: cfg.traces.then(Vec::new),
            cfg,
            q: EventQueue::new(),
            topo,
            subs,
            cc,
            sched,
            snd: MetaSender::new(buf_cap),
            rcv,
            access,
            ack_delay,
            rto_at: [None; 2],
            pace_at: [None; 2],
            goodput: [GoodputWindow::new(), GoodputWindow::new()],
            ofo_sum: 0.0,
            ofo_max: 0,
            samples: 0,
            srtt_sum: [0.0; 2],
        })
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let end = self.cfg.duration;
        self.q.schedule(SimTime::ZERO, EventKind::SampleTick, Ev::Sample)?;
        self.try_send()?;
        while let Some(ev) = self.q.pop_due(end) {
            self.dispatch(ev.payload)?;
        }
        Ok(self.finish())
    }

    fn now(&self) -> SimTime {
        self.q.now()
    }

    fn dispatch(&mut self, ev: Ev) -> Result<(), SimError> {
        let now = self.now();
        match ev {
            Ev::Router { sf, seq, dsn, len } => {
                if let Enqueue::Accepted { deliver_at } =
                    self.topo.link_mut(LinkId::L3).enqueue(len + HEADER_BYTES, now)?
                {
                    self.q.schedule(
                        deliver_at,
                        EventKind::PacketArrival,
                        Ev::Receiver { sf, seq, dsn, len },
                    )?;
                }
            }
            Ev::Receiver { sf, seq, dsn, len } => {
                if self.subs[sf].closed {
                    return Ok(());
                }
                let a = self.rcv.on_segment(sf, seq, dsn, len)?;
                self.q.schedule(
                    now + self.ack_delay[sf],
                    EventKind::PacketArrival,
                    Ev::Ack {
                        sf,
                        ack: a.subflow_ack,
                        sack: a.sack,
                        data_ack: a.data_ack,
                        rwnd: a.rwnd,
                    },
                )?;
            }
            Ev::Ack { sf, ack, sack, data_ack, rwnd } => {
                self.snd.on_data_ack(data_ack, rwnd);
                if !self.subs[sf].closed {
                    self.on_subflow_ack(sf, ack, sack)?;
                }
                self.apply_closures();
                self.try_send()?;
            }
            Ev::Rto { sf } => {
                if self.rto_at[sf] != Some(now) {
                    return Ok(());
                }
                self.rto_at[sf] = None;
                match self.subs[sf].rto_deadline {
                    Some(d) if d <= now && !self.subs[sf].closed && self.subs[sf].outstanding() > 0 => {
                        self.on_rto(sf)?;
                        self.try_send()?;
                    }
                    _ => self.arm_rto_timer(sf)?,
                }
            }
            Ev::Pace { sf } => {
                if self.pace_at[sf] == Some(now) {
                    self.pace_at[sf] = None;
                    self.try_send()?;
                }
            }
            Ev::Sample => {
                self.sample(now);
                self.q.schedule(now + SAMPLE_INTERVAL, EventKind::SampleTick, Ev::Sample)?;
            }
        }
        Ok(())
    }

    fn sample(&mut self, now: SimTime) {
        let ofo = self.rcv.ofo_bytes();
        self.ofo_sum += ofo as f64;
        self.ofo_max = self.ofo_max.max(ofo);
        self.samples += 1;
        for i in 0..2 {
            self.srtt_sum[i] += self.subs[i].rtt.srtt_secs();
        }
        if let Some(t) = self.trace.as_mut() {
            let _ = write!(
                t_line(t),
                "{} ofo 0 bytes={} segments={}",
                now.as_nanos(),
                ofo,
                self.rcv.ofo_segments()
            );
            for (i, s) in self.subs.iter().enumerate() {
                let _ = write!(
                    t_line(t),
                    "{} srtt {} srtt_us={:.1} cwnd={:.0} inflight={}",
                    now.as_nanos(),
                    i + 1,
                    s.rtt.srtt_secs() * 1e6,
                    s.cwnd,
                    s.inflight()
                );
            }
        }
    }

    fn log(&mut self, kind: &str, sf: usize, fields: impl FnOnce(&mut String)) {
        if let Some(t) = self.trace.as_mut() {
            let now = self.q.now();
            let line = t_line(t);
            let _ = write!(line, "{} {} {} ", now.as_nanos(), kind, sf + 1);
            fields(line);
        }
    }

    fn on_subflow_ack(&mut self, sf: usize, ack: u64, sack: Option<u64>) -> Result<(), SimError> {
        let now = self.now();
        let was_fast = self.subs[sf].in_fast_recovery;
        let out = self.subs[sf].on_ack_sack(ack, sack, now)?;
        if out.kind == AckKind::Stale {
            return Ok(());
        }
        if out.newly_acked > 0 {
            self.goodput[sf].add(now, out.newly_acked);
        }
        let sample = AckSample {
            now,
            newly_acked: out.newly_acked,
            delivered: out.delivered,
            rtt: out.rtt_any,
            rate: out.rate,
            prior_inflight: out.prior_inflight,
            inflight: self.subs[sf].pipe(),
            lost: if out.fast_retransmit { SMSS as u64 } else { 0 },
        };
        match self.cc.recovery_mode() {
            RecoveryMode::Reno => {
                if out.fast_retransmit {
                    let ss = self.cc.loss_ssthresh(&mut self.subs, sf, now);
                    self.subs[sf].enter_fast_recovery(ss, now);
                    self.log("fast_retransmit", sf, |l| {
                        let _ = write!(l, "ssthresh={ss:.0}");
                    });
                    self.retransmit_head(sf)?;
                } else if out.partial_ack && self.subs[sf].head_needs_retransmit() {
                    self.retransmit_head(sf)?;
                }
                if out.exit_recovery {
                    self.cc.on_exit_recovery(&mut self.subs, sf, now);
                }
                if out.kind == AckKind::Advance && !was_fast && !self.subs[sf].in_fast_recovery {
                    self.cc.on_ack(&mut self.subs, sf, &sample);
                }
            }
            RecoveryMode::Controller => {
                if out.fast_retransmit {
                    let ss = self.subs[sf].ssthresh;
                    self.subs[sf].enter_fast_recovery(ss, now);
                    self.cc.on_enter_recovery(&mut self.subs, sf, &sample);
                    self.log("fast_retransmit", sf, |_| {});
                    self.retransmit_head(sf)?;
                } else if out.partial_ack && self.subs[sf].head_needs_retransmit() {
                    self.retransmit_head(sf)?;
                }
                if out.exit_recovery {
                    self.cc.on_exit_recovery(&mut self.subs, sf, now);
                }
                self.cc.on_ack(&mut self.subs, sf, &sample);
            }
        }
        self.arm_rto_timer(sf)?;
        Ok(())
    }

    fn on_rto(&mut self, sf: usize) -> Result<(), SimError> {
        let now = self.now();
        self.cc.on_rto(&mut self.subs, sf, now);
        let out = self.subs[sf].on_rto(now);
        self.log("rto", sf, |l| {
            let _ = write!(l, "outstanding={}", out.outstanding.len());
        });
        for (dsn, len) in out.outstanding {
            self.snd.on_subflow_timeout(dsn, len, sf);
        }
        self.arm_rto_timer(sf)
    }

    fn apply_closures(&mut self) {
        for sf in self.cc.take_closed() {
            let open = self.subs.iter().filter(|s| !s.closed).count();
            if self.subs[sf].closed || open < 2 {
                continue;
            }
            let sub = &mut self.subs[sf];
            sub.closed = true;
            sub.rto_deadline = None;
            let outstanding: Vec<(u64, u32)> = sub.records.iter().map(|r| (r.dsn, r.len)).collect();
            for (dsn, len) in outstanding {
                self.snd.on_subflow_timeout(dsn, len, sf);
            }
            self.rcv.close_subflow(sf);
            self.log("close", sf, |_| {});
        }
    }

    fn arm_rto_timer(&mut self, sf: usize) -> Result<(), SimError> {
        let Some(d) = self.subs[sf].rto_deadline else {
            return Ok(());
        };
        if self.rto_at[sf].is_none_or(|t| d < t) {
            let d = d.max(self.now());
            self.q.schedule(d, EventKind::TimerExpiry, Ev::Rto { sf })?;
            self.rto_at[sf] = Some(d);
        }
        Ok(())
    }

    fn retransmit_head(&mut self, sf: usize) -> Result<(), SimError> {
        if self.subs[sf].records.is_empty() {
            return Ok(());
        }
        let now = self.now();
        let rec = self.subs[sf].retransmit(0, now);
        self.transmit(sf, rec.subflow_seq, rec.dsn, rec.len)
    }

    fn transmit(&mut self, sf: usize, seq: u64, dsn: u64, len: u32) -> Result<(), SimError> {
        let now = self.now();
        self.cc.on_send(&mut self.subs, sf, now);
        if let Some(rate) = self.cc.pacing_rate(sf) {
            let gap = SimTime::from_secs_f64(len as f64 / rate);
            self.subs[sf].next_send_at = now + gap;
        }
        if let Enqueue::Accepted { deliver_at } =
            self.topo.link_mut(self.access[sf]).enqueue(len + HEADER_BYTES, now)?
        {
            self.q.schedule(deliver_at, EventKind::PacketArrival, Ev::Router { sf, seq, dsn, len })?;
        }
        self.arm_rto_timer(sf)
    }

    /// Whether subflow `sf` may put a segment on the wire now. Schedules a
    /// pacing wake-up when only pacing holds it back.
    fn can_send(&mut self, sf: usize) -> Result<bool, SimError> {
        let sub = &self.subs[sf];
        if sub.closed || sub.allowed(f64::INFINITY) <= 0.0 {
            return Ok(false);
        }
        let now = self.now();
        if sub.next_send_at > now {
            let at = sub.next_send_at;
            if self.pace_at[sf].is_none_or(|t| t > at) {
                self.q.schedule(at, EventKind::TimerExpiry, Ev::Pace { sf })?;
                self.pace_at[sf] = Some(at);
            }
            return Ok(false);
        }
        Ok(true)
    }

    fn view(&mut self, available: [bool; 2]) -> SchedView {
        let now = self.now();
        let subflows = (0..2)
            .map(|i| {
                let s = &self.subs[i];
                SubflowView {
                    srtt: s.rtt.srtt_secs(),
                    rttvar: s.rtt.rttvar_secs(),
                    cwnd: s.cwnd,
                    inflight: s.inflight() as f64,
                    smss: s.smss_f(),
                    available: available[i],
                    backup: s.backup,
                    goodput: self.goodput[i].rate(now),
                    active: !s.closed,
                }
            })
            .collect();
        SchedView {
            now,
            subflows,
            send_window: self.snd.send_window() as f64,
            remaining: self.snd.remaining() as f64,
        }
    }

    fn try_send(&mut self) -> Result<(), SimError> {
        let now = self.now();
        for sf in 0..2 {
            while self.subs[sf].pending_retransmit().is_some() && self.can_send(sf)? {
                let idx = self.subs[sf].pending_retransmit().expect("checked above");
                let rec = self.subs[sf].retransmit(idx, now);
                self.transmit(sf, rec.subflow_seq, rec.dsn, rec.len)?;
            }
        }
        loop {
            let avail = [self.can_send(0)?, self.can_send(1)?];
            if !avail[0] && !avail[1] {
                return Ok(());
            }
            let view = self.view(avail);
            let decision = self.sched.decide(&view);
            let Some(t) = decision.target else {
                return Ok(());
            };
            debug_assert!(avail[t]);
            let payload = match self.snd.next_payload(SMSS, t) {
                Ok(p) => p,
                Err(ConnError::NothingToSend) => {
                    self.sched.on_window_blocked(&view);
                    if !self.sched.opportunistic() || !self.opportunistic_reinject(t) {
                        return Ok(());
                    }
                    match self.snd.next_payload(SMSS, t) {
                        Ok(p) => p,
                        Err(_) => return Ok(()),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            let seq = self.subs[t].record_send(now, payload.dsn, payload.len, payload.reinjected);
            self.transmit(t, seq, payload.dsn, payload.len)?;
            if let Some(d) = decision.duplicate_on.filter(|&d| d != t && avail[d]) {
                let seq = self.subs[d].record_send(now, payload.dsn, payload.len, true);
                self.transmit(d, seq, payload.dsn, payload.len)?;
            }
        }
    }

    /// Queues the head-of-line segment for `t` when another subflow holds it,
    /// and penalizes that subflow if it is the slower one. Returns whether
    /// anything was queued.
    fn opportunistic_reinject(&mut self, t: usize) -> bool {
        let now = self.now();
        let head = self.snd.data_acked;
        let Some(h) = (0..2).find(|&h| h != t && self.subs[h].records.iter().any(|r| r.dsn == head))
        else {
            return false;
        };
        let len = self.subs[h]
            .records
            .iter()
            .find(|r| r.dsn == head)
            .map(|r| r.len)
            .expect("found above");
        if self.snd.rtx_queue.iter().any(|e| e.dsn == head && e.mask & (1 << t) != 0) {
            return false;
        }
        let srtt_t = self.subs[t].rtt.srtt_secs();
        let holder = &mut self.subs[h];
        let due = holder
            .last_penalized
            .is_none_or(|p| (now - p).as_secs_f64() >= holder.rtt.srtt_secs());
        if srtt_t < holder.rtt.srtt_secs() && due && !holder.in_fast_recovery && !holder.in_loss {
            let smss = holder.smss_f();
            let prior = holder.cwnd;
            holder.cwnd = (holder.cwnd / 2.0).max(smss);
            if prior >= holder.ssthresh {
                holder.ssthresh = (holder.ssthresh / 2.0).max(2.0 * smss);
            }
            holder.last_penalized = Some(now);
        }
        self.snd.on_subflow_timeout(head, len, h);
        true
    }

    fn finish(mut self) -> RunOutput {
        let samples = self.samples.max(1) as f64;
        let subflows = (0..2)
            .map(|i| {
                let s = &self.subs[i];
                SubflowResult {
                    delivered_bytes: self.rcv.delivered_by[i],
                    retransmissions: s.retransmit_count,
                    rto_count: s.rto_count,
                    fast_retransmits: s.fast_retransmit_count,
                    bytes_sent: s.bytes_sent,
                    mean_srtt: self.srtt_sum[i] / samples,
                    closed: s.closed,
                }
            })
            .collect();
        RunOutput {
            subflows,
            delivered_bytes: self.rcv.delivered(),
            duration_s: self.cfg.duration.as_secs_f64(),
            ofo_mean_bytes: self.ofo_sum / samples,
            ofo_max_bytes: self.ofo_max,
            ofo_samples: self.samples,
            duplicate_bytes: self.rcv.duplicate_bytes,
            reinjections: self.snd.reinjections,
            events: self.q.dispatched(),
            sent_dsn: self.snd.dsn_next,
            deliveries: self.rcv.deliveries.take(),
            trace: self.trace.take(),
        }
    }
}

fn t_line(t: &mut Vec<String>) -> &mut String {
    t.push(String::new());
    t.last_mut().expect("just pushed")
}

pub fn run(cfg: SimConfig) -> Result<RunOutput, SimError> {
    Simulation::new(cfg)?.run()
}
