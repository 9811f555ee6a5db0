//! Link and topology model: Host A -(L1, L2)- Router -(L3)- Host B.
//!
//! Links are analytic drop-tail FIFOs. A link keeps the departure instants of
//! packets still held in its queue, so occupancy at any `now` is the number of
//! departures later than `now`. No per-link events are needed.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::{EngineError, RngStream, SimTime};

/// On-wire bytes per full segment (payload plus headers).
pub const WIRE_MSS: u32 = 1514;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("unknown subflow {0}; expected 1 or 2")]
    UnknownSubflow(usize),
    #[error("invalid path parameter {field}: {value}")]
    Range { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Bits per second.
    pub rate: u64,
    pub one_way_delay: SimTime,
    pub loss_rate: f64,
    /// Packets.
    pub queue_cap: usize,
}

impl PathConfig {
    pub fn new(
        rate: u64,
        one_way_delay: SimTime,
        loss_rate: f64,
        queue_cap: usize,
    ) -> Result<Self, PathError> {
        if rate == 0 {
            return Err(PathError::Range {
                field: "rate",
                value: 0.0,
            });
        }
        if !(0.0..=1.0).contains(&loss_rate) {
            return Err(PathError::Range {
                field: "loss_rate",
                value: loss_rate,
            });
        }
        if queue_cap == 0 {
            return Err(PathError::Range {
                field: "queue_cap",
                value: 0.0,
            });
        }
        Ok(PathConfig {
            rate,
            one_way_delay,
            loss_rate,
            queue_cap,
        })
    }

    /// Builds a link from table units: Mbps, round-trip ms and loss percent.
    ///
    /// The round trip is split evenly between directions, a zero delay becomes
    /// 1 µs, and the queue holds one bandwidth-delay product (at least 64
    /// packets).
    pub fn from_table(rate_mbps: f64, rtt_ms: f64, loss_pct: f64) -> Result<Self, PathError> {
        if !rate_mbps.is_finite() || rate_mbps <= 0.0 {
            return Err(PathError::Range {
                field: "rate_mbps",
                value: rate_mbps,
            });
        }
        if !rtt_ms.is_finite() || rtt_ms < 0.0 {
            return Err(PathError::Range {
                field: "rtt_ms",
                value: rtt_ms,
            });
        }
        if !(0.0..=100.0).contains(&loss_pct) {
            return Err(PathError::Range {
                field: "loss_pct",
                value: loss_pct,
            });
        }
        let rate = (rate_mbps * 1e6).round() as u64;
        let mut one_way = SimTime::from_secs_f64(rtt_ms / 2.0 / 1e3);
        if one_way == SimTime::ZERO {
            one_way = SimTime::from_micros(1);
        }
        let queue_cap = bdp_packets(rate, one_way).max(64);
        PathConfig::new(rate, one_way, loss_pct / 100.0, queue_cap)
    }

    /// Serialization time of `bytes` at this link's rate, rounded up.
    pub fn serialization(&self, bytes: u32) -> SimTime {
        let bits = bytes as u128 * 8 * 1_000_000_000;
        let rate = self.rate as u128;
        SimTime(bits.div_ceil(rate) as u64)
    }
}

/// Bandwidth-delay product of one link, counted in full wire-size packets.
pub fn bdp_packets(rate: u64, one_way_delay: SimTime) -> usize {
    let rtt_s = 2.0 * one_way_delay.as_secs_f64();
    (rate as f64 * rtt_s / 8.0 / WIRE_MSS as f64).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueFull,
    RandomLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueue {
    Accepted { deliver_at: SimTime },
    Dropped(DropReason),
}

#[derive(Debug, Clone)]
pub struct LinkState {
    pub config: PathConfig,
    queue: VecDeque<SimTime>,
    busy_until: SimTime,
    pub drops: u64,
    pub losses: u64,
    pub delivered_bytes: u64,
    rng: RngStream,
}

impl LinkState {
    pub fn new(config: PathConfig, rng: RngStream) -> Self {
        LinkState {
            config,
            queue: VecDeque::new(),
            busy_until: SimTime::ZERO,
            drops: 0,
            losses: 0,
            delivered_bytes: 0,
            rng,
        }
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Packets queued or in transmission at `now`.
    pub fn occupancy(&mut self, now: SimTime) -> usize {
        while matches!(self.queue.front(), Some(&t) if t <= now) {
            self.queue.pop_front();
        }
        self.queue.len()
    }

    pub fn enqueue(&mut self, size: u32, now: SimTime) -> Result<Enqueue, EngineError> {
        debug_assert!(size > 0);
        if self.occupancy(now) >= self.config.queue_cap {
            self.drops += 1;
            return Ok(Enqueue::Dropped(DropReason::QueueFull));
        }
        if self.config.loss_rate > 0.0 && self.rng.bernoulli(self.config.loss_rate)? {
            self.losses += 1;
            return Ok(Enqueue::Dropped(DropReason::RandomLoss));
        }
        let start = now.max(self.busy_until);
        let departs = start + self.config.serialization(size);
        self.busy_until = departs;
        self.queue.push_back(departs);
        self.delivered_bytes += size as u64;
        Ok(Enqueue::Accepted {
            deliver_at: departs + self.config.one_way_delay,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkId {
    L1,
    L2,
    L3,
}

impl LinkId {
    pub fn index(self) -> usize {
        match self {
            LinkId::L1 => 0,
            LinkId::L2 => 1,
            LinkId::L3 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkId::L1 => "L1",
            LinkId::L2 => "L2",
            LinkId::L3 => "L3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Ordered links a subflow's packets traverse. Subflows are numbered 1 and 2.
pub fn route(direction: Direction, subflow_id: usize) -> Result<[LinkId; 2], PathError> {
    let access = match subflow_id {
        1 => LinkId::L1,
        2 => LinkId::L2,
        other => return Err(PathError::UnknownSubflow(other)),
    };
    Ok(match direction {
        Direction::Forward => [access, LinkId::L3],
        Direction::Reverse => [LinkId::L3, access],
    })
}

/// The three links of a run, each with its own loss stream.
#[derive(Debug, Clone)]
pub struct Topology {
    links: [LinkState; 3],
}

impl Topology {
    pub fn new(l1: PathConfig, l2: PathConfig, l3: PathConfig, seed: u64) -> Self {
        let mk = |cfg: PathConfig, id: LinkId| LinkState::new(cfg, RngStream::new(seed, id.name()));
        Topology {
            links: [mk(l1, LinkId::L1), mk(l2, LinkId::L2), mk(l3, LinkId::L3)],
        }
    }

    pub fn link(&self, id: LinkId) -> &LinkState {
        &self.links[id.index()]
    }

    pub fn link_mut(&mut self, id: LinkId) -> &mut LinkState {
        &mut self.links[id.index()]
    }

    /// One-way propagation delay along a route, ignoring serialization.
    pub fn propagation(&self, hops: &[LinkId]) -> SimTime {
        hops.iter()
            .fold(SimTime::ZERO, |acc, &l| acc + self.link(l).config.one_way_delay)
    }

    /// Round trip for a full data segment forward and a bare ACK back on an
    /// idle path.
    pub fn base_rtt(&self, subflow_id: usize) -> Result<SimTime, PathError> {
        let fwd = route(Direction::Forward, subflow_id)?;
        let rev = route(Direction::Reverse, subflow_id)?;
        let ser = fwd
            .iter()
            .fold(SimTime::ZERO, |acc, &l| acc + self.link(l).config.serialization(WIRE_MSS));
        Ok(self.propagation(&fwd) + ser + self.propagation(&rev))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(rate_mbps: f64, rtt_ms: f64, loss_pct: f64) -> LinkState {
        LinkState::new(
            PathConfig::from_table(rate_mbps, rtt_ms, loss_pct).unwrap(),
            RngStream::new(1, "test"),
        )
    }

    #[test]
    fn serialization_of_full_segment_at_100mbps() {
        let cfg = PathConfig::new(100_000_000, SimTime::ZERO, 0.0, 10).unwrap();
        let mut l = LinkState::new(cfg, RngStream::new(0, "x"));
        let now = SimTime::from_millis(3);
        let out = l.enqueue(1514, now).unwrap();
        assert_eq!(
            out,
            Enqueue::Accepted {
                deliver_at: now + SimTime::from_nanos(121_120)
            }
        );
    }

    #[test]
    fn full_queue_drops() {
        let cfg = PathConfig::new(1_000_000, SimTime::ZERO, 0.0, 2).unwrap();
        let mut l = LinkState::new(cfg, RngStream::new(0, "x"));
        assert!(matches!(l.enqueue(1514, SimTime::ZERO).unwrap(), Enqueue::Accepted { .. }));
        assert!(matches!(l.enqueue(1514, SimTime::ZERO).unwrap(), Enqueue::Accepted { .. }));
        assert_eq!(
            l.enqueue(1514, SimTime::ZERO).unwrap(),
            Enqueue::Dropped(DropReason::QueueFull)
        );
        assert_eq!(l.drops, 1);
    }

    #[test]
    fn total_loss_drops_everything() {
        let mut l = link(100.0, 10.0, 100.0);
        for i in 0..100 {
            assert_eq!(
                l.enqueue(1514, SimTime::from_millis(i)).unwrap(),
                Enqueue::Dropped(DropReason::RandomLoss)
            );
        }
    }

    #[test]
    fn table_units() {
        let c = PathConfig::from_table(100.0, 20.0, 0.5).unwrap();
        assert_eq!(c.rate, 100_000_000);
        assert_eq!(c.one_way_delay, SimTime::from_millis(10));
        assert!((c.loss_rate - 0.005).abs() < 1e-15);
        // 100 Mbps * 20 ms = 250 kB = 166 packets of 1514 B.
        assert_eq!(c.queue_cap, 166);
        let z = PathConfig::from_table(100.0, 0.0, 0.0).unwrap();
        assert_eq!(z.one_way_delay, SimTime::from_micros(1));
        assert_eq!(z.queue_cap, 64);
        assert!(PathConfig::from_table(-1.0, 0.0, 0.0).is_err());
        assert!(PathConfig::from_table(1.0, -2.0, 0.0).is_err());
        assert!(PathConfig::from_table(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn routes() {
        use LinkId::*;
        assert_eq!(route(Direction::Forward, 1).unwrap(), [L1, L3]);
        assert_eq!(route(Direction::Forward, 2).unwrap(), [L2, L3]);
        assert_eq!(route(Direction::Reverse, 1).unwrap(), [L3, L1]);
        assert_eq!(route(Direction::Reverse, 2).unwrap(), [L3, L2]);
        assert_eq!(
            route(Direction::Forward, 3),
            Err(PathError::UnknownSubflow(3))
        );
    }

    #[test]
    fn busy_until_is_nondecreasing_and_fifo() {
        let mut l = link(10.0, 4.0, 0.0);
        let mut last = SimTime::ZERO;
        let mut last_busy = SimTime::ZERO;
        for i in 0..50u64 {
            let now = SimTime::from_micros(i * 300);
            if let Enqueue::Accepted { deliver_at } = l.enqueue(1514, now).unwrap() {
                assert!(deliver_at >= last);
                last = deliver_at;
            }
            assert!(l.busy_until() >= last_busy);
            last_busy = l.busy_until();
        }
    }
}
