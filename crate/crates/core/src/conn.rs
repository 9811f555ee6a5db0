//! Connection level: data sequence numbers, the retransmission queue, the
//! receiver's reassembly and out-of-order queues, and connection-level flow
//! control.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

pub const MIN_BUF_CAP: u64 = 16 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConnError {
    #[error("nothing to send")]
    NothingToSend,
    #[error("range {start}..{end} exceeds window limit {limit}")]
    WindowOverflow { start: u64, end: u64, limit: u64 },
}

/// Receive buffer size for a run: 16 MiB or twice the aggregate
/// bandwidth-delay product at the largest round trip, whichever is larger.
/// `rates` in bits per second, `rtt_max` in seconds.
pub fn buffer_capacity(rates: &[f64], rtt_max: f64) -> u64 {
    let bdp = rates.iter().sum::<f64>() / 8.0 * rtt_max;
    MIN_BUF_CAP.max((2.0 * bdp).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtxEntry {
    pub dsn: u64,
    pub len: u32,
    /// Bit `i` is set once subflow index `i` carried this range.
    pub mask: u32,
}

impl RtxEntry {
    pub fn end(&self) -> u64 {
        self.dsn + self.len as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payload {
    pub dsn: u64,
    pub len: u32,
    pub reinjected: bool,
}

/// Sender half. The application source is unbounded.
#[derive(Debug, Clone)]
pub struct MetaSender {
    pub dsn_next: u64,
    pub data_acked: u64,
    pub rwnd: u64,
    pub buf_cap: u64,
    pub rtx_queue: VecDeque<RtxEntry>,
    pub reinjections: u64,
}

impl MetaSender {
    pub fn new(buf_cap: u64) -> Self {
        MetaSender {
            dsn_next: 0,
            data_acked: 0,
            rwnd: buf_cap,
            buf_cap,
            rtx_queue: VecDeque::new(),
            reinjections: 0,
        }
    }

    /// Bytes of new data the connection window still admits.
    pub fn send_window(&self) -> u64 {
        (self.data_acked + self.rwnd).saturating_sub(self.dsn_next)
    }

    /// Unsent bytes of a send buffer of `buf_cap` bytes kept full.
    pub fn remaining(&self) -> u64 {
        self.buf_cap.saturating_sub(self.dsn_next - self.data_acked)
    }

    fn eligible(&self, e: &RtxEntry, subflow: usize) -> bool {
        e.mask & (1 << subflow) == 0 && e.end() > self.data_acked
    }

    pub fn has_rtx_for(&self, subflow: usize) -> bool {
        self.rtx_queue.iter().any(|e| self.eligible(e, subflow))
    }

    /// Head of the retransmission queue if one is eligible for `subflow`,
    /// otherwise the next new range. The returned range is marked as carried
    /// by `subflow`.
    pub fn next_payload(&mut self, max_len: u32, subflow: usize) -> Result<Payload, ConnError> {
        let data_acked = self.data_acked;
        if let Some(e) = self
            .rtx_queue
            .iter_mut()
            .find(|e| e.mask & (1 << subflow) == 0 && e.end() > data_acked)
        {
            e.mask |= 1 << subflow;
            self.reinjections += 1;
            return Ok(Payload {
                dsn: e.dsn,
                len: e.len,
                reinjected: true,
            });
        }
        if max_len == 0 || self.send_window() < max_len as u64 {
            return Err(ConnError::NothingToSend);
        }
        let dsn = self.dsn_next;
        self.dsn_next += max_len as u64;
        Ok(Payload {
            dsn,
            len: max_len,
            reinjected: false,
        })
    }

    /// Queues a range for rescheduling on any subflow other than those that
    /// already carried it.
    pub fn on_subflow_timeout(&mut self, dsn: u64, len: u32, subflow: usize) {
        if dsn + len as u64 <= self.data_acked {
            return;
        }
        if let Some(e) = self.rtx_queue.iter_mut().find(|e| e.dsn == dsn) {
            e.mask |= 1 << subflow;
            return;
        }
        let pos = self.rtx_queue.partition_point(|e| e.dsn < dsn);
        self.rtx_queue.insert(
            pos,
            RtxEntry {
                dsn,
                len,
                mask: 1 << subflow,
            },
        );
    }

    pub fn on_data_ack(&mut self, data_ack: u64, rwnd: u64) {
        if data_ack >= self.data_acked {
            self.data_acked = data_ack;
            self.rwnd = rwnd;
        }
        while self.rtx_queue.front().is_some_and(|e| e.end() <= self.data_acked) {
            self.rtx_queue.pop_front();
        }
    }
}

/// Outcome of one segment arriving at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub subflow_ack: u64,
    /// Subflow sequence of the segment when it arrived out of order.
    pub sack: Option<u64>,
    pub data_ack: u64,
    pub rwnd: u64,
    pub delivered: u64,
}

#[derive(Debug, Clone, Default)]
struct SubflowReassembly {
    rcv_nxt: u64,
    /// seq -> (len, dsn)
    ofo: BTreeMap<u64, (u32, u64)>,
    ofo_bytes: u64,
}

/// Receiver half.
#[derive(Debug, Clone)]
pub struct MetaReceiver {
    pub data_acked: u64,
    pub buf_cap: u64,
    subflows: Vec<SubflowReassembly>,
    /// start -> (end, owning subflow)
    ofo: BTreeMap<u64, (u64, usize)>,
    ofo_bytes: u64,
    /// App-delivered bytes attributed to the subflow whose copy was kept.
    pub delivered_by: Vec<u64>,
    pub duplicate_bytes: u64,
    /// When set, every in-order hand-off to the application is logged.
    pub deliveries: Option<Vec<(u64, u64)>>,
}

impl MetaReceiver {
    pub fn new(n_subflows: usize, buf_cap: u64) -> Self {
        MetaReceiver {
            data_acked: 0,
            buf_cap,
            subflows: vec![SubflowReassembly::default(); n_subflows],
            ofo: BTreeMap::new(),
            ofo_bytes: 0,
            delivered_by: vec![0; n_subflows],
            duplicate_bytes: 0,
            deliveries: None,
        }
    }

    pub fn ofo_bytes(&self) -> u64 {
        self.ofo_bytes
    }

    pub fn ofo_segments(&self) -> usize {
        self.ofo.len()
    }

    pub fn subflow_ofo_bytes(&self) -> u64 {
        self.subflows.iter().map(|s| s.ofo_bytes).sum()
    }

    pub fn rwnd(&self) -> u64 {
        self.buf_cap
            .saturating_sub(self.ofo_bytes + self.subflow_ofo_bytes())
    }

    /// Drops the subflow-level reassembly state of a closed subflow.
    pub fn close_subflow(&mut self, sf: usize) {
        let r = &mut self.subflows[sf];
        r.ofo.clear();
        r.ofo_bytes = 0;
    }

    pub fn delivered(&self) -> u64 {
        self.data_acked
    }

    /// A segment with subflow sequence `seq` and data range `dsn..dsn+len`
    /// arrives on subflow `sf`.
    pub fn on_segment(&mut self, sf: usize, seq: u64, dsn: u64, len: u32) -> Result<Arrival, ConnError> {
        let limit = self.data_acked + self.buf_cap;
        if dsn + len as u64 > limit {
            return Err(ConnError::WindowOverflow {
                start: dsn,
                end: dsn + len as u64,
                limit,
            });
        }
        let before = self.data_acked;
        let r = &mut self.subflows[sf];
        if seq == r.rcv_nxt {
            r.rcv_nxt += len as u64;
            let mut ready = vec![(dsn, len)];
            while let Some(entry) = r.ofo.first_entry() {
                if *entry.key() != r.rcv_nxt {
                    break;
                }
                let (l, d) = entry.remove();
                r.ofo_bytes -= l as u64;
                r.rcv_nxt += l as u64;
                ready.push((d, l));
            }
            for (d, l) in ready {
                self.on_data(sf, d, d + l as u64);
            }
        } else if seq > r.rcv_nxt {
            if let std::collections::btree_map::Entry::Vacant(v) = r.ofo.entry(seq) {
                v.insert((len, dsn));
                r.ofo_bytes += len as u64;
            }
        }
        let rcv_nxt = self.subflows[sf].rcv_nxt;
        Ok(Arrival {
            subflow_ack: rcv_nxt,
            sack: (seq > rcv_nxt).then_some(seq),
            data_ack: self.data_acked,
            rwnd: self.rwnd(),
            delivered: self.data_acked - before,
        })
    }

    /// Data-level arrival of `start..end` handed up by subflow `sf`.
    pub fn on_data(&mut self, sf: usize, start: u64, end: u64) {
        let mut cur = start.max(self.data_acked);
        if let Some((_, &(e, _))) = self.ofo.range(..=cur).next_back() {
            cur = cur.max(e);
        }
        let mut kept = 0;
        while cur < end {
            match self.ofo.range(cur..).next().map(|(&s, &(e, _))| (s, e)) {
                Some((s, e)) if s < end => {
                    if s > cur {
                        self.ofo.insert(cur, (s, sf));
                        kept += s - cur;
                    }
                    cur = e;
                }
                _ => {
                    self.ofo.insert(cur, (end, sf));
                    kept += end - cur;
                    cur = end;
                }
            }
        }
        self.ofo_bytes += kept;
        self.duplicate_bytes += (end - start) - kept;
        self.drain();
    }

    fn drain(&mut self) {
        while let Some(entry) = self.ofo.first_entry() {
            if *entry.key() != self.data_acked {
                break;
            }
            let (end, owner) = entry.remove();
            let len = end - self.data_acked;
            self.ofo_bytes -= len;
            self.delivered_by[owner] += len;
            if let Some(log) = self.deliveries.as_mut() {
                log.push((self.data_acked, end));
            }
            self.data_acked = end;
        }
    }
}
