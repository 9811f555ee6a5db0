//! Scheduler and congestion-control step functions checked against plain
//! line-by-line reference versions of each algorithm, on seeded
//! random states and on an enumerated grid of scheduler views.

use mptcp_sim::cc::bbr::{BbrAck, BbrMode, BbrState, GAIN_CYCLE, HIGH_GAIN};
use mptcp_sim::cc::cmpbbr::{CmpbbrState, SubflowBw};
use mptcp_sim::cc::coupled::{
    balia_decrease, balia_increase, lia_alpha, lia_increase, olia_a, olia_increase, olia_sets,
};
use mptcp_sim::cc::cubic::CubicState;
use mptcp_sim::cc::wvegas::{WvegasError, WvegasState};
use mptcp_sim::engine::{RngStream, SimTime};
use mptcp_sim::sched::{self, SchedView, SubflowView};
use mptcp_sim::subflow::RateSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 10_000;

fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if a.is_nan() || b.is_nan() {
        return false;
    }
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

#[track_caller]
fn check(case: usize, what: &str, got: f64, want: f64) {
    assert!(close(got, want), "case {case}: {what}: got {got}, reference {want}");
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

// ---------------------------------------------------------------- schedulers

fn random_view(r: &mut ChaCha8Rng, n: usize) -> SchedView {
    let srtts = [0.005, 0.010, 0.020, 0.040];
    let subflows = (0..n)
        .map(|_| {
            let smss = 1448.0;
            let cwnd = r.gen_range(1..=40) as f64 * smss;
            let inflight = (r.gen_range(0.0..=1.2) * cwnd / smss).floor() * smss;
            let active = r.gen_bool(0.9);
            SubflowView {
                srtt: if r.gen_bool(0.5) { srtts[r.gen_range(0..4)] } else { r.gen_range(0.001..0.2) },
                rttvar: r.gen_range(0.0..0.02),
                cwnd,
                inflight,
                smss,
                available: active && inflight < cwnd && r.gen_bool(0.85),
                backup: r.gen_bool(0.1),
                goodput: if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.0..2.0e7) },
                active,
            }
        })
        .collect();
    SchedView {
        now: SimTime::from_millis(r.gen_range(0..30_000)),
        subflows,
        send_window: r.gen_range(0.0..2.0e6),
        remaining: r.gen_range(0.0..4.0e6),
    }
}

fn grid_views() -> Vec<SchedView> {
    let mut out = Vec::new();
    let smss = 1448.0;
    let mut per_sf = Vec::new();
    for srtt in [0.005, 0.010, 0.020, 0.040] {
        for cw in [2.0f64, 4.0, 10.0] {
            for fill in [0.0, 0.5, 1.0] {
                let cwnd = cw * smss;
                let inflight = (cw * fill).floor() * smss;
                per_sf.push(SubflowView {
                    srtt,
                    rttvar: srtt / 4.0,
                    cwnd,
                    inflight,
                    smss,
                    available: inflight < cwnd,
                    backup: false,
                    goodput: cwnd / srtt,
                    active: true,
                });
            }
        }
    }
    for a in &per_sf {
        for b in &per_sf {
            for (sw, k) in [(20.0 * smss, 8.0 * smss), (200.0 * smss, 400.0 * smss)] {
                out.push(SchedView {
                    now: SimTime::from_millis(1),
                    subflows: vec![*a, *b],
                    send_window: sw,
                    remaining: k,
                });
            }
        }
    }
    out
}

fn ref_minrtt(v: &SchedView) -> Option<usize> {
    let mut srtt_min = f64::INFINITY;
    let mut best = None;
    for (i, sf) in v.subflows.iter().enumerate() {
        if sf.available && !sf.backup && sf.srtt < srtt_min {
            srtt_min = sf.srtt;
            best = Some(i);
        }
    }
    if best.is_some() {
        return best;
    }
    for (i, sf) in v.subflows.iter().enumerate() {
        if sf.available && sf.backup && sf.srtt < srtt_min {
            srtt_min = sf.srtt;
            best = Some(i);
        }
    }
    best
}

/// Fastest open subflow, then the fastest available one among the others.
fn ref_fast_slow(v: &SchedView) -> (Option<usize>, Option<usize>) {
    let mut f = None;
    let mut srtt_min = f64::INFINITY;
    for (i, sf) in v.subflows.iter().enumerate() {
        if sf.active && sf.srtt < srtt_min {
            srtt_min = sf.srtt;
            f = Some(i);
        }
    }
    let mut s = None;
    let mut srtt_min = f64::INFINITY;
    for (i, sf) in v.subflows.iter().enumerate() {
        if Some(i) != f && sf.available && sf.srtt < srtt_min {
            srtt_min = sf.srtt;
            s = Some(i);
        }
    }
    (f, s)
}

fn ref_blest(v: &SchedView, lambda: f64) -> Option<usize> {
    let (Some(f), s) = ref_fast_slow(v) else {
        return None;
    };
    if v.subflows[f].available {
        return Some(f);
    }
    let s = s?;
    let xf = v.subflows[f];
    let xs = v.subflows[s];
    let rtt_s = xs.srtt / xf.srtt;
    let cwnd_f = xf.cwnd / xf.smss;
    let inflight_s = xs.inflight / xs.smss;
    let x = xf.smss * (cwnd_f + (rtt_s - 1.0) / 2.0) * rtt_s;
    if x * lambda <= v.send_window - xs.smss * (inflight_s + 1.0) {
        Some(s)
    } else {
        None
    }
}

fn ref_ecf(v: &SchedView, waiting: &mut u8, beta: f64) -> Option<usize> {
    let (Some(f), s) = ref_fast_slow(v) else {
        return None;
    };
    if v.subflows[f].available {
        return Some(f);
    }
    let s = s?;
    let k = v.remaining;
    let (rtt_f, rtt_s) = (v.subflows[f].srtt, v.subflows[s].srtt);
    let n = 1.0 + k / v.subflows[f].cwnd;
    let delta = v.subflows[f].rttvar.max(v.subflows[s].rttvar);
    if n * rtt_f < (1.0 + *waiting as f64 * beta) * (rtt_s + delta) {
        if k / v.subflows[s].cwnd * rtt_s >= 2.0 * rtt_f + delta {
            *waiting = 1;
            None
        } else {
            Some(s)
        }
    } else {
        *waiting = 0;
        Some(s)
    }
}

fn ref_rr(v: &SchedView, cursor: &mut usize, num_segments: u32) -> Option<usize> {
    let n = v.subflows.len();
    let mut i = *cursor;
    let mut tried = 0;
    while tried < n {
        let sf = v.subflows[i];
        if sf.available && sf.cwnd - sf.inflight >= num_segments as f64 * sf.smss {
            *cursor = (i + 1) % n;
            return Some(i);
        }
        i = (i + 1) % n;
        tried += 1;
    }
    None
}

fn ref_llhd(v: &SchedView, beta: f64) -> Option<usize> {
    let mut gp_max = 0.0f64;
    let mut rtt_max = 0.0f64;
    for sf in &v.subflows {
        if sf.active {
            if sf.goodput > gp_max {
                gp_max = sf.goodput;
            }
            if sf.srtt > rtt_max {
                rtt_max = sf.srtt;
            }
        }
    }
    let gamma = |sf: &SubflowView| {
        let gp = if gp_max > 0.0 { sf.goodput / gp_max } else { 0.0 };
        let rt = if sf.srtt > 0.0 { rtt_max / sf.srtt } else { 1.0 };
        gp + beta * rt
    };
    let mut gamma_max = 0.0;
    let mut best = None;
    for (i, sf) in v.subflows.iter().enumerate() {
        if sf.backup || !sf.available {
            continue;
        }
        let g = gamma(sf);
        if g > gamma_max {
            gamma_max = g;
            best = Some(i);
        }
    }
    if best.is_some() {
        return best;
    }
    for (i, sf) in v.subflows.iter().enumerate() {
        if !sf.backup || !sf.available {
            continue;
        }
        let g = gamma(sf);
        if g > gamma_max {
            gamma_max = g;
            best = Some(i);
        }
    }
    best
}

fn ref_remp(v: &SchedView) -> (Option<usize>, Option<usize>) {
    let mut first = None;
    for (k, sf) in v.subflows.iter().enumerate() {
        if sf.available {
            first = Some(k);
            break;
        }
    }
    let mut second = None;
    for (k, sf) in v.subflows.iter().enumerate() {
        if Some(k) != first && sf.available {
            second = Some(k);
            break;
        }
    }
    (first, second)
}

fn check_sched_view(case: usize, v: &SchedView, lambda: f64, waiting: bool, cursor: usize) {
    assert_eq!(sched::minrtt(v).target, ref_minrtt(v), "minrtt case {case}: {v:?}");
    assert_eq!(sched::blest(v, lambda).target, ref_blest(v, lambda), "blest case {case}: {v:?}");

    let (mut w_impl, mut w_ref) = (waiting, waiting as u8);
    let got = sched::ecf(v, &mut w_impl, sched::ECF_BETA).target;
    let want = ref_ecf(v, &mut w_ref, sched::ECF_BETA);
    assert_eq!((got, w_impl as u8), (want, w_ref), "ecf case {case}: {v:?}");

    let cursor = cursor % v.subflows.len();
    for segs in [1, 2] {
        let (mut c_impl, mut c_ref) = (cursor, cursor);
        let got = sched::roundrobin(v, &mut c_impl, segs).target;
        let want = ref_rr(v, &mut c_ref, segs);
        assert_eq!((got, c_impl), (want, c_ref), "rr case {case}: {v:?}");
    }

    for beta in [sched::LLHD_BETA, sched::LLHD_BETA_CODE] {
        assert_eq!(sched::llhd(v, beta).target, ref_llhd(v, beta), "llhd case {case}: {v:?}");
    }

    let d = sched::remp(v);
    assert_eq!((d.target, d.duplicate_on), ref_remp(v), "remp case {case}: {v:?}");
}

#[test]
pub fn schedulers_match_reference_on_random_views() {
    let mut r = rng(1);
    for case in 0..CASES {
        let n = if r.gen_bool(0.8) { 2 } else { r.gen_range(1..=4) };
        let v = random_view(&mut r, n);
        let lambda = r.gen_range(1.0..3.0);
        check_sched_view(case, &v, lambda, r.gen_bool(0.5), r.gen_range(0..4));
    }
}

#[test]
pub fn schedulers_match_reference_on_grid() {
    let views = grid_views();
    assert_eq!(views.len(), 36 * 36 * 2);
    for (case, v) in views.iter().enumerate() {
        for waiting in [false, true] {
            check_sched_view(case, v, 1.0, waiting, case);
        }
    }
}

// ---------------------------------------------------------------- CUBIC

#[derive(Debug, Clone, Copy, Default)]
struct RefCubic {
    w_last_max: f64,
    epoch_start: f64,
    origin_point: f64,
    d_min: f64,
    w_tcp: f64,
    k: f64,
    ack_cnt: f64,
    cwnd_cnt: f64,
    cnt: f64,
}

const CUBIC_BETA: f64 = 0.2;
const CUBIC_C: f64 = 0.4;

impl RefCubic {
    fn from(s: &CubicState) -> Self {
        RefCubic {
            w_last_max: s.w_last_max,
            epoch_start: s.epoch_start,
            origin_point: s.origin_point,
            d_min: s.d_min,
            w_tcp: s.w_tcp,
            k: s.k,
            ack_cnt: s.ack_cnt,
            cwnd_cnt: s.cwnd_cnt,
            cnt: s.cnt,
        }
    }

    fn on_ack(&mut self, cwnd: &mut f64, ssthresh: f64, tcp_time_stamp: f64, rtt: f64) {
        if self.d_min != 0.0 {
            self.d_min = self.d_min.min(rtt);
        } else {
            self.d_min = rtt;
        }
        if *cwnd <= ssthresh {
            *cwnd += 1.0;
        } else {
            self.cubic_update(*cwnd, tcp_time_stamp);
            if self.cwnd_cnt > self.cnt {
                *cwnd += 1.0;
                self.cwnd_cnt = 0.0;
            } else {
                self.cwnd_cnt += 1.0;
            }
        }
    }

    fn cubic_update(&mut self, cwnd: f64, tcp_time_stamp: f64) {
        self.ack_cnt += 1.0;
        if self.epoch_start <= 0.0 {
            self.epoch_start = tcp_time_stamp;
            if cwnd < self.w_last_max {
                self.k = ((self.w_last_max - cwnd) / CUBIC_C).cbrt();
                self.origin_point = self.w_last_max;
            } else {
                self.k = 0.0;
                self.origin_point = cwnd;
            }
            self.ack_cnt = 1.0;
            self.w_tcp = cwnd;
        }
        let t = tcp_time_stamp + self.d_min - self.epoch_start;
        let target = self.origin_point + CUBIC_C * (t - self.k) * (t - self.k) * (t - self.k);
        if target > cwnd {
            self.cnt = cwnd / (target - cwnd);
        } else {
            self.cnt = 100.0 * cwnd;
        }
        self.cubic_tcp_friendliness(cwnd);
    }

    fn cubic_tcp_friendliness(&mut self, cwnd: f64) {
        self.w_tcp += 3.0 * CUBIC_BETA / (2.0 - CUBIC_BETA) * self.ack_cnt / cwnd;
        self.ack_cnt = 0.0;
        if self.w_tcp > cwnd {
            let max_cnt = cwnd / (self.w_tcp - cwnd);
            if self.cnt > max_cnt {
                self.cnt = max_cnt;
            }
        }
    }

    fn packet_loss(&mut self, cwnd: &mut f64) -> f64 {
        self.epoch_start = 0.0;
        if *cwnd < self.w_last_max {
            self.w_last_max = *cwnd * (2.0 - CUBIC_BETA) / 2.0;
        } else {
            self.w_last_max = *cwnd;
        }
        *cwnd *= 1.0 - CUBIC_BETA;
        *cwnd
    }

    fn cubic_reset(&mut self) {
        self.w_last_max = 0.0;
        self.epoch_start = 0.0;
        self.origin_point = 0.0;
        self.d_min = 0.0;
        self.w_tcp = 0.0;
        self.k = 0.0;
        self.ack_cnt = 0.0;
    }
}

fn cubic_matches(case: usize, s: &CubicState, r: &RefCubic) {
    check(case, "w_last_max", s.w_last_max, r.w_last_max);
    check(case, "epoch_start", s.epoch_start, r.epoch_start);
    check(case, "origin_point", s.origin_point, r.origin_point);
    check(case, "d_min", s.d_min, r.d_min);
    check(case, "w_tcp", s.w_tcp, r.w_tcp);
    check(case, "k", s.k, r.k);
    check(case, "ack_cnt", s.ack_cnt, r.ack_cnt);
    check(case, "cwnd_cnt", s.cwnd_cnt, r.cwnd_cnt);
    check(case, "cnt", s.cnt, r.cnt);
}

#[test]
pub fn cubic_matches_reference() {
    let mut r = rng(2);
    for case in 0..CASES {
        let now = r.gen_range(0.0..30.0);
        let mut s = CubicState {
            w_last_max: if r.gen_bool(0.2) { 0.0 } else { r.gen_range(2.0..400.0) },
            epoch_start: if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..now) },
            origin_point: r.gen_range(0.0..400.0),
            d_min: if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.001..0.2) },
            w_tcp: r.gen_range(0.0..400.0),
            k: r.gen_range(0.0..10.0),
            ack_cnt: r.gen_range(0..50) as f64,
            cwnd_cnt: r.gen_range(0..200) as f64,
            cnt: r.gen_range(0.0..500.0),
        };
        let mut reference = RefCubic::from(&s);
        let mut cwnd = r.gen_range(1..400) as f64;
        let mut cwnd_ref = cwnd;
        let ssthresh = r.gen_range(2.0..400.0);
        let rtt = r.gen_range(0.001..0.3);
        match r.gen_range(0..10) {
            0..=6 => {
                s.on_ack(&mut cwnd, ssthresh, now, rtt);
                reference.on_ack(&mut cwnd_ref, ssthresh, now, rtt);
            }
            7 | 8 => {
                let a = s.on_loss(&mut cwnd);
                let b = reference.packet_loss(&mut cwnd_ref);
                check(case, "ssthresh", a, b);
            }
            _ => {
                s.reset();
                reference.cubic_reset();
            }
        }
        check(case, "cwnd", cwnd, cwnd_ref);
        cubic_matches(case, &s, &reference);
    }
}

// ---------------------------------------------------------------- LIA / OLIA / BALIA

fn random_paths(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = if r.gen_bool(0.7) { 2 } else { r.gen_range(1..=4) };
    let mss = 1448.0;
    let w = (0..n)
        .map(|_| if r.gen_bool(0.2) { 10.0 * mss } else { r.gen_range(2.0..300.0) * mss })
        .collect();
    let rtt = (0..n)
        .map(|_| if r.gen_bool(0.2) { 0.01 } else { r.gen_range(0.001..0.3) })
        .collect();
    (w, rtt)
}

#[test]
pub fn lia_matches_reference() {
    let mut r = rng(3);
    let mss = 1448.0;
    for case in 0..CASES {
        let (w, rtt) = random_paths(&mut r);
        let i = r.gen_range(0..w.len());
        let bytes_acked = r.gen_range(1..=4) as f64 * mss;

        let mut cwnd_total = 0.0;
        let mut max_term = f64::MIN;
        let mut sum = 0.0;
        for k in 0..w.len() {
            cwnd_total += w[k];
            if w[k] / (rtt[k] * rtt[k]) > max_term {
                max_term = w[k] / (rtt[k] * rtt[k]);
            }
            sum += w[k] / rtt[k];
        }
        let alpha = cwnd_total * max_term / (sum * sum);
        let a = alpha * bytes_acked * mss / cwnd_total;
        let b = bytes_acked * mss / w[i];
        let inc = if a < b { a } else { b };

        check(case, "lia alpha", lia_alpha(&w, &rtt), alpha);
        check(case, "lia increase", lia_increase(w[i], cwnd_total, alpha, bytes_acked, mss), inc);
    }
}

#[test]
pub fn olia_matches_reference() {
    let mut r = rng(4);
    let mss = 1448.0;
    for case in 0..CASES {
        let (w, rtt) = random_paths(&mut r);
        let n = w.len();
        let l: Vec<f64> = (0..n)
            .map(|_| if r.gen_bool(0.3) { 1.0e6 } else { r.gen_range(0.0..1.0e7) })
            .collect();
        let bytes_acked = r.gen_range(1..=4) as f64 * mss;

        // best paths: largest l_r / rtt_r^2; max_w paths: largest window.
        let mut best_q = f64::MIN;
        let mut max_w = f64::MIN;
        for k in 0..n {
            if l[k] / (rtt[k] * rtt[k]) > best_q {
                best_q = l[k] / (rtt[k] * rtt[k]);
            }
            if w[k] > max_w {
                max_w = w[k];
            }
        }
        let in_b: Vec<bool> = (0..n).map(|k| l[k] / (rtt[k] * rtt[k]) == best_q).collect();
        let in_m: Vec<bool> = (0..n).map(|k| w[k] == max_w).collect();
        let (got_b, got_m) = olia_sets(&w, &rtt, &l);
        assert_eq!((&got_b, &got_m), (&in_b, &in_m), "olia sets case {case}");

        let mut collected = 0;
        let mut m_count = 0;
        for k in 0..n {
            if in_b[k] && !in_m[k] {
                collected += 1;
            }
            if in_m[k] {
                m_count += 1;
            }
        }
        let r_u = n as f64;
        let mut sum_a = 0.0;
        for p in 0..n {
            let a_r = if in_b[p] && !in_m[p] && collected > 0 {
                (1.0 / r_u) / collected as f64
            } else if in_m[p] && collected > 0 {
                -(1.0 / r_u) / m_count as f64
            } else {
                0.0
            };
            sum_a += a_r;
            check(case, "olia a_r", olia_a(p, &in_b, &in_m), a_r);

            let mut s = 0.0;
            for k in 0..n {
                s += w[k] / rtt[k];
            }
            let inc_pkts = (w[p] / (rtt[p] * rtt[p])) / (s * s) + a_r / w[p];
            let inc = inc_pkts * mss * bytes_acked;
            check(case, "olia increase", olia_increase(&w, &rtt, p, a_r, bytes_acked, mss), inc);
        }
        assert!(sum_a.abs() < 1e-12, "case {case}: sum of a_r = {sum_a}");
    }
}

#[test]
pub fn balia_matches_reference() {
    let mut r = rng(5);
    let mss = 1448.0;
    for case in 0..CASES {
        let (w, rtt) = random_paths(&mut r);
        let p = r.gen_range(0..w.len());
        let bytes_acked = r.gen_range(1..=4) as f64 * mss;

        let mut sum_x = 0.0;
        let mut max_x = f64::MIN;
        for k in 0..w.len() {
            let x_k = w[k] / rtt[k];
            sum_x += x_k;
            if x_k > max_x {
                max_x = x_k;
            }
        }
        let x_r = w[p] / rtt[p];
        let a_r = max_x / x_r;
        let inc = x_r / (rtt[p] * sum_x * sum_x) * ((1.0 + a_r) / 2.0) * ((4.0 + a_r) / 5.0) * mss * bytes_acked;
        let after_loss = w[p] - w[p] / 2.0 * a_r.min(1.5);

        check(case, "balia increase", balia_increase(&w, &rtt, p, bytes_acked, mss), inc);
        check(case, "balia decrease", balia_decrease(&w, &rtt, p), after_loss);
    }
}

// ---------------------------------------------------------------- wVegas

#[derive(Debug, Clone)]
struct RefVegas {
    total_alpha: f64,
    alpha: Vec<f64>,
    weights: Vec<f64>,
    equilibrium_rates: Vec<f64>,
    queue_delays: Vec<f64>,
    base_rtt: Vec<f64>,
    sampled_rtts: Vec<f64>,
    sampled_num: Vec<u32>,
}

impl RefVegas {
    fn end_of_round(&mut self, r: usize, cwnd: &mut f64) -> bool {
        if self.sampled_num[r] == 0 {
            return false;
        }
        let rtt = self.sampled_rtts[r] / self.sampled_num[r] as f64;
        self.sampled_rtts[r] = 0.0;
        self.sampled_num[r] = 0;
        let diff = *cwnd * (rtt - self.base_rtt[r]) / rtt;
        if diff >= self.alpha[r] {
            self.equilibrium_rates[r] = *cwnd / rtt;
            self.adjust_weights();
            self.alpha[r] = self.weights[r] * self.total_alpha;
            self.alpha[r] = if self.alpha[r] > 2.0 { self.alpha[r] } else { 2.0 };
        }
        if diff < self.alpha[r] {
            *cwnd += 1.0;
        } else if diff > self.alpha[r] {
            *cwnd -= 1.0;
        }
        let q = rtt - self.base_rtt[r];
        if self.queue_delays[r] == 0.0 || self.queue_delays[r] > q {
            self.queue_delays[r] = q;
        }
        if q >= 2.0 * self.queue_delays[r] {
            let backoff_factor = 0.5 * self.base_rtt[r] / rtt;
            *cwnd *= backoff_factor;
            self.queue_delays[r] = 0.0;
        }
        if *cwnd < 2.0 {
            *cwnd = 2.0;
        }
        true
    }

    fn adjust_weights(&mut self) {
        let mut total_rate = 0.0;
        for x in &self.equilibrium_rates {
            total_rate += x;
        }
        for r in 0..self.weights.len() {
            if self.equilibrium_rates[r] != 0.0 {
                self.weights[r] = self.equilibrium_rates[r] / total_rate;
            }
        }
    }

    fn packet_loss(&mut self, r: usize) {
        self.equilibrium_rates[r] = 0.0;
        self.queue_delays[r] = 0.0;
    }
}

#[test]
pub fn wvegas_matches_reference() {
    let mut g = rng(6);
    for case in 0..CASES {
        let n = g.gen_range(1..=3);
        let mut s = WvegasState::new(n);
        for r in 0..n {
            s.alpha[r] = g.gen_range(2.0..10.0);
            s.weights[r] = g.gen_range(0.0..1.0);
            s.equilibrium_rates[r] = if g.gen_bool(0.3) { 0.0 } else { g.gen_range(1.0..1.0e4) };
            s.queue_delays[r] = if g.gen_bool(0.3) { 0.0 } else { g.gen_range(0.0..0.02) };
            s.base_rtt[r] = g.gen_range(0.001..0.1);
            let samples = if g.gen_bool(0.05) { 0 } else { g.gen_range(1..20) };
            for _ in 0..samples {
                let rtt = s.base_rtt[r] + g.gen_range(0.0..0.05);
                s.sampled_rtts[r] += rtt;
                s.sampled_num[r] += 1;
            }
        }
        let mut reference = RefVegas {
            total_alpha: s.total_alpha,
            alpha: s.alpha.clone(),
            weights: s.weights.clone(),
            equilibrium_rates: s.equilibrium_rates.clone(),
            queue_delays: s.queue_delays.clone(),
            base_rtt: s.base_rtt.clone(),
            sampled_rtts: s.sampled_rtts.clone(),
            sampled_num: s.sampled_num.clone(),
        };
        let r = g.gen_range(0..n);
        let mut cwnd = g.gen_range(2..200) as f64;
        let mut cwnd_ref = cwnd;
        if g.gen_bool(0.9) {
            let got = s.round_end(r, &mut cwnd);
            let want = reference.end_of_round(r, &mut cwnd_ref);
            match got {
                Ok(()) => assert!(want, "case {case}: reference skipped the round"),
                Err(WvegasError::NoSamples) => assert!(!want, "case {case}: reference ran the round"),
            }
        } else {
            s.on_loss(r);
            reference.packet_loss(r);
        }
        check(case, "cwnd", cwnd, cwnd_ref);
        for k in 0..n {
            check(case, "alpha", s.alpha[k], reference.alpha[k]);
            check(case, "weights", s.weights[k], reference.weights[k]);
            check(case, "equilibrium_rates", s.equilibrium_rates[k], reference.equilibrium_rates[k]);
            check(case, "queue_delays", s.queue_delays[k], reference.queue_delays[k]);
            check(case, "sampled_rtts", s.sampled_rtts[k], reference.sampled_rtts[k]);
            assert_eq!(s.sampled_num[k], reference.sampled_num[k], "case {case}");
            assert!(s.alpha[k] >= 2.0);
        }
        assert!(cwnd >= 2.0);
    }
}

// ---------------------------------------------------------------- BBR

const PROBE_RTT_DURATION: f64 = 0.2;
const RTPROP_FILTER_LEN: f64 = 10.0;
const BTLBW_FILTER_LEN: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

fn mode_of(m: BbrMode) -> Mode {
    match m {
        BbrMode::Startup => Mode::Startup,
        BbrMode::Drain => Mode::Drain,
        BbrMode::ProbeBw => Mode::ProbeBw,
        BbrMode::ProbeRtt => Mode::ProbeRtt,
    }
}

/// Straight-line BBR. The bandwidth filter keeps every sample and takes the
/// maximum over the last `BTLBW_FILTER_LEN` rounds at the latest update.
#[derive(Debug, Clone)]
struct RefBbr {
    state: Mode,
    samples: Vec<(u64, f64)>,
    filter_round: u64,
    bw_divisor: f64,
    rtprop: f64,
    rtprop_stamp: f64,
    rtprop_expired: bool,
    pacing_rate: f64,
    pacing_gain: f64,
    cwnd_gain: f64,
    cycle_index: usize,
    cycle_stamp: f64,
    full_bw: f64,
    full_bw_count: u32,
    filled_pipe: bool,
    delivered: u64,
    next_round_delivered: u64,
    round_count: u64,
    round_start: bool,
    probe_rtt_done_stamp: f64,
    probe_rtt_round_done: bool,
    prior_cwnd: f64,
    send_quantum: f64,
    packet_conservation: bool,
    idle_restart: bool,
    target_cwnd: f64,
    smss: f64,
    initial_cwnd: f64,
    rng: RngStream,
}

impl RefBbr {
    fn raw_bw(&self) -> f64 {
        let mut best = 0.0;
        for &(t, v) in &self.samples {
            if t + BTLBW_FILTER_LEN > self.filter_round && v > best {
                best = v;
            }
        }
        best
    }

    fn btl_bw(&self) -> f64 {
        self.raw_bw() / self.bw_divisor
    }

    fn update_on_ack(&mut self, a: &BbrAck, cwnd: &mut f64) -> Option<u64> {
        // BBR_Update_Model_And_State
        self.update_btlbw(a);
        self.check_cycle_phase(a);
        self.check_full_pipe(a);
        self.check_drain(a);
        self.update_rtprop(a);
        let mark = self.check_probe_rtt(a, cwnd);
        // BBR_Update_Control_Parameters
        self.set_pacing_rate_with_gain(self.pacing_gain);
        self.set_send_quantum();
        self.set_cwnd(a, cwnd);
        mark
    }

    fn update_btlbw(&mut self, a: &BbrAck) {
        self.delivered = a.delivered;
        let Some(rs) = a.rate else {
            self.round_start = false;
            return;
        };
        // BBR_Update_Round, with packet.delivered taken from the rate sample
        if rs.prior_delivered >= self.next_round_delivered {
            self.next_round_delivered = self.delivered;
            self.round_count += 1;
            self.round_start = true;
            self.packet_conservation = false;
        } else {
            self.round_start = false;
        }
        if rs.delivery_rate >= self.raw_bw() || !rs.is_app_limited {
            self.samples.push((self.round_count, rs.delivery_rate));
            self.filter_round = self.round_count;
        }
    }

    fn inflight(&self, gain: f64) -> f64 {
        if self.rtprop == f64::INFINITY {
            return self.initial_cwnd;
        }
        let quanta = 3.0 * self.send_quantum;
        let estimated_bdp = self.btl_bw() * self.rtprop;
        gain * estimated_bdp + quanta
    }

    fn check_cycle_phase(&mut self, a: &BbrAck) {
        if self.state == Mode::ProbeBw && self.is_next_cycle_phase(a) {
            self.advance_cycle_phase(a.now);
        }
    }

    fn is_next_cycle_phase(&self, a: &BbrAck) -> bool {
        let is_full_length = (a.now - self.cycle_stamp) > self.rtprop;
        if self.pacing_gain == 1.0 {
            return is_full_length;
        }
        if self.pacing_gain > 1.0 {
            return is_full_length && (a.lost > 0.0 || a.prior_inflight >= self.inflight(self.pacing_gain));
        }
        is_full_length || a.prior_inflight <= self.inflight(1.0)
    }

    fn advance_cycle_phase(&mut self, now: f64) {
        self.cycle_stamp = now;
        self.cycle_index = (self.cycle_index + 1) % 8;
        let pacing_gain_cycle = [5.0 / 4.0, 3.0 / 4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        self.pacing_gain = pacing_gain_cycle[self.cycle_index];
    }

    fn check_full_pipe(&mut self, a: &BbrAck) {
        let app_limited = matches!(a.rate, Some(rs) if rs.is_app_limited);
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
        if self.state == Mode::Startup && self.filled_pipe {
            self.state = Mode::Drain;
            self.pacing_gain = 1.0 / HIGH_GAIN;
            self.cwnd_gain = HIGH_GAIN;
        }
        if self.state == Mode::Drain && a.inflight <= self.inflight(1.0) {
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
        if self.state != Mode::ProbeRtt && self.rtprop_expired && !self.idle_restart {
            self.state = Mode::ProbeRtt;
            self.pacing_gain = 1.0;
            self.cwnd_gain = 1.0;
            self.prior_cwnd = self.save_cwnd(*cwnd, a.in_recovery);
            self.probe_rtt_done_stamp = 0.0;
        }
        let mut mark = None;
        if self.state == Mode::ProbeRtt {
            mark = Some(self.handle_probe_rtt(a, cwnd));
        }
        self.idle_restart = false;
        mark
    }

    fn handle_probe_rtt(&mut self, a: &BbrAck, cwnd: &mut f64) -> u64 {
        let app_limited = (a.delivered + a.inflight as u64).max(1);
        if self.probe_rtt_done_stamp == 0.0 && a.inflight <= 4.0 * self.smss {
            self.probe_rtt_done_stamp = a.now + PROBE_RTT_DURATION;
            self.probe_rtt_round_done = false;
            self.next_round_delivered = self.delivered;
        } else if self.probe_rtt_done_stamp != 0.0 {
            if self.round_start {
                self.probe_rtt_round_done = true;
            }
            if self.probe_rtt_round_done && a.now > self.probe_rtt_done_stamp {
                self.rtprop_stamp = a.now;
                if self.prior_cwnd > *cwnd {
                    *cwnd = self.prior_cwnd;
                }
                if self.filled_pipe {
                    self.enter_probe_bw(a.now);
                } else {
                    self.state = Mode::Startup;
                    self.pacing_gain = HIGH_GAIN;
                    self.cwnd_gain = HIGH_GAIN;
                }
            }
        }
        app_limited
    }

    fn enter_probe_bw(&mut self, now: f64) {
        self.state = Mode::ProbeBw;
        self.pacing_gain = 1.0;
        self.cwnd_gain = 2.0;
        self.cycle_index = 8 - 1 - self.rng.int_in_range(0, 6) as usize;
        self.advance_cycle_phase(now);
    }

    fn set_pacing_rate_with_gain(&mut self, pacing_gain: f64) {
        let rate = pacing_gain * self.btl_bw();
        if self.filled_pipe || rate > self.pacing_rate {
            self.pacing_rate = rate;
        }
    }

    fn set_send_quantum(&mut self) {
        let mbps = self.pacing_rate * 8.0 / 1.0e6;
        if mbps < 1.2 {
            self.send_quantum = self.smss;
        } else if mbps < 24.0 {
            self.send_quantum = 2.0 * self.smss;
        } else {
            self.send_quantum = (self.pacing_rate * 0.001).min(64.0 * 1024.0);
        }
    }

    fn set_cwnd(&mut self, a: &BbrAck, cwnd: &mut f64) {
        self.target_cwnd = self.inflight(self.cwnd_gain);
        if a.lost > 0.0 {
            *cwnd = (*cwnd - a.lost).max(self.smss);
        }
        if self.packet_conservation {
            *cwnd = cwnd.max(a.inflight + a.newly_delivered);
        }
        if !self.packet_conservation {
            if self.filled_pipe {
                *cwnd = (*cwnd + a.newly_delivered).min(self.target_cwnd);
            } else if *cwnd < self.target_cwnd || (self.delivered as f64) < self.initial_cwnd {
                *cwnd += a.newly_delivered;
            }
            *cwnd = cwnd.max(4.0 * self.smss);
        }
        if self.state == Mode::ProbeRtt {
            *cwnd = cwnd.min(4.0 * self.smss);
        }
    }

    fn save_cwnd(&self, cwnd: f64, in_loss_recovery: bool) -> f64 {
        if !in_loss_recovery && self.state != Mode::ProbeRtt {
            cwnd
        } else {
            self.prior_cwnd.max(cwnd)
        }
    }

    fn on_transmit(&mut self, packets_in_flight: u64, app_limited: bool) {
        if packets_in_flight == 0 && app_limited {
            self.idle_restart = true;
            if self.state == Mode::ProbeBw {
                self.set_pacing_rate_with_gain(1.0);
            }
        }
    }
}

fn random_bbr(g: &mut ChaCha8Rng, case: usize) -> (BbrState, RefBbr) {
    let smss = 1448.0;
    let stream = format!("oracle-{case}");
    let mut s = BbrState::new(1448, RngStream::new(7, stream.clone()));
    let now0 = g.gen_range(0.0..20.0);
    s.init(now0, if g.gen_bool(0.8) { Some(g.gen_range(0.001..0.1)) } else { None });

    let mut samples = Vec::new();
    let rounds = g.gen_range(0..30u64);
    let mut round = 0;
    for _ in 0..g.gen_range(0..15) {
        round += g.gen_range(0..=rounds / 4 + 1);
        let v = g.gen_range(1.0e5..2.0e7);
        s.btlbw_filter.update(round, v);
        samples.push((round, v));
    }
    s.round_count = round;
    s.mode = [BbrMode::Startup, BbrMode::Drain, BbrMode::ProbeBw, BbrMode::ProbeRtt][g.gen_range(0..4)];
    s.bw_divisor = if g.gen_bool(0.8) { 1.0 } else { g.gen_range(1..=3) as f64 };
    s.rtprop = if g.gen_bool(0.05) { f64::INFINITY } else { g.gen_range(0.001..0.1) };
    s.rtprop_stamp = g.gen_range(0.0..now0 + 1.0);
    s.rtprop_expired = g.gen_bool(0.5);
    s.pacing_rate = g.gen_range(0.0..3.0e7);
    s.cycle_index = g.gen_range(0..8);
    s.pacing_gain = match s.mode {
        BbrMode::Startup => HIGH_GAIN,
        BbrMode::Drain => 1.0 / HIGH_GAIN,
        BbrMode::ProbeBw => GAIN_CYCLE[s.cycle_index],
        BbrMode::ProbeRtt => 1.0,
    };
    s.cwnd_gain = match s.mode {
        BbrMode::ProbeBw => 2.0,
        BbrMode::ProbeRtt => 1.0,
        _ => HIGH_GAIN,
    };
    s.cycle_stamp = g.gen_range(0.0..now0 + 1.0);
    s.full_bw = g.gen_range(0.0..2.0e7);
    s.full_bw_count = g.gen_range(0..3);
    s.filled_pipe = s.mode != BbrMode::Startup || g.gen_bool(0.2);
    s.delivered = g.gen_range(0..10_000_000);
    s.next_round_delivered = s.delivered.saturating_sub(g.gen_range(0..200_000));
    s.round_start = g.gen_bool(0.5);
    s.probe_rtt_done_stamp = if g.gen_bool(0.5) { 0.0 } else { g.gen_range(0.0..now0 + 1.0) };
    s.probe_rtt_round_done = g.gen_bool(0.5);
    s.prior_cwnd = if g.gen_bool(0.3) { 0.0 } else { g.gen_range(4.0..200.0) * smss };
    s.send_quantum = [smss, 2.0 * smss, g.gen_range(1.0..65536.0)][g.gen_range(0..3)];
    s.packet_conservation = g.gen_bool(0.2);
    s.idle_restart = g.gen_bool(0.1);
    s.target_cwnd = g.gen_range(0.0..400.0) * smss;

    let reference = RefBbr {
        state: mode_of(s.mode),
        samples,
        filter_round: round,
        bw_divisor: s.bw_divisor,
        rtprop: s.rtprop,
        rtprop_stamp: s.rtprop_stamp,
        rtprop_expired: s.rtprop_expired,
        pacing_rate: s.pacing_rate,
        pacing_gain: s.pacing_gain,
        cwnd_gain: s.cwnd_gain,
        cycle_index: s.cycle_index,
        cycle_stamp: s.cycle_stamp,
        full_bw: s.full_bw,
        full_bw_count: s.full_bw_count,
        filled_pipe: s.filled_pipe,
        delivered: s.delivered,
        next_round_delivered: s.next_round_delivered,
        round_count: s.round_count,
        round_start: s.round_start,
        probe_rtt_done_stamp: s.probe_rtt_done_stamp,
        probe_rtt_round_done: s.probe_rtt_round_done,
        prior_cwnd: s.prior_cwnd,
        send_quantum: s.send_quantum,
        packet_conservation: s.packet_conservation,
        idle_restart: s.idle_restart,
        target_cwnd: s.target_cwnd,
        smss,
        initial_cwnd: s.initial_cwnd,
        rng: RngStream::new(7, stream),
    };
    (s, reference)
}

fn random_bbr_ack(g: &mut ChaCha8Rng, s: &BbrState) -> BbrAck {
    let smss = 1448.0;
    let newly = g.gen_range(0..=4) as f64 * smss;
    let delivered = s.delivered + newly as u64;
    let rate = g.gen_bool(0.85).then(|| RateSample {
        delivery_rate: g.gen_range(1.0e5..2.5e7),
        delivered: g.gen_range(1..100) * 1448,
        interval: SimTime::from_millis(g.gen_range(1..100)),
        prior_delivered: if g.gen_bool(0.5) {
            s.next_round_delivered + g.gen_range(0..10_000)
        } else {
            s.next_round_delivered.saturating_sub(g.gen_range(1..10_000))
        },
        is_app_limited: g.gen_bool(0.2),
    });
    let inflight = g.gen_range(0.0..300.0f64).floor() * smss;
    BbrAck {
        now: s.rtprop_stamp.max(s.cycle_stamp) + g.gen_range(0.0..12.0),
        delivered,
        newly_delivered: newly,
        lost: if g.gen_bool(0.2) { g.gen_range(1..=3) as f64 * smss } else { 0.0 },
        prior_inflight: inflight + newly,
        inflight,
        rtt: g.gen_bool(0.8).then(|| g.gen_range(0.001..0.12)),
        rate,
        in_recovery: g.gen_bool(0.2),
    }
}

fn bbr_matches(case: usize, s: &BbrState, r: &RefBbr) {
    assert_eq!(mode_of(s.mode), r.state, "case {case}: mode");
    check(case, "btl_bw", s.btl_bw(), r.btl_bw());
    check(case, "rtprop", s.rtprop, r.rtprop);
    check(case, "rtprop_stamp", s.rtprop_stamp, r.rtprop_stamp);
    assert_eq!(s.rtprop_expired, r.rtprop_expired, "case {case}: rtprop_expired");
    check(case, "pacing_rate", s.pacing_rate, r.pacing_rate);
    check(case, "pacing_gain", s.pacing_gain, r.pacing_gain);
    check(case, "cwnd_gain", s.cwnd_gain, r.cwnd_gain);
    assert_eq!(s.cycle_index, r.cycle_index, "case {case}: cycle_index");
    check(case, "cycle_stamp", s.cycle_stamp, r.cycle_stamp);
    check(case, "full_bw", s.full_bw, r.full_bw);
    assert_eq!(s.full_bw_count, r.full_bw_count, "case {case}: full_bw_count");
    assert_eq!(s.filled_pipe, r.filled_pipe, "case {case}: filled_pipe");
    assert_eq!(s.delivered, r.delivered, "case {case}: delivered");
    assert_eq!(s.next_round_delivered, r.next_round_delivered, "case {case}: next_round_delivered");
    assert_eq!(s.round_count, r.round_count, "case {case}: round_count");
    assert_eq!(s.round_start, r.round_start, "case {case}: round_start");
    check(case, "probe_rtt_done_stamp", s.probe_rtt_done_stamp, r.probe_rtt_done_stamp);
    assert_eq!(s.probe_rtt_round_done, r.probe_rtt_round_done, "case {case}: probe_rtt_round_done");
    check(case, "prior_cwnd", s.prior_cwnd, r.prior_cwnd);
    check(case, "send_quantum", s.send_quantum, r.send_quantum);
    assert_eq!(s.packet_conservation, r.packet_conservation, "case {case}: packet_conservation");
    assert_eq!(s.idle_restart, r.idle_restart, "case {case}: idle_restart");
    check(case, "target_cwnd", s.target_cwnd, r.target_cwnd);
}

#[test]
pub fn bbr_matches_reference() {
    let mut g = rng(7);
    for case in 0..CASES {
        let (mut s, mut reference) = random_bbr(&mut g, case);
        bbr_matches(case, &s, &reference);
        let mut cwnd = g.gen_range(1.0..300.0f64).floor() * 1448.0;
        let mut cwnd_ref = cwnd;
        for step in 0..4 {
            if g.gen_bool(0.15) {
                let in_flight = if g.gen_bool(0.5) { 0 } else { g.gen_range(1..100) };
                let app_limited = g.gen_bool(0.5);
                s.on_transmit(in_flight, app_limited);
                reference.on_transmit(in_flight, app_limited);
            } else {
                let a = random_bbr_ack(&mut g, &s);
                let got = s.on_ack(&a, &mut cwnd);
                let want = reference.update_on_ack(&a, &mut cwnd_ref);
                assert_eq!(got, want, "case {case} step {step}: app-limited mark");
            }
            check(case, "cwnd", cwnd, cwnd_ref);
            bbr_matches(case, &s, &reference);
        }
        let in_rec = g.gen_bool(0.5);
        check(case, "save_cwnd", s.save_cwnd(cwnd, in_rec), reference.save_cwnd(cwnd, in_rec));
    }
}

// ---------------------------------------------------------------- C-MPBBR

#[derive(Debug, Clone, Copy)]
struct RefCmp {
    stop_lowest_bw_sf_count: u32,
    last_number_of_sfs_in_btlneck: u32,
    final_number_of_sfs_in_btlneck: u32,
}

/// Both goals, evaluated at ProbeBW cycle index 3. Returns whether this
/// subflow closes.
fn ref_cmpbbr(st: &mut RefCmp, this: usize, bw_of_sf: &[f64], del_rt_of_sf: &[f64]) -> bool {
    let beta = 40.0;
    let mut total_del_rt = 0.0;
    let mut lowest_bw_among_all_sfs = f64::INFINITY;
    let mut highest_bw_among_all_sfs = 0.0;
    let mut total_number_of_sfs = 0;
    for i in 0..bw_of_sf.len() {
        total_number_of_sfs += 1;
        total_del_rt += del_rt_of_sf[i];
        if lowest_bw_among_all_sfs > bw_of_sf[i] {
            lowest_bw_among_all_sfs = bw_of_sf[i];
        }
        if highest_bw_among_all_sfs < bw_of_sf[i] {
            highest_bw_among_all_sfs = bw_of_sf[i];
        }
    }
    let threshold = highest_bw_among_all_sfs * (1.0 - beta / 100.0);
    if threshold > total_del_rt
        && st.last_number_of_sfs_in_btlneck < 2
        && total_number_of_sfs > 1
        && lowest_bw_among_all_sfs != highest_bw_among_all_sfs
    {
        st.stop_lowest_bw_sf_count += 1;
    } else {
        st.stop_lowest_bw_sf_count = 0;
    }
    let mut close = false;
    if st.stop_lowest_bw_sf_count >= 5 && total_number_of_sfs > 1 && bw_of_sf[this] == lowest_bw_among_all_sfs {
        st.stop_lowest_bw_sf_count = 5;
        close = true;
    }

    let alpha = 20.0;
    let mut number_of_sfs_in_btlneck = 0;
    let bw_lower_limit = bw_of_sf[this] * (1.0 - alpha / 100.0);
    let bw_upper_limit = bw_of_sf[this] * (1.0 + alpha / 100.0);
    for &bw in bw_of_sf {
        if bw >= bw_lower_limit && bw <= bw_upper_limit {
            number_of_sfs_in_btlneck += 1;
        }
    }
    if number_of_sfs_in_btlneck > 1 && st.last_number_of_sfs_in_btlneck > 1 {
        st.final_number_of_sfs_in_btlneck = number_of_sfs_in_btlneck;
    } else if number_of_sfs_in_btlneck == 1 && st.last_number_of_sfs_in_btlneck > 1 {
        st.final_number_of_sfs_in_btlneck = st.last_number_of_sfs_in_btlneck;
    } else {
        st.final_number_of_sfs_in_btlneck = 1;
    }
    st.last_number_of_sfs_in_btlneck = number_of_sfs_in_btlneck;
    close
}

#[test]
pub fn cmpbbr_matches_reference() {
    let mut g = rng(8);
    let levels = [1.0e6, 5.0e6, 1.0e7, 1.1e7, 1.25e7];
    for case in 0..CASES {
        let n = if g.gen_bool(0.8) { 2 } else { g.gen_range(1..=4) };
        let all: Vec<SubflowBw> = (0..n)
            .map(|_| SubflowBw {
                bw: if g.gen_bool(0.5) { levels[g.gen_range(0..levels.len())] } else { g.gen_range(1.0e5..2.0e7) },
                del_rt: g.gen_range(0.0..2.0e7),
            })
            .collect();
        let mut s = CmpbbrState {
            stop_lowest_bw_sf_count: g.gen_range(0..=5),
            last_number_of_sfs_in_btlneck: g.gen_range(0..=n as u32),
            final_number_of_sfs_in_btlneck: g.gen_range(1..=n as u32),
            ..CmpbbrState::default()
        };
        let mut reference = RefCmp {
            stop_lowest_bw_sf_count: s.stop_lowest_bw_sf_count,
            last_number_of_sfs_in_btlneck: s.last_number_of_sfs_in_btlneck,
            final_number_of_sfs_in_btlneck: s.final_number_of_sfs_in_btlneck,
        };
        let this = g.gen_range(0..n);
        let bws: Vec<f64> = all.iter().map(|x| x.bw).collect();
        let rates: Vec<f64> = all.iter().map(|x| x.del_rt).collect();
        let out = s.probe_hook(this, &all);
        let close = ref_cmpbbr(&mut reference, this, &bws, &rates);
        assert_eq!(out.close, close, "case {case}: close");
        assert_eq!(out.final_number_of_sfs_in_btlneck, reference.final_number_of_sfs_in_btlneck, "case {case}");
        assert_eq!(s.stop_lowest_bw_sf_count, reference.stop_lowest_bw_sf_count, "case {case}");
        assert_eq!(s.last_number_of_sfs_in_btlneck, reference.last_number_of_sfs_in_btlneck, "case {case}");
        assert_eq!(s.final_number_of_sfs_in_btlneck, reference.final_number_of_sfs_in_btlneck, "case {case}");
    }
}
