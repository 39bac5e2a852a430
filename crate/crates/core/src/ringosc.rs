//! Ring oscillators of `n` inverters with transport delay and inertial
//! pulse rejection, plus stitching and timescale measurement of their
//! captured waveforms.
//!
//! At release every node whose value disagrees with the inverse of its
//! input flips. Each input edge then proposes an output edge one gate delay
//! later; a proposal closer than `min_pulse` to the previous output edge
//! cancels it instead (both vanish). When `min_pulse` exceeds the gate
//! delay a cancelled edge may already have been consumed downstream, so
//! every gate keeps an action log that lets the downstream effects be
//! undone.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calibrate::{runs, smooth, Estimate};
use crate::chain::{CaptureFrame, Tdl};
use crate::error::{Error, Result};
use crate::fit;
use crate::rng::{self, domain};
use crate::sweep::run_continuous;
use crate::time::Time;
use crate::waveform::DigitalWaveform;

/// Node levels written as a string of `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString(pub Vec<bool>);

impl BitString {
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidSpec(format!("state must be a string of 0 and 1, got {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }

    /// The consistent state with one wavefront: alternating levels except
    /// for a single defect between the last node and the first.
    pub fn single_wavefront(n: usize) -> Self {
        BitString((0..n).map(|i| i % 2 == 0).collect())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|&b| write!(f, "{}", if b { '1' } else { '0' }))
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitString::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    pub n: usize,
    pub gate_delay_ps: f64,
    /// Static gate-to-gate spread.
    #[serde(default)]
    pub gate_delay_sigma_ps: f64,
    /// Output rise delay minus fall delay, split evenly around the gate delay.
    #[serde(default)]
    pub rise_fall_asymmetry_ps: f64,
    #[serde(default = "default_min_pulse")]
    pub min_pulse_ps: f64,
    pub initial_state: BitString,
    #[serde(default)]
    pub release_ps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

fn default_min_pulse() -> f64 {
    50.0
}

fn default_max_events() -> usize {
    10_000_000
}

impl RingSpec {
    pub fn new(n: usize, gate_delay_ps: f64, initial_state: BitString) -> Self {
        RingSpec {
            n,
            gate_delay_ps,
            gate_delay_sigma_ps: 0.0,
            rise_fall_asymmetry_ps: 0.0,
            min_pulse_ps: default_min_pulse(),
            initial_state,
            release_ps: 0.0,
            seed: 0,
            max_events: default_max_events(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n == 0 {
            return bad("ring needs at least one gate".into());
        }
        if self.initial_state.0.len() != self.n {
            return bad(format!("initial state has {} nodes, ring has {}", self.initial_state.0.len(), self.n));
        }
        if !(self.gate_delay_ps - 0.5 * self.rise_fall_asymmetry_ps.abs() > 0.0) {
            return bad("gate delays must stay positive for both output polarities".into());
        }
        if !(self.gate_delay_sigma_ps >= 0.0 && self.min_pulse_ps >= 0.0) {
            return bad("sigma and min_pulse must be non-negative".into());
        }
        Ok(())
    }

    /// Per-gate `(rise, fall)` output delays.
    pub fn gate_delays(&self) -> Result<Vec<(Time, Time)>> {
        self.validate()?;
        let half = 0.5 * self.rise_fall_asymmetry_ps;
        Ok((0..self.n)
            .map(|i| {
                let mut rng = rng::stream(self.seed, domain::RING_DELAY, i as u64);
                let base = rng::normal_where(&mut rng, self.gate_delay_ps, self.gate_delay_sigma_ps, |d| d - half.abs() >= 1.0);
                (Time::from_ps(base + half), Time::from_ps(base - half))
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Pushed(i64),
    Popped(i64),
    Consumed,
}

struct Gate {
    rise: i64,
    fall: i64,
    init: bool,
    out: Vec<i64>,
    log: Vec<Action>,
}

impl Gate {
    fn level(&self) -> bool {
        self.init ^ (self.out.len() % 2 == 1)
    }
}

struct Engine {
    gates: Vec<Gate>,
    // delivered[i]: output edges of gate i already consumed by gate i + 1.
    delivered: Vec<usize>,
    min_pulse: i64,
    current: Option<(usize, usize)>,
    void: bool,
}

impl Engine {
    fn down(&self, g: usize) -> usize {
        (g + 1) % self.gates.len()
    }

    fn up(&self, g: usize) -> usize {
        (g + self.gates.len() - 1) % self.gates.len()
    }

    fn next_event(&self) -> Option<(i64, usize)> {
        (0..self.gates.len())
            .filter_map(|i| self.gates[i].out.get(self.delivered[i]).map(|&t| (t, self.down(i))))
            .min()
    }

    fn process(&mut self, g: usize, t: i64) {
        let up = self.up(g);
        self.delivered[up] += 1;
        let gate = &self.gates[g];
        let p = t + if gate.level() { gate.fall } else { gate.rise };
        self.current = Some((g, gate.log.len()));
        self.void = false;
        match self.gates[g].out.last().copied() {
            Some(last) if p - last < self.min_pulse.max(1) => {
                self.gates[g].out.pop();
                self.unsend(g);
                if self.void {
                    if let Some(a) = self.gates[g].log.iter_mut().rev().find(|a| **a == Action::Pushed(last)) {
                        *a = Action::Consumed;
                    }
                } else {
                    self.gates[g].log.push(Action::Popped(last));
                }
            }
            _ => {
                self.gates[g].out.push(p);
                self.gates[g].log.push(Action::Pushed(p));
            }
        }
        self.current = None;
    }

    /// Gate `g` just lost its last output edge; if that edge had been
    /// consumed downstream, undo the consumer's action.
    fn unsend(&mut self, g: usize) {
        if self.delivered[g] > self.gates[g].out.len() {
            self.delivered[g] -= 1;
            self.retract(self.down(g));
        }
    }

    fn retract(&mut self, h: usize) {
        if self.current == Some((h, self.gates[h].log.len())) {
            self.void = true;
            return;
        }
        match self.gates[h].log.pop() {
            Some(Action::Pushed(_)) => {
                self.gates[h].out.pop();
                self.unsend(h);
            }
            Some(Action::Popped(m)) => self.gates[h].out.push(m),
            Some(Action::Consumed) | None => {}
        }
    }
}

/// Node waveforms of a simulated ring. Node `i` is the output of gate `i`,
/// driven by node `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingTrace {
    pub nodes: Vec<DigitalWaveform>,
    pub release: Time,
    pub end: Time,
    pub gate_delays: Vec<(Time, Time)>,
    pub events: usize,
}

impl RingTrace {
    /// Edges of node `i` in `[lo, hi)`.
    pub fn edge_count(&self, i: usize, lo: Time, hi: Time) -> usize {
        self.nodes[i].edges_between(lo, hi).len()
    }

    /// Time for a wavefront to pass every gate once as a rising and once
    /// as a falling edge, after which it returns to any node with its
    /// original polarity.
    pub fn round_trip(&self) -> Time {
        self.gate_delays.iter().fold(Time::ZERO, |acc, d| acc + d.0 + d.1)
    }

    /// Edge counts of node `i` in consecutive round trips after release.
    pub fn edges_per_round_trip(&self, i: usize) -> Vec<usize> {
        let rt = self.round_trip();
        let mut out = Vec::new();
        let mut lo = self.release;
        while lo + rt <= self.end {
            out.push(self.edge_count(i, lo, lo + rt));
            lo += rt;
        }
        out
    }

    pub fn node_csv(&self, i: usize) -> String {
        self.nodes[i].to_csv()
    }
}

/// Simulates from release until `end`; edges after `end` are dropped.
pub fn simulate_ring(spec: &RingSpec, end: Time) -> Result<RingTrace> {
    let delays = spec.gate_delays()?;
    let n = spec.n;
    let release = Time::from_ps(spec.release_ps);
    let init = &spec.initial_state.0;
    let mut engine = Engine {
        gates: (0..n)
            .map(|i| Gate { rise: delays[i].0.fs(), fall: delays[i].1.fs(), init: init[i], out: Vec::new(), log: Vec::new() })
            .collect(),
        delivered: vec![0; n],
        min_pulse: Time::from_ps(spec.min_pulse_ps).fs(),
        current: None,
        void: false,
    };
    for i in 0..n {
        if init[i] == init[(i + n - 1) % n] {
            engine.gates[i].out.push(release.fs());
        }
    }
    let slowest = delays.iter().map(|d| d.0.max(d.1)).max().expect("n >= 1");
    let horizon = (end + slowest + Time::from_ps(spec.min_pulse_ps)).fs();
    let mut events = 0;
    while let Some((t, g)) = engine.next_event() {
        if t > horizon {
            break;
        }
        events += 1;
        if events > spec.max_events {
            return Err(Error::EventOverflow { limit: spec.max_events });
        }
        engine.process(g, t);
    }
    let nodes = engine
        .gates
        .iter()
        .map(|g| DigitalWaveform::from_toggles(g.init, g.out.iter().map(|&t| Time(t)).filter(|&t| t <= end)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RingTrace { nodes, release, end, gate_delays: delays, events })
}

/// Frames laid end to end in time order, each contributing its first
/// `taps_per_frame` taps (the taps covering one capture period).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StitchedSeries {
    pub bits: Vec<bool>,
    pub taps_per_frame: usize,
    pub frames: usize,
}

impl StitchedSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,bit\n");
        for (i, &b) in self.bits.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", u8::from(b)));
        }
        s
    }
}

/// Number of whole carry intervals in one capture period.
pub fn nominal_taps_per_frame(capture_period: Time, tau_ps: f64) -> usize {
    (capture_period.ps() / tau_ps).floor() as usize
}

pub fn stitch_frames(frames: &[CaptureFrame], taps_per_frame: usize) -> Result<StitchedSeries> {
    if taps_per_frame == 0 || frames.iter().any(|f| f.k() < taps_per_frame) {
        return Err(Error::InvalidSpec(format!("every frame must hold at least {taps_per_frame} > 0 taps")));
    }
    let bits = frames.iter().flat_map(|f| f.bits[..taps_per_frame].iter().rev().copied()).collect();
    Ok(StitchedSeries { bits, taps_per_frame, frames: frames.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimescaleSpec {
    /// Node whose waveform is captured.
    #[serde(default)]
    pub node: usize,
    pub runs: usize,
    pub frames_per_run: usize,
    pub capture_period_ps: f64,
    #[serde(default = "default_min_run")]
    pub min_run: usize,
}

fn default_min_run() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeTimescale {
    pub n: usize,
    pub pulses: usize,
    /// Mean captured pulse width.
    pub width_ps: f64,
    pub width_std_ps: f64,
    pub per_node_ps: f64,
    /// Spread of the per-node value, including carry-time uncertainty.
    pub per_node_err_ps: f64,
    /// Standard error of the per-node mean.
    pub per_node_se_ps: f64,
    pub mean_head_index: f64,
    pub mean_tail_index: f64,
}

/// Captures one node in repeated runs and converts complete high pulses to
/// time with separate carry times for the two edges: a pulse on taps
/// `a..=b` is `(b + 1/2) tau_rise - (a - 1/2) tau_fall` wide. In the
/// single-wavefront state a node stays high for one loop delay, so the
/// width divided by `n` is the mean gate delay.
pub fn measure_node_timescale(
    ring: &RingSpec,
    tdl: &Tdl,
    tau_rise: Estimate,
    tau_fall: Estimate,
    spec: &TimescaleSpec,
) -> Result<NodeTimescale> {
    if spec.node >= ring.n || spec.runs == 0 || spec.frames_per_run == 0 {
        return Err(Error::InvalidSpec("timescale measurement needs a valid node, runs and frames".into()));
    }
    let period = Time::from_ps(spec.capture_period_ps);
    let release = Time::from_ps(ring.release_ps);
    let first_start = release + tdl.lookback();
    let end = first_start + period * (spec.frames_per_run as i64 + 1) * spec.runs as i64 + period;
    let trace = simulate_ring(ring, end)?;
    let node = &trace.nodes[spec.node];

    let k = tdl.k();
    let (mut widths, mut heads, mut tails) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..spec.runs as u64 {
        let mut rng = rng::stream(ring.seed, domain::RING_RELEASE, r);
        let jitter = Time(rng.random_range(0..period.fs()));
        let start = first_start + period * (r as i64 * (spec.frames_per_run as i64 + 1)) + jitter;
        let data = run_continuous(node, tdl, start, period, spec.frames_per_run)?;
        for f in &data.frames {
            for run in runs(&smooth(&f.bits, spec.min_run)) {
                if run.level && run.len >= spec.min_run && run.start > 1 && run.end() < k {
                    let (a, b) = (run.start as f64, run.end() as f64);
                    widths.push((b + 0.5) * tau_rise.value - (a - 0.5) * tau_fall.value);
                    heads.push(b);
                    tails.push(a);
                }
            }
        }
    }
    if widths.len() < 2 {
        return Err(Error::InsufficientData(format!("only {} complete pulses captured", widths.len())));
    }
    let n = ring.n as f64;
    let width = fit::mean(&widths);
    let width_std = fit::std_dev(&widths);
    let (b, a) = (fit::mean(&heads) + 0.5, fit::mean(&tails) - 0.5);
    let total = (width_std.powi(2) + (b * tau_rise.std_err).powi(2) + (a * tau_fall.std_err).powi(2)).sqrt();
    let se = (width_std.powi(2) / widths.len() as f64 + (b * tau_rise.std_err).powi(2) + (a * tau_fall.std_err).powi(2)).sqrt();
    Ok(NodeTimescale {
        n: ring.n,
        pulses: widths.len(),
        width_ps: width,
        width_std_ps: width_std,
        per_node_ps: width / n,
        per_node_err_ps: total / n,
        per_node_se_ps: se / n,
        mean_head_index: fit::mean(&heads),
        mean_tail_index: fit::mean(&tails),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, RegisterSpec};
    use crate::waveform::Edge;
    use proptest::prelude::*;

    fn ps(v: i64) -> Time {
        Time::from_ps_int(v)
    }

    fn ring(n: usize, tau: f64, state: &str) -> RingSpec {
        RingSpec::new(n, tau, BitString::parse(state).unwrap())
    }

    fn periods(w: &DigitalWaveform) -> Vec<i64> {
        let rising: Vec<i64> = w.edges().iter().filter(|e| e.is_rising()).map(|e| e.time.fs()).collect();
        rising.windows(2).map(|p| p[1] - p[0]).collect()
    }

    #[test]
    fn single_defect_ring_example() {
        let t = simulate_ring(&ring(3, 100.0, "001"), ps(10_000)).unwrap();
        for node in &t.nodes {
            assert!(periods(node).iter().all(|&p| p == 600_000));
            // High for N * tau = 300 ps in every 600 ps.
            let high = node.high_time(ps(4_000), ps(10_000));
            assert_eq!(high, ps(3_000));
        }
        // Only node 2 disagrees with its input at release.
        assert_eq!(t.nodes[1].edges()[0].time, ps(0));
        assert!(t.nodes[0].edges()[0].time > ps(0));
    }

    #[test]
    fn single_inverter_oscillates_at_twice_its_delay() {
        let t = simulate_ring(&ring(1, 240.0, "0"), ps(5_000)).unwrap();
        let e = t.nodes[0].edges();
        assert_eq!(e[0], Edge::new(ps(0), true));
        assert!(e.windows(2).all(|p| p[1].time - p[0].time == ps(240)));
    }

    #[test]
    fn single_inverter_below_inertial_limit_dies() {
        let mut s = ring(1, 40.0, "0");
        s.min_pulse_ps = 50.0;
        let t = simulate_ring(&s, ps(5_000)).unwrap();
        assert!(t.nodes[0].edges().len() <= 1, "{:?}", t.nodes[0].edges());
    }

    #[test]
    fn consistent_even_ring_is_static() {
        let t = simulate_ring(&ring(4, 100.0, "0101"), ps(5_000)).unwrap();
        assert!(t.nodes.iter().all(|w| w.edges().is_empty()));
    }

    #[test]
    fn loop_delay_uses_realized_gate_delays() {
        let mut s = ring(19, 240.0, &BitString::single_wavefront(19).to_string());
        s.gate_delay_sigma_ps = 5.0;
        s.seed = 4;
        let t = simulate_ring(&s, ps(100_000)).unwrap();
        let loop_fs: i64 = t.gate_delays.iter().map(|d| d.0.fs()).sum();
        assert!(periods(&t.nodes[0]).iter().all(|&p| p == 2 * loop_fs));
    }

    #[test]
    fn all_low_start_persists_without_rejection() {
        let mut s = ring(3, 240.0, "000");
        s.min_pulse_ps = 0.0;
        let t = simulate_ring(&s, ps(100_000)).unwrap();
        let counts = t.edges_per_round_trip(0);
        assert!(counts.iter().all(|&c| c == 6), "{counts:?}");
    }

    #[test]
    fn all_low_start_collapses_when_rejection_exceeds_spacing() {
        let mut s = ring(3, 100.0, "000");
        s.gate_delay_sigma_ps = 20.0;
        s.min_pulse_ps = 110.0;
        s.seed = 2;
        let t = simulate_ring(&s, ps(50_000)).unwrap();
        let counts = t.edges_per_round_trip(0);
        assert!(counts[0] > *counts.last().unwrap(), "{counts:?}");
        assert!(*counts.last().unwrap() <= 2, "{counts:?}");
    }

    #[test]
    fn runaway_is_bounded() {
        let mut s = ring(3, 100.0, "001");
        s.max_events = 10;
        assert!(matches!(simulate_ring(&s, ps(100_000)), Err(Error::EventOverflow { limit: 10 })));
    }

    #[test]
    fn state_parsing() {
        assert!(BitString::parse("01x").is_err());
        assert_eq!(BitString::single_wavefront(3).to_string(), "101");
        assert!(ring(3, 100.0, "01").validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pulse_count_never_grows(
            state in prop::collection::vec(any::<bool>(), 3..8),
            asym in 0.0f64..40.0,
            sigma in 0.0f64..30.0,
            seed in any::<u64>(),
        ) {
            let n = state.len();
            let mut s = RingSpec::new(n, 200.0, BitString(state));
            s.rise_fall_asymmetry_ps = asym;
            s.gate_delay_sigma_ps = sigma;
            s.seed = seed;
            let t = simulate_ring(&s, ps(60_000)).unwrap();
            for i in 0..n {
                let counts = t.edges_per_round_trip(i);
                prop_assert!(counts.windows(2).all(|c| c[1] <= c[0]), "node {} {:?}", i, counts);
            }
            for w in &t.nodes {
                prop_assert!(w.edges().windows(2).all(|p| p[1].time - p[0].time >= Time::from_ps(s.min_pulse_ps)));
            }
        }

        #[test]
        fn inertial_ring_never_panics(
            state in prop::collection::vec(any::<bool>(), 1..6),
            tau in 10.0f64..120.0,
            min_pulse in 0.0f64..300.0,
            sigma in 0.0f64..20.0,
            seed in any::<u64>(),
        ) {
            let mut s = RingSpec::new(state.len(), tau, BitString(state));
            s.min_pulse_ps = min_pulse;
            s.gate_delay_sigma_ps = sigma;
            s.seed = seed;
            s.max_events = 200_000;
            let _ = simulate_ring(&s, ps(20_000));
        }

        #[test]
        fn stitched_series_matches_direct_sampling(
            gaps in prop::collection::vec(10i64..3_000, 1..60),
            k_t in 20usize..200,
            frames in 1usize..8,
            offset in 0i64..5_000,
        ) {
            let tau = 5i64;
            let chain = ChainSpec::ideal(k_t + 10, tau as f64);
            let tdl = Tdl::new(chain, RegisterSpec::default()).unwrap();
            let mut t = 0;
            let w = DigitalWaveform::from_toggles(false, gaps.iter().map(|g| { t += g; ps(t) })).unwrap();
            let period = ps(tau * k_t as i64);
            let t0 = ps(10_000 + offset);
            let d = run_continuous(&w, &tdl, t0, period, frames).unwrap();
            let s = stitch_frames(&d.frames, k_t).unwrap();
            // Oracle: series[j] = S(t0 + (j - K_T) * tau).
            for (j, &b) in s.bits.iter().enumerate() {
                prop_assert_eq!(b, w.evaluate(t0 + ps((j as i64 - k_t as i64) * tau)));
            }
        }
    }

    #[test]
    fn nominal_taps_per_frame_example() {
        assert_eq!(nominal_taps_per_frame(ps(5_000), 5.319), 940);
        let f = CaptureFrame::from_str_bits("1100");
        let g = CaptureFrame::from_str_bits("0111");
        let s = stitch_frames(&[f, g], 3).unwrap();
        assert_eq!(s.bits, vec![false, true, true, true, true, false]);
    }

    #[test]
    fn node_timescale_recovers_gate_delay() {
        let mut r = ring(19, 240.0, &BitString::single_wavefront(19).to_string());
        r.gate_delay_sigma_ps = 1.0;
        let tdl = Tdl::new(ChainSpec { tau_fall_ps: 4.54, ..ChainSpec::ideal(1300, 4.91) }, RegisterSpec::default()).unwrap();
        let spec = TimescaleSpec { node: 0, runs: 2, frames_per_run: 64, capture_period_ps: 5000.0, min_run: 3 };
        let est = |v| Estimate { value: v, std_err: 0.0 };
        let m = measure_node_timescale(&r, &tdl, est(4.91), est(4.54), &spec).unwrap();
        let truth: f64 = simulate_ring(&r, ps(1)).unwrap().gate_delays.iter().map(|d| d.0.ps()).sum::<f64>() / 19.0;
        assert!((m.per_node_ps - truth).abs() < 1.0, "{m:?} truth {truth}");
    }
}
