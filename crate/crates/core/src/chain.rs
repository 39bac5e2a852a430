//! Carry-chain tapped delay line.
//!
//! A signal enters through a copy gate (fixed delay plus a low-pass that
//! swallows pulses narrower than `entry_min_pulse`) and then ripples through
//! `k` carry elements. Rising and falling edges see different per-element
//! delays; when a trailing edge overtakes the edge ahead of it the pair
//! annihilates, which is how pulse shrinking eventually erases short pulses.
//! Each element drives a register clocked by a common capture clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::time::Time;
use crate::waveform::{DigitalWaveform, Edge};

/// Longest chain that fits the height of the target device.
pub const MAX_CHAIN_LENGTH: usize = 1740;

/// Slow-element profile at the chain entry.
///
/// Element `k` (1-based) is scaled by a factor falling linearly from
/// `start_factor` at `k = 1` towards 1, reaching 1 after `length` elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnlRamp {
    pub length: usize,
    pub start_factor: f64,
}

impl Default for DnlRamp {
    fn default() -> Self {
        DnlRamp { length: 10, start_factor: 3.0 }
    }
}

impl DnlRamp {
    pub fn factor(&self, k: usize) -> f64 {
        if k == 0 || k > self.length || self.length == 0 {
            return 1.0;
        }
        let remaining = (self.length - (k - 1)) as f64 / self.length as f64;
        1.0 + (self.start_factor - 1.0) * remaining
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub k: usize,
    pub tau_rise_ps: f64,
    pub tau_fall_ps: f64,
    #[serde(default)]
    pub tau_sigma_ps: f64,
    #[serde(default)]
    pub entry_delay_ps: f64,
    #[serde(default)]
    pub entry_min_pulse_ps: f64,
    #[serde(default)]
    pub dnl_ramp: Option<DnlRamp>,
    /// Permit `tau_fall > tau_rise`.
    #[serde(default)]
    pub allow_inverted_asymmetry: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ChainSpec {
    /// Uniform chain without variation, entry effects, or ramp.
    pub fn ideal(k: usize, tau_ps: f64) -> Self {
        ChainSpec {
            k,
            tau_rise_ps: tau_ps,
            tau_fall_ps: tau_ps,
            tau_sigma_ps: 0.0,
            entry_delay_ps: 0.0,
            entry_min_pulse_ps: 0.0,
            dnl_ramp: None,
            allow_inverted_asymmetry: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.k == 0 {
            return bad("chain needs at least one element".into());
        }
        if !(self.tau_rise_ps > 0.0 && self.tau_fall_ps > 0.0) {
            return bad("element delays must be positive".into());
        }
        if !(self.tau_sigma_ps >= 0.0 && self.entry_delay_ps >= 0.0 && self.entry_min_pulse_ps >= 0.0) {
            return bad("sigma, entry delay and entry filter width must be non-negative".into());
        }
        if self.tau_rise_ps < self.tau_fall_ps && !self.allow_inverted_asymmetry {
            return bad(format!(
                "tau_rise ({}) < tau_fall ({}) requires allow_inverted_asymmetry",
                self.tau_rise_ps, self.tau_fall_ps
            ));
        }
        if let Some(r) = &self.dnl_ramp {
            if !(r.start_factor > 0.0) {
                return bad("ramp factor must be positive".into());
            }
        }
        Ok(())
    }
}

/// One inequality a chain configuration failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// `k * tau_fall < T`: the chain does not span a capture period.
    Coverage { k: usize, span_ps: f64, capture_period_ps: f64 },
    /// `k * (tau_rise - tau_fall) >= T_min`: shrinking erases the narrowest pulses.
    Shrinkage { k: usize, shrink_ps: f64, t_min_ps: f64 },
    /// Longer than the device allows.
    Length { k: usize, max: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Coverage { k, span_ps, capture_period_ps } => {
                write!(f, "K*tau = {k}*tau_fall = {span_ps:.1} ps < T = {capture_period_ps} ps")
            }
            Violation::Shrinkage { k, shrink_ps, t_min_ps } => {
                write!(f, "K*(tau_rise-tau_fall) = {k}*dtau = {shrink_ps:.1} ps >= T_min = {t_min_ps} ps")
            }
            Violation::Length { k, max } => write!(f, "K = {k} exceeds the device maximum {max}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConfigReport {
    pub violations: Vec<Violation>,
}

impl ConfigReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Constraint(self))
        }
    }
}

impl fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks the coverage, shrinkage and length bounds. The slower-covering
/// falling edge bounds coverage.
pub fn validate_config(chain: &ChainSpec, capture_period: Time, t_min: Time) -> ConfigReport {
    let mut violations = Vec::new();
    let k = chain.k as f64;
    let span = k * chain.tau_fall_ps;
    if span < capture_period.ps() {
        violations.push(Violation::Coverage { k: chain.k, span_ps: span, capture_period_ps: capture_period.ps() });
    }
    let shrink = k * (chain.tau_rise_ps - chain.tau_fall_ps);
    if shrink >= t_min.ps() {
        violations.push(Violation::Shrinkage { k: chain.k, shrink_ps: shrink, t_min_ps: t_min.ps() });
    }
    if chain.k > MAX_CHAIN_LENGTH {
        violations.push(Violation::Length { k: chain.k, max: MAX_CHAIN_LENGTH });
    }
    ConfigReport { violations }
}

/// Realized per-element delays of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance {
    rise: Vec<Time>,
    fall: Vec<Time>,
    prefix_rise: Vec<Time>,
    prefix_fall: Vec<Time>,
    // Running minima of P_fall(j) - P_rise(j) and its negation, j = 1..=k.
    // Index 0 is unused.
    min_fall_lead: Vec<i64>,
    min_rise_lead: Vec<i64>,
    entry_delay: Time,
    entry_min_pulse: Time,
}

impl ChainInstance {
    pub fn from_delays(rise: Vec<Time>, fall: Vec<Time>, entry_delay: Time, entry_min_pulse: Time) -> Result<Self> {
        if rise.is_empty() || rise.len() != fall.len() {
            return Err(Error::InvalidSpec("rise and fall delay lists must be equal, non-empty length".into()));
        }
        if rise.iter().chain(&fall).any(|d| d.fs() <= 0) {
            return Err(Error::InvalidSpec("element delays must be positive".into()));
        }
        let prefix = |d: &[Time]| {
            let mut acc = Time::ZERO;
            std::iter::once(Time::ZERO)
                .chain(d.iter().map(|x| {
                    acc += *x;
                    acc
                }))
                .collect::<Vec<_>>()
        };
        let prefix_rise = prefix(&rise);
        let prefix_fall = prefix(&fall);
        let mut min_fall_lead = vec![i64::MAX; rise.len() + 1];
        let mut min_rise_lead = vec![i64::MAX; rise.len() + 1];
        for j in 1..=rise.len() {
            let d = (prefix_fall[j] - prefix_rise[j]).fs();
            min_fall_lead[j] = min_fall_lead[j - 1].min(d);
            min_rise_lead[j] = min_rise_lead[j - 1].min(-d);
        }
        Ok(ChainInstance { rise, fall, prefix_rise, prefix_fall, min_fall_lead, min_rise_lead, entry_delay, entry_min_pulse })
    }

    pub fn k(&self) -> usize {
        self.rise.len()
    }

    pub fn rise_delays(&self) -> &[Time] {
        &self.rise
    }

    pub fn fall_delays(&self) -> &[Time] {
        &self.fall
    }

    pub fn entry_delay(&self) -> Time {
        self.entry_delay
    }

    pub fn entry_min_pulse(&self) -> Time {
        self.entry_min_pulse
    }

    /// Cumulative delay from the chain input to tap `k` for an edge that
    /// ends at `level`. `k = 0` is the chain input.
    pub fn prefix(&self, level: bool, k: usize) -> Time {
        if level {
            self.prefix_rise[k]
        } else {
            self.prefix_fall[k]
        }
    }

    pub fn mean_rise(&self) -> Time {
        Time(self.prefix_rise[self.k()].fs() / self.k() as i64)
    }

    pub fn mean_fall(&self) -> Time {
        Time(self.prefix_fall[self.k()].fs() / self.k() as i64)
    }

    /// Largest |P_rise(j) - P_fall(j)| over the chain.
    pub fn max_skew_between_polarities(&self) -> Time {
        let worst = (1..=self.k()).map(|j| (self.prefix_rise[j] - self.prefix_fall[j]).fs().abs()).max().unwrap_or(0);
        Time(worst)
    }

    /// First element at which an edge trailing its predecessor by `gap` at
    /// the chain input has caught up, or `None` if it never does.
    fn first_crossing(&self, leading_level: bool, gap: Time) -> Option<usize> {
        let table = if leading_level { &self.min_fall_lead } else { &self.min_rise_lead };
        // table[1..] is non-increasing.
        let j = 1 + table[1..].partition_point(|&m| m > -gap.fs());
        (j <= self.k()).then_some(j)
    }
}

pub fn sample_chain(spec: &ChainSpec) -> Result<ChainInstance> {
    spec.validate()?;
    let draw = |mean_ps: f64, dom: u64| -> Vec<Time> {
        (1..=spec.k)
            .map(|k| {
                let factor = spec.dnl_ramp.as_ref().map_or(1.0, |r| r.factor(k));
                let mean = mean_ps * factor * 1e3;
                let mut rng = rng::stream(spec.seed, dom, k as u64);
                let d = rng::normal_where(&mut rng, mean, spec.tau_sigma_ps * 1e3, |x| x.round() >= 1.0);
                Time(d.round().max(1.0) as i64)
            })
            .collect()
    };
    ChainInstance::from_delays(
        draw(spec.tau_rise_ps, domain::CHAIN_RISE),
        draw(spec.tau_fall_ps, domain::CHAIN_FALL),
        Time::from_ps(spec.entry_delay_ps),
        Time::from_ps(spec.entry_min_pulse_ps),
    )
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterSpec {
    /// Per-capture clock arrival noise shared by every register.
    #[serde(default)]
    pub clock_jitter_sigma_ps: f64,
    /// Static per-register clock skew.
    #[serde(default)]
    pub skew_sigma_ps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl RegisterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.clock_jitter_sigma_ps >= 0.0 && self.skew_sigma_ps >= 0.0) {
            return Err(Error::InvalidSpec("register sigmas must be non-negative".into()));
        }
        Ok(())
    }

    pub fn instantiate(&self, k: usize) -> Result<RegisterBank> {
        self.validate()?;
        let skew = (1..=k)
            .map(|i| {
                let mut rng = rng::stream(self.seed, domain::REG_SKEW, i as u64);
                Time((rng::normal(&mut rng, self.skew_sigma_ps) * 1e3).round() as i64)
            })
            .collect();
        Ok(RegisterBank { skew, clock_jitter_sigma_ps: self.clock_jitter_sigma_ps, seed: self.seed })
    }
}

/// Realized capture registers: static skews plus a deterministic
/// clock-jitter stream keyed by the nominal capture instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterBank {
    skew: Vec<Time>,
    clock_jitter_sigma_ps: f64,
    seed: u64,
}

impl RegisterBank {
    pub fn ideal(k: usize) -> Self {
        RegisterBank { skew: vec![Time::ZERO; k], clock_jitter_sigma_ps: 0.0, seed: 0 }
    }

    pub fn k(&self) -> usize {
        self.skew.len()
    }

    pub fn skews(&self) -> &[Time] {
        &self.skew
    }

    pub fn clock_offset(&self, t: Time) -> Time {
        if self.clock_jitter_sigma_ps <= 0.0 {
            return Time::ZERO;
        }
        let mut rng = rng::stream(self.seed, domain::REG_CLOCK, t.fs() as u64);
        Time((rng::normal(&mut rng, self.clock_jitter_sigma_ps) * 1e3).round() as i64)
    }

    /// Sampling instant of every register (index 0 is tap 1).
    pub fn sample_times(&self, t: Time) -> Vec<Time> {
        let clock = t + self.clock_offset(t);
        self.skew.iter().map(|s| clock + *s).collect()
    }
}

/// One latched chain state. `bits[0]` is tap 1, the most recent sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFrame {
    pub bits: Vec<bool>,
    pub capture_time: Time,
    pub phase_index: Option<u64>,
}

impl CaptureFrame {
    pub fn new(bits: Vec<bool>, capture_time: Time, phase_index: Option<u64>) -> Self {
        CaptureFrame { bits, capture_time, phase_index }
    }

    pub fn k(&self) -> usize {
        self.bits.len()
    }

    /// Bit at 1-based tap `k`.
    pub fn bit(&self, k: usize) -> bool {
        self.bits[k - 1]
    }

    pub fn from_str_bits(s: &str) -> Self {
        CaptureFrame::new(s.bytes().filter(|b| !b.is_ascii_whitespace()).map(|b| b == b'1').collect(), Time::ZERO, None)
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Everything a capture needs that does not depend on the propagation model.
#[derive(Debug, Clone)]
pub(crate) struct CaptureWindow {
    pub initial: bool,
    pub edges: Vec<Edge>,
    pub sample_times: Vec<Time>,
}

/// How far before the capture instant the input must be known.
pub fn lookback(chain: &ChainInstance, regs: &RegisterBank) -> Time {
    let span = chain.entry_delay
        + chain.prefix_rise[chain.k()].max(chain.prefix_fall[chain.k()])
        + chain.max_skew_between_polarities()
        + chain.entry_min_pulse;
    let skew = regs.skew.iter().map(|s| s.abs()).max().unwrap_or(Time::ZERO);
    span * 2 + skew + Time::from_ps_int(1)
}

pub(crate) fn capture_window(w: &DigitalWaveform, chain: &ChainInstance, regs: &RegisterBank, t: Time) -> Result<CaptureWindow> {
    if regs.k() != chain.k() {
        return Err(Error::InvalidSpec(format!("register bank has {} taps, chain has {}", regs.k(), chain.k())));
    }
    let sample_times = regs.sample_times(t);
    let first = *sample_times.iter().min().expect("k >= 1");
    let last = *sample_times.iter().max().expect("k >= 1");
    let lo = first - lookback(chain, regs);
    if lo < w.origin() {
        return Err(Error::WindowUnderflow { needed: lo, origin: w.origin() });
    }
    let hi = last - chain.entry_delay + chain.entry_min_pulse + Time(1);
    Ok(CaptureWindow { initial: w.level_before(lo), edges: w.edges_between(lo, hi).to_vec(), sample_times })
}

/// Copy-gate low-pass: removes adjacent edge pairs closer than `min_pulse`.
fn entry_filter(edges: &[Edge], min_pulse: Time) -> Vec<Edge> {
    let mut kept: Vec<Edge> = Vec::with_capacity(edges.len());
    for e in edges {
        match kept.last() {
            Some(top) if e.time - top.time < min_pulse => {
                kept.pop();
            }
            _ => kept.push(*e),
        }
    }
    kept
}

/// Latches the chain at nominal instant `t`.
///
/// Edge propagation is event driven: each adjacent edge pair is scheduled
/// at the element where the trailing edge would catch up, pairs are retired
/// in element order, and newly adjacent edges are rescheduled. Bits are then
/// read from the surviving arrivals at each tap.
pub fn capture(w: &DigitalWaveform, chain: &ChainInstance, regs: &RegisterBank, t: Time) -> Result<CaptureFrame> {
    let window = capture_window(w, chain, regs, t)?;
    let edges = entry_filter(&window.edges, chain.entry_min_pulse);
    let n = edges.len();
    let k = chain.k();

    let mut death = vec![usize::MAX; n];
    let mut prev: Vec<Option<usize>> = (0..n).map(|i| i.checked_sub(1)).collect();
    let mut next: Vec<Option<usize>> = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let mut queue: BinaryHeap<Reverse<(usize, usize, usize)>> = BinaryHeap::new();

    let schedule = |queue: &mut BinaryHeap<Reverse<(usize, usize, usize)>>, a: usize, b: usize| {
        let gap = edges[b].time - edges[a].time;
        if let Some(j) = chain.first_crossing(edges[a].level, gap) {
            queue.push(Reverse((j, a, b)));
        }
    };
    for i in 1..n {
        schedule(&mut queue, i - 1, i);
    }
    while let Some(Reverse((j, a, b))) = queue.pop() {
        if death[a] != usize::MAX || death[b] != usize::MAX || next[a] != Some(b) {
            continue;
        }
        death[a] = j;
        death[b] = j;
        let (p, q) = (prev[a], next[b]);
        if let Some(p) = p {
            next[p] = q;
        }
        if let Some(q) = q {
            prev[q] = p;
        }
        if let (Some(p), Some(q)) = (p, q) {
            schedule(&mut queue, p, q);
        }
    }

    let entry = chain.entry_delay;
    let mut bits = Vec::with_capacity(k);
    for tap in 1..=k {
        let s = window.sample_times[tap - 1];
        let mut level = window.initial;
        for (i, e) in edges.iter().enumerate() {
            if death[i] <= tap {
                continue;
            }
            if e.time + entry + chain.prefix(e.level, tap) > s {
                break;
            }
            level = e.level;
        }
        bits.push(level);
    }
    Ok(CaptureFrame::new(bits, t, None))
}

/// Brute-force reference for [`capture`]: walks every surviving edge through
/// every element in turn, rebuilds each tap's local waveform, and samples it.
pub fn capture_oracle(w: &DigitalWaveform, chain: &ChainInstance, regs: &RegisterBank, t: Time) -> Result<CaptureFrame> {
    let window = capture_window(w, chain, regs, t)?;

    // Copy gate: repeatedly drop the earliest too-narrow pulse.
    let mut edges = window.edges.clone();
    'scan: loop {
        for i in 1..edges.len() {
            if edges[i].time - edges[i - 1].time < chain.entry_min_pulse {
                edges.drain(i - 1..=i);
                continue 'scan;
            }
        }
        break;
    }

    let mut live: Vec<Edge> = edges.iter().map(|e| Edge::new(e.time + chain.entry_delay, e.level)).collect();
    let mut bits = Vec::with_capacity(chain.k());
    for j in 1..=chain.k() {
        let mut resolved: Vec<Edge> = Vec::with_capacity(live.len());
        for e in &live {
            let delay = if e.level { chain.rise[j - 1] } else { chain.fall[j - 1] };
            let moved = Edge::new(e.time + delay, e.level);
            if resolved.last().is_some_and(|top| moved.time <= top.time) {
                resolved.pop();
            } else {
                resolved.push(moved);
            }
        }
        live = resolved;
        let tap = DigitalWaveform::new(window.initial, live.clone())?;
        bits.push(tap.evaluate(window.sample_times[j - 1]));
    }
    Ok(CaptureFrame::new(bits, t, None))
}

/// A sampled chain together with its register bank and the specs that
/// produced them.
#[derive(Debug, Clone)]
pub struct Tdl {
    pub chain_spec: ChainSpec,
    pub register_spec: RegisterSpec,
    pub chain: ChainInstance,
    pub registers: RegisterBank,
}

impl Tdl {
    pub fn new(chain_spec: ChainSpec, register_spec: RegisterSpec) -> Result<Self> {
        let chain = sample_chain(&chain_spec)?;
        let registers = register_spec.instantiate(chain_spec.k)?;
        Ok(Tdl { chain_spec, register_spec, chain, registers })
    }

    pub fn k(&self) -> usize {
        self.chain.k()
    }

    pub fn capture(&self, w: &DigitalWaveform, t: Time) -> Result<CaptureFrame> {
        capture(w, &self.chain, &self.registers, t)
    }

    pub fn lookback(&self) -> Time {
        lookback(&self.chain, &self.registers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::PllOutputSpec;
    use proptest::prelude::*;

    fn ps(v: i64) -> Time {
        Time::from_ps_int(v)
    }

    fn spec(k: usize, rise: f64, fall: f64) -> ChainSpec {
        ChainSpec { tau_rise_ps: rise, tau_fall_ps: fall, ..ChainSpec::ideal(k, rise) }
    }

    #[test]
    fn config_gate_examples() {
        let ok = validate_config(&spec(1300, 4.91, 4.54), ps(5000), ps(500));
        assert!(ok.is_ok(), "{ok}");

        let short = validate_config(&spec(1000, 4.91, 4.54), ps(5000), ps(500));
        assert_eq!(short.violations.len(), 1);
        assert!(matches!(short.violations[0], Violation::Coverage { .. }));

        let long = validate_config(&spec(1741, 4.91, 4.54), ps(5000), ps(5000));
        assert_eq!(long.violations, vec![Violation::Length { k: 1741, max: 1740 }]);

        let shrinky = validate_config(&spec(1300, 5.0, 4.5), ps(5000), ps(600));
        assert!(matches!(shrinky.violations[..], [Violation::Shrinkage { .. }]));
    }

    #[test]
    fn inverted_asymmetry_needs_override() {
        assert!(spec(10, 4.0, 5.0).validate().is_err());
        let allowed = ChainSpec { allow_inverted_asymmetry: true, ..spec(10, 4.0, 5.0) };
        assert!(allowed.validate().is_ok());
    }

    #[test]
    fn sampling_without_variation_hits_means() {
        let inst = sample_chain(&spec(50, 4.91, 4.54)).unwrap();
        assert!(inst.rise_delays().iter().all(|&d| d == Time(4_910)));
        assert!(inst.fall_delays().iter().all(|&d| d == Time(4_540)));
    }

    #[test]
    fn ramp_scales_first_elements() {
        let s = ChainSpec { dnl_ramp: Some(DnlRamp::default()), ..ChainSpec::ideal(30, 5.0) };
        let inst = sample_chain(&s).unwrap();
        assert_eq!(inst.rise_delays()[0], Time(15_000));
        // Oracle: 1 + 2 * (10 - (k - 1)) / 10.
        for k in 1..=12usize {
            let expect = if k <= 10 { 5.0 * (1.0 + 2.0 * (10 - (k - 1)) as f64 / 10.0) } else { 5.0 };
            assert_eq!(inst.rise_delays()[k - 1], Time::from_ps(expect), "k={k}");
        }
    }

    #[test]
    fn sampled_mean_within_sigma_bound() {
        let s = ChainSpec { tau_sigma_ps: 0.5, seed: 11, ..spec(1300, 4.91, 4.54) };
        let inst = sample_chain(&s).unwrap();
        assert!((inst.mean_rise().ps() - 4.91).abs() < 0.06);
        assert!((inst.mean_fall().ps() - 4.54).abs() < 0.06);
        assert!(inst.rise_delays().iter().all(|d| d.fs() > 0));
        assert_eq!(inst, sample_chain(&s).unwrap());
    }

    #[test]
    fn constant_inputs_fill_the_frame() {
        let tdl = Tdl::new(spec(1300, 4.91, 4.54), RegisterSpec { skew_sigma_ps: 3.0, clock_jitter_sigma_ps: 30.0, seed: 1 }).unwrap();
        let hi = tdl.capture(&DigitalWaveform::constant(true), ps(0)).unwrap();
        assert!(hi.bits.iter().all(|&b| b));
        let lo = tdl.capture(&DigitalWaveform::constant(false), ps(0)).unwrap();
        assert!(lo.bits.iter().all(|&b| !b));
    }

    #[test]
    fn ideal_step_example() {
        let chain = sample_chain(&ChainSpec::ideal(4, 1000.0)).unwrap();
        let regs = RegisterBank::ideal(4);
        let step = DigitalWaveform::from_toggles(false, [ps(0)]).unwrap();
        let frame = capture(&step, &chain, &regs, ps(2500)).unwrap();
        // Oracle: bit k = S(t - k * tau).
        let expect: Vec<bool> = (1..=4).map(|k| step.evaluate(ps(2500 - 1000 * k))).collect();
        assert_eq!(expect, vec![true, true, false, false]);
        assert_eq!(frame.bits, expect);
        assert_eq!(capture_oracle(&step, &chain, &regs, ps(2500)).unwrap(), frame);
    }

    /// Pulse width in carries of the single 1-run in a frame, with the
    /// position of its falling edge.
    fn lone_pulse(frame: &CaptureFrame) -> Option<(usize, usize)> {
        let first = frame.bits.iter().position(|&b| b)?;
        let len = frame.bits[first..].iter().take_while(|&&b| b).count();
        Some((first, len))
    }

    #[test]
    fn single_pulse_shrinks_linearly_then_vanishes() {
        let chain = sample_chain(&spec(1300, 5.0, 4.5)).unwrap();
        let regs = RegisterBank::ideal(1300);
        let pulse = DigitalWaveform::from_toggles(false, [ps(0), ps(500)]).unwrap();
        // Closed form: collision after 500 / 0.5 = 1000 elements.
        let mut last_width = usize::MAX;
        for t in (600..=8_000).step_by(400) {
            let frame = capture(&pulse, &chain, &regs, ps(t)).unwrap();
            assert_eq!(frame, capture_oracle(&pulse, &chain, &regs, ps(t)).unwrap());
            let tail_travel = (t - 500) as f64 / 4.5;
            match lone_pulse(&frame) {
                Some((tail, width)) => {
                    assert!(tail_travel < 1000.0 + 1.0, "pulse survived beyond collision at t={t}");
                    // Width = 500/5 - travel * (5 - 4.5) / 5, to within quantization.
                    let expect = 100.0 - tail as f64 * 0.1;
                    assert!((width as f64 - expect).abs() <= 2.0, "t={t} tail={tail} width={width} expect={expect}");
                    assert!(width <= last_width);
                    last_width = width;
                }
                None => assert!(tail_travel >= 1000.0 - 1.0 || t < 500, "pulse vanished early at t={t}"),
            }
        }
        assert!(capture(&pulse, &chain, &regs, ps(5_200)).unwrap().bits.iter().all(|&b| !b));
    }

    #[test]
    fn symmetric_delays_conserve_width() {
        let chain = sample_chain(&ChainSpec::ideal(1300, 5.0)).unwrap();
        let regs = RegisterBank::ideal(1300);
        let pulse = DigitalWaveform::from_toggles(false, [ps(0), ps(500)]).unwrap();
        for t in (600..6_000).step_by(350) {
            let (_, width) = lone_pulse(&capture(&pulse, &chain, &regs, ps(t)).unwrap()).unwrap();
            assert_eq!(width, 100, "t={t}");
        }
    }

    #[test]
    fn complement_symmetry_only_for_symmetric_delays() {
        let train = PllOutputSpec::new(600e6, 0.5).generate_window(ps(-20_000), ps(20_000)).unwrap();
        let inverted = DigitalWaveform::new(
            !train.initial_level(),
            train.edges().iter().map(|e| Edge::new(e.time, !e.level)).collect(),
        )
        .unwrap()
        .with_origin(train.origin());
        let regs = RegisterBank::ideal(1300);

        let sym = sample_chain(&ChainSpec::ideal(1300, 5.0)).unwrap();
        let a = capture(&train, &sym, &regs, ps(10_000)).unwrap();
        let b = capture(&inverted, &sym, &regs, ps(10_000)).unwrap();
        assert!(a.bits.iter().zip(&b.bits).all(|(x, y)| x != y));

        let asym = sample_chain(&spec(1300, 4.91, 4.54)).unwrap();
        let a = capture(&train, &asym, &regs, ps(10_000)).unwrap();
        let b = capture(&inverted, &asym, &regs, ps(10_000)).unwrap();
        assert!(a.bits.iter().zip(&b.bits).any(|(x, y)| x == y));
    }

    #[test]
    fn entry_filter_swallows_narrow_pulses() {
        let s = ChainSpec { entry_min_pulse_ps: 50.0, ..ChainSpec::ideal(200, 5.0) };
        let chain = sample_chain(&s).unwrap();
        let regs = RegisterBank::ideal(200);
        let glitch = DigitalWaveform::from_toggles(false, [ps(0), ps(40)]).unwrap();
        let frame = capture(&glitch, &chain, &regs, ps(500)).unwrap();
        assert!(frame.bits.iter().all(|&b| !b));
        let pulse = DigitalWaveform::from_toggles(false, [ps(0), ps(60)]).unwrap();
        let frame = capture(&pulse, &chain, &regs, ps(500)).unwrap();
        assert_eq!(frame.bits.iter().filter(|&&b| b).count(), 12);
    }

    #[test]
    fn window_underflow_is_reported() {
        let chain = sample_chain(&ChainSpec::ideal(100, 5.0)).unwrap();
        let regs = RegisterBank::ideal(100);
        let w = PllOutputSpec::new(100e6, 0.25).generate(ps(100_000)).unwrap();
        assert!(matches!(capture(&w, &chain, &regs, ps(100)), Err(Error::WindowUnderflow { .. })));
        assert!(capture(&w, &chain, &regs, ps(50_000)).is_ok());
    }

    #[test]
    fn lone_rising_edge_moves_one_carry_per_tau() {
        let chain = sample_chain(&ChainSpec::ideal(500, 5.0)).unwrap();
        let regs = RegisterBank::ideal(500);
        let step = DigitalWaveform::from_toggles(false, [ps(0)]).unwrap();
        let ones = |t: i64| capture(&step, &chain, &regs, Time(t)).unwrap().bits.iter().filter(|&&b| b).count() as i64;
        let base = 123_456;
        let x0 = ones(base);
        for m in [1, 7, 100, 300] {
            let x = ones(base + 5_000 * m);
            assert!((x - x0 - m).abs() <= 1, "m={m}");
        }
    }

    #[test]
    fn skew_produces_bubbles() {
        let tdl = Tdl::new(spec(1300, 4.91, 4.54), RegisterSpec { skew_sigma_ps: 4.0, clock_jitter_sigma_ps: 0.0, seed: 5 }).unwrap();
        let w = PllOutputSpec::new(600e6, 0.5).generate_window(ps(-50_000), ps(50_000)).unwrap();
        let mut transitions = 0;
        for t in 0..20 {
            let f = tdl.capture(&w, ps(t * 97)).unwrap();
            transitions += f.bits.windows(2).filter(|p| p[0] != p[1]).count();
        }
        // About eight real edges per frame; skew adds isolated extra transitions.
        assert!(transitions > 20 * 8);
    }

    fn random_case(k: usize) -> impl Strategy<Value = (ChainSpec, RegisterSpec, Vec<i64>, bool, i64)> {
        (
            1.0f64..8.0,
            0.5f64..1.5,
            0.0f64..1.0,
            0.0f64..20.0,
            0.0f64..10.0,
            any::<u64>(),
            0.0f64..5.0,
            0.0f64..20.0,
            prop::collection::vec(1i64..120_000, 0..40),
            any::<bool>(),
            0i64..400_000,
        )
            .prop_map(move |(rise, ratio, sigma, entry, min_pulse, seed, skew, jitter, gaps, init, t)| {
                let chain = ChainSpec {
                    k,
                    tau_rise_ps: rise,
                    tau_fall_ps: rise * ratio,
                    tau_sigma_ps: sigma,
                    entry_delay_ps: entry,
                    entry_min_pulse_ps: min_pulse,
                    dnl_ramp: (seed % 3 == 0).then(DnlRamp::default),
                    allow_inverted_asymmetry: true,
                    seed,
                };
                let regs = RegisterSpec { clock_jitter_sigma_ps: jitter, skew_sigma_ps: skew, seed: seed.rotate_left(7) };
                (chain, regs, gaps, init, t)
            })
    }

    fn pulse_train(gaps: &[i64], init: bool) -> DigitalWaveform {
        let mut t = -2_000_000i64;
        DigitalWaveform::from_toggles(
            init,
            gaps.iter().map(|g| {
                t += g;
                Time(t)
            }),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn event_capture_matches_oracle((chain_spec, reg_spec, gaps, init, t) in random_case(48)) {
            let tdl = Tdl::new(chain_spec, reg_spec).unwrap();
            let w = pulse_train(&gaps, init);
            let fast = tdl.capture(&w, Time(t)).unwrap();
            let slow = capture_oracle(&w, &tdl.chain, &tdl.registers, Time(t)).unwrap();
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn symmetric_chain_conserves_pulse_width(width in 30i64..400, start in 0i64..1_000, k in 10usize..200) {
            let chain = sample_chain(&ChainSpec::ideal(k, 5.0)).unwrap();
            let regs = RegisterBank::ideal(k);
            let pulse = DigitalWaveform::from_toggles(false, [ps(0), ps(width * 5)]).unwrap();
            let t = ps(width * 5 + start);
            let frame = capture(&pulse, &chain, &regs, t).unwrap();
            if let Some((tail, w)) = lone_pulse(&frame) {
                if tail + w < k {
                    prop_assert_eq!(w as i64, width);
                }
            }
        }
    }
}
