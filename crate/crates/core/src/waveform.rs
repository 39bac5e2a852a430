//! Piecewise-constant binary signals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::time::Time;

/// A level transition. `level` is the value held from `time` onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub time: Time,
    pub level: bool,
}

impl Edge {
    pub fn new(time: Time, level: bool) -> Self {
        Edge { time, level }
    }

    pub fn is_rising(&self) -> bool {
        self.level
    }
}

/// Binary signal stored as a sorted, alternating edge list.
///
/// `origin` marks the earliest instant at which the signal is meaningful;
/// generated signals only cover a finite window. Hand-built signals are
/// defined for all time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitalWaveform {
    initial: bool,
    edges: Vec<Edge>,
    origin: Time,
}

impl DigitalWaveform {
    pub fn constant(level: bool) -> Self {
        DigitalWaveform { initial: level, edges: Vec::new(), origin: Time::MIN }
    }

    pub fn new(initial: bool, edges: Vec<Edge>) -> Result<Self> {
        let mut prev_level = initial;
        let mut prev_time: Option<Time> = None;
        for (i, e) in edges.iter().enumerate() {
            if e.level == prev_level {
                return Err(Error::InvalidSpec(format!("edge {i} at {} does not change the level", e.time)));
            }
            if let Some(p) = prev_time {
                if e.time <= p {
                    return Err(Error::InvalidSpec(format!("edge {i} at {} is not after {p}", e.time)));
                }
            }
            prev_level = e.level;
            prev_time = Some(e.time);
        }
        Ok(DigitalWaveform { initial, edges, origin: Time::MIN })
    }

    /// Builds a waveform from toggle instants. Times must be strictly increasing.
    pub fn from_toggles(initial: bool, times: impl IntoIterator<Item = Time>) -> Result<Self> {
        let mut level = initial;
        let edges = times
            .into_iter()
            .map(|t| {
                level = !level;
                Edge::new(t, level)
            })
            .collect();
        Self::new(initial, edges)
    }

    /// Builds a waveform from level samples taken at increasing instants,
    /// dropping redundant samples.
    pub fn from_samples(initial: bool, samples: impl IntoIterator<Item = (Time, bool)>) -> Result<Self> {
        let mut level = initial;
        let mut edges = Vec::new();
        for (t, l) in samples {
            if l != level {
                edges.push(Edge::new(t, l));
                level = l;
            }
        }
        Self::new(initial, edges)
    }

    pub(crate) fn from_parts_unchecked(initial: bool, edges: Vec<Edge>, origin: Time) -> Self {
        debug_assert!(Self::new(initial, edges.clone()).is_ok());
        DigitalWaveform { initial, edges, origin }
    }

    pub fn with_origin(mut self, origin: Time) -> Self {
        self.origin = origin;
        self
    }

    pub fn initial_level(&self) -> bool {
        self.initial
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn origin(&self) -> Time {
        self.origin
    }

    /// Level after the latest edge at or before `t`.
    pub fn evaluate(&self, t: Time) -> bool {
        let n = self.edges.partition_point(|e| e.time <= t);
        if n == 0 {
            self.initial
        } else {
            self.edges[n - 1].level
        }
    }

    /// Level just before `t`, i.e. ignoring an edge exactly at `t`.
    pub fn level_before(&self, t: Time) -> bool {
        let n = self.edges.partition_point(|e| e.time < t);
        if n == 0 {
            self.initial
        } else {
            self.edges[n - 1].level
        }
    }

    /// Edges with `lo <= time < hi`.
    pub fn edges_between(&self, lo: Time, hi: Time) -> &[Edge] {
        let a = self.edges.partition_point(|e| e.time < lo);
        let b = self.edges.partition_point(|e| e.time < hi);
        &self.edges[a..b]
    }

    pub fn shift_phase(&self, dt: Time) -> Self {
        DigitalWaveform {
            initial: self.initial,
            edges: self.edges.iter().map(|e| Edge::new(e.time + dt, e.level)).collect(),
            origin: if self.origin == Time::MIN { Time::MIN } else { self.origin + dt },
        }
    }

    /// Total time spent high within `[lo, hi)`.
    pub fn high_time(&self, lo: Time, hi: Time) -> Time {
        let mut level = self.level_before(lo);
        let mut cursor = lo;
        let mut acc = Time::ZERO;
        for e in self.edges_between(lo, hi) {
            if level {
                acc += e.time - cursor;
            }
            cursor = e.time;
            level = e.level;
        }
        if level {
            acc += hi - cursor;
        }
        acc
    }

    /// CSV with header `time_ps,level`. The first data row carries the
    /// level before any edge, with time `-inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ps,level\n");
        let _ = writeln!(out, "-inf,{}", self.initial as u8);
        for e in &self.edges {
            let _ = writeln!(out, "{},{}", e.time.ps_string(), e.level as u8);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "time_ps,level")) => {}
            _ => return Err(Error::InvalidSpec("missing `time_ps,level` header".into())),
        }
        let bad = |row: usize| Error::InvalidSpec(format!("malformed waveform row {}", row + 1));
        let parse_level = |s: &str, row: usize| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(row)),
        };
        let (row, first) = lines.next().ok_or_else(|| bad(1))?;
        let (t, l) = first.split_once(',').ok_or_else(|| bad(row))?;
        if t != "-inf" {
            return Err(bad(row));
        }
        let initial = parse_level(l, row)?;
        let mut edges = Vec::new();
        for (row, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (t, l) = line.split_once(',').ok_or_else(|| bad(row))?;
            let time = Time::parse_ps(t).ok_or_else(|| bad(row))?;
            edges.push(Edge::new(time, parse_level(l, row)?));
        }
        Self::new(initial, edges)
    }
}

/// A pulse-train clock output, optionally with per-edge Gaussian jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllOutputSpec {
    pub frequency_hz: f64,
    pub duty_cycle: f64,
    #[serde(default)]
    pub phase_offset_ps: f64,
    #[serde(default)]
    pub period_jitter_sigma_ps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PllOutputSpec {
    pub fn new(frequency_hz: f64, duty_cycle: f64) -> Self {
        PllOutputSpec { frequency_hz, duty_cycle, phase_offset_ps: 0.0, period_jitter_sigma_ps: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::InvalidSpec(format!("frequency must be positive, got {}", self.frequency_hz)));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(Error::InvalidSpec(format!("duty cycle must lie in (0,1), got {}", self.duty_cycle)));
        }
        if !(self.period_jitter_sigma_ps >= 0.0) || !self.phase_offset_ps.is_finite() {
            return Err(Error::InvalidSpec("jitter sigma must be >= 0 and phase offset finite".into()));
        }
        Ok(())
    }

    pub fn period_fs(&self) -> f64 {
        1e15 / self.frequency_hz
    }

    pub fn period(&self) -> Time {
        Time(self.period_fs().round() as i64)
    }

    pub fn high_width(&self) -> Time {
        Time((self.duty_cycle * self.period_fs()).round() as i64)
    }

    /// Nominal time of edge `index`: even indices rise, odd indices fall.
    /// Each edge is rounded independently from exact phase, so long trains
    /// accumulate no rounding drift.
    fn nominal_edge(&self, index: i64) -> i64 {
        let cycle = index.div_euclid(2) as f64;
        let frac = if index.rem_euclid(2) == 0 { 0.0 } else { self.duty_cycle };
        ((cycle + frac) * self.period_fs() + self.phase_offset_ps * 1e3).round() as i64
    }

    fn edge_time(&self, index: i64) -> Time {
        let nominal = self.nominal_edge(index);
        if self.period_jitter_sigma_ps <= 0.0 {
            return Time(nominal);
        }
        // Perturbations stay under half the narrower gap so edges never reorder.
        let min_gap = self.duty_cycle.min(1.0 - self.duty_cycle) * self.period_fs();
        let mut rng = rng::stream(self.seed, domain::PLL_EDGE, index as u64);
        let jitter = rng::normal_where(&mut rng, 0.0, self.period_jitter_sigma_ps * 1e3, |j| {
            2.0 * j.round().abs() < min_gap.floor()
        });
        Time(nominal + jitter.round() as i64)
    }

    /// Pulse train restricted to `[start, end)`, defined from `start`.
    pub fn generate_window(&self, start: Time, end: Time) -> Result<DigitalWaveform> {
        self.validate()?;
        if end <= start {
            return Err(Error::InvalidSpec("empty generation window".into()));
        }
        let p = self.period_fs();
        let phase = self.phase_offset_ps * 1e3;
        let first_cycle = ((start.fs() as f64 - phase) / p).floor() as i64 - 1;
        let last_cycle = ((end.fs() as f64 - phase) / p).ceil() as i64 + 1;
        let mut initial = false;
        let mut edges = Vec::new();
        for index in 2 * first_cycle..2 * last_cycle + 2 {
            let t = self.edge_time(index);
            let level = index.rem_euclid(2) == 0;
            if t < start {
                initial = level;
            } else if t < end {
                edges.push(Edge::new(t, level));
            }
        }
        Ok(DigitalWaveform::from_parts_unchecked(initial, edges, start))
    }

    pub fn generate(&self, duration: Time) -> Result<DigitalWaveform> {
        if duration <= Time::ZERO {
            return Err(Error::InvalidSpec("duration must be positive".into()));
        }
        self.generate_window(Time::ZERO, duration)
    }
}

pub fn make_pll_output(spec: &PllOutputSpec, duration: Time) -> Result<DigitalWaveform> {
    spec.generate(duration)
}

pub fn evaluate(w: &DigitalWaveform, t: Time) -> bool {
    w.evaluate(t)
}

pub fn shift_phase(w: &DigitalWaveform, dt: Time) -> DigitalWaveform {
    w.shift_phase(dt)
}
