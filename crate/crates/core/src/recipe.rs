//! Named run configurations and the pipelines that execute them.
//!
//! A recipe is a flat `dotted.key = value` file. Every section except
//! `chain` is optional; which commands a recipe supports follows from the
//! sections it has. Unknown keys are errors.
//!
//! Multi-channel recipes instantiate `channels` independent delay lines
//! from the same nominal specs. Channel `c` offsets every seed by
//! `c * CHANNEL_SEED_STRIDE`, so channel 0 reproduces a single-channel run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, shrink_analysis, CalibrationResult, Estimate, ShrinkResult};
use crate::chain::{sample_chain, ChainSpec, RegisterSpec, Tdl};
use crate::correct::{correct_frame, correction_fidelity, CorrectionSpec};
use crate::error::{Error, Result};
use crate::fit;
use crate::ringosc::{
    measure_node_timescale, nominal_taps_per_frame, simulate_ring, stitch_frames, NodeTimescale, RingSpec, RingTrace,
    StitchedSeries, TimescaleSpec,
};
use crate::storage::{from_flat_config, read_text, to_flat_config};
use crate::sweep::{run_continuous, run_sweep, SweepDataset, SweepSpec};
use crate::time::Time;

pub const CHANNEL_SEED_STRIDE: u64 = 0x9E37_79B9;

/// Checked-in presets, by name.
pub const PRESETS: [(&str, &str); 6] = [
    ("fig3a", include_str!("../presets/fig3a.config")),
    ("fig3c", include_str!("../presets/fig3c.config")),
    ("fig4", include_str!("../presets/fig4.config")),
    ("fig6", include_str!("../presets/fig6.config")),
    ("fig7", include_str!("../presets/fig7.config")),
    ("appendix-ro19", include_str!("../presets/appendix-ro19.config")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionSection {
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: usize,
    /// Fixed dilation; when absent it is `1 - rate` from the shrink analysis.
    #[serde(default)]
    pub dilation: Option<f64>,
}

fn default_gap_threshold() -> usize {
    CorrectionSpec::default().gap_threshold
}

/// Continuous capture of ring nodes, concatenated into time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StitchSpec {
    pub capture_period_ps: f64,
    pub frames: usize,
    /// First capture, relative to the ring release.
    #[serde(default)]
    pub start_ps: f64,
    /// Nodes to capture (0-based); empty means all.
    #[serde(default)]
    pub nodes: Vec<usize>,
    /// Carry time used to truncate frames; defaults to the chain's rise
    /// carry time.
    #[serde(default)]
    pub tau_ps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default = "default_min_run")]
    pub min_run: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width: usize,
    pub chain: ChainSpec,
    #[serde(default)]
    pub registers: RegisterSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub correction: Option<CorrectionSection>,
    #[serde(default)]
    pub ring: Option<RingSpec>,
    #[serde(default)]
    pub stitch: Option<StitchSpec>,
    #[serde(default)]
    pub measure: Option<TimescaleSpec>,
}

fn one() -> usize {
    1
}

fn default_min_run() -> usize {
    3
}

fn default_bin_width() -> usize {
    25
}

fn missing(name: &str, section: &str) -> Error {
    Error::InvalidSpec(format!("recipe {name:?} has no [{section}] section"))
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Self> {
        let r: Recipe = from_flat_config(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Recipe::parse(&read_text(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::InvalidSpec(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })?;
        Recipe::parse(text)
    }

    /// A preset name or a path to a recipe file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.exists() {
            Recipe::load(path)
        } else {
            Recipe::preset(name_or_path)
        }
    }

    pub fn to_config(&self) -> Result<String> {
        Ok(to_flat_config(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidSpec("channels must be at least 1".into()));
        }
        if self.min_run == 0 || self.bin_width == 0 {
            return Err(Error::InvalidSpec("min_run and bin_width must be positive".into()));
        }
        self.chain.validate()?;
        self.registers.validate()?;
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        if let Some(r) = &self.ring {
            r.validate()?;
        }
        if let Some(c) = &self.correction {
            c.dilation.map_or(Ok(()), |d| CorrectionSpec { gap_threshold: c.gap_threshold, dilation: d }.validate())?;
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.chain.seed = seed;
        self.registers.seed = seed.wrapping_add(1);
        if let Some(s) = &mut self.sweep {
            s.seed = seed.wrapping_add(2);
            s.source.seed = seed.wrapping_add(3);
        }
        if let Some(r) = &mut self.ring {
            r.seed = seed.wrapping_add(4);
        }
        self
    }

    /// Specs of channel `c`.
    pub fn channel(&self, c: usize) -> (ChainSpec, RegisterSpec, Option<SweepSpec>) {
        let off = (c as u64).wrapping_mul(CHANNEL_SEED_STRIDE);
        let chain = ChainSpec { seed: self.chain.seed.wrapping_add(off), ..self.chain.clone() };
        let regs = RegisterSpec { seed: self.registers.seed.wrapping_add(off), ..self.registers.clone() };
        let sweep = self.sweep.as_ref().map(|s| {
            let mut s = s.clone();
            s.seed = s.seed.wrapping_add(off);
            s.source.seed = s.source.seed.wrapping_add(off);
            s
        });
        (chain, regs, sweep)
    }

    pub fn tdl(&self, c: usize) -> Result<Tdl> {
        let (chain, regs, _) = self.channel(c);
        Tdl::new(chain, regs)
    }

    /// Channel-averaged realized mean carry times `(rise, fall)`.
    pub fn realized_carry_times(&self) -> Result<(f64, f64)> {
        let (mut r, mut f) = (0.0, 0.0);
        for c in 0..self.channels {
            let inst = sample_chain(&self.channel(c).0)?;
            r += inst.mean_rise().ps();
            f += inst.mean_fall().ps();
        }
        Ok((r / self.channels as f64, f / self.channels as f64))
    }

    /// One phase-sweep dataset per channel.
    pub fn acquire(&self) -> Result<Vec<SweepDataset>> {
        if self.sweep.is_none() {
            return Err(missing(&self.name, "sweep"));
        }
        (0..self.channels)
            .map(|c| {
                let (chain, regs, sweep) = self.channel(c);
                run_sweep(&sweep.expect("checked above"), &Tdl::new(chain, regs)?)
            })
            .collect()
    }

    /// The sweep of channel 0 seen through a delay line whose falling edges
    /// travel at the rising carry time, i.e. without pulse shrinkage.
    pub fn acquire_truth(&self) -> Result<SweepDataset> {
        let (chain, regs, sweep) = self.channel(0);
        let sweep = sweep.ok_or_else(|| missing(&self.name, "sweep"))?;
        let ideal = ChainSpec { tau_fall_ps: chain.tau_rise_ps, ..chain };
        run_sweep(&sweep, &Tdl::new(ideal, regs)?)
    }

    pub fn calibrate(&self, datasets: &[SweepDataset]) -> Result<CalibrationResult> {
        calibrate(datasets, self.min_run)
    }

    pub fn shrink(&self, dataset: &SweepDataset) -> Result<ShrinkResult> {
        shrink_analysis(dataset, self.min_run, self.bin_width)
    }

    /// Correction parameters, taking the dilation from `rate` unless fixed.
    pub fn correction_spec(&self, rate: Option<f64>) -> Result<CorrectionSpec> {
        let section = self.correction.clone().unwrap_or(CorrectionSection { gap_threshold: default_gap_threshold(), dilation: None });
        let spec = match (section.dilation, rate) {
            (Some(d), _) => CorrectionSpec { gap_threshold: section.gap_threshold, dilation: d },
            (None, Some(r)) => CorrectionSpec::from_shrink_rate(r, section.gap_threshold),
            (None, None) => CorrectionSpec { gap_threshold: section.gap_threshold, ..CorrectionSpec::default() },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn simulate_ring(&self, end: Time) -> Result<RingTrace> {
        simulate_ring(self.ring.as_ref().ok_or_else(|| missing(&self.name, "ring"))?, end)
    }

    /// Ring trace plus one stitched series per captured node.
    pub fn stitch(&self, tau_ps: Option<f64>) -> Result<(RingTrace, Vec<StitchedSeries>)> {
        let ring = self.ring.as_ref().ok_or_else(|| missing(&self.name, "ring"))?;
        let st = self.stitch.as_ref().ok_or_else(|| missing(&self.name, "stitch"))?;
        let tdl = self.tdl(0)?;
        let period = Time::from_ps(st.capture_period_ps);
        let start = Time::from_ps(ring.release_ps + st.start_ps).max(Time::from_ps(ring.release_ps) + tdl.lookback());
        let end = start + period * (st.frames as i64 + 2);
        let trace = simulate_ring(ring, end)?;
        let tau = st.tau_ps.or(tau_ps).unwrap_or(self.chain.tau_rise_ps);
        let k_t = nominal_taps_per_frame(period, tau).min(tdl.k());
        let nodes: Vec<usize> = if st.nodes.is_empty() { (0..ring.n).collect() } else { st.nodes.clone() };
        let series = nodes
            .iter()
            .map(|&i| {
                let w = trace.nodes.get(i).ok_or_else(|| Error::InvalidSpec(format!("ring has no node {i}")))?;
                let data = run_continuous(w, &tdl, start, period, st.frames)?;
                stitch_frames(&data.frames, k_t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((trace, series))
    }

    /// Per-gate timescale of the ring, converting widths with the given
    /// carry times.
    pub fn measure_ring(&self, tau_rise: Estimate, tau_fall: Estimate) -> Result<NodeTimescale> {
        let ring = self.ring.as_ref().ok_or_else(|| missing(&self.name, "ring"))?;
        let spec = self.measure.as_ref().ok_or_else(|| missing(&self.name, "measure"))?;
        measure_node_timescale(ring, &self.tdl(0)?, tau_rise, tau_fall, spec)
    }
}

/// Mean absolute pulse-width error of raw and corrected frames against
/// frames captured without shrinkage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionOutcome {
    pub dilation: f64,
    pub pulses: usize,
    pub raw_mean_abs_error: f64,
    pub corrected_mean_abs_error: f64,
    pub raw_mean_error: f64,
    pub corrected_mean_error: f64,
}

impl CorrectionOutcome {
    /// Fraction of the raw error removed by correction.
    pub fn improvement(&self) -> f64 {
        1.0 - self.corrected_mean_abs_error / self.raw_mean_abs_error
    }
}

pub fn evaluate_correction(raw: &SweepDataset, truth: &SweepDataset, spec: &CorrectionSpec) -> Result<CorrectionOutcome> {
    if raw.frames.len() != truth.frames.len() {
        return Err(Error::InvalidSpec("raw and truth datasets differ in length".into()));
    }
    let (mut raw_err, mut cor_err) = (Vec::new(), Vec::new());
    for (r, t) in raw.frames.iter().zip(&truth.frames) {
        let c = correct_frame(r, spec)?;
        raw_err.extend(correction_fidelity(t, r)?.matches.iter().map(|m| m.error as f64));
        cor_err.extend(correction_fidelity(t, &c)?.matches.iter().map(|m| m.error as f64));
    }
    if raw_err.is_empty() || cor_err.is_empty() {
        return Err(Error::InsufficientData("no complete pulses to compare".into()));
    }
    let mean_abs = |v: &[f64]| fit::mean(&v.iter().map(|e| e.abs()).collect::<Vec<_>>());
    Ok(CorrectionOutcome {
        dilation: spec.dilation,
        pulses: raw_err.len(),
        raw_mean_abs_error: mean_abs(&raw_err),
        corrected_mean_abs_error: mean_abs(&cor_err),
        raw_mean_error: fit::mean(&raw_err),
        corrected_mean_error: fit::mean(&cor_err),
    })
}
