//! Dynamic-phase-shift acquisition.
//!
//! Between captures the source is shifted by one phase step relative to the
//! capture clock. Each shift relocks the PLL, which costs a random number of
//! reference cycles of dead time; dead time moves the absolute capture
//! instant but never the phase relation, which is always `n * step` plus a
//! per-frame crystal jitter draw.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{validate_config, CaptureFrame, ChainSpec, RegisterSpec, Tdl};
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::time::Time;
use crate::waveform::{DigitalWaveform, PllOutputSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub source: PllOutputSpec,
    pub capture_period_ps: f64,
    pub phase_step_ps: f64,
    pub n_steps: usize,
    /// Inclusive range of reference cycles lost per relock.
    #[serde(default = "default_dead_cycles")]
    pub relock_cycles: [u32; 2],
    #[serde(default = "default_relock_period")]
    pub relock_period_ps: f64,
    /// Per-frame phase noise between source and capture clock.
    #[serde(default)]
    pub crystal_jitter_sigma_ps: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dead_cycles() -> [u32; 2] {
    [2, 40]
}

fn default_relock_period() -> f64 {
    20_000.0
}

impl SweepSpec {
    pub fn new(source: PllOutputSpec, capture_period_ps: f64, phase_step_ps: f64, n_steps: usize) -> Self {
        SweepSpec {
            source,
            capture_period_ps,
            phase_step_ps,
            n_steps,
            relock_cycles: default_dead_cycles(),
            relock_period_ps: default_relock_period(),
            crystal_jitter_sigma_ps: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(self.capture_period_ps > 0.0 && self.phase_step_ps > 0.0 && self.relock_period_ps > 0.0) {
            return bad("capture period, phase step and relock period must be positive");
        }
        if self.n_steps == 0 {
            return bad("sweep needs at least one step");
        }
        let [lo, hi] = self.relock_cycles;
        if lo < 2 || hi < lo {
            return bad("relock cycles must satisfy 2 <= min <= max");
        }
        if !(self.crystal_jitter_sigma_ps >= 0.0) {
            return bad("crystal jitter must be non-negative");
        }
        Ok(())
    }

    pub fn phase_step(&self) -> Time {
        Time::from_ps(self.phase_step_ps)
    }

    pub fn capture_period(&self) -> Time {
        Time::from_ps(self.capture_period_ps)
    }

    /// Narrowest feature of the source, the bound on tolerable shrinkage.
    pub fn narrowest_feature(&self) -> Time {
        let high = self.source.high_width();
        high.min(self.source.period() - high)
    }
}

/// Acquisition-side record kept with every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Acquisition {
    Sweep(SweepSpec),
    Continuous(ContinuousSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub capture_period_ps: f64,
    pub n_frames: usize,
    pub start_ps: f64,
    /// Free-form description of the captured signal.
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub chain: ChainSpec,
    pub registers: RegisterSpec,
    pub acquisition: Acquisition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    pub frames: Vec<CaptureFrame>,
    pub provenance: Provenance,
}

impl SweepDataset {
    pub fn k(&self) -> usize {
        self.provenance.chain.k
    }

    pub fn sweep_spec(&self) -> Option<&SweepSpec> {
        match &self.provenance.acquisition {
            Acquisition::Sweep(s) => Some(s),
            Acquisition::Continuous(_) => None,
        }
    }
}

/// Absolute capture instants of a sweep, including relock dead time.
pub fn capture_instants(spec: &SweepSpec) -> Vec<Time> {
    let period = Time::from_ps(spec.relock_period_ps);
    let [lo, hi] = spec.relock_cycles;
    let mut t = Time::ZERO;
    (0..spec.n_steps as u64)
        .map(|n| {
            if n > 0 {
                let mut rng = rng::stream(spec.seed, domain::SWEEP_DEAD, n);
                t += period * rng.random_range(lo..=hi) as i64;
            }
            t
        })
        .collect()
}

/// Source phase offset, relative to the capture instant, for frame `n`.
pub fn frame_phase(spec: &SweepSpec, n: u64) -> Time {
    let mut rng = rng::stream(spec.seed, domain::SWEEP_JITTER, n);
    let jitter = rng::normal(&mut rng, spec.crystal_jitter_sigma_ps);
    Time::from_ps(spec.phase_step_ps * n as f64 + jitter)
}

/// Captures `n_steps` frames, frame `n` seeing the source delayed by
/// `n * phase_step` relative to the capture clock.
pub fn run_sweep(spec: &SweepSpec, tdl: &Tdl) -> Result<SweepDataset> {
    spec.validate()?;
    validate_config(&tdl.chain_spec, spec.capture_period(), spec.narrowest_feature()).into_result()?;
    let lookback = tdl.lookback();
    let ahead = spec.capture_period() + tdl.chain.entry_min_pulse() + Time::from_ps_int(100);
    let frames = capture_instants(spec)
        .into_iter()
        .enumerate()
        .map(|(n, t)| {
            let n = n as u64;
            let source = PllOutputSpec {
                phase_offset_ps: spec.source.phase_offset_ps + (t + frame_phase(spec, n)).ps(),
                ..spec.source.clone()
            };
            let times = tdl.registers.sample_times(t);
            let (first, last) = (*times.iter().min().expect("k >= 1"), *times.iter().max().expect("k >= 1"));
            let w = source.generate_window(first - lookback, last + ahead)?;
            let mut frame = tdl.capture(&w, t)?;
            frame.phase_index = Some(n);
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepDataset {
        frames,
        provenance: Provenance {
            chain: tdl.chain_spec.clone(),
            registers: tdl.register_spec.clone(),
            acquisition: Acquisition::Sweep(spec.clone()),
        },
    })
}

/// Back-to-back captures of an arbitrary waveform every `period`, starting
/// at `start`.
pub fn run_continuous(w: &DigitalWaveform, tdl: &Tdl, start: Time, period: Time, n_frames: usize) -> Result<SweepDataset> {
    if period <= Time::ZERO {
        return Err(Error::InvalidSpec("capture period must be positive".into()));
    }
    let frames = (0..n_frames as u64)
        .map(|m| {
            let mut frame = tdl.capture(w, start + period * m as i64)?;
            frame.phase_index = Some(m);
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepDataset {
        frames,
        provenance: Provenance {
            chain: tdl.chain_spec.clone(),
            registers: tdl.register_spec.clone(),
            acquisition: Acquisition::Continuous(ContinuousSpec {
                capture_period_ps: period.ps(),
                n_frames,
                start_ps: start.ps(),
                source: String::new(),
            }),
        },
    })
}
