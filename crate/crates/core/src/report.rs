//! End-to-end checks: simulate with known ground truth, run the analysis,
//! and compare what it recovers against what was configured.
//!
//! Each `check_*` function returns the raw measurements; [`run_report`]
//! applies the tolerances below and renders a pass/fail table.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::calibrate::{runs, Estimate};
use crate::chain::{
    capture, capture_oracle, sample_chain, validate_config, ChainSpec, DnlRamp, RegisterBank, RegisterSpec, Tdl, Violation,
    CaptureFrame,
};
use crate::correct::{correct_frame, CorrectionSpec};
use crate::error::Result;
use crate::recipe::{evaluate_correction, CorrectionOutcome, Recipe};
use crate::ringosc::{stitch_frames, BitString, NodeTimescale};
use crate::rng::{domain, stream};
use crate::storage::{frames_to_csv, load_dataset, save_dataset, sha256_hex};
use crate::sweep::{run_continuous, run_sweep, Acquisition};
use crate::time::Time;
use crate::waveform::DigitalWaveform;

pub const CARRY_TIME_TOLERANCE_PS: f64 = 0.1;
pub const CARRY_TIME_MAX_SE_PS: f64 = 0.1;
pub const CALIBRATION_MAX_SECONDS: f64 = 60.0;
pub const PRECISION_TARGET_PS: f64 = 30.0;
pub const PRECISION_REL_TOLERANCE: f64 = 0.2;
pub const PRECISION_FLOOR_PS: f64 = 2.0;
pub const SHRINK_RATE_RANGE: (f64, f64) = (0.06, 0.12);
pub const SHRINK_RATE_CONSISTENCY: f64 = 0.05;
pub const CORRECTION_MIN_IMPROVEMENT: f64 = 0.5;
pub const RING_GATE_DELAY_PS: f64 = 240.0;
pub const RING_TOLERANCE_PS: f64 = 6.0;

#[derive(Debug, Clone, Serialize)]
pub struct CarryTimeCheck {
    pub truth_rise_ps: f64,
    pub truth_fall_ps: f64,
    pub rise: Estimate,
    pub fall: Estimate,
    pub precision_ps: f64,
    pub precision_without_jitter_ps: f64,
    pub seconds: f64,
}

/// Calibrates `recipe` as configured and again with crystal jitter off.
pub fn check_carry_times(recipe: &Recipe) -> Result<CarryTimeCheck> {
    let start = Instant::now();
    let cal = recipe.calibrate(&recipe.acquire()?)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut quiet = recipe.clone();
    if let Some(s) = &mut quiet.sweep {
        s.crystal_jitter_sigma_ps = 0.0;
        s.source.period_jitter_sigma_ps = 0.0;
    }
    quiet.registers.clock_jitter_sigma_ps = 0.0;
    let floor = quiet.calibrate(&quiet.acquire()?)?;
    let (truth_rise_ps, truth_fall_ps) = recipe.realized_carry_times()?;
    Ok(CarryTimeCheck {
        truth_rise_ps,
        truth_fall_ps,
        rise: cal.tau_rise_ps,
        fall: cal.tau_fall_ps,
        precision_ps: cal.precision_ps(),
        precision_without_jitter_ps: floor.precision_ps(),
        seconds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GateCheck {
    pub accepted: bool,
    pub short_chain: Vec<String>,
    pub long_chain: Vec<String>,
}

/// The three reference configurations of the design-constraint gate.
pub fn check_constraint_gate() -> GateCheck {
    let spec = |k| ChainSpec { tau_fall_ps: 4.54, ..ChainSpec::ideal(k, 4.91) };
    let t = Time::from_ps_int(5_000);
    let t_min = Time::from_ps_int(500);
    let names = |r: crate::chain::ConfigReport| r.violations.iter().map(|v| v.to_string()).collect();
    let short = validate_config(&spec(1000), t, t_min);
    let long = validate_config(&spec(1741), t, Time::from_ps_int(5_000));
    let only = |r: &crate::chain::ConfigReport, f: fn(&Violation) -> bool| r.violations.len() == 1 && f(&r.violations[0]);
    let ok = validate_config(&spec(1300), t, t_min).is_ok()
        && only(&short, |v| matches!(v, Violation::Coverage { .. }))
        && only(&long, |v| matches!(v, Violation::Length { .. }));
    GateCheck { accepted: ok, short_chain: names(short), long_chain: names(long) }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkCheck {
    pub rate: f64,
    pub rate_err: f64,
    pub tau_rise_ps: f64,
    pub tau_fall_ps: f64,
    /// `(tau_rise - tau_fall) / tau_rise` from the calibration.
    pub expected_rate: f64,
    pub correction: CorrectionOutcome,
    /// Right end of the reference gap `1033..=1249` after correction.
    pub reference_endpoint: usize,
}

/// Shrink rate and correction quality of one sweep. Correction uses
/// `1 - rate` unless the recipe fixes the dilation.
pub fn check_shrink(recipe: &Recipe) -> Result<ShrinkCheck> {
    let data = recipe.acquire()?;
    let cal = recipe.calibrate(&data)?;
    let shrink = recipe.shrink(&data[0])?;
    let spec = recipe.correction_spec(Some(shrink.rate))?;
    let correction = evaluate_correction(&data[0], &recipe.acquire_truth()?, &spec)?;
    let (r, f) = (cal.tau_rise_ps.value, cal.tau_fall_ps.value);
    Ok(ShrinkCheck {
        rate: shrink.rate,
        rate_err: shrink.rate_err,
        tau_rise_ps: r,
        tau_fall_ps: f,
        expected_rate: (r - f) / r,
        correction,
        reference_endpoint: reference_endpoint(),
    })
}

fn reference_endpoint() -> usize {
    let mut bits = vec![true; 1300];
    bits[1032..1249].iter_mut().for_each(|b| *b = false);
    let c = correct_frame(&CaptureFrame::new(bits, Time::ZERO, None), &CorrectionSpec::default()).expect("default spec is valid");
    runs(&c.bits).iter().find(|r| !r.level).map_or(0, |r| r.end())
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub cases: usize,
    pub mismatches: Vec<String>,
}

/// Random chain, registers, waveform and capture instant.
fn random_capture_case(rng: &mut impl Rng, k: usize) -> (Tdl, DigitalWaveform, Time) {
    let rise = rng.random_range(1.0..8.0);
    let seed = rng.random::<u64>();
    let chain = ChainSpec {
        k,
        tau_rise_ps: rise,
        tau_fall_ps: rise * rng.random_range(0.5..1.5),
        tau_sigma_ps: rng.random_range(0.0..1.0),
        entry_delay_ps: rng.random_range(0.0..20.0),
        entry_min_pulse_ps: rng.random_range(0.0..10.0),
        dnl_ramp: (seed % 3 == 0).then(DnlRamp::default),
        allow_inverted_asymmetry: true,
        seed,
    };
    let regs = RegisterSpec {
        clock_jitter_sigma_ps: rng.random_range(0.0..20.0),
        skew_sigma_ps: rng.random_range(0.0..5.0),
        seed: seed.rotate_left(7),
    };
    let tdl = Tdl::new(chain, regs).expect("generated specs are valid");
    let t = Time::from_ps(rng.random_range(0.0..400.0));
    let span = tdl.lookback().fs();
    let mut times: Vec<i64> = (0..rng.random_range(0..80)).map(|_| rng.random_range(-span..200_000) + t.fs()).collect();
    times.sort_unstable();
    times.dedup();
    let w = DigitalWaveform::from_toggles(rng.random(), times.into_iter().map(Time)).expect("sorted distinct toggles");
    (tdl, w, t)
}

/// Compares the event-queue capture against the element-by-element oracle.
pub fn check_oracle(small_cases: usize, large_cases: usize, seed: u64) -> OracleCheck {
    let mut mismatches = Vec::new();
    for i in 0..small_cases + large_cases {
        let mut rng = stream(seed, domain::CHECK, i as u64);
        let k = if i < small_cases { rng.random_range(1..=64) } else { 1300 };
        let (tdl, w, t) = random_capture_case(&mut rng, k);
        let a = capture(&w, &tdl.chain, &tdl.registers, t);
        let b = capture_oracle(&w, &tdl.chain, &tdl.registers, t);
        let same = match (&a, &b) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if !same {
            mismatches.push(format!("case {i} (K={k}, chain seed {})", tdl.chain_spec.seed));
        }
    }
    OracleCheck { cases: small_cases + large_cases, mismatches }
}

#[derive(Debug, Clone, Serialize)]
pub struct RingCheck {
    pub truth_ps: f64,
    pub ring: NodeTimescale,
    pub single_gate: NodeTimescale,
    pub carry_time_ps: f64,
}

/// Per-gate delay of the recipe's ring, and of a one-gate ring with the
/// same nominal delay, using carry times calibrated from the recipe sweep.
pub fn check_ring(recipe: &Recipe) -> Result<RingCheck> {
    let cal = recipe.calibrate(&recipe.acquire()?)?;
    let ring = recipe.measure_ring(cal.tau_rise_ps, cal.tau_fall_ps)?;
    let mut single = recipe.clone();
    if let Some(r) = &mut single.ring {
        r.n = 1;
        r.initial_state = BitString::single_wavefront(1);
    }
    let single_gate = single.measure_ring(cal.tau_rise_ps, cal.tau_fall_ps)?;
    let delays = recipe.simulate_ring(Time::from_ps_int(1))?.gate_delays;
    let truth_ps = delays.iter().map(|d| (d.0.ps() + d.1.ps()) / 2.0).sum::<f64>() / delays.len() as f64;
    Ok(RingCheck { truth_ps, ring, single_gate, carry_time_ps: cal.tau_rise_ps.value })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeterminismCheck {
    pub first_sha256: String,
    pub rerun_sha256: String,
}

/// Saves the recipe's first sweep under `dir`, rebuilds the run from the
/// saved spec alone, and hashes both `frames.csv` renderings.
pub fn check_determinism(recipe: &Recipe, dir: &Path) -> Result<DeterminismCheck> {
    let (chain, regs, sweep) = recipe.channel(0);
    let sweep = sweep.ok_or_else(|| crate::error::Error::InvalidSpec("determinism check needs a sweep".into()))?;
    let first = run_sweep(&sweep, &Tdl::new(chain, regs)?)?;
    save_dataset(&first, dir)?;
    let saved = load_dataset(dir)?;
    let Acquisition::Sweep(spec) = &saved.provenance.acquisition else {
        unreachable!("a sweep was saved");
    };
    let rerun = run_sweep(spec, &Tdl::new(saved.provenance.chain.clone(), saved.provenance.registers.clone())?)?;
    let on_disk = std::fs::read(dir.join(crate::storage::FRAMES_CSV)).map_err(|e| crate::storage::StorageError::Io {
        path: dir.join(crate::storage::FRAMES_CSV),
        source: e,
    })?;
    Ok(DeterminismCheck { first_sha256: sha256_hex(&on_disk), rerun_sha256: sha256_hex(frames_to_csv(&rerun.frames).as_bytes()) })
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub cases: usize,
    pub failures: Vec<String>,
}

/// Seeded randomized versions of the core invariants.
pub fn check_properties(cases: usize, seed: u64) -> Vec<PropertyCheck> {
    type Prop = fn(&mut rand_chacha::ChaCha8Rng) -> std::result::Result<(), String>;
    let props: [(&str, Prop); 4] = [
        ("capture is translation equivariant", prop_translation),
        ("symmetric chain conserves pulse width", prop_pulse_width),
        ("correction leaves no short gaps", prop_correction),
        ("stitched series equals direct sampling", prop_stitching),
    ];
    props
        .iter()
        .enumerate()
        .map(|(p, (name, f))| {
            let failures = (0..cases)
                .filter_map(|i| {
                    let mut rng = stream(seed ^ (p as u64 + 1), domain::CHECK, i as u64);
                    f(&mut rng).err().map(|e| format!("case {i}: {e}"))
                })
                .collect();
            PropertyCheck { name: name.to_string(), cases, failures }
        })
        .collect()
}

fn prop_translation(rng: &mut rand_chacha::ChaCha8Rng) -> std::result::Result<(), String> {
    let k = rng.random_range(1..=64);
    let (mut tdl, w, t) = random_capture_case(rng, k);
    // The clock noise is keyed on the capture instant, so it has to be off.
    tdl.registers = RegisterSpec { clock_jitter_sigma_ps: 0.0, ..tdl.register_spec.clone() }.instantiate(k).map_err(|e| e.to_string())?;
    let dt = Time(rng.random_range(-50_000_000..50_000_000));
    let a = tdl.capture(&w, t).map_err(|e| e.to_string())?;
    let b = tdl.capture(&w.shift_phase(dt), t + dt).map_err(|e| e.to_string())?;
    (a.bits == b.bits).then_some(()).ok_or_else(|| format!("shift {dt} changed the frame"))
}

fn prop_pulse_width(rng: &mut rand_chacha::ChaCha8Rng) -> std::result::Result<(), String> {
    let (width, start, k) = (rng.random_range(30..400i64), rng.random_range(0..1_000i64), rng.random_range(10..200usize));
    let chain = sample_chain(&ChainSpec::ideal(k, 5.0)).map_err(|e| e.to_string())?;
    let pulse = DigitalWaveform::from_toggles(false, [Time::ZERO, Time::from_ps_int(width * 5)]).map_err(|e| e.to_string())?;
    let frame = capture(&pulse, &chain, &RegisterBank::ideal(k), Time::from_ps_int(width * 5 + start)).map_err(|e| e.to_string())?;
    let ones = runs(&frame.bits).into_iter().find(|r| r.level);
    match ones {
        Some(r) if r.start > 1 && r.end() < k && r.len as i64 != width => Err(format!("width {width} captured as {}", r.len)),
        _ => Ok(()),
    }
}

fn prop_correction(rng: &mut rand_chacha::ChaCha8Rng) -> std::result::Result<(), String> {
    let bits: Vec<bool> = (0..rng.random_range(1..400)).map(|_| rng.random()).collect();
    let spec = CorrectionSpec { gap_threshold: rng.random_range(1..30), dilation: rng.random_range(0.5..1.0) };
    let f = CaptureFrame::new(bits, Time::ZERO, None);
    let c = correct_frame(&f, &spec).map_err(|e| e.to_string())?;
    for r in runs(&f.bits).iter().filter(|r| !r.level && r.len < spec.gap_threshold) {
        if (r.start..=r.end()).any(|k| !c.bit(k)) {
            return Err(format!("gap of {} at {} survived", r.len, r.start));
        }
    }
    for r in runs(&c.bits).iter().filter(|r| !r.level) {
        if (r.start..=r.end()).any(|k| f.bit(k)) {
            return Err(format!("gap at {} is not inside an input gap", r.start));
        }
    }
    Ok(())
}

fn prop_stitching(rng: &mut rand_chacha::ChaCha8Rng) -> std::result::Result<(), String> {
    let tau = 5i64;
    let k_t = rng.random_range(20..200usize);
    let frames = rng.random_range(1..8usize);
    let mut t = 0;
    let toggles: Vec<Time> = (0..rng.random_range(1..60))
        .map(|_| {
            t += rng.random_range(10..3_000);
            Time::from_ps_int(t)
        })
        .collect();
    let w = DigitalWaveform::from_toggles(false, toggles).map_err(|e| e.to_string())?;
    let tdl = Tdl::new(ChainSpec::ideal(k_t + 10, tau as f64), RegisterSpec::default()).map_err(|e| e.to_string())?;
    let t0 = Time::from_ps_int(10_000 + rng.random_range(0..5_000));
    let data = run_continuous(&w, &tdl, t0, Time::from_ps_int(tau * k_t as i64), frames).map_err(|e| e.to_string())?;
    let s = stitch_frames(&data.frames, k_t).map_err(|e| e.to_string())?;
    for (j, &b) in s.bits.iter().enumerate() {
        if b != w.evaluate(t0 + Time::from_ps_int((j as i64 - k_t as i64) * tau)) {
            return Err(format!("sample {j} differs"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub seed: u64,
    pub criteria: Vec<CriterionOutcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            let _ = writeln!(s, "[{}] {:>2}. {:<40} {} ({:.1} s)", if c.passed { "PASS" } else { "FAIL" }, c.id, c.title, c.detail, c.seconds);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub seed: u64,
    pub oracle_small_cases: usize,
    pub oracle_large_cases: usize,
    pub property_cases: usize,
    /// Scratch directory for the determinism check.
    pub scratch: std::path::PathBuf,
}

impl ReportOptions {
    pub fn new(scratch: impl Into<std::path::PathBuf>) -> Self {
        ReportOptions { seed: 1, oracle_small_cases: 1000, oracle_large_cases: 100, property_cases: 1000, scratch: scratch.into() }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Runs every check on the checked-in presets.
pub fn run_report(opts: &ReportOptions) -> Result<Report> {
    let mut criteria = Vec::new();
    let mut push = |id: u8, title: &str, started: Instant, passed: bool, detail: String| {
        criteria.push(CriterionOutcome { id, title: title.into(), passed, detail, seconds: started.elapsed().as_secs_f64() });
    };

    let t = Instant::now();
    let c = check_carry_times(&Recipe::preset("fig4")?)?;
    let ok = within(c.rise.value, c.truth_rise_ps, CARRY_TIME_TOLERANCE_PS)
        && within(c.fall.value, c.truth_fall_ps, CARRY_TIME_TOLERANCE_PS)
        && c.rise.std_err <= CARRY_TIME_MAX_SE_PS
        && c.fall.std_err <= CARRY_TIME_MAX_SE_PS
        && c.seconds < CALIBRATION_MAX_SECONDS;
    let detail = format!(
        "rise {:.3}±{:.4} (true {:.3}), fall {:.3}±{:.4} (true {:.3}) ps in {:.2} s",
        c.rise.value, c.rise.std_err, c.truth_rise_ps, c.fall.value, c.fall.std_err, c.truth_fall_ps, c.seconds
    );
    push(1, "carry-time recovery", t, ok, detail);
    let ok = within(c.precision_ps, PRECISION_TARGET_PS, PRECISION_REL_TOLERANCE * PRECISION_TARGET_PS)
        && c.precision_without_jitter_ps <= PRECISION_FLOOR_PS;
    push(2, "single-shot precision", t, ok, format!("{:.2} ps, {:.2} ps without jitter", c.precision_ps, c.precision_without_jitter_ps));

    let t = Instant::now();
    let g = check_constraint_gate();
    push(3, "constraint gate", t, g.accepted, format!("K=1000: {}; K=1741: {}", g.short_chain.join(", "), g.long_chain.join(", ")));

    let t = Instant::now();
    let s = check_shrink(&Recipe::preset("fig6")?)?;
    let ok = (SHRINK_RATE_RANGE.0..=SHRINK_RATE_RANGE.1).contains(&s.rate) && within(s.rate, s.expected_rate, SHRINK_RATE_CONSISTENCY);
    push(4, "shrink-rate consistency", t, ok, format!("rate {:.4}±{:.4}, calibration implies {:.4}", s.rate, s.rate_err, s.expected_rate));
    let ok = s.correction.improvement() >= CORRECTION_MIN_IMPROVEMENT && s.reference_endpoint == 1186;
    let detail = format!(
        "|width error| {:.2} -> {:.2} carries over {} pulses (alpha {:.4}); 1249 -> {}",
        s.correction.raw_mean_abs_error, s.correction.corrected_mean_abs_error, s.correction.pulses, s.correction.dilation, s.reference_endpoint
    );
    push(5, "shrinkage correction", t, ok, detail);

    let t = Instant::now();
    let o = check_oracle(opts.oracle_small_cases, opts.oracle_large_cases, opts.seed);
    push(6, "capture oracle equivalence", t, o.mismatches.is_empty(), format!("{} cases, {} mismatches", o.cases, o.mismatches.len()));

    let t = Instant::now();
    let r = check_ring(&Recipe::preset("appendix-ro19")?)?;
    let ok = within(r.ring.per_node_ps, RING_GATE_DELAY_PS, RING_TOLERANCE_PS)
        && within(r.single_gate.per_node_ps, r.ring.per_node_ps, r.carry_time_ps);
    let detail = format!(
        "N=19: {:.2}±{:.2} ps/gate (configured mean {:.2}); N=1: {:.2} ps",
        r.ring.per_node_ps, r.ring.per_node_err_ps, r.truth_ps, r.single_gate.per_node_ps
    );
    push(7, "ring-oscillator gate delay", t, ok, detail);

    let t = Instant::now();
    let d = check_determinism(&Recipe::preset("fig3a")?, &opts.scratch)?;
    push(8, "determinism", t, d.first_sha256 == d.rerun_sha256, format!("frames.csv sha256 {}", &d.first_sha256[..16]));

    let t = Instant::now();
    let props = check_properties(opts.property_cases, opts.seed);
    let failed: Vec<String> = props.iter().filter(|p| !p.failures.is_empty()).map(|p| format!("{} ({})", p.name, p.failures[0])).collect();
    let detail = if failed.is_empty() { format!("{} properties x {} cases", props.len(), opts.property_cases) } else { failed.join("; ") };
    push(9, "property suites", t, failed.is_empty(), detail);

    Ok(Report { tool_version: crate::storage::TOOL_VERSION.into(), seed: opts.seed, criteria })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_examples_hold() {
        let g = check_constraint_gate();
        assert!(g.accepted, "{g:?}");
    }

    #[test]
    fn reference_gap_endpoint() {
        assert_eq!(reference_endpoint(), 1186);
    }

    #[test]
    fn small_oracle_and_property_batches_pass() {
        assert!(check_oracle(40, 2, 5).mismatches.is_empty());
        for p in check_properties(40, 5) {
            assert!(p.failures.is_empty(), "{}: {:?}", p.name, p.failures);
        }
    }
}
