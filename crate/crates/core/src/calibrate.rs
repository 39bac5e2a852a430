//! Carry-time calibration from phase sweeps.
//!
//! Edges are extracted from every frame, unwrapped into a continuous phase
//! coordinate `u = n * step + m * P` (source cycle `m`), pooled across
//! datasets, and regressed against their tap index. The slope gives the
//! carry time per polarity; the per-tap mean phase gives the transfer
//! function from tap index to time.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chain::CaptureFrame;
use crate::error::{Error, Result};
use crate::fit::{self, fit_line, LineFit};
use crate::sweep::SweepDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Rising,
    Falling,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Rising, Polarity::Falling];
}

/// Maximal constant stretch of a frame. `start` is a 1-based tap index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub start: usize,
    pub len: usize,
    pub level: bool,
}

impl Run {
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }
}

pub fn runs(bits: &[bool]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (i, &b) in bits.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.level == b => r.len += 1,
            _ => out.push(Run { start: i + 1, len: 1, level: b }),
        }
    }
    out
}

/// Removes bubbles: interior runs shorter than `min_run` are flipped,
/// shortest (then leftmost) first, until none remain. Runs touching either
/// end of the chain are kept since their true length is unknown.
pub fn smooth(bits: &[bool], min_run: usize) -> Vec<bool> {
    let mut out = bits.to_vec();
    loop {
        let rs = runs(&out);
        if rs.len() < 3 {
            return out;
        }
        let victim = rs[1..rs.len() - 1].iter().filter(|r| r.len < min_run).min_by_key(|r| (r.len, r.start));
        match victim {
            Some(r) => out[r.start - 1..r.end()].iter_mut().for_each(|b| *b = !*b),
            None => return out,
        }
    }
}

/// A transition inside a frame: the signal differs between tap `index` and
/// tap `index + 1`. A rising edge has the newer (lower) tap high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameEdge {
    pub index: usize,
    pub polarity: Polarity,
}

pub fn extract_edges(frame: &CaptureFrame, min_run: usize) -> Vec<FrameEdge> {
    let bits = smooth(&frame.bits, min_run);
    bits.windows(2)
        .enumerate()
        .filter(|(_, p)| p[0] != p[1])
        .map(|(i, p)| FrameEdge { index: i + 1, polarity: if p[0] { Polarity::Rising } else { Polarity::Falling } })
        .collect()
}

/// An edge with its unwrapped phase coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeObservation {
    pub dataset: usize,
    pub phase_index: u64,
    pub cycle: i64,
    pub phase_ps: f64,
    pub edge_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Group {
    phase_ps: f64,
    xs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Pooled {
    obs: Vec<EdgeObservation>,
    groups: Vec<Group>,
    group_of: Vec<usize>,
}

struct SweepGeometry {
    step_ps: f64,
    period_ps: f64,
    k: usize,
}

fn geometry(datasets: &[SweepDataset]) -> Result<SweepGeometry> {
    let first = datasets.first().ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
    let spec = first.sweep_spec().ok_or_else(|| Error::InvalidSpec("calibration requires phase-sweep datasets".into()))?;
    let g = SweepGeometry { step_ps: spec.phase_step_ps, period_ps: spec.source.period().ps(), k: first.k() };
    for d in datasets {
        let s = d.sweep_spec().ok_or_else(|| Error::InvalidSpec("calibration requires phase-sweep datasets".into()))?;
        if s.phase_step_ps != g.step_ps || s.source.period().ps() != g.period_ps || d.k() != g.k {
            return Err(Error::InvalidSpec("datasets differ in phase step, source period or chain length".into()));
        }
    }
    Ok(g)
}

fn candidates(ds: &SweepDataset, min_run: usize, pol: Polarity) -> Vec<(u64, Vec<f64>)> {
    ds.frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let n = f.phase_index.unwrap_or(i as u64);
            let xs = extract_edges(f, min_run).into_iter().filter(|e| e.polarity == pol).map(|e| e.index as f64).collect();
            (n, xs)
        })
        .collect()
}

/// Median per-step displacement of edges, measured over a lag of about a
/// sixteenth of the source period so that fine steps still resolve motion.
fn drift_per_step(cands: &[(u64, Vec<f64>)], geo: &SweepGeometry) -> Option<f64> {
    let lag = ((geo.period_ps / (16.0 * geo.step_ps)).floor() as u64).max(1);
    let by_phase: BTreeMap<u64, &Vec<f64>> = cands.iter().map(|(n, xs)| (*n, xs)).collect();
    let mut moves = Vec::new();
    for (n, a) in &by_phase {
        let Some(b) = by_phase.get(&(n + lag)) else { continue };
        if a.is_empty() {
            continue;
        }
        for x in b.iter() {
            let nearest = a.iter().copied().min_by(|p, q| (p - x).abs().total_cmp(&(q - x).abs())).expect("non-empty");
            moves.push(x - nearest);
        }
    }
    (!moves.is_empty()).then(|| fit::median(&moves) / lag as f64)
}

/// `(phase index, cycle, phase, edge index)`.
type Assigned = (u64, i64, f64, f64);

/// Assigns source cycles to each edge of one dataset against the linear
/// model `x = x0 + s * u`, refining the model twice.
fn unwrap_dataset(cands: &[(u64, Vec<f64>)], geo: &SweepGeometry) -> Result<(Vec<Assigned>, LineFit)> {
    let drift = drift_per_step(cands, geo).ok_or_else(|| Error::InsufficientData("no pair of frames shares an edge".into()))?;
    if drift.abs() * geo.period_ps / geo.step_ps < 1.0 {
        return Err(Error::InsufficientData(format!(
            "edge positions do not advance with phase (median drift {drift} carries per step)"
        )));
    }
    let mut s = drift / geo.step_ps;
    let (n0, xs0) = cands.iter().find(|(_, xs)| !xs.is_empty()).expect("drift implies edges");
    let reference = if s < 0.0 { xs0.iter().copied().fold(f64::MIN, f64::max) } else { xs0.iter().copied().fold(f64::MAX, f64::min) };
    let mut x0 = reference - s * (*n0 as f64 * geo.step_ps);

    let assign = |s: f64, x0: f64| -> Vec<Assigned> {
        let mut out = Vec::new();
        for (n, xs) in cands {
            let phi = *n as f64 * geo.step_ps;
            for &x in xs {
                let m = (((x - x0) / s - phi) / geo.period_ps).round() as i64;
                out.push((*n, m, phi + m as f64 * geo.period_ps, x));
            }
        }
        out
    };
    let mut last = None;
    for _ in 0..3 {
        let obs = assign(s, x0);
        let u: Vec<f64> = obs.iter().map(|o| o.2).collect();
        let x: Vec<f64> = obs.iter().map(|o| o.3).collect();
        let f = fit_line(&u, &x, None)?;
        s = f.slope;
        x0 = f.intercept;
        last = Some((obs, f));
    }
    Ok(last.expect("loop runs"))
}

fn pool(datasets: &[SweepDataset], min_run: usize, pol: Polarity) -> Result<Pooled> {
    let geo = geometry(datasets)?;
    let mut per_dataset = Vec::new();
    for ds in datasets {
        per_dataset.push(unwrap_dataset(&candidates(ds, min_run, pol), &geo)?);
    }
    // Align cycle labels of every dataset to the first one.
    let (s0, a0) = (per_dataset[0].1.slope, per_dataset[0].1.intercept);
    let mut obs = Vec::new();
    for (d, (rows, f)) in per_dataset.iter().enumerate() {
        let shift = ((f.intercept - a0) / (s0 * geo.period_ps)).round() as i64;
        for &(n, m, u, x) in rows {
            obs.push(EdgeObservation {
                dataset: d,
                phase_index: n,
                cycle: m + shift,
                phase_ps: u + shift as f64 * geo.period_ps,
                edge_index: x as usize,
            });
        }
    }
    let mut keyed: BTreeMap<(u64, i64), usize> = BTreeMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of = Vec::with_capacity(obs.len());
    for o in &obs {
        let g = *keyed.entry((o.phase_index, o.cycle)).or_insert_with(|| {
            groups.push(Group { phase_ps: o.phase_ps, xs: Vec::new() });
            groups.len() - 1
        });
        groups[g].xs.push(o.edge_index as f64);
        group_of.push(g);
    }
    Ok(Pooled { obs, groups, group_of })
}

/// Estimate with one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarityFit {
    pub polarity: Polarity,
    pub tau_ps: Estimate,
    /// Tap index per picosecond of source delay; negative when delaying
    /// the source moves edges towards tap 1.
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub weighted: bool,
    pub reduced_chi2: f64,
    pub residual_rms_carries: f64,
    pub groups: usize,
    pub observations: usize,
}

fn fit_pooled(p: &Pooled, pol: Polarity) -> Result<PolarityFit> {
    if p.groups.len() < 2 {
        return Err(Error::InsufficientData(format!("{pol:?} edges seen at fewer than two phases")));
    }
    let u: Vec<f64> = p.groups.iter().map(|g| g.phase_ps).collect();
    let x: Vec<f64> = p.groups.iter().map(|g| fit::mean(&g.xs)).collect();
    let weighted = p.groups.iter().all(|g| g.xs.len() >= 2);
    let line = if weighted {
        // Floor at the quantization variance of one carry.
        let w: Vec<f64> = p.groups.iter().map(|g| g.xs.len() as f64 / fit::std_dev(&g.xs).powi(2).max(1.0 / 12.0)).collect();
        let f = fit_line(&u, &x, Some(&w))?;
        f.scaled(f.reduced_chi2().max(1.0))
    } else {
        fit_line(&u, &x, None)?
    };
    if line.slope == 0.0 {
        return Err(Error::InsufficientData("edge positions do not advance with phase".into()));
    }
    let residuals: Vec<f64> = p.obs.iter().map(|o| o.edge_index as f64 - line.at(o.phase_ps)).collect();
    let tau = 1.0 / line.slope.abs();
    Ok(PolarityFit {
        polarity: pol,
        tau_ps: Estimate { value: tau, std_err: line.slope_err() / (line.slope * line.slope) },
        slope: line.slope,
        slope_err: line.slope_err(),
        intercept: line.intercept,
        weighted,
        reduced_chi2: line.reduced_chi2(),
        residual_rms_carries: fit::rms(&residuals),
        groups: p.groups.len(),
        observations: p.obs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarryTimeFit {
    pub rising: PolarityFit,
    pub falling: PolarityFit,
}

/// Carry time per polarity from one or more phase sweeps of the same
/// source. Edges are bubble-filtered with `min_run` first.
pub fn fit_carry_times(datasets: &[SweepDataset], min_run: usize) -> Result<CarryTimeFit> {
    Ok(CarryTimeFit {
        rising: fit_pooled(&pool(datasets, min_run, Polarity::Rising)?, Polarity::Rising)?,
        falling: fit_pooled(&pool(datasets, min_run, Polarity::Falling)?, Polarity::Falling)?,
    })
}

/// Time of each tap relative to the first populated tap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferFunction {
    pub polarity: Polarity,
    /// First and last tap with observations; all vectors cover this range.
    pub first: usize,
    pub last: usize,
    pub t_ps: Vec<f64>,
    pub counts: Vec<usize>,
    /// Tap spread of repeated observations landing on each tap; `None`
    /// where no repeated observation exists.
    pub delta_x: Vec<Option<f64>>,
    pub slope_ps_per_carry: Vec<f64>,
    pub delta_t_ps: Vec<Option<f64>>,
    /// Source phase that puts an edge at `t = 0`.
    pub phase_origin_ps: f64,
    /// +1 when increasing tap index means increasing source phase.
    pub direction: f64,
    /// Spread taken from the line-fit residuals because no phase was
    /// observed more than once.
    pub delta_x_from_residuals: bool,
}

impl TransferFunction {
    pub fn time_at(&self, x: usize) -> Option<f64> {
        (self.first..=self.last).contains(&x).then(|| self.t_ps[x - self.first])
    }

    /// Source phase at which an edge lands on tap `x`.
    pub fn predict_phase(&self, x: usize) -> Option<f64> {
        self.time_at(x).map(|t| self.direction * (t + self.direction * self.phase_origin_ps))
    }

    /// Number of taps whose time lies within `[0, period]`.
    pub fn taps_within(&self, period_ps: f64) -> usize {
        self.t_ps.iter().filter(|&&t| t <= period_ps).count()
    }
}

/// Pool-adjacent-violators fit of a non-decreasing sequence, merging equal
/// neighbours so block values are strictly increasing. Returns
/// `(weighted mean position, value)` per block.
fn isotonic_knots(points: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    // (sum w*x, sum w*y, sum w)
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    for &(x, y, w) in points {
        blocks.push((w * x, w * y, w));
        while blocks.len() >= 2 {
            let b = blocks[blocks.len() - 1];
            let a = blocks[blocks.len() - 2];
            if a.1 / a.2 >= b.1 / b.2 {
                blocks.pop();
                *blocks.last_mut().expect("two blocks") = (a.0 + b.0, a.1 + b.1, a.2 + b.2);
            } else {
                break;
            }
        }
    }
    blocks.into_iter().map(|(sx, sy, w)| (sx / w, sy / w)).collect()
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 < x).clamp(1, knots.len() - 1);
    let (a, b) = (knots[i - 1], knots[i]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

const SLOPE_HALF_WINDOW: usize = 12;

fn transfer_from_pooled(p: &Pooled, fit: &PolarityFit, pol: Polarity) -> Result<TransferFunction> {
    let direction = fit.slope.signum();
    let mut by_tap: BTreeMap<usize, (f64, usize, Vec<f64>)> = BTreeMap::new();
    for (o, &g) in p.obs.iter().zip(&p.group_of) {
        let e = by_tap.entry(o.edge_index).or_insert((0.0, 0, Vec::new()));
        e.0 += direction * o.phase_ps;
        e.1 += 1;
        let xs = &p.groups[g].xs;
        if xs.len() >= 2 {
            e.2.push(fit::std_dev(xs));
        }
    }
    let points: Vec<(f64, f64, f64)> = by_tap.iter().map(|(&x, (sum, n, _))| (x as f64, sum / *n as f64, *n as f64)).collect();
    let knots = isotonic_knots(&points);
    if knots.len() < 2 {
        return Err(Error::InsufficientData(format!("{pol:?} edges populate fewer than two distinct taps")));
    }
    let first = *by_tap.keys().next().expect("knots imply taps");
    let last = *by_tap.keys().next_back().expect("knots imply taps");
    let origin = interpolate(&knots, first as f64);
    let t_ps: Vec<f64> = (first..=last).map(|x| interpolate(&knots, x as f64) - origin).collect();

    let any_repeat = by_tap.values().any(|v| !v.2.is_empty());
    let delta_x: Vec<Option<f64>> = (first..=last)
        .map(|x| match by_tap.get(&x) {
            Some((_, _, spreads)) if !spreads.is_empty() => Some(fit::rms(spreads)),
            Some(_) if !any_repeat => Some(fit.residual_rms_carries),
            _ => None,
        })
        .collect();

    let slope_ps_per_carry: Vec<f64> = (first..=last)
        .map(|x| {
            let lo = x.saturating_sub(SLOPE_HALF_WINDOW).max(first);
            let hi = (x + SLOPE_HALF_WINDOW).min(last);
            let xs: Vec<f64> = (lo..=hi).map(|i| i as f64).collect();
            let ts: Vec<f64> = (lo..=hi).map(|i| t_ps[i - first]).collect();
            fit_line(&xs, &ts, None).map_or(fit.tau_ps.value, |f| f.slope)
        })
        .collect();
    let delta_t_ps = delta_x.iter().zip(&slope_ps_per_carry).map(|(dx, s)| dx.map(|d| d * s)).collect();

    Ok(TransferFunction {
        polarity: pol,
        first,
        last,
        t_ps,
        counts: (first..=last).map(|x| by_tap.get(&x).map_or(0, |v| v.1)).collect(),
        delta_x,
        slope_ps_per_carry,
        delta_t_ps,
        phase_origin_ps: direction * origin,
        direction,
        delta_x_from_residuals: !any_repeat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferFunctions {
    pub rising: TransferFunction,
    pub falling: TransferFunction,
}

pub fn build_transfer_function(datasets: &[SweepDataset], min_run: usize) -> Result<TransferFunctions> {
    Ok(calibrate(datasets, min_run)?.transfer)
}

/// RMS of the per-tap timing uncertainty over populated taps.
pub fn single_shot_precision(tf: &TransferFunction) -> f64 {
    let v: Vec<f64> = tf.delta_t_ps.iter().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        fit::rms(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub tau_rise_ps: Estimate,
    pub tau_fall_ps: Estimate,
    pub fit: CarryTimeFit,
    pub transfer: TransferFunctions,
    pub precision_rise_ps: f64,
    pub precision_fall_ps: f64,
    pub datasets: usize,
    pub min_run: usize,
}

impl CalibrationResult {
    /// Mean of the two polarity precisions.
    pub fn precision_ps(&self) -> f64 {
        0.5 * (self.precision_rise_ps + self.precision_fall_ps)
    }
}

pub fn calibrate(datasets: &[SweepDataset], min_run: usize) -> Result<CalibrationResult> {
    let mut fits = Vec::new();
    let mut tfs = Vec::new();
    for pol in Polarity::BOTH {
        let pooled = pool(datasets, min_run, pol)?;
        let f = fit_pooled(&pooled, pol)?;
        tfs.push(transfer_from_pooled(&pooled, &f, pol)?);
        fits.push(f);
    }
    let falling_tf = tfs.pop().expect("two polarities");
    let rising_tf = tfs.pop().expect("two polarities");
    let falling = fits.pop().expect("two polarities");
    let rising = fits.pop().expect("two polarities");
    Ok(CalibrationResult {
        tau_rise_ps: rising.tau_ps,
        tau_fall_ps: falling.tau_ps,
        precision_rise_ps: single_shot_precision(&rising_tf),
        precision_fall_ps: single_shot_precision(&falling_tf),
        fit: CarryTimeFit { rising, falling },
        transfer: TransferFunctions { rising: rising_tf, falling: falling_tf },
        datasets: datasets.len(),
        min_run,
    })
}

/// Width statistics of pulses whose falling edge sits in one index bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkResult {
    /// Carries of width lost per carry travelled.
    pub rate: f64,
    pub rate_err: f64,
    pub intercept: f64,
    pub bins: Vec<WidthBin>,
    /// `(falling-edge index, width)` of every measured pulse.
    pub samples: Vec<(usize, usize)>,
}

/// Pulse width against the position of its falling edge.
///
/// Pulses are 1-runs of at least `min_run` taps after bubble filtering that
/// touch neither end of the chain. The falling edge of a run spanning taps
/// `a..=b` lies at `a - 1`.
pub fn shrink_analysis(dataset: &SweepDataset, min_run: usize, bin_width: usize) -> Result<ShrinkResult> {
    if bin_width == 0 {
        return Err(Error::InvalidSpec("bin width must be positive".into()));
    }
    let k = dataset.k();
    let mut samples = Vec::new();
    for f in &dataset.frames {
        for r in runs(&smooth(&f.bits, min_run)) {
            if r.level && r.len >= min_run && r.start > 1 && r.end() < k {
                samples.push((r.start - 1, r.len));
            }
        }
    }
    let mut binned: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(x, w) in &samples {
        binned.entry(x / bin_width).or_default().push(w as f64);
    }
    let bins: Vec<WidthBin> = binned
        .into_iter()
        .map(|(b, ws)| WidthBin {
            lo: b * bin_width,
            hi: (b + 1) * bin_width - 1,
            count: ws.len(),
            mean: fit::mean(&ws),
            std: fit::std_dev(&ws),
            min: fit::quantile(&ws, 0.0),
            q1: fit::quantile(&ws, 0.25),
            median: fit::median(&ws),
            q3: fit::quantile(&ws, 0.75),
            max: fit::quantile(&ws, 1.0),
        })
        .collect();
    if bins.len() < 2 {
        return Err(Error::InsufficientData("pulses populate fewer than two position bins".into()));
    }
    let bx: Vec<f64> = bins.iter().map(|b| 0.5 * (b.lo + b.hi) as f64).collect();
    let by: Vec<f64> = bins.iter().map(|b| b.mean).collect();
    let line = fit_line(&bx, &by, None)?;
    Ok(ShrinkResult { rate: -line.slope, rate_err: line.slope_err(), intercept: line.intercept, bins, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, DnlRamp, RegisterSpec, Tdl};
    use crate::sweep::{run_sweep, SweepSpec};
    use crate::waveform::PllOutputSpec;
    use proptest::prelude::*;

    fn frame(s: &str) -> CaptureFrame {
        CaptureFrame::from_str_bits(s)
    }

    #[test]
    fn runs_and_edges() {
        let f = frame("1100011");
        let rs = runs(&f.bits);
        assert_eq!(rs.len(), 3);
        assert_eq!((rs[1].start, rs[1].len, rs[1].level), (3, 3, false));
        let e = extract_edges(&f, 1);
        assert_eq!(e, vec![
            FrameEdge { index: 2, polarity: Polarity::Rising },
            FrameEdge { index: 5, polarity: Polarity::Falling },
        ]);
    }

    #[test]
    fn bubbles_are_flipped_shortest_first() {
        let f = frame("1111111011111100000100000");
        let e = extract_edges(&f, 3);
        assert_eq!(e, vec![FrameEdge { index: 14, polarity: Polarity::Rising }]);
        // End runs survive even when short.
        assert_eq!(smooth(&frame("01111").bits, 3), frame("01111").bits);
    }

    proptest! {
        #[test]
        fn smoothing_leaves_no_short_interior_runs(bits in prop::collection::vec(any::<bool>(), 1..200), min_run in 1usize..8) {
            let s = smooth(&bits, min_run);
            let rs = runs(&s);
            if rs.len() > 2 {
                prop_assert!(rs[1..rs.len() - 1].iter().all(|r| r.len >= min_run));
            }
            prop_assert_eq!(s.len(), bits.len());
        }
    }

    #[test]
    fn isotonic_pools_violations() {
        let k = isotonic_knots(&[(1.0, 1.0, 1.0), (2.0, 3.0, 1.0), (3.0, 2.0, 1.0), (4.0, 5.0, 1.0)]);
        assert_eq!(k, vec![(1.0, 1.0), (2.5, 2.5), (4.0, 5.0)]);
        let k = isotonic_knots(&[(1.0, 2.0, 1.0), (2.0, 2.0, 3.0)]);
        assert_eq!(k, vec![(1.75, 2.0)]);
    }

    fn ideal_sweep(k: usize, tau: f64, step: f64, steps: usize, freq: f64, duty: f64) -> SweepDataset {
        let tdl = Tdl::new(ChainSpec::ideal(k, tau), RegisterSpec::default()).unwrap();
        run_sweep(&SweepSpec::new(PllOutputSpec::new(freq, duty), 5000.0, step, steps), &tdl).unwrap()
    }

    #[test]
    fn ideal_chain_gives_exact_carry_time() {
        let d = ideal_sweep(1300, 5.0, 78.0, 512, 100e6, 0.25);
        let f = fit_carry_times(&[d], 3).unwrap();
        assert!((f.rising.tau_ps.value - 5.0).abs() < 1e-3, "{:?}", f.rising);
        assert!((f.falling.tau_ps.value - 5.0).abs() < 1e-3, "{:?}", f.falling);
        assert!(f.rising.slope < 0.0);
        assert!(!f.rising.weighted);
    }

    #[test]
    fn separate_polarities_are_recovered() {
        let tdl = Tdl::new(ChainSpec { tau_fall_ps: 4.54, ..ChainSpec::ideal(1300, 4.91) }, RegisterSpec::default()).unwrap();
        let d = run_sweep(&SweepSpec::new(PllOutputSpec::new(100e6, 0.25), 5000.0, 78.0, 256), &tdl).unwrap();
        let f = fit_carry_times(&[d], 3).unwrap();
        assert!((f.rising.tau_ps.value - 4.91).abs() < 0.01);
        assert!((f.falling.tau_ps.value - 4.54).abs() < 0.01);
    }

    #[test]
    fn many_edges_per_frame_unwrap_consistently() {
        let d = ideal_sweep(1300, 5.0, 104.0, 256, 600e6, 0.5);
        let f = fit_carry_times(&[d], 3).unwrap();
        assert!((f.rising.tau_ps.value - 5.0).abs() < 1e-2, "{:?}", f.rising);
    }

    #[test]
    fn static_edges_are_rejected() {
        // A step of one full period leaves every frame identical.
        let d = ideal_sweep(1300, 5.0, 10_000.0, 32, 100e6, 0.25);
        assert!(matches!(fit_carry_times(&[d], 3), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn transfer_function_is_monotone_and_tracks_tau() {
        let d = ideal_sweep(1300, 5.0, 78.0, 512, 100e6, 0.25);
        let c = calibrate(&[d], 3).unwrap();
        for tf in [&c.transfer.rising, &c.transfer.falling] {
            assert_eq!(tf.t_ps[0], 0.0);
            assert!(tf.t_ps.windows(2).all(|p| p[1] > p[0]));
            let span = (tf.last - tf.first) as f64;
            let mean_step = tf.t_ps.last().unwrap() / span;
            assert!((mean_step - 5.0).abs() < 0.05, "{mean_step}");
            assert!(tf.delta_x_from_residuals);
        }
    }

    #[test]
    fn phase_prediction_inverts_the_transfer_function() {
        let d = ideal_sweep(1300, 5.0, 78.0, 512, 100e6, 0.25);
        let c = calibrate(std::slice::from_ref(&d), 3).unwrap();
        let tf = &c.transfer.rising;
        let p = pool(&[d], 3, Polarity::Rising).unwrap();
        let err: Vec<f64> =
            p.obs.iter().filter_map(|o| tf.predict_phase(o.edge_index).map(|u| u - o.phase_ps)).collect();
        assert!(fit::rms(&err) < 5.0, "{}", fit::rms(&err));
    }

    #[test]
    fn ramp_shows_in_transfer_function() {
        let spec = ChainSpec { dnl_ramp: Some(DnlRamp::default()), ..ChainSpec::ideal(300, 5.0) };
        let tdl = Tdl::new(spec, RegisterSpec::default()).unwrap();
        let d = run_sweep(&SweepSpec::new(PllOutputSpec::new(100e6, 0.5), 1000.0, 2.0, 5000), &tdl).unwrap();
        let c = calibrate(&[d], 3).unwrap();
        let tf = &c.transfer.rising;
        let early = (tf.time_at(5).unwrap() - tf.time_at(2).unwrap()) / 3.0;
        let late = (tf.time_at(250).unwrap() - tf.time_at(150).unwrap()) / 100.0;
        assert!(early > 2.2 * late, "early {early} late {late}");
        assert!((late - 5.0).abs() < 0.1);
    }

    #[test]
    fn shrink_rate_matches_delay_asymmetry() {
        let tdl = Tdl::new(ChainSpec { tau_fall_ps: 4.54, ..ChainSpec::ideal(1300, 4.91) }, RegisterSpec::default()).unwrap();
        let d = run_sweep(&SweepSpec::new(PllOutputSpec::new(600e6, 0.5), 5000.0, 104.0, 256), &tdl).unwrap();
        let s = shrink_analysis(&d, 3, 25).unwrap();
        let expect = (4.91 - 4.54) / 4.91;
        assert!((s.rate - expect).abs() < 0.01, "rate {} expect {expect}", s.rate);
        assert!(s.bins.iter().all(|b| b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max));
    }

    #[test]
    fn symmetric_chain_does_not_shrink() {
        let d = ideal_sweep(1300, 5.0, 104.0, 128, 600e6, 0.5);
        let s = shrink_analysis(&d, 3, 25).unwrap();
        assert!(s.rate.abs() < 0.005, "{}", s.rate);
    }
}
