//! Pulse-shrink correction.
//!
//! Gaps between pulses appear stretched because every pulse ahead of them
//! has shrunk. Each 0-run of at least `gap_threshold` taps spanning
//! `l..=r` is pulled back to `l..=floor(dilation * r)`, and everything
//! outside the corrected gaps becomes 1. A gap reaching the last tap is left
//! alone since its true extent is unknown.

use serde::{Deserialize, Serialize};

use crate::calibrate::runs;
use crate::chain::CaptureFrame;
use crate::error::{Error, Result};
use crate::fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionSpec {
    #[serde(default = "default_threshold")]
    pub gap_threshold: usize,
    #[serde(default = "default_dilation")]
    pub dilation: f64,
}

fn default_threshold() -> usize {
    15
}

fn default_dilation() -> f64 {
    0.95
}

impl Default for CorrectionSpec {
    fn default() -> Self {
        CorrectionSpec { gap_threshold: default_threshold(), dilation: default_dilation() }
    }
}

impl CorrectionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gap_threshold == 0 || !(self.dilation > 0.0 && self.dilation <= 1.0) {
            return Err(Error::InvalidSpec("gap threshold must be positive and dilation in (0, 1]".into()));
        }
        Ok(())
    }

    /// Dilation that undoes shrinkage at `rate` carries per carry.
    pub fn from_shrink_rate(rate: f64, gap_threshold: usize) -> Self {
        CorrectionSpec { gap_threshold, dilation: 1.0 - rate }
    }
}

pub fn correct_frame(frame: &CaptureFrame, spec: &CorrectionSpec) -> Result<CaptureFrame> {
    spec.validate()?;
    let k = frame.k();
    let mut bits = vec![true; k];
    for r in runs(&frame.bits) {
        if r.level || r.len < spec.gap_threshold {
            continue;
        }
        let end = if r.end() == k { k } else { (spec.dilation * r.end() as f64).floor() as usize };
        for b in bits.iter_mut().take(end).skip(r.start - 1) {
            *b = false;
        }
    }
    Ok(CaptureFrame { bits, ..frame.clone() })
}

/// A truth pulse paired with the test pulse that overlaps it most.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseMatch {
    pub truth_start: usize,
    pub truth_width: usize,
    pub width: usize,
    pub error: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityStats {
    pub matches: Vec<PulseMatch>,
    pub unmatched_truth: usize,
    pub unmatched_test: usize,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub rms_error: f64,
}

/// Pulses (1-runs) that touch neither end of the frame, as `(start, end)`.
fn pulses(bits: &[bool]) -> Vec<(usize, usize)> {
    runs(bits).into_iter().filter(|r| r.level && r.start > 1 && r.end() < bits.len()).map(|r| (r.start, r.end())).collect()
}

/// Width errors of `test` pulses against `truth` pulses, pairing each truth
/// pulse with its largest-overlap partner (one-to-one, largest overlaps
/// first).
pub fn correction_fidelity(truth: &CaptureFrame, test: &CaptureFrame) -> Result<FidelityStats> {
    if truth.k() != test.k() {
        return Err(Error::InvalidSpec("frames differ in length".into()));
    }
    let tp = pulses(&truth.bits);
    let sp = pulses(&test.bits);
    let mut pairs = Vec::new();
    for (i, a) in tp.iter().enumerate() {
        for (j, b) in sp.iter().enumerate() {
            let overlap = a.1.min(b.1) as i64 - a.0.max(b.0) as i64 + 1;
            if overlap > 0 {
                pairs.push((overlap, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_t, mut used_s) = (vec![false; tp.len()], vec![false; sp.len()]);
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if used_t[i] || used_s[j] {
            continue;
        }
        used_t[i] = true;
        used_s[j] = true;
        let tw = tp[i].1 - tp[i].0 + 1;
        let sw = sp[j].1 - sp[j].0 + 1;
        matches.push(PulseMatch { truth_start: tp[i].0, truth_width: tw, width: sw, error: sw as i64 - tw as i64 });
    }
    matches.sort_by_key(|m| m.truth_start);
    let errs: Vec<f64> = matches.iter().map(|m| m.error as f64).collect();
    let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
    let stat = |v: &[f64], f: fn(&[f64]) -> f64| if v.is_empty() { 0.0 } else { f(v) };
    Ok(FidelityStats {
        unmatched_truth: used_t.iter().filter(|u| !**u).count(),
        unmatched_test: used_s.iter().filter(|u| !**u).count(),
        mean_error: stat(&errs, fit::mean),
        mean_abs_error: stat(&abs, fit::mean),
        rms_error: stat(&errs, fit::rms),
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(s: &str) -> CaptureFrame {
        CaptureFrame::from_str_bits(s)
    }

    fn of_runs(parts: &[(bool, usize)]) -> CaptureFrame {
        CaptureFrame::new(parts.iter().flat_map(|&(b, n)| std::iter::repeat_n(b, n)).collect(), Default::default(), None)
    }

    #[test]
    fn long_gap_is_pulled_back() {
        // Oracle: 0-run 1033..=1249 becomes 1033..=floor(0.95 * 1249) = 1033..=1186.
        let f = of_runs(&[(true, 1032), (false, 217), (true, 51)]);
        let c = correct_frame(&f, &CorrectionSpec::default()).unwrap();
        let zeros: Vec<usize> = (1..=c.k()).filter(|&k| !c.bit(k)).collect();
        assert_eq!(zeros.first(), Some(&1033));
        assert_eq!(zeros.last(), Some(&1186));
        assert_eq!(zeros.len(), 1186 - 1033 + 1);
    }

    #[test]
    fn short_gaps_are_filled() {
        let mut s = String::from("11");
        s.push_str(&"0".repeat(20));
        s.push_str("101");
        s.push_str(&"1".repeat(20));
        let c = correct_frame(&frame(&s), &CorrectionSpec::default()).unwrap();
        // 0-run 3..=22 -> 3..=floor(0.95 * 22) = 3..=20; the bubble at 24 fills.
        let expect: String = "11".to_string() + &"0".repeat(18) + &"1".repeat(25);
        assert_eq!(c.to_bit_string(), expect);
    }

    #[test]
    fn gap_at_chain_end_is_exempt() {
        let f = of_runs(&[(true, 30), (false, 70)]);
        let c = correct_frame(&f, &CorrectionSpec::default()).unwrap();
        assert_eq!(c, f);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let f = frame("0101");
        assert!(correct_frame(&f, &CorrectionSpec { gap_threshold: 0, dilation: 0.9 }).is_err());
        assert!(correct_frame(&f, &CorrectionSpec { gap_threshold: 5, dilation: 1.5 }).is_err());
    }

    #[test]
    fn fidelity_pairs_by_overlap() {
        let truth = of_runs(&[(false, 10), (true, 20), (false, 30), (true, 10), (false, 30)]);
        let test = of_runs(&[(false, 12), (true, 15), (false, 35), (true, 12), (false, 26)]);
        let s = correction_fidelity(&truth, &test).unwrap();
        assert_eq!(s.matches.len(), 2);
        assert_eq!(s.matches[0].error, -5);
        assert_eq!(s.matches[1].error, 2);
        assert_eq!(s.mean_error, -1.5);
        assert_eq!(s.unmatched_truth + s.unmatched_test, 0);
    }

    #[test]
    fn all_ones_is_unchanged() {
        let f = frame(&"1".repeat(64));
        assert_eq!(correct_frame(&f, &CorrectionSpec::default()).unwrap(), f);
    }

    #[test]
    fn correction_is_not_idempotent() {
        // Dilation acts on absolute indices, so a second pass shortens again.
        let f = of_runs(&[(true, 5), (false, 40), (true, 20)]);
        let once = correct_frame(&f, &CorrectionSpec::default()).unwrap();
        let twice = correct_frame(&once, &CorrectionSpec::default()).unwrap();
        assert_ne!(once, twice);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn unit_dilation_only_fills_bubbles(bits in prop::collection::vec(any::<bool>(), 1..300), threshold in 1usize..30) {
            let f = CaptureFrame::new(bits, Default::default(), None);
            let c = correct_frame(&f, &CorrectionSpec { gap_threshold: threshold, dilation: 1.0 }).unwrap();
            for k in 1..=f.k() {
                prop_assert!(!f.bit(k) || c.bit(k));
            }
        }

        #[test]
        fn no_short_interior_gaps_survive(bits in prop::collection::vec(any::<bool>(), 1..400), threshold in 1usize..30, dilation in 0.5f64..1.0) {
            let f = CaptureFrame::new(bits, Default::default(), None);
            let spec = CorrectionSpec { gap_threshold: threshold, dilation };
            let c = correct_frame(&f, &spec).unwrap();
            for r in runs(&c.bits) {
                if !r.level && r.end() < c.k() {
                    // Shortened gaps may drop under the threshold, but every
                    // surviving 0 belongs to a qualifying input gap.
                    prop_assert!((r.start..=r.end()).all(|k| !f.bit(k)));
                }
            }
            let short_gap_bits = runs(&f.bits).into_iter()
                .filter(|r| !r.level && r.len < threshold)
                .flat_map(|r| r.start..=r.end());
            for k in short_gap_bits {
                prop_assert!(c.bit(k));
            }
        }
    }
}
