//! Optimization of the attention/FFN balance parameter alpha.
//!
//! Two routes: a one-pass grid search that maximizes Kendall's tau against
//! sampled benchmark ground truth (top-2 grid values averaged), and a
//! benchmark-free heuristic built from the pairwise correlations between
//! attention-only scores, FFN-only scores and parameter counts.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::rankstats::{kendall_tau, PairedSample, RankError};

/// Inclusive alpha grid; `step` must divide `hi - lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            lo: -1.5,
            hi: 1.5,
            step: 0.1,
        }
    }
}

impl AlphaGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self, AlphaError> {
        let grid = Self { lo, hi, step };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), AlphaError> {
        if !(self.lo < self.hi) || !(self.step > 0.0) {
            return Err(AlphaError::BadGrid {
                reason: "requires lo < hi and step > 0",
            });
        }
        let steps = (self.hi - self.lo) / self.step;
        if (steps - libm::round(steps)).abs() > 1e-9 {
            return Err(AlphaError::BadGrid {
                reason: "step must divide hi - lo",
            });
        }
        Ok(())
    }

    /// Grid points from `lo` to `hi` inclusive.
    pub fn points(&self) -> Vec<f64> {
        let n = libm::round((self.hi - self.lo) / self.step) as usize + 1;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.hi
                } else {
                    self.lo + i as f64 * self.step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMethod {
    Sampling,
    Heuristic,
}

/// One grid evaluation; `tau` is `None` where the combined scores were
/// entirely tied and the statistic is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub tau: Option<f64>,
}

/// Result of an alpha optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha_star: f64,
    /// Full alpha -> tau curve, sorted by alpha (empty for the heuristic).
    pub grid_curve: Vec<GridPoint>,
    /// Best and second-best (alpha, tau); `None` for the heuristic route.
    pub top1: Option<(f64, f64)>,
    pub top2: Option<(f64, f64)>,
    pub method: AlphaMethod,
    /// Ids of the benchmark records the optimization sampled, when known.
    #[serde(default)]
    pub sample_ids: Vec<String>,
}

/// Pairwise Kendall correlations feeding the heuristic:
/// attention-vs-params, FFN-vs-params and attention-vs-FFN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicInputs {
    pub tau_ap: f64,
    pub tau_fp: f64,
    pub tau_af: f64,
}

impl HeuristicInputs {
    pub fn new(tau_ap: f64, tau_fp: f64, tau_af: f64) -> Result<Self, AlphaError> {
        for (name, v) in [("tau_ap", tau_ap), ("tau_fp", tau_fp), ("tau_af", tau_af)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(AlphaError::TauOutOfRange { name, value: v });
            }
        }
        Ok(Self {
            tau_ap,
            tau_fp,
            tau_af,
        })
    }
}

/// How min/max over the two params-correlations are taken when signs differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumMode {
    /// Signed comparison (default; matches the formula as written).
    #[default]
    Signed,
    /// Compare by magnitude; opt-in for spaces with negative correlations.
    Absolute,
}

pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaError {
    BadGrid { reason: &'static str },
    LengthMismatch { gt: usize, attn: usize, ffn: usize },
    TooFewSamples { n: usize },
    NanInput,
    /// Every grid point produced a degenerate correlation.
    OptimizationFailed,
    /// Fewer than two grid points produced a defined correlation.
    InsufficientValidGrid { valid: usize },
    TauOutOfRange { name: &'static str, value: f64 },
    /// `min(tau_ap, tau_fp)` too close to zero to divide by.
    DivisionDegeneracy { tau_ap: f64, tau_fp: f64, tau_af: f64 },
}

impl fmt::Display for AlphaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaError::BadGrid { reason } => write!(f, "invalid alpha grid: {reason}"),
            AlphaError::LengthMismatch { gt, attn, ffn } => write!(
                f,
                "vector lengths differ: ground truth {gt}, attention {attn}, ffn {ffn}"
            ),
            AlphaError::TooFewSamples { n } => {
                write!(f, "alpha optimization needs at least 3 samples, got {n}")
            }
            AlphaError::NanInput => write!(f, "input vectors contain NaN"),
            AlphaError::OptimizationFailed => {
                write!(f, "correlation degenerate at every grid point")
            }
            AlphaError::InsufficientValidGrid { valid } => write!(
                f,
                "only {valid} grid point(s) produced a defined correlation; need 2 for top-2 averaging"
            ),
            AlphaError::TauOutOfRange { name, value } => {
                write!(f, "{name} = {value} lies outside [-1, 1]")
            }
            AlphaError::DivisionDegeneracy { tau_ap, tau_fp, tau_af } => write!(
                f,
                "min(tau_ap, tau_fp) within {TIE_EPSILON} of zero (tau_ap={tau_ap}, tau_fp={tau_fp}, tau_af={tau_af})"
            ),
        }
    }
}

impl core::error::Error for AlphaError {}

/// One-pass grid optimization against sampled ground truth.
///
/// For every grid alpha the proxy `alpha * s_attn + (1 - alpha) * s_ffn` is
/// correlated (Kendall tau) with `ground_truth`; candidates sort by tau
/// descending with ties broken toward lower alpha, and `alpha_star` is the
/// mean of the two best grid values.
pub fn optimize_alpha_sampling(
    ground_truth: &[f64],
    s_attn: &[f64],
    s_ffn: &[f64],
    grid: &AlphaGrid,
) -> Result<AlphaResult, AlphaError> {
    grid.validate()?;
    if ground_truth.len() != s_attn.len() || ground_truth.len() != s_ffn.len() {
        return Err(AlphaError::LengthMismatch {
            gt: ground_truth.len(),
            attn: s_attn.len(),
            ffn: s_ffn.len(),
        });
    }
    if ground_truth.len() < 3 {
        return Err(AlphaError::TooFewSamples {
            n: ground_truth.len(),
        });
    }
    if ground_truth
        .iter()
        .chain(s_attn)
        .chain(s_ffn)
        .any(|v| v.is_nan())
    {
        return Err(AlphaError::NanInput);
    }

    let mut curve = Vec::new();
    for alpha in grid.points() {
        let combined: Vec<f64> = s_attn
            .iter()
            .zip(s_ffn)
            .map(|(a, f)| alpha * a + (1.0 - alpha) * f)
            .collect();
        let tau = match PairedSample::new(ground_truth, &combined).and_then(kendall_tau) {
            Ok(t) => Some(t),
            Err(RankError::Degenerate { .. }) => None,
            // Lengths and NaNs were validated above.
            Err(_) => None,
        };
        curve.push(GridPoint { alpha, tau });
    }

    let mut ranked: Vec<(f64, f64)> = curve
        .iter()
        .filter_map(|p| p.tau.map(|t| (p.alpha, t)))
        .collect();
    if ranked.is_empty() {
        return Err(AlphaError::OptimizationFailed);
    }
    if ranked.len() < 2 {
        return Err(AlphaError::InsufficientValidGrid { valid: ranked.len() });
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let top1 = ranked[0];
    let top2 = ranked[1];

    Ok(AlphaResult {
        alpha_star: 0.5 * (top1.0 + top2.0),
        grid_curve: curve,
        top1: Some(top1),
        top2: Some(top2),
        method: AlphaMethod::Sampling,
        sample_ids: Vec::new(),
    })
}

/// Sign term of the heuristic: `+1` when the joint contribution baseline
/// exceeds the attention/params correlation, `-1` otherwise (boundary -> -1).
pub fn flag(phi: f64, tau_ap: f64) -> i32 {
    if phi > tau_ap {
        1
    } else {
        -1
    }
}

/// Benchmark-free heuristic alpha (signed extremum mode).
///
/// `lambda = |max(tau_ap, tau_fp) * (1 - tau_af / min(tau_ap, tau_fp))|`,
/// `phi = (1 - tau_fp) * (1 - tau_ap) + tau_af`, and the result is
/// `lambda + flag(phi, tau_ap) * phi`.
pub fn heuristic_alpha(h: &HeuristicInputs) -> Result<f64, AlphaError> {
    heuristic_alpha_with_mode(h, ExtremumMode::Signed)
}

/// [`heuristic_alpha`] with an explicit extremum mode for the min/max pair.
pub fn heuristic_alpha_with_mode(
    h: &HeuristicInputs,
    mode: ExtremumMode,
) -> Result<f64, AlphaError> {
    let (hi, lo) = match mode {
        ExtremumMode::Signed => (h.tau_ap.max(h.tau_fp), h.tau_ap.min(h.tau_fp)),
        ExtremumMode::Absolute => {
            let (a, f) = (h.tau_ap.abs(), h.tau_fp.abs());
            (a.max(f), a.min(f))
        }
    };
    if lo.abs() <= TIE_EPSILON {
        return Err(AlphaError::DivisionDegeneracy {
            tau_ap: h.tau_ap,
            tau_fp: h.tau_fp,
            tau_af: h.tau_af,
        });
    }
    let lambda = (hi * (1.0 - h.tau_af / lo)).abs();
    let phi = (1.0 - h.tau_fp) * (1.0 - h.tau_ap) + h.tau_af;
    Ok(lambda + flag(phi, h.tau_ap) as f64 * phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform01};

    #[test]
    fn default_grid_has_31_points_with_endpoints() {
        let grid = AlphaGrid::default();
        grid.validate().unwrap();
        let points = grid.points();
        assert_eq!(points.len(), 31);
        assert_eq!(points[0], -1.5);
        assert_eq!(*points.last().unwrap(), 1.5);
        assert!(points.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(AlphaGrid::new(1.0, -1.0, 0.1).is_err());
        assert!(AlphaGrid::new(-1.0, 1.0, 0.0).is_err());
        assert!(AlphaGrid::new(-1.0, 1.0, 0.3).is_err());
        assert!(AlphaGrid::new(-1.5, 1.5, 0.1).is_ok());
    }

    #[test]
    fn recovers_high_alpha_at_grid_top() {
        // Two pairs are mis-ordered by both blocks, with the FFN scores more
        // strongly wrong than the attention scores. A pair with da < 0 and
        // df < da flips concordant at alpha = df/(df - da); placing those
        // flip points at 1.35 and 1.45 makes tau peak strictly at 1.5, then
        // 1.4, so the top-2 average lands at the grid's high end.
        let gt = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let s_attn = [1.0, 0.0, 3.0, 2.0, 4.0, 5.0];
        let s_ffn = [0.0, -29.0 / 9.0, 1.0, 1.0 - 27.0 / 7.0, 0.5, 1.5];
        let res = optimize_alpha_sampling(&gt, &s_attn, &s_ffn, &AlphaGrid::default()).unwrap();
        let (a1, t1) = res.top1.unwrap();
        let (a2, t2) = res.top2.unwrap();
        assert_eq!(t1, 1.0);
        assert!((a1 - 1.5).abs() < 1e-9, "top1 alpha {a1}");
        assert!((a2 - 1.4).abs() < 1e-9, "top2 alpha {a2}");
        assert!((t2 - 13.0 / 15.0).abs() < 1e-12, "top2 tau {t2}");
        assert!(res.alpha_star >= 1.4, "alpha_star {}", res.alpha_star);
    }

    #[test]
    fn tie_break_prefers_lower_alpha_and_skips_degenerate_points() {
        // Exact affine anti-correlation: every alpha above 0.5 ranks
        // identically (tau 1), alpha = 0.5 collapses to a full tie.
        let s_attn = [1.0, 2.0, 3.0];
        let s_ffn = [3.0, 2.0, 1.0];
        let gt = [1.0, 2.0, 3.0];
        let res = optimize_alpha_sampling(&gt, &s_attn, &s_ffn, &AlphaGrid::default()).unwrap();
        assert_eq!(res.grid_curve.len(), 31);
        let half = res
            .grid_curve
            .iter()
            .find(|p| (p.alpha - 0.5).abs() < 1e-12)
            .unwrap();
        assert_eq!(half.tau, None);
        let (a1, t1) = res.top1.unwrap();
        let (a2, t2) = res.top2.unwrap();
        assert_eq!(t1, 1.0);
        assert_eq!(t2, 1.0);
        assert!((a1 - 0.6).abs() < 1e-9, "top1 alpha {a1}");
        assert!((a2 - 0.7).abs() < 1e-9, "top2 alpha {a2}");
        assert!((res.alpha_star - 0.65).abs() < 1e-9);

        // explicit sort oracle: no valid grid point beats the top two
        for p in res.grid_curve.iter().filter_map(|p| p.tau) {
            assert!(p <= t2 || p <= t1);
        }
    }

    #[test]
    fn alpha_star_stays_inside_grid_and_matches_top2_mean() {
        let mut rng = seeded(3);
        let n = 40;
        let grid = AlphaGrid::default();
        for _ in 0..20 {
            let s_attn: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
            let s_ffn: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
            let gt: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
            let res = optimize_alpha_sampling(&gt, &s_attn, &s_ffn, &grid).unwrap();
            assert!(res.alpha_star >= grid.lo && res.alpha_star <= grid.hi);
            let (a1, _) = res.top1.unwrap();
            let (a2, _) = res.top2.unwrap();
            assert_eq!(res.alpha_star, 0.5 * (a1 + a2));
            assert_eq!(res.grid_curve.len(), 31);
        }
    }

    #[test]
    fn invariant_under_joint_positive_rescaling() {
        let mut rng = seeded(5);
        let n = 30;
        let s_attn: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
        let s_ffn: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
        let gt: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
        let scale = 12.75;
        let sa: Vec<f64> = s_attn.iter().map(|v| v * scale).collect();
        let sf: Vec<f64> = s_ffn.iter().map(|v| v * scale).collect();
        let base = optimize_alpha_sampling(&gt, &s_attn, &s_ffn, &AlphaGrid::default()).unwrap();
        let scaled = optimize_alpha_sampling(&gt, &sa, &sf, &AlphaGrid::default()).unwrap();
        assert_eq!(base.alpha_star, scaled.alpha_star);
        assert_eq!(base.top1, scaled.top1);
    }

    #[test]
    fn degenerate_ground_truth_fails_optimization() {
        let gt = [1.0, 1.0, 1.0, 1.0];
        let s_attn = [1.0, 2.0, 3.0, 4.0];
        let s_ffn = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(
            optimize_alpha_sampling(&gt, &s_attn, &s_ffn, &AlphaGrid::default()),
            Err(AlphaError::OptimizationFailed)
        );
    }

    #[test]
    fn heuristic_worked_values() {
        // lambda = |0.8 * (1 - 0.4/0.5)| = 0.16; phi = 0.2*0.5 + 0.4 = 0.5;
        // phi <= tau_ap is false at 0.5 > 0.5, so flag = -1 -> 0.16 - 0.5
        let h = HeuristicInputs::new(0.5, 0.8, 0.4).unwrap();
        let a = heuristic_alpha(&h).unwrap();
        assert!((a - (-0.34)).abs() <= 1e-15, "{a}");

        // lambda = |0.3 * 1| = 0.3; phi = 0.8*0.7 + 0 = 0.56 > 0.2 -> +1
        let h = HeuristicInputs::new(0.2, 0.3, 0.0).unwrap();
        let a = heuristic_alpha(&h).unwrap();
        assert!((a - 0.86).abs() <= 1e-15, "{a}");
    }

    #[test]
    fn heuristic_lambda_cancels_when_tau_af_equals_min() {
        let h = HeuristicInputs::new(0.4, 0.7, 0.4).unwrap();
        let a = heuristic_alpha(&h).unwrap();
        let phi = (1.0 - 0.7) * (1.0 - 0.4) + 0.4;
        assert_eq!(a, flag(phi, 0.4) as f64 * phi);
    }

    #[test]
    fn heuristic_is_deterministic() {
        let h = HeuristicInputs::new(0.31, -0.62, 0.11).unwrap();
        let a = heuristic_alpha(&h).unwrap();
        let b = heuristic_alpha(&h).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn heuristic_division_degeneracy() {
        let h = HeuristicInputs::new(0.0, 0.8, 0.1).unwrap();
        assert!(matches!(
            heuristic_alpha(&h),
            Err(AlphaError::DivisionDegeneracy { .. })
        ));
        let h = HeuristicInputs::new(0.5, 1e-10, 0.1).unwrap();
        assert!(heuristic_alpha(&h).is_err());
    }

    #[test]
    fn absolute_mode_uses_magnitudes() {
        let h = HeuristicInputs::new(-0.9, 0.3, 0.2).unwrap();
        // signed: max=0.3, min=-0.9; absolute: max=0.9, min=0.3
        let signed = heuristic_alpha_with_mode(&h, ExtremumMode::Signed).unwrap();
        let absolute = heuristic_alpha_with_mode(&h, ExtremumMode::Absolute).unwrap();
        let phi = (1.0 - 0.3) * (1.0 - (-0.9)) + 0.2;
        let signed_expect = (0.3f64 * (1.0 - 0.2 / -0.9)).abs() + flag(phi, -0.9) as f64 * phi;
        let abs_expect = (0.9f64 * (1.0 - 0.2 / 0.3)).abs() + flag(phi, -0.9) as f64 * phi;
        assert!((signed - signed_expect).abs() <= 1e-15);
        assert!((absolute - abs_expect).abs() <= 1e-15);
    }

    #[test]
    fn flag_boundary_cases() {
        assert_eq!(flag(0.6, 0.5), 1);
        assert_eq!(flag(0.5, 0.5), -1);
        assert_eq!(flag(-0.1, 0.0), -1);
        for i in -10..=10 {
            let v = i as f64 / 10.0;
            assert_eq!(flag(v, v), -1);
            assert_eq!(flag(v + 1e-12, v), 1);
        }
    }

    #[test]
    fn inputs_validated() {
        assert!(HeuristicInputs::new(1.3, 0.0, 0.0).is_err());
        assert!(HeuristicInputs::new(0.2, -1.01, 0.0).is_err());
        assert!(HeuristicInputs::new(1.0, -1.0, 0.0).is_ok());
    }
}
