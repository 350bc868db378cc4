//! Rank-correlation statistics: Kendall's tau-b and Spearman's rho, both
//! tie-aware, plus quadratic reference implementations used as test oracles.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// A pair of equally sized, NaN-free observation vectors.
#[derive(Debug, Clone, Copy)]
pub struct PairedSample<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl<'a> PairedSample<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Result<Self, RankError> {
        if x.len() != y.len() {
            return Err(RankError::LengthMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(RankError::TooShort { len: x.len() });
        }
        if x.iter().chain(y.iter()).any(|v| v.is_nan()) {
            return Err(RankError::NanValue);
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &'a [f64] {
        self.x
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankError {
    LengthMismatch { x: usize, y: usize },
    TooShort { len: usize },
    NanValue,
    /// A vector is entirely tied, so the statistic is undefined.
    Degenerate { which: &'static str },
}

impl fmt::Display for RankError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankError::LengthMismatch { x, y } => {
                write!(f, "paired vectors differ in length: {x} vs {y}")
            }
            RankError::TooShort { len } => {
                write!(f, "need at least 2 paired observations, got {len}")
            }
            RankError::NanValue => write!(f, "NaN values are not permitted in paired samples"),
            RankError::Degenerate { which } => {
                write!(f, "degenerate input: {which} vector is entirely tied")
            }
        }
    }
}

impl core::error::Error for RankError {}

/// Kendall's tau-b in O(n log n) (sort plus merge-count of discordances).
///
/// `tau_b = (C - D) / sqrt((n0 - T_x) (n0 - T_y))` with `n0 = n(n-1)/2` and
/// `T_x`, `T_y` the tied-pair counts of each vector.
pub fn kendall_tau(s: PairedSample<'_>) -> Result<f64, RankError> {
    let n = s.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        s.x[a]
            .total_cmp(&s.x[b])
            .then_with(|| s.y[a].total_cmp(&s.y[b]))
    });

    let xs: Vec<f64> = order.iter().map(|&i| s.x[i]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&i| s.y[i]).collect();

    // Tied pairs in x and joint ties, from the (x, y)-sorted sequence.
    let mut tied_x: u64 = 0;
    let mut tied_xy: u64 = 0;
    let mut run_x: u64 = 1;
    let mut run_xy: u64 = 1;
    for i in 1..n {
        if xs[i] == xs[i - 1] {
            run_x += 1;
            if ys[i] == ys[i - 1] {
                run_xy += 1;
            } else {
                tied_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            tied_x += run_x * (run_x - 1) / 2;
            run_x = 1;
            tied_xy += run_xy * (run_xy - 1) / 2;
            run_xy = 1;
        }
    }
    tied_x += run_x * (run_x - 1) / 2;
    tied_xy += run_xy * (run_xy - 1) / 2;

    // Discordant pairs = strict inversions of y once sorted by (x, y),
    // counted by a bottom-up merge sort. Ties in y are taken from the left
    // run and therefore not counted.
    let mut swaps: u64 = 0;
    let mut buf = vec![0.0f64; n];
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = usize::min(lo + width, n);
            let hi = usize::min(lo + 2 * width, n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid || j < hi {
                if i < mid && (j >= hi || ys[i] <= ys[j]) {
                    buf[k] = ys[i];
                    i += 1;
                } else {
                    buf[k] = ys[j];
                    j += 1;
                    swaps += (mid - i) as u64;
                }
                k += 1;
            }
            ys[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo += 2 * width;
        }
        width *= 2;
    }

    // Tied pairs in y, from the now y-sorted sequence.
    let mut tied_y: u64 = 0;
    let mut run_y: u64 = 1;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run_y += 1;
        } else {
            tied_y += run_y * (run_y - 1) / 2;
            run_y = 1;
        }
    }
    tied_y += run_y * (run_y - 1) / 2;

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if n0 == tied_x {
        return Err(RankError::Degenerate { which: "x" });
    }
    if n0 == tied_y {
        return Err(RankError::Degenerate { which: "y" });
    }

    let num = n0 as i128 - tied_x as i128 - tied_y as i128 + tied_xy as i128 - 2 * swaps as i128;
    let denom = libm::sqrt((n0 - tied_x) as f64 * (n0 - tied_y) as f64);
    Ok((num as f64 / denom).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mean-rank-transformed vectors.
pub fn spearman_rho(s: PairedSample<'_>) -> Result<f64, RankError> {
    let rx = average_ranks(s.x);
    let ry = average_ranks(s.y);
    pearson(&rx, &ry)
}

/// Mean ranks (1-based); tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share mean rank of (i+1)..=(j+1)
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RankError::Degenerate { which: "x" });
    }
    if syy == 0.0 {
        return Err(RankError::Degenerate { which: "y" });
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// O(n^2) pair-enumeration Kendall tau-b. Test oracle for [`kendall_tau`].
pub fn kendall_tau_naive(s: PairedSample<'_>) -> Result<f64, RankError> {
    let n = s.len();
    let (mut concordant, mut discordant) = (0i128, 0i128);
    let (mut tied_x, mut tied_y) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = s.x[i] - s.x[j];
            let dy = s.y[i] - s.y[j];
            if s.x[i] == s.x[j] {
                tied_x += 1;
            }
            if s.y[i] == s.y[j] {
                tied_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if n0 == tied_x {
        return Err(RankError::Degenerate { which: "x" });
    }
    if n0 == tied_y {
        return Err(RankError::Degenerate { which: "y" });
    }
    let denom = libm::sqrt((n0 - tied_x) as f64 * (n0 - tied_y) as f64);
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Counting-based Spearman rho. Test oracle for [`spearman_rho`].
pub fn spearman_rho_naive(s: PairedSample<'_>) -> Result<f64, RankError> {
    let rank_of = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    pearson(&rank_of(s.x), &rank_of(s.y))
}
