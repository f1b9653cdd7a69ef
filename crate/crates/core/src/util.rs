//! Small numeric and hashing helpers shared across the crate.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Pairwise (cascade) summation with a fixed reduction tree.
///
/// The tree depends only on the index range, never on thread count or
/// chunking, so repeated evaluations are bit-identical.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), &|i| values[i])
}

/// Pairwise summation of `f(0), ..., f(len-1)` without materialising
/// the terms.
pub fn pairwise_sum_by(len: usize, f: &dyn Fn(usize) -> f64) -> f64 {
    fn go(start: usize, len: usize, f: &dyn Fn(usize) -> f64) -> f64 {
        if len <= 32 {
            let mut acc = 0.0;
            for i in start..start + len {
                acc += f(i);
            }
            acc
        } else {
            let half = len / 2;
            go(start, half, f) + go(start + half, len - half, f)
        }
    }
    go(0, len, f)
}

/// x^e with a fast path for small integer exponents. The conformal
/// exponents (n+2)/(n−2), 2n/(n−2), 4/(n−2) are small integers in the
/// common dimensions and dominate the per-node cost of the flow.
#[inline]
pub fn pow_fast(x: f64, e: f64) -> f64 {
    let r = e.round();
    if (e - r).abs() < 1e-12 && r.abs() <= 16.0 {
        x.powi(r as i32)
    } else {
        x.powf(e)
    }
}

/// Absolute-plus-relative tolerance used by every inequality checker.
///
/// A signed margin `m` on a quantity of scale `s` passes when
/// `m >= -(abs + rel*|s|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        // Discretization and quadrature error must not mask true
        // violations; both components are surfaced in every report.
        Tolerance { abs: 1e-6, rel: 1e-6 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    /// Allowed slack for a margin measured against scale `scale`.
    pub fn slack(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    pub fn admits(&self, margin: f64, scale: f64) -> bool {
        margin >= -self.slack(scale)
    }
}

/// SHA-256 of the canonical configuration text, as lowercase hex.
///
/// Embedded in output artifacts so identical configs reproduce
/// byte-identical files.
pub fn config_hash(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// SHA-256 of raw bytes, as lowercase hex. Used for content hashes of
/// binary field files referenced from manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64) * 0.37 - 3.0).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn pairwise_is_deterministic() {
        let xs: Vec<f64> =
            (0..10_000u64).map(|i| ((i * 2654435761) % 1000) as f64 * 1e-3).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn tolerance_slack_combines_abs_and_rel() {
        let tol = Tolerance::new(1e-6, 1e-3);
        assert!(tol.admits(-1e-6, 0.0));
        assert!(tol.admits(-1e-3, 1.0));
        assert!(!tol.admits(-2e-3, 1.0));
    }

    #[test]
    fn config_hash_is_stable() {
        let h = config_hash("a=1\nb=2\n");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("a=1\nb=2\n"));
        assert_ne!(h, config_hash("a=1\nb=3\n"));
    }

    #[test]
    fn fit_slope_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((fit_slope(&x, &y) - 2.5).abs() < 1e-12);
    }
}
