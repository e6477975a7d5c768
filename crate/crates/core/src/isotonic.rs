//! Weighted isotonic (nondecreasing) least squares by pooling adjacent violators.

use crate::error::{Error, Result};

/// Nondecreasing `z` minimizing `Σ wᵢ (zᵢ - vᵢ)²`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let w = w.max(1e-300);
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (m2, w2, c2) = blocks.pop().unwrap();
            let (m1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// [`pava`] under elementwise bounds `lo ≤ z ≤ hi`.
///
/// Bounds are first replaced by their monotone envelopes, which leaves the feasible set unchanged.
pub fn isotonic_bounded(values: &[f64], weights: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    let mut l = lo.to_vec();
    let mut h = hi.to_vec();
    for i in 1..n {
        l[i] = l[i].max(l[i - 1]);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        h[i] = h[i].min(h[i + 1]);
    }
    if let Some(i) = (0..n).find(|&i| l[i] > h[i]) {
        return Err(Error::Input(format!("monotone bounds are infeasible at index {i}: {} > {}", l[i], h[i])));
    }
    Ok(pava(values, weights).into_iter().enumerate().map(|(i, z)| z.clamp(l[i], h[i])).collect())
}
