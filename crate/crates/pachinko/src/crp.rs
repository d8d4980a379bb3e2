//! Chinese restaurant process primitives shared by the samplers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CrpError {
    #[error("concentration must be positive and finite, got {0}")]
    BadConcentration(f64),
}

/// Seating probabilities for the next customer of a CRP with the given
/// occupied-table counts. The last entry is the new-table probability.
/// Entries sum to 1 up to rounding.
pub fn crp_weights(counts: &[u32], alpha: f64) -> Result<Vec<f64>, CrpError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(CrpError::BadConcentration(alpha));
    }
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    let denom = total as f64 + alpha;
    let mut w: Vec<f64> = counts.iter().map(|&c| c as f64 / denom).collect();
    w.push(alpha / denom);
    Ok(w)
}

/// Inverse-CDF draw from unnormalized weights. Weights must be nonnegative
/// with a positive sum; candidates are visited in slice order, so callers
/// control tie-breaking by ordering candidates canonically.
pub fn sample_categorical<R: rand::Rng>(weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(!weights.is_empty());
    let mut total: f64 = weights.iter().sum();
    let mut scale = 1.0;
    // Rescale guard for degenerate near-zero totals.
    if total < 1e-300 {
        scale = 1e300;
        total = weights.iter().map(|w| w * scale).sum();
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        let w = w * scale;
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if target < acc {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_counts_force_new_table() {
        assert_eq!(crp_weights(&[], 0.5).unwrap(), vec![1.0]);
    }

    #[test]
    fn hand_evaluated_weights() {
        let w = crp_weights(&[3, 1], 1.0).unwrap();
        assert_eq!(w, vec![0.6, 0.2, 0.2]);
        let w = crp_weights(&[2, 2], 4.0).unwrap();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn rejects_bad_concentration() {
        assert!(crp_weights(&[1], 0.0).is_err());
        assert!(crp_weights(&[1], -1.0).is_err());
        assert!(crp_weights(&[1], f64::NAN).is_err());
    }
}
