//! Sequential Polya-urn density and exact-duplicate cluster detection.

use crate::base_measure::{self, BaseMeasureParams};
use crate::error::Result;

/// Bitwise equality; copied atoms are exact duplicates.
pub fn same_vector(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Cluster label per vector, numbered in order of first appearance.
pub fn cluster_labels(vectors: &[&[f64]]) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(vectors.len());
    for (k, v) in vectors.iter().enumerate() {
        match reps.iter().position(|&r| same_vector(vectors[r], v)) {
            Some(label) => labels.push(label),
            None => {
                labels.push(reps.len());
                reps.push(k);
            }
        }
    }
    labels
}

pub fn distinct_count(vectors: &[&[f64]]) -> usize {
    cluster_labels(vectors).into_iter().max().map_or(0, |m| m + 1)
}

/// One representative per cluster, in order of first appearance.
pub fn distinct_vectors<'a>(vectors: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let labels = cluster_labels(vectors);
    let mut out = Vec::new();
    for (k, l) in labels.iter().enumerate() {
        if *l == out.len() {
            out.push(vectors[k]);
        }
    }
    out
}

/// `log [Γ_1][Γ_2 | Γ_1] ⋯ [Γ_m | Γ_{m-1}, …, Γ_1]` under the urn with
/// precision `tau`: a repeat of an earlier vector contributes
/// `log(n_prev / (τ + k - 1))`, a new value `log(τ / (τ + k - 1)) + log g₀`.
pub fn polya_urn_log_density_with<F>(vectors: &[&[f64]], tau: f64, mut log_g0: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut acc = 0.0;
    for (k, v) in vectors.iter().enumerate() {
        let denom = (tau + k as f64).ln();
        let n_prev = vectors[..k].iter().filter(|u| same_vector(u, v)).count();
        if n_prev > 0 {
            acc += (n_prev as f64).ln() - denom;
        } else {
            acc += tau.ln() - denom + log_g0(v)?;
        }
    }
    Ok(acc)
}

pub fn polya_urn_log_density(vectors: &[&[f64]], base: &BaseMeasureParams, tau: f64) -> Result<f64> {
    let chol = base_measure::cholesky_with_jitter(base_measure::ar1_covariance(base)?)?;
    polya_urn_log_density_with(vectors, tau, |g| base_measure::log_density_with_factor(g, base, &chol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_measure::log_density;

    fn base() -> BaseMeasureParams {
        BaseMeasureParams::new(0.2, 1.0, 0.5, 0.7, 3).unwrap()
    }

    #[test]
    fn two_distinct_vectors() {
        let (a, b) = ([0.1, 0.3, -0.2], [1.0, 0.5, 0.4]);
        let tau = 1.7;
        let got = polya_urn_log_density(&[&a, &b], &base(), tau).unwrap();
        let expect = log_density(&a, &base()).unwrap()
            + (tau / (tau + 1.0)).ln()
            + log_density(&b, &base()).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn two_identical_vectors() {
        let a = [0.1, 0.3, -0.2];
        let tau = 1.7;
        let got = polya_urn_log_density(&[&a, &a], &base(), tau).unwrap();
        let expect = log_density(&a, &base()).unwrap() + (1.0 / (tau + 1.0)).ln();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn large_tau_approaches_independent_product() {
        let vs = [[0.1, 0.3, -0.2], [1.0, 0.5, 0.4], [0.0, -0.1, 0.2]];
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let indep: f64 = vs.iter().map(|v| log_density(v, &base()).unwrap()).sum();
        let got = polya_urn_log_density(&refs, &base(), 1e12).unwrap();
        assert!((got - indep).abs() < 1e-9);
    }

    #[test]
    fn labels_follow_first_appearance() {
        let (a, b) = ([1.0, 2.0], [3.0, 4.0]);
        let refs: Vec<&[f64]> = vec![&b, &a, &b, &b, &a];
        assert_eq!(cluster_labels(&refs), vec![0, 1, 0, 0, 1]);
        assert_eq!(distinct_count(&refs), 2);
        assert_eq!(distinct_vectors(&refs), vec![&b[..], &a[..]]);
    }

    #[test]
    fn negative_zero_is_distinct_bitwise() {
        assert!(!same_vector(&[0.0], &[-0.0]));
    }
}
