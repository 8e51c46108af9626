//! Data, hyperparameters, model variants and chain state, plus the
//! unnormalized log-joint density that every conditional update is checked
//! against.
//!
//! The hierarchy is
//!
//! ```text
//! y_i(t)  = α_i + x(t) β_i(t) + ε_i(t),                  ε ~ N(0, σ²_ε)
//! β_i(t)  = x(t-1) Σ_ℓ γ_iℓ(t) β_ℓ(t-1) + ω_i(t),  t ≥ 2,  ω ~ N(0, σ²_ω)
//! Γ_ij    ~ G,  G ~ DP(τ G₀)        (DP variant)
//! Γ_ij    ~ G₀ independently        (AR and RW variants)
//! ```
//!
//! Indices are 0-based in code and 1-based in every file format.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::base_measure::{self, BaseMeasureParams, LN_2PI};
use crate::error::{Error, Result};
use crate::sampler::{tau, urn};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `R × T` observed regional series.
    pub y: DMatrix<f64>,
    /// Modeled BOLD regressor shared by all regions.
    pub x: Vec<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, x: Vec<f64>) -> Result<Self> {
        let d = Self { y, x };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions() < 2 {
            return Err(Error::InvalidParameter("need at least 2 regions".into()));
        }
        if self.len() < 3 {
            return Err(Error::InvalidParameter("need at least 3 time points".into()));
        }
        if self.x.len() != self.len() {
            return Err(Error::Contract(format!(
                "regressor has length {}, series have length {}",
                self.x.len(),
                self.len()
            )));
        }
        if self.y.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn regions(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rw,
    Ar,
    Dp,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Rw => "rw",
            Variant::Ar => "ar",
            Variant::Dp => "dp",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rw" => Ok(Variant::Rw),
            "ar" => Ok(Variant::Ar),
            "dp" => Ok(Variant::Dp),
            other => Err(Error::InvalidParameter(format!("unknown model variant `{other}`"))),
        }
    }
}

/// Model variant plus the pairs `(i, j)` whose connectivity is pinned at 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    #[serde(with = "one_based_pairs", default)]
    pub zero_mask: BTreeSet<(usize, usize)>,
}

mod one_based_pairs {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mask: &BTreeSet<(usize, usize)>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(mask.iter().map(|(i, j)| [i + 1, j + 1]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<(usize, usize)>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        pairs
            .into_iter()
            .map(|[i, j]| {
                if i == 0 || j == 0 {
                    Err(serde::de::Error::custom("mask indices are 1-based"))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect()
    }
}

impl ModelSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            zero_mask: BTreeSet::new(),
        }
    }

    pub fn with_mask(variant: Variant, mask: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            variant,
            zero_mask: mask.into_iter().collect(),
        }
    }

    /// Parses `"3,1;3,2"` (1-based) into 0-based pairs.
    pub fn parse_mask(text: &str) -> Result<BTreeSet<(usize, usize)>> {
        let mut out = BTreeSet::new();
        for chunk in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let parts: Vec<&str> = chunk.split(',').map(str::trim).collect();
            let parse = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|v| *v >= 1)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad mask entry `{chunk}`")))
            };
            if parts.len() != 2 {
                return Err(Error::InvalidParameter(format!("bad mask entry `{chunk}`")));
            }
            out.insert((parse(parts[0])? - 1, parse(parts[1])? - 1));
        }
        Ok(out)
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.zero_mask.contains(&(i, j))
    }

    /// Row-major pair indices `i * R + j` of the unmasked pairs.
    pub fn unmasked_pairs(&self, regions: usize) -> Vec<usize> {
        (0..regions * regions)
            .filter(|p| !self.is_masked(p / regions, p % regions))
            .collect()
    }

    pub fn free_count(&self, regions: usize) -> usize {
        self.unmasked_pairs(regions).len()
    }

    pub fn validate(&self, regions: usize) -> Result<()> {
        if let Some((i, j)) = self.zero_mask.iter().find(|(i, j)| *i >= regions || *j >= regions) {
            return Err(Error::InvalidParameter(format!(
                "mask entry ({}, {}) is outside a {regions}-region model",
                i + 1,
                j + 1
            )));
        }
        if self.variant == Variant::Dp && self.free_count(regions) < 2 {
            return Err(Error::InvalidParameter(
                "the DP model needs at least two unmasked connectivity pairs".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub mu: Vec<f64>,
    pub sigma2_alpha: f64,
    pub beta_bar: f64,
    pub sigma2_beta: f64,
    pub gamma_bar: f64,
    pub sigma2_gamma: f64,
    /// Gamma shape/rate for every inverse variance.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub a_tau: f64,
    pub b_tau: f64,
}

impl Hyperparameters {
    /// Sets `a_τ = c (m - 1)`, `b_τ = c`.
    pub fn apply_tau_recipe(&mut self, free_pairs: usize) {
        self.a_tau = self.c * (free_pairs as f64 - 1.0);
        self.b_tau = self.c;
    }

    pub fn validate(&self, regions: usize) -> Result<()> {
        if self.mu.len() != regions {
            return Err(Error::Contract(format!(
                "μ has {} entries for {regions} regions",
                self.mu.len()
            )));
        }
        let positive = [
            ("σ²_α", self.sigma2_alpha),
            ("σ²_β", self.sigma2_beta),
            ("σ²_γ", self.sigma2_gamma),
            ("c", self.c),
            ("a_τ", self.a_tau),
            ("b_τ", self.b_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::InvalidParameter("a and b must be nonnegative".into()));
        }
        if self.mu.iter().any(|v| !v.is_finite()) || !self.beta_bar.is_finite() || !self.gamma_bar.is_finite() {
            return Err(Error::InvalidParameter("prior means must be finite".into()));
        }
        Ok(())
    }

    pub fn base_measure(&self, sigma2_delta: f64, rho: f64, len: usize) -> BaseMeasureParams {
        BaseMeasureParams {
            gamma_bar: self.gamma_bar,
            sigma2_gamma: self.sigma2_gamma,
            sigma2_delta,
            rho,
            len,
        }
    }
}

/// Default τ-prior scale constant.
pub const DEFAULT_C: f64 = 0.1;

/// Empirical (ML-II style) hyperparameters.
///
/// `μ_i` is the time mean of `y_i`; `σ²_α` the pooled within-region variance;
/// `β̄` the pooled least-squares slope of `y` on `x`; `σ²_β = 10|β̄| + 1`;
/// `γ̄ = 0`, `σ²_γ = 1`, `a = b = 0`, `c = 0.1`.
pub fn ml2_hyperparameters(data: &Dataset, spec: &ModelSpec) -> Result<Hyperparameters> {
    data.validate()?;
    spec.validate(data.regions())?;
    let (r, n) = (data.regions(), data.len());
    let mu: Vec<f64> = (0..r).map(|i| data.y.row(i).mean()).collect();
    let mut pooled = 0.0;
    for i in 0..r {
        let ss: f64 = data.y.row(i).iter().map(|v| (v - mu[i]).powi(2)).sum();
        if ss == 0.0 {
            return Err(Error::DegenerateData(format!("region {} is constant", i + 1)));
        }
        pooled += ss;
    }
    let sigma2_alpha = pooled / (r * (n - 1)) as f64;

    let x_mean = data.x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = data.x.iter().map(|v| (v - x_mean).powi(2)).sum();
    let beta_bar = if sxx > 0.0 {
        let sxy: f64 = (0..r)
            .map(|i| {
                data.x
                    .iter()
                    .zip(data.y.row(i).iter())
                    .map(|(x, y)| (x - x_mean) * (y - mu[i]))
                    .sum::<f64>()
            })
            .sum();
        sxy / (r as f64 * sxx)
    } else {
        0.0
    };

    let mut hyper = Hyperparameters {
        mu,
        sigma2_alpha,
        beta_bar,
        sigma2_beta: 10.0 * beta_bar.abs() + 1.0,
        gamma_bar: 0.0,
        sigma2_gamma: 1.0,
        a: 0.0,
        b: 0.0,
        c: DEFAULT_C,
        a_tau: 0.0,
        b_tau: 0.0,
    };
    hyper.apply_tau_recipe(spec.free_count(r));
    Ok(hyper)
}

/// Full latent state after one sweep. `gamma[i * R + j]` is `Γ_ij`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub alpha: Vec<f64>,
    pub beta: DMatrix<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub sigma2_eps: f64,
    pub sigma2_omega: f64,
    pub sigma2_delta: f64,
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
}

impl ChainState {
    pub fn regions(&self) -> usize {
        self.alpha.len()
    }

    pub fn len(&self) -> usize {
        self.beta.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.ncols() == 0
    }

    pub fn gamma_at(&self, i: usize, j: usize, t: usize) -> f64 {
        self.gamma[i * self.regions() + j][t]
    }

    /// `x(t-1) Σ_ℓ γ_iℓ(t) β_ℓ(t-1)`, the transition mean of `β_i(t)`, `t ≥ 1`.
    pub fn transition_mean(&self, x: &[f64], i: usize, t: usize) -> f64 {
        let r = self.regions();
        let mut acc = 0.0;
        for l in 0..r {
            acc += self.gamma[i * r + l][t] * self.beta[(l, t - 1)];
        }
        x[t - 1] * acc
    }

    pub fn check_dims(&self, data: &Dataset) -> Result<()> {
        let (r, n) = (data.regions(), data.len());
        if self.alpha.len() != r
            || self.beta.nrows() != r
            || self.beta.ncols() != n
            || self.gamma.len() != r * r
            || self.gamma.iter().any(|g| g.len() != n)
        {
            return Err(Error::Contract(format!(
                "chain state does not match a {r}-region, {n}-point dataset"
            )));
        }
        Ok(())
    }

    pub fn base_measure(&self, hyper: &Hyperparameters) -> BaseMeasureParams {
        hyper.base_measure(self.sigma2_delta, self.rho, self.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub burn: usize,
    pub keep: usize,
    pub thin: usize,
    pub regions: usize,
    pub len: usize,
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub initial_sigma2_delta: f64,
    pub initial_rho: f64,
    pub mh_acceptance_rate: f64,
    pub mh_acceptance_rate_burn: f64,
    pub proposal_scales: [f64; 2],
    pub version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<ChainState>,
    pub meta: RunMetadata,
}

impl ChainOutput {
    pub fn regions(&self) -> usize {
        self.meta.regions
    }

    pub fn len(&self) -> usize {
        self.meta.len
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of `γ_ij(t)` across stored iterations.
    pub fn gamma_draws(&self, i: usize, j: usize, t: usize) -> Vec<f64> {
        let p = i * self.regions() + j;
        self.draws.iter().map(|s| s.gamma[p][t]).collect()
    }

    pub fn gamma_posterior_mean(&self, i: usize, j: usize) -> Vec<f64> {
        let p = i * self.regions() + j;
        let n = self.draws.len() as f64;
        let mut acc = vec![0.0; self.len()];
        for s in &self.draws {
            for (a, g) in acc.iter_mut().zip(&s.gamma[p]) {
                *a += g;
            }
        }
        acc.iter().map(|v| v / n).collect()
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Unnormalized log-density of `Gamma(a, b)` (rate) at a precision `λ`.
fn gamma_kernel(lambda: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * lambda.ln() - b * lambda
}

/// Additive pieces of the log-joint, each up to a state-independent constant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogJointTerms {
    pub likelihood: f64,
    pub beta_transition: f64,
    pub gamma_prior: f64,
    pub alpha_prior: f64,
    pub beta_initial_prior: f64,
    pub variance_priors: f64,
    pub rho_prior: f64,
    pub tau_prior: f64,
    /// `log Beta(η; τ + 1, m)`, the auxiliary of the τ update (DP only).
    pub eta_auxiliary: f64,
}

impl LogJointTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.beta_transition
            + self.gamma_prior
            + self.alpha_prior
            + self.beta_initial_prior
            + self.variance_priors
            + self.rho_prior
            + self.tau_prior
            + self.eta_auxiliary
    }
}

pub fn log_joint_terms(
    state: &ChainState,
    data: &Dataset,
    hyper: &Hyperparameters,
    spec: &ModelSpec,
) -> Result<LogJointTerms> {
    state.check_dims(data)?;
    hyper.validate(data.regions())?;
    let (r, n) = (data.regions(), data.len());
    let x = &data.x;
    let mut terms = LogJointTerms::default();

    for i in 0..r {
        for t in 0..n {
            terms.likelihood += normal_logpdf(
                data.y[(i, t)],
                state.alpha[i] + x[t] * state.beta[(i, t)],
                state.sigma2_eps,
            );
        }
        for t in 1..n {
            terms.beta_transition += normal_logpdf(
                state.beta[(i, t)],
                state.transition_mean(x, i, t),
                state.sigma2_omega,
            );
        }
        terms.alpha_prior += normal_logpdf(state.alpha[i], hyper.mu[i], hyper.sigma2_alpha);
        terms.beta_initial_prior += normal_logpdf(state.beta[(i, 0)], hyper.beta_bar, hyper.sigma2_beta);
    }

    let free = spec.unmasked_pairs(r);
    if free.len() < r * r {
        for p in 0..r * r {
            if !free.contains(&p) && state.gamma[p].iter().any(|g| *g != 0.0) {
                return Err(Error::Contract(format!(
                    "masked pair ({}, {}) is not pinned at zero",
                    p / r + 1,
                    p % r + 1
                )));
            }
        }
    }
    let base = state.base_measure(hyper);
    let chol = base_measure::cholesky_with_jitter(base_measure::ar1_covariance(&base)?)?;
    let g0 = |g: &[f64]| base_measure::log_density_with_factor(g, &base, &chol);
    let vectors: Vec<&[f64]> = free.iter().map(|p| state.gamma[*p].as_slice()).collect();
    terms.gamma_prior = match spec.variant {
        Variant::Dp => urn::polya_urn_log_density_with(&vectors, state.tau, g0)?,
        Variant::Ar | Variant::Rw => {
            let mut acc = 0.0;
            for v in &vectors {
                acc += g0(v)?;
            }
            acc
        }
    };

    for s2 in [state.sigma2_eps, state.sigma2_omega, state.sigma2_delta] {
        terms.variance_priors += gamma_kernel(1.0 / s2, hyper.a, hyper.b);
    }
    terms.rho_prior = match spec.variant {
        Variant::Rw => 0.0,
        _ if state.rho.abs() < 1.0 => -std::f64::consts::LN_2,
        _ => f64::NEG_INFINITY,
    };
    if spec.variant == Variant::Dp {
        terms.tau_prior = gamma_kernel(state.tau, hyper.a_tau, hyper.b_tau);
        terms.eta_auxiliary = tau::eta_log_density(state.eta, state.tau, free.len());
    }
    Ok(terms)
}

/// Unnormalized log-joint density of the state and data.
pub fn log_joint(
    state: &ChainState,
    data: &Dataset,
    hyper: &Hyperparameters,
    spec: &ModelSpec,
) -> Result<f64> {
    Ok(log_joint_terms(state, data, hyper, spec)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (ChainState, Dataset, Hyperparameters, ModelSpec) {
        let y = DMatrix::from_row_slice(2, 4, &[1.0, 1.4, 0.9, 1.2, 2.0, 2.5, 1.7, 2.2]);
        let data = Dataset::new(y, vec![0.5, -0.3, 0.8, 0.1]).unwrap();
        let spec = ModelSpec::new(Variant::Dp);
        let hyper = ml2_hyperparameters(&data, &spec).unwrap();
        let state = ChainState {
            alpha: vec![1.0, 2.0],
            beta: DMatrix::from_row_slice(2, 4, &[0.3, 0.2, -0.1, 0.4, 0.5, 0.1, 0.2, -0.2]),
            gamma: (0..4).map(|p| (0..4).map(|t| 0.1 * (p + t) as f64).collect()).collect(),
            sigma2_eps: 0.5,
            sigma2_omega: 0.3,
            sigma2_delta: 0.2,
            rho: 0.6,
            tau: 2.0,
            eta: 0.5,
        };
        (state, data, hyper, spec)
    }

    #[test]
    fn tau_recipe_matches_three_region_example() {
        let (_, _, mut hyper, _) = toy();
        hyper.c = 0.1;
        hyper.apply_tau_recipe(9);
        assert!((hyper.a_tau - 0.8).abs() < 1e-12);
        assert!((hyper.b_tau - 0.1).abs() < 1e-12);
        hyper.apply_tau_recipe(8);
        assert!((hyper.a_tau - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ml2_means_are_time_means() {
        let (_, data, hyper, _) = toy();
        assert!((hyper.mu[0] - 1.125).abs() < 1e-12);
        assert!((hyper.mu[1] - 2.1).abs() < 1e-12);
        assert_eq!(hyper.gamma_bar, 0.0);
        assert_eq!(hyper.sigma2_gamma, 1.0);
        assert!((hyper.sigma2_beta - (10.0 * hyper.beta_bar.abs() + 1.0)).abs() < 1e-12);
        assert_eq!(data.regions(), 2);
    }

    #[test]
    fn ml2_rejects_constant_region() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        let data = Dataset::new(y, vec![0.0, 1.0, 0.0]).unwrap();
        let err = ml2_hyperparameters(&data, &ModelSpec::new(Variant::Ar)).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn mask_parsing_is_one_based() {
        let m = ModelSpec::parse_mask("3,1; 3,2").unwrap();
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![(2, 0), (2, 1)]);
        assert!(ModelSpec::parse_mask("0,1").is_err());
        assert!(ModelSpec::parse_mask("1").is_err());
    }

    #[test]
    fn likelihood_invariant_to_shift_absorbed_by_alpha() {
        let (state, data, hyper, spec) = toy();
        let base = log_joint_terms(&state, &data, &hyper, &spec).unwrap();
        let mut shifted = data.clone();
        shifted.y.add_scalar_mut(3.0);
        let mut s2 = state.clone();
        s2.alpha.iter_mut().for_each(|a| *a += 3.0);
        let moved = log_joint_terms(&s2, &shifted, &hyper, &spec).unwrap();
        assert!((base.likelihood - moved.likelihood).abs() < 1e-10);
    }

    #[test]
    fn flat_likelihood_limit() {
        let (mut state, data, hyper, spec) = toy();
        state.sigma2_eps = 1e12;
        let a = log_joint_terms(&state, &data, &hyper, &spec).unwrap().likelihood;
        state.alpha[0] += 5.0;
        state.beta[(1, 2)] -= 4.0;
        let b = log_joint_terms(&state, &data, &hyper, &spec).unwrap().likelihood;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn changing_alpha_touches_only_likelihood_and_alpha_prior() {
        let (state, data, hyper, spec) = toy();
        let before = log_joint_terms(&state, &data, &hyper, &spec).unwrap();
        let mut s2 = state.clone();
        s2.alpha[1] = 2.7;
        let after = log_joint_terms(&s2, &data, &hyper, &spec).unwrap();
        assert_ne!(before.likelihood, after.likelihood);
        assert_ne!(before.alpha_prior, after.alpha_prior);
        assert_eq!(before.beta_transition, after.beta_transition);
        assert_eq!(before.gamma_prior, after.gamma_prior);
        assert_eq!(before.variance_priors, after.variance_priors);
    }

    #[test]
    fn masked_pairs_must_be_zero() {
        let (state, data, hyper, _) = toy();
        let spec = ModelSpec::with_mask(Variant::Dp, [(1, 1)]);
        assert!(matches!(
            log_joint(&state, &data, &hyper, &spec),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let (mut state, data, hyper, spec) = toy();
        state.alpha.push(0.0);
        assert!(matches!(
            log_joint(&state, &data, &hyper, &spec),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn spec_round_trips_mask_as_one_based() {
        let spec = ModelSpec::with_mask(Variant::Dp, [(2, 2)]);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"variant":"dp","zero_mask":[[3,3]]}"#);
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
