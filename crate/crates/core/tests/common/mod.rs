//! Shared oracles for the integration and acceptance suites.
#![allow(dead_code)]

use dynconn::base_measure::BaseMeasure;
use dynconn::model::{log_joint, ChainState, Dataset, Hyperparameters, ModelSpec, Variant};
use dynconn::sampler::conditionals::{
    alpha_conditional, beta_conditional, sigma2_eps_conditional, sigma2_omega_conditional,
};
use dynconn::sampler::gamma::{compute_gamma_terms, DpConditional, GaussianConditional};
use dynconn::sampler::tau::{eta_log_density, sample_eta, TauConditional};
use dynconn::sampler::urn::distinct_count;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub state: ChainState,
    pub data: Dataset,
    pub hyper: Hyperparameters,
    pub spec: ModelSpec,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random small instance. Under DP some trajectories are exact copies so the
/// urn has ties; with `masked` one pair is pinned at zero.
pub fn random_instance<R: Rng>(rng: &mut R, variant: Variant, r: usize, n: usize, masked: bool) -> Instance {
    let y = DMatrix::from_fn(r, n, |_, _| 1.0 + normal(rng));
    let x: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let data = Dataset::new(y, x).unwrap();
    let mask: Vec<(usize, usize)> = if masked { vec![(r - 1, 0)] } else { vec![] };
    let spec = ModelSpec::with_mask(variant, mask);
    let m = spec.free_count(r);
    let hyper = Hyperparameters {
        mu: (0..r).map(|_| normal(rng)).collect(),
        sigma2_alpha: rng.random_range(0.3..3.0),
        beta_bar: normal(rng),
        sigma2_beta: rng.random_range(0.3..3.0),
        gamma_bar: 0.5 * normal(rng),
        sigma2_gamma: rng.random_range(0.3..3.0),
        a: rng.random_range(0.0..2.0),
        b: rng.random_range(0.0..2.0),
        c: 0.1,
        a_tau: 0.1 * (m as f64 - 1.0),
        b_tau: 0.1,
    };
    let rho = if variant == Variant::Rw { 1.0 } else { rng.random_range(-0.9..0.9) };
    let mut gamma: Vec<Vec<f64>> = (0..r * r).map(|_| (0..n).map(|_| 0.5 * normal(rng)).collect()).collect();
    if variant == Variant::Dp {
        // Tie the last free pair to the first so the urn has a cluster.
        gamma[r * r - 1] = gamma[1].clone();
    }
    for (i, j) in spec.zero_mask.iter() {
        gamma[i * r + j] = vec![0.0; n];
    }
    let state = ChainState {
        alpha: (0..r).map(|_| normal(rng)).collect(),
        beta: DMatrix::from_fn(r, n, |_, _| normal(rng)),
        gamma,
        sigma2_eps: rng.random_range(0.2..2.0),
        sigma2_omega: rng.random_range(0.2..2.0),
        sigma2_delta: rng.random_range(0.1..1.0),
        rho,
        tau: rng.random_range(0.3..3.0),
        eta: rng.random_range(0.1..0.9),
    };
    Instance { state, data, hyper, spec }
}

impl Instance {
    pub fn joint(&self, s: &ChainState) -> f64 {
        log_joint(s, &self.data, &self.hyper, &self.spec).unwrap()
    }
}

/// Largest `|Δ log kernel - Δ log joint|` per update block.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProportionalityReport {
    pub alpha: f64,
    pub beta: f64,
    pub variances: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl ProportionalityReport {
    pub fn max(&self) -> f64 {
        [self.alpha, self.beta, self.variances, self.gamma, self.tau]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn merge(&mut self, o: &Self) {
        self.alpha = self.alpha.max(o.alpha);
        self.beta = self.beta.max(o.beta);
        self.variances = self.variances.max(o.variances);
        self.gamma = self.gamma.max(o.gamma);
        self.tau = self.tau.max(o.tau);
    }
}

/// Draws a proposal from each conditional and compares the log-kernel
/// difference with the log-joint difference.
pub fn check_proportionality<R: Rng>(inst: &Instance, rng: &mut R) -> ProportionalityReport {
    let mut rep = ProportionalityReport::default();
    let s0 = &inst.state;
    let (data, hyper, spec) = (&inst.data, &inst.hyper, &inst.spec);
    let j0 = inst.joint(s0);
    let (r, n) = (data.regions(), data.len());
    let gap = |dk: f64, s1: &ChainState| (dk - (inst.joint(s1) - j0)).abs();

    for i in 0..r {
        let c = alpha_conditional(i, s0, data, hyper);
        let mut s1 = s0.clone();
        s1.alpha[i] = c.sample(rng);
        rep.alpha = rep.alpha.max(gap(c.log_density(s1.alpha[i]) - c.log_density(s0.alpha[i]), &s1));
    }
    for i in 0..r {
        for t in 0..n {
            let c = beta_conditional(i, t, s0, data, hyper);
            let mut s1 = s0.clone();
            s1.beta[(i, t)] = c.sample(rng);
            let dk = c.log_density(s1.beta[(i, t)]) - c.log_density(s0.beta[(i, t)]);
            rep.beta = rep.beta.max(gap(dk, &s1));
        }
    }
    {
        let c = sigma2_eps_conditional(s0, data, hyper);
        let mut s1 = s0.clone();
        s1.sigma2_eps = 1.0 / c.sample(rng).unwrap();
        let dk = c.log_kernel(1.0 / s1.sigma2_eps) - c.log_kernel(1.0 / s0.sigma2_eps);
        rep.variances = rep.variances.max(gap(dk, &s1));
        let c = sigma2_omega_conditional(s0, data, hyper);
        let mut s1 = s0.clone();
        s1.sigma2_omega = 1.0 / c.sample(rng).unwrap();
        let dk = c.log_kernel(1.0 / s1.sigma2_omega) - c.log_kernel(1.0 / s0.sigma2_omega);
        rep.variances = rep.variances.max(gap(dk, &s1));
    }

    let base = BaseMeasure::new(s0.base_measure(hyper)).unwrap();
    for p in spec.unmasked_pairs(r) {
        let (i, j) = (p / r, p % r);
        match spec.variant {
            Variant::Dp => {
                let c = DpConditional::new(i, j, s0, data, spec, &base).unwrap();
                let mut candidates = vec![c.gaussian.sample(rng)];
                candidates.extend(c.atoms.iter().cloned());
                for g in candidates {
                    let mut s1 = s0.clone();
                    s1.gamma[p] = g;
                    let dk = c.log_kernel_unnormalized(&s1.gamma[p]) - c.log_kernel_unnormalized(&s0.gamma[p]);
                    rep.gamma = rep.gamma.max(gap(dk, &s1));
                }
            }
            Variant::Ar | Variant::Rw => {
                let terms = compute_gamma_terms(i, j, s0, data);
                let c = GaussianConditional::new(&base, &terms).unwrap();
                let mut s1 = s0.clone();
                s1.gamma[p] = c.sample(rng);
                let dk = c.log_density(&s1.gamma[p]) - c.log_density(&s0.gamma[p]);
                rep.gamma = rep.gamma.max(gap(dk, &s1));
            }
        }
    }

    if spec.variant == Variant::Dp {
        let free = spec.unmasked_pairs(r);
        let vectors: Vec<&[f64]> = free.iter().map(|p| s0.gamma[*p].as_slice()).collect();
        let (m, d) = (vectors.len(), distinct_count(&vectors));
        let mut s1 = s0.clone();
        s1.eta = sample_eta(s0.tau, m, rng).unwrap();
        let dk = eta_log_density(s1.eta, s0.tau, m) - eta_log_density(s0.eta, s0.tau, m);
        rep.tau = rep.tau.max(gap(dk, &s1));

        let c = TauConditional::new(hyper.a_tau, hyper.b_tau, d, m, s0.eta);
        let mut s1 = s0.clone();
        s1.tau = c.sample(rng).unwrap();
        let dk = c.log_density(s1.tau) - c.log_density(s0.tau);
        rep.tau = rep.tau.max(gap(dk, &s1));
    }
    rep
}
