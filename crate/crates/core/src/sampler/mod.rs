//! Collapsed Gibbs sampler for the RW, AR and DP connectivity models.

pub mod chain;
pub mod conditionals;
pub mod gamma;
pub mod mh;
pub mod tau;
pub mod urn;

pub use chain::{initial_state, run_chain, ChainControls};
pub use conditionals::{update_alpha, update_beta, update_error_variances};
pub use gamma::{compute_gamma_terms, update_gamma_dp, update_gamma_gaussian, GammaConditionalTerms, MixtureWeights};
pub use mh::{update_sigma_delta_rho, MhOutcome};
pub use tau::update_tau;
pub use urn::polya_urn_log_density;
