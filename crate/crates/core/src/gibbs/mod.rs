//! The Gibbs engine: every local random-effect prior crossed with both
//! error-scale priors.

mod chain;
mod prior;
mod state;
mod steps;

pub use chain::{
    run_chain, run_chain_from, run_chains, ChainSettings, Draw, Trace, TraceMeta, DEFAULT_BURN_IN, DEFAULT_CHAINS,
    DEFAULT_ITERATIONS, DEFAULT_THIN,
};
pub use prior::{ErrorPrior, LocalPrior, NuWeight, PriorConfig, DEFAULT_HYPER, DEFAULT_K_NU};
pub use state::{initialize_state, shrinkage_factor, ChainState, INIT_PRECISION_MAX, INIT_PRECISION_MIN};
pub use steps::{
    beta_conditional, beta_conditional_moments, nu_log_weights, phi_conditional, step_beta, step_global_scales,
    step_lambda_halfcauchy, step_omega, step_u, student_t_log_density, sweep, tau_conditional, u_conditional,
    update_lambda_i, update_omega_i, FixedScales,
};
