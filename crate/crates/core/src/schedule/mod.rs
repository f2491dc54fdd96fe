//! Learning-rate schedules.
//!
//! * [`theory`]: step sizes `D / K(D)` from gap-dependent smoothness.
//! * [`practical`]: the rational schedule `D / (K0 + K1 D + K2 D^2)` fitted to
//!   a peak learning rate, a warm-up divisor and a transition point.
//! * [`adaptive`]: the loss-driven scheduler built on the practical schedule.
//! * [`decay`]: classical warm-up and decay shapes.

pub mod adaptive;
pub mod decay;
pub mod practical;
pub mod theory;

pub use adaptive::{AdaptiveConfig, AdaptiveScheduler, DecayState, LrStep, Phase};
pub use decay::{cosine_decay, linear_decay, linear_warmup, DecayKind};
pub use practical::{
    candidate_grid, eta_practical, matching_objective, matching_objective_with,
    select_delta_prime, solve_coefficients, target_schedule, CoefficientSet, DEFAULT_CANDIDATES,
    DEFAULT_SIGMA_F2, QUADRATURE_POINTS,
};
pub use theory::{
    convert_smoothness_constants, eta_thm1, eta_thm2, eta_thm3, lambda_admissible, lambda_max,
    transition_point, TheoreticalParams,
};
