//! Numerical toolkit for the two-layer (atmosphere + surface) energy balance model.
//!
//! Modules build on each other bottom-up: [`model`] defines the vector field,
//! [`integrator`] solves it in time, [`equilibria`] enumerates and classifies fixed
//! points, [`sensitivity`] differentiates and continues them, [`basins`] maps the
//! phase plane and [`asymptotics`] covers the convexity and blow-up diagnostics.

pub mod asymptotics;
pub mod basins;
pub mod equilibria;
pub mod error;
pub mod integrator;
pub mod model;
mod roots;
pub mod sensitivity;

pub use asymptotics::{
    blow_up_certificate, bracket_epsilon_a0, convexity_report, in_escape_region, l_eval, l_inverse, mu_star,
    mu_star_residual, mu_star_residual_cleared, n_eval, n_root, n_star_eval, n_star_min, n_star_sign_changes,
    phi_second_closed, rho_consistency, rho_grid, rho_of_ts, BlowupCertificate, ConvexityReport, EscapeFloor,
    EscapeRegion, ENDPOINT_GUARD, EPSILON_A0_GRID, RHO_MIN,
};
pub use basins::{
    axis_threshold, axis_threshold_in, basin_map, classify_region, polyline_distance, threshold_integration_options,
    trace_separatrix, Axis, AxisThreshold, BasinMap, Capture, GridSpec, PhasePortrait, RegionLabel, Separatrix,
};
pub use equilibria::{
    classify, equilibrium_bounds, find_equilibria, find_equilibria_with, phi, phi_curve, phi_prime, solve_ta1,
    Equilibrium, EquilibriumBounds, EquilibriumClass, EquilibriumOptions, Stability, Verdict,
};
pub use error::{Error, Result};
pub use integrator::{
    detect_monotone_tail, integrate, integrate_observed, invariant_rectangle, Control, Direction, IntegrationOptions,
    MonotoneTail, Rectangle, Sample, Termination, Trajectory, SECONDS_PER_YEAR,
};
pub use model::{
    coalbedo_eval, coalbedo_slope, jacobian, vector_field, CoalbedoRamp, Eigenvalues, Jacobian2, ModelParams,
    RampSlope, Rates, State, FOURTH_ROOT_2, SIGMA_B,
};
pub use sensitivity::{
    d_eq_d_epsilon, d_eq_d_lambda, greenhouse_jump, hysteresis_loop, sweep, up_down_path, Branch, BranchEvent,
    BranchEventKind, EquilibriumDerivative, GreenhouseJump, HysteresisLoop, HysteresisRecord, JumpEvent, Sweep,
    SweepParam, SweepRecord,
};
