//! Numerical verification toolkit for Mayer optimal-control problems.
//!
//! A Mayer problem asks for a control `u(t)` driving `q' = F(t, q, u)` from a
//! fixed initial state so that a terminal cost `C(T, q(T))` is minimal. This
//! crate lifts candidate controls to the extended Hamiltonian system in
//! state/costate space, rewrites cost differences as line and surface
//! integrals over control homotopies, and uses those integrals to certify or
//! refute optimality:
//!
//! - [`lift`] solves the coupled state/costate system and evaluates the cost
//!   both as a terminal value and as a line integral of the cost one-form
//!   (the two must agree on solution curves);
//! - [`labour`] sweeps two-parameter control families, computes endpoint and
//!   surface ("labour") integrals, and checks the identity
//!   `delta_cost = endpoint_labour + surface_labour`;
//! - [`needle`] builds needle variations, estimates the labour growth rate as
//!   the needle shrinks, and scans the Hamiltonian gap
//!   `H(u_o(tau)) - H(omega)` into a maximum-principle certificate;
//! - [`benchmarks`] provides small problems with known optima and a
//!   brute-force enumeration oracle that anchors the test suite.

pub mod benchmarks;
pub mod error;
pub mod labour;
pub mod lift;
pub mod needle;
pub mod numerics;
pub mod problem;

pub use benchmarks::{brute_force_oracle, builtin, builtin_names, BenchmarkProblem, OracleSpec};
pub use error::{Error, Result};
pub use labour::{
    endpoint_admissibility, endpoint_labour, endpoint_labour_via_line_integrals,
    labour_derivative_at_zero, labour_function, lift_homotopy, linear_homotopy,
    stationarity_check, stokes_report, two_dim_labour, ControlHomotopy, HomotopySurface,
    LabourReport, LiftMode, SGrid,
};
pub use lift::{
    backward_costate, cost_line_integral, forward_state, lift_p_optimal,
    lift_with_initial_costate, terminal_cost_value, CostForm, LiftedCurve,
};
pub use needle::{
    default_epsilon_ladder, make_needle, needle_derivative, needle_labour_w,
    needle_labour_w_with, pmp_certificate, pmp_certificate_default, smooth_needle, GapSample,
    NeedleDerivative, NeedleSpec, PmpCertificate, Verdict,
};
pub use numerics::{integrate_ode, quad_2d, quad_trapezoid, Direction, SampledPath, TimeGrid};
pub use problem::{
    eval_hamiltonian, eval_hamiltonian_du, validate_problem, AxisBox, ControlPair, ControlSet,
    ControlSignal, Interpolation, MayerProblem, MayerProblemBuilder, Violation,
};

/// Default number of uniform time steps used by the verification pipeline.
pub const DEFAULT_TIME_STEPS: usize = 1000;

/// Default number of uniform homotopy-parameter steps.
pub const DEFAULT_S_STEPS: usize = 100;

/// Default absolute tolerance below which a Hamiltonian gap counts as a
/// maximum-principle violation.
pub const DEFAULT_PMP_TOLERANCE: f64 = 1e-6;

/// Default number of probe times for a maximum-principle scan.
pub const DEFAULT_TAU_COUNT: usize = 50;

/// Default number of control-set scan points per control dimension.
pub const DEFAULT_OMEGA_DENSITY: usize = 9;

/// Default smoothing fraction for needle ramps (ramp width `k * epsilon`).
pub const DEFAULT_SMOOTHING_FRACTION: f64 = 0.05;
