//! Needle variations and maximum-principle certificates.
//!
//! A needle variation replaces a control by a fixed value `omega` on the
//! short window `[tau - eps, tau)` and leaves it alone elsewhere. Linearly
//! homotoping from the base control to a (smoothed) needle and measuring the
//! surface labour gives a function `W(eps)` that is non-negative whenever
//! the base control is optimal, vanishes as the needle shrinks, and whose
//! growth rate at zero is exactly the Hamiltonian gap
//!
//! ```text
//! dW/deps|_0 = H(tau, q(tau), p(tau), u_o(tau)) - H(tau, q(tau), p(tau), omega).
//! ```
//!
//! Non-negativity of that gap over all `(tau, omega)` is the Pontryagin
//! maximum principle. The certificate scan below evaluates the gap directly
//! on the p-optimal lift (exact up to ODE error); the `W(eps)/eps` ladder
//! exists to validate the limit formula numerically, not to drive verdicts.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::labour::{lift_homotopy, linear_homotopy, two_dim_labour, LiftMode, SGrid};
use crate::lift::lift_p_optimal;
use crate::problem::{eval_hamiltonian, ControlSignal, Interpolation, MayerProblem};
use crate::{DEFAULT_PMP_TOLERANCE, DEFAULT_SMOOTHING_FRACTION, DEFAULT_S_STEPS};

/// Where, what and how wide: a needle at `t = tau` of ceiling value `omega`
/// and width `epsilon`, with jump ramps of width `smoothing_fraction * eps`.
#[derive(Debug, Clone)]
pub struct NeedleSpec {
    pub tau: f64,
    pub omega: DVector<f64>,
    pub epsilon: f64,
    pub smoothing_fraction: f64,
}

impl NeedleSpec {
    pub fn new(tau: f64, omega: DVector<f64>, epsilon: f64) -> Result<Self> {
        Self::with_smoothing(tau, omega, epsilon, DEFAULT_SMOOTHING_FRACTION)
    }

    pub fn with_smoothing(
        tau: f64,
        omega: DVector<f64>,
        epsilon: f64,
        smoothing_fraction: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidNeedle(
                "a needle of width 0 is not defined; epsilon must be positive".into(),
            ));
        }
        if tau - epsilon < 0.0 {
            return Err(Error::InvalidNeedle(format!(
                "window [{}, {tau}) starts before t = 0",
                tau - epsilon
            )));
        }
        if !(smoothing_fraction > 0.0 && smoothing_fraction < 1.0) {
            return Err(Error::InvalidNeedle(format!(
                "smoothing fraction must lie in (0, 1), got {smoothing_fraction}"
            )));
        }
        Ok(Self {
            tau,
            omega,
            epsilon,
            smoothing_fraction,
        })
    }

    fn check_against(&self, u_o: &ControlSignal) -> Result<()> {
        let t_end = u_o.grid().horizon();
        if !(self.tau > 0.0 && self.tau <= t_end) {
            return Err(Error::InvalidNeedle(format!(
                "needle time {} outside (0, {t_end}]",
                self.tau
            )));
        }
        if self.omega.len() != u_o.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ceiling value of dimension {} for control dimension {}",
                self.omega.len(),
                u_o.dim()
            )));
        }
        Ok(())
    }

    /// Nodes that must exist on the grid so the window and its ramps are
    /// resolved: window boundaries, ramp edges and centres, and enough
    /// interior points that `[tau - eps, tau)` holds at least 4 nodes.
    fn refinement_nodes(&self) -> Vec<f64> {
        let start = self.tau - self.epsilon;
        let half = 0.5 * self.smoothing_fraction * self.epsilon;
        let mut ts = vec![
            start - half,
            start,
            start + half,
            self.tau - half,
            self.tau,
            self.tau + half,
        ];
        for j in 1..=4 {
            ts.push(start + self.epsilon * j as f64 / 5.0);
        }
        ts
    }
}

/// The sharp needle: `omega` on `[tau - eps, tau)`, the base control
/// elsewhere, as a piecewise-constant-left signal on a refined grid.
pub fn make_needle(u_o: &ControlSignal, spec: &NeedleSpec) -> Result<ControlSignal> {
    spec.check_against(u_o)?;
    let grid = u_o.grid().with_inserted(&spec.refinement_nodes());
    let start = spec.tau - spec.epsilon;
    let samples = grid
        .nodes()
        .iter()
        .map(|&t| {
            if t >= start && t < spec.tau {
                spec.omega.clone()
            } else {
                u_o.value_at(t)
            }
        })
        .collect();
    ControlSignal::new(grid, samples, Interpolation::PiecewiseConstantLeft)
}

/// Cubic smoothstep, monotone with `s(0) = 0`, `s(1/2) = 1/2`, `s(1) = 1`.
fn smoothstep(theta: f64) -> f64 {
    let x = theta.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// The smoothed needle: as [`make_needle`], but the two jumps are replaced
/// by monotone cubic ramps of width `smoothing_fraction * eps` centred at
/// the jump times. Every value lies on the segment between the base value
/// and `omega`, hence inside the enclosing convex box. The result keeps the
/// base signal's interpolation mode.
pub fn smooth_needle(u_o: &ControlSignal, spec: &NeedleSpec) -> Result<ControlSignal> {
    spec.check_against(u_o)?;
    let grid = u_o.grid().with_inserted(&spec.refinement_nodes());
    let start = spec.tau - spec.epsilon;
    let width = spec.smoothing_fraction * spec.epsilon;
    let half = 0.5 * width;

    let value = |t: f64| -> DVector<f64> {
        let base = u_o.value_at(t);
        if t < start - half || t >= spec.tau + half {
            base
        } else if t < start + half {
            // rising ramp onto the ceiling
            let sigma = smoothstep((t - (start - half)) / width);
            &base + (&spec.omega - &base).scale(sigma)
        } else if t < spec.tau - half {
            spec.omega.clone()
        } else {
            // falling ramp back to the base control
            let sigma = smoothstep((t - (spec.tau - half)) / width);
            &spec.omega + (&base - &spec.omega).scale(sigma)
        }
    };

    let samples = grid.nodes().iter().map(|&t| value(t)).collect();
    ControlSignal::new(grid, samples, u_o.interpolation())
}

/// The needle labour `W(eps)`: surface labour of the linear p-optimal
/// homotopy from the base control to its smoothed needle, on the default
/// s-grid.
pub fn needle_labour_w(
    problem: &MayerProblem,
    u_o: &ControlSignal,
    spec: &NeedleSpec,
) -> Result<f64> {
    needle_labour_w_with(problem, u_o, spec, DEFAULT_S_STEPS)
}

/// [`needle_labour_w`] with an explicit s-resolution.
pub fn needle_labour_w_with(
    problem: &MayerProblem,
    u_o: &ControlSignal,
    spec: &NeedleSpec,
    s_steps: usize,
) -> Result<f64> {
    if !problem.control_set().contains(&spec.omega) {
        return Err(Error::InvalidNeedle(format!(
            "ceiling value {:?} is not in the control set",
            spec.omega
        )));
    }
    let needle = smooth_needle(u_o, spec)?;
    let base = u_o.resample(needle.grid())?;
    let homotopy = linear_homotopy(&base, &needle, SGrid::uniform(s_steps)?)?;
    let surface = lift_homotopy(problem, homotopy, LiftMode::POptimal)?;
    two_dim_labour(problem, &surface)
}

/// Result of the `W(eps)/eps` ladder extrapolation.
#[derive(Debug, Clone)]
pub struct NeedleDerivative {
    /// Extrapolated limit of `W(eps)/eps` as the needle shrinks.
    pub estimate: f64,
    /// The `(eps, W(eps)/eps)` points the estimate came from.
    pub quotients: Vec<(f64, f64)>,
    /// False when the ladder did not settle (successive quotient gaps
    /// growing), in which case the estimate is reported anyway.
    pub consistent: bool,
}

/// Default shrinking widths: `{0.08, 0.04, 0.02, 0.01} * T`.
pub fn default_epsilon_ladder(horizon: f64) -> Vec<f64> {
    [0.08, 0.04, 0.02, 0.01].iter().map(|f| f * horizon).collect()
}

/// Estimate `dW/deps` at `eps = 0` for a needle at `(tau, omega)`.
///
/// Since `W(0) = 0`, each `W(eps)/eps` is already a difference quotient; the
/// ladder of quotients is extrapolated to `eps = 0` by polynomial (Neville)
/// extrapolation. The limit should equal the Hamiltonian gap at `tau`.
pub fn needle_derivative(
    problem: &MayerProblem,
    u_o: &ControlSignal,
    tau: f64,
    omega: &DVector<f64>,
    epsilon_ladder: &[f64],
) -> Result<NeedleDerivative> {
    if epsilon_ladder.is_empty() {
        return Err(Error::InvalidNeedle("empty epsilon ladder".into()));
    }
    for w in epsilon_ladder.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidNeedle(
                "epsilon ladder must be strictly decreasing".into(),
            ));
        }
    }
    let mut quotients = Vec::with_capacity(epsilon_ladder.len());
    for &eps in epsilon_ladder {
        let spec = NeedleSpec::new(tau, omega.clone(), eps)?;
        let w = needle_labour_w(problem, u_o, &spec)?;
        quotients.push((eps, w / eps));
    }

    // Neville extrapolation of the quotient polynomial to eps = 0.
    let mut table: Vec<f64> = quotients.iter().map(|&(_, r)| r).collect();
    let xs: Vec<f64> = quotients.iter().map(|&(e, _)| e).collect();
    let n = table.len();
    for level in 1..n {
        for i in 0..n - level {
            table[i] = (xs[i + level] * table[i] - xs[i] * table[i + 1])
                / (xs[i + level] - xs[i]);
        }
    }
    let estimate = table[0];

    // the ladder is consistent when the quotient gaps keep shrinking
    let mut consistent = true;
    if quotients.len() >= 3 {
        for w in quotients.windows(3) {
            let d1 = (w[1].1 - w[0].1).abs();
            let d2 = (w[2].1 - w[1].1).abs();
            if d2 > d1 + 1e-9 {
                consistent = false;
            }
        }
    }

    Ok(NeedleDerivative {
        estimate,
        quotients,
        consistent,
    })
}

/// One probed point of a maximum-principle scan.
#[derive(Debug, Clone)]
pub struct GapSample {
    pub tau: f64,
    pub omega: DVector<f64>,
    /// `H(tau, q, p, u_o(tau)) - H(tau, q, p, omega)`; negative means the
    /// candidate control is beaten by `omega` at `tau`.
    pub gap: f64,
}

/// Scan verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Certified,
    Refuted { tau: f64, omega: DVector<f64> },
}

/// A completed maximum-principle scan over a `(tau, omega)` product set.
#[derive(Debug, Clone)]
pub struct PmpCertificate {
    pub samples: Vec<GapSample>,
    pub min_gap: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl PmpCertificate {
    pub fn is_certified(&self) -> bool {
        matches!(self.verdict, Verdict::Certified)
    }
}

/// Evaluate the Hamiltonian gap of `u_o` on a grid of probe times and
/// control values and certify or refute the maximum principle.
///
/// `u_o` is lifted p-optimally once; every gap is then a pair of Hamiltonian
/// evaluations on that lift (no ODE re-solves). Probe times are `tau_count`
/// grid nodes spread evenly over `(0, T]` (nested for divisible counts);
/// probe values come from [`crate::problem::ControlSet::scan_points`] with
/// `omega_density` points per axis, visited in lexicographic order. The
/// verdict is refuted iff some gap is below `-tolerance`; the witness is the
/// minimizing pair, ties resolved by smallest `tau` then lexicographic
/// `omega`. A refutation is data, not an error.
pub fn pmp_certificate(
    problem: &MayerProblem,
    u_o: &ControlSignal,
    tau_count: usize,
    omega_density: usize,
    tolerance: f64,
) -> Result<PmpCertificate> {
    if tau_count < 2 {
        return Err(Error::InvalidProblem(
            "need at least 2 probe times".into(),
        ));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidProblem(
            "certificate tolerance must be positive".into(),
        ));
    }
    let lift = lift_p_optimal(problem, u_o)?;
    let nodes = u_o.grid().nodes();
    let last = nodes.len() - 1;

    let mut tau_indices: Vec<usize> = (1..=tau_count)
        .map(|i| ((i as f64 / tau_count as f64) * last as f64).round() as usize)
        .map(|idx| idx.clamp(1, last))
        .collect();
    tau_indices.dedup();

    let mut omegas = problem.control_set().scan_points(omega_density);
    omegas.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if omegas.is_empty() {
        return Err(Error::InvalidProblem(
            "control set produced no scan points".into(),
        ));
    }

    let mut samples = Vec::with_capacity(tau_indices.len() * omegas.len());
    let mut min_gap = f64::INFINITY;
    let mut witness: Option<(f64, DVector<f64>)> = None;
    for &idx in &tau_indices {
        let tau = nodes[idx];
        let q = lift.q().value(idx);
        let p = lift.p().value(idx);
        let h_base = eval_hamiltonian(problem, tau, q, p, &u_o.value_at(tau));
        for omega in &omegas {
            let gap = h_base - eval_hamiltonian(problem, tau, q, p, omega);
            if !gap.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("Hamiltonian gap at omega = {omega:?}"),
                    t: tau,
                });
            }
            if gap < min_gap {
                min_gap = gap;
                witness = Some((tau, omega.clone()));
            }
            samples.push(GapSample {
                tau,
                omega: omega.clone(),
                gap,
            });
        }
    }

    let verdict = if min_gap < -tolerance {
        let (tau, omega) = witness.unwrap();
        Verdict::Refuted { tau, omega }
    } else {
        Verdict::Certified
    };
    Ok(PmpCertificate {
        samples,
        min_gap,
        tolerance,
        verdict,
    })
}

/// [`pmp_certificate`] with the default scan resolution and tolerance.
pub fn pmp_certificate_default(
    problem: &MayerProblem,
    u_o: &ControlSignal,
) -> Result<PmpCertificate> {
    pmp_certificate(
        problem,
        u_o,
        crate::DEFAULT_TAU_COUNT,
        crate::DEFAULT_OMEGA_DENSITY,
        DEFAULT_PMP_TOLERANCE,
    )
}
