//! Lifting controls to the extended state/costate system.
//!
//! A control pair `(u(t), (a, b))` determines a unique curve
//! `(t, q(t), p(t))` through
//!
//! ```text
//! q' =  dH/dp = F(t, q, u(t)),        q(0) = a,
//! p' = -dH/dq = -p * dF/dq(t, q, u),  p(0) = b,
//! ```
//!
//! where `H = p . F`. The state equation never reads `p`, so the costate can
//! instead be pinned by the terminal condition `p(T) = -dC/dq(T, q(T))`: solve
//! the state forward, seed the costate at `T`, integrate backward. A pair
//! resolved this way is called p-optimal here; its `b = p(0)` is read off the
//! backward solution rather than shot for.
//!
//! The cost of a lifted curve can be evaluated two ways that must agree: as
//! the terminal value `C(T, q(T))` and as the line integral of the cost
//! one-form `alpha = p.dq - H dt + dC` along the curve (the `p.dq - H dt`
//! part vanishes on solutions). The line-integral route is the one that
//! generalizes to homotopy surfaces, and the agreement of the two is the
//! first thing the acceptance suite checks.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{self, integrate_ode, Direction, SampledPath, TimeGrid};
use crate::problem::{eval_hamiltonian, ControlPair, ControlSignal, MayerProblem};

/// A sampled solution curve `(t, q(t), p(t))` together with its source pair.
#[derive(Debug, Clone)]
pub struct LiftedCurve {
    grid: TimeGrid,
    q: SampledPath,
    p: SampledPath,
    source: ControlPair,
}

impl LiftedCurve {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn q(&self) -> &SampledPath {
        &self.q
    }

    pub fn p(&self) -> &SampledPath {
        &self.p
    }

    pub fn source(&self) -> &ControlPair {
        &self.source
    }

    /// Sup-norm of `p(T) + dC/dq(T, q(T))`; zero (to rounding) exactly when
    /// the curve is p-optimal. The membership tolerance used elsewhere is
    /// 1e-8 absolute.
    pub fn terminal_costate_residual(&self, problem: &MayerProblem) -> f64 {
        let t_end = self.grid.horizon();
        let target = -problem.terminal_cost_dq(t_end, self.q.last());
        (self.p.last() - target).amax()
    }

    /// Re-integration check: redo every RK4 step of the state equation from
    /// the stored sample and report the worst relative deviation from the
    /// next stored sample. A state path produced by [`forward_state`] on the
    /// same problem reproduces itself bit for bit.
    pub fn max_state_step_residual(&self, problem: &MayerProblem) -> Result<f64> {
        let signal = &self.source.signal;
        let mut rhs =
            |t: f64, y: &DVector<f64>| problem.dynamics(t, y, &signal.value_at(t));
        let nodes = self.grid.nodes();
        let mut worst: f64 = 0.0;
        for i in 0..nodes.len() - 1 {
            let h = nodes[i + 1] - nodes[i];
            let redo = numerics::rk4_step(&mut rhs, nodes[i], h, self.q.value(i))?;
            let denom = 1.0 + self.q.value(i + 1).amax();
            worst = worst.max((redo - self.q.value(i + 1)).amax() / denom);
        }
        Ok(worst)
    }
}

/// Solve the state equation forward from the problem's initial state under
/// the interpolated control.
pub fn forward_state(problem: &MayerProblem, signal: &ControlSignal) -> Result<SampledPath> {
    problem.check_signal(signal)?;
    let rhs = |t: f64, y: &DVector<f64>| problem.dynamics(t, y, &signal.value_at(t));
    integrate_ode(rhs, problem.initial_state(), signal.grid(), Direction::Forward)
}

/// Right-hand side of the coupled `(q, p)` system.
fn joint_field<'a>(
    problem: &'a MayerProblem,
    signal: &'a ControlSignal,
) -> impl FnMut(f64, &DVector<f64>) -> DVector<f64> + 'a {
    let n = problem.state_dim();
    move |t: f64, y: &DVector<f64>| {
        let q = y.rows(0, n).into_owned();
        let p = y.rows(n, n).into_owned();
        let u = signal.value_at(t);
        let f = problem.dynamics(t, &q, &u);
        let p_dot = -(problem.dynamics_dq(t, &q, &u).transpose() * p);
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&f);
        out.rows_mut(n, n).copy_from(&p_dot);
        out
    }
}

/// Solve the costate equation backward from the terminal condition
/// `p(T) = -dC/dq(T, q(T))`.
///
/// The state is re-integrated alongside (backward from `q(T)`) so the costate
/// sees RK4-accurate states at the half-step stage points; `q_path` supplies
/// the terminal state and must come from [`forward_state`] for this signal.
pub fn backward_costate(
    problem: &MayerProblem,
    signal: &ControlSignal,
    q_path: &SampledPath,
) -> Result<SampledPath> {
    problem.check_signal(signal)?;
    let n = problem.state_dim();
    if q_path.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "state path of dimension {} for state dimension {n}",
            q_path.dim()
        )));
    }
    if q_path.grid() != signal.grid() {
        return Err(Error::InvalidSignal(
            "state path and control signal must share one grid".into(),
        ));
    }
    let t_end = signal.grid().horizon();
    let p_end = -problem.terminal_cost_dq(t_end, q_path.last());

    let mut y_end = DVector::zeros(2 * n);
    y_end.rows_mut(0, n).copy_from(q_path.last());
    y_end.rows_mut(n, n).copy_from(&p_end);

    let joint = integrate_ode(
        joint_field(problem, signal),
        &y_end,
        signal.grid(),
        Direction::Backward,
    )?;
    let p_values = joint
        .values()
        .iter()
        .map(|y| y.rows(n, n).into_owned())
        .collect();
    SampledPath::new(signal.grid().clone(), p_values)
}

/// Lift with the costate pinned by the terminal condition: state forward,
/// costate backward. The returned pair records `b = p(0)` as read off the
/// backward solution.
pub fn lift_p_optimal(problem: &MayerProblem, signal: &ControlSignal) -> Result<LiftedCurve> {
    let q = forward_state(problem, signal)?;
    let p = backward_costate(problem, signal, &q)?;
    let source = ControlPair {
        signal: signal.clone(),
        a: problem.initial_state().clone(),
        b: p.first().clone(),
    };
    Ok(LiftedCurve {
        grid: signal.grid().clone(),
        q,
        p,
        source,
    })
}

/// Lift with a prescribed initial costate `b`: the coupled system is solved
/// forward from `(a0, b)`. The state part is identical (bit for bit) to
/// [`forward_state`], since the state equation never reads `p`.
pub fn lift_with_initial_costate(
    problem: &MayerProblem,
    signal: &ControlSignal,
    b: &DVector<f64>,
) -> Result<LiftedCurve> {
    problem.check_signal(signal)?;
    let n = problem.state_dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial costate of dimension {} for state dimension {n}",
            b.len()
        )));
    }
    let mut y0 = DVector::zeros(2 * n);
    y0.rows_mut(0, n).copy_from(problem.initial_state());
    y0.rows_mut(n, n).copy_from(b);

    let joint = integrate_ode(
        joint_field(problem, signal),
        &y0,
        signal.grid(),
        Direction::Forward,
    )?;
    let q_values: Vec<_> = joint
        .values()
        .iter()
        .map(|y| y.rows(0, n).into_owned())
        .collect();
    let p_values: Vec<_> = joint
        .values()
        .iter()
        .map(|y| y.rows(n, n).into_owned())
        .collect();
    let grid = signal.grid().clone();
    Ok(LiftedCurve {
        grid: grid.clone(),
        q: SampledPath::new(grid.clone(), q_values)?,
        p: SampledPath::new(grid, p_values)?,
        source: ControlPair {
            signal: signal.clone(),
            a: problem.initial_state().clone(),
            b: b.clone(),
        },
    })
}

/// Terminal cost `C(T, q(T))` of a state path.
pub fn terminal_cost_value(problem: &MayerProblem, q_path: &SampledPath) -> f64 {
    problem.terminal_cost(q_path.grid().horizon(), q_path.last())
}

/// The cost one-form `alpha = (-H + dC/dt) dt + (p_j + dC/dq^j) dq^j`,
/// evaluated on tangent vectors `(dt, dq, dp)` at points of the extended
/// space. Linear in the tangent; the `dp` component is identically zero.
pub struct CostForm<'a> {
    problem: &'a MayerProblem,
}

impl<'a> CostForm<'a> {
    pub fn new(problem: &'a MayerProblem) -> Self {
        Self { problem }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn eval(
        &self,
        t: f64,
        q: &DVector<f64>,
        p: &DVector<f64>,
        u: &DVector<f64>,
        dt: f64,
        dq: &DVector<f64>,
        _dp: &DVector<f64>,
    ) -> f64 {
        let h = eval_hamiltonian(self.problem, t, q, p, u);
        let c_t = self.problem.terminal_cost_dt(t, q);
        let c_q = self.problem.terminal_cost_dq(t, q);
        (-h + c_t) * dt + (p + c_q).dot(dq)
    }
}

/// Line integral of the cost one-form along a lifted curve, using discrete
/// tangents: central differences of `q` at interior nodes, one-sided at the
/// endpoints, composite trapezoid in `t`.
///
/// On a solution curve this reproduces `C(T, q(T)) - C(0, q(0))` up to
/// discretization error; on corrupted samples it visibly does not, which is
/// what makes it worth computing.
pub fn cost_line_integral(problem: &MayerProblem, curve: &LiftedCurve) -> f64 {
    let nodes = curve.grid.nodes();
    let n = nodes.len();
    let form = CostForm::new(problem);
    let dp = DVector::zeros(problem.state_dim());
    let mut integrand = Vec::with_capacity(n);
    for i in 0..n {
        let dq_dt = state_tangent(&curve.q, nodes, i);
        let u = curve.source.signal.value_at(nodes[i]);
        integrand.push(form.eval(nodes[i], curve.q.value(i), curve.p.value(i), &u, 1.0, &dq_dt, &dp));
    }
    numerics::trapezoid(nodes, &integrand)
}

/// Discrete `dq/dt` at node `i`: central difference inside, second-order
/// one-sided at the two ends (plain difference on 2-node grids).
pub(crate) fn state_tangent(path: &SampledPath, nodes: &[f64], i: usize) -> DVector<f64> {
    let n = nodes.len();
    if i == 0 {
        if n < 3 {
            return (path.value(1) - path.value(0)).scale(1.0 / (nodes[1] - nodes[0]));
        }
        let (w0, w1, w2) = numerics::onesided_weights(nodes[0], nodes[1], nodes[2]);
        path.value(0).scale(w0) + path.value(1).scale(w1) + path.value(2).scale(w2)
    } else if i == n - 1 {
        if n < 3 {
            return (path.value(1) - path.value(0)).scale(1.0 / (nodes[1] - nodes[0]));
        }
        let (w0, w1, w2) = numerics::onesided_weights(nodes[n - 1], nodes[n - 2], nodes[n - 3]);
        path.value(n - 1).scale(w0) + path.value(n - 2).scale(w1) + path.value(n - 3).scale(w2)
    } else {
        (path.value(i + 1) - path.value(i - 1)).scale(1.0 / (nodes[i + 1] - nodes[i - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AxisBox, ControlSet, Interpolation};
    use crate::DEFAULT_TIME_STEPS;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    /// F = u with terminal cost C and initial state a0.
    fn integrator_problem(
        a0: f64,
        cost: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> MayerProblem {
        MayerProblem::builder(1, 1, 1.0)
            .initial_state(vec1(a0))
            .dynamics(|_t, _q, u| u.clone())
            .terminal_cost(cost)
            .control_set(ControlSet::Box(AxisBox::interval(-1.0, 1.0).unwrap()))
            .build()
            .unwrap()
    }

    fn bilinear_problem(a0: f64) -> MayerProblem {
        MayerProblem::builder(1, 1, 1.0)
            .initial_state(vec1(a0))
            .dynamics(|_t, q, u| vec1(q[0] * u[0]))
            .terminal_cost(|_t, q| q[0])
            .control_set(ControlSet::Box(AxisBox::interval(-1.0, 1.0).unwrap()))
            .build()
            .unwrap()
    }

    fn default_grid() -> TimeGrid {
        TimeGrid::uniform(1.0, DEFAULT_TIME_STEPS).unwrap()
    }

    #[test]
    fn forward_state_linear_integrals() {
        let p = integrator_problem(0.0, |_t, q| q[0]);
        let grid = default_grid();

        let q = forward_state(&p, &ControlSignal::constant(grid.clone(), vec1(-1.0))).unwrap();
        assert!((q.last()[0] + 1.0).abs() < 1e-12);

        let ramp = ControlSignal::from_fn(grid.clone(), Interpolation::PiecewiseLinear, |t| {
            vec1(t)
        })
        .unwrap();
        let q = forward_state(&p, &ramp).unwrap();
        assert!((q.last()[0] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn forward_state_double_integrator() {
        let p = MayerProblem::builder(2, 1, 1.0)
            .initial_state(DVector::from_vec(vec![0.0, 0.0]))
            .dynamics(|_t, q, u| DVector::from_vec(vec![q[1], u[0]]))
            .terminal_cost(|_t, q| q[0])
            .control_set(ControlSet::Box(AxisBox::interval(-1.0, 1.0).unwrap()))
            .build()
            .unwrap();
        let q = forward_state(&p, &ControlSignal::constant(default_grid(), vec1(1.0))).unwrap();
        assert!((q.last()[0] - 0.5).abs() < 1e-12);
        assert!((q.last()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_costate_when_dynamics_ignore_state() {
        let grid = default_grid();

        // C = q: p = -1 throughout.
        let p1 = integrator_problem(0.0, |_t, q| q[0]);
        let u = ControlSignal::constant(grid.clone(), vec1(-1.0));
        let q = forward_state(&p1, &u).unwrap();
        let co = backward_costate(&p1, &u, &q).unwrap();
        assert!(co.values().iter().all(|p| (p[0] + 1.0).abs() < 1e-12));

        // C = q^2/2 with q(T) = 2: p = -2 throughout.
        let p2 = integrator_problem(3.0, |_t, q| 0.5 * q[0] * q[0]);
        let q = forward_state(&p2, &u).unwrap();
        assert!((q.last()[0] - 2.0).abs() < 1e-12);
        let co = backward_costate(&p2, &u, &q).unwrap();
        assert!(co.values().iter().all(|p| (p[0] + 2.0).abs() < 1e-10));
    }

    #[test]
    fn bilinear_costate_matches_closed_form() {
        // q' = q u with u = 1, C = q: p' = -p, p(1) = -1, so p(t) = -e^(1-t).
        let p = bilinear_problem(1.0);
        let grid = default_grid();
        let u = ControlSignal::constant(grid.clone(), vec1(1.0));
        let q = forward_state(&p, &u).unwrap();
        let co = backward_costate(&p, &u, &q).unwrap();
        for (i, &t) in grid.nodes().iter().enumerate() {
            let exact = -(1.0 - t).exp();
            assert!(
                (co.value(i)[0] - exact).abs() < 1e-8,
                "p({t}) = {} vs {exact}",
                co.value(i)[0]
            );
        }
    }

    #[test]
    fn p_optimal_initial_costates() {
        let grid = default_grid();
        let u_minus = ControlSignal::constant(grid.clone(), vec1(-1.0));

        let p1 = integrator_problem(0.0, |_t, q| q[0]);
        let lift = lift_p_optimal(&p1, &u_minus).unwrap();
        assert!((lift.source().b[0] + 1.0).abs() < 1e-12);

        // q(1) = 0 forces p identically zero.
        let p2 = integrator_problem(1.0, |_t, q| 0.5 * q[0] * q[0]);
        let lift = lift_p_optimal(&p2, &u_minus).unwrap();
        assert!(lift.q().last()[0].abs() < 1e-12);
        assert!(lift.source().b[0].abs() < 1e-10);

        let p3 = bilinear_problem(1.0);
        let u_plus = ControlSignal::constant(grid, vec1(1.0));
        let lift = lift_p_optimal(&p3, &u_plus).unwrap();
        assert!((lift.source().b[0] + std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn p_optimal_terminal_condition_is_imposed_exactly() {
        let p = bilinear_problem(1.0);
        let u = ControlSignal::constant(default_grid(), vec1(0.3));
        let lift = lift_p_optimal(&p, &u).unwrap();
        assert!(lift.terminal_costate_residual(&p) <= 1e-10);
    }

    #[test]
    fn forward_and_backward_resolutions_agree() {
        let p = bilinear_problem(1.0);
        let u = ControlSignal::constant(default_grid(), vec1(0.7));
        let back = lift_p_optimal(&p, &u).unwrap();
        let fwd = lift_with_initial_costate(&p, &u, &back.source().b).unwrap();
        for i in 0..back.grid().len() {
            assert!((back.q().value(i) - fwd.q().value(i)).amax() < 1e-8);
            assert!((back.p().value(i) - fwd.p().value(i)).amax() < 1e-8);
        }
    }

    #[test]
    fn fixed_costate_lift_carries_b_verbatim() {
        let p = integrator_problem(0.0, |_t, q| q[0]);
        let u = ControlSignal::constant(default_grid(), vec1(-1.0));

        let zero = lift_with_initial_costate(&p, &u, &vec1(0.0)).unwrap();
        assert!(zero.p().values().iter().all(|v| v[0] == 0.0));

        let five = lift_with_initial_costate(&p, &u, &vec1(5.0)).unwrap();
        assert!(five.p().values().iter().all(|v| v[0] == 5.0));
        assert!((five.terminal_costate_residual(&p) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn state_is_independent_of_costate_choice() {
        let p = bilinear_problem(1.0);
        let u = ControlSignal::constant(default_grid(), vec1(0.5));
        let plain = forward_state(&p, &u).unwrap();
        let with_b1 = lift_with_initial_costate(&p, &u, &vec1(0.0)).unwrap();
        let with_b2 = lift_with_initial_costate(&p, &u, &vec1(17.5)).unwrap();
        for i in 0..plain.len() {
            // bitwise: q never reads p anywhere in the pipeline
            assert_eq!(plain.value(i)[0].to_bits(), with_b1.q().value(i)[0].to_bits());
            assert_eq!(plain.value(i)[0].to_bits(), with_b2.q().value(i)[0].to_bits());
        }
        let c1 = terminal_cost_value(&p, with_b1.q());
        let c2 = terminal_cost_value(&p, with_b2.q());
        assert_eq!(c1.to_bits(), c2.to_bits());
    }

    #[test]
    fn terminal_cost_values() {
        let p = integrator_problem(0.0, |_t, q| q[0]);
        let u = ControlSignal::constant(default_grid(), vec1(-1.0));
        let q = forward_state(&p, &u).unwrap();
        assert!((terminal_cost_value(&p, &q) + 1.0).abs() < 1e-12);

        let p2 = integrator_problem(1.0, |_t, q| 0.5 * q[0] * q[0]);
        let q = forward_state(&p2, &u).unwrap();
        assert!(terminal_cost_value(&p2, &q).abs() < 1e-12);
    }

    #[test]
    fn line_integral_reproduces_terminal_cost() {
        let p = integrator_problem(0.0, |_t, q| q[0]);
        let u = ControlSignal::constant(default_grid(), vec1(-1.0));
        let lift = lift_p_optimal(&p, &u).unwrap();
        let line = cost_line_integral(&p, &lift);
        let terminal = terminal_cost_value(&p, lift.q());
        assert!((line + 1.0).abs() < 1e-6);
        assert!((line - terminal).abs() < 1e-5);
    }

    #[test]
    fn line_integral_of_zero_cost_problem_vanishes() {
        let p = integrator_problem(0.0, |_t, _q| 0.0);
        let u = ControlSignal::constant(default_grid(), vec1(0.3));
        let lift = lift_p_optimal(&p, &u).unwrap();
        assert!(cost_line_integral(&p, &lift).abs() < 1e-10);
    }

    #[test]
    fn corrupted_state_samples_break_the_identity() {
        let p = integrator_problem(0.0, |_t, q| q[0]);
        let u = ControlSignal::constant(default_grid(), vec1(-1.0));
        let mut lift = lift_p_optimal(&p, &u).unwrap();

        // negative control: bend the state samples off the solution
        let grid = lift.grid().clone();
        let bent: Vec<_> = lift
            .q
            .values()
            .iter()
            .zip(grid.nodes())
            .map(|(q, &t)| vec1(q[0] + 0.1 * (std::f64::consts::PI * t).sin()))
            .collect();
        lift.q = SampledPath::new(grid, bent).unwrap();

        let line = cost_line_integral(&p, &lift);
        let terminal = terminal_cost_value(&p, lift.q());
        assert!((line - terminal).abs() > 1e-3);
    }

    #[test]
    fn momentum_form_annihilates_solution_tangents() {
        // (p dq - H dt) evaluated on discrete tangents of a solution curve
        let p = bilinear_problem(1.0);
        let grid = default_grid();
        let u = ControlSignal::from_fn(grid.clone(), Interpolation::PiecewiseLinear, |t| {
            vec1(0.5 - 0.4 * (2.0 * t).sin())
        })
        .unwrap();
        let lift = lift_p_optimal(&p, &u).unwrap();
        let nodes = grid.nodes();
        let mut worst: f64 = 0.0;
        for i in 0..nodes.len() {
            let dq = state_tangent(lift.q(), nodes, i);
            let uu = u.value_at(nodes[i]);
            let h = eval_hamiltonian(&p, nodes[i], lift.q().value(i), lift.p().value(i), &uu);
            worst = worst.max((lift.p().value(i).dot(&dq) - h).abs());
        }
        assert!(worst <= 1e-4, "worst |p.dq/dt - H| = {worst}");
    }

    #[test]
    fn reintegration_residual_is_zero_for_forward_lifts() {
        let p = bilinear_problem(1.0);
        let u = ControlSignal::constant(default_grid(), vec1(0.9));
        let lift = lift_p_optimal(&p, &u).unwrap();
        assert!(lift.max_state_step_residual(&p).unwrap() <= 1e-14);
    }

    #[test]
    fn cost_form_is_linear_in_the_tangent() {
        let p = bilinear_problem(1.0);
        let form = CostForm::new(&p);
        let (q, pp, u) = (vec1(1.3), vec1(-0.4), vec1(0.2));
        let (dq1, dq2) = (vec1(0.7), vec1(-1.1));
        let dp = vec1(0.0);
        let a = form.eval(0.5, &q, &pp, &u, 2.0, &dq1, &dp);
        let b = form.eval(0.5, &q, &pp, &u, -1.0, &dq2, &dp);
        let combined = form.eval(0.5, &q, &pp, &u, 2.0 * 3.0 + -1.0 * -2.0, &(dq1.scale(3.0) + dq2.scale(-2.0)), &dp);
        assert!((combined - (3.0 * a - 2.0 * b)).abs() < 1e-10);
    }
}
