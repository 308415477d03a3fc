//! Mayer problem data: dynamics, terminal cost, control sets and signals.
//!
//! A problem instance bundles the five ingredients of a terminal-cost
//! control problem: the horizon `[0, T]`, the dynamics `F(t, q, u)` with the
//! fixed initial state, the terminal cost `C(t, q)` (required to vanish at
//! `t = 0`), the control value set `K`, and an enclosing axis-aligned box
//! `U_K ⊇ K` on which `F` stays defined. Homotopies of controls are allowed
//! to roam over the convex box while their endpoints remain in `K`, which is
//! what lets disconnected or finite `K` work at all.
//!
//! Missing analytic derivatives fall back to central differences with step
//! `1e-6 * (1 + |x|)`, so quick problem entry only needs `F` and `C`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::TimeGrid;

pub type DynamicsFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type CostGradientFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type CostRateFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type MembershipFn = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

const FD_STEP_SCALE: f64 = 1e-6;
const DERIVATIVE_MATCH_TOL: f64 = 1e-5;

fn fd_step(x: f64) -> f64 {
    FD_STEP_SCALE * (1.0 + x.abs())
}

/// Axis-aligned box in control space.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl AxisBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds of dimension {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for i in 0..lo.len() {
            if !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "box bounds must be finite with lo <= hi, got [{}, {}] in axis {}",
                    lo[i], hi[i], i
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Scalar interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_vec(vec![lo]), DVector::from_vec(vec![hi]))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        self.contains_with_tol(v, 0.0)
    }

    /// Membership with a per-axis slack, used where interpolation rounding
    /// may push a convex combination an ulp past the bound.
    pub fn contains_with_tol(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.len() == self.dim()
            && (0..self.dim()).all(|i| v[i] >= self.lo[i] - tol && v[i] <= self.hi[i] + tol)
    }

    /// Box widened by `fraction` of its width (half on each side).
    pub fn inflated(&self, fraction: f64) -> AxisBox {
        let half = (&self.hi - &self.lo).scale(0.5 * fraction);
        AxisBox {
            lo: &self.lo - &half,
            hi: &self.hi + &half,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            if self.lo[i] == self.hi[i] {
                self.lo[i]
            } else {
                rng.random_range(self.lo[i]..=self.hi[i])
            }
        })
    }

    /// Tensor mesh with `per_dim` points per axis, endpoints included.
    pub fn grid_points(&self, per_dim: usize) -> Vec<DVector<f64>> {
        let per_dim = per_dim.max(2);
        let m = self.dim();
        let mut points = Vec::with_capacity(per_dim.pow(m as u32));
        let mut idx = vec![0usize; m];
        loop {
            points.push(DVector::from_fn(m, |i, _| {
                self.lo[i] + (self.hi[i] - self.lo[i]) * (idx[i] as f64) / ((per_dim - 1) as f64)
            }));
            let mut axis = 0;
            loop {
                if axis == m {
                    return points;
                }
                idx[axis] += 1;
                if idx[axis] < per_dim {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
}

/// The set `K` of admissible control values.
#[derive(Clone)]
pub enum ControlSet {
    /// Full axis-aligned box.
    Box(AxisBox),
    /// Finite (possibly disconnected) point set.
    Finite(Vec<DVector<f64>>),
    /// Arbitrary membership predicate with a declared bounding box.
    Predicate { inside: MembershipFn, bound: AxisBox },
}

impl fmt::Debug for ControlSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSet::Box(b) => f.debug_tuple("Box").field(b).finish(),
            ControlSet::Finite(pts) => f.debug_tuple("Finite").field(&pts.len()).finish(),
            ControlSet::Predicate { bound, .. } => {
                f.debug_struct("Predicate").field("bound", bound).finish()
            }
        }
    }
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box(b) => b.dim(),
            ControlSet::Finite(pts) => pts[0].len(),
            ControlSet::Predicate { bound, .. } => bound.dim(),
        }
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        match self {
            ControlSet::Box(b) => b.contains(u),
            ControlSet::Finite(pts) => pts.iter().any(|p| p == u),
            ControlSet::Predicate { inside, bound } => bound.contains(u) && inside(u),
        }
    }

    /// Smallest axis-aligned box containing the set.
    pub fn bounding_box(&self) -> AxisBox {
        match self {
            ControlSet::Box(b) => b.clone(),
            ControlSet::Finite(pts) => {
                let m = pts[0].len();
                let lo = DVector::from_fn(m, |i, _| {
                    pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min)
                });
                let hi = DVector::from_fn(m, |i, _| {
                    pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max)
                });
                AxisBox { lo, hi }
            }
            ControlSet::Predicate { bound, .. } => bound.clone(),
        }
    }

    /// Draw one point of `K`. Predicate sets use rejection sampling inside
    /// the bound and fall back to the box centre after 1000 misses.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            ControlSet::Box(b) => b.sample(rng),
            ControlSet::Finite(pts) => pts[rng.random_range(0..pts.len())].clone(),
            ControlSet::Predicate { inside, bound } => {
                for _ in 0..1000 {
                    let u = bound.sample(rng);
                    if inside(&u) {
                        return u;
                    }
                }
                (bound.lo() + bound.hi()).scale(0.5)
            }
        }
    }

    /// Deterministic scan points for certificate sweeps: finite sets are
    /// exhausted, boxes get a `per_dim`-per-axis mesh, predicates filter
    /// the mesh over their bound.
    pub fn scan_points(&self, per_dim: usize) -> Vec<DVector<f64>> {
        match self {
            ControlSet::Box(b) => b.grid_points(per_dim),
            ControlSet::Finite(pts) => pts.clone(),
            ControlSet::Predicate { inside, bound } => bound
                .grid_points(per_dim)
                .into_iter()
                .filter(|u| inside(u))
                .collect(),
        }
    }
}

/// How sampled control values extend to all of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Linear between nodes; keeps values inside any convex box the samples
    /// live in.
    PiecewiseLinear,
    /// Left-constant on `[t_i, t_{i+1})`; carries piecewise-regular controls
    /// such as needles and bang-bang segments.
    PiecewiseConstantLeft,
}

/// A control curve sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: TimeGrid,
    samples: Vec<DVector<f64>>,
    interpolation: Interpolation,
}

impl ControlSignal {
    pub fn new(
        grid: TimeGrid,
        samples: Vec<DVector<f64>>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidSignal(format!(
                "{} samples for {} grid nodes",
                samples.len(),
                grid.len()
            )));
        }
        let dim = samples[0].len();
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::InvalidSignal(
                    "samples must all share one dimension".into(),
                ));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSignal(format!(
                    "non-finite sample at t = {}",
                    grid.nodes()[i]
                )));
            }
        }
        Ok(Self {
            grid,
            samples,
            interpolation,
        })
    }

    /// Constant control on the given grid (piecewise-linear mode).
    pub fn constant(grid: TimeGrid, value: DVector<f64>) -> Self {
        let samples = vec![value; grid.len()];
        Self {
            grid,
            samples,
            interpolation: Interpolation::PiecewiseLinear,
        }
    }

    /// Sample a function of time on the grid.
    pub fn from_fn(
        grid: TimeGrid,
        interpolation: Interpolation,
        f: impl Fn(f64) -> DVector<f64>,
    ) -> Result<Self> {
        let samples = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::new(grid, samples, interpolation)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Control value at an arbitrary time (clamped to `[0, T]`).
    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        if t <= nodes[0] {
            return self.samples[0].clone();
        }
        if t >= nodes[n - 1] {
            return self.samples[n - 1].clone();
        }
        let i = self.grid.floor_index(t);
        match self.interpolation {
            Interpolation::PiecewiseConstantLeft => self.samples[i].clone(),
            Interpolation::PiecewiseLinear => {
                if i >= n - 1 {
                    return self.samples[n - 1].clone();
                }
                let theta = (t - nodes[i]) / (nodes[i + 1] - nodes[i]);
                self.samples[i].scale(1.0 - theta) + self.samples[i + 1].scale(theta)
            }
        }
    }

    /// Re-sample onto another grid with the same horizon. Exact when the new
    /// grid contains the old nodes.
    pub fn resample(&self, grid: &TimeGrid) -> Result<ControlSignal> {
        if grid.horizon() != self.grid.horizon() {
            return Err(Error::InvalidSignal(format!(
                "cannot resample from horizon {} onto horizon {}",
                self.grid.horizon(),
                grid.horizon()
            )));
        }
        let samples = grid.nodes().iter().map(|&t| self.value_at(t)).collect();
        ControlSignal::new(grid.clone(), samples, self.interpolation)
    }
}

/// A control curve plus the initial data `(a, b)` for the state/costate pair.
#[derive(Debug, Clone)]
pub struct ControlPair {
    pub signal: ControlSignal,
    /// Initial state `q(0)`.
    pub a: DVector<f64>,
    /// Initial costate `p(0)`.
    pub b: DVector<f64>,
}

impl ControlPair {
    /// Whether the pair lies in the restricted class with the problem's
    /// fixed initial state (membership in the costate-terminal-condition
    /// subclass is a property of the lifted curve, see
    /// [`crate::lift::LiftedCurve::terminal_costate_residual`]).
    pub fn has_fixed_initial_state(&self, problem: &MayerProblem) -> bool {
        self.a == *problem.initial_state()
    }
}

/// A Mayer problem: minimize `C(T, q(T))` over controls `u: [0,T] -> K`
/// subject to `q' = F(t, q, u)`, `q(0) = a0`.
#[derive(Clone)]
pub struct MayerProblem {
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    initial_state: DVector<f64>,
    dynamics: DynamicsFn,
    dynamics_dq: Option<JacobianFn>,
    dynamics_du: Option<JacobianFn>,
    terminal_cost: TerminalCostFn,
    terminal_cost_dq: Option<CostGradientFn>,
    terminal_cost_dt: Option<CostRateFn>,
    control_set: ControlSet,
    enclosing_convex: AxisBox,
}

impl fmt::Debug for MayerProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MayerProblem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("control_set", &self.control_set)
            .field("enclosing_convex", &self.enclosing_convex)
            .finish()
    }
}

impl MayerProblem {
    pub fn builder(state_dim: usize, control_dim: usize, horizon: f64) -> MayerProblemBuilder {
        MayerProblemBuilder::new(state_dim, control_dim, horizon)
    }

    /// Linear-affine problem `q' = A q + B u` with ramped polynomial cost
    /// `C(t, q) = (t/T) (c0 + c·q + q'Qq/2)`; the ramp makes `C(0, ·) = 0`
    /// hold by construction. All derivatives are analytic.
    pub fn linear_affine(
        a_mat: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        cost_constant: f64,
        cost_linear: DVector<f64>,
        cost_quadratic: Option<DMatrix<f64>>,
        horizon: f64,
        initial_state: DVector<f64>,
        control_set: ControlSet,
    ) -> Result<MayerProblem> {
        let n = a_mat.nrows();
        let m = b_mat.ncols();
        if a_mat.ncols() != n || b_mat.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be {n}x{n} and B {n}x{m}, got {}x{} and {}x{}",
                a_mat.nrows(),
                a_mat.ncols(),
                b_mat.nrows(),
                b_mat.ncols()
            )));
        }
        if cost_linear.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cost gradient of dimension {} for state dimension {n}",
                cost_linear.len()
            )));
        }
        let q_mat = match cost_quadratic {
            Some(q) => {
                if q.nrows() != n || q.ncols() != n {
                    return Err(Error::DimensionMismatch(
                        "quadratic cost matrix must be N x N".into(),
                    ));
                }
                // symmetrize so the gradient formula is exact
                (q.transpose() + q).scale(0.5)
            }
            None => DMatrix::zeros(n, n),
        };

        let poly = {
            let c = cost_linear.clone();
            let q_mat = q_mat.clone();
            move |q: &DVector<f64>| cost_constant + c.dot(q) + 0.5 * (&q_mat * q).dot(q)
        };
        let poly_grad = {
            let c = cost_linear.clone();
            let q_mat = q_mat.clone();
            move |q: &DVector<f64>| &c + &q_mat * q
        };

        let a1 = a_mat.clone();
        let b1 = b_mat.clone();
        let poly_c = poly.clone();
        MayerProblemBuilder::new(n, m, horizon)
            .initial_state(initial_state)
            .dynamics(move |_t, q, u| &a1 * q + &b1 * u)
            .dynamics_dq(move |_t, _q, _u| a_mat.clone())
            .dynamics_du(move |_t, _q, _u| b_mat.clone())
            .terminal_cost(move |t, q| (t / horizon) * poly(q))
            .terminal_cost_dq(move |t, q| poly_grad(q).scale(t / horizon))
            .terminal_cost_dt(move |_t, q| poly_c(q) / horizon)
            .control_set(control_set)
            .build()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.initial_state
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn enclosing_convex(&self) -> &AxisBox {
        &self.enclosing_convex
    }

    pub fn dynamics(&self, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics)(t, q, u)
    }

    /// `∂F/∂q`, analytic if supplied, otherwise central differences.
    pub fn dynamics_dq(&self, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.dynamics_dq {
            return j(t, q, u);
        }
        let mut out = DMatrix::zeros(self.state_dim, self.state_dim);
        for col in 0..self.state_dim {
            let h = fd_step(q[col]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[col] += h;
            qm[col] -= h;
            let diff = ((self.dynamics)(t, &qp, u) - (self.dynamics)(t, &qm, u)).scale(0.5 / h);
            out.set_column(col, &diff);
        }
        out
    }

    /// `∂F/∂u`, analytic if supplied, otherwise central differences.
    pub fn dynamics_du(&self, t: f64, q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.dynamics_du {
            return j(t, q, u);
        }
        let mut out = DMatrix::zeros(self.state_dim, self.control_dim);
        for col in 0..self.control_dim {
            let h = fd_step(u[col]);
            let mut up = u.clone();
            let mut um = u.clone();
            up[col] += h;
            um[col] -= h;
            let diff = ((self.dynamics)(t, q, &up) - (self.dynamics)(t, q, &um)).scale(0.5 / h);
            out.set_column(col, &diff);
        }
        out
    }

    pub fn terminal_cost(&self, t: f64, q: &DVector<f64>) -> f64 {
        (self.terminal_cost)(t, q)
    }

    /// `∂C/∂q`, analytic if supplied, otherwise central differences.
    pub fn terminal_cost_dq(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.terminal_cost_dq {
            return g(t, q);
        }
        DVector::from_fn(self.state_dim, |i, _| {
            let h = fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            ((self.terminal_cost)(t, &qp) - (self.terminal_cost)(t, &qm)) * 0.5 / h
        })
    }

    /// `∂C/∂t`, analytic if supplied, otherwise central differences.
    pub fn terminal_cost_dt(&self, t: f64, q: &DVector<f64>) -> f64 {
        if let Some(g) = &self.terminal_cost_dt {
            return g(t, q);
        }
        let h = fd_step(t);
        ((self.terminal_cost)(t + h, q) - (self.terminal_cost)(t - h, q)) * 0.5 / h
    }

    /// Check that a signal is usable with this problem: same horizon, right
    /// control dimension, samples inside the enclosing box.
    pub fn check_signal(&self, signal: &ControlSignal) -> Result<()> {
        if signal.grid().horizon() != self.horizon {
            return Err(Error::InvalidSignal(format!(
                "signal horizon {} does not match problem horizon {}",
                signal.grid().horizon(),
                self.horizon
            )));
        }
        if signal.dim() != self.control_dim {
            return Err(Error::DimensionMismatch(format!(
                "control dimension {} for problem with control dimension {}",
                signal.dim(),
                self.control_dim
            )));
        }
        let tol = 1e-9;
        for (i, s) in signal.samples().iter().enumerate() {
            if !self.enclosing_convex.contains_with_tol(s, tol) {
                return Err(Error::InvalidSignal(format!(
                    "sample at t = {} leaves the enclosing control box",
                    signal.grid().nodes()[i]
                )));
            }
        }
        Ok(())
    }
}

/// Builder for [`MayerProblem`]. `dynamics`, `terminal_cost` and
/// `control_set` are mandatory; derivative callbacks are optional.
pub struct MayerProblemBuilder {
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    initial_state: Option<DVector<f64>>,
    dynamics: Option<DynamicsFn>,
    dynamics_dq: Option<JacobianFn>,
    dynamics_du: Option<JacobianFn>,
    terminal_cost: Option<TerminalCostFn>,
    terminal_cost_dq: Option<CostGradientFn>,
    terminal_cost_dt: Option<CostRateFn>,
    control_set: Option<ControlSet>,
    enclosing_convex: Option<AxisBox>,
}

impl MayerProblemBuilder {
    pub fn new(state_dim: usize, control_dim: usize, horizon: f64) -> Self {
        Self {
            state_dim,
            control_dim,
            horizon,
            initial_state: None,
            dynamics: None,
            dynamics_dq: None,
            dynamics_du: None,
            terminal_cost: None,
            terminal_cost_dq: None,
            terminal_cost_dt: None,
            control_set: None,
            enclosing_convex: None,
        }
    }

    pub fn initial_state(mut self, a0: DVector<f64>) -> Self {
        self.initial_state = Some(a0);
        self
    }

    pub fn dynamics(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dynamics = Some(Arc::new(f));
        self
    }

    pub fn dynamics_dq(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dynamics_dq = Some(Arc::new(f));
        self
    }

    pub fn dynamics_du(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dynamics_du = Some(Arc::new(f));
        self
    }

    pub fn terminal_cost(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal_cost = Some(Arc::new(f));
        self
    }

    pub fn terminal_cost_dq(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_cost_dq = Some(Arc::new(f));
        self
    }

    pub fn terminal_cost_dt(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal_cost_dt = Some(Arc::new(f));
        self
    }

    pub fn control_set(mut self, set: ControlSet) -> Self {
        self.control_set = Some(set);
        self
    }

    /// Override the enclosing convex box (default: bounding box of `K`
    /// inflated by 10%).
    pub fn enclosing_convex(mut self, b: AxisBox) -> Self {
        self.enclosing_convex = Some(b);
        self
    }

    pub fn build(self) -> Result<MayerProblem> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "horizon must be finite and positive, got {}",
                self.horizon
            )));
        }
        if self.state_dim == 0 || self.control_dim == 0 {
            return Err(Error::InvalidProblem(
                "state and control dimensions must be positive".into(),
            ));
        }
        let dynamics = self
            .dynamics
            .ok_or_else(|| Error::InvalidProblem("dynamics missing".into()))?;
        let terminal_cost = self
            .terminal_cost
            .ok_or_else(|| Error::InvalidProblem("terminal cost missing".into()))?;
        let control_set = self
            .control_set
            .ok_or_else(|| Error::InvalidProblem("control set missing".into()))?;
        if control_set.dim() != self.control_dim {
            return Err(Error::DimensionMismatch(format!(
                "control set of dimension {} for control dimension {}",
                control_set.dim(),
                self.control_dim
            )));
        }
        let initial_state = self
            .initial_state
            .ok_or_else(|| Error::InvalidProblem("initial state missing".into()))?;
        if initial_state.len() != self.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "initial state of dimension {} for state dimension {}",
                initial_state.len(),
                self.state_dim
            )));
        }
        let enclosing_convex = self
            .enclosing_convex
            .unwrap_or_else(|| control_set.bounding_box().inflated(0.1));
        if enclosing_convex.dim() != self.control_dim {
            return Err(Error::DimensionMismatch(
                "enclosing box dimension does not match control dimension".into(),
            ));
        }
        Ok(MayerProblem {
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            horizon: self.horizon,
            initial_state,
            dynamics,
            dynamics_dq: self.dynamics_dq,
            dynamics_du: self.dynamics_du,
            terminal_cost,
            terminal_cost_dq: self.terminal_cost_dq,
            terminal_cost_dt: self.terminal_cost_dt,
            control_set,
            enclosing_convex,
        })
    }
}

/// The control Hamiltonian `H(t, q, p, u) = p · F(t, q, u)`.
///
/// A non-finite dynamics output propagates as NaN and is rejected by the
/// downstream integration and quadrature guards.
pub fn eval_hamiltonian(
    problem: &MayerProblem,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    p.dot(&problem.dynamics(t, q, u))
}

/// Gradient of the Hamiltonian in the control: `p' (∂F/∂u)`. Falls back to
/// central differences of [`eval_hamiltonian`] when `∂F/∂u` is not supplied.
pub fn eval_hamiltonian_du(
    problem: &MayerProblem,
    t: f64,
    q: &DVector<f64>,
    p: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    problem.dynamics_du(t, q, u).transpose() * p
}

/// One failed validation check, with a human-readable detail line.
#[derive(Debug, Clone)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.check, self.detail)
    }
}

/// Check the problem's structural invariants on a seeded random probe set.
///
/// Probes 120 points of `[0, T] x (state box around a0) x K` and verifies:
/// the terminal cost vanishes at `t = 0`, control samples stay inside the
/// enclosing box, the dynamics are finite, and any supplied analytic
/// derivatives match central differences to 1e-5 relative. Returns an empty
/// list iff everything passes; one entry per failed check kind.
pub fn validate_problem(problem: &MayerProblem) -> Vec<Violation> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_7965_72);
    let probes = 120;
    let n = problem.state_dim();
    let a0 = problem.initial_state();

    struct Tally {
        check: &'static str,
        first_detail: Option<String>,
        failures: usize,
    }
    impl Tally {
        fn new(check: &'static str) -> Self {
            Self {
                check,
                first_detail: None,
                failures: 0,
            }
        }
        fn fail(&mut self, detail: impl FnOnce() -> String) {
            if self.first_detail.is_none() {
                self.first_detail = Some(detail());
            }
            self.failures += 1;
        }
    }

    let mut cost_at_zero = Tally::new("terminal cost must vanish at t = 0");
    let mut sample_in_box = Tally::new("control samples must lie in the enclosing convex box");
    let mut dynamics_finite = Tally::new("dynamics must be finite");
    let mut dq_match = Tally::new("analytic state Jacobian must match central differences");
    let mut du_match = Tally::new("analytic control Jacobian must match central differences");
    let mut cq_match = Tally::new("analytic cost gradient must match central differences");
    let mut ct_match = Tally::new("analytic cost time-derivative must match central differences");

    let rel_close = |a: f64, b: f64| (a - b).abs() <= DERIVATIVE_MATCH_TOL * (1.0 + b.abs());

    for _ in 0..probes {
        let t = rng.random_range(0.0..=problem.horizon());
        let q = DVector::from_fn(n, |i, _| {
            let scale = 2.0 * (1.0 + a0[i].abs());
            a0[i] + rng.random_range(-scale..=scale)
        });
        let u = problem.control_set().sample(&mut rng);

        let c0 = problem.terminal_cost(0.0, &q);
        if c0.abs() > 1e-9 {
            cost_at_zero.fail(|| format!("C(0, q) = {c0} at q = {q:?}"));
        }

        if !problem.enclosing_convex().contains_with_tol(&u, 1e-12) {
            sample_in_box.fail(|| format!("sampled control {u:?} escapes the box"));
        }

        let f = problem.dynamics(t, &q, &u);
        if f.iter().any(|x| !x.is_finite()) {
            dynamics_finite.fail(|| format!("F(t={t}, q={q:?}, u={u:?}) = {f:?}"));
            continue; // derivative probes would only cascade
        }

        if problem.dynamics_dq.is_some() {
            let analytic = problem.dynamics_dq(t, &q, &u);
            let fd = fd_dynamics_dq(problem, t, &q, &u);
            if analytic.iter().zip(fd.iter()).any(|(a, b)| !rel_close(*a, *b)) {
                dq_match.fail(|| format!("at t = {t}: analytic {analytic} vs differences {fd}"));
            }
        }
        if problem.dynamics_du.is_some() {
            let analytic = problem.dynamics_du(t, &q, &u);
            let fd = fd_dynamics_du(problem, t, &q, &u);
            if analytic.iter().zip(fd.iter()).any(|(a, b)| !rel_close(*a, *b)) {
                du_match.fail(|| format!("at t = {t}: analytic {analytic} vs differences {fd}"));
            }
        }
        if problem.terminal_cost_dq.is_some() {
            let analytic = problem.terminal_cost_dq(t, &q);
            let fd = fd_cost_dq(problem, t, &q);
            if analytic.iter().zip(fd.iter()).any(|(a, b)| !rel_close(*a, *b)) {
                cq_match.fail(|| format!("at t = {t}: analytic {analytic} vs differences {fd}"));
            }
        }
        if problem.terminal_cost_dt.is_some() {
            let analytic = problem.terminal_cost_dt(t, &q);
            let fd = fd_cost_dt(problem, t, &q);
            if !rel_close(analytic, fd) {
                ct_match.fail(|| format!("at t = {t}: analytic {analytic} vs differences {fd}"));
            }
        }
    }

    [
        cost_at_zero,
        sample_in_box,
        dynamics_finite,
        dq_match,
        du_match,
        cq_match,
        ct_match,
    ]
    .into_iter()
    .filter(|t| t.failures > 0)
    .map(|t| Violation {
        check: t.check.to_string(),
        detail: format!(
            "{} ({} of {probes} probes failed)",
            t.first_detail.unwrap_or_default(),
            t.failures
        ),
    })
    .collect()
}

fn fd_dynamics_dq(
    problem: &MayerProblem,
    t: f64,
    q: &DVector<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let n = problem.state_dim();
    let mut out = DMatrix::zeros(n, n);
    for col in 0..n {
        let h = fd_step(q[col]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[col] += h;
        qm[col] -= h;
        let diff = (problem.dynamics(t, &qp, u) - problem.dynamics(t, &qm, u)).scale(0.5 / h);
        out.set_column(col, &diff);
    }
    out
}

fn fd_dynamics_du(
    problem: &MayerProblem,
    t: f64,
    q: &DVector<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let mut out = DMatrix::zeros(n, m);
    for col in 0..m {
        let h = fd_step(u[col]);
        let mut up = u.clone();
        let mut um = u.clone();
        up[col] += h;
        um[col] -= h;
        let diff = (problem.dynamics(t, q, &up) - problem.dynamics(t, q, &um)).scale(0.5 / h);
        out.set_column(col, &diff);
    }
    out
}

fn fd_cost_dq(problem: &MayerProblem, t: f64, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(problem.state_dim(), |i, _| {
        let h = fd_step(q[i]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        (problem.terminal_cost(t, &qp) - problem.terminal_cost(t, &qm)) * 0.5 / h
    })
}

fn fd_cost_dt(problem: &MayerProblem, t: f64, q: &DVector<f64>) -> f64 {
    let h = fd_step(t);
    (problem.terminal_cost(t + h, q) - problem.terminal_cost(t - h, q)) * 0.5 / h
}
