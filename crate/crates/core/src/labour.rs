//! Labour integrals over control homotopies.
//!
//! A two-parameter control family `u(t, s)` on `[0,T] x [0,1]` lifts, slice
//! by slice, to a surface of solution curves in the extended space. Applying
//! the Stokes theorem to the cost one-form on that surface turns the cost
//! difference between the two boundary slices into checkable integrals:
//!
//! ```text
//! delta_I  =  C  +  W
//!
//! C (endpoint labour)  = int_0^1 (p(T,s) + dC/dq(T, q(T,s))) . dq/ds(T,s) ds
//! W (surface labour)   = - int int  dH/du . du/ds  dt ds
//! ```
//!
//! The `t = 0` boundary drops out because every lift starts at the same
//! initial state. When each slice is lifted with the costate pinned by the
//! terminal condition ("p-optimal" mode), the endpoint integrand vanishes
//! identically and the cost difference is the surface labour alone — that is
//! the quantity whose sign characterizes optimality, and the reason the
//! whole construction is useful.
//!
//! The rescaled family `u(t, lambda * s)` gives the labour as a function of
//! how far along the homotopy one travels; its value at `lambda = 0` is zero
//! by construction and its one-sided derivative there is a first-order
//! optimality probe.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lift::{
    cost_line_integral, lift_p_optimal, lift_with_initial_costate, CostForm, LiftedCurve,
};
use crate::numerics::{self, quad_2d, TimeGrid};
use crate::problem::{
    eval_hamiltonian_du, ControlSignal, Interpolation, MayerProblem, Violation,
};

/// Strictly increasing homotopy-parameter nodes `0 = s_0 < ... < s_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SGrid {
    nodes: Vec<f64>,
}

impl SGrid {
    pub fn uniform(steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::InvalidGrid("need at least 1 s-step".into()));
        }
        let nodes = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 s-nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid(
                "s-grid endpoints must be exactly 0 and 1".into(),
            ));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(
                    "s-nodes must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A sampled two-parameter control family `u(t, s)`.
#[derive(Debug, Clone)]
pub struct ControlHomotopy {
    tgrid: TimeGrid,
    sgrid: SGrid,
    /// `values[s_idx][t_idx]`, one control vector per product-grid node.
    values: Vec<Vec<DVector<f64>>>,
    interpolation: Interpolation,
}

impl ControlHomotopy {
    pub fn new(
        tgrid: TimeGrid,
        sgrid: SGrid,
        values: Vec<Vec<DVector<f64>>>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if values.len() != sgrid.len() {
            return Err(Error::InvalidHomotopy(format!(
                "{} s-slices for {} s-nodes",
                values.len(),
                sgrid.len()
            )));
        }
        let dim = values[0][0].len();
        for row in &values {
            if row.len() != tgrid.len() {
                return Err(Error::InvalidHomotopy(format!(
                    "{} t-samples for {} t-nodes",
                    row.len(),
                    tgrid.len()
                )));
            }
            if row.iter().any(|v| v.len() != dim) {
                return Err(Error::InvalidHomotopy(
                    "control samples must all share one dimension".into(),
                ));
            }
        }
        Ok(Self {
            tgrid,
            sgrid,
            values,
            interpolation,
        })
    }

    pub fn from_fn(
        tgrid: TimeGrid,
        sgrid: SGrid,
        interpolation: Interpolation,
        f: impl Fn(f64, f64) -> DVector<f64>,
    ) -> Result<Self> {
        let values = sgrid
            .nodes()
            .iter()
            .map(|&s| tgrid.nodes().iter().map(|&t| f(t, s)).collect())
            .collect();
        Self::new(tgrid, sgrid, values, interpolation)
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn sgrid(&self) -> &SGrid {
        &self.sgrid
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn control_dim(&self) -> usize {
        self.values[0][0].len()
    }

    pub fn value(&self, t_idx: usize, s_idx: usize) -> &DVector<f64> {
        &self.values[s_idx][t_idx]
    }

    /// The slice `u(., s_idx)` as a control signal (stored samples verbatim).
    pub fn slice(&self, s_idx: usize) -> ControlSignal {
        ControlSignal::new(
            self.tgrid.clone(),
            self.values[s_idx].clone(),
            self.interpolation,
        )
        .expect("slice of a valid homotopy is a valid signal")
    }

    /// `du/ds` at a product-grid node: central difference inside,
    /// second-order one-sided at `s = 0` and `s = 1`.
    pub fn du_ds(&self, t_idx: usize, s_idx: usize) -> DVector<f64> {
        let s = self.sgrid.nodes();
        let k = s.len();
        let v = |i: usize| &self.values[i][t_idx];
        if s_idx == 0 {
            if k < 3 {
                return (v(1) - v(0)).scale(1.0 / (s[1] - s[0]));
            }
            let (w0, w1, w2) = numerics::onesided_weights(s[0], s[1], s[2]);
            v(0).scale(w0) + v(1).scale(w1) + v(2).scale(w2)
        } else if s_idx == k - 1 {
            if k < 3 {
                return (v(1) - v(0)).scale(1.0 / (s[1] - s[0]));
            }
            let (w0, w1, w2) = numerics::onesided_weights(s[k - 1], s[k - 2], s[k - 3]);
            v(k - 1).scale(w0) + v(k - 2).scale(w1) + v(k - 3).scale(w2)
        } else {
            (v(s_idx + 1) - v(s_idx - 1)).scale(1.0 / (s[s_idx + 1] - s[s_idx - 1]))
        }
    }

    /// The family `u(t, lambda * s)` on the same product grid, with values
    /// taken by piecewise-linear interpolation in `s`. Exact at `lambda = 1`.
    pub fn rescaled(&self, lambda: f64) -> ControlHomotopy {
        let s_nodes = self.sgrid.nodes();
        let values = s_nodes
            .iter()
            .map(|&s| {
                let target = lambda * s;
                let row_at = |i: usize| &self.values[i];
                match s_nodes.binary_search_by(|x| x.partial_cmp(&target).unwrap()) {
                    Ok(i) => row_at(i).clone(),
                    Err(pos) => {
                        let hi = pos.min(s_nodes.len() - 1);
                        let lo = hi - 1;
                        let theta = (target - s_nodes[lo]) / (s_nodes[hi] - s_nodes[lo]);
                        row_at(lo)
                            .iter()
                            .zip(row_at(hi))
                            .map(|(a, b)| a.scale(1.0 - theta) + b.scale(theta))
                            .collect()
                    }
                }
            })
            .collect();
        ControlHomotopy {
            tgrid: self.tgrid.clone(),
            sgrid: self.sgrid.clone(),
            values,
            interpolation: self.interpolation,
        }
    }

    /// Same surface traversed from `s = 1` to `s = 0`.
    pub fn reversed(&self) -> ControlHomotopy {
        let mut values = self.values.clone();
        values.reverse();
        ControlHomotopy {
            tgrid: self.tgrid.clone(),
            sgrid: self.sgrid.clone(),
            values,
            interpolation: self.interpolation,
        }
    }
}

/// The straight-line family `(1 - s) u0(t) + s u1(t)`.
///
/// Endpoint slices reproduce `u0` and `u1` exactly; interior slices stay in
/// the enclosing convex box whenever the endpoints do.
pub fn linear_homotopy(
    u0: &ControlSignal,
    u1: &ControlSignal,
    sgrid: SGrid,
) -> Result<ControlHomotopy> {
    if u0.grid() != u1.grid() {
        return Err(Error::InvalidHomotopy(
            "endpoint controls must share one time grid".into(),
        ));
    }
    if u0.dim() != u1.dim() {
        return Err(Error::InvalidHomotopy(
            "endpoint controls must share one control dimension".into(),
        ));
    }
    if u0.interpolation() != u1.interpolation() {
        return Err(Error::InvalidHomotopy(
            "endpoint controls must share one interpolation mode".into(),
        ));
    }
    let values = sgrid
        .nodes()
        .iter()
        .map(|&s| {
            u0.samples()
                .iter()
                .zip(u1.samples())
                .map(|(a, b)| a.scale(1.0 - s) + b.scale(s))
                .collect()
        })
        .collect();
    ControlHomotopy::new(u0.grid().clone(), sgrid, values, u0.interpolation())
}

/// How each homotopy slice acquires its costate.
#[derive(Debug, Clone)]
pub enum LiftMode {
    /// Pin every slice's costate by the terminal condition (backward
    /// resolution per slice; no shooting).
    POptimal,
    /// Prescribe the initial costate `b(s)` per s-node.
    FixedB(Vec<DVector<f64>>),
}

impl LiftMode {
    /// The same initial costate for every slice.
    pub fn fixed_constant(b: DVector<f64>, s_count: usize) -> LiftMode {
        LiftMode::FixedB(vec![b; s_count])
    }
}

/// A lifted homotopy: one solution curve per s-node.
#[derive(Debug, Clone)]
pub struct HomotopySurface {
    homotopy: ControlHomotopy,
    lifts: Vec<LiftedCurve>,
}

impl HomotopySurface {
    pub fn homotopy(&self) -> &ControlHomotopy {
        &self.homotopy
    }

    pub fn lifts(&self) -> &[LiftedCurve] {
        &self.lifts
    }

    pub fn lift(&self, s_idx: usize) -> &LiftedCurve {
        &self.lifts[s_idx]
    }

    /// `(q(0,s), p(0,s))` along the initial-time boundary curve.
    pub fn endpoint_curve_initial(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        self.lifts
            .iter()
            .map(|l| (l.q().first().clone(), l.p().first().clone()))
            .collect()
    }

    /// `(q(T,s), p(T,s))` along the terminal-time boundary curve.
    pub fn endpoint_curve_terminal(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        self.lifts
            .iter()
            .map(|l| (l.q().last().clone(), l.p().last().clone()))
            .collect()
    }
}

fn tag_slice(err: Error, s: f64) -> Error {
    match err {
        Error::NonFinite { context, t } => Error::NonFinite {
            context: format!("{context} (homotopy slice s = {s})"),
            t,
        },
        Error::InvalidSignal(m) => Error::InvalidSignal(format!("{m} (homotopy slice s = {s})")),
        other => other,
    }
}

/// Lift every slice of a homotopy under the given mode.
///
/// Slices must stay inside the problem's enclosing convex box (checked per
/// slice). Whether the *endpoint* slices lie in `K` itself is the caller's
/// admissibility contract; [`endpoint_admissibility`] reports on it, since
/// hard-rejecting it would rule out smoothed needles over non-convex `K`.
pub fn lift_homotopy(
    problem: &MayerProblem,
    homotopy: ControlHomotopy,
    mode: LiftMode,
) -> Result<HomotopySurface> {
    if let LiftMode::FixedB(bs) = &mode {
        if bs.len() != homotopy.sgrid().len() {
            return Err(Error::InvalidHomotopy(format!(
                "{} costate seeds for {} s-nodes",
                bs.len(),
                homotopy.sgrid().len()
            )));
        }
    }
    let mut lifts = Vec::with_capacity(homotopy.sgrid().len());
    for (s_idx, &s) in homotopy.sgrid().nodes().iter().enumerate() {
        let slice = homotopy.slice(s_idx);
        let lifted = match &mode {
            LiftMode::POptimal => lift_p_optimal(problem, &slice),
            LiftMode::FixedB(bs) => lift_with_initial_costate(problem, &slice, &bs[s_idx]),
        }
        .map_err(|e| tag_slice(e, s))?;
        lifts.push(lifted);
    }
    Ok(HomotopySurface { homotopy, lifts })
}

/// Check that the two endpoint slices take values in the control set `K`
/// itself (not merely the enclosing box). Returns one violation per
/// offending slice.
pub fn endpoint_admissibility(problem: &MayerProblem, homotopy: &ControlHomotopy) -> Vec<Violation> {
    let mut out = Vec::new();
    for (label, s_idx) in [("s = 0", 0), ("s = 1", homotopy.sgrid().len() - 1)] {
        let bad = homotopy.values[s_idx]
            .iter()
            .enumerate()
            .find(|(_, u)| !problem.control_set().contains(u));
        if let Some((t_idx, u)) = bad {
            out.push(Violation {
                check: "endpoint slice must take values in the control set".into(),
                detail: format!(
                    "{label}: u = {u:?} at t = {} is outside K",
                    homotopy.tgrid.nodes()[t_idx]
                ),
            });
        }
    }
    out
}

/// Endpoint labour in reduced form:
/// `int_0^1 (p(T,s) + dC/dq(T, q(T,s))) . dq/ds(T,s) ds`.
///
/// The initial-time boundary contributes nothing because every lift starts
/// at the same `a0`. In p-optimal mode the integrand is identically zero by
/// the terminal condition.
pub fn endpoint_labour(problem: &MayerProblem, surface: &HomotopySurface) -> f64 {
    let s_nodes = surface.homotopy.sgrid().nodes();
    let t_end = surface.homotopy.tgrid().horizon();
    let terminal = surface.endpoint_curve_terminal();
    let k = s_nodes.len();

    let dq_ds = |i: usize| -> DVector<f64> {
        if i == 0 {
            if k < 3 {
                return (&terminal[1].0 - &terminal[0].0).scale(1.0 / (s_nodes[1] - s_nodes[0]));
            }
            let (w0, w1, w2) = numerics::onesided_weights(s_nodes[0], s_nodes[1], s_nodes[2]);
            terminal[0].0.scale(w0) + terminal[1].0.scale(w1) + terminal[2].0.scale(w2)
        } else if i == k - 1 {
            if k < 3 {
                return (&terminal[1].0 - &terminal[0].0).scale(1.0 / (s_nodes[1] - s_nodes[0]));
            }
            let (w0, w1, w2) =
                numerics::onesided_weights(s_nodes[k - 1], s_nodes[k - 2], s_nodes[k - 3]);
            terminal[k - 1].0.scale(w0) + terminal[k - 2].0.scale(w1) + terminal[k - 3].0.scale(w2)
        } else {
            (&terminal[i + 1].0 - &terminal[i - 1].0)
                .scale(1.0 / (s_nodes[i + 1] - s_nodes[i - 1]))
        }
    };

    let integrand: Vec<f64> = (0..k)
        .map(|i| {
            let (q, p) = &terminal[i];
            (p + problem.terminal_cost_dq(t_end, q)).dot(&dq_ds(i))
        })
        .collect();
    numerics::trapezoid(s_nodes, &integrand)
}

/// Endpoint labour by direct line integrals of the cost one-form along the
/// two boundary curves (terminal minus initial), using chord tangents and
/// endpoint-averaged form values per segment.
///
/// This is an independent discretization of the same quantity as
/// [`endpoint_labour`]; the two agreeing is one of the acceptance checks.
pub fn endpoint_labour_via_line_integrals(
    problem: &MayerProblem,
    surface: &HomotopySurface,
) -> f64 {
    let form = CostForm::new(problem);
    let t_nodes = surface.homotopy.tgrid().nodes();
    let last_t = t_nodes.len() - 1;

    let curve_integral = |t_idx: usize, t: f64| -> f64 {
        let pts: Vec<(DVector<f64>, DVector<f64>)> = surface
            .lifts
            .iter()
            .map(|l| (l.q().value(t_idx).clone(), l.p().value(t_idx).clone()))
            .collect();
        let mut acc = 0.0;
        for i in 0..pts.len() - 1 {
            // dt = 0 along a fixed-time boundary curve
            let dq = &pts[i + 1].0 - &pts[i].0;
            let dp = &pts[i + 1].1 - &pts[i].1;
            let u_a = surface.homotopy.value(t_idx, i);
            let u_b = surface.homotopy.value(t_idx, i + 1);
            let a = form.eval(t, &pts[i].0, &pts[i].1, u_a, 0.0, &dq, &dp);
            let b = form.eval(t, &pts[i + 1].0, &pts[i + 1].1, u_b, 0.0, &dq, &dp);
            acc += 0.5 * (a + b);
        }
        acc
    };

    curve_integral(last_t, t_nodes[last_t]) - curve_integral(0, t_nodes[0])
}

/// Surface labour `- int int (dH/du . du/ds) dt ds` over the lifted surface,
/// with `du/ds` by differences in `s` and the tensor trapezoid rule on the
/// product grid.
pub fn two_dim_labour(problem: &MayerProblem, surface: &HomotopySurface) -> Result<f64> {
    let t_nodes = surface.homotopy.tgrid().nodes();
    let s_count = surface.homotopy.sgrid().len();
    let mut values = vec![vec![0.0; s_count]; t_nodes.len()];
    for (t_idx, &t) in t_nodes.iter().enumerate() {
        for s_idx in 0..s_count {
            let lift = &surface.lifts[s_idx];
            let h_u = eval_hamiltonian_du(
                problem,
                t,
                lift.q().value(t_idx),
                lift.p().value(t_idx),
                surface.homotopy.value(t_idx, s_idx),
            );
            values[t_idx][s_idx] = h_u.dot(&surface.homotopy.du_ds(t_idx, s_idx));
        }
    }
    Ok(-quad_2d(t_nodes, surface.homotopy.sgrid().nodes(), &values)?)
}

/// All labour quantities of a lifted homotopy in one record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabourReport {
    /// Endpoint labour `C`.
    pub endpoint_labour: f64,
    /// Surface labour `W`.
    pub two_dim_labour: f64,
    /// Line-integral cost of the `s = 1` slice.
    pub cost_u: f64,
    /// Line-integral cost of the `s = 0` slice.
    pub cost_uo: f64,
    /// `cost_u - cost_uo`.
    pub delta_i: f64,
    /// `delta_i - (C + W)`; zero up to discretization by the Stokes identity.
    pub stokes_residual: f64,
}

impl LabourReport {
    /// Flat key/value view for serialization.
    pub fn records(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("endpoint_labour", self.endpoint_labour),
            ("two_dim_labour", self.two_dim_labour),
            ("cost_u", self.cost_u),
            ("cost_uo", self.cost_uo),
            ("delta_i", self.delta_i),
            ("stokes_residual", self.stokes_residual),
        ]
    }
}

/// Compute every labour quantity of the surface: slice costs via line
/// integrals, endpoint and surface labours, and the residual of the identity
/// `delta_I = C + W`.
pub fn stokes_report(problem: &MayerProblem, surface: &HomotopySurface) -> Result<LabourReport> {
    let cost_uo = cost_line_integral(problem, &surface.lifts[0]);
    let cost_u = cost_line_integral(problem, surface.lifts.last().unwrap());
    let endpoint = endpoint_labour(problem, surface);
    let surface_labour = two_dim_labour(problem, surface)?;
    let delta_i = cost_u - cost_uo;
    Ok(LabourReport {
        endpoint_labour: endpoint,
        two_dim_labour: surface_labour,
        cost_u,
        cost_uo,
        delta_i,
        stokes_residual: delta_i - (endpoint + surface_labour),
    })
}

/// The labour function `lambda -> W(u(t, lambda s))`: surface labour of the
/// rescaled homotopy, sampled at the given lambda nodes. Slices are lifted
/// p-optimally; `W(0) = 0` holds by construction (the rescaled family is
/// constant in `s`), so `lambda = 0` is not re-computed.
pub fn labour_function(
    problem: &MayerProblem,
    homotopy: &ControlHomotopy,
    lambda_grid: &SGrid,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid.nodes() {
        if lambda == 0.0 {
            out.push((0.0, 0.0));
            continue;
        }
        let surface = lift_homotopy(problem, homotopy.rescaled(lambda), LiftMode::POptimal)?;
        out.push((lambda, two_dim_labour(problem, &surface)?));
    }
    Ok(out)
}

/// One-sided derivative of the labour function at `lambda = 0`:
/// `- int_0^T dH/du|_(base lift) . Y(t) dt` with `Y = du/ds|_(s=0)`.
///
/// The s-integration of the s-independent integrand over `[0,1]` is the
/// identity, so only the time integral remains. Non-negativity of this
/// number over all homotopy directions is the first-order optimality
/// condition for the base slice.
pub fn labour_derivative_at_zero(
    problem: &MayerProblem,
    homotopy: &ControlHomotopy,
) -> Result<f64> {
    let base = lift_p_optimal(problem, &homotopy.slice(0))?;
    let t_nodes = homotopy.tgrid().nodes();
    let integrand: Vec<f64> = t_nodes
        .iter()
        .enumerate()
        .map(|(t_idx, &t)| {
            let h_u = eval_hamiltonian_du(
                problem,
                t,
                base.q().value(t_idx),
                base.p().value(t_idx),
                homotopy.value(t_idx, 0),
            );
            h_u.dot(&homotopy.du_ds(t_idx, 0))
        })
        .collect();
    Ok(-numerics::trapezoid(t_nodes, &integrand))
}

/// Sup-norm of `dH/du` along the p-optimal lift of a control, over all grid
/// nodes and control components. A small value certifies first-order
/// stationarity, which is the meaningful test when the control stays in the
/// interior of the enclosing box (so homotopy directions are unrestricted).
pub fn stationarity_check(problem: &MayerProblem, signal: &ControlSignal) -> Result<f64> {
    let lift = lift_p_optimal(problem, signal)?;
    let nodes = signal.grid().nodes();
    let mut sup: f64 = 0.0;
    for (i, &t) in nodes.iter().enumerate() {
        let h_u = eval_hamiltonian_du(
            problem,
            t,
            lift.q().value(i),
            lift.p().value(i),
            &signal.samples()[i],
        );
        sup = sup.max(h_u.amax());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::lift::terminal_cost_value;
    use crate::problem::{AxisBox, ControlSet};
    use crate::DEFAULT_TIME_STEPS;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn grid() -> TimeGrid {
        TimeGrid::uniform(1.0, DEFAULT_TIME_STEPS).unwrap()
    }

    /// F = u, C = q (not time-ramped; fine for labour quantities).
    fn steer_problem(a0: f64) -> MayerProblem {
        MayerProblem::builder(1, 1, 1.0)
            .initial_state(vec1(a0))
            .dynamics(|_t, _q, u| u.clone())
            .terminal_cost(|_t, q| q[0])
            .control_set(ControlSet::Box(AxisBox::interval(-1.0, 1.0).unwrap()))
            .build()
            .unwrap()
    }

    fn plus_minus_homotopy(s_steps: usize) -> ControlHomotopy {
        let u0 = ControlSignal::constant(grid(), vec1(-1.0));
        let u1 = ControlSignal::constant(grid(), vec1(1.0));
        linear_homotopy(&u0, &u1, SGrid::uniform(s_steps).unwrap()).unwrap()
    }

    #[test]
    fn sgrid_validation() {
        assert!(SGrid::from_nodes(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(SGrid::from_nodes(vec![0.0, 0.5]).is_err());
        assert!(SGrid::from_nodes(vec![0.1, 1.0]).is_err());
        assert!(SGrid::from_nodes(vec![0.0, 0.5, 0.4, 1.0]).is_err());
    }

    #[test]
    fn linear_homotopy_hits_endpoints_exactly() {
        let u0 = ControlSignal::constant(grid(), vec1(-1.0));
        let u1 = ControlSignal::constant(grid(), vec1(1.0));
        let h = linear_homotopy(&u0, &u1, SGrid::uniform(4).unwrap()).unwrap();
        assert_eq!(h.slice(0).samples(), u0.samples());
        assert_eq!(h.slice(4).samples(), u1.samples());
        // midpoint slice
        assert!(h.slice(2).samples().iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn linear_homotopy_s_derivative_is_the_difference() {
        let h = plus_minus_homotopy(10);
        for t_idx in [0, 500, 1000] {
            for s_idx in 0..h.sgrid().len() {
                assert!((h.du_ds(t_idx, s_idx)[0] - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn homotopy_rejects_mismatched_inputs() {
        let u0 = ControlSignal::constant(grid(), vec1(-1.0));
        let other_grid = TimeGrid::uniform(1.0, 10).unwrap();
        let u1 = ControlSignal::constant(other_grid, vec1(1.0));
        assert!(linear_homotopy(&u0, &u1, SGrid::uniform(4).unwrap()).is_err());

        let u1 = ControlSignal::constant(grid(), vec1(1.0))
            .with_interpolation(Interpolation::PiecewiseConstantLeft);
        assert!(linear_homotopy(&u0, &u1, SGrid::uniform(4).unwrap()).is_err());
    }

    #[test]
    fn constant_homotopy_lifts_identically() {
        let p = steer_problem(0.0);
        let u = ControlSignal::constant(grid(), vec1(0.5));
        let h = linear_homotopy(&u, &u, SGrid::uniform(3).unwrap()).unwrap();
        let surf = lift_homotopy(&p, h, LiftMode::POptimal).unwrap();
        let q0 = surf.lift(0).q().values();
        for l in surf.lifts() {
            assert_eq!(l.q().values(), q0);
        }
        assert_eq!(endpoint_labour(&p, &surf), 0.0);
        assert_eq!(two_dim_labour(&p, &surf).unwrap(), 0.0);
    }

    #[test]
    fn p_optimal_surface_on_state_free_dynamics_has_constant_costate() {
        let p = steer_problem(0.0);
        let surf = lift_homotopy(&p, plus_minus_homotopy(10), LiftMode::POptimal).unwrap();
        for l in surf.lifts() {
            assert!(l.p().values().iter().all(|v| (v[0] + 1.0).abs() < 1e-12));
            assert!(l.terminal_costate_residual(&p) <= 1e-8);
        }
    }

    #[test]
    fn endpoint_labour_vanishes_in_p_optimal_mode() {
        let b = benchmarks::builtin("bilinear").unwrap();
        let surf =
            lift_homotopy(&b.problem, plus_minus_homotopy(40), LiftMode::POptimal).unwrap();
        assert!(endpoint_labour(&b.problem, &surf).abs() <= 1e-6);
    }

    #[test]
    fn fixed_b_endpoint_labour_matches_hand_value() {
        // q' = u from q(0) = 1 with b = 0: homotopy -1 -> 0 gives
        // q(T,s) = s, p = 0, dC/dq(T, q) = q, so C = int_0^1 s ds = 1/2.
        let b = benchmarks::builtin("quadratic-target").unwrap();
        let u0 = ControlSignal::constant(grid(), vec1(-1.0));
        let u1 = ControlSignal::constant(grid(), vec1(0.0));
        let h = linear_homotopy(&u0, &u1, SGrid::uniform(50).unwrap()).unwrap();
        let mode = LiftMode::fixed_constant(vec1(0.0), 51);
        let surf = lift_homotopy(&b.problem, h, mode).unwrap();

        let reduced = endpoint_labour(&b.problem, &surf);
        assert!((reduced - 0.5).abs() < 1e-9, "reduced form gave {reduced}");

        // the direct boundary line integrals are an independent route
        let direct = endpoint_labour_via_line_integrals(&b.problem, &surf);
        assert!((reduced - direct).abs() < 1e-5);
    }

    #[test]
    fn surface_labour_hand_value_and_cost_difference() {
        // H_u = p = -1 on every slice, du/ds = 2: W = 2 = delta_I.
        let p = steer_problem(0.0);
        let surf = lift_homotopy(&p, plus_minus_homotopy(100), LiftMode::POptimal).unwrap();
        let report = stokes_report(&p, &surf).unwrap();
        assert!((report.two_dim_labour - 2.0).abs() < 1e-9);
        assert!((report.delta_i - 2.0).abs() < 1e-6);
        assert_eq!(report.endpoint_labour, 0.0);
        assert!(report.stokes_residual.abs() <= 1e-4);
        assert_eq!(
            report.delta_i,
            report.cost_u - report.cost_uo,
            "delta is defined as the cost difference"
        );
    }

    #[test]
    fn reversing_the_homotopy_flips_the_surface_labour() {
        let b = benchmarks::builtin("bilinear").unwrap();
        let h = plus_minus_homotopy(20);
        let w = two_dim_labour(
            &b.problem,
            &lift_homotopy(&b.problem, h.clone(), LiftMode::POptimal).unwrap(),
        )
        .unwrap();
        let w_rev = two_dim_labour(
            &b.problem,
            &lift_homotopy(&b.problem, h.reversed(), LiftMode::POptimal).unwrap(),
        )
        .unwrap();
        assert!((w + w_rev).abs() < 1e-12);
    }

    #[test]
    fn labour_function_is_linear_for_constant_gradient() {
        // steer-down: H_u = -1 on every slice, so W(lambda) = 2 lambda.
        let b = benchmarks::builtin("steer-down").unwrap();
        let h = plus_minus_homotopy(50);
        let table = labour_function(&b.problem, &h, &SGrid::uniform(5).unwrap()).unwrap();
        assert_eq!(table[0], (0.0, 0.0)); // exactly zero by construction
        for &(lambda, w) in &table {
            assert!(
                (w - 2.0 * lambda).abs() < 1e-5,
                "W({lambda}) = {w}, expected {}",
                2.0 * lambda
            );
        }
        // at lambda = 1 the rescaling is the identity
        let surf = lift_homotopy(&b.problem, h, LiftMode::POptimal).unwrap();
        let full = two_dim_labour(&b.problem, &surf).unwrap();
        assert!((table.last().unwrap().1 - full).abs() < 1e-8);
    }

    #[test]
    fn labour_derivative_at_zero_cases() {
        // stationary base: quadratic-target optimum has p = 0 identically
        let b = benchmarks::builtin("quadratic-target").unwrap();
        let h = plus_minus_homotopy(10);
        assert!(labour_derivative_at_zero(&b.problem, &h).unwrap().abs() < 1e-9);

        // steer-ish base: H_u = -1, Y = 2 -> derivative 2
        let p = steer_problem(0.0);
        let d = labour_derivative_at_zero(&p, &h).unwrap();
        assert!((d - 2.0).abs() < 1e-9);

        // zero direction
        let u = ControlSignal::constant(grid(), vec1(-1.0));
        let h0 = linear_homotopy(&u, &u, SGrid::uniform(5).unwrap()).unwrap();
        assert_eq!(labour_derivative_at_zero(&p, &h0).unwrap(), 0.0);
    }

    #[test]
    fn stationarity_sup_norm() {
        let bq = benchmarks::builtin("quadratic-target").unwrap();
        let u = ControlSignal::constant(grid(), vec1(-1.0));
        assert!(stationarity_check(&bq.problem, &u).unwrap() <= 1e-8);

        // boundary control on steer-down: |H_u| = |p| = 1, rightly not stationary
        let bs = benchmarks::builtin("steer-down").unwrap();
        let s = stationarity_check(&bs.problem, &u).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_b_mode_checks_seed_count() {
        let p = steer_problem(0.0);
        let h = plus_minus_homotopy(4);
        let bad = LiftMode::FixedB(vec![vec1(0.0); 3]);
        assert!(lift_homotopy(&p, h, bad).is_err());
    }

    #[test]
    fn out_of_box_slice_is_rejected_with_its_s_node() {
        // endpoints at +-1.2 escape the enclosing box [-1.1, 1.1]
        let p = steer_problem(0.0);
        let u0 = ControlSignal::constant(grid(), vec1(-1.2));
        let u1 = ControlSignal::constant(grid(), vec1(1.2));
        let h = linear_homotopy(&u0, &u1, SGrid::uniform(4).unwrap()).unwrap();
        let err = lift_homotopy(&p, h, LiftMode::POptimal).unwrap_err();
        assert!(err.to_string().contains("slice s = 0"), "got: {err}");
    }

    #[test]
    fn endpoint_admissibility_reports_off_k_endpoints() {
        let p = MayerProblem::builder(1, 1, 1.0)
            .initial_state(vec1(0.0))
            .dynamics(|_t, _q, u| u.clone())
            .terminal_cost(|t, q| q[0] * t)
            .control_set(ControlSet::Finite(vec![vec1(-1.0), vec1(1.0)]))
            .build()
            .unwrap();
        let h = plus_minus_homotopy(4);
        assert!(endpoint_admissibility(&p, &h).is_empty());

        let u_half = ControlSignal::constant(grid(), vec1(0.5));
        let u_one = ControlSignal::constant(grid(), vec1(1.0));
        let h = linear_homotopy(&u_half, &u_one, SGrid::uniform(4).unwrap()).unwrap();
        let violations = endpoint_admissibility(&p, &h);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].detail.contains("s = 0"));
    }

    #[test]
    fn degenerate_homotopy_with_differing_costates_is_well_defined() {
        // same control on both ends, costate seeds only: all labour
        // quantities are still defined and the report is consistent.
        let p = steer_problem(0.0);
        let u = ControlSignal::constant(grid(), vec1(0.25));
        let h = linear_homotopy(&u, &u, SGrid::uniform(8).unwrap()).unwrap();
        let seeds: Vec<_> = (0..9).map(|i| vec1(i as f64 / 8.0)).collect();
        let surf = lift_homotopy(&p, h, LiftMode::FixedB(seeds)).unwrap();
        let report = stokes_report(&p, &surf).unwrap();
        assert_eq!(report.two_dim_labour, 0.0); // du/ds = 0 exactly
        assert!(report.delta_i.abs() < 1e-12);
        // costs of the end slices agree, so the residual is minus the labours
        assert!((report.stokes_residual + report.endpoint_labour).abs() < 1e-12);
        let cost = terminal_cost_value(&p, surf.lift(0).q());
        assert!((report.cost_uo - cost).abs() < 1e-6);
    }
}
