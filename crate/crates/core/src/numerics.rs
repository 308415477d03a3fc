//! Deterministic fixed-step integration and quadrature.
//!
//! Everything downstream (lifts, labour integrals, needle scans) shares this
//! layer, so it is deliberately boring: classical RK4 on a fixed grid and
//! composite trapezoid rules. Fixed steps keep every sample grid-aligned and
//! bit-reproducible across runs, which the surface quadrature and the
//! determinism checks rely on; grids may be nonuniform after needle
//! refinement, so no rule here assumes uniform spacing.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Strictly increasing time nodes `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `steps` intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        if steps < 1 {
            return Err(Error::InvalidGrid("need at least 1 step".into()));
        }
        let nodes = (0..=steps)
            .map(|i| horizon * (i as f64) / (steps as f64))
            .collect();
        Ok(Self { nodes })
    }

    /// Grid from explicit nodes; the first node must be exactly 0 and the
    /// sequence strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first node must be exactly 0, got {}",
                nodes[0]
            )));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "nodes must be finite and strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
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
        false // invariant: at least 2 nodes
    }

    /// Final node `T`.
    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// New grid with the given times merged in. Times outside `(0, T)` are
    /// ignored, as are times closer than `1e-12 * T` to an existing node
    /// (degenerate slivers would wreck the step-size balance).
    pub fn with_inserted(&self, times: &[f64]) -> TimeGrid {
        let tol = 1e-12 * self.horizon();
        let mut nodes = self.nodes.clone();
        for &t in times {
            if t <= 0.0 || t >= self.horizon() {
                continue;
            }
            match nodes.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                Ok(_) => {}
                Err(pos) => {
                    let near_prev = pos > 0 && (t - nodes[pos - 1]).abs() <= tol;
                    let near_next = pos < nodes.len() && (nodes[pos] - t).abs() <= tol;
                    if !near_prev && !near_next {
                        nodes.insert(pos, t);
                    }
                }
            }
        }
        TimeGrid { nodes }
    }

    /// Index of the last node with `t_i <= t` (clamped into range).
    pub fn floor_index(&self, t: f64) -> usize {
        match self
            .nodes
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(pos) => (pos - 1).min(self.nodes.len() - 2),
        }
    }
}

/// A vector-valued curve sampled on a [`TimeGrid`], one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(
                "sampled values must all share one dimension".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.values[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }
}

/// Integration direction for [`integrate_ode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Integrate from the last node back to `t = 0`; `y0` is then the
    /// terminal value. The result is still reported in increasing-t order.
    Backward,
}

/// Classical 4th-order Runge-Kutta over the grid nodes.
///
/// The right-hand side is evaluated at the usual half-step stage points; a
/// non-finite stage output aborts with the offending node's time.
pub fn integrate_ode<F>(
    mut rhs: F,
    y0: &DVector<f64>,
    grid: &TimeGrid,
    direction: Direction,
) -> Result<SampledPath>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let n = grid.len();
    let dim = y0.len();
    let mut values = vec![DVector::zeros(dim); n];
    let nodes = grid.nodes();

    match direction {
        Direction::Forward => {
            values[0] = y0.clone();
            for i in 0..n - 1 {
                let h = nodes[i + 1] - nodes[i];
                values[i + 1] = rk4_step(&mut rhs, nodes[i], h, &values[i])?;
            }
        }
        Direction::Backward => {
            values[n - 1] = y0.clone();
            for i in (1..n).rev() {
                let h = nodes[i - 1] - nodes[i];
                values[i - 1] = rk4_step(&mut rhs, nodes[i], h, &values[i])?;
            }
        }
    }

    SampledPath::new(grid.clone(), values)
}

/// One RK4 step from `(t, y)` with (possibly negative) step `h`.
pub(crate) fn rk4_step<F>(rhs: &mut F, t: f64, h: f64, y: &DVector<f64>) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let dim = y.len();
    let mut eval = |stage_t: f64, stage_y: &DVector<f64>| -> Result<DVector<f64>> {
        let out = rhs(stage_t, stage_y);
        if out.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "rhs returned dimension {} for state dimension {}",
                out.len(),
                dim
            )));
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "ode right-hand side".into(),
                t,
            });
        }
        Ok(out)
    };
    let k1 = eval(t, y)?;
    let k2 = eval(t + 0.5 * h, &(y + k1.scale(0.5 * h)))?;
    let k3 = eval(t + 0.5 * h, &(y + k2.scale(0.5 * h)))?;
    let k4 = eval(t + h, &(y + k3.scale(h)))?;
    Ok(y + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0))
}

/// Composite trapezoid sum over a (possibly nonuniform) node/value sequence.
pub(crate) fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        acc += (nodes[i + 1] - nodes[i]) * 0.5 * (values[i] + values[i + 1]);
    }
    acc
}

/// Composite trapezoid integral of a scalar-valued path.
pub fn quad_trapezoid(samples: &SampledPath) -> Result<f64> {
    if samples.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "quad_trapezoid needs scalar samples, got dimension {}",
            samples.dim()
        )));
    }
    let nodes = samples.grid().nodes();
    for (i, v) in samples.values().iter().enumerate() {
        if !v[0].is_finite() {
            return Err(Error::NonFinite {
                context: "quadrature sample".into(),
                t: nodes[i],
            });
        }
    }
    let vals: Vec<f64> = samples.values().iter().map(|v| v[0]).collect();
    Ok(trapezoid(nodes, &vals))
}

/// Weights of the 3-point one-sided derivative at `x0` from values at
/// `(x0, x1, x2)`; second order on arbitrary spacing. Works at either end of
/// a grid (pass nodes inward from the boundary).
pub(crate) fn onesided_weights(x0: f64, x1: f64, x2: f64) -> (f64, f64, f64) {
    let w0 = (2.0 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2));
    let w1 = (x0 - x2) / ((x1 - x0) * (x1 - x2));
    let w2 = (x0 - x1) / ((x2 - x0) * (x2 - x1));
    (w0, w1, w2)
}

/// Composite trapezoid weights for a node sequence.
pub(crate) fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    w[0] = 0.5 * (nodes[1] - nodes[0]);
    w[n - 1] = 0.5 * (nodes[n - 1] - nodes[n - 2]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (nodes[i + 1] - nodes[i - 1]);
    }
    w
}

/// Tensor-product trapezoid rule on a `t x s` product grid.
///
/// `values[i][j]` is the integrand at `(t_nodes[i], s_nodes[j])`; row count
/// must match `t_nodes` and every row length must match `s_nodes`.
pub fn quad_2d(t_nodes: &[f64], s_nodes: &[f64], values: &[Vec<f64>]) -> Result<f64> {
    if values.len() != t_nodes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} value rows for {} t-nodes",
            values.len(),
            t_nodes.len()
        )));
    }
    for (i, row) in values.iter().enumerate() {
        if row.len() != s_nodes.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} values for {} s-nodes",
                i,
                row.len(),
                s_nodes.len()
            )));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("surface quadrature sample at s = {}", s_nodes[j]),
                t: t_nodes[i],
            });
        }
    }
    let wt = trapezoid_weights(t_nodes);
    let ws = trapezoid_weights(s_nodes);
    let mut acc = 0.0;
    for (i, row) in values.iter().enumerate() {
        let mut row_acc = 0.0;
        for (j, v) in row.iter().enumerate() {
            row_acc += ws[j] * v;
        }
        acc += wt[i] * row_acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_path(grid: TimeGrid, f: impl Fn(f64) -> f64) -> SampledPath {
        let values = grid
            .nodes()
            .iter()
            .map(|&t| DVector::from_vec(vec![f(t)]))
            .collect();
        SampledPath::new(grid, values).unwrap()
    }

    #[test]
    fn grid_rejects_bad_nodes() {
        assert!(TimeGrid::from_nodes(vec![0.0]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::uniform(0.0, 10).is_err());
    }

    #[test]
    fn grid_insertion_dedups_and_stays_sorted() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let g2 = g.with_inserted(&[0.05, 0.3, 0.3 + 1e-15, -1.0, 2.0]);
        assert_eq!(g2.len(), g.len() + 1); // 0.3 is an existing node, 0.05 is new
        assert!(g2.nodes().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g2.horizon(), 1.0);
    }

    #[test]
    fn zero_field_stays_constant() {
        let grid = TimeGrid::uniform(3.0, 17).unwrap();
        let y0 = DVector::from_vec(vec![5.0]);
        let path =
            integrate_ode(|_, _| DVector::from_vec(vec![0.0]), &y0, &grid, Direction::Forward)
                .unwrap();
        assert!(path.values().iter().all(|v| v[0] == 5.0));
    }

    #[test]
    fn rk4_exact_on_cubic_rhs() {
        // y' = t^2 from 0: RK4 reproduces t^3/3 to machine precision.
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let y0 = DVector::from_vec(vec![0.0]);
        let path = integrate_ode(
            |t, _| DVector::from_vec(vec![t * t]),
            &y0,
            &grid,
            Direction::Forward,
        )
        .unwrap();
        assert!((path.last()[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rk4_matches_exponential() {
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let y0 = DVector::from_vec(vec![1.0]);
        let path = integrate_ode(|_, y| y.clone(), &y0, &grid, Direction::Forward).unwrap();
        assert!((path.last()[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn backward_integration_reports_increasing_t() {
        // y' = y with terminal value e at t = 1 recovers 1 at t = 0.
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let y_t = DVector::from_vec(vec![std::f64::consts::E]);
        let path = integrate_ode(|_, y| y.clone(), &y_t, &grid, Direction::Backward).unwrap();
        assert!((path.first()[0] - 1.0).abs() < 1e-9);
        assert_eq!(path.last()[0], std::f64::consts::E);
    }

    #[test]
    fn forward_backward_round_trip_on_linear_rhs() {
        let grid = TimeGrid::uniform(1.0, 1000).unwrap();
        let y0 = DVector::from_vec(vec![1.0, -2.0]);
        let rhs = |_t: f64, y: &DVector<f64>| DVector::from_vec(vec![y[1], -0.7 * y[0]]);
        let fwd = integrate_ode(rhs, &y0, &grid, Direction::Forward).unwrap();
        let back = integrate_ode(rhs, fwd.last(), &grid, Direction::Backward).unwrap();
        assert!((back.first() - &y0).amax() < 1e-8);
    }

    #[test]
    fn non_finite_rhs_names_the_node() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let y0 = DVector::from_vec(vec![1.0]);
        let err = integrate_ode(
            |t, y| {
                if t >= 0.5 {
                    DVector::from_vec(vec![f64::NAN])
                } else {
                    y.clone()
                }
            },
            &y0,
            &grid,
            Direction::Forward,
        )
        .unwrap_err();
        match err {
            Error::NonFinite { t, .. } => assert!((t - 0.5).abs() < 0.11),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let grid = TimeGrid::uniform(2.0, 333).unwrap();
        let y0 = DVector::from_vec(vec![0.3, 0.7]);
        let rhs = |t: f64, y: &DVector<f64>| {
            DVector::from_vec(vec![(t * y[1]).sin(), y[0] * y[0] - t])
        };
        let a = integrate_ode(rhs, &y0, &grid, Direction::Forward).unwrap();
        let b = integrate_ode(rhs, &y0, &grid, Direction::Forward).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
            assert_eq!(x[1].to_bits(), y[1].to_bits());
        }
    }

    #[test]
    fn trapezoid_exact_for_constants_and_linear() {
        let grid = TimeGrid::uniform(2.0, 7).unwrap();
        assert!((quad_trapezoid(&scalar_path(grid.clone(), |_| 1.0)).unwrap() - 2.0).abs() < 1e-15);
        let grid01 = TimeGrid::uniform(1.0, 50).unwrap();
        assert!((quad_trapezoid(&scalar_path(grid01, |t| t)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_quadratic_within_tolerance() {
        let grid = TimeGrid::uniform(1.0, 1000).unwrap();
        let q = quad_trapezoid(&scalar_path(grid, |t| t * t)).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn trapezoid_order_two_convergence() {
        for f in [|t: f64| t * t, |t: f64| t.sin()] {
            let coarse = {
                let grid = TimeGrid::uniform(1.0, 100).unwrap();
                quad_trapezoid(&scalar_path(grid, f)).unwrap()
            };
            let fine = {
                let grid = TimeGrid::uniform(1.0, 200).unwrap();
                quad_trapezoid(&scalar_path(grid, f)).unwrap()
            };
            let exact = {
                let grid = TimeGrid::uniform(1.0, 200_000).unwrap();
                quad_trapezoid(&scalar_path(grid, f)).unwrap()
            };
            let ratio = (coarse - exact).abs() / (fine - exact).abs();
            assert!(
                (3.5..4.5).contains(&ratio),
                "expected ~4x error drop, got {ratio}"
            );
        }
    }

    #[test]
    fn quad_2d_unit_box_and_product() {
        let t = TimeGrid::uniform(1.0, 20).unwrap();
        let s = TimeGrid::uniform(1.0, 20).unwrap();
        let ones = vec![vec![1.0; s.len()]; t.len()];
        assert!((quad_2d(t.nodes(), s.nodes(), &ones).unwrap() - 1.0).abs() < 1e-14);

        let t = TimeGrid::uniform(1.0, 200).unwrap();
        let s = TimeGrid::uniform(1.0, 200).unwrap();
        let prod: Vec<Vec<f64>> = t
            .nodes()
            .iter()
            .map(|&ti| s.nodes().iter().map(|&sj| ti * sj).collect())
            .collect();
        // t*s is bilinear, so the tensor trapezoid rule is exact on it.
        assert!((quad_2d(t.nodes(), s.nodes(), &prod).unwrap() - 0.25).abs() < 1e-6);

        let zeros = vec![vec![0.0; s.len()]; t.len()];
        assert_eq!(quad_2d(t.nodes(), s.nodes(), &zeros).unwrap(), 0.0);
    }

    #[test]
    fn quad_2d_rejects_ragged_input() {
        let t = TimeGrid::uniform(1.0, 2).unwrap();
        let s = TimeGrid::uniform(1.0, 2).unwrap();
        let bad = vec![vec![0.0; 3], vec![0.0; 2], vec![0.0; 3]];
        assert!(quad_2d(t.nodes(), s.nodes(), &bad).is_err());
        let short = vec![vec![0.0; 3]; 2];
        assert!(quad_2d(t.nodes(), s.nodes(), &short).is_err());
    }
}
