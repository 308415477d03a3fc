//! Built-in problems with known optima and a brute-force oracle.
//!
//! Every terminal cost here is time-ramped, `C(t, q) = (t/T) * P(q)`, so that
//! `C(0, q) = 0` holds exactly while `C(T, q) = P(q)` is the intended target.
//! The oracle enumerates piecewise-constant controls and is lifted through
//! the same RK4 pipeline as everything else, so oracle and method share their
//! discretization error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lift::{forward_state, terminal_cost_value};
use crate::numerics::TimeGrid;
use crate::problem::{AxisBox, ControlSet, ControlSignal, Interpolation, MayerProblem};
use crate::DEFAULT_TIME_STEPS;

/// Enumeration recipe for [`brute_force_oracle`].
#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub segment_count: usize,
    pub levels: Vec<DVector<f64>>,
}

/// A problem bundled with whatever ground truth is available for it.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub problem: MayerProblem,
    pub known_optimal: Option<ControlSignal>,
    pub known_optimal_cost: Option<f64>,
    pub oracle: Option<OracleSpec>,
}

pub fn builtin_names() -> &'static [&'static str] {
    &[
        "steer-down",
        "quadratic-target",
        "double-integrator",
        "bilinear",
    ]
}

/// Construct a built-in benchmark problem by name.
///
/// * `steer-down`: `q' = u`, cost `q(T)`; push down as hard as allowed.
///   Optimal `u = -1`, cost `-1`.
/// * `quadratic-target`: `q' = u` from `q(0) = 1`, cost `q(T)^2 / 2`; park the
///   state at zero. Optimal cost `0` with the costate identically zero, so
///   the optimum is stationary in the interior sense.
/// * `double-integrator`: `q1' = q2`, `q2' = u`, cost `q1(T)`. Optimal
///   `u = -1`, cost `-1/2`.
/// * `bilinear`: `q' = q u` from `q(0) = 1`, cost `q(T)`. Optimal `u = -1`,
///   cost `exp(-1)`.
pub fn builtin(name: &str) -> Result<BenchmarkProblem> {
    let interval = || AxisBox::interval(-1.0, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, DEFAULT_TIME_STEPS)?;
    let minus_one = ControlSignal::constant(grid, DVector::from_vec(vec![-1.0]));
    let scalar_levels = || {
        vec![
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        ]
    };

    match name {
        "steer-down" => {
            let problem = MayerProblem::linear_affine(
                DMatrix::zeros(1, 1),
                DMatrix::from_row_slice(1, 1, &[1.0]),
                0.0,
                DVector::from_vec(vec![1.0]),
                None,
                1.0,
                DVector::from_vec(vec![0.0]),
                ControlSet::Box(interval()),
            )?;
            Ok(BenchmarkProblem {
                name: "steer-down",
                problem,
                known_optimal: Some(minus_one),
                known_optimal_cost: Some(-1.0),
                oracle: Some(OracleSpec {
                    segment_count: 3,
                    levels: scalar_levels(),
                }),
            })
        }
        "quadratic-target" => {
            let problem = MayerProblem::linear_affine(
                DMatrix::zeros(1, 1),
                DMatrix::from_row_slice(1, 1, &[1.0]),
                0.0,
                DVector::from_vec(vec![0.0]),
                Some(DMatrix::from_row_slice(1, 1, &[1.0])),
                1.0,
                DVector::from_vec(vec![1.0]),
                ControlSet::Box(interval()),
            )?;
            Ok(BenchmarkProblem {
                name: "quadratic-target",
                problem,
                known_optimal: Some(minus_one),
                known_optimal_cost: Some(0.0),
                oracle: Some(OracleSpec {
                    segment_count: 4,
                    levels: scalar_levels(),
                }),
            })
        }
        "double-integrator" => {
            let problem = MayerProblem::linear_affine(
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                0.0,
                DVector::from_vec(vec![1.0, 0.0]),
                None,
                1.0,
                DVector::from_vec(vec![0.0, 0.0]),
                ControlSet::Box(interval()),
            )?;
            Ok(BenchmarkProblem {
                name: "double-integrator",
                problem,
                known_optimal: Some(minus_one),
                known_optimal_cost: Some(-0.5),
                oracle: Some(OracleSpec {
                    segment_count: 3,
                    levels: scalar_levels(),
                }),
            })
        }
        "bilinear" => {
            let horizon = 1.0;
            let problem = MayerProblem::builder(1, 1, horizon)
                .initial_state(DVector::from_vec(vec![1.0]))
                .dynamics(|_t, q, u| DVector::from_vec(vec![q[0] * u[0]]))
                .dynamics_dq(|_t, _q, u| DMatrix::from_row_slice(1, 1, &[u[0]]))
                .dynamics_du(|_t, q, _u| DMatrix::from_row_slice(1, 1, &[q[0]]))
                .terminal_cost(move |t, q| q[0] * t / horizon)
                .terminal_cost_dq(move |t, _q| DVector::from_vec(vec![t / horizon]))
                .terminal_cost_dt(move |_t, q| q[0] / horizon)
                .control_set(ControlSet::Box(interval()))
                .build()?;
            Ok(BenchmarkProblem {
                name: "bilinear",
                problem,
                known_optimal: Some(minus_one),
                known_optimal_cost: Some((-1.0f64).exp()),
                oracle: Some(OracleSpec {
                    segment_count: 3,
                    levels: scalar_levels(),
                }),
            })
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Exhaustively minimize the terminal cost over piecewise-constant controls
/// on `segment_count` uniform segments with values drawn from `levels`.
///
/// Tuples are visited in lexicographic order of level indices and ties keep
/// the first minimizer, so the result is deterministic. Guarded against
/// combinatorial blow-up at `segment_count * levels^segment_count <= 1e6`.
pub fn brute_force_oracle(
    problem: &MayerProblem,
    segment_count: usize,
    levels: &[DVector<f64>],
) -> Result<(ControlSignal, f64)> {
    if segment_count == 0 || levels.is_empty() {
        return Err(Error::InvalidProblem(
            "oracle needs at least one segment and one level".into(),
        ));
    }
    let total = (levels.len() as f64).powi(segment_count as i32) * segment_count as f64;
    if !(total <= 1e6) {
        return Err(Error::EnumerationGuard(format!(
            "{segment_count} segments x {} levels is {total:.3e} evaluations",
            levels.len()
        )));
    }
    for level in levels {
        if !problem.control_set().contains(level) {
            return Err(Error::InvalidProblem(format!(
                "oracle level {level:?} is not in the control set"
            )));
        }
    }

    let grid = TimeGrid::uniform(problem.horizon(), DEFAULT_TIME_STEPS)?;
    let horizon = problem.horizon();
    let seg_of = |t: f64| -> usize {
        (((t / horizon) * segment_count as f64).floor() as usize).min(segment_count - 1)
    };

    let mut best: Option<(ControlSignal, f64)> = None;
    let mut indices = vec![0usize; segment_count];
    loop {
        let samples: Vec<DVector<f64>> = grid
            .nodes()
            .iter()
            .map(|&t| levels[indices[seg_of(t)]].clone())
            .collect();
        let signal = ControlSignal::new(
            grid.clone(),
            samples,
            Interpolation::PiecewiseConstantLeft,
        )?;
        let q = forward_state(problem, &signal)?;
        let cost = terminal_cost_value(problem, &q);
        if best.as_ref().map_or(true, |(_, c)| cost < *c) {
            best = Some((signal, cost));
        }

        // lexicographic odometer: last segment spins fastest
        let mut pos = segment_count;
        loop {
            if pos == 0 {
                let (signal, cost) = best.unwrap();
                return Ok((signal, cost));
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < levels.len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}
