//! Optimal transport solvers.
//!
//! * [`sinkhorn`]: entropic OT under equality marginals.
//! * [`partial_ot_dykstra`]: entropic partial OT under inequality marginals,
//!   solved with KL Dykstra projections.
//! * [`pgm_proximal`] and [`fgm_solve`]: proximal-point graph matching, where
//!   each step is an entropic OT problem on the kernel
//!   `Γⁿ ∘ exp(−C̄ⁿ/ε)`.
//! * [`exact_small_oracle`]: exact reference solutions for tiny instances.
//!
//! Plans returned by every solver are rounded onto their constraint set, so
//! the marginal invariants of [`TransportPlan`] hold even when the iteration
//! budget runs out before `tol` is reached.

mod exact;
mod partial;
mod proximal;
mod sinkhorn;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{exact_small_oracle, OracleProblem, ORACLE_MAX_SIZE};
pub use partial::partial_ot_dykstra;
pub use proximal::{fgm_objective, fgm_solve, pgm_proximal, pgm_proximal_from};
pub use sinkhorn::sinkhorn;

pub(crate) use partial::Projector;

/// Equality-mode marginal tolerance.
pub const EQUALITY_TOL: f64 = 1e-6;
/// Inequality-mode slack on row and column caps.
pub const CAP_TOL: f64 = 1e-8;
/// Inequality-mode tolerance on the total mass.
pub const MASS_TOL: f64 = 1e-6;
/// Entries of the previous plan are floored here before taking the log.
pub(crate) const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MarginalMode {
    Equality,
    /// Row sums `≤ p`, column sums `≤ q`, total mass `= mass`.
    Inequality { mass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    p: DVector<f64>,
    q: DVector<f64>,
    mode: MarginalMode,
}

impl Marginals {
    pub fn new(p: DVector<f64>, q: DVector<f64>, mode: MarginalMode) -> Result<Self> {
        for (name, v) in [("p", &p), ("q", &q)] {
            if v.is_empty() {
                return Err(Error::invalid(format!("marginal {name} is empty")));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid(format!("marginal {name} has negative or non-finite entries")));
            }
            if (v.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("marginal {name} sums to {}, expected 1", v.sum())));
            }
        }
        if let MarginalMode::Inequality { mass } = mode {
            let limit = p.sum().min(q.sum());
            if !(mass > 0.0) || mass > limit + 1e-12 {
                return Err(Error::InfeasibleMass { mass, limit });
            }
        }
        Ok(Marginals { p, q, mode })
    }

    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        Self::new(
            DVector::from_element(n, 1.0 / n as f64),
            DVector::from_element(m, 1.0 / m as f64),
            MarginalMode::Equality,
        )
    }

    pub fn uniform_partial(n: usize, m: usize, mass: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n, 1.0 / n as f64),
            DVector::from_element(m, 1.0 / m as f64),
            MarginalMode::Inequality { mass },
        )
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn mode(&self) -> MarginalMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.p.len()
    }

    pub fn cols(&self) -> usize {
        self.q.len()
    }

    /// Total mass a feasible plan carries.
    pub fn total_mass(&self) -> f64 {
        match self.mode {
            MarginalMode::Equality => self.p.sum(),
            MarginalMode::Inequality { mass } => mass,
        }
    }

    /// `p qᵀ` scaled to the feasible total mass.
    pub fn independent_plan(&self) -> DMatrix<f64> {
        let scale = self.total_mass() / (self.p.sum() * self.q.sum());
        &self.p * self.q.transpose() * scale
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.rows(), self.cols()) {
            return Err(Error::shape(
                format!("{}x{} problem", self.rows(), self.cols()),
                format!("{rows}x{cols}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropic scale ε.
    pub epsilon: f64,
    /// Iteration budget: proximal steps for the graph-matching solvers,
    /// scaling / projection cycles for the linear solvers.
    pub outer_iters: usize,
    /// Dykstra (or Sinkhorn) cycles per proximal step.
    pub inner_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 5e-3,
            outer_iters: 50,
            inner_iters: 1,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.inner_iters == 0 {
            return Err(Error::invalid("inner iterations L must be at least 1"));
        }
        if self.outer_iters == 0 {
            return Err(Error::invalid("outer iterations must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub gamma: DMatrix<f64>,
    pub marginals: Marginals,
    /// Per-iteration objective. Sinkhorn records its dual objective, Dykstra
    /// the linear cost, the graph-matching solvers their quadratic objective.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest violation of each marginal constraint family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub rows: f64,
    pub cols: f64,
    pub mass: f64,
    pub negative: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> DVector<f64> {
        self.gamma.column_sum()
    }

    pub fn col_sums(&self) -> DVector<f64> {
        self.gamma.row_sum().transpose()
    }

    pub fn mass(&self) -> f64 {
        self.gamma.sum()
    }

    pub fn cost(&self, cost: &DMatrix<f64>) -> f64 {
        cost.dot(&self.gamma)
    }

    pub fn violation(&self) -> Violation {
        violation_of(&self.gamma, &self.marginals)
    }

    /// Checks the marginal invariants of this plan's mode.
    pub fn check_invariants(&self) -> Result<()> {
        let v = self.violation();
        let ok = match self.marginals.mode() {
            MarginalMode::Equality => v.rows <= EQUALITY_TOL && v.cols <= EQUALITY_TOL,
            MarginalMode::Inequality { .. } => v.rows <= CAP_TOL && v.cols <= CAP_TOL && v.mass <= MASS_TOL,
        };
        if ok && v.negative == 0.0 && self.gamma.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("plan violates its marginal constraints: {v:?}")))
        }
    }

    /// Per-point matching scores in `[0, 1]`: row (column) mass divided by the
    /// largest mass that row (column) may carry.
    pub fn matching_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let ratio = |mass: f64, cap: f64| if cap > 0.0 { (mass / cap).clamp(0.0, 1.0) } else { 0.0 };
        let rows = self
            .row_sums()
            .iter()
            .zip(self.marginals.p().iter())
            .map(|(&m, &c)| ratio(m, c))
            .collect();
        let cols = self
            .col_sums()
            .iter()
            .zip(self.marginals.q().iter())
            .map(|(&m, &c)| ratio(m, c))
            .collect();
        (rows, cols)
    }

    /// Column index of the largest entry in each row (lowest index on ties).
    pub fn row_argmax(&self) -> Vec<usize> {
        row_argmax(&self.gamma)
    }

    /// Plan rescaled into the doubly sub-stochastic form (rows and columns
    /// summing to at most one).
    pub fn substochastic(&self) -> DMatrix<f64> {
        let cap = self
            .marginals
            .p()
            .iter()
            .chain(self.marginals.q().iter())
            .fold(0.0_f64, |a, &x| a.max(x));
        &self.gamma / cap
    }
}

pub(crate) fn violation_of(gamma: &DMatrix<f64>, marginals: &Marginals) -> Violation {
    let r = gamma.column_sum();
    let c = gamma.row_sum().transpose();
    let p = marginals.p();
    let q = marginals.q();
    let negative = gamma.iter().fold(0.0_f64, |a, &x| a.max(-x));
    let mass = gamma.sum();
    match marginals.mode() {
        MarginalMode::Equality => Violation {
            rows: (r - p).abs().max(),
            cols: (c - q).abs().max(),
            mass: (mass - p.sum()).abs(),
            negative,
        },
        MarginalMode::Inequality { mass: target } => Violation {
            rows: (r - p).iter().fold(0.0_f64, |a, &x| a.max(x)),
            cols: (c - q).iter().fold(0.0_f64, |a, &x| a.max(x)),
            mass: (mass - target).abs(),
            negative,
        },
    }
}

pub(crate) fn row_argmax(g: &DMatrix<f64>) -> Vec<usize> {
    (0..g.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..g.ncols() {
                if g[(i, j)] > g[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Total-variation distance `½ Σ |a − b|`.
pub fn total_variation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    0.5 * (a - b).abs().sum()
}

#[inline]
pub(crate) fn logsumexp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn row_lse(m: &DMatrix<f64>, i: usize) -> f64 {
    logsumexp((0..m.ncols()).map(|j| m[(i, j)]))
}

pub(crate) fn col_lse(m: &DMatrix<f64>, j: usize) -> f64 {
    logsumexp(m.column(j).iter().copied())
}

/// Rounds a nonnegative matrix onto the marginal constraint set.
///
/// Rows and columns above their caps are scaled down; the remaining deficit in
/// total mass is redistributed as a rank-one term over the rows and columns
/// with slack, which keeps every cap satisfied. The change is bounded by the
/// constraint violation of the input.
pub(crate) fn round_to_feasible(gamma: &mut DMatrix<f64>, marginals: &Marginals) {
    let p = marginals.p();
    let q = marginals.q();
    gamma.iter_mut().for_each(|x| {
        if !(*x > 0.0) || !x.is_finite() {
            *x = 0.0;
        }
    });
    let rows = gamma.column_sum();
    for i in 0..gamma.nrows() {
        if rows[i] > p[i] {
            let s = p[i] / rows[i];
            gamma.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
    }
    let cols = gamma.row_sum();
    for j in 0..gamma.ncols() {
        if cols[j] > q[j] {
            let s = q[j] / cols[j];
            gamma.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
    }
    let target = marginals.total_mass();
    let mass = gamma.sum();
    if mass > target {
        *gamma *= target / mass;
        return;
    }
    let row_slack: DVector<f64> = (p - gamma.column_sum()).map(|x| x.max(0.0));
    let col_slack: DVector<f64> = (q - gamma.row_sum().transpose()).map(|x| x.max(0.0));
    let (rs, cs) = (row_slack.sum(), col_slack.sum());
    let deficit = target - mass;
    if deficit > 0.0 && rs > 0.0 && cs > 0.0 {
        *gamma += &row_slack * col_slack.transpose() * (deficit / (rs * cs));
    }
}
