use nalgebra::{DMatrix, DVector};

use super::{col_lse, round_to_feasible, row_lse, Marginals, MarginalMode, SolverConfig, TransportPlan};
use crate::error::{Error, Result};

/// KL projections onto the marginal constraint set, carried out in the log
/// domain.
///
/// In inequality mode one cycle projects onto the row caps, the column caps and
/// the total-mass plane. The cap projections only ever scale whole rows (or
/// columns) down, so their Dykstra correction terms are per-row and
/// per-column vectors; the mass plane is affine and needs none. In equality
/// mode a cycle is one Sinkhorn row/column sweep and no corrections apply.
pub(crate) struct Projector<'a> {
    marginals: &'a Marginals,
    row_corr: DVector<f64>,
    col_corr: DVector<f64>,
    /// Largest change of a correction term during the last cycle.
    pub(crate) correction_change: f64,
}

impl<'a> Projector<'a> {
    pub(crate) fn new(marginals: &'a Marginals) -> Self {
        Projector {
            marginals,
            row_corr: DVector::zeros(marginals.rows()),
            col_corr: DVector::zeros(marginals.cols()),
            correction_change: 0.0,
        }
    }

    pub(crate) fn cycle(&mut self, log_gamma: &mut DMatrix<f64>) -> Result<()> {
        let capped = matches!(self.marginals.mode(), MarginalMode::Inequality { .. });
        let p = self.marginals.p();
        let q = self.marginals.q();
        let mut moved = 0.0_f64;

        for i in 0..log_gamma.nrows() {
            let shift = if p[i] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let lse = row_lse(log_gamma, i);
                if lse == f64::NEG_INFINITY {
                    if capped {
                        0.0
                    } else {
                        return Err(Error::KernelUnderflow);
                    }
                } else if capped {
                    let a = (p[i].ln() - lse - self.row_corr[i]).min(0.0);
                    let s = self.row_corr[i] + a;
                    moved = moved.max((self.row_corr[i] + a).abs());
                    self.row_corr[i] = -a;
                    s
                } else {
                    p[i].ln() - lse
                }
            };
            if shift != 0.0 {
                log_gamma.row_mut(i).iter_mut().for_each(|x| *x += shift);
            }
        }

        for j in 0..log_gamma.ncols() {
            let shift = if q[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let lse = col_lse(log_gamma, j);
                if lse == f64::NEG_INFINITY {
                    if capped {
                        0.0
                    } else {
                        return Err(Error::KernelUnderflow);
                    }
                } else if capped {
                    let b = (q[j].ln() - lse - self.col_corr[j]).min(0.0);
                    let s = self.col_corr[j] + b;
                    moved = moved.max((self.col_corr[j] + b).abs());
                    self.col_corr[j] = -b;
                    s
                } else {
                    q[j].ln() - lse
                }
            };
            if shift != 0.0 {
                log_gamma.column_mut(j).iter_mut().for_each(|x| *x += shift);
            }
        }

        if let MarginalMode::Inequality { mass } = self.marginals.mode() {
            let total = super::logsumexp(log_gamma.iter().copied());
            if total == f64::NEG_INFINITY {
                return Err(Error::KernelUnderflow);
            }
            let shift = mass.ln() - total;
            log_gamma.iter_mut().for_each(|x| *x += shift);
        }
        self.correction_change = moved;
        Ok(())
    }
}

pub(crate) fn exp_plan(log_gamma: &DMatrix<f64>) -> DMatrix<f64> {
    log_gamma.map(f64::exp)
}

/// Largest amount by which a plan exceeds its row or column caps.
fn cap_excess(gamma: &DMatrix<f64>, marginals: &Marginals) -> f64 {
    let rows = (gamma.column_sum() - marginals.p()).max();
    let cols = (gamma.row_sum().transpose() - marginals.q()).max();
    rows.max(cols).max(0.0)
}

/// Entropic partial OT: transports total mass `s` with row sums `≤ p` and
/// column sums `≤ q`, by KL Dykstra cycles started from `exp(−cost/ε)`.
///
/// Stops once the caps are met to `tol` and one cycle moves neither a finite
/// entry of `log Γ` nor a correction term by more than `tol`, or after
/// `outer_iters` cycles. Plan-space change is not a usable test at small ε:
/// mass can creep between entries that are still exponentially small.
pub fn partial_ot_dykstra(
    cost: &DMatrix<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    marginals.check_shape(cost.nrows(), cost.ncols())?;
    if !matches!(marginals.mode(), MarginalMode::Inequality { .. }) {
        return Err(Error::invalid("partial transport needs inequality marginals"));
    }
    if cost.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
        return Err(Error::invalid("cost contains NaN or -inf"));
    }

    let mut log_gamma = cost.map(|c| -c / cfg.epsilon);
    let mut projector = Projector::new(marginals);
    let mut gamma = exp_plan(&log_gamma);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.outer_iters {
        let before = log_gamma.clone();
        projector.cycle(&mut log_gamma)?;
        iterations += 1;
        let change = before
            .iter()
            .zip(log_gamma.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        gamma = exp_plan(&log_gamma);
        trace.push(cost.dot(&gamma));
        if change.max(projector.correction_change) < cfg.tol && cap_excess(&gamma, marginals) < cfg.tol {
            converged = true;
            break;
        }
    }
    round_to_feasible(&mut gamma, marginals);
    Ok(TransportPlan {
        gamma,
        marginals: marginals.clone(),
        objective_trace: trace,
        iterations,
        converged,
    })
}
