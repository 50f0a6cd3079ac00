use nalgebra::DMatrix;

use super::partial::exp_plan;
use super::{round_to_feasible, violation_of, Marginals, MarginalMode, Projector, SolverConfig, TransportPlan, LOG_FLOOR};
use crate::affinity::{gw_linearized_cost, gw_objective, CostMatrices};
use crate::error::{Error, Result};

const POLISH_CYCLES: usize = 10_000;
const POLISH_TOL: f64 = 1e-12;

/// Partial graph matching by inexact proximal point iterations.
///
/// Each step solves `min ⟨C̄ⁿ − ε log Γⁿ, Γ⟩ + εH(Γ)` over the partial
/// transport polytope with `C̄ⁿ = L(Γⁿ) + Cpq`, using `inner_iters` Dykstra
/// cycles on the kernel `Γⁿ ∘ exp(−C̄ⁿ/ε)`. `objective_trace` records
/// `⟨Cpq, Γ⟩ + ⟨L(Γ), Γ⟩` after every step.
pub fn pgm_proximal(costs: &CostMatrices, marginals: &Marginals, cfg: &SolverConfig) -> Result<TransportPlan> {
    pgm_proximal_from(costs, marginals, cfg, &marginals.independent_plan())
}

/// [`pgm_proximal`] started from `init` instead of `p qᵀ`.
pub fn pgm_proximal_from(
    costs: &CostMatrices,
    marginals: &Marginals,
    cfg: &SolverConfig,
    init: &DMatrix<f64>,
) -> Result<TransportPlan> {
    if !matches!(marginals.mode(), MarginalMode::Inequality { .. }) {
        return Err(Error::invalid("partial graph matching needs inequality marginals"));
    }
    proximal(costs, marginals, cfg, init, |g| Ok(costs.cpq.dot(g) + gw_objective(costs, g)?))
}

/// Full graph matching, `min ‖Cp − Γ̂ Cq Γ̂ᵀ‖_F + ⟨Cpq, Γ̂⟩`, where `Γ̂` is the
/// plan rescaled to doubly (sub)stochastic form.
///
/// Uses the same proximal scheme as [`pgm_proximal`]; with equality marginals
/// the inner projection is a Sinkhorn sweep. `objective_trace` records the
/// Frobenius-form objective of `Γ̂`.
pub fn fgm_solve(costs: &CostMatrices, marginals: &Marginals, cfg: &SolverConfig) -> Result<TransportPlan> {
    let scale = 1.0 / cap(marginals);
    proximal(costs, marginals, cfg, &marginals.independent_plan(), |g| fgm_objective(costs, &(g * scale)))
}

/// `‖Cp − Γ̂ Cq Γ̂ᵀ‖_F + ⟨Cpq, Γ̂⟩` for a plan already in (sub)stochastic form.
pub fn fgm_objective(costs: &CostMatrices, gamma_hat: &DMatrix<f64>) -> Result<f64> {
    if gamma_hat.shape() != (costs.rows(), costs.cols()) {
        return Err(Error::shape(
            format!("{}x{} plan", costs.rows(), costs.cols()),
            format!("{}x{}", gamma_hat.nrows(), gamma_hat.ncols()),
        ));
    }
    let projected = gamma_hat * &costs.cq * gamma_hat.transpose();
    Ok((&costs.cp - projected).norm() + costs.cpq.dot(gamma_hat))
}

fn cap(marginals: &Marginals) -> f64 {
    marginals.p().iter().chain(marginals.q().iter()).fold(0.0_f64, |a, &x| a.max(x))
}

fn proximal<F>(
    costs: &CostMatrices,
    marginals: &Marginals,
    cfg: &SolverConfig,
    init: &DMatrix<f64>,
    objective: F,
) -> Result<TransportPlan>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
{
    cfg.validate()?;
    marginals.check_shape(costs.rows(), costs.cols())?;
    let eps = cfg.epsilon;
    if init.shape() != (costs.rows(), costs.cols()) {
        return Err(Error::shape(
            format!("{}x{} initial plan", costs.rows(), costs.cols()),
            format!("{}x{}", init.nrows(), init.ncols()),
        ));
    }
    if init.iter().any(|&g| !g.is_finite() || g < 0.0) {
        return Err(Error::invalid("initial plan must be finite and non-negative"));
    }
    let mut gamma = init.clone();
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.outer_iters {
        let linear = gw_linearized_cost(costs, &gamma)? + &costs.cpq;
        let mut log_kernel = gamma.zip_map(&linear, |g, c| g.max(LOG_FLOOR).ln() - c / eps);
        let mut projector = Projector::new(marginals);
        for _ in 0..cfg.inner_iters {
            projector.cycle(&mut log_kernel)?;
        }
        let next = exp_plan(&log_kernel);
        let change = (&next - &gamma).abs().sum();
        // Entries growing in log space matter later even while their mass is
        // negligible; those sinking below the floor never will.
        let growth = gamma
            .iter()
            .zip(log_kernel.iter())
            .fold(0.0_f64, |acc, (g, l)| acc.max(l - g.max(LOG_FLOOR).ln()));
        gamma = next;
        iterations += 1;
        trace.push(objective(&gamma)?);
        if change < cfg.tol && growth < cfg.tol {
            converged = true;
            break;
        }
    }
    polish(&mut gamma, marginals)?;
    round_to_feasible(&mut gamma, marginals);
    Ok(TransportPlan {
        gamma,
        marginals: marginals.clone(),
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// KL projection of the last iterate onto the constraint set. Scaling never
/// revives zero entries, so the rounding that follows has almost nothing left
/// to fix.
fn polish(gamma: &mut DMatrix<f64>, marginals: &Marginals) -> Result<()> {
    let mut log_gamma = gamma.map(|g| if g > 0.0 { g.ln() } else { f64::NEG_INFINITY });
    let mut projector = Projector::new(marginals);
    for _ in 0..POLISH_CYCLES {
        projector.cycle(&mut log_gamma)?;
        *gamma = exp_plan(&log_gamma);
        let v = violation_of(gamma, marginals);
        if v.rows.max(v.cols) < POLISH_TOL {
            break;
        }
    }
    Ok(())
}
