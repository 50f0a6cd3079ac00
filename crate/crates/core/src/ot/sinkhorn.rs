use nalgebra::{DMatrix, DVector};

use super::{logsumexp, round_to_feasible, Marginals, MarginalMode, SolverConfig, TransportPlan};
use crate::error::{Error, Result};

/// Scalings outside `[1/BLOWUP, BLOWUP]` trigger the log-domain path.
const BLOWUP: f64 = 1e30;

/// Entropic OT with equality marginals.
///
/// Alternating row and column scalings of `exp(−cost/ε)`. Runs in the scaling
/// domain while the scalings stay in range and continues in the log domain
/// otherwise. `objective_trace` holds the dual objective after each column
/// sweep, which block-coordinate ascent never decreases.
pub fn sinkhorn(cost: &DMatrix<f64>, marginals: &Marginals, cfg: &SolverConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    marginals.check_shape(cost.nrows(), cost.ncols())?;
    if marginals.mode() != MarginalMode::Equality {
        return Err(Error::invalid("sinkhorn needs equality marginals"));
    }
    if cost.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
        return Err(Error::invalid("cost contains NaN or -inf"));
    }

    let mut state = Potentials::new(cost.nrows(), cost.ncols());
    let mut trace = Vec::new();
    let (iterations, converged) = match scaling_domain(cost, marginals, cfg, &mut state, &mut trace) {
        Some(done) => done,
        None => log_domain(cost, marginals, cfg, &mut state, &mut trace)?,
    };

    let eps = cfg.epsilon;
    let mut gamma = DMatrix::from_fn(cost.nrows(), cost.ncols(), |i, j| {
        ((state.f[i] + state.g[j] - cost[(i, j)]) / eps).exp()
    });
    if gamma.iter().any(|x| !x.is_finite()) || gamma.sum() == 0.0 {
        return Err(Error::KernelUnderflow);
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

/// Dual potentials `f = ε log u`, `g = ε log v`, plus the sweeps done so far.
struct Potentials {
    f: DVector<f64>,
    g: DVector<f64>,
    sweeps: usize,
}

impl Potentials {
    fn new(n: usize, m: usize) -> Self {
        Potentials { f: DVector::zeros(n), g: DVector::zeros(m), sweeps: 0 }
    }
}

fn dual_value(state: &Potentials, marginals: &Marginals, eps: f64, mass: f64) -> f64 {
    let weighted = |w: &DVector<f64>, v: &DVector<f64>| -> f64 {
        w.iter().zip(v.iter()).filter(|(&wi, _)| wi > 0.0).map(|(wi, vi)| wi * vi).sum()
    };
    weighted(marginals.p(), &state.f) + weighted(marginals.q(), &state.g) - eps * mass
}

/// Returns `None` when the scalings leave the safe range; `state` then holds
/// the last potentials that were still finite.
fn scaling_domain(
    cost: &DMatrix<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
    state: &mut Potentials,
    trace: &mut Vec<f64>,
) -> Option<(usize, bool)> {
    let eps = cfg.epsilon;
    let kernel = cost.map(|c| (-c / eps).exp());
    if kernel.column_sum().iter().any(|&r| r == 0.0) || kernel.row_sum().iter().any(|&c| c == 0.0) {
        return None;
    }
    let p = marginals.p();
    let q = marginals.q();
    let in_range = |x: f64| x == 0.0 || (x.is_finite() && x < BLOWUP && x > 1.0 / BLOWUP);
    let mut v = DVector::from_element(cost.ncols(), 1.0);
    let mut u;
    while state.sweeps < cfg.outer_iters {
        let kv = &kernel * &v;
        u = p.zip_map(&kv, |pi, k| if pi == 0.0 { 0.0 } else { pi / k });
        let ktu = kernel.tr_mul(&u);
        let v_next = q.zip_map(&ktu, |qj, k| if qj == 0.0 { 0.0 } else { qj / k });
        if !u.iter().chain(v_next.iter()).all(|&x| in_range(x)) {
            return None;
        }
        v = v_next;
        state.sweeps += 1;
        state.f = u.map(|x| eps * x.ln());
        state.g = v.map(|x| eps * x.ln());
        // Column sums are exact after the v update, so the total mass is Σq.
        trace.push(dual_value(state, marginals, eps, q.sum()));
        let rows = u.component_mul(&(&kernel * &v));
        if (rows - p).abs().sum() < cfg.tol {
            return Some((state.sweeps, true));
        }
    }
    Some((state.sweeps, false))
}

fn log_domain(
    cost: &DMatrix<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
    state: &mut Potentials,
    trace: &mut Vec<f64>,
) -> Result<(usize, bool)> {
    let eps = cfg.epsilon;
    let (n, m) = cost.shape();
    let p = marginals.p();
    let q = marginals.q();
    let log_p = p.map(f64::ln);
    let log_q = q.map(f64::ln);
    // The scaling phase may have left potentials at -inf rows; restart those.
    state.f.iter_mut().for_each(|x| {
        if !x.is_finite() {
            *x = 0.0
        }
    });
    state.g.iter_mut().for_each(|x| {
        if !x.is_finite() {
            *x = 0.0
        }
    });

    let row_lse = |f: &DVector<f64>, g: &DVector<f64>, i: usize| {
        logsumexp((0..m).map(|j| (f[i] + g[j] - cost[(i, j)]) / eps))
    };

    while state.sweeps < cfg.outer_iters {
        for i in 0..n {
            if p[i] == 0.0 {
                state.f[i] = f64::NEG_INFINITY;
                continue;
            }
            let lse = logsumexp((0..m).map(|j| (state.g[j] - cost[(i, j)]) / eps));
            if lse == f64::NEG_INFINITY {
                return Err(Error::KernelUnderflow);
            }
            state.f[i] = eps * (log_p[i] - lse);
        }
        for j in 0..m {
            if q[j] == 0.0 {
                state.g[j] = f64::NEG_INFINITY;
                continue;
            }
            let lse = logsumexp((0..n).map(|i| (state.f[i] - cost[(i, j)]) / eps));
            if lse == f64::NEG_INFINITY {
                return Err(Error::KernelUnderflow);
            }
            state.g[j] = eps * (log_q[j] - lse);
        }
        state.sweeps += 1;
        trace.push(dual_value(state, marginals, eps, q.sum()));
        let err: f64 = (0..n)
            .map(|i| {
                let r = if p[i] == 0.0 { 0.0 } else { row_lse(&state.f, &state.g, i).exp() };
                (r - p[i]).abs()
            })
            .sum();
        if err < cfg.tol {
            return Ok((state.sweeps, true));
        }
    }
    Ok((state.sweeps, false))
}
