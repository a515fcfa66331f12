use log::info;

use super::{expectation, steady_state_with, SteadyStateMethod, Superoperator};
use crate::error::{Error, Result};
use crate::fock::{Operator, TruncationConfig};

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOptions {
    pub rel_tol: f64,
    pub n_r_step: usize,
    pub n_r_cap: usize,
    pub n_a_step: usize,
    pub n_a_cap: usize,
    /// Observables below this magnitude at both sizes count as converged.
    pub abs_floor: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { rel_tol: 0.01, n_r_step: 5, n_r_cap: 60, n_a_step: 1, n_a_cap: 8, abs_floor: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergedTruncation {
    pub cfg: TruncationConfig,
    /// Observable at the accepted configuration.
    pub value: f64,
    /// Every configuration evaluated, in order.
    pub history: Vec<(TruncationConfig, f64)>,
}

/// Grows `n_r`, then `n_a`, until the steady-state observable changes by less
/// than `rel_tol` between consecutive sizes. The smaller of the two agreeing
/// sizes is returned.
///
/// `builder` produces the generator and the observable for a configuration.
pub fn converge_truncation<F>(base: TruncationConfig, mut builder: F, opts: &ConvergenceOptions) -> Result<ConvergedTruncation>
where
    F: FnMut(&TruncationConfig) -> Result<(Superoperator, Operator)>,
{
    if !(opts.rel_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rel_tol = {} must be > 0", opts.rel_tol)));
    }
    base.validate()?;
    let mut history = Vec::new();
    let mut eval = |cfg: &TruncationConfig, history: &mut Vec<(TruncationConfig, f64)>| -> Result<f64> {
        let (l, obs) = builder(cfg)?;
        let rho = steady_state_with(&l, SteadyStateMethod::Auto)?.rho;
        let v = expectation(&obs, &rho)?.re;
        info!("truncation {:?}: observable {v:.6}", cfg);
        history.push((*cfg, v));
        Ok(v)
    };
    let rel_change = |a: f64, b: f64| {
        let m = a.abs().max(b.abs());
        if m < opts.abs_floor {
            0.0
        } else {
            (a - b).abs() / m
        }
    };

    let mut cfg = base;
    let mut value = eval(&cfg, &mut history)?;
    let mut change = f64::NAN;
    loop {
        let next = TruncationConfig { n_r: cfg.n_r + opts.n_r_step, ..cfg };
        if next.n_r > opts.n_r_cap {
            return Err(Error::TruncationCap { cap: opts.n_r_cap, last_change: change });
        }
        let v = eval(&next, &mut history)?;
        change = rel_change(value, v);
        if change <= opts.rel_tol {
            break;
        }
        cfg = next;
        value = v;
    }
    loop {
        let next = TruncationConfig { n_a: cfg.n_a + opts.n_a_step, ..cfg };
        if next.n_a > opts.n_a_cap {
            return Err(Error::TruncationCap { cap: opts.n_a_cap, last_change: change });
        }
        let v = eval(&next, &mut history)?;
        change = rel_change(value, v);
        if change <= opts.rel_tol {
            break;
        }
        cfg = next;
        value = v;
    }
    Ok(ConvergedTruncation { cfg, value, history })
}
