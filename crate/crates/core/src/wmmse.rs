//! WMMSE design against the Jensen upper bound of the ergodic rate, where
//! `||d_k||^2` is replaced by its mean `beta_k`.
//!
//! Only the second-order statistics (`beta_k`, `g_k`, `sigma_k^2`) are used, so
//! the solver is generic over [`DesignCsi`].

use num_complex::Complex64;

use crate::channel::DesignCsi;
use crate::error::{Error, Result};
use crate::precoder::{
    regularized_update, steering_matrix, PrecoderMatrix, SolveOptions, SolveTrace,
};
use crate::rates::{signal_interference, upper_bound_rates};

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseConstants {
    pub a_tilde: Vec<f64>,
    pub b_tilde: Vec<Complex64>,
}

/// `a~_k = beta_k / I_k - beta_k / T_k`, `b~_k = beta_k g_k^H w_k / I_k`, with
/// `I_k = sigma_k^2 + beta_k sum_{i!=k} |g_k^H w_i|^2` and
/// `T_k = I_k + beta_k |g_k^H w_k|^2`.
pub fn wmmse_constants<C: DesignCsi>(w: &PrecoderMatrix, stats: &[C]) -> Result<WmmseConstants> {
    if w.num_uts() != stats.len() {
        return Err(Error::Argument(format!(
            "precoder has {} columns for {} UTs",
            w.num_uts(),
            stats.len()
        )));
    }
    let g = steering_matrix(stats);
    let cross = w.cross_gains(&g);
    let terms = signal_interference(w, &g);
    let mut a_tilde = Vec::with_capacity(stats.len());
    let mut b_tilde = Vec::with_capacity(stats.len());
    for (k, st) in stats.iter().enumerate() {
        let (sig, int) = terms[k];
        let beta = st.beta();
        let i_term = st.sigma2() + beta * int;
        let t_term = i_term + beta * sig;
        if !(i_term > 0.0 && i_term.is_finite()) {
            return Err(Error::Numeric(format!(
                "interference-plus-noise of UT {k} is {i_term}"
            )));
        }
        // beta / I - beta / T without cancellation.
        a_tilde.push(beta * beta * sig / (i_term * t_term));
        b_tilde.push(cross[(k, k)] * (beta / i_term));
    }
    Ok(WmmseConstants { a_tilde, b_tilde })
}

/// Iterates the WMMSE update from `init`. The trace records the upper-bound
/// sum rate at the initial point and after each update.
pub fn solve_wmmse<C: DesignCsi>(
    stats: &[C],
    init: &PrecoderMatrix,
    opts: SolveOptions,
) -> Result<(PrecoderMatrix, SolveTrace)> {
    let g = steering_matrix(stats);
    let p = init.power_budget();
    let mut w = init.clone();
    let mut objective = upper_bound_rates(&w, stats)?.sum_rate;
    let mut trace = SolveTrace {
        objective_per_iteration: vec![objective],
        ..SolveTrace::default()
    };
    for it in 0..opts.max_iter {
        let consts = wmmse_constants(&w, stats)?;
        w = PrecoderMatrix::new(
            regularized_update(&consts.a_tilde, &consts.b_tilde, &g, p)?,
            p,
        )?;
        let next = upper_bound_rates(&w, stats)?.sum_rate;
        trace.objective_per_iteration.push(next);
        trace.iterations = it + 1;
        if (next - objective).abs() < opts.eps {
            trace.converged = true;
            break;
        }
        objective = next;
    }
    Ok((w, trace))
}
