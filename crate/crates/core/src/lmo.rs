//! Lagrange-multiplier optimization over the virtual uplink.
//!
//! Each UT is described by one multiplier `lambda_k >= 0` with
//! `sum lambda_k = P`; the multipliers act as virtual uplink powers. With
//! `s_k = lambda_k beta_k / sigma_k^2` and `C = sum_i s_i g_i g_i^H + I` the
//! virtual rates are `r_k = -log2(1 - s_k g_k^H C^{-1} g_k)`. The multipliers
//! are optimized by MM, then turned into downlink precoders in closed form.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::DesignCsi;
use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, CMatrix, HpdFactor};
use crate::precoder::{steering_matrix, PrecoderMatrix, SolveOptions, SolveTrace};

/// Relative tolerance on `sum lambda = P`.
pub const SIMPLEX_RTOL: f64 = 1e-9;
/// Multipliers below `ACTIVITY_THRESHOLD * P` are treated as unserved.
pub const ACTIVITY_THRESHOLD: f64 = 1e-12;
/// Floor applied to the argument of the logarithm in the lower rate bound.
pub const LOWER_BOUND_FLOOR: f64 = 1e-12;

const VMMSE_FLOOR: f64 = 1e-15;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    lambda: Vec<f64>,
    budget: f64,
}

impl Multipliers {
    pub fn new(lambda: Vec<f64>, budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::Argument(format!("budget must be positive, got {budget}")));
        }
        if lambda.is_empty() {
            return Err(Error::Argument("no multipliers".into()));
        }
        if lambda.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Argument("multipliers must be finite and nonnegative".into()));
        }
        let total: f64 = lambda.iter().sum();
        if (total - budget).abs() > SIMPLEX_RTOL * budget {
            return Err(Error::Argument(format!(
                "multipliers sum to {total}, expected {budget}"
            )));
        }
        Ok(Self { lambda, budget })
    }

    /// `P/K` for every UT.
    pub fn uniform(k: usize, budget: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("no multipliers".into()));
        }
        Self::new(vec![budget / k as f64; k], budget)
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Minorizer coefficients of every virtual rate at the current multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct LmoConstants {
    /// `psi[(k, i)] = |g_i^H u_k|^2 / VMMSE_k`.
    pub psi: DMatrix<f64>,
    /// `sum_i psi[(i, k)]`.
    pub psi_colsum: Vec<f64>,
    pub chi: Vec<f64>,
    pub delta: Vec<f64>,
    pub vmmse: Vec<f64>,
    /// Virtual rates at the expansion point.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPrecoder {
    /// Unit-norm directions (zero for unserved UTs).
    pub w_bar: CMatrix,
    pub gamma: Vec<f64>,
    pub q: Vec<f64>,
    /// Coupling matrix restricted to the active UTs.
    pub coupling: DMatrix<f64>,
    /// Indices of the served UTs, in order.
    pub active: Vec<usize>,
}

fn check_stats<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Result<()> {
    if lam.len() != stats.len() {
        return Err(Error::Argument(format!(
            "{} multipliers for {} UTs",
            lam.len(),
            stats.len()
        )));
    }
    Ok(())
}

/// `s_k = lambda_k beta_k / sigma_k^2`.
fn uplink_snr<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Vec<f64> {
    lam.lambda
        .iter()
        .zip(stats)
        .map(|(l, s)| l * s.beta() / s.sigma2())
        .collect()
}

struct VirtualUplink {
    s: Vec<f64>,
    /// Columns `x_k = C^{-1} g_k`.
    x: CMatrix,
    /// `[i, k] = g_i^H x_k`.
    gx: CMatrix,
    vmmse: Vec<f64>,
}

fn virtual_uplink<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Result<VirtualUplink> {
    check_stats(lam, stats)?;
    let g = steering_matrix(stats);
    let s = uplink_snr(lam, stats);
    let c = weighted_gram(&g, &s, 1.0);
    let factor = HpdFactor::new(c)
        .ok_or_else(|| Error::Numeric("virtual uplink covariance is not positive definite".into()))?;
    let x = factor.solve(&g);
    let gx = g.adjoint() * &x;
    let mut vmmse = Vec::with_capacity(s.len());
    for (k, &sk) in s.iter().enumerate() {
        let v = 1.0 - sk * gx[(k, k)].re;
        if !(v > VMMSE_FLOOR) || v > 1.0 + 1e-12 {
            return Err(Error::Numeric(format!("VMMSE of UT {k} is {v}")));
        }
        vmmse.push(v.min(1.0));
    }
    Ok(VirtualUplink { s, x, gx, vmmse })
}

/// Virtual uplink rates `-log2 VMMSE_k`.
pub fn virtual_rates<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Result<Vec<f64>> {
    Ok(virtual_uplink(lam, stats)?
        .vmmse
        .iter()
        .map(|v| -v.log2())
        .collect())
}

/// Virtual rates via `log2 det C - log2 det C_{-k}`; one factorization per UT.
pub fn virtual_rates_logdet<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Result<Vec<f64>> {
    check_stats(lam, stats)?;
    let g = steering_matrix(stats);
    let s = uplink_snr(lam, stats);
    let logdet = |weights: &[f64]| -> Result<f64> {
        HpdFactor::new(weighted_gram(&g, weights, 1.0))
            .map(|f| f.log2_det())
            .ok_or_else(|| Error::Numeric("virtual uplink covariance is not positive definite".into()))
    };
    let full = logdet(&s)?;
    (0..s.len())
        .into_par_iter()
        .map(|k| {
            let mut without = s.clone();
            without[k] = 0.0;
            Ok(full - logdet(&without)?)
        })
        .collect()
}

/// Minorizer coefficients at `lam_n`, sharing one factorization across UTs.
pub fn lmo_constants<C: DesignCsi>(lam_n: &Multipliers, stats: &[C]) -> Result<LmoConstants> {
    let up = virtual_uplink(lam_n, stats)?;
    let k_count = up.s.len();
    let mut psi = DMatrix::zeros(k_count, k_count);
    let mut chi = Vec::with_capacity(k_count);
    let mut delta = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let sk = up.s[k];
        let v = up.vmmse[k];
        // u_k = sqrt(s_k) x_k
        for i in 0..k_count {
            psi[(k, i)] = sk * up.gx[(i, k)].norm_sqr() / v;
        }
        chi.push((sk.sqrt() * up.gx[(k, k)].re / v).max(0.0));
        delta.push((sk * up.x.column(k).norm_squared() + 1.0) / v);
    }
    let psi_colsum = (0..k_count).map(|k| psi.column(k).sum()).collect();
    let rates = up.vmmse.iter().map(|v| -v.log2()).collect();
    Ok(LmoConstants {
        psi,
        psi_colsum,
        chi,
        delta,
        vmmse: up.vmmse,
        rates,
    })
}

/// Value of every minorizer `h_k` at multipliers `lam`.
pub fn lmo_minorizer<C: DesignCsi>(
    consts: &LmoConstants,
    lam: &Multipliers,
    stats: &[C],
) -> Vec<f64> {
    let s = uplink_snr(lam, stats);
    (0..s.len())
        .map(|k| {
            let quad: f64 = (0..s.len()).map(|i| consts.psi[(k, i)] * s[i]).sum();
            let inner = quad - 2.0 * consts.chi[k] * s[k].sqrt() + consts.delta[k];
            -inner / LN_2 + 1.0 / LN_2 + consts.rates[k]
        })
        .collect()
}

/// Maximizer of the summed minorizers over the simplex, together with the
/// multiplier `nu` of the budget constraint.
pub fn lmo_update_with_nu<C: DesignCsi>(
    consts: &LmoConstants,
    stats: &[C],
    p: f64,
) -> Result<(Multipliers, f64)> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Argument(format!("power must be positive, got {p}")));
    }
    let k_count = stats.len();
    if consts.chi.len() != k_count || consts.psi_colsum.len() != k_count {
        return Err(Error::Argument("constants and stats disagree on K".into()));
    }
    let ratio: Vec<f64> = stats.iter().map(|s| s.beta() / s.sigma2()).collect();
    let c: Vec<f64> = (0..k_count).map(|k| consts.psi_colsum[k] * ratio[k]).collect();
    let e: Vec<f64> = (0..k_count).map(|k| consts.chi[k].powi(2) * ratio[k]).collect();
    if consts
        .chi
        .iter()
        .chain(&c)
        .chain(&e)
        .any(|x| !x.is_finite())
    {
        return Err(Error::Numeric("non-finite LMO constants".into()));
    }
    let active: Vec<usize> = (0..k_count).filter(|&k| e[k] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateDirection("every chi is zero".into()));
    }

    // With t = nu + min c over active UTs the total power is strictly
    // decreasing on t > 0, and is at most P at t_hi.
    let c_min = active.iter().map(|&k| c[k]).fold(f64::INFINITY, f64::min);
    let e_sum: f64 = active.iter().map(|&k| e[k]).sum();
    let lambda_at = |t: f64| -> Vec<f64> {
        (0..k_count)
            .map(|k| {
                if e[k] > 0.0 {
                    e[k] / (c[k] - c_min + t).powi(2)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut lo = 0.0;
    let mut hi = (e_sum / p).sqrt();
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let total: f64 = lambda_at(mid).iter().sum();
        if total > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if (total - p).abs() <= 1e-15 * p {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut lambda = lambda_at(t);
    let total: f64 = lambda.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric(format!("multiplier update produced total {total}")));
    }
    lambda.iter_mut().for_each(|l| *l *= p / total);
    Ok((Multipliers::new(lambda, p)?, t - c_min))
}

pub fn lmo_update<C: DesignCsi>(consts: &LmoConstants, stats: &[C], p: f64) -> Result<Multipliers> {
    lmo_update_with_nu(consts, stats, p).map(|(m, _)| m)
}

/// Runs the LMO iteration; the trace holds the virtual sum rate at `init`
/// and after each update.
pub fn solve_lmo<C: DesignCsi>(
    stats: &[C],
    init: &Multipliers,
    opts: SolveOptions,
) -> Result<(Multipliers, SolveTrace)> {
    let p = init.budget();
    let mut lam = init.clone();
    let mut consts = lmo_constants(&lam, stats)?;
    let mut objective: f64 = consts.rates.iter().sum();
    let mut trace = SolveTrace {
        objective_per_iteration: vec![objective],
        ..SolveTrace::default()
    };
    for it in 0..opts.max_iter {
        lam = lmo_update(&consts, stats, p)?;
        consts = lmo_constants(&lam, stats)?;
        let next: f64 = consts.rates.iter().sum();
        trace.objective_per_iteration.push(next);
        trace.iterations = it + 1;
        if (next - objective).abs() < opts.eps {
            trace.converged = true;
            break;
        }
        objective = next;
    }
    Ok((lam, trace))
}

/// Closed-form downlink precoders achieving the virtual rates of `lam`.
pub fn recover_precoders<C: DesignCsi>(
    lam: &Multipliers,
    stats: &[C],
) -> Result<(RecoveredPrecoder, PrecoderMatrix)> {
    let up = virtual_uplink(lam, stats)?;
    let k_count = up.s.len();
    let p = lam.budget();
    let m = up.x.nrows();
    let active: Vec<usize> = (0..k_count)
        .filter(|&k| lam.lambda[k] >= ACTIVITY_THRESHOLD * p)
        .collect();
    if active.is_empty() {
        return Err(Error::Recovery("no active UT".into()));
    }

    let mut w_bar = CMatrix::zeros(m, k_count);
    let mut gamma = vec![0.0; k_count];
    for &k in &active {
        let x = up.x.column(k);
        let norm = x.norm();
        if !(norm > 0.0) {
            return Err(Error::Recovery(format!("direction of UT {k} vanished")));
        }
        w_bar.set_column(k, &(x / Complex64::new(norm, 0.0)));
        gamma[k] = up.s[k] * up.gx[(k, k)].re / up.vmmse[k];
    }

    let g = steering_matrix(stats);
    let gw = g.adjoint() * &w_bar;
    let n = active.len();
    let coupling = DMatrix::from_fn(n, n, |r, col| {
        let (k, i) = (active[r], active[col]);
        let ratio = stats[k].beta() / stats[k].sigma2();
        if k == i {
            ratio * gw[(k, k)].norm_sqr() / gamma[k]
        } else {
            -ratio * gw[(k, i)].norm_sqr()
        }
    });
    let q_active = coupling
        .clone()
        .lu()
        .solve(&DVector::from_element(n, 1.0))
        .ok_or_else(|| Error::Recovery("coupling matrix is singular".into()))?;
    if q_active.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(Error::Recovery("negative or non-finite power in recovery".into()));
    }

    let mut q = vec![0.0; k_count];
    let mut cols = CMatrix::zeros(m, k_count);
    for (r, &k) in active.iter().enumerate() {
        q[k] = q_active[r];
        cols.set_column(k, &(w_bar.column(k) * Complex64::new(q[k].sqrt(), 0.0)));
    }
    let w = PrecoderMatrix::new(cols, p)
        .map_err(|e| Error::Recovery(format!("recovered precoder infeasible: {e}")))?;
    Ok((
        RecoveredPrecoder {
            w_bar,
            gamma,
            q,
            coupling,
            active,
        },
        w,
    ))
}

/// `||C^{-1} s_k g_k g_k^H w_k - gamma_k / (gamma_k + 1) w_k||` per UT; zero
/// for unserved UTs.
pub fn structure_residual<C: DesignCsi>(
    lam: &Multipliers,
    stats: &[C],
    rec: &RecoveredPrecoder,
    w: &PrecoderMatrix,
) -> Result<Vec<f64>> {
    let up = virtual_uplink(lam, stats)?;
    Ok((0..stats.len())
        .map(|k| {
            if !rec.active.contains(&k) {
                return 0.0;
            }
            let wk = w.column(k);
            let gw = stats[k].g().dotc(&wk);
            let lhs = up.x.column(k) * (gw * up.s[k]);
            let ratio = rec.gamma[k] / (rec.gamma[k] + 1.0);
            (lhs - wk * Complex64::new(ratio, 0.0)).norm()
        })
        .collect())
}

/// Water-filling `lambda_k = [level - sigma_k^2 / beta_k]^+` with
/// `sum lambda_k = p`. Floors are visited in ascending order, ties by index.
pub fn waterfilling<C: DesignCsi>(stats: &[C], p: f64) -> Result<Multipliers> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Argument(format!("power must be positive, got {p}")));
    }
    if stats.iter().any(|s| !(s.beta() > 0.0 && s.sigma2() > 0.0)) {
        return Err(Error::Argument("beta and sigma^2 must be positive".into()));
    }
    let floors: Vec<f64> = stats.iter().map(|s| s.sigma2() / s.beta()).collect();
    let mut order: Vec<usize> = (0..floors.len()).collect();
    order.sort_by(|&a, &b| floors[a].total_cmp(&floors[b]));

    let mut level = 0.0;
    let mut acc = 0.0;
    for (n, &k) in order.iter().enumerate() {
        acc += floors[k];
        let candidate = (p + acc) / (n + 1) as f64;
        if n > 0 && candidate <= floors[k] {
            break;
        }
        level = candidate;
    }
    let mut lambda: Vec<f64> = floors.iter().map(|f| (level - f).max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l *= p / total);
    Multipliers::new(lambda, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBounds {
    /// `log2 max(1 + s_k - s_k sum_{i!=k} s_i |g_i^H g_k|^2, floor)`.
    pub lower: Vec<f64>,
    /// `log2(1 + s_k)` per UT.
    pub upper: Vec<f64>,
    pub upper_sum: f64,
}

pub fn rate_bounds<C: DesignCsi>(lam: &Multipliers, stats: &[C]) -> Result<RateBounds> {
    check_stats(lam, stats)?;
    let g = steering_matrix(stats);
    let s = uplink_snr(lam, stats);
    let gram = g.adjoint() * &g;
    let lower = (0..s.len())
        .map(|k| {
            let leak: f64 = (0..s.len())
                .filter(|&i| i != k)
                .map(|i| s[i] * gram[(i, k)].norm_sqr())
                .sum();
            (1.0 + s[k] - s[k] * leak).max(LOWER_BOUND_FLOOR).log2()
        })
        .collect();
    let upper: Vec<f64> = s.iter().map(|x| (1.0 + x).log2()).collect();
    let upper_sum = upper.iter().sum();
    Ok(RateBounds {
        lower,
        upper,
        upper_sum,
    })
}
