//! Ergodic and upper-bound rate evaluation, plus the ASLNR and LoS-only
//! reference designs.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelBatch, DesignCsi, UtChannelStats};
use crate::error::{Error, Result};
use crate::linalg::{mean_and_stderr, CMatrix, CVector, HpdFactor};
use crate::precoder::{steering_matrix, PrecoderMatrix, SolveOptions, SolveTrace};
use crate::wmmse::solve_wmmse;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    MonteCarlo,
    UpperBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// bits/s/Hz per UT.
    pub per_ut_rate: Vec<f64>,
    pub sum_rate: f64,
    /// Standard error of each per-UT estimate (zero for closed forms).
    pub estimator_stderr: Vec<f64>,
    pub method: RateMethod,
}

impl RateReport {
    /// Standard error of the sum-rate estimate, computed per sample.
    pub fn sum_stderr(&self) -> f64 {
        self.estimator_stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Received power terms per UT: `(|g_k^H w_k|^2, sum_{i != k} |g_k^H w_i|^2)`.
pub(crate) fn signal_interference(w: &PrecoderMatrix, g: &CMatrix) -> Vec<(f64, f64)> {
    let cross = w.cross_gains(g);
    (0..cross.nrows())
        .map(|k| {
            let mut interference = 0.0;
            for i in 0..cross.ncols() {
                if i != k {
                    interference += cross[(k, i)].norm_sqr();
                }
            }
            (cross[(k, k)].norm_sqr(), interference)
        })
        .collect()
}

/// Per-sample rates `log2(1 + USINR_k)` of UT `k`, in sample order.
pub(crate) fn per_sample_rates(
    signal: f64,
    interference: f64,
    sigma2: f64,
    batch: &ChannelBatch,
    k: usize,
) -> Vec<f64> {
    (0..batch.num_samples())
        .map(|s| {
            let n = batch.gain(s, k);
            (1.0 + signal * n / (interference * n + sigma2)).log2()
        })
        .collect()
}

/// Monte-Carlo estimate of the ergodic rates of precoder `w` over `batch`.
pub fn ergodic_sum_rate(
    w: &PrecoderMatrix,
    stats: &[UtChannelStats],
    batch: &ChannelBatch,
) -> Result<RateReport> {
    check_dims(w, stats)?;
    if batch.num_uts() != stats.len() {
        return Err(Error::Argument(format!(
            "batch has {} UTs, stats have {}",
            batch.num_uts(),
            stats.len()
        )));
    }
    let g = steering_matrix(stats);
    let terms = signal_interference(w, &g);
    let per_ut: Vec<(f64, f64)> = (0..stats.len())
        .into_par_iter()
        .map(|k| {
            let (sig, int) = terms[k];
            mean_and_stderr(&per_sample_rates(sig, int, stats[k].sigma2(), batch, k))
        })
        .collect();
    Ok(report(
        per_ut.iter().map(|x| x.0).collect(),
        per_ut.iter().map(|x| x.1).collect(),
        RateMethod::MonteCarlo,
    ))
}

/// Jensen upper bound: `||d_k||^2` replaced by its mean `beta_k`.
pub fn upper_bound_rates<C: DesignCsi>(w: &PrecoderMatrix, stats: &[C]) -> Result<RateReport> {
    check_dims(w, stats)?;
    let g = steering_matrix(stats);
    let rates: Vec<f64> = signal_interference(w, &g)
        .iter()
        .zip(stats)
        .map(|(&(sig, int), st)| {
            (1.0 + sig * st.beta() / (int * st.beta() + st.sigma2())).log2()
        })
        .collect();
    let k = rates.len();
    Ok(report(rates, vec![0.0; k], RateMethod::UpperBound))
}

fn report(per_ut_rate: Vec<f64>, estimator_stderr: Vec<f64>, method: RateMethod) -> RateReport {
    RateReport {
        sum_rate: per_ut_rate.iter().sum(),
        per_ut_rate,
        estimator_stderr,
        method,
    }
}

fn check_dims<C: DesignCsi>(w: &PrecoderMatrix, stats: &[C]) -> Result<()> {
    if w.num_uts() != stats.len() {
        return Err(Error::Argument(format!(
            "precoder has {} columns for {} UTs",
            w.num_uts(),
            stats.len()
        )));
    }
    if let Some(s) = stats.first() {
        if s.g().len() != w.num_antennas() {
            return Err(Error::Argument(format!(
                "precoder has {} rows, array has {} elements",
                w.num_antennas(),
                s.g().len()
            )));
        }
    }
    Ok(())
}

/// Average signal-to-leakage-and-noise ratio precoders with equal power
/// `P/K`: `w_k ∝ (sum_i beta_i g_i g_i^H + (sigma_k^2 / p_k) I)^{-1} g_k`.
pub fn aslnr_precoders<C: DesignCsi>(stats: &[C], p: f64) -> Result<PrecoderMatrix> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Argument(format!("power must be positive, got {p}")));
    }
    if stats.is_empty() {
        return Err(Error::Argument("no UTs".into()));
    }
    let k = stats.len();
    let pk = p / k as f64;
    let g = steering_matrix(stats);
    let betas: Vec<f64> = stats.iter().map(|s| s.beta()).collect();
    let gram = crate::linalg::weighted_gram(&g, &betas, 0.0);

    // T_k differs across UTs only through sigma_k^2; factor each distinct shift once.
    let mut factors: Vec<(u64, HpdFactor)> = Vec::new();
    let mut cols = CMatrix::zeros(g.nrows(), k);
    for (j, st) in stats.iter().enumerate() {
        let shift = st.sigma2() / pk;
        let idx = match factors.iter().position(|(bits, _)| *bits == shift.to_bits()) {
            Some(i) => i,
            None => {
                let mut t = gram.clone();
                for i in 0..t.nrows() {
                    t[(i, i)] += Complex64::new(shift, 0.0);
                }
                let f = HpdFactor::new(t)
                    .ok_or_else(|| Error::Numeric("ASLNR matrix is not positive definite".into()))?;
                factors.push((shift.to_bits(), f));
                factors.len() - 1
            }
        };
        let v: CVector = factors[idx].1.solve_vec(&st.g().clone_owned());
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numeric(format!("ASLNR direction of UT {j} vanished")));
        }
        cols.set_column(j, &(v * Complex64::new(pk.sqrt() / norm, 0.0)));
    }
    PrecoderMatrix::new(cols, p)
}

/// Design-side view of a UT keeping only its line-of-sight power.
#[derive(Debug, Clone)]
pub struct LosOnlyCsi<'a> {
    stats: &'a UtChannelStats,
}

impl DesignCsi for LosOnlyCsi<'_> {
    fn beta(&self) -> f64 {
        self.stats.los_power()
    }

    fn g(&self) -> &CVector {
        self.stats.g()
    }

    fn sigma2(&self) -> f64 {
        self.stats.sigma2()
    }
}

/// Upper-bound (WMMSE) design run on the line-of-sight power
/// `kappa beta / (kappa + 1)` only. The result is meant to be scored on the
/// full Rician channel.
pub fn los_only_precoders(
    stats: &[UtChannelStats],
    p: f64,
    opts: SolveOptions,
) -> Result<(PrecoderMatrix, SolveTrace)> {
    let los: Vec<LosOnlyCsi<'_>> = stats.iter().map(|stats| LosOnlyCsi { stats }).collect();
    let init = PrecoderMatrix::matched_filter(&los, p)?;
    solve_wmmse(&los, &init, opts)
}
