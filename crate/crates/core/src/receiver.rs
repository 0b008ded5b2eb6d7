//! UT-side linear receivers and the instantaneous SINR they achieve.
//!
//! With the rank-one channel `H_k = d_k g_k^H` every receiver proportional to
//! `d_k` attains the SINR upper bound (USINR); the matched filter and the MMSE
//! receiver are the two canonical members of that family.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::precoder::PrecoderMatrix;

/// `|g_k^H w_i|^2` for every `i`.
fn beam_gains(w: &PrecoderMatrix, g_k: &CVector) -> Vec<f64> {
    (w.columns().adjoint() * g_k)
        .iter()
        .map(|x| x.norm_sqr())
        .collect()
}

/// Matched filter for the effective vector channel: `c_k = d_k`.
pub fn mf_receiver(d: &CVector) -> CVector {
    d.clone()
}

/// MMSE receiver `(g_k^H w_k / (sigma^2 + sum_i |w_i^H g_k|^2 ||d_k||^2)) d_k`.
pub fn mmse_receiver(
    w: &PrecoderMatrix,
    k: usize,
    g_k: &CVector,
    d_k: &CVector,
    sigma2: f64,
) -> CVector {
    let desired = g_k.dotc(&w.columns().column(k));
    let total: f64 = beam_gains(w, g_k).iter().sum();
    let scale = desired / (sigma2 + total * d_k.norm_squared());
    d_k * scale
}

/// Instantaneous DL SINR of UT `k` with receiver `c_k`.
pub fn instantaneous_sinr(
    w: &PrecoderMatrix,
    k: usize,
    g_k: &CVector,
    d_k: &CVector,
    c_k: &CVector,
    sigma2: f64,
) -> Result<f64> {
    let c_norm_sq = c_k.norm_squared();
    if c_norm_sq == 0.0 {
        return Err(Error::Argument("receiver vector is zero".into()));
    }
    let gains = beam_gains(w, g_k);
    let coupling = c_k.dotc(d_k).norm_sqr();
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, x)| x)
        .sum();
    Ok(gains[k] * coupling / (interference * coupling + sigma2 * c_norm_sq))
}

/// SINR upper bound reached by any receiver proportional to `d_k`; depends on
/// the draw only through `||d_k||^2`.
pub fn usinr(w: &PrecoderMatrix, k: usize, g_k: &CVector, d_norm_sq: f64, sigma2: f64) -> f64 {
    let gains = beam_gains(w, g_k);
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, x)| x)
        .sum();
    gains[k] * d_norm_sq / (interference * d_norm_sq + sigma2)
}

/// Mean-square error `E|c_k^H y_k - s_k|^2` of receiver `c_k`.
pub fn receiver_mse(
    w: &PrecoderMatrix,
    k: usize,
    g_k: &CVector,
    d_k: &CVector,
    c_k: &CVector,
    sigma2: f64,
) -> f64 {
    let gains = beam_gains(w, g_k);
    let cd = c_k.dotc(d_k);
    let desired: Complex64 = g_k.dotc(&w.columns().column(k));
    let total: f64 = gains.iter().sum();
    total * cd.norm_sqr() + sigma2 * c_k.norm_squared() - 2.0 * (desired * cd).re + 1.0
}
