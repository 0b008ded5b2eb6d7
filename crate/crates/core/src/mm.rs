//! Minorization-maximization design of the precoders against the
//! Monte-Carlo (sample-average) ergodic sum rate.
//!
//! Each iteration replaces every rate `R_k` by a concave quadratic minorizer
//! built from the per-sample MMSE receivers at the current iterate, then
//! maximizes the sum of minorizers in closed form via
//! [`regularized_update`]. The sample set is fixed for the whole solve, so the
//! sample-average objective is non-decreasing.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{sample_channel, ChannelBatch, DesignCsi, UtChannelStats};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, pairwise_sum_complex};
use crate::precoder::{
    regularized_update, steering_matrix, PrecoderMatrix, SolveOptions, SolveTrace,
};
use crate::rates::ergodic_sum_rate;

/// Per-sample MMSE values at or below this are treated as a numerical failure.
const MMSE_FLOOR: f64 = 1e-15;

/// Sample-average coefficients of the minorizer of every `R_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmConstants {
    pub a: Vec<f64>,
    pub b: Vec<Complex64>,
    pub c: Vec<f64>,
}

/// Minorizer coefficients at precoder `w`, averaged over `batch`.
///
/// Per sample, with `n = ||d_k||^2`, `I = sigma^2 + n sum_{i!=k} |g_k^H w_i|^2`
/// and `T = I + n |g_k^H w_k|^2`, the MMSE receiver gives `MMSE = I / T` and
///
/// ```text
/// a = n^2 |g_k^H w_k|^2 / (T I)
/// b = n g_k^H w_k / I
/// c = (sigma^2 n |g_k^H w_k|^2 / T^2 + 1) T / I
/// ```
pub fn mm_constants(
    w: &PrecoderMatrix,
    batch: &ChannelBatch,
    stats: &[UtChannelStats],
) -> Result<MmConstants> {
    let k_count = stats.len();
    if batch.num_uts() != k_count || w.num_uts() != k_count {
        return Err(Error::Argument("batch, precoder and stats disagree on K".into()));
    }
    let g = steering_matrix(stats);
    let cross = w.cross_gains(&g);
    let s_count = batch.num_samples();

    let per_ut: Vec<Result<(f64, Complex64, f64)>> = (0..k_count)
        .into_par_iter()
        .map(|k| {
            let desired = cross[(k, k)];
            let signal = desired.norm_sqr();
            let interference: f64 = (0..k_count)
                .filter(|&i| i != k)
                .map(|i| cross[(k, i)].norm_sqr())
                .sum();
            let sigma2 = stats[k].sigma2();
            let mut a = Vec::with_capacity(s_count);
            let mut b = Vec::with_capacity(s_count);
            let mut c = Vec::with_capacity(s_count);
            for s in 0..s_count {
                let n = batch.gain(s, k);
                let i_term = sigma2 + n * interference;
                let t_term = i_term + n * signal;
                let mmse = i_term / t_term;
                if !(mmse > MMSE_FLOOR) {
                    return Err(Error::Numeric(format!(
                        "MMSE {mmse:e} of UT {k} at sample {s} is not positive"
                    )));
                }
                a.push(n * n * signal / (t_term * i_term));
                b.push(desired * (n / i_term));
                c.push((sigma2 * n * signal / (t_term * t_term) + 1.0) * t_term / i_term);
            }
            let inv = 1.0 / s_count as f64;
            Ok((
                pairwise_sum(&a) * inv,
                pairwise_sum_complex(&b) * inv,
                pairwise_sum(&c) * inv,
            ))
        })
        .collect();

    let mut out = MmConstants {
        a: Vec::with_capacity(k_count),
        b: Vec::with_capacity(k_count),
        c: Vec::with_capacity(k_count),
    };
    for r in per_ut {
        let (a, b, c) = r?;
        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
    }
    Ok(out)
}

/// Value of every minorizer `g_k^(n)` at precoder `w`, given the constants
/// and sample-average rates taken at the expansion point.
pub fn mm_minorizer<C: DesignCsi>(
    consts: &MmConstants,
    rates_at_expansion: &[f64],
    w: &PrecoderMatrix,
    stats: &[C],
) -> Vec<f64> {
    let g = steering_matrix(stats);
    let cross = w.cross_gains(&g);
    (0..stats.len())
        .map(|k| {
            let total: f64 = (0..stats.len()).map(|i| cross[(k, i)].norm_sqr()).sum();
            // w_k^H g_k = conj(g_k^H w_k)
            let lin = (cross[(k, k)].conj() * consts.b[k]).re;
            -(consts.a[k] * total - 2.0 * lin + consts.c[k]) / LN_2
                + 1.0 / LN_2
                + rates_at_expansion[k]
        })
        .collect()
}

/// Runs the MM iteration on a fixed training batch.
///
/// The trace holds the sample-average sum rate on `batch` at the initial
/// point and after each update; iteration stops when it changes by less than
/// `opts.eps`.
pub fn solve_mm(
    stats: &[UtChannelStats],
    batch: &ChannelBatch,
    init: &PrecoderMatrix,
    opts: SolveOptions,
) -> Result<(PrecoderMatrix, SolveTrace)> {
    let g = steering_matrix(stats);
    let p = init.power_budget();
    let mut w = init.clone();
    let mut objective = ergodic_sum_rate(&w, stats, batch)?.sum_rate;
    let mut trace = SolveTrace {
        objective_per_iteration: vec![objective],
        ..SolveTrace::default()
    };
    for it in 0..opts.max_iter {
        let consts = mm_constants(&w, batch, stats)?;
        w = PrecoderMatrix::new(regularized_update(&consts.a, &consts.b, &g, p)?, p)?;
        let next = ergodic_sum_rate(&w, stats, batch)?.sum_rate;
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

/// Draws an `s_samples` training batch from `seed` and runs [`solve_mm`].
pub fn solve_mm_sampled(
    stats: &[UtChannelStats],
    s_samples: usize,
    seed: u64,
    init: &PrecoderMatrix,
    opts: SolveOptions,
) -> Result<(PrecoderMatrix, SolveTrace)> {
    let batch = sample_channel(stats, s_samples, seed)?;
    solve_mm(stats, &batch, init, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_sigma, substream, ula_response, SigmaModel};
    use crate::linalg::{CMatrix, CVector};
    use crate::rates::ergodic_sum_rate;
    use crate::receiver::{mmse_receiver, receiver_mse, usinr};
    use rand::Rng;

    fn random_stats(seed: u64, m: usize, k: usize, n: usize, kappa: f64) -> Vec<UtChannelStats> {
        let mut rng = substream(seed, &[0xA11CE]);
        (0..k)
            .map(|_| {
                let g = ula_response(m, 0.5, rng.random_range(-1.0..1.0));
                let d0 = ula_response(n, 0.5, rng.random_range(-1.0..1.0));
                let beta = rng.random_range(0.5..2.0);
                UtChannelStats::new(
                    beta,
                    kappa,
                    g,
                    d0,
                    build_sigma(SigmaModel::Uniform, n).unwrap(),
                    0.1,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_precoder_constants() {
        let stats = random_stats(1, 4, 3, 2, 1.0);
        let batch = sample_channel(&stats, 20, 5).unwrap();
        let w = PrecoderMatrix::zeros(4, 3, 1.0).unwrap();
        let c = mm_constants(&w, &batch, &stats).unwrap();
        assert!(c.a.iter().all(|&x| x == 0.0));
        assert!(c.b.iter().all(|x| x.norm() == 0.0));
        assert!(c.c.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_sample_constants_match_receiver_chain() {
        // Oracle: build the MMSE receiver vector explicitly and evaluate the
        // defining expectations on one draw.
        let stats = random_stats(2, 4, 1, 3, 1.0);
        let batch = sample_channel(&stats, 1, 17).unwrap();
        let w = PrecoderMatrix::new(
            CMatrix::from_column_slice(
                4,
                1,
                &[
                    Complex64::new(0.3, 0.1),
                    Complex64::new(-0.2, 0.4),
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.1, -0.3),
                ],
            ),
            1.0,
        )
        .unwrap();
        let st = &stats[0];
        let d: &CVector = batch.draw(0, 0);
        let rx = mmse_receiver(&w, 0, st.g(), d, st.sigma2());
        let mmse = receiver_mse(&w, 0, st.g(), d, &rx, st.sigma2());
        let u = usinr(&w, 0, st.g(), d.norm_squared(), st.sigma2());
        assert!((mmse - 1.0 / (1.0 + u)).abs() < 1e-13);
        let dc = d.dotc(&rx);
        let want_a = dc.norm_sqr() / mmse;
        let want_b = dc / mmse;
        let want_c = (st.sigma2() * rx.norm_squared() + 1.0) / mmse;

        let got = mm_constants(&w, &batch, &stats).unwrap();
        assert!((got.a[0] - want_a).abs() < 1e-12 * want_a.max(1.0));
        assert!((got.b[0] - want_b).norm() < 1e-12 * want_b.norm().max(1.0));
        assert!((got.c[0] - want_c).abs() < 1e-12 * want_c);
    }

    #[test]
    fn constants_are_deterministic() {
        let stats = random_stats(3, 6, 4, 2, 1.0);
        let batch = sample_channel(&stats, 200, 5).unwrap();
        let w = PrecoderMatrix::matched_filter(&stats, 3.0).unwrap();
        assert_eq!(
            mm_constants(&w, &batch, &stats).unwrap(),
            mm_constants(&w, &batch, &stats).unwrap()
        );
    }

    #[test]
    fn minorizer_touches_and_lower_bounds() {
        let stats = random_stats(4, 6, 4, 3, 1.0);
        let batch = sample_channel(&stats, 300, 8).unwrap();
        let w = PrecoderMatrix::matched_filter(&stats, 5.0).unwrap();
        let consts = mm_constants(&w, &batch, &stats).unwrap();
        let rates = ergodic_sum_rate(&w, &stats, &batch).unwrap().per_ut_rate;
        let at_w = mm_minorizer(&consts, &rates, &w, &stats);
        for k in 0..4 {
            assert!((at_w[k] - rates[k]).abs() < 1e-9, "{} vs {}", at_w[k], rates[k]);
        }
        let mut rng = substream(4, &[9]);
        for _ in 0..20 {
            let cols = CMatrix::from_fn(6, 4, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let scale = (5.0 / cols.norm_squared()).sqrt();
            let other = PrecoderMatrix::new(cols * Complex64::new(scale, 0.0), 5.0).unwrap();
            let lower = mm_minorizer(&consts, &rates, &other, &stats);
            let actual = ergodic_sum_rate(&other, &stats, &batch).unwrap().per_ut_rate;
            for k in 0..4 {
                assert!(lower[k] <= actual[k] + 1e-9);
            }
        }
    }

    #[test]
    fn single_ut_converges_to_full_power_mrt() {
        let stats = random_stats(5, 8, 1, 4, 1.0);
        let batch = sample_channel(&stats, 500, 3).unwrap();
        let p = 2.0;
        let init = PrecoderMatrix::matched_filter(&stats, p).unwrap();
        let (w, trace) = solve_mm(&stats, &batch, &init, SolveOptions::default()).unwrap();
        assert!(trace.converged);
        let col = w.column(0);
        let proj = stats[0].g().dotc(&col).norm();
        assert!((proj - p.sqrt()).abs() < 1e-9);
        let want: f64 = (0..500)
            .map(|s| (1.0 + p * batch.gain(s, 0) / stats[0].sigma2()).log2())
            .sum::<f64>()
            / 500.0;
        assert!((trace.final_objective().unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let stats = random_stats(6, 12, 6, 4, 1.0);
        let batch = sample_channel(&stats, 400, 11).unwrap();
        let p = 10.0;
        let init = PrecoderMatrix::matched_filter(&stats, p).unwrap();
        let opts = SolveOptions {
            eps: 1e-8,
            max_iter: 60,
        };
        let (w, trace) = solve_mm(&stats, &batch, &init, opts).unwrap();
        assert!(trace.max_decrease() <= 1e-9, "decrease {}", trace.max_decrease());
        assert!((w.total_power() / p - 1.0).abs() < 1e-9);
        assert!(trace.final_objective().unwrap() > trace.objective_per_iteration[0]);
    }

    #[test]
    fn objective_is_phase_invariant() {
        let stats = random_stats(7, 6, 3, 2, 1.0);
        let batch = sample_channel(&stats, 100, 2).unwrap();
        let w = PrecoderMatrix::matched_filter(&stats, 1.0).unwrap();
        let base = ergodic_sum_rate(&w, &stats, &batch).unwrap().sum_rate;
        let rotated = w.rotated(&[0.3, -2.0, 1.7]);
        let r = ergodic_sum_rate(&rotated, &stats, &batch).unwrap().sum_rate;
        assert!((base - r).abs() < 1e-12);
    }
}
