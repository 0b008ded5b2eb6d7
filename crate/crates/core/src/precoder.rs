//! Precoder collections and the regularized closed-form update shared by the
//! MM and WMMSE designs.

use num_complex::Complex64;

use crate::channel::DesignCsi;
use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, CMatrix, CVector, HpdFactor};

/// Relative slack on the power budget when validating a precoder.
pub const POWER_SLACK: f64 = 1e-9;

/// Bisection on the regularizer stops once the power is this close to P.
const POWER_RTOL: f64 = 1e-12;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 200;

/// `M x K` precoder matrix; column `k` is the beamformer of UT `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderMatrix {
    columns: CMatrix,
    power_budget: f64,
}

impl PrecoderMatrix {
    pub fn new(columns: CMatrix, power_budget: f64) -> Result<Self> {
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::Argument(format!(
                "power budget must be positive, got {power_budget}"
            )));
        }
        let p = columns.norm_squared();
        if !p.is_finite() || p > power_budget * (1.0 + POWER_SLACK) {
            return Err(Error::Argument(format!(
                "precoder power {p} exceeds budget {power_budget}"
            )));
        }
        Ok(Self {
            columns,
            power_budget,
        })
    }

    pub fn zeros(num_antennas: usize, num_uts: usize, power_budget: f64) -> Result<Self> {
        Self::new(CMatrix::zeros(num_antennas, num_uts), power_budget)
    }

    /// Matched-filter columns `g_k`, each at power `P/K`.
    pub fn matched_filter<C: DesignCsi>(stats: &[C], power_budget: f64) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::Argument("no UTs".into()));
        }
        let g = steering_matrix(stats);
        let scale = (power_budget / stats.len() as f64).sqrt();
        let cols = g.map(|x| x * scale);
        Self::new(cols, power_budget)
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn into_columns(self) -> CMatrix {
        self.columns
    }

    pub fn column(&self, k: usize) -> CVector {
        self.columns.column(k).into_owned()
    }

    pub fn num_antennas(&self) -> usize {
        self.columns.nrows()
    }

    pub fn num_uts(&self) -> usize {
        self.columns.ncols()
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn total_power(&self) -> f64 {
        self.columns.norm_squared()
    }

    pub fn column_powers(&self) -> Vec<f64> {
        self.columns
            .column_iter()
            .map(|c| c.norm_squared())
            .collect()
    }

    /// Multiplies column `k` by `exp(j * phases[k])`.
    pub fn rotated(&self, phases: &[f64]) -> Self {
        let mut cols = self.columns.clone();
        for (k, &theta) in phases.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, theta);
            cols.column_mut(k).iter_mut().for_each(|x| *x *= rot);
        }
        Self {
            columns: cols,
            power_budget: self.power_budget,
        }
    }

    /// Scales every column by `t`; the budget is unchanged.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.columns.map(|x| x * t), self.power_budget)
    }

    /// Cross products `[k, i] = g_k^H w_i`.
    pub fn cross_gains(&self, g: &CMatrix) -> CMatrix {
        g.adjoint() * &self.columns
    }
}

/// Objective history of an iterative design.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    /// Objective at the initial point followed by one entry per update.
    pub objective_per_iteration: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective_per_iteration.last().copied()
    }

    /// Largest decrease between consecutive objective values (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.objective_per_iteration
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once the objective changes by less than this between iterations.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iter: 200,
        }
    }
}

/// Stacks the satellite-side array responses into an `M x K` matrix.
pub fn steering_matrix<C: DesignCsi>(stats: &[C]) -> CMatrix {
    let m = stats.first().map_or(0, |s| s.g().len());
    let mut g = CMatrix::zeros(m, stats.len());
    for (k, s) in stats.iter().enumerate() {
        g.set_column(k, s.g());
    }
    g
}

/// Solves `w_k = (sum_i a_i g_i g_i^H + mu I)^{-1} g_k b_k` with the smallest
/// `mu >= 0` that keeps `sum_k ||w_k||^2 <= p`.
///
/// When `mu = 0` is infeasible, `mu` is bisected so that the total power
/// equals `p`. `g` holds the unit-norm vectors `g_k` as columns.
pub fn regularized_update(a: &[f64], b: &[Complex64], g: &CMatrix, p: f64) -> Result<CMatrix> {
    let k = g.ncols();
    if a.len() != k || b.len() != k {
        return Err(Error::Argument(format!(
            "expected {k} weights, got a: {}, b: {}",
            a.len(),
            b.len()
        )));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Argument(format!("power must be positive, got {p}")));
    }
    if a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Argument("weights a must be finite and nonnegative".into()));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite weight b".into()));
    }
    if b.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::DegenerateDirection(
            "all directional weights are zero".into(),
        ));
    }

    let gram = weighted_gram(g, a, 0.0);
    let mut rhs = g.clone();
    for (j, bj) in b.iter().enumerate() {
        rhs.column_mut(j).iter_mut().for_each(|x| *x *= *bj);
    }
    let solve_at = |mu: f64| -> Option<(CMatrix, f64)> {
        let mut mat = gram.clone();
        for i in 0..mat.nrows() {
            mat[(i, i)] += Complex64::new(mu, 0.0);
        }
        let w = HpdFactor::new(mat)?.solve(&rhs);
        let pw = w.norm_squared();
        pw.is_finite().then_some((w, pw))
    };

    if let Some((w, pw)) = solve_at(0.0) {
        if pw <= p {
            return Ok(w);
        }
    }

    // ||w_k|| <= |b_k| / mu, so this bracket already satisfies the budget.
    let b_l1: f64 = b.iter().map(|x| x.norm()).sum();
    let mut hi = gram.norm() + b_l1 / p.sqrt();
    let (mut w_hi, mut p_hi) =
        solve_at(hi).ok_or_else(|| Error::Numeric("factorization failed at upper bracket".into()))?;
    let mut doublings = 0;
    while p_hi > p {
        hi *= 2.0;
        (w_hi, p_hi) = solve_at(hi)
            .ok_or_else(|| Error::Numeric("factorization failed at upper bracket".into()))?;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::Numeric("could not bracket the regularizer".into()));
        }
    }

    let mut lo = 0.0;
    for _ in 0..MAX_BISECTION_STEPS {
        if p - p_hi <= POWER_RTOL * p {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match solve_at(mid) {
            Some((w, pw)) if pw <= p => {
                hi = mid;
                w_hi = w;
                p_hi = pw;
            }
            _ => lo = mid,
        }
    }

    // Remove the residual bisection gap; skipped when the budget is slack
    // in the mu -> 0 limit (singular Gram matrix).
    if p_hi > 0.0 && p - p_hi <= POWER_SLACK * p {
        let s = (p / p_hi).sqrt();
        w_hi.iter_mut().for_each(|x| *x *= s);
    }
    Ok(w_hi)
}
