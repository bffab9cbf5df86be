//! Boolean quadratic maximization `max_{z in {0,1}^p} z^T A z` for PSD `A`.
//!
//! The problem is lifted to a `{-1,1}^{p+1}` quadratic (a MAXCUT-style form
//! with one dummy variable), relaxed to the diagonally constrained SDP
//! `max <C, Y>, diag(Y) = 1, Y psd`, and solved with the low-rank mixing
//! method: `Y = V^T V` with unit columns, each column replaced in turn by the
//! normalized weighted sum of the others. Signs are recovered by random
//! hyperplane rounding followed by single-flip local search.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::seed;
use crate::tensor::Tensor;

/// Exhaustive search refuses problems larger than this.
pub const BRUTE_FORCE_LIMIT: usize = 20;

const SYMMETRY_TOL: f64 = 1e-12;

/// `max z^T A z` over binary `z`, with `A` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolQuadProblem {
    a: SquareMatrix,
}

impl BoolQuadProblem {
    pub fn new(a: SquareMatrix) -> Result<Self> {
        if a.dim() == 0 {
            return Err(Error::NotSquare(0, 0));
        }
        let asym = a.asymmetry();
        if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
            return Err(Error::Asymmetric(asym));
        }
        Ok(Self { a })
    }

    /// `A = G G^T` for an unfolded gradient `G` (`p x q`).
    pub fn from_factor(g: &Tensor) -> Self {
        Self {
            a: SquareMatrix::gram_of_rows(g),
        }
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.a
    }

    pub fn size(&self) -> usize {
        self.a.dim()
    }

    pub fn value(&self, z: &[bool]) -> f64 {
        let mut v = 0.0;
        for (i, row) in self.a.rows().enumerate() {
            if z[i] {
                v += row
                    .iter()
                    .zip(z)
                    .filter(|(_, &zj)| zj)
                    .map(|(a, _)| a)
                    .sum::<f64>();
            }
        }
        v
    }
}

/// The `(p+1) x (p+1)` matrix `[[1'A1, 1'A], [A1, A]]`. For `y = 2z - 1`,
/// `(1/4) [1; y]' C [1; y] = z' A z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxCutLift {
    c: SquareMatrix,
}

impl MaxCutLift {
    pub fn matrix(&self) -> &SquareMatrix {
        &self.c
    }

    pub fn size(&self) -> usize {
        self.c.dim()
    }

    /// `y' C y` for a sign vector.
    pub fn cut_value(&self, y: &[i8]) -> f64 {
        let yf: Vec<f64> = y.iter().map(|&s| f64::from(s)).collect();
        self.c.quad_form(&yf)
    }
}

pub fn lift(problem: &BoolQuadProblem) -> MaxCutLift {
    let a = &problem.a;
    let p = a.dim();
    let row_sums: Vec<f64> = a.rows().map(|r| r.iter().sum()).collect();
    let total: f64 = row_sums.iter().sum();
    let mut c = SquareMatrix::zeros(p + 1);
    c[(0, 0)] = total;
    for i in 0..p {
        c[(0, i + 1)] = row_sums[i];
        c[(i + 1, 0)] = row_sums[i];
        for j in 0..p {
            c[(i + 1, j + 1)] = a[(i, j)];
        }
    }
    MaxCutLift { c }
}

/// Lift an arbitrary symmetric matrix that is already in cut form.
pub fn lift_from_matrix(c: SquareMatrix) -> Result<MaxCutLift> {
    let asym = c.asymmetry();
    if asym > SYMMETRY_TOL * c.max_abs().max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    Ok(MaxCutLift { c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolverConfig {
    /// Factor rank; `None` picks `ceil(sqrt(2n)) + 1` for `n = p + 1`.
    pub rank: Option<usize>,
    pub max_sweeps: usize,
    /// Relative objective change that ends the sweeps.
    pub tol: f64,
    pub rounding_trials: usize,
    pub one_opt: bool,
    pub seed: u64,
}

impl Default for SdpSolverConfig {
    fn default() -> Self {
        Self {
            rank: None,
            max_sweeps: 200,
            tol: 1e-6,
            rounding_trials: 100,
            one_opt: true,
            seed: 0,
        }
    }
}

impl SdpSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.rank, Some(r) if r < 2) {
            return Err(Error::Config("sdp rank must be >= 2".into()));
        }
        if self.rounding_trials == 0 {
            return Err(Error::Config("rounding trials must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("sdp tolerance must be > 0".into()));
        }
        Ok(())
    }

    pub fn rank_for(&self, n: usize) -> usize {
        self.rank
            .unwrap_or_else(|| (2.0 * n as f64).sqrt().ceil() as usize + 1)
    }
}

/// Low-rank SDP factor: `n` unit columns of length `rank`, stored column by
/// column.
#[derive(Debug, Clone)]
pub struct MixingFactor {
    pub rank: usize,
    pub columns: Vec<f64>,
    /// `<C, V'V>` after the final sweep.
    pub objective: f64,
    /// Objective after initialization and after every sweep.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

impl MixingFactor {
    pub fn len(&self) -> usize {
        self.columns.len() / self.rank
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i * self.rank..(i + 1) * self.rank]
    }
}

fn sdp_objective(c: &SquareMatrix, cols: &[f64], k: usize) -> f64 {
    let n = c.dim();
    let mut total = 0.0;
    for i in 0..n {
        let vi = &cols[i * k..(i + 1) * k];
        let row = c.row(i);
        for j in 0..n {
            if row[j] != 0.0 {
                let vj = &cols[j * k..(j + 1) * k];
                total += row[j] * vi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    total
}

/// Coordinate ascent on `<C, V'V>` subject to unit columns.
pub fn mixing_solve(lift: &MaxCutLift, cfg: &SdpSolverConfig) -> MixingFactor {
    let c = &lift.c;
    let n = c.dim();
    let k = cfg.rank_for(n).max(2);
    let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::tag::SDP_INIT]));
    let mut cols: Vec<f64> = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
    for col in cols.chunks_mut(k) {
        normalize_or_axis(col);
    }

    let mut objective = sdp_objective(c, &cols, k);
    let mut history = vec![objective];
    let mut g = vec![0.0; k];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        for i in 0..n {
            g.fill(0.0);
            let row = c.row(i);
            for j in (0..n).filter(|&j| j != i && row[j] != 0.0) {
                let vj = &cols[j * k..(j + 1) * k];
                for (gt, vt) in g.iter_mut().zip(vj) {
                    *gt += row[j] * vt;
                }
            }
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (vt, gt) in cols[i * k..(i + 1) * k].iter_mut().zip(&g) {
                    *vt = gt / norm;
                }
            }
        }
        sweeps += 1;
        let next = sdp_objective(c, &cols, k);
        debug_assert!(
            next >= objective - 1e-9 * objective.abs().max(1.0),
            "mixing sweep decreased the objective: {objective} -> {next}"
        );
        let change = (next - objective).abs();
        objective = next;
        history.push(objective);
        if change <= cfg.tol * objective.abs() || objective == 0.0 {
            break;
        }
    }
    MixingFactor {
        rank: k,
        columns: cols,
        objective,
        history,
        sweeps,
    }
}

fn normalize_or_axis(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.fill(0.0);
        v[0] = 1.0;
    }
}

/// One rounded sign vector and the trial that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rounding {
    pub y: Vec<i8>,
    /// `y' C y`.
    pub value: f64,
    pub trial: usize,
}

/// Greedy single-coordinate flips until no flip increases `y' C y`.
pub fn one_opt(c: &SquareMatrix, y: &mut [i8]) {
    let n = c.dim();
    let yf: Vec<f64> = y.iter().map(|&s| f64::from(s)).collect();
    let mut h = c.mul_vec(&yf);
    let eps = 1e-12 * (n as f64) * c.max_abs().max(f64::MIN_POSITIVE);
    loop {
        // flipping i changes y'Cy by -4 y_i (h_i - C_ii y_i)
        let mut best = (eps, None);
        for i in 0..n {
            let yi = f64::from(y[i]);
            let gain = -4.0 * yi * (h[i] - c[(i, i)] * yi);
            if gain > best.0 {
                best = (gain, Some(i));
            }
        }
        let Some(i) = best.1 else { break };
        let old = f64::from(y[i]);
        y[i] = -y[i];
        for (hj, cji) in h.iter_mut().zip((0..n).map(|j| c[(j, i)])) {
            *hj -= 2.0 * old * cji;
        }
    }
}

fn round_trial(
    factor: &MixingFactor,
    lift: &MaxCutLift,
    cfg: &SdpSolverConfig,
    trial: usize,
) -> Rounding {
    let mut rng = seed::rng(cfg.seed ^ trial as u64);
    let r: Vec<f64> = (0..factor.rank)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut y: Vec<i8> = (0..factor.len())
        .map(|i| {
            let s: f64 = factor.column(i).iter().zip(&r).map(|(a, b)| a * b).sum();
            if s >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    if cfg.one_opt {
        one_opt(&lift.c, &mut y);
    }
    let value = lift.cut_value(&y);
    Rounding { y, value, trial }
}

/// Every rounding trial, ordered best first by `(value desc, trial asc)`.
pub fn round_all(factor: &MixingFactor, lift: &MaxCutLift, cfg: &SdpSolverConfig) -> Vec<Rounding> {
    let mut all: Vec<Rounding> = (0..cfg.rounding_trials.max(1))
        .into_par_iter()
        .map(|t| round_trial(factor, lift, cfg, t))
        .collect();
    all.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.trial.cmp(&b.trial)));
    all
}

/// Best of `cfg.rounding_trials` hyperplane roundings.
pub fn round(factor: &MixingFactor, lift: &MaxCutLift, cfg: &SdpSolverConfig) -> Rounding {
    round_all(factor, lift, cfg).swap_remove(0)
}

/// Map `[y0; y]` to `z = (1 + y)/2`, after flipping all signs if `y0 = -1`.
pub fn to_binary(y: &[i8]) -> Result<Vec<bool>> {
    if let Some(&bad) = y.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::NotSign(bad.into()));
    }
    let Some((&y0, rest)) = y.split_first() else {
        return Err(Error::NotSign(0));
    };
    Ok(rest.iter().map(|&s| s * y0 == 1).collect())
}

/// Exact maximizer by enumeration; ties go to the lowest integer encoding
/// `sum_i z_i 2^i`.
pub fn brute_force(problem: &BoolQuadProblem) -> Result<(Vec<bool>, f64)> {
    let p = problem.size();
    if p > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            p,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let a = &problem.a;
    let eps = 1e-12 * a.max_abs() * (p * p) as f64;
    let mut z = vec![false; p];
    let mut az = vec![0.0; p];
    let mut value = 0.0;
    let (mut best_value, mut best_code) = (0.0f64, 0u64);
    // Gray-code walk: one bit changes per step.
    for k in 1u64..(1u64 << p) {
        let i = k.trailing_zeros() as usize;
        let sign = if z[i] { -1.0 } else { 1.0 };
        value += sign * 2.0 * az[i] + a[(i, i)];
        z[i] = !z[i];
        for (azj, aij) in az.iter_mut().zip(a.row(i)) {
            *azj += sign * aij;
        }
        let code = k ^ (k >> 1);
        if value > best_value + eps || ((value - best_value).abs() <= eps && code < best_code) {
            best_value = value;
            best_code = code;
        }
    }
    let best: Vec<bool> = (0..p).map(|i| best_code >> i & 1 == 1).collect();
    let exact = problem.value(&best);
    Ok((best, exact))
}

/// Which Boolean subproblem solver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Sdp,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z: Vec<bool>,
    /// `z' A z`.
    pub value: f64,
    /// Every candidate had value 0, so `A` has no ascent direction.
    pub zero_gradient: bool,
    /// `(1/4) <C, V'V>`, an upper bound on the optimum once the SDP has
    /// converged. `None` for exhaustive solves.
    pub sdp_bound: Option<f64>,
}

/// Lift, relax, round. The zero code is only returned when no candidate has a
/// positive value.
pub fn solve(problem: &BoolQuadProblem, cfg: &SdpSolverConfig) -> Solution {
    let lift = lift(problem);
    let factor = mixing_solve(&lift, cfg);
    let rounds = round_all(&factor, &lift, cfg);
    let bound = Some(0.25 * factor.objective);

    let mut fallback = None;
    for r in &rounds {
        let z = to_binary(&r.y).expect("rounding yields signs");
        if z.iter().any(|&b| b) {
            let value = problem.value(&z);
            if value > 0.0 {
                return Solution {
                    z,
                    value,
                    zero_gradient: false,
                    sdp_bound: bound,
                };
            }
        } else if fallback.is_none() {
            fallback = Some(z);
        }
    }
    // Only reachable without local search: try the best single coordinate.
    let a = problem.matrix();
    let (i, aii) = (0..a.dim())
        .map(|i| (i, a[(i, i)]))
        .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    if aii > 0.0 {
        let mut z = vec![false; a.dim()];
        z[i] = true;
        return Solution {
            z,
            value: aii,
            zero_gradient: false,
            sdp_bound: bound,
        };
    }
    Solution {
        z: fallback.unwrap_or_else(|| vec![false; a.dim()]),
        value: 0.0,
        zero_gradient: true,
        sdp_bound: bound,
    }
}

pub fn solve_with(
    solver: Solver,
    problem: &BoolQuadProblem,
    cfg: &SdpSolverConfig,
) -> Result<Solution> {
    match solver {
        Solver::Sdp => Ok(solve(problem, cfg)),
        Solver::Exhaustive => {
            let (z, value) = brute_force(problem)?;
            Ok(Solution {
                zero_gradient: value <= 0.0,
                z,
                value,
                sdp_bound: None,
            })
        }
    }
}
