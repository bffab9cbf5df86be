//! Binary matching pursuit.
//!
//! Each iteration takes the gradient of the squared loss at the current
//! reconstruction, finds for every mode subset in the partition the atom
//! `refold_S(z v^T)` most aligned with the negative gradient, keeps the best
//! of those, and refits every coefficient by least squares over the enlarged
//! active set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boolquad::{self, BoolQuadProblem, SdpSolverConfig, Solver};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, SquareMatrix};
use crate::seed;
use crate::tensor::{self, refold_outer, unfold, MaskTensor, ModeSubset, Tensor};

/// Ordered mode subsets searched for atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    subsets: Vec<ModeSubset>,
}

impl Partition {
    pub fn new(subsets: Vec<ModeSubset>, order: usize) -> Result<Self> {
        let spec = || format!("{subsets:?}");
        if subsets.is_empty() {
            return Err(Error::Partition {
                spec: spec(),
                reason: "no subsets".into(),
            });
        }
        for (i, s) in subsets.iter().enumerate() {
            s.validate(order)?;
            if subsets[..i].contains(s) {
                return Err(Error::Partition {
                    spec: spec(),
                    reason: format!("duplicate subset {:?}", s.modes()),
                });
            }
        }
        Ok(Self { subsets })
    }

    /// Every singleton `{l}` for `l = 1..=order`.
    pub fn singletons(order: usize) -> Result<Self> {
        let subsets = (1..=order)
            .map(|m| ModeSubset::new(vec![m], order))
            .collect::<Result<_>>()?;
        Self::new(subsets, order)
    }

    pub fn subsets(&self) -> &[ModeSubset] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }
}

/// Parse `"1;2;3"` / `"1,2;3"`: subsets separated by `;`, 1-based modes
/// within a subset separated by `,`.
pub fn parse_partitions(spec: &str, order: usize) -> Result<Partition> {
    let fail = |reason: String| Error::Partition {
        spec: spec.to_string(),
        reason,
    };
    let mut subsets = Vec::new();
    for part in spec.split(';') {
        let modes = part
            .split(',')
            .map(|m| {
                let m = m.trim();
                m.parse::<usize>()
                    .map_err(|_| fail(format!("{m:?} is not a mode index")))
            })
            .collect::<Result<Vec<_>>>()?;
        subsets.push(ModeSubset::new(modes, order).map_err(|e| fail(e.to_string()))?);
    }
    Partition::new(subsets, order).map_err(|e| match e {
        Error::Partition { reason, .. } => fail(reason),
        other => other,
    })
}

/// `refold_S(z v^T)` with `z` binary and nonzero, `v` unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub subset: ModeSubset,
    pub z: Vec<bool>,
    pub v: Vec<f64>,
}

impl Atom {
    pub fn new(subset: ModeSubset, z: Vec<bool>, v: Vec<f64>, dims: &[usize]) -> Result<Self> {
        subset.validate(dims.len())?;
        let (p, q) = subset.shape(dims);
        if z.len() != p || v.len() != q {
            return Err(Error::DimMismatch(vec![z.len(), v.len()], vec![p, q]));
        }
        if !z.iter().any(|&b| b) {
            return Err(Error::Config("atom code must be nonzero".into()));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "atom feature vector has norm {norm}"
            )));
        }
        Ok(Self { subset, z, v })
    }

    pub fn to_tensor(&self, dims: &[usize]) -> Result<Tensor> {
        refold_outer(&self.z, &self.v, &self.subset, dims)
    }

    /// Same subset and code, features equal up to sign.
    pub fn duplicates(&self, other: &Atom, tol: f64) -> bool {
        if self.subset != other.subset || self.z != other.z {
            return false;
        }
        let dist = |s: f64| {
            self.v
                .iter()
                .zip(&other.v)
                .map(|(a, b)| (a - s * b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        dist(1.0) <= tol || dist(-1.0) <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: Vec<usize>,
    pub atoms: Vec<Atom>,
    pub coeffs: Vec<f64>,
}

impl Model {
    pub fn empty(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            atoms: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Sum of absolute coefficients, an upper bound on the atomic norm.
    pub fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

fn combine(dims: &[usize], atoms: &[Tensor], coeffs: &[f64]) -> Result<Tensor> {
    let mut w = Tensor::zeros(dims)?;
    for (a, &c) in atoms.iter().zip(coeffs) {
        for (wi, ai) in w.data_mut().iter_mut().zip(a.data()) {
            *wi += c * ai;
        }
    }
    Ok(w)
}

pub fn reconstruct(model: &Model) -> Result<Tensor> {
    if model.atoms.len() != model.coeffs.len() {
        return Err(Error::Config(format!(
            "{} atoms but {} coefficients",
            model.atoms.len(),
            model.coeffs.len()
        )));
    }
    let atoms = model
        .atoms
        .iter()
        .map(|a| a.to_tensor(&model.dims))
        .collect::<Result<Vec<_>>>()?;
    combine(&model.dims, &atoms, &model.coeffs)
}

/// `F(W) = 1/2 ||X - W||^2`, optionally restricted to observed entries.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Dense(Tensor),
    Masked(Tensor, MaskTensor),
}

impl Objective {
    pub fn dense(x: Tensor) -> Self {
        Objective::Dense(x)
    }

    pub fn masked(x: Tensor, mask: MaskTensor) -> Result<Self> {
        if x.dims() != mask.dims() {
            return Err(Error::DimMismatch(x.dims().to_vec(), mask.dims().to_vec()));
        }
        if mask.observed_count() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Objective::Masked(x, mask))
    }

    pub fn data(&self) -> &Tensor {
        match self {
            Objective::Dense(x) | Objective::Masked(x, _) => x,
        }
    }

    pub fn mask(&self) -> Option<&MaskTensor> {
        match self {
            Objective::Dense(_) => None,
            Objective::Masked(_, m) => Some(m),
        }
    }

    pub fn dims(&self) -> &[usize] {
        self.data().dims()
    }

    /// Data with unobserved entries zeroed.
    fn target(&self) -> Vec<f64> {
        match self {
            Objective::Dense(x) => x.vec(),
            Objective::Masked(x, m) => tensor::apply_mask(x, m).expect("dims checked").into_data(),
        }
    }

    fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Objective::Dense(_) => tensor::dot(a, b),
            Objective::Masked(_, m) => a
                .iter()
                .zip(b)
                .zip(m.as_tensor().data())
                .filter(|(_, &o)| o == 1.0)
                .map(|((x, y), _)| x * y)
                .sum(),
        }
    }

    pub fn value(&self, w: &Tensor) -> Result<f64> {
        let r = gradient(self, w)?;
        Ok(0.5 * tensor::dot(r.data(), r.data()))
    }
}

/// `W - X`, zeroed at unobserved entries for the masked objective.
pub fn gradient(obj: &Objective, w: &Tensor) -> Result<Tensor> {
    let r = w.sub(obj.data())?;
    match obj.mask() {
        None => Ok(r),
        Some(m) => tensor::apply_mask(&r, m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Atom budget.
    pub max_atoms: usize,
    /// Stop once `(F_prev - F) < stop_tol * F_prev`.
    pub stop_tol: f64,
    /// Ridge used when the plain Gram system is singular.
    pub ridge: f64,
    pub solver: Solver,
    pub sdp: SdpSolverConfig,
    pub seed: u64,
    pub duplicate_retry_budget: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_atoms: 10,
            stop_tol: 1e-8,
            ridge: 1e-10,
            solver: Solver::Sdp,
            sdp: SdpSolverConfig::default(),
            seed: 0,
            duplicate_retry_budget: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_atoms == 0 {
            return Err(Error::Config("max atoms must be >= 1".into()));
        }
        if self.ridge.is_nan() || self.ridge < 0.0 {
            return Err(Error::Config("ridge must be >= 0".into()));
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return Err(Error::Config("stop tolerance must be >= 0".into()));
        }
        self.sdp.validate()
    }
}

/// Result of one greedy search.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub atom: Atom,
    /// `<grad, atom>`, always negative.
    pub score: f64,
    pub partition_index: usize,
}

fn search_subset(
    grad: &Tensor,
    subset: &ModeSubset,
    index: usize,
    cfg: &FitConfig,
) -> Result<Option<Candidate>> {
    let g = unfold(grad, subset)?;
    let (p, q) = (g.dims()[0], g.dims()[1]);
    let problem = BoolQuadProblem::from_factor(&g);
    let sdp = SdpSolverConfig {
        seed: seed::derive(cfg.sdp.seed, &[index as u64]),
        ..cfg.sdp.clone()
    };
    let mut sol = boolquad::solve_with(cfg.solver, &problem, &sdp)?;
    if sol.zero_gradient {
        return Ok(None);
    }
    // Rows with zero gradient (A_rr = 0) leave the score unchanged; drop them
    // so the code covers only rows that move the objective.
    let a = problem.matrix();
    for (r, zr) in sol.z.iter_mut().enumerate() {
        if a[(r, r)] == 0.0 {
            *zr = false;
        }
    }
    // G^T z
    let gd = g.data();
    let w: Vec<f64> = (0..q)
        .map(|c| {
            let col = &gd[c * p..(c + 1) * p];
            col.iter()
                .zip(&sol.z)
                .filter(|(_, &b)| b)
                .map(|(x, _)| x)
                .sum()
        })
        .collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(None);
    }
    let v: Vec<f64> = w.iter().map(|x| -x / norm).collect();
    Ok(Some(Candidate {
        atom: Atom {
            subset: subset.clone(),
            z: sol.z,
            v,
        },
        score: -norm,
        partition_index: index,
    }))
}

/// Steepest-descent atom over every subset of the partition. `None` means
/// the gradient admits no descent atom.
pub fn greedy_atom_search(
    grad: &Tensor,
    partition: &Partition,
    cfg: &FitConfig,
) -> Result<Option<Candidate>> {
    if grad.is_zero() {
        return Ok(None);
    }
    let found = partition
        .subsets
        .par_iter()
        .enumerate()
        .map(|(i, s)| search_subset(grad, s, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(found.into_iter().flatten().min_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.partition_index.cmp(&b.partition_index))
    }))
}

/// Coefficients from a weight refit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub coeffs: Vec<f64>,
    pub ridge_used: bool,
    /// `max_m |<M_m, residual>| / ||target||`, observed entries only.
    pub normal_eq_residual: f64,
}

/// Active-set least squares with an incrementally grown Gram matrix.
struct WeightSystem<'a> {
    obj: &'a Objective,
    target: Vec<f64>,
    target_norm: f64,
    atoms: Vec<Tensor>,
    gram: SquareMatrix,
    rhs: Vec<f64>,
}

impl<'a> WeightSystem<'a> {
    fn new(obj: &'a Objective) -> Self {
        let target = obj.target();
        let target_norm = tensor::dot(&target, &target).sqrt();
        Self {
            obj,
            target,
            target_norm,
            atoms: Vec::new(),
            gram: SquareMatrix::zeros(0),
            rhs: Vec::new(),
        }
    }

    fn push(&mut self, atom: Tensor) {
        let k = self.atoms.len();
        let mut gram = SquareMatrix::zeros(k + 1);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = self.gram[(i, j)];
            }
            let g = self.obj.weighted_dot(self.atoms[i].data(), atom.data());
            gram[(i, k)] = g;
            gram[(k, i)] = g;
        }
        gram[(k, k)] = self.obj.weighted_dot(atom.data(), atom.data());
        self.rhs
            .push(self.obj.weighted_dot(atom.data(), &self.target));
        self.atoms.push(atom);
        self.gram = gram;
    }

    fn pop(&mut self) {
        let k = self.atoms.len() - 1;
        self.atoms.pop();
        self.rhs.pop();
        let mut gram = SquareMatrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = self.gram[(i, j)];
            }
        }
        self.gram = gram;
    }

    /// `M^T (target - M c)` on observed entries.
    fn correlations(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut r = self.target.clone();
        for (a, &c) in self.atoms.iter().zip(coeffs) {
            for (ri, ai) in r.iter_mut().zip(a.data()) {
                *ri -= c * ai;
            }
        }
        self.atoms
            .iter()
            .map(|a| self.obj.weighted_dot(a.data(), &r))
            .collect()
    }

    fn solve(&self, ridge: f64) -> Result<WeightFit> {
        let (factor, used) = match cholesky(&self.gram, 0.0) {
            Some(l) => (l, 0.0),
            None if ridge > 0.0 => (
                cholesky(&self.gram, ridge).ok_or(Error::SingularGram(ridge))?,
                ridge,
            ),
            None => return Err(Error::SingularGram(ridge)),
        };
        let mut coeffs = cholesky_solve(&factor, &self.rhs);
        // Refine against the explicitly computed residual.
        for _ in 0..2 {
            let corr = self.correlations(&coeffs);
            let step: Vec<f64> = corr
                .iter()
                .zip(&coeffs)
                .map(|(g, c)| g - used * c)
                .collect();
            let delta = cholesky_solve(&factor, &step);
            coeffs.iter_mut().zip(&delta).for_each(|(c, d)| *c += d);
        }
        let worst = self
            .correlations(&coeffs)
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()));
        Ok(WeightFit {
            coeffs,
            ridge_used: used > 0.0,
            normal_eq_residual: if self.target_norm > 0.0 {
                worst / self.target_norm
            } else {
                worst
            },
        })
    }
}

/// Fully corrective least squares over a fixed atom set. A singular Gram
/// matrix is retried once with `ridge` on the diagonal.
pub fn adjust_weights(obj: &Objective, atoms: &[Atom], ridge: f64) -> Result<WeightFit> {
    if atoms.is_empty() {
        return Err(Error::Config("weight refit needs at least one atom".into()));
    }
    let mut system = WeightSystem::new(obj);
    for a in atoms {
        system.push(a.to_tensor(obj.dims())?);
    }
    system.solve(ridge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxAtoms,
    ZeroGradient,
    SmallImprovement,
    /// The refit with the new atom did not lower the objective.
    NoImprovement,
    DuplicateAtom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub partition: usize,
    pub score: f64,
    pub c_l1: f64,
    pub rmse: Option<f64>,
    pub normal_eq_residual: f64,
    pub ridge_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective of the zero model.
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl FitTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// `k (F_k - F_last)` for `k = 1..K`, the quantity a `O(1/k)` rate keeps
    /// bounded.
    pub fn convergence_trend(&self) -> Vec<f64> {
        let Some(last) = self.records.last() else {
            return Vec::new();
        };
        self.records
            .iter()
            .map(|r| r.iter as f64 * (r.objective - last.objective))
            .collect()
    }
}

const DUPLICATE_TOL: f64 = 1e-6;

pub fn fit(
    obj: &Objective,
    partition: &Partition,
    cfg: &FitConfig,
    truth: Option<&Tensor>,
) -> Result<(Model, FitTrace)> {
    fit_with_observer(obj, partition, cfg, truth, |_, _| {})
}

/// [`fit`], calling `observe` after every accepted atom.
pub fn fit_with_observer(
    obj: &Objective,
    partition: &Partition,
    cfg: &FitConfig,
    truth: Option<&Tensor>,
    mut observe: impl FnMut(&TraceRecord, &Model),
) -> Result<(Model, FitTrace)> {
    cfg.validate()?;
    let dims = obj.dims().to_vec();
    for s in partition.subsets() {
        s.validate(dims.len())?;
    }
    if let Some(t) = truth {
        if t.dims() != dims.as_slice() {
            return Err(Error::DimMismatch(t.dims().to_vec(), dims));
        }
    }

    let mut model = Model::empty(&dims);
    let mut system = WeightSystem::new(obj);
    let mut w = Tensor::zeros(&dims)?;
    let initial_objective = obj.value(&w)?;
    let mut f_prev = initial_objective;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxAtoms;

    'outer: for k in 1..=cfg.max_atoms {
        let grad = gradient(obj, &w)?;
        let mut chosen = None;
        for retry in 0..=cfg.duplicate_retry_budget {
            let mut step_cfg = cfg.clone();
            step_cfg.sdp.seed = seed::derive(cfg.seed, &[seed::tag::FIT, k as u64, retry as u64]);
            let Some(cand) = greedy_atom_search(&grad, partition, &step_cfg)? else {
                stop = StopReason::ZeroGradient;
                break 'outer;
            };
            if model
                .atoms
                .iter()
                .any(|a| a.duplicates(&cand.atom, DUPLICATE_TOL))
            {
                continue;
            }
            chosen = Some(cand);
            break;
        }
        let Some(cand) = chosen else {
            stop = StopReason::DuplicateAtom;
            break;
        };

        system.push(cand.atom.to_tensor(&dims)?);
        let weights = system.solve(cfg.ridge)?;
        let w_next = combine(&dims, &system.atoms, &weights.coeffs)?;
        let f_next = obj.value(&w_next)?;
        if f_next > f_prev {
            system.pop();
            stop = StopReason::NoImprovement;
            break;
        }

        model.atoms.push(cand.atom);
        model.coeffs = weights.coeffs;
        w = w_next;
        let record = TraceRecord {
            iter: k,
            objective: f_next,
            partition: cand.partition_index,
            score: cand.score,
            c_l1: model.coeff_l1(),
            rmse: truth.map(|t| crate::bench::rmse(t, &w)).transpose()?,
            normal_eq_residual: weights.normal_eq_residual,
            ridge_used: weights.ridge_used,
        };
        observe(&record, &model);
        records.push(record);

        if f_prev - f_next < cfg.stop_tol * f_prev {
            stop = StopReason::SmallImprovement;
            break;
        }
        f_prev = f_next;
    }

    Ok((
        model,
        FitTrace {
            initial_objective,
            records,
            stop,
        },
    ))
}

/// Matrix latent feature model: [`fit`] on a 2-mode tensor with the single
/// subset `{1}` (binary codes over rows, features over columns).
pub fn matrix_lfm_fit(x: &Tensor, cfg: &FitConfig) -> Result<(Model, FitTrace)> {
    if x.order() != 2 {
        return Err(Error::InvalidDims(x.dims().to_vec()));
    }
    let partition = Partition::new(vec![ModeSubset::new(vec![1], 2)?], 2)?;
    fit(&Objective::dense(x.clone()), &partition, cfg, None)
}
