//! Synthetic benchmark: planted ground truth, noise and mask injection, RMSE,
//! and the denoising / recovery curves.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bmp::{fit_with_observer, Atom, FitConfig, Model, Objective, Partition};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{self, MaskTensor, ModeSubset, Tensor};

pub const DESK_DIMS: [usize; 3] = [20, 20, 5];
pub const PAPER_DIMS: [usize; 3] = [100, 100, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    /// Number of planted atoms.
    pub atoms: usize,
    /// Inclusive integer range for the real-valued factors.
    pub value_range: (i64, i64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: DESK_DIMS.to_vec(),
            atoms: 6,
            value_range: (1, 5),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn paper_scale(atoms: usize, seed: u64) -> Self {
        Self {
            dims: PAPER_DIMS.to_vec(),
            atoms,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::InvalidDims(self.dims.clone()));
        }
        if self.atoms == 0 {
            return Err(Error::Config("synthetic atom count must be >= 1".into()));
        }
        if self.value_range.0 > self.value_range.1 {
            return Err(Error::Config("empty value alphabet".into()));
        }
        Ok(())
    }
}

/// One planted component: binary code on `mode`, integer factors elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedAtom {
    /// 1-based.
    pub mode: usize,
    pub z: Vec<bool>,
    /// Factor per mode; the entry for `mode` itself is unused and empty.
    pub factors: Vec<Vec<f64>>,
}

impl PlantedAtom {
    /// Feature vector over the complement modes (ascending, earliest fastest).
    fn feature(&self, dims: &[usize]) -> Vec<f64> {
        let others: Vec<usize> = (0..dims.len()).filter(|&m| m + 1 != self.mode).collect();
        let odims: Vec<usize> = others.iter().map(|&m| dims[m]).collect();
        let n: usize = odims.iter().product();
        let mut idx = vec![0; odims.len()];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(
                others
                    .iter()
                    .zip(&idx)
                    .map(|(&m, &i)| self.factors[m][i])
                    .product(),
            );
            tensor::advance(&mut idx, &odims);
        }
        out
    }

    pub fn to_tensor(&self, dims: &[usize]) -> Result<Tensor> {
        let s = ModeSubset::new(vec![self.mode], dims.len())?;
        tensor::refold_outer(&self.z, &self.feature(dims), &s, dims)
    }

    /// The same component as a unit-feature atom and its coefficient.
    pub fn to_atom(&self, dims: &[usize]) -> Result<(Atom, f64)> {
        let w = self.feature(dims);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = w.iter().map(|x| x / norm).collect();
        let s = ModeSubset::new(vec![self.mode], dims.len())?;
        Ok((Atom::new(s, self.z.clone(), v, dims)?, norm))
    }
}

/// Planted atoms as a model whose reconstruction equals the ground truth.
pub fn planted_model(dims: &[usize], planted: &[PlantedAtom]) -> Result<Model> {
    let mut model = Model::empty(dims);
    for p in planted {
        let (a, c) = p.to_atom(dims)?;
        model.atoms.push(a);
        model.coeffs.push(c);
    }
    Ok(model)
}

/// Atom `k` (1-based) carries its binary code on mode `((k-1) mod L) + 1`;
/// every other mode gets an integer vector drawn from `value_range`.
pub fn generate_ground_truth(spec: &SynthSpec) -> Result<(Tensor, Vec<PlantedAtom>)> {
    spec.validate()?;
    let dims = &spec.dims;
    let order = dims.len();
    let mut rng = seed::rng(seed::derive(spec.seed, &[seed::tag::GROUND_TRUTH]));
    let (lo, hi) = spec.value_range;
    let mut x = Tensor::zeros(dims)?;
    let mut planted = Vec::with_capacity(spec.atoms);
    for k in 1..=spec.atoms {
        let mode = (k - 1) % order + 1;
        let z = loop {
            let z: Vec<bool> = (0..dims[mode - 1]).map(|_| rng.random_bool(0.5)).collect();
            if z.iter().any(|&b| b) {
                break z;
            }
        };
        let factors = (1..=order)
            .map(|m| {
                if m == mode {
                    Vec::new()
                } else {
                    (0..dims[m - 1])
                        .map(|_| rng.random_range(lo..=hi) as f64)
                        .collect()
                }
            })
            .collect();
        let atom = PlantedAtom { mode, z, factors };
        x = tensor::axpy(1.0, &atom.to_tensor(dims)?, &x)?;
        planted.push(atom);
    }
    Ok((x, planted))
}

/// I.i.d. `N(0, sigma^2)` added entrywise.
pub fn add_gaussian_noise(x: &Tensor, sigma: f64, seed_value: u64) -> Result<Tensor> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Config("noise sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::tag::NOISE]));
    let mut out = x.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Exactly `round(missing_frac * N)` unobserved entries, placed uniformly.
pub fn sample_mask(dims: &[usize], missing_frac: f64, seed_value: u64) -> Result<MaskTensor> {
    if !(0.0..1.0).contains(&missing_frac) {
        return Err(Error::Config("missing fraction must be in [0, 1)".into()));
    }
    let n: usize = dims.iter().product();
    let missing = (missing_frac * n as f64).round() as usize;
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::tag::MASK]));
    let mut observed = vec![true; n];
    for i in sample(&mut rng, n, missing) {
        observed[i] = false;
    }
    MaskTensor::from_observed(dims, &observed)
}

pub fn rmse(truth: &Tensor, est: &Tensor) -> Result<f64> {
    let d = est.sub(truth)?;
    Ok((tensor::dot(d.data(), d.data()) / d.len() as f64).sqrt())
}

/// RMSE over observed entries, or over unobserved ones when `held_out`.
pub fn rmse_masked(truth: &Tensor, est: &Tensor, mask: &MaskTensor, held_out: bool) -> Result<f64> {
    let d = est.sub(truth)?;
    if d.dims() != mask.dims() {
        return Err(Error::DimMismatch(d.dims().to_vec(), mask.dims().to_vec()));
    }
    let (sum, count) = d
        .data()
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask.is_observed(i) != held_out)
        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v * v, c + 1));
    if count == 0 {
        return Err(Error::Config("no entries to average over".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// Every entry set to the mean of the observed entries.
pub fn observed_mean_fill(x: &Tensor, mask: &MaskTensor) -> Result<Tensor> {
    let count = mask.observed_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let sum: f64 = tensor::apply_mask(x, mask)?.data().iter().sum();
    Tensor::filled(x.dims(), sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub atom_count: usize,
    /// RMSE against the ground truth over every entry.
    pub rmse: f64,
    pub objective: f64,
    pub wall_time_ms: f64,
    /// Recovery curves only: RMSE over the unobserved entries.
    pub heldout_rmse: Option<f64>,
}

struct Snapshot {
    atoms: usize,
    objective: f64,
    elapsed_ms: f64,
    w: Tensor,
}

fn fit_snapshots(
    obj: &Objective,
    partition: &Partition,
    cfg: &FitConfig,
    grid: &[usize],
) -> Result<Vec<Snapshot>> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Config(
            "atom grid must be positive and strictly increasing".into(),
        ));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.max_atoms = *grid.last().expect("nonempty");
    let start = Instant::now();
    let mut snaps = Vec::new();
    let (model, _) = fit_with_observer(obj, partition, &run_cfg, None, |rec, model| {
        if grid.contains(&rec.iter) {
            snaps.push(Snapshot {
                atoms: rec.iter,
                objective: rec.objective,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                w: crate::bmp::reconstruct(model).expect("model is consistent"),
            });
        }
    })?;
    // A fit that stops early still contributes its final model once.
    if snaps.last().is_none_or(|s| s.atoms < model.len()) && !model.is_empty() {
        let w = crate::bmp::reconstruct(&model)?;
        snaps.push(Snapshot {
            atoms: model.len(),
            objective: obj.value(&w)?,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            w,
        });
    }
    Ok(snaps)
}

/// Fit a noisy copy of the ground truth once and read off RMSE at each grid
/// point.
pub fn run_denoise_curve(
    spec: &SynthSpec,
    sigma: f64,
    partition: &Partition,
    cfg: &FitConfig,
    grid: &[usize],
) -> Result<Vec<CurveRecord>> {
    let (truth, _) = generate_ground_truth(spec)?;
    let noisy = add_gaussian_noise(&truth, sigma, spec.seed)?;
    fit_snapshots(&Objective::dense(noisy), partition, cfg, grid)?
        .into_iter()
        .map(|s| {
            Ok(CurveRecord {
                atom_count: s.atoms,
                rmse: rmse(&truth, &s.w)?,
                objective: s.objective,
                wall_time_ms: s.elapsed_ms,
                heldout_rmse: None,
            })
        })
        .collect()
}

/// How missing entries enter the recovery fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Imputation {
    /// Least squares over observed entries only.
    #[default]
    Masked,
    /// Missing entries set to zero and fit densely.
    ZeroFill,
}

pub fn run_recovery_curve(
    spec: &SynthSpec,
    missing_frac: f64,
    imputation: Imputation,
    partition: &Partition,
    cfg: &FitConfig,
    grid: &[usize],
) -> Result<Vec<CurveRecord>> {
    let (truth, _) = generate_ground_truth(spec)?;
    let mask = sample_mask(truth.dims(), missing_frac, spec.seed)?;
    let obj = match imputation {
        Imputation::Masked => Objective::masked(truth.clone(), mask.clone())?,
        Imputation::ZeroFill => Objective::dense(tensor::apply_mask(&truth, &mask)?),
    };
    fit_snapshots(&obj, partition, cfg, grid)?
        .into_iter()
        .map(|s| {
            Ok(CurveRecord {
                atom_count: s.atoms,
                rmse: rmse(&truth, &s.w)?,
                objective: s.objective,
                wall_time_ms: s.elapsed_ms,
                heldout_rmse: if mask.missing_count() > 0 {
                    Some(rmse_masked(&truth, &s.w, &mask, true)?)
                } else {
                    None
                },
            })
        })
        .collect()
}
