//! Acceptance suite. Each test writes one `[PASS]`/`[FAIL]` line to stderr,
//! bypassing libtest capture so the lines show up in plain `cargo test`.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tensor_lfm::bench::{self, SynthSpec};
use tensor_lfm::boolquad::{self, BoolQuadProblem};
use tensor_lfm::tensor;
use tensor_lfm::{
    fit, fit_with_observer, parse_partitions, reconstruct, FitConfig, ModeSubset, Objective,
    Partition, SdpSolverConfig, Solver, Tensor,
};

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] AC{id} {name}: {detail}");
}

fn gaussian(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.sample(StandardNormal)).unwrap()
}

fn all_subsets(order: usize) -> Vec<ModeSubset> {
    (1u32..(1 << order) - 1)
        .map(|bits| {
            let modes = (1..=order).filter(|m| bits >> (m - 1) & 1 == 1).collect();
            ModeSubset::new(modes, order).unwrap()
        })
        .collect()
}

#[test]
fn ac1_sdp_solver_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut ratios = Vec::new();
    for trial in 0..50u64 {
        let p = rng.random_range(2..=12);
        let q = rng.random_range(1..=15);
        let problem = BoolQuadProblem::from_factor(&gaussian(&[p, q], &mut rng));
        let (_, best) = boolquad::brute_force(&problem).unwrap();
        let cfg = SdpSolverConfig {
            seed: trial,
            ..Default::default()
        };
        let got = boolquad::solve(&problem, &cfg).value;
        ratios.push(if best > 0.0 { got / best } else { 1.0 });
    }
    ratios.sort_by(f64::total_cmp);
    let worst = ratios[0];
    let median = (ratios[24] + ratios[25]) / 2.0;
    let ok = worst >= 0.6 && median >= 0.95;
    report(
        1,
        "oracle equivalence",
        ok,
        &format!("50 instances, min ratio {worst:.4}, median ratio {median:.4}"),
    );
    assert!(ok);
}

#[test]
fn ac2_exact_planted_recovery() {
    let dims = [4, 3, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    // The search runs over the planted subset alone; with competing subsets
    // another unfolding can outscore the planted atom on the first step.
    for s in all_subsets(3) {
        for _ in 0..5 {
            let (p, q) = s.shape(&dims);
            let mut z: Vec<bool> = (0..p).map(|_| rng.random_bool(0.5)).collect();
            if !z.contains(&true) {
                z[0] = true;
            }
            let v: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..3.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f64> = v.iter().map(|x| 5.0 * x / norm).collect();
            let x = tensor::refold_outer(&z, &v, &s, &dims).unwrap();
            let cfg = FitConfig {
                max_atoms: 1,
                solver: Solver::Exhaustive,
                ..Default::default()
            };
            let partition = Partition::new(vec![s.clone()], 3).unwrap();
            let (model, _) = fit(&Objective::dense(x.clone()), &partition, &cfg, None).unwrap();
            let residual = tensor::frobenius_norm(&x.sub(&reconstruct(&model).unwrap()).unwrap());
            worst = worst.max(residual);
        }
    }
    let ok = worst <= 1e-9;
    report(
        2,
        "exact planted recovery",
        ok,
        &format!("30 planted atoms on (4,3,2), every subset, worst residual {worst:.3e}"),
    );
    assert!(ok);
}

struct MatrixFit {
    label: String,
    obj: Objective,
    partition: Partition,
    cfg: FitConfig,
}

/// Dense and masked fits on noisy low-rank data at two and three modes.
fn test_matrix() -> Vec<MatrixFit> {
    let mut out = Vec::new();
    for (dims, spec) in [
        (vec![12, 9], "1"),
        (vec![8, 6, 5], "1;2;3"),
        (vec![8, 6, 5], "1;2;3;1,2;1,3;2,3"),
    ] {
        for seed in 0..3u64 {
            let synth = SynthSpec {
                dims: dims.clone(),
                atoms: 4,
                seed,
                ..Default::default()
            };
            let (truth, _) = bench::generate_ground_truth(&synth).unwrap();
            let noisy = bench::add_gaussian_noise(&truth, 0.5, seed).unwrap();
            let mask = bench::sample_mask(&dims, 0.2, seed).unwrap();
            let cfg = FitConfig {
                max_atoms: 15,
                stop_tol: 0.0,
                seed,
                ..Default::default()
            };
            let partition = parse_partitions(spec, dims.len()).unwrap();
            out.push(MatrixFit {
                label: format!("dense {dims:?} [{spec}] seed {seed}"),
                obj: Objective::dense(noisy.clone()),
                partition: partition.clone(),
                cfg: cfg.clone(),
            });
            out.push(MatrixFit {
                label: format!("masked {dims:?} [{spec}] seed {seed}"),
                obj: Objective::masked(noisy, mask).unwrap(),
                partition,
                cfg,
            });
        }
    }
    out
}

#[test]
fn ac3_objective_is_monotone() {
    let mut failures = Vec::new();
    let mut steps = 0;
    let fits = test_matrix();
    for m in &fits {
        let (_, trace) = fit(&m.obj, &m.partition, &m.cfg, None).unwrap();
        let mut prev = trace.initial_objective;
        for r in &trace.records {
            steps += 1;
            if r.objective > prev + 1e-12 {
                failures.push(format!(
                    "{} iter {}: {} > {}",
                    m.label, r.iter, r.objective, prev
                ));
            }
            prev = r.objective;
        }
    }
    let ok = failures.is_empty();
    report(
        3,
        "monotone objective",
        ok,
        &format!(
            "{} fits, {steps} iterations, {} violations {:?}",
            fits.len(),
            failures.len(),
            failures
        ),
    );
    assert!(ok);
}

/// Largest `|<atom, R>_obs| / (||atom|| ||X||_obs)` with the residual formed
/// from scratch.
fn relative_correlation(obj: &Objective, model: &tensor_lfm::Model) -> f64 {
    let w = reconstruct(model).unwrap();
    let x = obj.data();
    let keep = |i: usize| obj.mask().is_none_or(|m| m.is_observed(i));
    let resid: Vec<f64> = (0..x.len())
        .map(|i| {
            if keep(i) {
                x.data()[i] - w.data()[i]
            } else {
                0.0
            }
        })
        .collect();
    let x_norm = (0..x.len())
        .filter(|&i| keep(i))
        .map(|i| x.data()[i].powi(2))
        .sum::<f64>()
        .sqrt();
    model
        .atoms
        .iter()
        .map(|a| {
            let t = a.to_tensor(&model.dims).unwrap();
            let dot: f64 = t.data().iter().zip(&resid).map(|(u, r)| u * r).sum();
            dot.abs() / (tensor::frobenius_norm(&t) * x_norm)
        })
        .fold(0.0, f64::max)
}

#[test]
fn ac4_normal_equations_hold() {
    let mut worst_logged = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut checked = 0;
    for m in test_matrix() {
        fit_with_observer(&m.obj, &m.partition, &m.cfg, None, |r, model| {
            if !r.ridge_used {
                checked += 1;
                worst_logged = worst_logged.max(r.normal_eq_residual);
                worst_oracle = worst_oracle.max(relative_correlation(&m.obj, model));
            }
        })
        .unwrap();
    }
    let ok = checked > 0 && worst_logged <= 1e-8 && worst_oracle <= 1e-8;
    report(
        4,
        "normal-equation optimality",
        ok,
        &format!("{checked} unregularized refits, logged {worst_logged:.3e}, recomputed {worst_oracle:.3e}"),
    );
    assert!(ok);
}

#[test]
fn ac5_desk_denoising() {
    let spec = SynthSpec::default();
    let sigma = 0.1;
    let (truth, _) = bench::generate_ground_truth(&spec).unwrap();
    let noisy = bench::add_gaussian_noise(&truth, sigma, spec.seed).unwrap();
    let noisy_rmse = bench::rmse(&truth, &noisy).unwrap();
    let cfg = FitConfig {
        max_atoms: 18,
        seed: spec.seed,
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=18).collect();
    let partition = parse_partitions("1;2;3", 3).unwrap();
    let curve = bench::run_denoise_curve(&spec, sigma, &partition, &cfg, &grid).unwrap();
    let last = curve.last().unwrap();
    let denoises = last.atom_count == 18 && last.rmse < noisy_rmse;
    let mut best = f64::INFINITY;
    let mut band_ok = true;
    for r in &curve {
        band_ok &= r.rmse <= 1.05 * best;
        best = best.min(r.rmse);
    }
    let ok = denoises && band_ok;
    report(
        5,
        "desk denoising",
        ok,
        &format!(
            "RMSE at {} atoms {:.4} vs noisy {noisy_rmse:.4} ({}), 5% monotone band {}",
            last.atom_count,
            last.rmse,
            if denoises { "below" } else { "not below" },
            if band_ok { "holds" } else { "violated" },
        ),
    );
    assert!(ok);
}

#[test]
fn ac6_desk_recovery() {
    let spec = SynthSpec::default();
    let frac = 0.1;
    let cfg = FitConfig {
        max_atoms: 18,
        seed: spec.seed,
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=18).collect();
    let partition = parse_partitions("1;2;3", 3).unwrap();
    let curve = bench::run_recovery_curve(
        &spec,
        frac,
        bench::Imputation::Masked,
        &partition,
        &cfg,
        &grid,
    )
    .unwrap();
    let held = curve.last().unwrap().heldout_rmse.unwrap();
    let (truth, _) = bench::generate_ground_truth(&spec).unwrap();
    let mask = bench::sample_mask(&spec.dims, frac, spec.seed).unwrap();
    let baseline = bench::rmse_masked(
        &truth,
        &bench::observed_mean_fill(&truth, &mask).unwrap(),
        &mask,
        true,
    )
    .unwrap();
    let ok = held < baseline;
    report(
        6,
        "desk recovery",
        ok,
        &format!("held-out RMSE {held:.4} vs observed-mean fill {baseline:.4}"),
    );
    assert!(ok);
}

#[test]
fn ac7_unfold_refold_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut cases = 0;
    let mut worst_norm = 0.0f64;
    let mut exact = true;
    for _ in 0..200 {
        let order = rng.random_range(2..=4);
        let dims: Vec<usize> = (0..order).map(|_| rng.random_range(1..=5)).collect();
        let x = gaussian(&dims, &mut rng);
        for s in all_subsets(order) {
            cases += 1;
            let m = tensor::unfold(&x, &s).unwrap();
            // Position of every entry from the mixed-radix index formula.
            let (p, q) = s.shape(&dims);
            exact &= m.dims() == [p, q];
            let mut idx = vec![0usize; order];
            for flat in 0..x.len() {
                let mut rest = flat;
                for (k, &n) in dims.iter().enumerate() {
                    idx[k] = rest % n;
                    rest /= n;
                }
                let (mut row, mut col, mut rs, mut cs) = (0, 0, 1, 1);
                for (k, &n) in dims.iter().enumerate() {
                    if s.contains(k + 1) {
                        row += idx[k] * rs;
                        rs *= n;
                    } else {
                        col += idx[k] * cs;
                        cs *= n;
                    }
                }
                exact &= m.at(row, col) == x.get(&idx);
            }
            exact &= tensor::refold(&m, &s, &dims).unwrap() == x;
            let nx = tensor::frobenius_norm(&x);
            let rel = (tensor::frobenius_norm(&m) - nx).abs() / nx.max(1.0);
            worst_norm = worst_norm.max(rel);
        }
    }
    let ok = exact && worst_norm <= 1e-12;
    report(
        7,
        "unfold/refold round trip",
        ok,
        &format!("200 tensors, {cases} subsets, exact {exact}, isometry error {worst_norm:.3e}"),
    );
    assert!(ok);
}

fn run_cli(args: &[&str], dir: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_tlfm"))
        .args(args)
        .current_dir(dir)
        .status()
        .unwrap();
    assert!(status.success(), "tlfm {args:?} failed");
}

#[test]
fn ac8_cli_fit_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_cli(
        &[
            "synth",
            "--dims",
            "10,8,6",
            "--seed",
            "8",
            "--out",
            "truth.tlt",
        ],
        d,
    );
    run_cli(
        &[
            "noise",
            "--in",
            "truth.tlt",
            "--sigma",
            "0.1",
            "--seed",
            "8",
            "--out",
            "x.tlt",
        ],
        d,
    );
    let fit_args = |tag: &str| {
        vec![
            "fit".to_string(),
            "--in".into(),
            "x.tlt".into(),
            "--truth".into(),
            "truth.tlt".into(),
            "--partitions".into(),
            "1;2;3;1,2".into(),
            "--max-atoms".into(),
            "12".into(),
            "--seed".into(),
            "8".into(),
            "--model".into(),
            format!("model{tag}.json"),
            "--trace".into(),
            format!("trace{tag}.csv"),
        ]
    };
    for tag in ["a", "b"] {
        let args = fit_args(tag);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_cli(&refs, d);
    }
    let read = |name: &str| std::fs::read(d.join(name)).unwrap();
    let model_same = read("modela.json") == read("modelb.json");
    let trace_same = read("tracea.csv") == read("traceb.csv");
    let ok = model_same && trace_same;
    report(
        8,
        "determinism",
        ok,
        &format!("model JSON identical {model_same}, trace CSV identical {trace_same}"),
    );
    assert!(ok);
}

/// Soft check: a violation writes a warning file instead of failing.
#[test]
fn ac9_convergence_trend() {
    let spec = SynthSpec::default();
    let (truth, _) = bench::generate_ground_truth(&spec).unwrap();
    let cfg = FitConfig {
        max_atoms: 6,
        stop_tol: 0.0,
        ..Default::default()
    };
    let partition = parse_partitions("1;2;3", 3).unwrap();
    let (_, trace) = fit(&Objective::dense(truth), &partition, &cfg, None).unwrap();
    let trend = trace.convergence_trend();
    let at2 = trend.get(1).copied().unwrap_or(0.0);
    let peak = trend.iter().copied().fold(0.0, f64::max);
    let ok = peak <= 10.0 * at2;
    let seq: Vec<String> = trend.iter().map(|t| format!("{t:.3e}")).collect();
    let detail = format!(
        "k(F_k - F_final) = [{}], max {peak:.3e} vs 10x k=2 {:.3e}",
        seq.join(", "),
        10.0 * at2
    );
    if !ok {
        let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("convergence_trend_warning.txt");
        std::fs::write(&path, format!("{detail}\n")).unwrap();
        report(
            9,
            "convergence trend (soft)",
            false,
            &format!("warning written to {}", path.display()),
        );
    } else {
        report(9, "convergence trend (soft)", true, &detail);
    }
}
