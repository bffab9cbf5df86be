use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tensor_lfm::bench::{self, Imputation, SynthSpec};
use tensor_lfm::boolquad::{self, BoolQuadProblem};
use tensor_lfm::io::{self, ModelMeta};
use tensor_lfm::linalg::SquareMatrix;
use tensor_lfm::{
    fit, parse_partitions, reconstruct, tensor, Error, FitConfig, Objective, Partition, Result,
    SdpSolverConfig, Solver, Tensor,
};

#[derive(Parser, Debug)]
#[command(
    name = "tlfm",
    version,
    about = "Binary matching pursuit for tensor latent features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate a planted ground-truth tensor.
    Synth,
    /// Add i.i.d. Gaussian noise to a tensor.
    Noise,
    /// Sample an observation mask.
    Mask,
    /// Fit a model with binary matching pursuit.
    Fit,
    /// Rebuild the dense tensor from a model.
    Reconstruct,
    /// RMSE between two tensors.
    Eval,
    /// RMSE-vs-atoms curve on synthetic data.
    Curve,
    /// Exhaustive Boolean quadratic solve of a square matrix.
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Denoise,
    Recovery,
}

/// Every flag is optional so that a `--config` file can fill the gaps.
#[derive(clap::Args, Debug, Default)]
struct Flags {
    /// key=value file with defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dims: Option<String>,
    #[arg(long, global = true)]
    atoms: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    missing: Option<f64>,
    #[arg(long, global = true)]
    partitions: Option<String>,
    #[arg(long = "max-atoms", global = true)]
    max_atoms: Option<usize>,
    #[arg(long = "stop-tol", global = true)]
    stop_tol: Option<f64>,
    #[arg(long, global = true)]
    ridge: Option<f64>,
    #[arg(long = "sdp-rank", global = true)]
    sdp_rank: Option<usize>,
    #[arg(long = "sdp-sweeps", global = true)]
    sdp_sweeps: Option<usize>,
    #[arg(long = "sdp-tol", global = true)]
    sdp_tol: Option<f64>,
    #[arg(long = "rounding-trials", global = true)]
    rounding_trials: Option<usize>,
    /// Boolean subproblem solver: sdp or exhaustive.
    #[arg(long, global = true)]
    solver: Option<String>,
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    mask: Option<PathBuf>,
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// Estimate to score in `eval`.
    #[arg(long, global = true)]
    est: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Use 100x100x10 synthetic extents.
    #[arg(long = "paper-scale", global = true)]
    paper_scale: bool,
    /// Curve task.
    #[arg(long, global = true, value_enum)]
    task: Option<Task>,
    /// Atom counts for `curve`, comma separated.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Fit masked data densely with missing entries set to zero.
    #[arg(long = "zero-fill", global = true)]
    zero_fill: bool,
    /// `eval` over unobserved entries of `--mask`.
    #[arg(long = "held-out", global = true)]
    held_out: bool,
    /// Write the Boolean subproblem matrix and its lift as CSV into this
    /// directory.
    #[arg(long = "dump-lift", global = true)]
    dump_lift: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| config_err(format!("bad value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(config_err(format!("bad boolean {v:?} for {key}"))),
    }
}

impl Flags {
    /// Fill every flag that was not given on the command line from the
    /// config file.
    fn merge_config(&mut self) -> Result<()> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        macro_rules! fill {
            ($field:ident, $key:literal) => {
                if self.$field.is_none() {
                    if let Some(v) = entries.remove($key) {
                        self.$field = Some(parse_value($key, &v)?);
                    }
                } else {
                    entries.remove($key);
                }
            };
        }
        fill!(dims, "dims");
        fill!(atoms, "atoms");
        fill!(seed, "seed");
        fill!(sigma, "sigma");
        fill!(missing, "missing");
        fill!(partitions, "partitions");
        fill!(max_atoms, "max-atoms");
        fill!(stop_tol, "stop-tol");
        fill!(ridge, "ridge");
        fill!(sdp_rank, "sdp-rank");
        fill!(sdp_sweeps, "sdp-sweeps");
        fill!(sdp_tol, "sdp-tol");
        fill!(rounding_trials, "rounding-trials");
        fill!(solver, "solver");
        fill!(grid, "grid");
        fill!(input, "in");
        fill!(mask, "mask");
        fill!(truth, "truth");
        fill!(est, "est");
        fill!(model, "model");
        fill!(out, "out");
        fill!(trace, "trace");
        if self.task.is_none() {
            if let Some(v) = entries.remove("task") {
                self.task = Some(Task::from_str(&v, true).map_err(config_err)?);
            }
        }
        for (key, field) in [
            ("paper-scale", &mut self.paper_scale),
            ("zero-fill", &mut self.zero_fill),
            ("held-out", &mut self.held_out),
        ] {
            if let Some(v) = entries.remove(key) {
                *field |= parse_bool(key, &v)?;
            }
        }
        entries.remove("task");
        if let Some(k) = entries.keys().next() {
            return Err(config_err(format!("unknown config key {k:?}")));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| config_err(format!("missing required flag --{flag}")))
    }

    fn dims(&self) -> Result<Vec<usize>> {
        match &self.dims {
            Some(s) => s.split(',').map(|d| parse_value("dims", d)).collect(),
            None if self.paper_scale => Ok(bench::PAPER_DIMS.to_vec()),
            None => Ok(bench::DESK_DIMS.to_vec()),
        }
    }

    fn synth_spec(&self) -> Result<SynthSpec> {
        Ok(SynthSpec {
            dims: self.dims()?,
            atoms: self.atoms.unwrap_or(6),
            seed: self.seed(),
            ..Default::default()
        })
    }

    fn partition(&self, order: usize) -> Result<Partition> {
        match &self.partitions {
            Some(s) => parse_partitions(s, order),
            None => Partition::singletons(order),
        }
    }

    fn fit_config(&self) -> Result<FitConfig> {
        let d = FitConfig::default();
        let solver = match self.solver.as_deref() {
            None | Some("sdp") => Solver::Sdp,
            Some("exhaustive") | Some("brute") => Solver::Exhaustive,
            Some(other) => return Err(config_err(format!("unknown solver {other:?}"))),
        };
        let cfg = FitConfig {
            max_atoms: self.max_atoms.unwrap_or(d.max_atoms),
            stop_tol: self.stop_tol.unwrap_or(d.stop_tol),
            ridge: self.ridge.unwrap_or(d.ridge),
            solver,
            sdp: SdpSolverConfig {
                rank: self.sdp_rank.or(d.sdp.rank),
                max_sweeps: self.sdp_sweeps.unwrap_or(d.sdp.max_sweeps),
                tol: self.sdp_tol.unwrap_or(d.sdp.tol),
                rounding_trials: self.rounding_trials.unwrap_or(d.sdp.rounding_trials),
                ..d.sdp
            },
            seed: self.seed(),
            duplicate_retry_budget: d.duplicate_retry_budget,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn grid(&self, cfg: &FitConfig) -> Result<Vec<usize>> {
        match &self.grid {
            Some(s) => s.split(',').map(|g| parse_value("grid", g)).collect(),
            None => Ok((1..=cfg.max_atoms).collect()),
        }
    }
}

fn dump_lift(dir: &Path, name: &str, problem: &BoolQuadProblem) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    io::write_csv_matrix(dir.join(format!("{name}A.csv")), problem.matrix())?;
    io::write_csv_matrix(
        dir.join(format!("{name}lift.csv")),
        boolquad::lift(problem).matrix(),
    )
}

fn run(cmd: Command, f: &Flags) -> Result<()> {
    match cmd {
        Command::Synth => {
            let spec = f.synth_spec()?;
            let (x, planted) = bench::generate_ground_truth(&spec)?;
            io::write_tensor(f.require(&f.out, "out")?, &x)?;
            if let Some(path) = &f.model {
                io::write_model(path, &bench::planted_model(&spec.dims, &planted)?, None)?;
            }
        }
        Command::Noise => {
            let x = io::read_tensor_any(f.require(&f.input, "in")?)?;
            let y = bench::add_gaussian_noise(&x, f.sigma.unwrap_or(0.1), f.seed())?;
            io::write_tensor(f.require(&f.out, "out")?, &y)?;
        }
        Command::Mask => {
            let dims = match &f.input {
                Some(p) => io::read_tensor_any(p)?.dims().to_vec(),
                None => f.dims()?,
            };
            let m = bench::sample_mask(&dims, f.missing.unwrap_or(0.1), f.seed())?;
            io::write_mask(f.require(&f.out, "out")?, &m)?;
        }
        Command::Fit => {
            let x = io::read_tensor_any(f.require(&f.input, "in")?)?;
            let cfg = f.fit_config()?;
            let partition = f.partition(x.order())?;
            let obj = match &f.mask {
                Some(p) => {
                    let m = io::read_mask(p)?;
                    if f.zero_fill {
                        Objective::dense(tensor::apply_mask(&x, &m)?)
                    } else {
                        Objective::masked(x.clone(), m)?
                    }
                }
                None => Objective::dense(x.clone()),
            };
            if let Some(dir) = &f.dump_lift {
                let grad = tensor_lfm::gradient(&obj, &Tensor::zeros(x.dims())?)?;
                for (i, s) in partition.subsets().iter().enumerate() {
                    let g = tensor::unfold(&grad, s)?;
                    dump_lift(dir, &format!("part{i}_"), &BoolQuadProblem::from_factor(&g))?;
                }
            }
            let truth = f.truth.as_ref().map(io::read_tensor_any).transpose()?;
            let (model, trace) = fit(&obj, &partition, &cfg, truth.as_ref())?;
            let meta = ModelMeta {
                seed: cfg.seed,
                config: cfg.clone(),
            };
            io::write_model(f.require(&f.model, "model")?, &model, Some(&meta))?;
            if let Some(path) = &f.trace {
                io::write_trace(path, &trace)?;
            }
            let objective = trace
                .records
                .last()
                .map_or(trace.initial_objective, |r| r.objective);
            println!("objective {objective} atoms {}", model.len());
        }
        Command::Reconstruct => {
            let (model, _) = io::read_model(f.require(&f.model, "model")?)?;
            io::write_tensor(f.require(&f.out, "out")?, &reconstruct(&model)?)?;
        }
        Command::Eval => {
            let truth = io::read_tensor_any(f.require(&f.truth, "truth")?)?;
            let est = match (&f.est, &f.model) {
                (Some(p), _) => io::read_tensor_any(p)?,
                (None, Some(m)) => reconstruct(&io::read_model(m)?.0)?,
                (None, None) => return Err(config_err("eval needs --est or --model")),
            };
            let value = match &f.mask {
                Some(p) => bench::rmse_masked(&truth, &est, &io::read_mask(p)?, f.held_out)?,
                None => bench::rmse(&truth, &est)?,
            };
            println!("{}", serde_json::json!({ "rmse": value }));
        }
        Command::Curve => {
            let spec = f.synth_spec()?;
            let cfg = f.fit_config()?;
            let grid = f.grid(&cfg)?;
            let partition = f.partition(spec.dims.len())?;
            let records = match f.task.unwrap_or(Task::Denoise) {
                Task::Denoise => bench::run_denoise_curve(
                    &spec,
                    f.sigma.unwrap_or(0.1),
                    &partition,
                    &cfg,
                    &grid,
                )?,
                Task::Recovery => bench::run_recovery_curve(
                    &spec,
                    f.missing.unwrap_or(0.1),
                    if f.zero_fill {
                        Imputation::ZeroFill
                    } else {
                        Imputation::Masked
                    },
                    &partition,
                    &cfg,
                    &grid,
                )?,
            };
            match &f.out {
                Some(p) => io::write_curve(p, &records)?,
                None => print!("{}", io::curve_to_csv(&records)),
            }
        }
        Command::Oracle => {
            let m = SquareMatrix::from_tensor(&io::read_tensor_any(f.require(&f.input, "in")?)?)?;
            let problem = BoolQuadProblem::new(m)?;
            if let Some(dir) = &f.dump_lift {
                dump_lift(dir, "", &problem)?;
            }
            let (z, value) = boolquad::brute_force(&problem)?;
            let bits: String = z.iter().map(|&b| if b { '1' } else { '0' }).collect();
            println!("{}", serde_json::json!({ "z": bits, "value": value }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    let result = cli
        .flags
        .merge_config()
        .and_then(|()| run(cli.command, &cli.flags));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
