use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use lde_core::benchfn::{make_suite, FunctionInstance, Objective};
use lde_core::neural::{gradient_check, ControllerWeights, Dims};
use lde_core::policy::PolicyConfig;
use lde_core::runner::{self, AlgorithmId, DeConfig, RunResult, Termination};
use lde_core::stats::{ComparisonTable, DEFAULT_ALPHA};
use lde_core::trainer::{self, EpochLogRow, TrainConfig};
use lde_core::weightfile::WeightFile;

use crate::config::Settings;
use crate::error::{usage, CliError, CliResult, IoContext};

pub const MANIFEST: &str = "manifest.txt";

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).at(path)
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).at(path)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).at(path)
}

/// Loads the instances listed under `role` in a suite directory's manifest,
/// or the explicit instance files when any are given.
fn load_functions(
    suite: Option<&Path>,
    role: &str,
    files: &[PathBuf],
) -> CliResult<Vec<FunctionInstance>> {
    let paths: Vec<PathBuf> = if !files.is_empty() {
        files.to_vec()
    } else {
        let dir = suite.ok_or_else(|| usage("give --suite DIR or --functions FILE..."))?;
        let manifest = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest).at(&manifest)?;
        text.lines()
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some(r), Some(file)) if r == role => Some(dir.join(file)),
                    _ => None,
                }
            })
            .collect()
    };
    if paths.is_empty() {
        return Err(usage(format!("no `{role}` functions found")));
    }
    let fns = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).at(p)?;
            FunctionInstance::from_text(&text).map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    if fns.iter().any(|f| f.dim != fns[0].dim) {
        return Err(usage("functions differ in dimension"));
    }
    Ok(fns)
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// Problem dimension n.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of training instances.
    #[arg(long)]
    pub train: Option<usize>,
    /// Number of held-out test instances.
    #[arg(long)]
    pub test: Option<usize>,
}

pub fn suite(args: SuiteArgs, s: &Settings, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let dim = s.get(args.dim, "dim", 10)?;
    let n_train = s.get(args.train, "train", 6)?;
    let n_test = s.get(args.test, "test", 8)?;
    if dim == 0 || n_train == 0 || n_test == 0 {
        return Err(usage("--dim, --train and --test must be positive"));
    }
    let out = s.get(out, "out", PathBuf::from("suite"))?;
    let (train, test) = make_suite(seed, dim, n_train, n_test)?;
    create_dir(&out)?;
    let mut manifest = String::new();
    for (role, fns) in [("train", &train), ("test", &test)] {
        for f in fns {
            let file = format!("{}.txt", f.id);
            write_text(&out.join(&file), &f.to_text())?;
            manifest.push_str(&format!("{role} {file}\n"));
            println!("{role} {}", f.id);
        }
    }
    write_text(&out.join(MANIFEST), &manifest)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Suite directory (written by `lde suite`); uses its `train` entries.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Explicit instance files, instead of --suite.
    #[arg(long, num_args = 1..)]
    pub functions: Vec<PathBuf>,
    /// Q
    #[arg(long)]
    pub epochs: Option<usize>,
    /// L, rollouts per function and epoch.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// T, generations per rollout.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// N
    #[arg(long)]
    pub pop_size: Option<usize>,
    /// b, histogram bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// g, histogram moving-average window.
    #[arg(long)]
    pub window: Option<usize>,
    /// H, LSTM hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Policy standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    /// Fraction of the population eligible as pbest.
    #[arg(long)]
    pub p: Option<f64>,
    /// Subtract each function's mean return from its trajectories' returns.
    #[arg(long)]
    pub baseline: bool,
    /// Write a checkpoint every k epochs (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run into the same --out.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Record per-epoch wall-clock time in the log (otherwise 0, keeping reruns byte-identical).
    #[arg(long)]
    pub record_timing: bool,
}

/// Every hyperparameter that must agree between a checkpoint and its resumption.
fn fingerprint(cfg: &TrainConfig, fns: &[FunctionInstance]) -> String {
    let ids: Vec<&str> = fns.iter().map(|f| f.id.as_str()).collect();
    format!(
        "L={},T={},N={},b={},g={},H={},alpha={},sigma={},f_min={},p={},baseline={},functions={}",
        cfg.trajectories,
        cfg.horizon,
        cfg.pop_size,
        cfg.bins,
        cfg.window,
        cfg.hidden,
        cfg.alpha,
        cfg.policy.sigma,
        cfg.policy.f_min,
        cfg.p,
        cfg.baseline,
        ids.join("+")
    )
}

fn weight_file(
    cfg: &TrainConfig,
    w: &ControllerWeights,
    epochs_done: usize,
    print: &str,
) -> WeightFile {
    WeightFile {
        weights: w.clone(),
        bins: cfg.bins,
        seed: cfg.seed,
        training_metadata: format!(
            "epochs_done={epochs_done};epochs={};sigma={};f_min={};p={};window={};config={print}",
            cfg.epochs, cfg.policy.sigma, cfg.policy.f_min, cfg.p, cfg.window
        ),
    }
}

fn append_log(path: &Path, row: &EpochLogRow) -> CliResult<()> {
    let file = OpenOptions::new().append(true).open(path).at(path)?;
    trainer::write_log(BufWriter::new(file), std::slice::from_ref(row), false)?;
    Ok(())
}

pub fn train(args: TrainArgs, s: &Settings, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: s.get(args.epochs, "epochs", defaults.epochs)?,
        trajectories: s.get(args.trajectories, "trajectories", defaults.trajectories)?,
        horizon: s.get(args.horizon, "horizon", defaults.horizon)?,
        pop_size: s.get(args.pop_size, "pop_size", defaults.pop_size)?,
        bins: s.get(args.bins, "bins", defaults.bins)?,
        window: s.get(args.window, "window", defaults.window)?,
        hidden: s.get(args.hidden, "hidden", defaults.hidden)?,
        alpha: s.get(args.alpha, "alpha", defaults.alpha)?,
        policy: PolicyConfig {
            sigma: s.get(args.sigma, "sigma", defaults.policy.sigma)?,
            f_min: s.get(args.f_min, "f_min", defaults.policy.f_min)?,
        },
        p: s.get(args.p, "p", defaults.p)?,
        seed,
        baseline: s.switch(args.baseline, "baseline")?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let checkpoint_every = s.get(args.checkpoint_every, "checkpoint_every", 10)?;
    let record_timing = s.switch(args.record_timing, "record_timing")?;
    let suite_dir = s.opt(args.suite, "suite")?;
    let fns = load_functions(suite_dir.as_deref(), "train", &args.functions)?;
    let out = s.get(out, "out", PathBuf::from("train_out"))?;
    create_dir(&out)?;
    let print = fingerprint(&cfg, &fns);
    let log_path = out.join("train_log.csv");

    let (start, weights) = match &args.resume {
        Some(ckpt) => {
            let wf = WeightFile::load(ckpt)?;
            let done: usize = wf
                .metadata("epochs_done")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| usage("checkpoint lacks epochs_done"))?;
            if wf.metadata("config") != Some(print.as_str()) || wf.seed != seed {
                return Err(usage(
                    "checkpoint was written with a different configuration or seed",
                ));
            }
            if done > cfg.epochs {
                return Err(usage(format!(
                    "checkpoint is at epoch {done}, beyond --epochs {}",
                    cfg.epochs
                )));
            }
            let text = fs::read_to_string(&log_path).at(&log_path)?;
            let kept: Vec<&str> = text.lines().take(done + 1).collect();
            if kept.len() != done + 1 {
                return Err(usage(format!(
                    "{} holds fewer than {done} epochs",
                    log_path.display()
                )));
            }
            write_text(&log_path, &(kept.join("\n") + "\n"))?;
            (done, wf.weights)
        }
        None => {
            let dims = cfg.dims()?;
            let ids: Vec<String> = fns.iter().map(|f| f.id.clone()).collect();
            let header = trainer::log_header(&ids).join(",") + "\n";
            write_text(&log_path, &header)?;
            (0, ControllerWeights::init(dims, seed))
        }
    };

    let ckpt_dir = out.join("checkpoints");
    if checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    let outcome = trainer::train_from(&fns, &cfg, weights, start, |epoch, w, row| {
        let mut row = row.clone();
        if !record_timing {
            row.wallclock_ms = 0;
        }
        append_log(&log_path, &row).map_err(to_core)?;
        println!(
            "epoch {epoch:>4}  mean_return {:.6}  grad_norm {:.6}",
            row.mean_return, row.grad_norm
        );
        if checkpoint_every > 0 && epoch % checkpoint_every == 0 {
            weight_file(&cfg, w, epoch, &print)
                .save(ckpt_dir.join(format!("epoch-{epoch:04}.lde")))?;
        }
        Ok(())
    });
    match outcome {
        Ok(done) => {
            let path = out.join("weights.lde");
            weight_file(&cfg, &done.weights, done.epochs_done, &print).save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Err(failure) => {
            let path = out.join("last_good.lde");
            weight_file(&cfg, &failure.last_good, failure.epochs_done, &print).save(&path)?;
            eprintln!(
                "training stopped after {} epochs; last good weights in {}",
                failure.epochs_done,
                path.display()
            );
            Err(failure.error.into())
        }
    }
}

fn to_core(e: CliError) -> lde_core::LdeError {
    match e {
        CliError::Core(inner) => inner,
        CliError::Io { source, .. } => source.into(),
        other => lde_core::LdeError::InvalidArgument(other.to_string()),
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Suite directory; uses its entries of --role.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Manifest role to evaluate on.
    #[arg(long)]
    pub role: Option<String>,
    /// Explicit instance files, instead of --suite.
    #[arg(long, num_args = 1..)]
    pub functions: Vec<PathBuf>,
    /// Controller weight file (needed for `lde`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated: lde, de_rand1_fixed, ctpb_fixed, random_params.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    /// Independent runs per algorithm and function.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Evaluation budget per run (default n × 10⁴).
    #[arg(long)]
    pub max_evals: Option<usize>,
    #[arg(long)]
    pub error_tol: Option<f64>,
    #[arg(long)]
    pub pop_size: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Use the controller mean instead of sampling around it.
    #[arg(long)]
    pub deterministic: bool,
    /// Write one best-error trace CSV per run.
    #[arg(long)]
    pub traces: bool,
    /// Write per-tercile F/CR traces for learned-DE runs.
    #[arg(long)]
    pub param_trace: bool,
}

/// A training-time setting recorded in a weight file's metadata.
fn trained<T: std::str::FromStr>(w: &Option<WeightFile>, key: &str) -> Option<T> {
    w.as_ref()?.metadata(key)?.parse().ok()
}

pub fn run(args: RunArgs, s: &Settings, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let role = s.get(args.role, "role", "test".to_string())?;
    let suite_dir = s.opt(args.suite, "suite")?;
    let fns = load_functions(suite_dir.as_deref(), &role, &args.functions)?;
    let dim = fns[0].dim();
    let names = s.list(args.algorithms, "algorithms")?;
    let algorithms: Vec<AlgorithmId> = if names.is_empty() {
        AlgorithmId::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| {
                n.parse()
                    .map_err(|e: lde_core::LdeError| usage(e.to_string()))
            })
            .collect::<CliResult<_>>()?
    };
    let weights = match s.opt(args.weights, "weights")? {
        Some(path) => Some(WeightFile::load(&path)?),
        None if algorithms.contains(&AlgorithmId::Lde) => {
            return Err(usage("the learned DE (`lde`) needs --weights"))
        }
        None => None,
    };
    let base = DeConfig::default();
    let cfg = DeConfig {
        pop_size: s.get(
            args.pop_size,
            "pop_size",
            weights
                .as_ref()
                .map_or(base.pop_size, |w| w.weights.dims().pop),
        )?,
        bins: s.get(
            args.bins,
            "bins",
            weights.as_ref().map_or(base.bins, |w| w.bins),
        )?,
        window: s.get(
            args.window,
            "window",
            trained(&weights, "window").unwrap_or(base.window),
        )?,
        p: s.get(args.p, "p", trained(&weights, "p").unwrap_or(base.p))?,
        policy: PolicyConfig {
            sigma: s.get(
                args.sigma,
                "sigma",
                trained(&weights, "sigma").unwrap_or(base.policy.sigma),
            )?,
            f_min: s.get(
                args.f_min,
                "f_min",
                trained(&weights, "f_min").unwrap_or(base.policy.f_min),
            )?,
        },
        deterministic: s.switch(args.deterministic, "deterministic")?,
        record_params: s.switch(args.param_trace, "param_trace")?,
    };
    cfg.policy.validate().map_err(|e| usage(e.to_string()))?;
    if cfg.pop_size < lde_core::de::MIN_POPULATION || cfg.bins == 0 || cfg.window == 0 {
        return Err(usage("pop_size must be ≥ 4; bins and window positive"));
    }
    let term = Termination {
        max_evals: s.get(
            args.max_evals,
            "max_evals",
            Termination::standard(dim).max_evals,
        )?,
        error_tol: s.get(args.error_tol, "error_tol", 1e-8)?,
    };
    let runs = s.get(args.runs, "runs", 11)?;
    if runs == 0 {
        return Err(usage("--runs must be positive"));
    }
    let traces = s.switch(args.traces, "traces")?;
    let out = s.get(out, "out", PathBuf::from("run_out"))?;
    create_dir(&out)?;
    if traces {
        create_dir(&out.join("traces"))?;
    }
    if cfg.record_params {
        create_dir(&out.join("params"))?;
    }

    let results_path = out.join("results.csv");
    let mut results = runner::ResultsWriter::new(File::create(&results_path).at(&results_path)?)?;
    let mut index = 0usize;
    let sink = |r: &RunResult| -> lde_core::Result<()> {
        let run = index % runs;
        index += 1;
        results.push(r)?;
        if traces {
            let path = out.join("traces").join(format!(
                "{}__{}__r{run:02}.csv",
                r.algorithm_id, r.function_id
            ));
            runner::write_trace(File::create(path)?, r)?;
        }
        if let Some(rows) = &r.param_trace {
            if r.algorithm_id == AlgorithmId::Lde.name() {
                let path = out
                    .join("params")
                    .join(format!("{}__r{run:02}.csv", r.function_id));
                runner::write_param_trace(File::create(path)?, rows)?;
            }
        }
        println!(
            "{:<15} {:<28} run {run:>2}  best_error {:.6e}  evals {}",
            r.algorithm_id, r.function_id, r.best_error, r.evals_used
        );
        Ok(())
    };
    runner::batch_experiment(
        &algorithms,
        weights.as_ref().map(|w| &w.weights),
        &fns,
        runs,
        &term,
        &cfg,
        seed,
        sink,
    )?;
    println!("wrote {}", results_path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Results CSVs written by `lde run`.
    #[arg(long, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Algorithm the others are marked against (default: lde if present, else the first).
    #[arg(long)]
    pub reference: Option<String>,
    /// Significance level of the rank-sum tests.
    #[arg(long)]
    pub significance: Option<f64>,
}

pub fn compare(args: CompareArgs, s: &Settings, out: Option<PathBuf>) -> CliResult<()> {
    let files: Vec<PathBuf> = s
        .list(
            args.results
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            "results",
        )?
        .into_iter()
        .map(PathBuf::from)
        .collect();
    if files.is_empty() {
        return Err(usage("give at least one --results file"));
    }
    let alpha = s.get(args.significance, "significance", DEFAULT_ALPHA)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage("--significance must lie in (0, 1)"));
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(runner::read_results(File::open(f).at(f)?)?);
    }
    let table = ComparisonTable::from_results(&rows, alpha)?;
    let reference = match s.opt(args.reference, "reference")? {
        Some(r) => table
            .algorithm_index(&r)
            .map_err(|e| usage(e.to_string()))?,
        None => table.algorithm_index(AlgorithmId::Lde.name()).unwrap_or(0),
    };
    let out = s.get(out, "out", PathBuf::from("compare_out"))?;
    create_dir(&out)?;
    table.write_csv(create_file(&out.join("comparison.csv"))?, reference)?;
    let text = table.render_text(reference);
    write_text(&out.join("comparison.txt"), &text)?;
    table.write_aps_csv(create_file(&out.join("aps.csv"))?)?;
    print!("{text}");
    println!();
    for (a, score) in table.algorithms.iter().zip(table.aps()?) {
        println!("APS {a:<15} {score:.4}");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// H
    #[arg(long)]
    pub hidden: Option<usize>,
    /// D, controller input width.
    #[arg(long)]
    pub input: Option<usize>,
    /// N, outputs per head.
    #[arg(long)]
    pub pop: Option<usize>,
    /// Rollout length T.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest acceptable relative error.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Scale the analytic gradient by 1.01 before comparing (exercises the failure path).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

pub fn gradcheck(
    args: GradcheckArgs,
    s: &Settings,
    seed: u64,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let dims = Dims::new(
        s.get(args.hidden, "hidden", 8)?,
        s.get(args.input, "input", 6)?,
        s.get(args.pop, "pop", 4)?,
    )
    .map_err(|e| usage(e.to_string()))?;
    let steps = s.get(args.steps, "steps", 5)?;
    let eps = s.get(args.eps, "eps", 1e-6)?;
    let tol = s.get(args.tolerance, "tolerance", 1e-4)?;
    if steps == 0 || !(eps > 0.0) {
        return Err(usage("--steps and --eps must be positive"));
    }
    let r = gradient_check(dims, steps, seed, eps, args.corrupt)?;
    let pass = r.max_rel_error < tol;
    let report = format!(
        "gradcheck H={} D={} N={} T={steps} eps={eps:e} seed={seed}\n\
         parameters checked: {}\n\
         max relative error: {:.3e} (block {}, index {})\n\
         tolerance: {tol:e}\n\
         result: {}\n",
        dims.hidden,
        dims.input,
        dims.pop,
        r.params_checked,
        r.max_rel_error,
        r.worst_block,
        r.worst_index,
        if pass { "PASS" } else { "FAIL" }
    );
    print!("{report}");
    if let Some(dir) = s.opt(out, "out")? {
        create_dir(&dir)?;
        write_text(&dir.join("gradcheck.txt"), &report)?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient check failed: {:.3e} ≥ {tol:e}",
            r.max_rel_error
        )))
    }
}
