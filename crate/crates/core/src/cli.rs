//! Command-line front end: argument parsing, JSON configs and exit codes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baseline::LrmcConfig;
use crate::bench::{
    build_transductive, decode_labels, one_hot, run_grid, sample_mask, write_plot_data,
    write_rows_csv, GridSpec, Method, MethodSettings, Metric, QuarticCoefficient,
};
use crate::complexity::{complexity_report, ComplexityInput};
use crate::error::Error;
use crate::io::{read_masked_csv, write_completed_csv};
use crate::kernels::KernelSpec;
use crate::objectives::{RelaxationSpec, WeightRule};
use crate::solver::{solve_pmc, FitMode, Init, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Overflow { .. } => EXIT_USAGE,
        Error::Singular { .. } | Error::Diverged { .. } => EXIT_SOLVER,
        Error::InvalidInput(_)
        | Error::DimensionMismatch(_)
        | Error::FeatureMapTooLarge { .. }
        | Error::NothingToComplete
        | Error::ZeroDenominator(_)
        | Error::Parse { .. }
        | Error::Io { .. } => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "polymc", version, about = "High-rank matrix completion in polynomial feature space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete the missing cells of a CSV matrix.
    Complete(CompleteArgs),
    /// Generate synthetic data and compare the built-in methods.
    Synth(SynthArgs),
    /// Run an experiment grid described by a JSON file.
    Bench(BenchArgs),
    /// Transductive classification by completing a stacked label block.
    Classify(ClassifyArgs),
    /// Degrees of freedom and sampling-rate bound in feature space.
    Mnp(MnpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KernelName {
    Rbf,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RelaxationName {
    R1,
    R2,
    R3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum WeightsName {
    Linear,
    InvSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeName {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum InitName {
    Zero,
    ColumnMean,
}

/// Solver options shared by `complete`, `classify` and grid files. JSON
/// keys are the flag names.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SolverOpts {
    /// Kernel family [default: rbf]
    #[arg(long, value_enum)]
    kernel: Option<KernelName>,
    /// Polynomial kernel order [default: 2]
    #[arg(long)]
    poly_order: Option<u32>,
    /// Polynomial kernel offset [default: 1]
    #[arg(long)]
    poly_offset: Option<f64>,
    /// RBF bandwidth, or "auto" for the mean pairwise distance rule [default: auto]
    #[arg(long)]
    sigma: Option<String>,
    /// Multiplier on the automatic squared bandwidth [default: 1]
    #[arg(long)]
    sigma_scale: Option<f64>,
    /// Rank surrogate: Schatten, truncated or weighted [default: r3]
    #[arg(long, value_enum)]
    relaxation: Option<RelaxationName>,
    /// Schatten exponent in (0, 1] [default: 0.5]
    #[arg(long)]
    p: Option<f64>,
    /// Truncation for r2 [default: number of rows]
    #[arg(long)]
    s: Option<usize>,
    /// Weight rule for r3 [default: linear]
    #[arg(long, value_enum)]
    weights: Option<WeightsName>,
    /// Keep observed cells fixed, or fit them with a penalty [default: hard]
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    /// Residual penalty for soft mode [default: 1]
    #[arg(long)]
    lambda: Option<f64>,
    /// Starting values of missing cells [default: zero]
    #[arg(long, value_enum)]
    init: Option<InitName>,
    /// Initial Adam step [default: 1e-4]
    #[arg(long)]
    step: Option<f64>,
    /// Iteration cap [default: 1000]
    #[arg(long)]
    tmax: Option<usize>,
    /// Stop when no cell moves more than this [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Seed recorded with the run [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! overlay {
    ($a:expr, $b:expr; $($f:ident),*) => {
        SolverOpts { $($f: $a.$f.or($b.$f)),* }
    };
}

impl SolverOpts {
    /// Fields set in `self` win over `base`.
    fn over(self, base: SolverOpts) -> SolverOpts {
        overlay!(self, base; kernel, poly_order, poly_offset, sigma, sigma_scale, relaxation,
            p, s, weights, mode, lambda, init, step, tmax, tol, seed)
    }

    fn kernel_spec(&self) -> Result<KernelSpec, Error> {
        let spec = match self.kernel.unwrap_or(KernelName::Rbf) {
            KernelName::Poly => {
                KernelSpec::polynomial(self.poly_order.unwrap_or(2), self.poly_offset.unwrap_or(1.0))
            }
            KernelName::Rbf => match self.sigma.as_deref().unwrap_or("auto") {
                "auto" => KernelSpec::rbf_auto(self.sigma_scale.unwrap_or(1.0)),
                s => KernelSpec::rbf(
                    s.parse()
                        .map_err(|_| Error::Config(format!("sigma {s:?} is neither a number nor auto")))?,
                ),
            },
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    fn solver_config(&self, rows: usize) -> Result<SolverConfig, Error> {
        let d = SolverConfig::default();
        let p = self.p.unwrap_or(d.relaxation.p);
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("p = {p} must lie in (0, 1]")));
        }
        let relaxation = match self.relaxation.unwrap_or(RelaxationName::R3) {
            RelaxationName::R1 => RelaxationSpec::schatten(p),
            RelaxationName::R2 => RelaxationSpec::truncated(p, self.s.unwrap_or(rows)),
            RelaxationName::R3 => RelaxationSpec::weighted(
                p,
                match self.weights.unwrap_or(WeightsName::Linear) {
                    WeightsName::Linear => WeightRule::Linear,
                    WeightsName::InvSigma => WeightRule::InverseSigma { eps: 1e-6 },
                },
            ),
        };
        let mode = match self.mode.unwrap_or(ModeName::Hard) {
            ModeName::Hard => FitMode::Hard,
            ModeName::Soft => FitMode::Soft {
                lambda: self.lambda.unwrap_or(1.0),
            },
        };
        let init = match self.init.unwrap_or(InitName::Zero) {
            InitName::Zero => Init::Zero,
            InitName::ColumnMean => Init::ColumnMean,
        };
        let cfg = SolverConfig {
            relaxation,
            kernel: self.kernel_spec()?,
            mode,
            init,
            step: self.step.unwrap_or(d.step),
            t_max: self.tmax.unwrap_or(d.t_max),
            tol: self.tol.unwrap_or(d.tol),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve_opts(flags: &SolverOpts, config: Option<&Path>) -> Result<SolverOpts, Error> {
    let base = match config {
        Some(p) => read_json(p)?,
        None => SolverOpts::default(),
    };
    Ok(flags.clone().over(base))
}

#[derive(Debug, Args)]
struct CompleteArgs {
    /// Matrix with missing cells (headerless CSV)
    #[arg(long)]
    input: PathBuf,
    /// Where to write the completed matrix
    #[arg(long)]
    output: PathBuf,
    /// Extra cell text treated as missing, besides empty and NaN
    #[arg(long)]
    missing_token: Option<String>,
    /// JSON file of solver options; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Latent dimension
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Ambient dimension
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Columns per manifold
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Number of manifolds
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Observed fraction
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result table; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall time per solve (output is then not reproducible)
    #[arg(long)]
    timing: bool,
    /// Worker threads [default: available cores]
    #[arg(long)]
    workers: Option<usize>,
    /// Use C instead of D on the quartic term of the generator
    #[arg(long)]
    repeat_c: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Grid description (JSON)
    #[arg(long)]
    grid: PathBuf,
    /// Output directory for results.csv and plot data
    #[arg(long)]
    out: PathBuf,
    /// Worker threads [default: available cores]
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Training features, one column per sample
    #[arg(long)]
    train_features: PathBuf,
    /// Training labels: one-hot (classes × samples) or a single row of class ids
    #[arg(long)]
    train_labels: PathBuf,
    /// Test features, one column per sample
    #[arg(long)]
    test_features: PathBuf,
    /// Test labels in the same format, used to report the error
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Fraction of feature cells to hide at random
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Completion method: LRMC, NLMC, PMC-S, PMC-W or PMC-W1 [default: PMC-W]
    #[arg(long)]
    method: Option<String>,
    /// Predicted class per test column
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct MnpArgs {
    #[arg(long)]
    m: u64,
    #[arg(long)]
    n: u64,
    /// Latent dimension
    #[arg(long, default_value_t = 2)]
    d: u64,
    /// Polynomial degree of the generator
    #[arg(long, default_value_t = 4)]
    alpha: u64,
    /// Feature-map order
    #[arg(long, default_value_t = 2)]
    q: u32,
    /// Number of manifolds
    #[arg(long, default_value_t = 1)]
    k: u64,
    /// Known feature-space rank, replacing the generic bound
    #[arg(long)]
    d_tilde: Option<u64>,
    /// Print JSON instead of key: value lines
    #[arg(long)]
    json: bool,
}

/// Grid file for `bench`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    methods: Option<Vec<String>>,
    rhos: Vec<f64>,
    ns: Vec<usize>,
    #[serde(default = "two")]
    d: usize,
    #[serde(default = "twenty")]
    m: usize,
    #[serde(default = "one")]
    k: usize,
    #[serde(default = "ten")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    repeat_c: bool,
    #[serde(default)]
    metric: Metric,
    #[serde(default)]
    timing: bool,
    #[serde(default)]
    solver: SolverOpts,
    #[serde(default)]
    lrmc_max_iters: Option<usize>,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn ten() -> usize {
    10
}
fn twenty() -> usize {
    20
}

fn workers(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn quartic(repeat_c: bool) -> QuarticCoefficient {
    if repeat_c {
        QuarticCoefficient::RepeatC
    } else {
        QuarticCoefficient::D
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn settings_from(opts: &SolverOpts, rows: usize) -> Result<MethodSettings, Error> {
    Ok(MethodSettings {
        solver: opts.solver_config(rows)?,
        truncation: opts.s,
        ..MethodSettings::default()
    })
}

fn run_complete(args: CompleteArgs) -> Result<(), Error> {
    let opts = resolve_opts(&args.solver, args.config.as_deref())?;
    let input = read_masked_csv(&args.input, args.missing_token.as_deref())?;
    let cfg = opts.solver_config(input.nrows())?;
    log::info!("resolved config: {cfg:?}");
    log::info!("seed: {}", cfg.seed);
    log::info!(
        "input {}x{} with {} missing cells",
        input.nrows(),
        input.ncols(),
        input.missing_count()
    );
    let result = solve_pmc(&input, &cfg)?;
    log::info!(
        "{:?} after {} iterations, objective {}",
        result.termination,
        result.iterations,
        result.final_objective
    );
    write_completed_csv(&args.output, &result.x_hat)
}

fn run_synth(args: SynthArgs) -> Result<(), Error> {
    let spec = GridSpec {
        methods: Method::BUILT_IN.to_vec(),
        rhos: vec![args.rho],
        ns: vec![args.n],
        d: args.d,
        m: args.m,
        k: args.k,
        trials: args.trials,
        seed: args.seed,
        quartic: quartic(args.repeat_c),
        metric: Metric::Rse,
        record_time: args.timing,
    };
    let settings = MethodSettings::default();
    log::info!("resolved grid: {spec:?}");
    log::info!("resolved solver: {settings:?}");
    log::info!("seed: {}", spec.seed);
    let rows = run_grid(&spec, &settings, workers(args.workers), |r| {
        log::debug!("{} trial {}: {} {}", r.method, r.trial, r.metric_name, r.metric_value)
    })?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_error(path))?;
            write_rows_csv(&rows, file)
        }
        None => write_rows_csv(&rows, std::io::stdout().lock()),
    }
}

fn run_bench(args: BenchArgs) -> Result<(), Error> {
    let grid: GridFile = read_json(&args.grid)?;
    let methods = match &grid.methods {
        Some(names) => names.iter().map(|n| Method::parse(n)).collect::<Result<Vec<_>, _>>()?,
        None => Method::BUILT_IN.to_vec(),
    };
    let spec = GridSpec {
        methods,
        rhos: grid.rhos,
        ns: grid.ns,
        d: grid.d,
        m: grid.m,
        k: grid.k,
        trials: grid.trials,
        seed: grid.seed,
        quartic: quartic(grid.repeat_c),
        metric: grid.metric,
        record_time: grid.timing,
    };
    let mut settings = settings_from(&grid.solver, grid.m)?;
    if let Some(it) = grid.lrmc_max_iters {
        settings.lrmc = LrmcConfig {
            max_iters: it,
            ..settings.lrmc
        };
    }
    log::info!("resolved grid: {spec:?}");
    log::info!("resolved solver: {settings:?}");
    log::info!("seed: {}", spec.seed);
    fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let rows = run_grid(&spec, &settings, workers(args.workers), |r| {
        log::info!(
            "{} rho={} n={} trial={}: {}={}",
            r.method,
            r.rho,
            r.n,
            r.trial,
            r.metric_name,
            r.metric_value
        )
    })?;
    let table = args.out.join("results.csv");
    let file = fs::File::create(&table).map_err(io_error(&table))?;
    write_rows_csv(&rows, file)?;
    write_plot_data(&rows, &args.out)
}

/// One-hot `c × n` labels from either a one-hot file or a single row of ids.
fn read_labels(path: &Path, classes: Option<usize>) -> Result<(DMatrix<f64>, Vec<usize>), Error> {
    let raw = read_masked_csv(path, None)?;
    if raw.missing_count() > 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "labels must not have missing cells".into(),
        });
    }
    let x = raw.zero_filled();
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let ids: Vec<usize> = if x.nrows() == 1 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(bad(format!("column {}: class id {v} is not a non-negative integer", j + 1)))
                }
            })
            .collect::<Result<_, _>>()?
    } else {
        x.column_iter()
            .enumerate()
            .map(|(j, col)| {
                let ones = col.iter().filter(|&&v| v == 1.0).count();
                let zeros = col.iter().filter(|&&v| v == 0.0).count();
                if ones == 1 && ones + zeros == col.len() {
                    Ok(col.iter().position(|&v| v == 1.0).unwrap_or(0))
                } else {
                    Err(bad(format!("column {} is not one-hot", j + 1)))
                }
            })
            .collect::<Result<_, _>>()?
    };
    let c = match classes {
        Some(c) => c,
        None if x.nrows() == 1 => ids.iter().max().map_or(1, |m| m + 1).max(2),
        None => x.nrows(),
    };
    Ok((one_hot(&ids, c)?, ids))
}

fn run_classify(args: ClassifyArgs) -> Result<(), Error> {
    let opts = resolve_opts(&args.solver, args.config.as_deref())?;
    if !(0.0..1.0).contains(&args.theta) {
        return Err(Error::Config(format!("theta {} must be in [0, 1)", args.theta)));
    }
    let train = read_masked_csv(&args.train_features, None)?;
    let test = read_masked_csv(&args.test_features, None)?;
    let (labels, _) = read_labels(&args.train_labels, None)?;
    let c = labels.nrows();
    let truth = match &args.test_labels {
        Some(p) => Some(read_labels(p, Some(c))?.1),
        None => None,
    };
    if test.nrows() != train.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "train features have {} rows, test features {}",
            train.nrows(),
            test.nrows()
        )));
    }
    let (m, n, n_test) = (train.nrows(), train.ncols(), test.ncols());
    let seed = opts.seed.unwrap_or(0);
    let hidden = if args.theta > 0.0 {
        Some(sample_mask(m, n + n_test, 1.0 - args.theta, seed)?)
    } else {
        None
    };
    let feature_mask = DMatrix::from_fn(m, n + n_test, |i, j| {
        let present = if j < n {
            train.is_observed(i, j)
        } else {
            test.is_observed(i, j - n)
        };
        present && hidden.as_ref().is_none_or(|h| h[(i, j)])
    });
    let (stacked, task) = build_transductive(
        train.zero_filled(),
        &labels,
        test.zero_filled(),
        Some(&feature_mask),
    )?;
    let method = Method::parse(args.method.as_deref().unwrap_or("PMC-W"))?;
    let settings = settings_from(&opts, stacked.nrows())?;
    log::info!("method: {}", method.name());
    log::info!("resolved solver: {settings:?}");
    log::info!("seed: {seed}");
    let result = settings.complete(method, &stacked)?;
    let decoded = decode_labels(&result.x_hat, &task, truth.as_deref())?;
    let mut text = String::from("column,prediction\n");
    for (j, p) in decoded.predictions.iter().enumerate() {
        text.push_str(&format!("{},{p}\n", j + 1));
    }
    fs::write(&args.out, text).map_err(io_error(&args.out))?;
    let mut stdout = std::io::stdout().lock();
    let line = match decoded.error {
        Some(e) => format!("classification error: {e}\n"),
        None => format!("{} predictions written\n", decoded.predictions.len()),
    };
    stdout
        .write_all(line.as_bytes())
        .map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn run_mnp(args: MnpArgs) -> Result<(), Error> {
    let input = ComplexityInput {
        m: args.m,
        n: args.n,
        d: args.d,
        alpha: args.alpha,
        q: args.q,
        k: args.k,
        d_tilde_override: args.d_tilde,
    };
    let r = complexity_report(&input).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    })?;
    let text = if args.json {
        serde_json::to_string_pretty(&r).map_err(|e| Error::Config(e.to_string()))? + "\n"
    } else {
        format!(
            "d_tilde: {}\nr_tilde: {}\nrank: {}\nmnp_phi: {}\nmnp_linear: {}\nsampling_lower_bound: {:.4}\n",
            r.d_tilde, r.r_tilde, r.rank, r.mnp_phi, r.mnp_linear, r.sampling_lower_bound
        )
    };
    print!("{text}");
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Complete(a) => run_complete(a),
        Command::Synth(a) => run_synth(a),
        Command::Bench(a) => run_bench(a),
        Command::Classify(a) => run_classify(a),
        Command::Mnp(a) => run_mnp(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
