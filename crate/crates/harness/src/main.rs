use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use wrapped_spd::classify::{accuracy, LabeledSpdDataset};
use wrapped_spd::estimate::{fit_mle, neg_log_lik, MleOptions};
use wrapped_spd::wgauss::{sample, DensityEvaluator, EcGenerator};
use wrapped_spd::symmat::DEFAULT_EPS_PD;
use wrapped_spd::CovKind;
use wrapped_spd_harness::config::{CovArg, Settings, StrategyArg};
use wrapped_spd_harness::cv::{parse_specs, run_cv, ClassifierSpec};
use wrapped_spd_harness::error::{HarnessError, Result};
use wrapped_spd_harness::io::{self, write_text};
use wrapped_spd_harness::series::cov_from_series;
use wrapped_spd_harness::synth::random_wg_params;
use wrapped_spd_harness::{mle_curve, plot_prep};

/// Wrapped Gaussians on SPD matrices: sampling, density evaluation,
/// maximum-likelihood estimation and classification.
#[derive(Parser, Debug)]
#[command(name = "wgspd", version)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report zero wall times so that output files are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative eigenvalue floor for input data matrices [default: 1e-12].
    #[arg(long, global = true)]
    eps_pd: Option<f64>,
    /// TOML file with per-subcommand defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw samples from a parameter file.
    Sample(SampleArgs),
    /// Per-point log-density of a dataset as CSV.
    Density(DensityArgs),
    /// Maximum-likelihood fit of a dataset.
    Estimate(EstimateArgs),
    /// Estimation error against sample size over a grid of cells.
    MleCurve(MleCurveArgs),
    /// Train or apply a classifier.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Shrinkage covariance matrices of CSV time series.
    CovFromSeries(SeriesArgs),
    /// Aggregate an mle-curve or cv CSV into plot-ready statistics.
    PlotPrep(PlotPrepArgs),
    /// Draw random parameters as used by the estimation experiment.
    RandomParams(RandomParamsArgs),
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use a Student-t generator with this many degrees of freedom.
    #[arg(long, value_name = "NU")]
    student_t: Option<f64>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    cov: Option<CovArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out_params: Option<PathBuf>,
    /// JSON report of the optimizer run.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MleCurveArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    cov: Option<CovArg>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum ClassifyCommand {
    Train(TrainArgs),
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// mdm, tslda, tsqda, howda or hewda.
    #[arg(long)]
    model: Option<String>,
    /// Diagonal covariance variant.
    #[arg(long)]
    diag: bool,
    /// Replace the empirical class priors by uniform ones.
    #[arg(long)]
    uniform_priors: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated classifier names.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    /// One CSV series (rows are time steps) per output matrix. Repeatable.
    #[arg(long = "in")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    shrinkage: Option<f64>,
    /// Comma-separated labels, one per input (default: all 0).
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotPrepArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RandomParamsArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum)]
    cov: Option<CovArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    settings: Settings,
    seed: Option<u64>,
    deterministic: bool,
    eps_pd: f64,
}

impl Ctx {
    fn load_data(&self, path: &Path) -> Result<LabeledSpdDataset> {
        io::load_dataset_with(path, self.eps_pd)
    }

    fn seed(&self, section: &str) -> Result<u64> {
        Ok(self.settings.pick(self.seed, section, "seed")?.unwrap_or(0))
    }

    fn deterministic(&self, section: &str) -> Result<bool> {
        Ok(self.deterministic || self.settings.get(section, "deterministic")?.unwrap_or(false))
    }

    fn flag(&self, cli: bool, section: &str, key: &str) -> Result<bool> {
        Ok(cli || self.settings.get(section, key)?.unwrap_or(false))
    }

    fn mle_options(&self, section: &str, tol: Option<f64>) -> Result<MleOptions> {
        let d = MleOptions::default();
        Ok(MleOptions {
            tol: self.settings.pick(tol, section, "tol")?.unwrap_or(d.tol),
            max_iter: self.settings.get(section, "max-iter")?.unwrap_or(d.max_iter),
            deterministic: self.deterministic(section)?,
            seed: self.seed(section)?,
            ..d
        })
    }
}

fn cmd_sample(ctx: &Ctx, a: SampleArgs) -> Result<()> {
    const S: &str = "sample";
    let params: PathBuf = ctx.settings.require(a.params, S, "params")?;
    let count: usize = ctx.settings.require(a.count, S, "count")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let theta = io::load_params(&params)?;
    let xs = sample(&theta, count, ctx.seed(S)?)?;
    io::save_matrices(&out, xs)
}

fn cmd_density(ctx: &Ctx, a: DensityArgs) -> Result<()> {
    const S: &str = "density";
    let params: PathBuf = ctx.settings.require(a.params, S, "params")?;
    let data: PathBuf = ctx.settings.require(a.data, S, "data")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let gen = match ctx.settings.pick(a.student_t, S, "student-t")? {
        Some(nu) => EcGenerator::StudentT(nu),
        None => EcGenerator::Gaussian,
    };
    let theta = io::load_params(&params)?;
    let ds = ctx.load_data(&data)?;
    let eval = DensityEvaluator::new(&theta, gen)?;
    let values = eval.log_density_batch(&ds.matrices())?;
    let mut text = String::from("index,label,log_density\n");
    for (i, ((_, label), v)) in ds.items().iter().zip(values).enumerate() {
        text.push_str(&format!("{i},{label},{v}\n"));
    }
    write_text(&out, &text)
}

fn cmd_estimate(ctx: &Ctx, a: EstimateArgs) -> Result<()> {
    const S: &str = "estimate";
    let data: PathBuf = ctx.settings.require(a.data, S, "data")?;
    let out: PathBuf = ctx.settings.require(a.out_params, S, "out-params")?;
    let report_path: Option<PathBuf> = ctx.settings.pick(a.report, S, "report")?;
    let cov = ctx.settings.pick(a.cov, S, "cov")?.unwrap_or(CovArg::Full);
    let strategy = ctx.settings.pick(a.strategy, S, "strategy")?.unwrap_or(StrategyArg::Profile);
    let mut opts = ctx.mle_options(S, a.tol)?;
    opts.cov_kind = cov.into();
    opts.strategy = strategy.into();
    if let Some(m) = a.max_iter {
        opts.max_iter = m;
    }
    let ds = ctx.load_data(&data)?;
    if ds.n_classes() > 1 {
        log::warn!("{}: ignoring labels, fitting all {} points as one sample", data.display(), ds.len());
    }
    let xs = ds.matrices();
    let (theta, mut rep) = fit_mle(&xs, &opts)?;
    if !rep.converged {
        log::warn!("optimizer stopped after {} iterations at gradient norm {:e}", rep.iterations, rep.grad_norm);
    }
    if opts.deterministic {
        rep.wall_time = 0.0;
    }
    io::save_params(&out, &theta)?;
    if let Some(path) = report_path {
        let report = json!({
            "strategy": strategy,
            "cov": cov,
            "tol": opts.tol,
            "n": xs.len(),
            "d": theta.dim(),
            "iterations": rep.iterations,
            "final_cost": rep.final_cost,
            "grad_norm": rep.grad_norm,
            "converged": rep.converged,
            "wall_time": rep.wall_time,
            "neg_log_lik": neg_log_lik(&theta, &xs)?,
            "cost_trace": rep.cost_trace,
        });
        write_text(&path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    }
    Ok(())
}

fn cmd_mle_curve(ctx: &Ctx, a: MleCurveArgs) -> Result<()> {
    const S: &str = "mle-curve";
    let mut cfg = ctx.settings.experiment()?;
    if let Some(d) = ctx.settings.pick(a.dims, S, "dims")? {
        cfg.dims = d;
    }
    if let Some(n) = ctx.settings.pick(a.n_grid, S, "n-grid")? {
        cfg.n_grid = n;
    }
    if let Some(s) = ctx.settings.pick(a.seeds, S, "seeds")? {
        cfg.seeds = s;
    }
    if let Some(c) = ctx.settings.pick(a.cov, S, "cov")? {
        cfg.cov_kind = c;
    }
    if let Some(t) = ctx.settings.pick(a.tol, S, "tol")? {
        cfg.tol = t;
    }
    let out_dir = match ctx.settings.pick(a.out_dir, S, "out-dir")? {
        Some(p) => p,
        None => cfg
            .paths
            .get("out_dir")
            .map(PathBuf::from)
            .ok_or_else(|| HarnessError::Argument("missing --out-dir".into()))?,
    };
    let deterministic = ctx.deterministic(S)?;
    let rows = mle_curve::run_mle_curve(&cfg, deterministic)?;
    let failed = rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", rows.len());
    }
    mle_curve::write_outputs(&out_dir, &cfg, &rows, deterministic)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    const S: &str = "classify.train";
    let data: PathBuf = ctx.settings.require(a.data, S, "data")?;
    let name: String = ctx.settings.require(a.model, S, "model")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let mut spec: ClassifierSpec = name.parse()?;
    if ctx.flag(a.diag, S, "diag")? {
        spec = format!("{}-diag", name.trim_end_matches("-diag")).parse()?;
    }
    let opts = ctx.mle_options(S, a.tol)?;
    let ds = ctx.load_data(&data)?;
    let mut model = spec.fit(&ds, &opts)?;
    if ctx.flag(a.uniform_priors, S, "uniform-priors")? {
        model = model.with_uniform_priors();
    }
    io::save_model(&out, &model)?;
    println!("training accuracy: {}", accuracy(&model, &ds)?);
    Ok(())
}

fn cmd_predict(ctx: &Ctx, a: PredictArgs) -> Result<()> {
    const S: &str = "classify.predict";
    let model_file: PathBuf = ctx.settings.require(a.model_file, S, "model-file")?;
    let data: PathBuf = ctx.settings.require(a.data, S, "data")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let model = io::load_model(&model_file)?;
    let ds = ctx.load_data(&data)?;
    let k = model.n_classes();
    let mut text = String::from("index,label,predicted");
    for c in 0..k {
        text.push_str(&format!(",log_proba_{c}"));
    }
    text.push('\n');
    let mut correct = 0;
    for (i, (x, label)) in ds.items().iter().enumerate() {
        let lp = model.predict_log_proba(x)?;
        let pred = wrapped_spd::classify::argmax(&lp);
        correct += usize::from(pred == *label);
        text.push_str(&format!("{i},{label},{pred}"));
        for v in lp {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    write_text(&out, &text)?;
    println!("accuracy: {}", correct as f64 / ds.len() as f64);
    Ok(())
}

fn cmd_cv(ctx: &Ctx, a: CvArgs) -> Result<()> {
    const S: &str = "cv";
    let data: PathBuf = ctx.settings.require(a.data, S, "data")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let names: Vec<String> = ctx.settings.require(a.models, S, "models")?;
    let k: usize = ctx.settings.pick(a.k, S, "k")?.unwrap_or(5);
    let specs = parse_specs(&names)?;
    let opts = ctx.mle_options(S, a.tol)?;
    let ds = ctx.load_data(&data)?;
    let rows = run_cv(&ds, &specs, k, ctx.seed(S)?, &opts, ctx.deterministic(S)?)?;
    for r in rows.iter().filter(|r| r.fold == "mean") {
        let std = rows.iter().find(|s| s.model == r.model && s.fold == "std").map_or(f64::NAN, |s| s.value);
        println!("{}: {:.2} ± {:.2} %", r.model, 100.0 * r.value, 100.0 * std);
    }
    write_text(&out, &wrapped_spd_harness::cv::rows_to_csv(&rows))
}

fn cmd_series(ctx: &Ctx, a: SeriesArgs) -> Result<()> {
    const S: &str = "cov-from-series";
    let inputs: Vec<PathBuf> = if a.inputs.is_empty() {
        ctx.settings.require(None, S, "in")?
    } else {
        a.inputs
    };
    let shrinkage: f64 = ctx.settings.pick(a.shrinkage, S, "shrinkage")?.unwrap_or(0.0);
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let labels = ctx.settings.pick(a.labels, S, "labels")?.unwrap_or_else(|| vec![0; inputs.len()]);
    if labels.len() != inputs.len() {
        return Err(HarnessError::Argument(format!("{} labels for {} inputs", labels.len(), inputs.len())));
    }
    let items = inputs
        .iter()
        .zip(labels)
        .map(|(p, l)| Ok((cov_from_series(&io::load_series(p)?, shrinkage)?, l)))
        .collect::<Result<Vec<_>>>()?;
    io::save_dataset(&out, &LabeledSpdDataset::new(items, None)?)
}

fn cmd_plot_prep(ctx: &Ctx, a: PlotPrepArgs) -> Result<()> {
    const S: &str = "plot-prep";
    let input: PathBuf = ctx.settings.require(a.input, S, "in")?;
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    let text = io::read_text(&input)?;
    write_text(&out, &plot_prep::summarize(&input, &text)?)
}

fn cmd_random_params(ctx: &Ctx, a: RandomParamsArgs) -> Result<()> {
    const S: &str = "random-params";
    let d: usize = ctx.settings.require(a.d, S, "d")?;
    let cov = ctx.settings.pick(a.cov, S, "cov")?.unwrap_or(CovArg::Full);
    let out: PathBuf = ctx.settings.require(a.out, S, "out")?;
    if d == 0 {
        return Err(HarnessError::Argument("d must be at least 1".into()));
    }
    io::save_params(&out, &random_wg_params(d, CovKind::from(cov), ctx.seed(S)?)?)
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(Path::new(p))?,
        None => Settings::default(),
    };
    let threads: Option<usize> = settings.pick(cli.threads, "global", "threads")?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Argument(format!("--threads: {e}")))?;
    }
    let eps_pd: f64 = settings.pick(cli.eps_pd, "global", "eps_pd")?.unwrap_or(DEFAULT_EPS_PD);
    if !(0.0..1.0).contains(&eps_pd) {
        return Err(HarnessError::Argument(format!("--eps-pd must lie in [0, 1), got {eps_pd}")));
    }
    let ctx = Ctx { settings, seed: cli.seed, deterministic: cli.deterministic, eps_pd };
    match cli.command {
        Command::Sample(a) => cmd_sample(&ctx, a),
        Command::Density(a) => cmd_density(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::MleCurve(a) => cmd_mle_curve(&ctx, a),
        Command::Classify(ClassifyCommand::Train(a)) => cmd_train(&ctx, a),
        Command::Classify(ClassifyCommand::Predict(a)) => cmd_predict(&ctx, a),
        Command::Cv(a) => cmd_cv(&ctx, a),
        Command::CovFromSeries(a) => cmd_series(&ctx, a),
        Command::PlotPrep(a) => cmd_plot_prep(&ctx, a),
        Command::RandomParams(a) => cmd_random_params(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
