use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minimax_infer::bootstrap::run_test_with;
use minimax_infer::data::Dataset;
use minimax_infer::family::TestFunctionFamily;
use minimax_infer::geometry::{distance_dual, distance_primal, FinitelyGeneratedCone};
use minimax_infer::moment::{IntervalMeanModel, LinearIvModel, MomentModel};
use minimax_infer::montecarlo::{null_distribution_experiment, size_power_experiment, DgpSpec, ExperimentConfig};
use minimax_infer::report::Variant;
use minimax_infer::space::ParameterSpace;
use serde::Serialize;

use crate::config::CliConfig;
use crate::error::{CliError, Result};
use crate::model_spec::ModelSpec;
use crate::points::{parse_point, parse_rows};

#[derive(Debug, Parser)]
#[command(name = "minimax-infer", version, about = "Minimax tests for moment equality and inequality models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the bootstrap test on a data set.
    Test(TestArgs),
    /// Distance from a point to a finitely generated cone, computed two ways.
    ConeDist(ConeDistArgs),
    /// Run a simulation experiment on a built-in design.
    Simulate(SimulateArgs),
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: minimax_infer::Error| e.to_string())
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TestArgs {
    /// `interval-mean`, `linear-iv`, or a model spec file.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_variant, default_value = "plugin_K")]
    pub variant: Variant,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConeDistArgs {
    /// CSV with one generator per row.
    #[arg(long)]
    pub cone: PathBuf,
    /// CSV with a single row.
    #[arg(long)]
    pub point: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpName {
    LinearGmm,
    IntervalMean,
    NpivSieve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    NullDist,
    SizePower,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub dgp: DgpName,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: usize,
    #[arg(long, value_enum)]
    pub experiment: ExperimentName,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cap on concurrent replications.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_variant, default_value = "plugin_K")]
    pub variant: Variant,
    /// Instruments for linear-gmm.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Regressors for linear-gmm.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Width `E Y − E X` of the interval-mean identified set.
    #[arg(long, default_value_t = 1.0)]
    pub gap: f64,
    /// Shift of the interval-mean means towards each other.
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 3)]
    pub sieve_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub half_width: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        Some(p) => CliConfig::parse(&read(p)?, &p.display().to_string()),
        None => Ok(CliConfig::default()),
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &CliConfig) -> Result<u64> {
    flag.or(cfg.seed)
        .ok_or_else(|| CliError::Invalid("a seed is required: pass --seed or set seed in the config".into()))
}

fn resolve_alpha(flag: Option<f64>, cfg: &CliConfig) -> Result<f64> {
    let alpha = flag.or(cfg.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Invalid(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(alpha)
}

struct Setup {
    model: Arc<dyn MomentModel>,
    family: TestFunctionFamily,
    space: Option<ParameterSpace>,
}

fn builtin_or_spec(name: &str, data: &Dataset, cfg: &CliConfig) -> Result<Setup> {
    let core = |ctx: &str| {
        let ctx = ctx.to_string();
        move |e| CliError::core(ctx, e)
    };
    match name {
        "interval-mean" => Ok(Setup {
            model: Arc::new(IntervalMeanModel::from_column_names(data).map_err(core("model"))?),
            family: TestFunctionFamily::cone_polar_ball(FinitelyGeneratedCone::orthant(2, -1.0)),
            space: None,
        }),
        "linear-iv" => {
            let model = LinearIvModel::from_column_names(data).map_err(core("model"))?;
            let k = model.instruments.len();
            Ok(Setup {
                model: Arc::new(model),
                family: TestFunctionFamily::unit_ball(k),
                space: None,
            })
        }
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(CliError::Invalid(format!(
                    "model '{}' is neither a built-in (interval-mean, linear-iv) nor a spec file",
                    path.display()
                )));
            }
            let spec = ModelSpec::parse(&read(path)?, &path.display().to_string())?;
            Ok(Setup {
                model: spec.model()?,
                family: spec.family(data.columns(), cfg.exponential_grid)?,
                space: spec.space().transpose()?,
            })
        }
    }
}

fn parameter_space(setup: &Setup, cfg: &CliConfig, p: usize) -> Result<ParameterSpace> {
    let space = match (&cfg.lower, &cfg.upper) {
        (Some(l), Some(u)) => ParameterSpace::boxed(l.clone(), u.clone()).map_err(|e| CliError::core("config bounds", e))?,
        (None, None) => match &setup.space {
            Some(s) => s.clone(),
            None => ParameterSpace::boxed(vec![-10.0; p], vec![10.0; p]).expect("default box"),
        },
        _ => return Err(CliError::Invalid("config must set both lower and upper, or neither".into())),
    };
    if space.dim() != p {
        return Err(CliError::Invalid(format!(
            "parameter space has dimension {}, model has {p} parameters",
            space.dim()
        )));
    }
    Ok(space)
}

pub fn cmd_test(args: &TestArgs) -> Result<String> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, &cfg)?;
    let alpha = resolve_alpha(args.alpha, &cfg)?;
    let origin = args.data.display().to_string();
    let data = Dataset::from_csv_str(&read(&args.data)?).map_err(|e| CliError::core(origin, e))?;
    let setup = builtin_or_spec(&args.model, &data, &cfg)?;
    let space = parameter_space(&setup, &cfg, setup.model.param_dim())?;
    cfg.check_for(setup.model.remainder())?;
    let report = run_test_with(
        setup.model.as_ref(),
        &data,
        &space,
        &setup.family,
        &cfg.tuning,
        alpha,
        args.variant,
        seed,
        &cfg.options,
    )
    .map_err(|e| CliError::core("test", e))?;
    Ok(report.to_json())
}

#[derive(Debug, Serialize)]
struct ConeDistance {
    primal: f64,
    dual: f64,
    gap: f64,
}

pub fn cmd_cone_dist(args: &ConeDistArgs) -> Result<String> {
    let gens = parse_rows(&read(&args.cone)?, &args.cone.display().to_string())?;
    let point = parse_point(&read(&args.point)?, &args.point.display().to_string())?;
    let dim = gens[0].len();
    if point.len() != dim {
        return Err(CliError::Invalid(format!(
            "point has {} coordinates, generators have {dim}",
            point.len()
        )));
    }
    let cone = FinitelyGeneratedCone::new(dim, gens).map_err(|e| CliError::core("cone", e))?;
    let primal = distance_primal(&point, &cone).map_err(|e| CliError::core("primal distance", e))?;
    let dual = distance_dual(&point, &cone).map_err(|e| CliError::core("dual distance", e))?;
    let out = ConeDistance {
        primal,
        dual,
        gap: (primal - dual).abs(),
    };
    Ok(serde_json::to_string_pretty(&out).expect("serialisable"))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, &cfg)?;
    let alpha = resolve_alpha(args.alpha, &cfg)?;
    let spec = match args.dgp {
        DgpName::LinearGmm => DgpSpec::linear_gmm(args.k, args.p, args.n, seed),
        DgpName::IntervalMean => DgpSpec::interval_mean(args.gap, args.shift, args.n, seed),
        DgpName::NpivSieve => DgpSpec::npiv_sieve(args.sieve_dim, args.half_width, args.n, seed),
    };
    let mut config = ExperimentConfig::new(args.reps);
    config.alpha = alpha;
    config.variant = args.variant;
    config.workers = args.workers;
    config.options = cfg.options.clone();
    config.tuning = cfg.tuning.clone();
    if !cfg.draws_set {
        config.tuning.draws = ExperimentConfig::new(0).tuning.draws;
    }
    let result = match args.experiment {
        ExperimentName::NullDist => null_distribution_experiment(&spec, &config),
        ExperimentName::SizePower => size_power_experiment(&spec, &config),
    }
    .map_err(|e| CliError::core("simulation", e))?;
    Ok(result.to_json())
}

/// Runs a parsed command and returns its JSON output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::ConeDist(a) => cmd_cone_dist(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

pub fn output_path(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Test(a) => a.out.as_deref(),
        Command::ConeDist(a) => a.out.as_deref(),
        Command::Simulate(a) => a.out.as_deref(),
    }
}
