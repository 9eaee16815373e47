//! The `hyperpc` command line.
//!
//! Every command prints one JSON line on stdout. Options may also come from
//! a JSON object passed with `--config`; keys are long option names (with
//! `_` or `-`), and options given on the command line take precedence.
//! The effective options are echoed into every file a command writes.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 input parse
//! error, 4 numerical failure or tolerance breach.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chamfer::{chamfer_distance, hyper_chamfer, ChamferVariant};
use crate::embedopt::{self, TrainConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradcheckConfig};
use crate::hierdata::{self, DatasetConfig};
use crate::hyperbolicity::{self, Metric};
use crate::hypergeo::{self, Curvature};
use crate::losses::{self, NormKind, TripletDistance};
use crate::metrics;
use crate::{io, svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser, Serialize)]
#[command(name = "hyperpc", version, about = "Hyperbolic point-cloud geometry toolkit")]
pub struct Cli {
    /// Random seed
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Ball curvature (negative)
    #[arg(long, global = true, default_value_t = hypergeo::DEFAULT_K, allow_negative_numbers = true)]
    pub k: f64,
    /// Boundary margin of the ball projection
    #[arg(long, global = true, default_value_t = hypergeo::DEFAULT_EPS)]
    pub eps: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// JSON file with option values
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Chamfer distance between two clouds
    Chamfer(ChamferArgs),
    /// Hyperbolic Chamfer distance between two clouds
    Hypercd(PairArgs),
    /// Accuracy, completeness, precision, recall and F-score
    Metrics(MetricsArgs),
    /// Sampled Gromov δ-hyperbolicity of points or a distance matrix
    Delta(DeltaArgs),
    /// Generate the synthetic part/whole dataset
    Synth(SynthArgs),
    /// Train hierarchy embeddings on a manifest
    Embed(EmbedArgs),
    /// Finite-difference check of all analytic gradients
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PairArgs {
    /// Predicted cloud (.xyz or .ply)
    pub pred: PathBuf,
    /// Ground-truth cloud (.xyz or .ply)
    pub gt: PathBuf,
    /// Also write the result as JSON here
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    L1,
    L2,
    Hyper,
}

#[derive(Debug, Args, Serialize)]
pub struct ChamferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairArgs,
    #[arg(long, value_enum, default_value_t = VariantArg::L1)]
    pub variant: VariantArg,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairArgs,
    /// Distance threshold for precision and recall
    #[arg(long, default_value_t = metrics::DEFAULT_THRESHOLD, allow_negative_numbers = true)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Euclidean,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `.dm`/`.dist` are matrices, everything else points
    Auto,
    Points,
    Matrix,
}

#[derive(Debug, Args, Serialize)]
pub struct DeltaArgs {
    /// Points (XYZ, whitespace table or embedding CSV) or a distance matrix
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    /// Points per sampled batch
    #[arg(long, default_value_t = hyperbolicity::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    /// Number of sampled batches
    #[arg(long, default_value_t = hyperbolicity::DEFAULT_BATCHES)]
    pub trials: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    #[arg(long, default_value_t = 20)]
    pub objects: usize,
    #[arg(long, default_value_t = 3)]
    pub parts: usize,
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormArg {
    Hyperbolic,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletArg {
    Tangent,
    Geodesic,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    /// Dataset manifest
    pub manifest: PathBuf,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_triplets: usize,
    /// Adam step size
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = losses::DEFAULT_GAMMA0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = losses::DEFAULT_MARGIN_EPS)]
    pub margin_eps: f64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Norm used by the part/whole regularizer
    #[arg(long, value_enum, default_value_t = NormArg::Hyperbolic)]
    pub reg_norm: NormArg,
    /// Distance used by the triplet term
    #[arg(long, value_enum, default_value_t = TripletArg::Tangent)]
    pub triplet_distance: TripletArg,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = gradcheck::DEFAULT_CASES)]
    pub cases: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    pub step: f64,
    /// Negate analytic gradients (self-test of the checker)
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Parse { .. } | Error::Json(_) | Error::DimensionMismatch { .. } => EXIT_PARSE,
            Error::Numerical(_) => EXIT_NUMERICAL,
            Error::InvalidInput(_) | Error::Unsupported(_) | Error::CurvatureMismatch(..) => {
                EXIT_USAGE
            }
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

/// Command-line values as strings to append for config keys not given on
/// the command line.
fn config_args(
    path: &Path,
    matches: &clap::ArgMatches,
    sub_name: &str,
) -> std::result::Result<Vec<OsString>, CliError> {
    let text = io::read_text(path)?;
    let obj: serde_json::Map<String, Value> = serde_json::from_str(&text).map_err(|e| CliError {
        code: EXIT_PARSE,
        message: format!("{}:{}: {e}", path.display(), e.line()),
    })?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(sub_name)
        .expect("subcommand was parsed");
    let sub_matches = matches.subcommand_matches(sub_name).expect("subcommand was parsed");
    let mut out = Vec::new();
    for (key, value) in obj {
        let id = key.replace('-', "_");
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_id().as_str() == id && a.get_long().is_some())
            .ok_or_else(|| usage(format!("{}: unknown option {key:?} for {sub_name}", path.display())))?;
        if id == "config" {
            return Err(usage("--config cannot be nested"));
        }
        if sub_matches.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().expect("checked above"));
        match value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
            Value::String(s) => out.extend([flag.into(), s.into()]),
            other => {
                return Err(usage(format!(
                    "{}: option {key:?} must be a scalar, got {other}",
                    path.display()
                )))
            }
        }
    }
    Ok(out)
}

fn parse(args: Vec<OsString>) -> std::result::Result<Cli, clap::Error> {
    Cli::try_parse_from(args)
}

/// Parse `args` (including the program name), merging any `--config` file.
pub fn parse_args(args: Vec<OsString>) -> std::result::Result<Cli, CliError> {
    let clap_err = |e: clap::Error| CliError {
        code: if e.use_stderr() { EXIT_USAGE } else { EXIT_OK },
        message: e.render().to_string(),
    };
    let matches = Cli::command().try_get_matches_from(args.clone()).map_err(clap_err)?;
    let cli = Cli::from_arg_matches(&matches).map_err(clap_err)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let sub_name = matches.subcommand_name().expect("subcommand is required").to_string();
    let mut merged = args;
    merged.extend(config_args(&path, &matches, &sub_name)?);
    parse(merged).map_err(clap_err)
}

fn curvature(cli: &Cli) -> Result<Curvature> {
    Curvature::from_k(cli.k)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::invalid(format!("eps must lie in (0, 0.1), got {eps}")));
    }
    Ok(())
}

/// The effective options as JSON.
pub fn effective_config(cli: &Cli) -> Value {
    serde_json::to_value(cli).expect("options serialize")
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<()> {
    writeln!(out, "{value}").map_err(|e| Error::io("<stdout>", e))
}

fn write_result(path: &Option<PathBuf>, cli: &Cli, result: &Value) -> Result<()> {
    if let Some(p) = path {
        let doc = json!({ "config": effective_config(cli), "result": result });
        io::write_text(p, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    Ok(())
}

fn cmd_chamfer(cli: &Cli, pair: &PairArgs, variant: VariantArg, out: &mut dyn Write) -> Result<()> {
    let pred = io::read_cloud(&pair.pred)?;
    let gt = io::read_cloud(&pair.gt)?;
    let mut result = match variant {
        VariantArg::L1 => json!({"variant": "l1", "distance": chamfer_distance(&pred, &gt, ChamferVariant::L1)?}),
        VariantArg::L2 => json!({"variant": "l2", "distance": chamfer_distance(&pred, &gt, ChamferVariant::L2)?}),
        VariantArg::Hyper => {
            check_eps(cli.eps)?;
            let curv = curvature(cli)?;
            json!({"variant": "hyper", "distance": hyper_chamfer(&pred, &gt, curv, cli.eps)?, "k": cli.k})
        }
    };
    result["n_pred"] = json!(pred.len());
    result["n_gt"] = json!(gt.len());
    write_result(&pair.out, cli, &result)?;
    emit(out, &result)
}

fn cmd_metrics(cli: &Cli, a: &MetricsArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold.is_finite()) {
        return Err(Error::invalid(format!("threshold must be positive, got {}", a.threshold)));
    }
    let pred = io::read_cloud(&a.pair.pred)?;
    let gt = io::read_cloud(&a.pair.gt)?;
    let report = serde_json::to_value(metrics::evaluate(&pred, &gt, a.threshold)?)?;
    write_result(&a.pair.out, cli, &report)?;
    emit(out, &report)
}

fn cmd_delta(cli: &Cli, a: &DeltaArgs, out: &mut dyn Write) -> Result<()> {
    let is_matrix = match a.format {
        InputFormat::Matrix => true,
        InputFormat::Points => false,
        InputFormat::Auto => matches!(
            a.input.extension().and_then(|e| e.to_str()),
            Some("dm") | Some("dist")
        ),
    };
    let report = if is_matrix {
        if matches!(a.metric, MetricArg::Hyperbolic) {
            return Err(Error::invalid(
                "a distance matrix already fixes the metric; drop --metric hyperbolic",
            ));
        }
        let dm = io::read_distance_matrix(&a.input)?;
        hyperbolicity::sampled_delta_matrix(&dm, a.batch, a.trials, cli.seed)?
    } else {
        let points = io::read_points(&a.input)?;
        let metric = match a.metric {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Hyperbolic => {
                check_eps(cli.eps)?;
                Metric::Hyperbolic {
                    curvature: curvature(cli)?,
                    eps: cli.eps,
                }
            }
        };
        hyperbolicity::sampled_delta(&points, metric, a.batch, a.trials, cli.seed)?
    };
    let value = serde_json::to_value(report)?;
    write_result(&a.out, cli, &value)?;
    emit(out, &value)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = DatasetConfig {
        n_categories: a.categories,
        objects_per_category: a.objects,
        parts_per_object: a.parts,
        points_whole: a.points,
        seed: cli.seed,
    };
    let manifest = hierdata::generate_dataset(&cfg)?;
    let path = io::write_dataset(&manifest, &a.out, Some(effective_config(cli)))?;
    emit(
        out,
        &json!({
            "manifest": path.display().to_string(),
            "samples": manifest.len(),
            "categories": manifest.categories(),
        }),
    )
}

fn cmd_embed(cli: &Cli, a: &EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_triplets: a.batch_triplets,
        learning_rate: a.lr,
        gamma0: a.gamma0,
        margin_eps: a.margin_eps,
        dim: a.dim,
        seed: cli.seed,
        curvature: curvature(cli)?,
        eps: cli.eps,
        reg_norm: match a.reg_norm {
            NormArg::Hyperbolic => NormKind::Hyperbolic,
            NormArg::Euclidean => NormKind::Euclidean,
        },
        triplet_distance: match a.triplet_distance {
            TripletArg::Tangent => TripletDistance::Tangent,
            TripletArg::Geodesic => TripletDistance::Geodesic,
        },
    };
    cfg.validate()?;
    if a.lr != embedopt::REFERENCE_LEARNING_RATE {
        eprintln!(
            "note: learning rate {} (reference full-scale setting is {}; pass --lr {} to use it)",
            a.lr,
            embedopt::REFERENCE_LEARNING_RATE,
            embedopt::REFERENCE_LEARNING_RATE
        );
    }
    let manifest = io::load_manifest(&a.manifest)?;
    let state = embedopt::init_state(&manifest, &cfg)?;
    let initial = embedopt::evaluate_hierarchy(&state, &manifest)?;
    let outcome = embedopt::train(state, &manifest, &cfg)?;
    let eval = embedopt::evaluate_hierarchy(&outcome.state, &manifest)?;

    let config = effective_config(cli);
    let dir = &a.out;
    io::write_text(&dir.join("config.json"), &(serde_json::to_string_pretty(&config)? + "\n"))?;
    io::write_text(&dir.join("loss.csv"), &io::format_loss_csv(&outcome.losses)?)?;
    io::write_text(
        &dir.join("embeddings.csv"),
        &io::format_embedding_csv(&outcome.state, &manifest)?,
    )?;
    let summary = json!({
        "epochs": outcome.losses.len(),
        "final_loss": outcome.losses.last(),
        "initial": initial,
        "trained": eval,
    });
    io::write_text(
        &dir.join("eval.json"),
        &(serde_json::to_string_pretty(&json!({"config": config, "result": summary}))? + "\n"),
    )?;
    if cfg.dim == 2 {
        let disk = embedopt::export_disk(&outcome.state, &manifest)?;
        io::write_text(&dir.join("disk.csv"), &io::format_disk_csv(&disk)?)?;
        io::write_text(&dir.join("disk.svg"), &svg::render_disk(&disk, &config.to_string()))?;
    }
    emit(out, &summary)
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let cfg = GradcheckConfig {
        seed: cli.seed,
        n_cases: a.cases,
        step: a.step,
        curvature: curvature(cli)?,
        inject_sign_flip: a.inject_sign_flip,
    };
    let report = gradcheck::run(&cfg)?;
    let value = serde_json::to_value(&report).map_err(Error::from)?;
    write_result(&a.out, cli, &value)?;
    emit(out, &value)?;
    if report.max_rel_error > gradcheck::CLI_TOLERANCE {
        return Err(CliError {
            code: EXIT_NUMERICAL,
            message: format!(
                "gradient check failed: case {} ({:?}) has relative error {:e} > {:e}",
                report.worst.case,
                report.worst.objective,
                report.worst.rel_error,
                gradcheck::CLI_TOLERANCE
            ),
        });
    }
    Ok(())
}

/// Execute a parsed command, writing its JSON line to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| usage(e.to_string()))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| {
        let out = &mut buf;
        match &cli.command {
            Command::Chamfer(a) => Ok(cmd_chamfer(cli, &a.pair, a.variant, out)?),
            Command::Hypercd(a) => Ok(cmd_chamfer(cli, a, VariantArg::Hyper, out)?),
            Command::Metrics(a) => Ok(cmd_metrics(cli, a, out)?),
            Command::Delta(a) => Ok(cmd_delta(cli, a, out)?),
            Command::Synth(a) => Ok(cmd_synth(cli, a, out)?),
            Command::Embed(a) => Ok(cmd_embed(cli, a, out)?),
            Command::Gradcheck(a) => cmd_gradcheck(cli, a, out),
        }
    });
    out.write_all(&buf)
        .and_then(|()| out.flush())
        .map_err(|e| CliError::from(Error::io("<stdout>", e)))?;
    result
}

/// Full entry point: parse, run, report errors on stderr, return the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let result = parse_args(args).and_then(|cli| run(&cli, &mut lock));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.code == EXIT_OK => {
            // --help and --version
            let _ = write!(lock, "{}", e.message);
            EXIT_OK
        }
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {}", e.message.trim_end());
            e.code
        }
    }
}
