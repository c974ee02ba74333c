//! Command-line driver: generate, ingest, train, isolate, evaluate, report,
//! select.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. All
//! diagnostics go to standard error; results go to files or standard output.
//! A JSON config file (`--config`) can supply any flag by its long name;
//! explicit flags win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::evaluation::{
    build_report, cross_validate, goodness_fraction, heatmap_svg, matrix_from_csv, matrix_to_csv,
    table2_report, table2_to_csv, write_atomic, write_report_files, CrossMatrix, DatasetEval,
    Table2Input,
};
use crate::extractor::FeatureMatrix;
use crate::isolator::{
    label_heuristic_min, label_none, label_profiling, label_proposed, IsolationConfig,
    IsolationResult, Method, SystemCandidate,
};
use crate::pipeline::{self, prepare_matrices, PipelineRun, RunConfig};
use crate::regressors::{fit, Approach, HyperParams, ModelId, ModelKind, ModelStore};
use crate::synthgen;
use crate::telemetry::{ingest, FileFormat, Producer, TelemetryFrame};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "isowatt",
    version,
    about = "Container power model training with dynamic background power isolation"
)]
struct Cli {
    /// JSON config file supplying default values for any flag (by long name)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic telemetry datasets with ground truth
    Synth(SynthArgs),
    /// Validate a telemetry file and print a frame summary
    Ingest(IngestArgs),
    /// Run the training pipeline and persist models to the store
    Train(TrainArgs),
    /// Compute workload power labels without persisting container models
    Isolate(IsolateArgs),
    /// Cross-validation matrices and reports over a dataset directory
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render a heat-map image from a matrix CSV
    Report(ReportArgs),
    /// Print the id of the best stored model
    Select(SelectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Master seed; fully determines every emitted byte
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// grid (3 platforms x 3 workloads) or noisy (single surge run)
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct IngestArgs {
    /// Telemetry file or dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// csv or jsonl (default: by file extension)
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    producer: Option<String>,
    /// Comma-separated learning approaches
    #[arg(long, value_delimiter = ',')]
    approaches: Option<Vec<String>>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rho_threshold: Option<f64>,
    #[arg(long)]
    profile_watts: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model store directory
    #[arg(long)]
    store: Option<PathBuf>,
    /// Comma-separated background container ids (default: dataset sidecar)
    #[arg(long, value_delimiter = ',')]
    background: Option<Vec<String>>,
    /// Dataset tag recorded on stored models (default: data path stem)
    #[arg(long)]
    tag: Option<String>,
    /// Write the run JSON here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Previous run JSON; continue its container models incrementally
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Time-ordered holdout fraction for recorded container errors
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args)]
struct IsolateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    producer: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_delimiter = ',')]
    approaches: Option<Vec<String>>,
    #[arg(long)]
    rho_threshold: Option<f64>,
    #[arg(long)]
    profile_watts: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    background: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Cross-validation matrix for one isolation method
    Cross(EvalArgs),
    /// Per-dataset power-decomposition table
    Table2(EvalArgs),
    /// Full report: all methods, matrices, table, goodness fractions
    Report(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of dataset directories (each with telemetry.csv)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    producer: Option<String>,
    #[arg(long, value_delimiter = ',')]
    approaches: Option<Vec<String>>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rho_threshold: Option<f64>,
    /// Fallback idling background watts for datasets without a sidecar
    #[arg(long)]
    profile_watts: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Matrix CSV produced by eval
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Output SVG path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    producer: Option<String>,
    /// system or container
    #[arg(long)]
    kind: Option<String>,
}

/// Config-file fallbacks, keyed by long flag name.
struct Cfg(serde_json::Map<String, serde_json::Value>);

impl Cfg {
    fn load(path: Option<&PathBuf>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Cfg(serde_json::Map::new()));
        };
        let bytes = fs::read(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        match value {
            serde_json::Value::Object(map) => Ok(Cfg(map)),
            _ => Err(usage(format!("config {} must be a JSON object", path.display()))),
        }
    }

    fn string(&self, key: &str) -> Option<String> {
        match self.0.get(key) {
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(serde_json::Value::Number(n)) => Some(n.to_string()),
            _ => None,
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    fn number(&self, key: &str) -> Option<f64> {
        match self.0.get(key) {
            Some(serde_json::Value::Number(n)) => n.as_f64(),
            _ => None,
        }
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        match self.0.get(key) {
            Some(serde_json::Value::Array(items)) => Some(
                items
                    .iter()
                    .filter_map(|v| v.as_str().map(str::to_string))
                    .collect(),
            ),
            Some(serde_json::Value::String(s)) => {
                Some(s.split(',').map(|p| p.trim().to_string()).collect())
            }
            _ => None,
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match Cfg::load(cli.config.as_ref()) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(e),
    };
    match dispatch(cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => report_error(e),
    }
}

fn report_error(e: CliError) -> i32 {
    match e {
        CliError::Usage(msg) => {
            eprintln!("usage error: {msg}");
            1
        }
        CliError::Data(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(command: Command, cfg: &Cfg) -> CliResult<()> {
    match command {
        Command::Synth(args) => run_synth(args, cfg),
        Command::Ingest(args) => run_ingest(args, cfg),
        Command::Train(args) => run_train(args, cfg),
        Command::Isolate(args) => run_isolate(args, cfg),
        Command::Eval(cmd) => run_eval(cmd, cfg),
        Command::Report(args) => run_report(args, cfg),
        Command::Select(args) => run_select(args, cfg),
    }
}

fn parse_producer(value: Option<String>, cfg: &Cfg) -> CliResult<Producer> {
    let raw = value.or_else(|| cfg.string("producer")).unwrap_or_else(|| "cgroups".into());
    Producer::from_str(&raw).map_err(usage)
}

fn parse_method(value: Option<String>, cfg: &Cfg) -> CliResult<Method> {
    let raw = value.or_else(|| cfg.string("method")).unwrap_or_else(|| "proposed".into());
    Method::from_str(&raw).map_err(usage)
}

fn parse_approaches(value: Option<Vec<String>>, cfg: &Cfg) -> CliResult<Vec<Approach>> {
    let raw = value
        .or_else(|| cfg.list("approaches"))
        .unwrap_or_else(|| vec!["linear".into()]);
    raw.iter()
        .map(|s| Approach::from_str(s).map_err(usage))
        .collect()
}

fn parse_format(value: Option<String>, cfg: &Cfg, path: &Path) -> CliResult<FileFormat> {
    if let Some(raw) = value.or_else(|| cfg.string("format")) {
        return FileFormat::from_str(&raw).map_err(usage);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Ok(FileFormat::Jsonl),
        _ => Ok(FileFormat::Csv),
    }
}

fn required_path(value: Option<PathBuf>, cfg: &Cfg, key: &str) -> CliResult<PathBuf> {
    value
        .or_else(|| cfg.path(key))
        .ok_or_else(|| usage(format!("--{key} is required")))
}

fn seed_of(value: Option<u64>, cfg: &Cfg) -> u64 {
    value.or_else(|| cfg.number("seed").map(|v| v as u64)).unwrap_or(42)
}

struct LoadedDataset {
    tag: String,
    frame: TelemetryFrame,
    p_profile: Option<f64>,
    p0: Option<f64>,
}

fn load_dataset(
    path: &Path,
    format: Option<String>,
    background: Option<Vec<String>>,
    profile_watts: Option<f64>,
    cfg: &Cfg,
) -> CliResult<LoadedDataset> {
    let (file, dir, tag) = if path.is_dir() {
        let file = path.join(synthgen::TELEMETRY_FILE);
        let tag = path
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "dataset".into());
        (file, Some(path.to_path_buf()), tag)
    } else {
        let tag = path
            .file_stem()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "dataset".into());
        (path.to_path_buf(), None, tag)
    };
    let format = parse_format(format, cfg, &file)?;
    let frame = ingest(&file, format)?;

    let truth = match &dir {
        Some(dir) => synthgen::read_ground_truth(dir)?,
        None => None,
    };
    let background = background
        .or_else(|| cfg.list("background"))
        .or_else(|| truth.as_ref().map(|t| t.background_ids.clone()));
    let frame = match background {
        Some(ids) if !ids.is_empty() => frame.mark_background(&ids)?,
        _ => frame,
    };
    let p_profile = profile_watts
        .or_else(|| cfg.number("profile-watts"))
        .or_else(|| truth.as_ref().map(|t| t.p_profile));
    let p0 = truth.as_ref().map(|t| t.p0);
    Ok(LoadedDataset { tag, frame, p_profile, p0 })
}

fn emit_result(out: Option<PathBuf>, cfg: &Cfg, json: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(json).map_err(Error::from)?;
    match out.or_else(|| cfg.path("out")) {
        Some(path) => {
            write_atomic(&path, text.as_bytes())?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run_synth(args: SynthArgs, cfg: &Cfg) -> CliResult<()> {
    let seed = seed_of(args.seed, cfg);
    let out = required_path(args.out, cfg, "out")?;
    let scenario = args
        .scenario
        .or_else(|| cfg.string("scenario"))
        .unwrap_or_else(|| "grid".into());
    let tags = match scenario.as_str() {
        "grid" => synthgen::grid(seed, &out)?,
        "noisy" => {
            let spec = synthgen::noisy_scenario(seed);
            synthgen::write_dataset(&spec, &out.join("noisy"))?;
            vec!["noisy".to_string()]
        }
        other => return Err(usage(format!("unknown scenario {other:?} (grid or noisy)"))),
    };
    eprintln!("wrote {} dataset(s) under {}", tags.len(), out.display());
    println!("{}", serde_json::json!({ "out": out, "datasets": tags }));
    Ok(())
}

fn run_ingest(args: IngestArgs, cfg: &Cfg) -> CliResult<()> {
    let data = required_path(args.data, cfg, "data")?;
    let dataset = load_dataset(&data, args.format, None, None, cfg)?;
    println!("{}", serde_json::to_string_pretty(&dataset.frame.summary()).map_err(Error::from)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_config_from(
    producer: Producer,
    method: Method,
    approaches: Vec<Approach>,
    rho_threshold: Option<f64>,
    profile: Option<f64>,
    seed: u64,
    tag: String,
    holdout: Option<f64>,
    cfg: &Cfg,
) -> RunConfig {
    RunConfig {
        producer,
        method,
        approaches,
        isolation: IsolationConfig {
            rho_threshold: rho_threshold
                .or_else(|| cfg.number("rho-threshold"))
                .unwrap_or(0.7),
            profile_background_watts: profile,
            clamp_negative_labels: true,
        },
        seed,
        dataset_tag: tag,
        holdout_fraction: holdout,
    }
}

fn run_train(args: TrainArgs, cfg: &Cfg) -> CliResult<()> {
    let data = required_path(args.data, cfg, "data")?;
    let store_path = required_path(args.store, cfg, "store")?;
    let dataset = load_dataset(&data, args.format, args.background, args.profile_watts, cfg)?;
    let producer = parse_producer(args.producer, cfg)?;
    let method = parse_method(args.method, cfg)?;
    let approaches = parse_approaches(args.approaches, cfg)?;
    let seed = seed_of(args.seed, cfg);
    let tag = args
        .tag
        .or_else(|| cfg.string("tag"))
        .unwrap_or_else(|| dataset.tag.clone());
    let run_cfg = run_config_from(
        producer,
        method,
        approaches,
        args.rho_threshold,
        dataset.p_profile,
        seed,
        tag,
        args.holdout.or_else(|| cfg.number("holdout")),
        cfg,
    );
    let store = ModelStore::open(&store_path)?;

    let run = match args.resume.or_else(|| cfg.path("resume")) {
        Some(prev_path) => {
            let bytes = fs::read(&prev_path).map_err(Error::from)?;
            let prev: PipelineRun = serde_json::from_slice(&bytes).map_err(Error::from)?;
            pipeline::run_online(&prev, &dataset.frame, &run_cfg, &store)?
        }
        None => pipeline::run(&dataset.frame, &run_cfg, &store)?,
    };
    eprintln!(
        "trained {} container model(s) for {} via {}",
        run.container_models.len(),
        run.dataset_tag,
        run.method()
    );
    emit_result(args.out, cfg, &serde_json::to_value(&run).map_err(Error::from)?)
}

fn run_isolate(args: IsolateArgs, cfg: &Cfg) -> CliResult<()> {
    let data = required_path(args.data, cfg, "data")?;
    let dataset = load_dataset(&data, args.format, args.background, args.profile_watts, cfg)?;
    let producer = parse_producer(args.producer, cfg)?;
    let method = parse_method(args.method, cfg)?;
    let approaches = parse_approaches(args.approaches, cfg)?;
    let seed = seed_of(args.seed, cfg);
    let isolation_cfg = IsolationConfig {
        rho_threshold: args
            .rho_threshold
            .or_else(|| cfg.number("rho-threshold"))
            .unwrap_or(0.7),
        profile_background_watts: dataset.p_profile,
        clamp_negative_labels: true,
    };

    let prepared = prepare_matrices(&dataset.frame, producer)?;
    let result: IsolationResult = match method {
        Method::Proposed => {
            let targets = prepared.targets.as_ref().ok_or(Error::EmptyTargetSet)?;
            let mut candidates = Vec::new();
            for approach in &approaches {
                let model = fit(*approach, &prepared.total, &HyperParams::new(seed))?;
                candidates.push(SystemCandidate {
                    id: ModelId(format!("mem-{approach}")),
                    model,
                });
            }
            label_proposed(&prepared.total, targets, &prepared.power, &candidates, &isolation_cfg)?
        }
        Method::Profiling => {
            let targets = prepared.targets.as_ref().ok_or(Error::EmptyTargetSet)?;
            label_profiling(targets, &prepared.power, &isolation_cfg)?
        }
        Method::HeuristicMin => label_heuristic_min(&prepared.total, &prepared.power),
        Method::None => label_none(&prepared.power),
    };
    let out = args.out.or_else(|| cfg.path("out"));
    // A .csv target gets the plot-ready label series; anything else JSON.
    if let Some(path) = &out {
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            write_atomic(path, result.labels_csv().as_bytes())?;
            eprintln!("wrote {}", path.display());
            return Ok(());
        }
    }
    emit_result(out, cfg, &serde_json::to_value(&result).map_err(Error::from)?)
}

fn dataset_dirs(data: &Path) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let entries = fs::read_dir(data).map_err(Error::from)?;
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() && path.join(synthgen::TELEMETRY_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(Error::Alignment(format!(
            "no dataset directories with {} under {}",
            synthgen::TELEMETRY_FILE,
            data.display()
        ))));
    }
    Ok(dirs)
}

struct EvalContext {
    datasets: Vec<LoadedDataset>,
    targets: Vec<FeatureMatrix>,
    power: Vec<Vec<f64>>,
    /// One pipeline run per (method, dataset).
    runs: BTreeMap<Method, Vec<PipelineRun>>,
    store: ModelStore,
    approaches: Vec<Approach>,
    rho_threshold: f64,
    out: PathBuf,
}

fn eval_context(args: EvalArgs, cfg: &Cfg, methods: &[Method]) -> CliResult<EvalContext> {
    let data = required_path(args.data, cfg, "data")?;
    let store_path = required_path(args.store, cfg, "store")?;
    let out = required_path(args.out, cfg, "out")?;
    let producer = parse_producer(args.producer, cfg)?;
    let approaches = parse_approaches(args.approaches, cfg)?;
    let seed = seed_of(args.seed, cfg);
    let rho_threshold = args
        .rho_threshold
        .or_else(|| cfg.number("rho-threshold"))
        .unwrap_or(0.7);
    let store = ModelStore::open(&store_path)?;

    let mut datasets = Vec::new();
    for dir in dataset_dirs(&data)? {
        datasets.push(load_dataset(&dir, None, None, args.profile_watts, cfg)?);
    }

    let mut targets = Vec::new();
    let mut power = Vec::new();
    for dataset in &datasets {
        let prepared = prepare_matrices(&dataset.frame, producer)?;
        targets.push(prepared.targets.ok_or(Error::EmptyTargetSet)?);
        power.push(prepared.power);
    }

    let mut runs: BTreeMap<Method, Vec<PipelineRun>> = BTreeMap::new();
    for method in methods {
        let mut method_runs = Vec::new();
        for dataset in &datasets {
            let run_cfg = run_config_from(
                producer,
                *method,
                approaches.clone(),
                Some(rho_threshold),
                dataset.p_profile,
                seed,
                dataset.tag.clone(),
                None,
                cfg,
            );
            eprintln!("training {} on {}", method, dataset.tag);
            method_runs.push(pipeline::run(&dataset.frame, &run_cfg, &store)?);
        }
        runs.insert(*method, method_runs);
    }

    Ok(EvalContext { datasets, targets, power, runs, store, approaches, rho_threshold, out })
}

fn matrices_for(ctx: &EvalContext, method: Method) -> CliResult<Vec<CrossMatrix>> {
    let method_runs = &ctx.runs[&method];
    let mut matrices = Vec::new();
    for approach in &ctx.approaches {
        let mut evals = Vec::new();
        for (i, run) in method_runs.iter().enumerate() {
            let model = ctx.store.load(&run.container_models[approach])?;
            evals.push(DatasetEval {
                tag: ctx.datasets[i].tag.clone(),
                labels: run.isolation.labels.clone(),
                targets: ctx.targets[i].clone(),
                model,
                power: ctx.power[i].clone(),
                p_profile: ctx.datasets[i].p_profile,
            });
        }
        matrices.push(cross_validate(method, *approach, &evals)?);
    }
    Ok(matrices)
}

fn table2_rows(ctx: &EvalContext) -> CliResult<Vec<crate::evaluation::Table2Row>> {
    let proposed = ctx
        .runs
        .get(&Method::Proposed)
        .ok_or(CliError::Data(Error::NoModel))?;
    let mut models = Vec::new();
    for run in proposed {
        // Best container model of the run by recorded error.
        let best = run
            .container_errors
            .iter()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(approach, _)| approach)
            .expect("runs always have at least one approach");
        models.push(ctx.store.load(&run.container_models[best])?);
    }
    let inputs: Vec<Table2Input<'_>> = ctx
        .datasets
        .iter()
        .enumerate()
        .map(|(i, d)| Table2Input {
            tag: &d.tag,
            power: &ctx.power[i],
            p0: d.p0,
            p_profile: d.p_profile,
            model: &models[i],
            targets: &ctx.targets[i],
        })
        .collect();
    Ok(table2_report(&inputs)?)
}

fn run_eval(cmd: EvalCommand, cfg: &Cfg) -> CliResult<()> {
    match cmd {
        EvalCommand::Cross(args) => {
            let method = parse_method(args.method.clone(), cfg)?;
            let ctx = eval_context(args, cfg, &[method])?;
            let matrices = matrices_for(&ctx, method)?;
            let mut summary = Vec::new();
            for matrix in &matrices {
                let stem = format!("cross_{}_{}", matrix.method, matrix.approach);
                write_atomic(&ctx.out.join(format!("{stem}.csv")), matrix_to_csv(matrix).as_bytes())?;
                let svg = heatmap_svg(
                    &format!("{stem} (avg {:.3} W)", matrix.avg_ce),
                    &matrix.datasets,
                    &matrix.entries,
                );
                write_atomic(&ctx.out.join(format!("{stem}.svg")), svg.as_bytes())?;
                summary.push(serde_json::json!({
                    "method": matrix.method,
                    "approach": matrix.approach,
                    "avg_ce": matrix.avg_ce,
                }));
                eprintln!("wrote {stem}.csv and {stem}.svg under {}", ctx.out.display());
            }
            println!("{}", serde_json::json!({ "matrices": summary }));
            Ok(())
        }
        EvalCommand::Table2(args) => {
            let ctx = eval_context(args, cfg, &[Method::Proposed])?;
            let rows = table2_rows(&ctx)?;
            write_atomic(&ctx.out.join("table2.csv"), table2_to_csv(&rows).as_bytes())?;
            eprintln!("wrote table2.csv under {}", ctx.out.display());
            println!("{}", serde_json::to_string_pretty(&rows).map_err(Error::from)?);
            Ok(())
        }
        EvalCommand::Report(args) => {
            let ctx = eval_context(args, cfg, &Method::ALL)?;
            let mut matrices = Vec::new();
            for method in Method::ALL {
                matrices.extend(matrices_for(&ctx, method)?);
            }
            let table2 = table2_rows(&ctx)?;
            let mut fractions = BTreeMap::new();
            for (method, runs) in &ctx.runs {
                let results: Vec<IsolationResult> =
                    runs.iter().map(|r| r.isolation.clone()).collect();
                fractions.insert(
                    method.to_string(),
                    goodness_fraction(&results, ctx.rho_threshold)?,
                );
            }
            let report = build_report(
                ctx.datasets.iter().map(|d| d.tag.clone()).collect(),
                matrices,
                table2,
                fractions,
            )?;
            write_report_files(&ctx.out, &report)?;
            eprintln!("wrote report files under {}", ctx.out.display());
            println!("{}", serde_json::json!({ "avg_ce": report.avg_ce }));
            Ok(())
        }
    }
}

fn run_report(args: ReportArgs, cfg: &Cfg) -> CliResult<()> {
    let matrix_path = required_path(args.matrix, cfg, "matrix")?;
    let out = args.out.or_else(|| cfg.path("out")).unwrap_or_else(|| {
        matrix_path.with_extension("svg")
    });
    let text = fs::read_to_string(&matrix_path).map_err(Error::from)?;
    let (labels, entries) = matrix_from_csv(&text)?;
    let title = matrix_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "matrix".into());
    write_atomic(&out, heatmap_svg(&title, &labels, &entries).as_bytes())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn run_select(args: SelectArgs, cfg: &Cfg) -> CliResult<()> {
    let store_path = required_path(args.store, cfg, "store")?;
    let producer = parse_producer(args.producer, cfg)?;
    let kind_raw = args
        .kind
        .or_else(|| cfg.string("kind"))
        .unwrap_or_else(|| "container".into());
    let kind = ModelKind::from_str(&kind_raw).map_err(usage)?;
    let store = ModelStore::open(&store_path)?;
    let id = pipeline::select_best(&store, producer, kind)?;
    println!("{id}");
    Ok(())
}
