//! Operator surface: fit, predict, simulate, evaluate, bootstrap-weights.
//!
//! Every run writes into its own output directory. Primary outputs
//! (model.json, report.json, report.tsv, weights.tsv, CSVs) are byte-stable
//! across reruns of the same config; timestamps live in meta.json only.

use crate::average::{fit_averaged, predict_averaged, AveragedModel, WeightScheme};
use crate::bandwidth::{geometric_grid, plan_bandwidths};
use crate::data::{
    apply_standardization, apply_standardization_matrix, file_hash, load_csv, load_schema,
    save_csv, simulated_schema, standardize, ColumnSchema, StandardizationRecord,
};

use crate::error::{Error, Result};
use crate::eval::{
    bootstrap_weight_intervals, fpe_report_tsv, run_data_splits, run_replications,
    weight_summary_tsv, DataSplitConfig, Method, ReplicationConfig, WeightSummary,
};
use crate::math::{KernelKind, QuantileLevel};
use crate::sim::{generate, ErrorCase, Example, SimDesign};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "jvcqma",
    version,
    about = "Varying-coefficient quantile model averaging: candidate fits, \
             cross-validated weights, simulation and evaluation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for local fits, replications, and bootstrap.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit averaging weights on a CSV dataset and write model.json.
    Fit(FitArgs),
    /// Predict conditional quantiles for query rows from a saved model.
    Predict(PredictArgs),
    /// Generate a simulated train/test pair and write them as CSV.
    Simulate(SimulateArgs),
    /// Replicated out-of-sample comparison of methods (simulated or real data).
    Evaluate(EvaluateArgs),
    /// Bootstrap confidence intervals for the averaging weights.
    BootstrapWeights(BootstrapArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Gauss,
    Epanechnikov,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gauss => KernelKind::Gaussian,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Loocv,
    Equal,
    Bic,
}

impl From<SchemeArg> for WeightScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Loocv => WeightScheme::Loocv,
            SchemeArg::Equal => WeightScheme::Equal,
            SchemeArg::Bic => WeightScheme::SmoothedBic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExampleArg {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
}

impl From<ExampleArg> for Example {
    fn from(e: ExampleArg) -> Self {
        match e {
            ExampleArg::Ex1 => Example::Ex1,
            ExampleArg::Ex2 => Example::Ex2,
            ExampleArg::Ex3 => Example::Ex3,
            ExampleArg::Ex4 => Example::Ex4,
        }
    }
}

/// Geometric bandwidth grid parsed from "min:max:count".
#[derive(Debug, Clone)]
struct GridSpec(Vec<f64>);

impl std::str::FromStr for GridSpec {
    type Err = String;
    fn from_str(text: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err("expected min:max:count".into());
        }
        let lo: f64 = parts[0].parse().map_err(|_| "bad min")?;
        let hi: f64 = parts[1].parse().map_err(|_| "bad max")?;
        let count: usize = parts[2].parse().map_err(|_| "bad count")?;
        if !(lo > 0.0 && hi >= lo && count >= 1) {
            return Err("need 0 < min <= max and count >= 1".into());
        }
        Ok(GridSpec(geometric_grid(lo, hi, count)))
    }
}

fn parse_taus(taus: &[f64]) -> Result<Vec<QuantileLevel>> {
    taus.iter().map(|&t| QuantileLevel::new(t)).collect()
}

const TAU_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Args)]
struct FitArgs {
    /// Training data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column schema JSON; defaults to the bundled housing schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Quantile level; repeat for several.
    #[arg(long = "tau", default_values_t = vec![0.5])]
    taus: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Loocv)]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Gauss)]
    kernel: KernelArg,
    /// Pilot bandwidth grid override, min:max:count (geometric spacing).
    #[arg(long)]
    bandwidth_grid: Option<GridSpec>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// model.json produced by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Query rows: CSV with the same covariate columns (no response needed).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    example: ExampleArg,
    /// Error case 1..6.
    #[arg(long = "case")]
    error_case: u8,
    #[arg(long)]
    n: usize,
    /// Covariate count for ex1/ex2 (ignored by ex3/ex4).
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Permit example/case pairings outside the standard protocol.
    #[arg(long)]
    allow_case_override: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Simulated mode: which example to draw from.
    #[arg(long, value_enum)]
    example: Option<ExampleArg>,
    #[arg(long = "case", default_value_t = 1)]
    error_case: u8,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Real-data mode: CSV path (requires --schema unless the bundled
    /// housing schema applies).
    #[arg(long, conflicts_with = "example")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Held-out rows per split in real-data mode.
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Quantile levels; defaults to the 0.1..0.9 grid.
    #[arg(long = "tau")]
    taus: Vec<f64>,
    /// Comma-separated methods (jvcqma, vcqma1, vcqma2, vcqr_K, lqr); "all"
    /// runs every applicable method.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::Gauss)]
    kernel: KernelArg,
    #[arg(long)]
    bandwidth_grid: Option<GridSpec>,
    #[arg(long)]
    allow_case_override: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Quantile levels; defaults to the 0.1..0.9 grid.
    #[arg(long = "tau")]
    taus: Vec<f64>,
    /// Number of bootstrap resamples.
    #[arg(short = 'B', long = "resamples", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::Gauss)]
    kernel: KernelArg,
    #[arg(long)]
    bandwidth_grid: Option<GridSpec>,
    /// Reuse full-data bandwidths instead of recomputing per resample.
    #[arg(long)]
    fixed_bandwidth: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Serialized model file: everything `predict` needs, plus provenance.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub kernel: KernelKind,
    pub data_path: String,
    pub data_hash: String,
    pub schema: Vec<ColumnSchema>,
    pub standardization: StandardizationRecord,
    pub models: Vec<AveragedModel>,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config: serde_json::Value,
    pub input_hashes: Vec<(String, String)>,
}

fn write_meta(dir: &Path, started: std::time::SystemTime, extra: serde_json::Value) -> Result<()> {
    let elapsed = started.elapsed().unwrap_or_default().as_secs_f64();
    let meta = serde_json::json!({
        "started_unix": started
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs(),
        "wall_seconds": elapsed,
        "extra": extra,
    });
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn load_schema_or_bundled(path: Option<&PathBuf>) -> Result<(Vec<ColumnSchema>, String)> {
    match path {
        Some(p) => Ok((load_schema(p)?, p.display().to_string())),
        None => Ok((crate::data::boston_schema(), "<bundled-boston>".to_string())),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let started = std::time::SystemTime::now();
    std::fs::create_dir_all(&args.out)?;
    let (schema, schema_origin) = load_schema_or_bundled(args.schema.as_ref())?;
    let raw = load_csv(&args.data, &schema).map_err(Error::stage("load-data"))?;
    let data_hash = file_hash(&args.data)?;
    let (data, record) = standardize(&raw, &schema).map_err(Error::stage("standardize"))?;
    let kernel: KernelKind = args.kernel.into();
    let taus = parse_taus(&args.taus)?;

    let mut models = Vec::new();
    for &tau in &taus {
        let plan = plan_bandwidths(&data, tau, args.bandwidth_grid.as_ref().map(|g| g.0.as_slice()), kernel)
            .map_err(Error::stage("bandwidth-selection"))?;
        let model = fit_averaged(&data, tau, args.scheme.into(), &plan, kernel)
            .map_err(Error::stage("fit-weights"))?;
        models.push(model);
    }

    let config = serde_json::json!({
        "subcommand": "fit",
        "data": args.data.display().to_string(),
        "schema": schema_origin,
        "taus": args.taus,
        "scheme": format!("{:?}", args.scheme),
        "kernel": format!("{:?}", args.kernel),
        "bandwidth_grid": args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
    });
    let file = ModelFile {
        version: env!("CARGO_PKG_VERSION").to_string(),
        kernel,
        data_path: args.data.display().to_string(),
        data_hash: data_hash.clone(),
        schema: schema.clone(),
        standardization: record,
        models,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            input_hashes: vec![(args.data.display().to_string(), data_hash)],
        },
    };
    std::fs::write(
        args.out.join("model.json"),
        serde_json::to_string_pretty(&file)?,
    )?;
    write_meta(&args.out, started, serde_json::json!({}))?;
    Ok(())
}

/// Queries may arrive with or without the response column; only covariate
/// columns are read, in schema order.
fn load_query_matrix(path: &Path, schema_names: &[String]) -> Result<crate::linalg::Mat> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::EmptyCsv(path.display().to_string()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut positions = Vec::new();
    for want in schema_names {
        match names.iter().position(|n| n == want) {
            Some(pos) => positions.push(pos),
            None => return Err(Error::MissingColumn(want.clone())),
        }
    }
    let mut rows = 0usize;
    let mut data = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        for &pos in &positions {
            let cell = cells.get(pos).copied().unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row: row_idx + 1,
                column: names.get(pos).copied().unwrap_or("?").to_string(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(crate::linalg::Mat::from_vec(rows, positions.len(), data))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let started = std::time::SystemTime::now();
    std::fs::create_dir_all(&args.out)?;
    let text = std::fs::read_to_string(&args.model)?;
    let file: ModelFile = serde_json::from_str(&text)?;

    // the model references its training data by path + content hash
    let data_path = PathBuf::from(&file.data_path);
    let actual = file_hash(&data_path).map_err(Error::stage("verify-training-data"))?;
    if actual != file.data_hash {
        return Err(Error::HashMismatch {
            path: file.data_path.clone(),
            expected: file.data_hash.clone(),
            actual,
        });
    }

    // rebuild the standardized training set from the schema recorded at fit
    let raw = load_csv(&data_path, &file.schema)?;
    let train = apply_standardization(&raw, &file.standardization)?;

    // queries: covariate columns only, standardized with training statistics
    let covariate_names: Vec<String> = file
        .schema
        .iter()
        .filter(|c| c.role != crate::data::ColumnRole::Response)
        .map(|c| c.name.clone())
        .collect();
    let raw_queries = load_query_matrix(&args.queries, &covariate_names)?;
    let queries = apply_standardization_matrix(&raw_queries, &file.standardization)?;

    let mut out = String::from("row,tau,prediction\n");
    for model in &file.models {
        let preds = predict_averaged(model, &train, &queries, file.kernel)
            .map_err(Error::stage("predict"))?;
        for (i, v) in preds.iter().enumerate() {
            if v.is_finite() {
                out.push_str(&format!("{},{},{}\n", i, model.tau.value(), v));
            } else {
                out.push_str(&format!("{},{},NA\n", i, model.tau.value()));
            }
        }
    }
    std::fs::write(args.out.join("predictions.csv"), out)?;
    write_meta(&args.out, started, serde_json::json!({}))?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let started = std::time::SystemTime::now();
    std::fs::create_dir_all(&args.out)?;
    let design = SimDesign {
        example: args.example.into(),
        error_case: ErrorCase::new(args.error_case)?,
        n: args.n,
        p: args.p,
        seed: args.seed,
        allow_case_override: args.allow_case_override,
    };
    let sample = generate(&design).map_err(Error::stage("generate"))?;
    let schema = simulated_schema(&sample.train);
    save_csv(&args.out.join("train.csv"), &sample.train, &schema)?;
    save_csv(&args.out.join("test.csv"), &sample.test, &schema)?;
    write_meta(
        &args.out,
        started,
        serde_json::json!({ "design": design.label() }),
    )?;
    Ok(())
}

fn parse_methods(text: &str, p: usize) -> Result<Vec<Method>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(Method::all_for(p));
    }
    text.split(',').map(Method::parse).collect()
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = std::time::SystemTime::now();
    std::fs::create_dir_all(&args.out)?;
    let taus = if args.taus.is_empty() {
        parse_taus(&TAU_GRID)?
    } else {
        parse_taus(&args.taus)?
    };
    let kernel: KernelKind = args.kernel.into();

    let (report, weights, config) = if let Some(example) = args.example {
        let design = SimDesign {
            example: example.into(),
            error_case: ErrorCase::new(args.error_case)?,
            n: args.n,
            p: args.p,
            seed: 0,
            allow_case_override: args.allow_case_override,
        };
        let p = generate(&design.with_seed(0))
            .map_err(Error::stage("generate"))?
            .train
            .continuous_cols()
            .len();
        let cfg = ReplicationConfig {
            design,
            taus,
            methods: parse_methods(&args.methods, p)?,
            reps: args.reps,
            master_seed: args.seed,
            kernel,
            grid: args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
        };
        let (report, weights) = run_replications(&cfg).map_err(Error::stage("evaluate"))?;
        let config = serde_json::json!({
            "subcommand": "evaluate",
            "mode": "simulated",
            "design": cfg.design.label(),
            "taus": report.taus,
            "methods": report.methods,
            "reps": args.reps,
            "seed": args.seed,
            "kernel": format!("{:?}", args.kernel),
            "bandwidth_grid": args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
        });
        (report, weights, config)
    } else {
        let data_path = args
            .data
            .as_ref()
            .ok_or_else(|| Error::Internal("evaluate needs --example or --data".into()))?;
        let (schema, schema_origin) = load_schema_or_bundled(args.schema.as_ref())?;
        let data = load_csv(data_path, &schema).map_err(Error::stage("load-data"))?;
        let cfg = DataSplitConfig {
            taus,
            methods: parse_methods(&args.methods, data.continuous_cols().len())?,
            n_test: args.n_test,
            reps: args.reps,
            master_seed: args.seed,
            kernel,
            grid: args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
        };
        let (report, weights) =
            run_data_splits(&data, &schema, &cfg).map_err(Error::stage("evaluate"))?;
        let config = serde_json::json!({
            "subcommand": "evaluate",
            "mode": "data-splits",
            "data": data_path.display().to_string(),
            "data_hash": file_hash(data_path)?,
            "schema": schema_origin,
            "n_test": args.n_test,
            "taus": report.taus,
            "methods": report.methods,
            "reps": args.reps,
            "seed": args.seed,
            "kernel": format!("{:?}", args.kernel),
            "bandwidth_grid": args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
        });
        (report, weights, config)
    };

    let payload = serde_json::json!({
        "provenance": {
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        },
        "fpe": report,
        "weights": weights,
    });
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&payload)?,
    )?;
    std::fs::write(args.out.join("report.tsv"), fpe_report_tsv(&report))?;
    std::fs::write(args.out.join("weights.tsv"), weight_summary_tsv(&weights))?;
    write_meta(
        &args.out,
        started,
        serde_json::json!({ "mean_rep_seconds": report.mean_rep_seconds }),
    )?;
    Ok(())
}

fn cmd_bootstrap(args: &BootstrapArgs) -> Result<()> {
    let started = std::time::SystemTime::now();
    std::fs::create_dir_all(&args.out)?;
    let (schema, schema_origin) = load_schema_or_bundled(args.schema.as_ref())?;
    let raw = load_csv(&args.data, &schema).map_err(Error::stage("load-data"))?;
    let (data, _) = standardize(&raw, &schema).map_err(Error::stage("standardize"))?;
    let kernel: KernelKind = args.kernel.into();
    let taus = if args.taus.is_empty() {
        parse_taus(&TAU_GRID)?
    } else {
        parse_taus(&args.taus)?
    };

    let fixed: Option<Vec<Vec<f64>>> = if args.fixed_bandwidth {
        let mut per_tau = Vec::new();
        for &tau in &taus {
            let plan = plan_bandwidths(&data, tau, args.bandwidth_grid.as_ref().map(|g| g.0.as_slice()), kernel)
                .map_err(Error::stage("bandwidth-selection"))?;
            per_tau.push(plan.adjusted);
        }
        Some(per_tau)
    } else {
        None
    };

    let mut merged = WeightSummary {
        candidate_cols: data.continuous_cols().to_vec(),
        rows: Vec::new(),
    };
    for (ti, &tau) in taus.iter().enumerate() {
        let summary = bootstrap_weight_intervals(
            &data,
            tau,
            args.b,
            crate::rng::derive_seed(args.seed, ti as u64),
            kernel,
            args.bandwidth_grid.as_ref().map(|g| g.0.as_slice()),
            fixed.as_ref().map(|f| f[ti].as_slice()),
        )
        .map_err(Error::stage("bootstrap"))?;
        merged.rows.extend(summary.rows);
    }

    let config = serde_json::json!({
        "subcommand": "bootstrap-weights",
        "data": args.data.display().to_string(),
        "data_hash": file_hash(&args.data)?,
        "schema": schema_origin,
        "taus": taus.iter().map(|t| t.value()).collect::<Vec<_>>(),
        "resamples": args.b,
        "seed": args.seed,
        "kernel": format!("{:?}", args.kernel),
        "fixed_bandwidth": args.fixed_bandwidth,
        "bandwidth_grid": args.bandwidth_grid.as_ref().map(|g| g.0.clone()),
    });
    let payload = serde_json::json!({
        "provenance": { "version": env!("CARGO_PKG_VERSION"), "config": config },
        "weights": merged,
    });
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&payload)?,
    )?;
    std::fs::write(args.out.join("report.tsv"), weight_summary_tsv(&merged))?;
    write_meta(&args.out, started, serde_json::json!({}))?;
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    run_parsed(cli)
}

fn run_parsed(cli: Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::BootstrapWeights(args) => cmd_bootstrap(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Test-facing entry point taking raw argv.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_parsed(cli),
        Err(e) => {
            eprintln!("{e}");
            2
        }
    }
}
