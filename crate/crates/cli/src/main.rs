//! Batch front end: simulate datasets, summarize and replicate the
//! group-comparability tables, run the contrast estimators, and query causal
//! diagrams. Every output file carries a provenance block sufficient to
//! regenerate it; exit codes are 0 success, 1 runtime failure, 2 usage or
//! configuration error, 3 positivity violation.

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use causim_core::dgp::{
    pooled_long_replications, pooled_point_replications, DgpKind, LongDataset, PointDataset,
    Provenance, Regime,
};
use causim_core::diagnostics::{
    combine_partials, group_summaries_long, group_summaries_point, positivity_check,
    replicate_partial, Convention, ReplicateConfig, SummaryTable,
};
use causim_core::graph::{Dag, FigureId};
use causim_core::inference::{
    beta_binomial_update, bin_x, dichotomize, direct_standardization, g_formula_long,
    naive_contrast, null_paradox_report, parametric_g_formula_point,
    posterior_predictive_contrast_binary, posterior_predictive_contrast_draws, EventRule,
    GFormulaSettings, InferenceError,
};
use causim_core::rng::RngState;

#[derive(Parser, Debug)]
#[command(name = "causim", version, about = "Confounding simulations and marginal-contrast estimation")]
struct Cli {
    /// Master seed for randomized commands
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replication fan-out (output bytes are unaffected)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON configuration file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (a `.prov.json` sidecar is written next to CSV outputs)
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a quota-sampled dataset (CSV + provenance sidecar)
    Simulate(SimArgs),
    /// Group summaries of an existing dataset
    Summarize(SummarizeArgs),
    /// Replicated summaries in the layout of the comparability tables
    Replicate(SimArgs),
    /// Contrast estimators over a dataset file
    Estimate(EstimateArgs),
    /// d-separation and back-door verdicts on built-in or user diagrams
    Graph(GraphArgs),
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Data-generating process: point | long
    #[arg(long)]
    dgp: Option<DgpKind>,

    /// Confounding strength; 0 is the experimental regime
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,

    /// Units per treatment group (point: 2 groups, long: 4 groups)
    #[arg(long)]
    per_group: Option<u32>,

    /// Number of quota-sampled replications
    #[arg(long)]
    replications: Option<u32>,

    /// Also emit per-x stratified rows (longitudinal summaries)
    #[arg(long)]
    stratify: bool,

    /// Reduction for replicated group rows: per-replication | pooled
    #[arg(long)]
    convention: Option<Convention>,
}

#[derive(Args, Debug, Clone)]
struct SummarizeArgs {
    /// Dataset CSV (header `x,z,y,u` or `z1,x,z2,y,u`)
    dataset: PathBuf,

    /// Also emit per-x stratified rows (longitudinal data)
    #[arg(long)]
    stratify: bool,
}

#[derive(Args, Debug, Clone)]
struct EstimateArgs {
    /// Dataset CSV
    dataset: PathBuf,

    /// naive | standardize | beta-binomial | g-formula-mcmc | g-formula-long | null-paradox
    #[arg(long)]
    method: Option<String>,

    /// Covariate bin cap: strata x in {0..k-1} plus a pooled tail x >= k
    #[arg(short = 'k', long)]
    k: Option<u32>,

    /// Beta prior parameters, shared by both arms
    #[arg(long)]
    prior_a: Option<f64>,
    #[arg(long)]
    prior_b: Option<f64>,

    /// Normal prior SD on the log-linear coefficients
    #[arg(long)]
    prior_sd: Option<f64>,

    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thinning: Option<u64>,

    /// Posterior contrast draws to attach (beta-binomial)
    #[arg(long)]
    draws: Option<usize>,

    /// Positivity flag threshold for the report accompanying standardize
    #[arg(long)]
    min_count: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// Built-in diagram: fig1_E | fig1_O | fig2_E | fig2_O | fig2_null_alt
    #[arg(long, conflicts_with = "dag")]
    figure: Option<String>,

    /// Remove the treatment-effect arrows from the built-in diagram
    #[arg(long)]
    under_null: bool,

    /// DAG text file (`parent -> child` per line, `#` comments)
    #[arg(long)]
    dag: Option<PathBuf>,

    /// d-separation query: two node names
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    dsep: Option<Vec<String>>,

    /// Conditioning set for --dsep (comma separated)
    #[arg(long, value_delimiter = ',')]
    given: Vec<String>,

    /// Back-door query: treatment and outcome
    #[arg(long, num_args = 2, value_names = ["TREATMENT", "OUTCOME"])]
    backdoor: Option<Vec<String>>,

    /// Adjustment set for --backdoor (comma separated)
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,
}

/// Values accepted from a `--config` JSON file; flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    dgp: Option<DgpKind>,
    gamma: Option<f64>,
    per_group: Option<u32>,
    replications: Option<u32>,
    stratify: Option<bool>,
    convention: Option<Convention>,
    method: Option<String>,
    k: Option<u32>,
    prior_a: Option<f64>,
    prior_b: Option<f64>,
    prior_sd: Option<f64>,
    iterations: Option<u64>,
    burn_in: Option<u64>,
    thinning: Option<u64>,
    draws: Option<usize>,
    min_count: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
    Positivity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Positivity(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Positivity(m) => m,
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::PositivityViolation(_)
            | InferenceError::EmptyCell { .. }
            | InferenceError::EmptyArm(_) => CliError::Positivity(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {path:?}: {e}")))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {path:?}: {e}")))?
        }
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file_config.seed).unwrap_or(42);
    let threads = cli.threads.or(file_config.threads).unwrap_or(1);
    let output = cli.output.clone();
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &file_config, seed, output),
        Command::Replicate(args) => cmd_replicate(args, &file_config, seed, threads, output),
        Command::Summarize(args) => cmd_summarize(args, output),
        Command::Estimate(args) => cmd_estimate(args, &file_config, seed, output),
        Command::Graph(args) => cmd_graph(args),
    }
}

fn require<T: Clone>(flag: &Option<T>, file: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| CliError::Usage(format!("missing required value: --{name}")))
}

fn provenance_json(command: &str, config: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "artifact": { "name": "causim", "version": env!("CARGO_PKG_VERSION") },
        "command": command,
        "config": config,
    })
}

fn write_output(path: &Path, bytes: &str) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {path:?}: {e}")))
}

fn write_sidecar(path: &Path, prov: &serde_json::Value) -> Result<(), CliError> {
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".prov.json");
    let text = serde_json::to_string_pretty(prov)
        .map_err(|e| CliError::Runtime(format!("provenance serialization: {e}")))?;
    write_output(Path::new(&sidecar), &(text + "\n"))
}

fn cmd_simulate(
    args: &SimArgs,
    file: &FileConfig,
    seed: u64,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let kind = require(&args.dgp, &file.dgp, "dgp")?;
    let gamma = require(&args.gamma, &file.gamma, "gamma")?;
    let per_group = require(&args.per_group, &file.per_group, "per-group")?;
    let replications = args.replications.or(file.replications).unwrap_or(1);
    if !gamma.is_finite() {
        return Err(CliError::Usage(format!("gamma must be finite, got {gamma}")));
    }
    if per_group == 0 || replications == 0 {
        return Err(CliError::Usage(
            "per-group and replications must be positive".into(),
        ));
    }
    let config = serde_json::json!({
        "dgp": kind, "gamma": gamma, "per_group": per_group,
        "replications": replications, "seed": seed,
    });
    let (csv, prov, n) = match kind {
        DgpKind::Point => {
            let data = pooled_point_replications(seed, gamma, per_group, replications)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            (data.to_csv(), data.provenance().clone(), data.len())
        }
        DgpKind::Long => {
            let data = pooled_long_replications(seed, gamma, per_group, replications)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            (data.to_csv(), data.provenance().clone(), data.len())
        }
    };
    let mut prov_block = provenance_json("simulate", config);
    prov_block["dataset"] = serde_json::to_value(&prov)
        .map_err(|e| CliError::Runtime(format!("provenance serialization: {e}")))?;
    match output {
        Some(path) => {
            write_output(&path, &csv)?;
            write_sidecar(&path, &prov_block)?;
            println!("wrote {n} records to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_replication_pool(
    config: &ReplicateConfig,
    threads: usize,
) -> Result<SummaryTable, CliError> {
    let partials: Result<Vec<_>, _> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..config.replications)
                .into_par_iter()
                .map(|rep| replicate_partial(config, rep))
                .collect()
        })
    } else {
        (0..config.replications)
            .map(|rep| replicate_partial(config, rep))
            .collect()
    };
    // collection preserves replication order, so the reduction is identical
    // regardless of thread count
    Ok(combine_partials(
        config,
        &partials.map_err(|e| CliError::Runtime(e.to_string()))?,
    ))
}

fn cmd_replicate(
    args: &SimArgs,
    file: &FileConfig,
    seed: u64,
    threads: usize,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let kind = require(&args.dgp, &file.dgp, "dgp")?;
    let gamma = require(&args.gamma, &file.gamma, "gamma")?;
    let per_group = require(&args.per_group, &file.per_group, "per-group")?;
    let replications = require(&args.replications, &file.replications, "replications")?;
    if !gamma.is_finite() || per_group == 0 || replications == 0 {
        return Err(CliError::Usage(
            "gamma must be finite; per-group and replications positive".into(),
        ));
    }
    let stratify = args.stratify || file.stratify.unwrap_or(false);
    let convention = args
        .convention
        .or(file.convention)
        .unwrap_or_default();
    let config = ReplicateConfig {
        kind,
        gamma,
        per_group,
        replications,
        master_seed: seed,
        stratify_by_x: stratify,
        convention,
    };
    let table = run_replication_pool(&config, threads)?;
    print!("{}", table.to_text());
    if let Some(path) = output {
        write_output(&path, &table.to_csv())?;
        let echo = serde_json::to_value(&config)
            .map_err(|e| CliError::Runtime(format!("config serialization: {e}")))?;
        write_sidecar(&path, &provenance_json("replicate", echo))?;
    }
    Ok(())
}

/// Dataset file with optional `.prov.json` sidecar; the header row decides
/// between the point and longitudinal layouts.
enum LoadedDataset {
    Point(PointDataset),
    Long(LongDataset),
}

fn unknown_provenance(kind: DgpKind) -> Provenance {
    Provenance {
        kind,
        regime: Regime::Observational,
        gamma: f64::NAN, // serialized as null: provenance unknown
        master_seed: 0,
        stream_index: 0,
        per_group: 0,
        replications: 0,
    }
}

fn load_dataset(path: &Path) -> Result<(LoadedDataset, Option<serde_json::Value>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {path:?}: {e}")))?;
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".prov.json");
    let sidecar: Option<serde_json::Value> = std::fs::read_to_string(Path::new(&sidecar_path))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let dataset_prov = |kind: DgpKind| -> Provenance {
        sidecar
            .as_ref()
            .and_then(|v| v.get("dataset"))
            .and_then(|d| serde_json::from_value(d.clone()).ok())
            .unwrap_or_else(|| unknown_provenance(kind))
    };
    let header = text.lines().next().unwrap_or("").trim();
    let loaded = match header {
        "x,z,y,u" => LoadedDataset::Point(
            PointDataset::from_csv(&text, dataset_prov(DgpKind::Point))
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        ),
        "z1,x,z2,y,u" => LoadedDataset::Long(
            LongDataset::from_csv(&text, dataset_prov(DgpKind::Long))
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        ),
        other => {
            return Err(CliError::Runtime(format!(
                "unrecognized dataset header {other:?} in {path:?}"
            )))
        }
    };
    Ok((loaded, sidecar))
}

fn cmd_summarize(args: &SummarizeArgs, output: Option<PathBuf>) -> Result<(), CliError> {
    let (loaded, _) = load_dataset(&args.dataset)?;
    let table = match &loaded {
        LoadedDataset::Point(data) => {
            group_summaries_point(data).map_err(|e| CliError::Runtime(e.to_string()))?
        }
        LoadedDataset::Long(data) => group_summaries_long(data, args.stratify)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    };
    print!("{}", table.to_text());
    if let Some(path) = output {
        write_output(&path, &table.to_csv())?;
        let echo = serde_json::json!({
            "dataset": args.dataset.display().to_string(),
            "stratify": args.stratify,
        });
        write_sidecar(&path, &provenance_json("summarize", echo))?;
    }
    Ok(())
}

fn cmd_estimate(
    args: &EstimateArgs,
    file: &FileConfig,
    seed: u64,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let method = require(&args.method, &file.method, "method")?;
    let cap = args.k.or(file.k).unwrap_or(8);
    let prior_a = args.prior_a.or(file.prior_a).unwrap_or(1.0);
    let prior_b = args.prior_b.or(file.prior_b).unwrap_or(1.0);
    let gf = GFormulaSettings {
        cap,
        prior_sd: args.prior_sd.or(file.prior_sd).unwrap_or(10.0),
        iterations: args.iterations.or(file.iterations).unwrap_or(50_000),
        burn_in: args.burn_in.or(file.burn_in).unwrap_or(5_000),
        thinning: args.thinning.or(file.thinning).unwrap_or(5),
    };
    let n_draws = args.draws.or(file.draws).unwrap_or(0);
    let min_count = args.min_count.or(file.min_count).unwrap_or(5);
    // estimator stream, disjoint from the replication substreams 0..R that
    // dataset generation consumes under the same master seed
    let estimator_rng = RngState::new(seed).split(u64::MAX);
    let (loaded, _) = load_dataset(&args.dataset)?;

    let mut config = serde_json::json!({
        "method": method, "seed": seed, "dataset": args.dataset.display().to_string(),
    });
    let result: serde_json::Value = match (method.as_str(), &loaded) {
        ("naive", LoadedDataset::Point(data)) => {
            naive_contrast(&data.observed())?.summary_json()
        }
        ("standardize", LoadedDataset::Point(data)) => {
            config["k"] = cap.into();
            config["min_count"] = min_count.into();
            let est = direct_standardization(&bin_x(&data.observed(), cap))?;
            let positivity = positivity_check(data, min_count, cap);
            let mut v = est.summary_json();
            v["positivity"] = serde_json::to_value(&positivity)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            v
        }
        ("beta-binomial", LoadedDataset::Point(data)) => {
            config["prior"] = serde_json::json!([prior_a, prior_b]);
            config["draws"] = n_draws.into();
            let rule = EventRule::positive_count();
            let totals = dichotomize(&data.observed(), rule);
            let post = beta_binomial_update(&totals, (prior_a, prior_b), (prior_a, prior_b))?;
            let exact = posterior_predictive_contrast_binary(&post);
            let mut v = if n_draws > 0 {
                let mut rng = estimator_rng;
                posterior_predictive_contrast_draws(&post, n_draws, &mut rng).summary_json()
            } else {
                exact.summary_json()
            };
            v["event_rule"] = rule.describe().into();
            v["exact_point"] = exact.point.into();
            v["posterior"] = serde_json::to_value(post)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            v
        }
        ("g-formula-mcmc", LoadedDataset::Point(data)) => {
            config["k"] = cap.into();
            config["g_formula"] =
                serde_json::to_value(&gf).map_err(|e| CliError::Runtime(e.to_string()))?;
            let mut rng = estimator_rng;
            let fit = parametric_g_formula_point(&data.observed(), &gf, &mut rng)?;
            let mut v = fit.estimate.summary_json();
            v["acceptance_rate"] = fit.acceptance_rate.into();
            v["ess"] = fit.ess.into();
            v
        }
        ("g-formula-long", LoadedDataset::Long(data)) => {
            let obs = data.observed();
            let mut regimes = Vec::new();
            for (z1, z2) in [(1u8, 1u8), (1, 0), (0, 1), (0, 0)] {
                regimes.push(g_formula_long(&obs, z1, z2)?);
            }
            serde_json::json!({
                "method": "g-formula-long",
                "regimes": regimes,
            })
        }
        ("null-paradox", LoadedDataset::Long(data)) => {
            let report = null_paradox_report(&data.observed())?;
            let mut v = serde_json::to_value(&report)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            v["method"] = "null-paradox".into();
            v
        }
        (m @ ("naive" | "standardize" | "beta-binomial" | "g-formula-mcmc"), _) => {
            return Err(CliError::Usage(format!(
                "method {m} expects a point dataset (header `x,z,y,u`)"
            )))
        }
        (m @ ("g-formula-long" | "null-paradox"), _) => {
            return Err(CliError::Usage(format!(
                "method {m} expects a longitudinal dataset (header `z1,x,z2,y,u`)"
            )))
        }
        (other, _) => {
            return Err(CliError::Usage(format!("unknown method: {other}")));
        }
    };

    let mut envelope = provenance_json("estimate", config);
    envelope["result"] = result;
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| CliError::Runtime(format!("result serialization: {e}")))?
        + "\n";
    match output {
        Some(path) => write_output(&path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_graph(args: &GraphArgs) -> Result<(), CliError> {
    let dag: Dag = match (&args.figure, &args.dag) {
        (Some(name), None) => {
            let id: FigureId = name
                .parse()
                .map_err(|e: causim_core::graph::GraphError| CliError::Usage(e.to_string()))?;
            causim_core::graph::builtin_figure(id, args.under_null)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {path:?}: {e}")))?;
            Dag::parse(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --figure or --dag is required".into(),
            ))
        }
    };
    let mut ran_query = false;
    if let Some(pair) = &args.dsep {
        ran_query = true;
        let given: Vec<&str> = args.given.iter().map(String::as_str).collect();
        let separated = dag
            .d_separated(&[pair[0].as_str()], &[pair[1].as_str()], &given)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("{}", if separated { "d-separated" } else { "d-connected" });
    }
    if let Some(pair) = &args.backdoor {
        ran_query = true;
        let adjust: Vec<&str> = args.adjust.iter().map(String::as_str).collect();
        let verdict = dag
            .backdoor_verdict(&pair[0], &pair[1], &adjust)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        match verdict.reason {
            None => println!("satisfied"),
            Some(reason) => println!("violated: {reason}"),
        }
    }
    if !ran_query {
        // no query: describe the diagram
        println!("nodes: {}", dag.node_labels().join(", "));
        for (a, b) in dag.edges() {
            println!("{a} -> {b}");
        }
    }
    Ok(())
}
