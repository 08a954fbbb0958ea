//! `cfopt` subcommands. Exit codes: 0 success, 1 invalid arguments or
//! input, 2 no counterfactual (infeasible, with criterion tags), 3 I/O.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cfopt::builder::{BuildError, CeConfig, Target};
use cfopt::data::{DataError, Dataset, FeatureSchema};
use cfopt::demo::{Demo, DemoName, PartOutcome};
use cfopt::evaluate::{aggregate, render_table, resolve_target, score_set, MetricsReport, Summary};
use cfopt::learners::{train_on, Family, Hyperparams, TrainedModel};

use crate::{explain, Explanation, Instance};

#[derive(Debug, Parser)]
#[command(name = "cfopt", version, about = "Counterfactual explanations by mixed-integer optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a CSV dataset and save it as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// lr, svm, cart, rf or mlp.
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file of hyperparameters; omitted fields keep their defaults.
        #[arg(long)]
        hyperparams: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate counterfactuals for one instance.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Training-row index, an inline JSON record, or a JSON record file.
        #[arg(long)]
        instance: String,
        /// CeConfig JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Number of counterfactuals; overrides the config's diversity count.
        #[arg(short = 'm')]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the metrics table for saved explain results.
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
    },
    /// Run a staged demo on a bundled fixture.
    Demo {
        /// german-credit or heart.
        #[arg(long)]
        name: DemoName,
        /// Factual row; by default the first row the last part can explain.
        #[arg(long)]
        row: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the JSON API over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Model JSON files to register at startup.
        #[arg(long)]
        model: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Args(String),
    Infeasible { tags: Vec<String> },
    NoSolution,
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Args(_) => 1,
            CliError::Infeasible { .. } | CliError::NoSolution => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Args(m) => write!(f, "{m}"),
            CliError::Infeasible { tags } => write!(f, "infeasible: conflicting criteria {}", tags.join(", ")),
            CliError::NoSolution => write!(f, "no counterfactual found within the solver limits"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Infeasible { tags } => CliError::Infeasible { tags },
            BuildError::NoSolution => CliError::NoSolution,
            BuildError::Data(d) => d.into(),
            other => CliError::Args(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Args(other.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Args(format!("{}: {e}", path.display())))
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema, CliError> {
    Ok(FeatureSchema::from_json(&read(path)?)?)
}

pub fn load_dataset(data: &Path, schema: &Path) -> Result<Dataset, CliError> {
    let schema = load_schema(schema)?;
    if !data.exists() {
        return Err(CliError::Io(format!("{}: no such file", data.display())));
    }
    Ok(Dataset::load_csv(data, &schema)?)
}

pub fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    TrainedModel::from_json(&read(path)?).map_err(|e| CliError::Args(format!("{}: {e}", path.display())))
}

/// Reads a CeConfig, or the `config` of a demo part file.
pub fn load_config(path: &Path) -> Result<CeConfig, CliError> {
    let mut v: serde_json::Value = parse(path, &read(path)?)?;
    if v.get("label").is_some() && v.get("config").is_some_and(|c| c.is_object()) {
        v = v["config"].take();
    }
    let cfg: CeConfig = serde_json::from_value(v).map_err(|e| CliError::Args(format!("{}: {e}", path.display())))?;
    if matches!(&cfg.target, Target::Class { label } if label.is_empty()) {
        return Err(CliError::Args(format!("{}: config has no target", path.display())));
    }
    Ok(cfg)
}

/// Everything needed to re-score an explanation later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainOutput {
    pub engine_version: String,
    pub schema: FeatureSchema,
    pub model: TrainedModel,
    pub instance: Instance,
    pub config: CeConfig,
    #[serde(flatten)]
    pub explanation: Explanation,
}

fn parse_instance(arg: &str) -> Result<Instance, CliError> {
    if let Ok(row) = arg.parse::<usize>() {
        return Ok(Instance::Row(row));
    }
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { read(Path::new(arg))? };
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Args(format!("instance is not a row index or JSON record: {e}")))?;
    Ok(Instance::Inline(v))
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn run<I, T>(args: I, out: &mut impl Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    let mut say = |text: String| -> Result<(), CliError> { out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())) };
    match cli.command {
        Command::Train { data, schema, family, seed, hyperparams, out: path } => {
            let ds = load_dataset(&data, &schema)?;
            let hp = match hyperparams {
                Some(p) => parse::<Hyperparams>(&p, &read(&p)?)?,
                None => Hyperparams::default(),
            };
            let model = train_on(&ds, family, &hp, seed).map_err(|e| CliError::Args(e.to_string()))?;
            write_file(&path, &model.to_json())?;
            let fit = model.train_metric.map(|m| format!(", training fit {m:.4}")).unwrap_or_default();
            let name = format!("{family:?}").to_lowercase();
            say(format!("trained {name} on {} rows{fit}; saved to {}\n", ds.len(), path.display()))
        }
        Command::Explain { model, data, schema, instance, config, m, out: path } => {
            let ds = load_dataset(&data, &schema)?;
            let model = load_model(&model)?;
            let mut cfg = load_config(&config)?;
            if let Some(m) = m {
                cfg.diversity.set_count(m);
            }
            cfg.validate()?;
            let instance = parse_instance(&instance)?;
            let factual = instance.resolve(&ds)?;
            let ex = explain(&model, &ds, &factual, &cfg)?;
            let mut text = ex.result.table();
            text.push('\n');
            text.push_str(&render_table(&[("metrics".into(), single(&ex.metrics))]));
            for w in &ex.result.warnings {
                text.push_str(&format!("warning: {w}\n"));
            }
            say(text)?;
            if let Some(path) = path {
                let output = ExplainOutput {
                    engine_version: cfopt::VERSION.into(),
                    schema: ds.schema.clone(),
                    model,
                    instance,
                    config: cfg,
                    explanation: ex,
                };
                write_file(&path, &serde_json::to_string_pretty(&output).expect("result serializes"))?;
            }
            Ok(())
        }
        Command::Evaluate { results } => {
            let mut rows = Vec::new();
            let mut all = Vec::new();
            for path in &results {
                let saved: ExplainOutput = parse(path, &read(path)?)?;
                let report = rescore(&saved).map_err(|e| CliError::Args(format!("{}: {e}", path.display())))?;
                let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                rows.push((label, single(&report)));
                all.push(report);
            }
            if all.len() > 1 {
                rows.push(("all".into(), aggregate(&all).expect("non-empty")));
            }
            say(render_table(&rows))
        }
        Command::Demo { name, row, out: path } => {
            let demo = Demo::load(name).map_err(|e| CliError::Args(e.to_string()))?;
            let row = match row {
                Some(r) if r < demo.dataset.len() => r,
                Some(r) => return Err(CliError::Args(format!("row {r} out of range"))),
                None => demo.factual_row().map_err(|e| CliError::Args(e.to_string()))?,
            };
            let outcomes = demo.run(row).map_err(|e| CliError::Args(e.to_string()))?;
            say(render_demo(&demo, row, &outcomes))?;
            if let Some(path) = path {
                write_file(&path, &serde_json::to_string_pretty(&outcomes).expect("outcomes serialize"))?;
            }
            Ok(())
        }
        Command::Serve { port, host, data, schema, model } => {
            let ds = load_dataset(&data, &schema)?;
            let models = model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
            let state = crate::server::AppState::new(ds, models);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(crate::server::serve(&host, port, state)).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Summary of a single report, for one table row.
fn single(r: &MetricsReport) -> Summary {
    aggregate(std::slice::from_ref(r)).expect("one report")
}

/// Recomputes metrics from the saved factual, counterfactuals and model.
pub fn rescore(saved: &ExplainOutput) -> Result<MetricsReport, String> {
    let r = &saved.explanation.result;
    let target = resolve_target(&saved.schema, &saved.model, &saved.config.target).map_err(|e| e.to_string())?;
    let ces: Vec<_> = r.counterfactuals.iter().map(|c| c.record.clone()).collect();
    score_set(&r.factual, &ces, &saved.model, &saved.schema, target).map_err(|e| e.to_string())
}

/// Per part: heading, counterfactual table; then one metrics row per part.
pub fn render_demo(demo: &Demo, row: usize, outcomes: &[PartOutcome]) -> String {
    let mut s = format!("{} demo, factual row {row}\n\n", demo.name);
    let mut rows = Vec::new();
    for o in outcomes {
        s.push_str(&format!("{}: {}\n", o.label, o.criteria));
        match (&o.result, &o.metrics) {
            (Some(r), Some(m)) => {
                s.push_str(&r.table());
                if r.partial {
                    s.push_str(&format!("(found {} of {} requested)\n", r.counterfactuals.len(), r.requested));
                }
                rows.push((o.label.clone(), single(m)));
            }
            _ => {
                s.push_str(&format!("no counterfactual: {}\n", o.error.as_deref().unwrap_or("unknown")));
                rows.push((o.label.clone(), empty_summary()));
            }
        }
        s.push('\n');
    }
    s.push_str(&render_table(&rows));
    s
}

fn empty_summary() -> Summary {
    Summary {
        instances: 0,
        validity: None,
        sparsity: None,
        cat_proximity: None,
        cont_proximity: None,
        cat_diversity: None,
        cont_diversity: None,
        count_diversity: None,
    }
}
