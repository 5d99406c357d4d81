//! Command-line front end: `describe`, `flood-analysis`, `train`, `explain`
//! and `synth-gen`.
//!
//! Settings resolve in three layers: built-in defaults, then an optional
//! JSON config file, then command-line flags. Every random stage draws a
//! seed derived from the single root seed, so outputs are byte-identical
//! across re-runs and worker counts.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | invalid argument or configuration value |
//! | 2 | command-line usage error |
//! | 3 | schema error (missing or malformed columns, model/data mismatch) |
//! | 4 | I/O error |
//! | 5 | empty result (e.g. no qualifying flood windows) |
//! | 6 | numerical failure (singular design, undefined R² or correlation) |
//! | 7 | insufficient data |

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DataTable, RowKey, Schema};
use crate::deterioration;
use crate::error::{Error, Result};
use crate::flood;
use crate::lime::{self, LimeConfig, LimeStats};
use crate::models::{self, ModelKind, ParamGrid};
use crate::seed;
use crate::shap::{self, ShapConfig, ShapMode};
use crate::synth::{self, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGUMENT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_EMPTY: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;
pub const EXIT_INSUFFICIENT: i32 = 7;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::ExactModeRefused { .. } => EXIT_ARGUMENT,
        Error::MissingColumns(_)
        | Error::Schema(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::DimensionMismatch { .. } => EXIT_SCHEMA,
        Error::Io { .. } => EXIT_IO,
        Error::EmptyResult(_) => EXIT_EMPTY,
        Error::Singular { .. } | Error::UndefinedR2 | Error::UndefinedCorrelation(_) => {
            EXIT_NUMERICAL
        }
        Error::InsufficientData(_) => EXIT_INSUFFICIENT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Explainer {
    Shap,
    Lime,
}

/// Full run configuration. Every field has a default, so `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub records: PathBuf,
    pub flood_events: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub features: Vec<String>,
    pub target: String,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub models: Vec<ModelKind>,
    /// Per-kind grid overrides; missing axes fall back to the shipped grid.
    pub grids: BTreeMap<ModelKind, ParamGrid>,
    /// Defaults to `<out_dir>/best_model.json`.
    pub model_path: Option<PathBuf>,
    /// `all`, `sample:N`, or `key:ROUTE/SECTION/YEAR[,ROUTE/SECTION/YEAR...]`.
    pub instances: String,
    pub explainers: Vec<Explainer>,
    /// The `seed` inside this block is replaced by one derived from `seed`.
    pub shap: ShapConfig,
    /// The `seed` inside this block is replaced by one derived from `seed`.
    pub lime: LimeConfig,
    /// The `seed` inside this block is replaced by one derived from `seed`.
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            records: PathBuf::from(synth::RECORDS_FILE),
            flood_events: PathBuf::from(synth::EVENTS_FILE),
            out_dir: PathBuf::from("out"),
            seed: 42,
            workers: None,
            features: dataset::FEATURES.iter().map(|s| s.to_string()).collect(),
            target: dataset::NEXT_YEAR_IRI.to_string(),
            test_fraction: 0.2,
            cv_folds: 5,
            models: ModelKind::ALL.to_vec(),
            grids: BTreeMap::new(),
            model_path: None,
            instances: "sample:100".to_string(),
            explainers: vec![Explainer::Shap, Explainer::Lime],
            shap: ShapConfig::default(),
            lime: LimeConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Argument(format!("config {}: {e}", path.display())))
    }

    fn model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("best_model.json"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "pavement-xai", version, about = "Flood impact analytics for pavement IRI")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RecordsArg {
    /// Records CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics and correlation matrix.
    Describe {
        #[command(flatten)]
        input: RecordsArg,
    },
    /// Pre/post-flood IRI deltas, rate comparison and flooded-vs-control diffs.
    FloodAnalysis {
        #[command(flatten)]
        input: RecordsArg,
        /// Flood events CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Grid-search, fit and compare regression models.
    Train {
        #[command(flatten)]
        input: RecordsArg,
        /// Model kinds to train (repeatable); defaults to all six.
        #[arg(long = "model", value_parser = parse_kind)]
        models: Vec<ModelKind>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// SHAP and/or LIME explanations for a persisted model.
    Explain {
        #[command(flatten)]
        input: RecordsArg,
        /// Persisted model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// `all`, `sample:N` or `key:ROUTE/SECTION/YEAR[,...]`.
        #[arg(long)]
        instances: Option<String>,
        /// Explainers to run (repeatable).
        #[arg(long = "explainer", value_enum)]
        explainers: Vec<Explainer>,
        #[arg(long, value_enum)]
        shap_mode: Option<ShapModeArg>,
        #[arg(long)]
        lime_samples: Option<usize>,
        /// Use standardized (undiscretized) LIME features.
        #[arg(long)]
        lime_continuous: bool,
    },
    /// Generate a seeded synthetic dataset with known ground truth.
    SynthGen {
        #[arg(long)]
        n_sections: Option<usize>,
        #[arg(long)]
        start_year: Option<i32>,
        #[arg(long)]
        end_year: Option<i32>,
        #[arg(long)]
        flood_fraction: Option<f64>,
        #[arg(long)]
        flood_bump: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapModeArg {
    Exact,
    Sampled,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn line(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let records = |cfg: &mut RunConfig, input: &RecordsArg| {
        if let Some(r) = &input.records {
            cfg.records = r.clone();
        }
    };
    match &cli.command {
        Command::Describe { input } => records(&mut cfg, input),
        Command::FloodAnalysis { input, events } => {
            records(&mut cfg, input);
            if let Some(e) = events {
                cfg.flood_events = e.clone();
            }
        }
        Command::Train {
            input,
            models,
            test_fraction,
            folds,
        } => {
            records(&mut cfg, input);
            if !models.is_empty() {
                cfg.models = models.clone();
            }
            if let Some(f) = test_fraction {
                cfg.test_fraction = *f;
            }
            if let Some(k) = folds {
                cfg.cv_folds = *k;
            }
        }
        Command::Explain {
            input,
            model,
            instances,
            explainers,
            shap_mode,
            lime_samples,
            lime_continuous,
        } => {
            records(&mut cfg, input);
            if model.is_some() {
                cfg.model_path = model.clone();
            }
            if let Some(i) = instances {
                cfg.instances = i.clone();
            }
            if !explainers.is_empty() {
                cfg.explainers = explainers.clone();
            }
            if let Some(m) = shap_mode {
                cfg.shap.mode = match m {
                    ShapModeArg::Exact => ShapMode::Exact,
                    ShapModeArg::Sampled => ShapMode::Sampled,
                };
            }
            if let Some(n) = lime_samples {
                cfg.lime.n_samples = *n;
            }
            if *lime_continuous {
                cfg.lime.discretize = false;
            }
        }
        Command::SynthGen {
            n_sections,
            start_year,
            end_year,
            flood_fraction,
            flood_bump,
            noise_std,
        } => {
            let s = &mut cfg.synth;
            if let Some(v) = n_sections {
                s.n_sections = *v;
            }
            if let Some(v) = start_year {
                s.start_year = *v;
            }
            if let Some(v) = end_year {
                s.end_year = *v;
            }
            if let Some(v) = flood_fraction {
                s.flood_fraction = *v;
            }
            if let Some(v) = flood_bump {
                s.ground_truth.flood_bump = *v;
            }
            if let Some(v) = noise_std {
                s.ground_truth.noise_std = *v;
            }
        }
    }
    if cfg.workers == Some(0) {
        return Err(Error::Argument("--workers must be >= 1".into()));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let progress = Progress { quiet: cli.quiet };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.workers {
            b = b.num_threads(w);
        }
        b.build()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Describe { .. } => cmd_describe(&cfg, &progress),
        Command::FloodAnalysis { .. } => cmd_flood_analysis(&cfg, &progress),
        Command::Train { .. } => cmd_train(&cfg, &progress),
        Command::Explain { .. } => cmd_explain(&cfg, &progress),
        Command::SynthGen { .. } => cmd_synth_gen(&cfg, &progress),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    dataset::write_atomic(path, text.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Argument(format!("CSV buffer: {e}")))
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    dataset::write_atomic(path, &csv_bytes(&header, rows)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_records(cfg: &RunConfig, progress: &Progress) -> Result<DataTable> {
    let t = dataset::load_csv(&cfg.records, &Schema::records())?;
    progress.line(format!("loaded {} rows from {}", t.n_rows(), cfg.records.display()));
    Ok(t)
}

fn present_features(table: &DataTable, features: &[String]) -> Result<Vec<String>> {
    table.column_indices(features)?;
    Ok(features.to_vec())
}

/// Report label for a column: encoded categorical columns get `_encoded`.
fn report_name(table: &DataTable, name: &str) -> String {
    if table.encodings().contains_key(name) {
        format!("{name}_encoded")
    } else {
        name.to_string()
    }
}

#[derive(Serialize)]
struct DescribeReport<'a> {
    n_rows: usize,
    n_rows_dropped_incomplete: usize,
    columns: &'a [dataset::ColumnStats],
    correlation: &'a dataset::CorrelationMatrix,
    zero_variance_columns: &'a [String],
}

fn cmd_describe(cfg: &RunConfig, progress: &Progress) -> Result<()> {
    let table = load_records(cfg, progress)?;
    let features = present_features(&table, &cfg.features)?;
    let complete = dataset::filter_complete(&table, &features)?.select_columns(&features)?;
    let stats = dataset::describe(&complete)?;

    let mut constant = Vec::new();
    let mut varying = Vec::new();
    for c in &stats.columns {
        if c.std_dev > 0.0 {
            varying.push(c.name.clone());
        } else {
            progress.line(format!("warning: `{}` has zero variance; left out of correlation", c.name));
            constant.push(c.name.clone());
        }
    }
    let corr = dataset::pearson_corr(&complete, &varying)?;

    ensure_dir(&cfg.out_dir)?;
    let rows: Vec<Vec<String>> = stats
        .columns
        .iter()
        .map(|c| {
            vec![
                report_name(&complete, &c.name),
                format!("{:.2}", c.mean),
                format!("{:.2}", c.std_dev),
                format!("{:.2}", c.min),
                format!("{:.2}", c.q25),
                format!("{:.2}", c.max),
            ]
        })
        .collect();
    write_table(
        &cfg.out_dir.join("descriptive_stats.csv"),
        &["Feature", "Mean", "Std. Dev.", "Min", "25%", "Max"],
        &rows,
    )?;
    write_json(
        &cfg.out_dir.join("descriptive_stats.json"),
        &DescribeReport {
            n_rows: complete.n_rows(),
            n_rows_dropped_incomplete: table.n_rows() - complete.n_rows(),
            columns: &stats.columns,
            correlation: &corr,
            zero_variance_columns: &constant,
        },
    )?;
    let mut header = vec![String::new()];
    header.extend(corr.labels.iter().map(|l| report_name(&complete, l)));
    let corr_rows: Vec<Vec<String>> = corr
        .labels
        .iter()
        .zip(&corr.values)
        .map(|(l, row)| {
            let mut r = vec![report_name(&complete, l)];
            r.extend(row.iter().map(|v| format!("{v:.4}")));
            r
        })
        .collect();
    dataset::write_atomic(&cfg.out_dir.join("correlation.csv"), &csv_bytes(&header, &corr_rows)?)?;
    progress.line(format!("wrote descriptive statistics for {} rows", complete.n_rows()));
    Ok(())
}

#[derive(Serialize)]
struct WindowCounts {
    extracted: usize,
    dropped_missing_iri: usize,
    excluded_maintenance: usize,
    analysed: usize,
}

#[derive(Serialize)]
struct SummaryStats {
    mean: f64,
    std_dev: f64,
    count: usize,
}

#[derive(Serialize)]
struct FloodReport {
    n_events: usize,
    unknown_event_routes: Vec<String>,
    flooded_windows: WindowCounts,
    control_windows: WindowCounts,
    flooded_delta: SummaryStats,
    control_delta: SummaryStats,
    rate_comparison: RateSummary,
    flooded_vs_nonflooded: PairedSummary,
}

#[derive(Serialize)]
struct RateSummary {
    before_rate: f64,
    after_rate: f64,
    count: usize,
}

#[derive(Serialize)]
struct PairedSummary {
    mean_diff: f64,
    min_diff: f64,
    max_diff: f64,
    count: usize,
    skipped_routes: Vec<String>,
    warnings: Vec<String>,
}

fn cmd_flood_analysis(cfg: &RunConfig, progress: &Progress) -> Result<()> {
    let table = load_records(cfg, progress)?;
    let events = flood::load_events(&cfg.flood_events)?;
    let tagged = flood::tag_flooded(&table, &events)?;
    for w in &tagged.warnings {
        progress.line(format!("warning: {w}"));
    }
    let raw = flood::extract_windows(&tagged.table, &events)?;
    let windows = flood::apply_maintenance_exclusion(&raw.windows);
    if windows.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no qualifying flooded windows ({} events, {} candidate windows)",
            events.len(),
            raw.windows.len() + raw.dropped
        )));
    }
    let raw_ctrl = flood::extract_control_windows(&tagged.table, &events)?;
    let controls = flood::apply_maintenance_exclusion(&raw_ctrl.windows);

    let deltas = deterioration::pre_post_deltas(&windows);
    let control_deltas = deterioration::pre_post_deltas(&controls);
    let rates = deterioration::rate_comparison(&windows);
    let paired = deterioration::flooded_vs_nonflooded(&windows, &controls);
    for w in &paired.warnings {
        progress.line(format!("warning: {w}"));
    }

    let report = FloodReport {
        n_events: events.len(),
        unknown_event_routes: tagged.warnings.iter().map(|w| w.route_name.clone()).collect(),
        flooded_windows: WindowCounts {
            extracted: raw.windows.len(),
            dropped_missing_iri: raw.dropped,
            excluded_maintenance: raw.windows.len() - windows.len(),
            analysed: windows.len(),
        },
        control_windows: WindowCounts {
            extracted: raw_ctrl.windows.len(),
            dropped_missing_iri: raw_ctrl.dropped,
            excluded_maintenance: raw_ctrl.windows.len() - controls.len(),
            analysed: controls.len(),
        },
        flooded_delta: SummaryStats {
            mean: deltas.mean,
            std_dev: deltas.std_dev,
            count: deltas.count,
        },
        control_delta: SummaryStats {
            mean: control_deltas.mean,
            std_dev: control_deltas.std_dev,
            count: control_deltas.count,
        },
        rate_comparison: RateSummary {
            before_rate: rates.before_rate,
            after_rate: rates.after_rate,
            count: rates.count,
        },
        flooded_vs_nonflooded: PairedSummary {
            mean_diff: paired.mean_diff,
            min_diff: paired.min_diff,
            max_diff: paired.max_diff,
            count: paired.per_section.len(),
            skipped_routes: paired.skipped_routes.clone(),
            warnings: paired.warnings.clone(),
        },
    };

    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("flood_analysis.json"), &report)?;

    let mut txt = String::new();
    let _ = writeln!(txt, "Flood events: {}", report.n_events);
    let _ = writeln!(
        txt,
        "Flooded windows analysed: {} (dropped for missing IRI: {}, excluded as maintained: {})",
        windows.len(),
        raw.dropped,
        report.flooded_windows.excluded_maintenance
    );
    let _ = writeln!(
        txt,
        "Mean IRI change, flood year -1 to +1: {:.2} in/mi (std {:.2}, n = {})",
        deltas.mean, deltas.std_dev, deltas.count
    );
    let _ = writeln!(
        txt,
        "Non-flooded sections on flooded routes: {:.2} in/mi (n = {})",
        control_deltas.mean, control_deltas.count
    );
    let _ = writeln!(
        txt,
        "Deterioration per 2 years: before {:.2}, after {:.2} (n = {})",
        rates.before_rate, rates.after_rate, rates.count
    );
    let _ = writeln!(
        txt,
        "Flooded minus non-flooded change: mean {:.2}, min {:.2}, max {:.2} (n = {})",
        paired.mean_diff,
        paired.min_diff,
        paired.max_diff,
        paired.per_section.len()
    );
    write_text(&cfg.out_dir.join("flood_analysis.txt"), &txt)?;

    let mut rows: Vec<Vec<String>> = windows
        .iter()
        .map(|w| {
            vec![
                w.route_name.clone(),
                w.section_id.clone(),
                w.flood_year.to_string(),
                opt(w.iri_minus3),
                w.iri_minus1.to_string(),
                w.iri_plus1.to_string(),
                w.delta().to_string(),
            ]
        })
        .collect();
    rows.sort();
    write_table(
        &cfg.out_dir.join("pre_post_sections.csv"),
        &["ROUTE_NAME", "SECTION_ID", "FLOOD_YEAR", "IRI_MINUS3", "IRI_MINUS1", "IRI_PLUS1", "DELTA"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = rates
        .per_route
        .iter()
        .map(|r| {
            vec![
                r.route_name.clone(),
                r.sections.to_string(),
                r.avg_iri_minus3.to_string(),
                r.avg_iri_minus1.to_string(),
                r.avg_iri_plus1.to_string(),
            ]
        })
        .collect();
    write_table(
        &cfg.out_dir.join("rate_comparison.csv"),
        &["ROUTE_NAME", "SECTIONS", "AVG_IRI_MINUS3", "AVG_IRI_MINUS1", "AVG_IRI_PLUS1"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = paired
        .per_section
        .iter()
        .map(|d| {
            vec![
                d.key.route_name.clone(),
                d.key.section_id.clone(),
                d.key.flood_year.to_string(),
                d.flooded_delta.to_string(),
                d.control_mean_delta.to_string(),
                d.control_sections.to_string(),
                d.diff.to_string(),
            ]
        })
        .collect();
    write_table(
        &cfg.out_dir.join("flooded_vs_nonflooded.csv"),
        &[
            "ROUTE_NAME",
            "SECTION_ID",
            "FLOOD_YEAR",
            "FLOODED_DELTA",
            "CONTROL_MEAN_DELTA",
            "CONTROL_SECTIONS",
            "DIFF",
        ],
        &rows,
    )?;
    progress.line(format!(
        "flood analysis: {} windows, mean flooded-minus-control diff {:.2}",
        windows.len(),
        paired.mean_diff
    ));
    Ok(())
}

#[derive(Serialize)]
struct ComparisonRow {
    kind: ModelKind,
    model: &'static str,
    mse: f64,
    mae: f64,
    r2: f64,
    cv_mean_mse: f64,
    spec: models::ModelSpec,
}

#[derive(Serialize)]
struct ComparisonReport {
    features: Vec<String>,
    target: String,
    n_train: usize,
    n_test: usize,
    cv_folds: usize,
    best: ModelKind,
    models: Vec<ComparisonRow>,
}

fn cmd_train(cfg: &RunConfig, progress: &Progress) -> Result<()> {
    if cfg.models.is_empty() {
        return Err(Error::Argument("no model kinds selected".into()));
    }
    let table = load_records(cfg, progress)?;
    let features = present_features(&table, &cfg.features)?;
    let mut required = features.clone();
    required.push(cfg.target.clone());
    let complete = dataset::filter_complete(&table, &required)?;
    if complete.n_rows() < 2 * cfg.cv_folds.max(2) {
        return Err(Error::InsufficientData(format!(
            "{} complete rows are too few to train",
            complete.n_rows()
        )));
    }
    let y_all = complete.column(&cfg.target)?;
    if y_all.iter().all(|&v| v == y_all[0]) {
        return Err(Error::UndefinedR2);
    }
    let (train, test) =
        dataset::train_test_split(&complete, cfg.test_fraction, seed::derive(cfg.seed, "split"))?;
    let (x_tr, y_tr) = train.features_and_target(&features, &cfg.target)?;
    let (x_te, y_te) = test.features_and_target(&features, &cfg.target)?;
    progress.line(format!("train {} rows, test {} rows", x_tr.nrows(), x_te.nrows()));

    let model_dir = cfg.out_dir.join("models");
    let cv_dir = cfg.out_dir.join("cv_results");
    ensure_dir(&model_dir)?;
    ensure_dir(&cv_dir)?;

    let mut kinds = cfg.models.clone();
    kinds.dedup();
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    for kind in kinds {
        let grid = cfg.grids.get(&kind).cloned().unwrap_or_default();
        progress.line(format!(
            "{}: searching {} candidates with {}-fold CV",
            kind,
            grid.candidates(kind).len(),
            cfg.cv_folds
        ));
        let cv = models::grid_search_cv(
            kind,
            &grid,
            x_tr.view(),
            y_tr.view(),
            cfg.cv_folds,
            seed::derive(cfg.seed, &format!("cv:{kind}")),
        )?;
        let model = models::fit(&cv.best_spec, x_tr.view(), y_tr.view(), &features)?;
        let m = models::evaluate(&model, x_te.view(), y_te.view())?;
        progress.line(format!("{}: test MSE {:.4}, R² {:.4}", kind, m.mse, m.r2));
        models::save_model(&model, model_dir.join(format!("{kind}.json")))?;
        write_json(&cv_dir.join(format!("{kind}.json")), &cv)?;
        rows.push(ComparisonRow {
            kind,
            model: kind.display_name(),
            mse: m.mse,
            mae: m.mae,
            r2: m.r2,
            cv_mean_mse: cv.candidates[cv.best_index].mean_mse,
            spec: cv.best_spec.clone(),
        });
        fitted.push(model);
    }
    let best = (0..rows.len())
        .min_by(|&a, &b| rows[a].mse.total_cmp(&rows[b].mse))
        .expect("at least one model");
    models::save_model(&fitted[best], cfg.out_dir.join("best_model.json"))?;

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.to_string(),
                format!("{:.4}", r.mse),
                format!("{:.4}", r.mae),
                format!("{:.4}", r.r2),
            ]
        })
        .collect();
    write_table(&cfg.out_dir.join("model_comparison.csv"), &["Model", "MSE", "MAE", "R²"], &csv_rows)?;
    write_json(
        &cfg.out_dir.join("model_comparison.json"),
        &ComparisonReport {
            features,
            target: cfg.target.clone(),
            n_train: x_tr.nrows(),
            n_test: x_te.nrows(),
            cv_folds: cfg.cv_folds,
            best: rows[best].kind,
            models: rows,
        },
    )?;
    Ok(())
}

/// Row indices chosen by an instance selector.
pub fn select_instances(table: &DataTable, selector: &str, seed: u64) -> Result<Vec<usize>> {
    let n = table.n_rows();
    let sel = selector.trim();
    if sel == "all" {
        return Ok((0..n).collect());
    }
    if let Some(k) = sel.strip_prefix("sample:") {
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("bad instance sample size in `{sel}`")))?;
        if k >= n {
            return Ok((0..n).collect());
        }
        let mut idx = index::sample(&mut seed::rng(seed), n, k).into_vec();
        idx.sort_unstable();
        return Ok(idx);
    }
    if let Some(keys) = sel.strip_prefix("key:") {
        let lookup: BTreeMap<&RowKey, usize> =
            table.row_keys().iter().enumerate().map(|(i, k)| (k, i)).collect();
        return keys
            .split(',')
            .map(|k| {
                let parts: Vec<&str> = k.trim().rsplitn(3, '/').collect();
                let [year, section, route] = parts[..] else {
                    return Err(Error::Argument(format!("bad instance key `{k}`")));
                };
                let key = RowKey {
                    route_name: route.to_string(),
                    section_id: section.to_string(),
                    year: year
                        .parse()
                        .map_err(|_| Error::Argument(format!("bad year in instance key `{k}`")))?,
                };
                lookup
                    .get(&key)
                    .copied()
                    .ok_or_else(|| Error::EmptyResult(format!("no row matches instance key `{k}`")))
            })
            .collect();
    }
    Err(Error::Argument(format!(
        "instance selector `{sel}` must be all, sample:N or key:ROUTE/SECTION/YEAR"
    )))
}

#[derive(Serialize)]
struct ShapSummaryReport<'a> {
    model: ModelKind,
    mode: ShapMode,
    n_instances: usize,
    background_size: usize,
    base_value: f64,
    ranking: &'a [shap::FeatureImportance],
}

fn cmd_explain(cfg: &RunConfig, progress: &Progress) -> Result<()> {
    let model = models::load_model(cfg.model_path())?;
    let table = load_records(cfg, progress)?;
    let names = model.feature_names.clone();
    let missing: Vec<String> = names.iter().filter(|n| !table.has_column(n)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let complete = dataset::filter_complete(&table, &names)?;
    if complete.n_rows() == 0 {
        return Err(Error::InsufficientData("no complete rows to explain".into()));
    }
    let idx = complete.column_indices(&names)?;
    let x_all: Array2<f64> = complete.rows().select(Axis(1), &idx);
    let picked = select_instances(&complete, &cfg.instances, seed::derive(cfg.seed, "instances"))?;
    let x_inst = x_all.select(Axis(0), &picked);
    let keys: Vec<String> = picked.iter().map(|&i| complete.row_keys()[i].to_string()).collect();
    ensure_dir(&cfg.out_dir)?;

    if cfg.explainers.contains(&Explainer::Shap) {
        let mut sc = cfg.shap.clone();
        sc.seed = seed::derive(cfg.seed, "shap");
        let bg = shap::sample_background(
            x_all.view(),
            sc.background_size,
            seed::derive(cfg.seed, "background"),
        );
        progress.line(format!(
            "SHAP ({:?}) on {} instances, background {}",
            sc.mode,
            picked.len(),
            bg.nrows()
        ));
        let values = shap::explain(&model, x_inst.view(), bg.view(), &names, &sc)?;
        let summary = shap::summarize(&values);

        let mut header = vec!["instance".to_string()];
        header.extend(names.iter().cloned());
        header.push("base_value".into());
        header.push("prediction".into());
        let rows: Vec<Vec<String>> = (0..values.values.nrows())
            .map(|i| {
                let mut r = vec![keys[i].clone()];
                r.extend(values.values.row(i).iter().map(|v| v.to_string()));
                r.push(values.base_value.to_string());
                r.push(values.predictions[i].to_string());
                r
            })
            .collect();
        dataset::write_atomic(&cfg.out_dir.join("shap_values.csv"), &csv_bytes(&header, &rows)?)?;
        write_json(
            &cfg.out_dir.join("shap_summary.json"),
            &ShapSummaryReport {
                model: model.kind(),
                mode: sc.mode,
                n_instances: picked.len(),
                background_size: bg.nrows(),
                base_value: summary.base_value,
                ranking: &summary.ranking,
            },
        )?;
        let rows: Vec<Vec<String>> = summary
            .points
            .iter()
            .map(|p| {
                vec![
                    p.feature.clone(),
                    keys[p.instance].clone(),
                    p.shap_value.to_string(),
                    p.feature_value.to_string(),
                    p.scaled_value.to_string(),
                ]
            })
            .collect();
        write_table(
            &cfg.out_dir.join("shap_beeswarm.csv"),
            &["feature", "instance", "shap_value", "feature_value", "scaled_value"],
            &rows,
        )?;
        if let Some(top) = summary.ranking.first() {
            progress.line(format!("SHAP top feature: {}", top.feature));
        }
    }

    if cfg.explainers.contains(&Explainer::Lime) {
        let mut lc = cfg.lime.clone();
        lc.seed = seed::derive(cfg.seed, "lime");
        let stats = LimeStats::from_table(&complete, &names, &lc)?;
        progress.line(format!(
            "LIME on {} instances, {} samples each",
            picked.len(),
            lc.n_samples
        ));
        let expl = lime::explain_rows(&model, x_inst.view(), &keys, &stats, &lc)?;
        for e in &expl {
            for w in &e.warnings {
                progress.line(format!("warning: {}: {w}", e.instance));
            }
        }
        write_json(&cfg.out_dir.join("lime_explanations.json"), &expl)?;
        let rows: Vec<Vec<String>> = expl
            .iter()
            .flat_map(|e| {
                e.contributions
                    .iter()
                    .map(move |c| vec![e.instance.clone(), c.condition.clone(), c.weight.to_string()])
            })
            .collect();
        write_table(
            &cfg.out_dir.join("lime_bars.csv"),
            &["instance", "condition", "weight"],
            &rows,
        )?;
    }
    Ok(())
}

fn cmd_synth_gen(cfg: &RunConfig, progress: &Progress) -> Result<()> {
    let mut spec = cfg.synth.clone();
    spec.seed = seed::derive(cfg.seed, "synth");
    let out = synth::generate(&spec)?;
    synth::write_output(&out, &cfg.out_dir)?;
    progress.line(format!(
        "generated {} rows ({} sections, {} flood events) in {}",
        out.records.len(),
        spec.n_sections,
        out.events.len(),
        cfg.out_dir.display()
    ));
    Ok(())
}
