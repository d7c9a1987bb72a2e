//! Command-line front end: `cluster`, `sweep`, `calibrate`, `eval`, `gen`.
//!
//! Every output file is first written next to its destination under a
//! temporary name and renamed into place only once the whole command has
//! succeeded, so a failing command leaves no partial outputs behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::awc::{AwcConfig, PreparedAwc, RunDiagnostics};
use crate::data::{
    self, encode_labels, load_distance_csv, load_docs, load_points_csv, read_labels_csv, read_weights_csv,
    sparse_distances, tfidf, write_labels_csv, write_points_csv, write_weights_csv, Dataset, Features, LabelColumn,
    PointsCsvOptions, Provenance,
};
use crate::error::{AwcError, Result};
use crate::mass::Complement;
use crate::metrics::{nmi, separation_error, PairCounts};
use crate::tuning::{
    calibrate_propagation, default_grid, lambda_selector, sweep_lambda, write_sweep_csv,
    CalibrationSpec, Criterion, LambdaChoice, SelectionContext, SelectorArgs, SweepCurve, DEFAULT_MIN_LEN,
    DEFAULT_REL_TOL,
};
use crate::weights::WeightMatrix;

#[derive(Debug, Parser)]
#[command(name = "awc", version, about = "Adaptive weights clustering")]
pub struct Cli {
    /// Worker threads (default: available parallelism). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dataset.
    Cluster(ClusterArgs),
    /// Sum-of-weights curve S(λ) over a λ grid.
    Sweep(SweepArgs),
    /// Propagation calibration of λ on uniform unit-ball samples.
    Calibrate(CalibrateArgs),
    /// Compare predicted labels with reference labels.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Points CSV, one row per point.
    #[arg(long, group = "source")]
    pub input: Option<PathBuf>,
    /// Square distance-matrix CSV without header.
    #[arg(long, group = "source")]
    pub distances: Option<PathBuf>,
    /// `doc_id term_id count` triplets; clustered on TF-IDF vectors.
    #[arg(long, group = "source")]
    pub docs: Option<PathBuf>,
    /// Generator spec, e.g. `two-gauss:n=300,D=3`.
    #[arg(long, group = "source")]
    pub gen: Option<String>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// The points CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Column of the points CSV holding reference labels (name, or 0-based
    /// index with `--no-header`).
    #[arg(long)]
    pub label_column: Option<String>,
    /// Seed for generators and randomized λ selection.
    #[arg(long, env = "AWC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AlgoArgs {
    /// Bound on the per-step growth of neighbor counts.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub a: f64,
    /// Bound on the per-step growth of the radius.
    #[arg(long, default_value_t = 1.95)]
    pub b: f64,
    /// Neighbors required before a point takes part in tests
    /// (default 2·d_eff + 2).
    #[arg(long)]
    pub n0: Option<usize>,
    /// Dimension used by the overlap reference (default: data dimension;
    /// required for distance input).
    #[arg(long)]
    pub eff_dim: Option<usize>,
    /// Largest radius considered.
    #[arg(long)]
    pub hmax: Option<f64>,
    /// Fraction of active points that must respect the growth bound.
    #[arg(long, default_value_t = crate::neighborhood::DEFAULT_PHI)]
    pub phi: f64,
    /// Fail when no radius respects the growth bound instead of forcing a
    /// step.
    #[arg(long)]
    pub strict_growth: bool,
    /// Keep only this many nearest neighbors per point.
    #[arg(long)]
    pub neighbor_cap: Option<usize>,
    #[arg(long, default_value = crate::mass::DEFAULT_MASS_KERNEL)]
    pub mass_kernel: String,
    #[arg(long, default_value = "cluster")]
    pub complement: String,
}

impl AlgoArgs {
    pub fn config(&self) -> Result<AwcConfig> {
        Ok(AwcConfig {
            a: self.a,
            b: self.b,
            n0: self.n0,
            eff_dim: self.eff_dim,
            h_max: self.hmax,
            phi: self.phi,
            strict_growth: self.strict_growth,
            neighbor_cap: self.neighbor_cap,
            mass_kernel: self.mass_kernel.clone(),
            complement: self.complement.parse::<Complement>()?,
            ..AwcConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Comma-separated increasing λ values (default: 40 values from 0.5
    /// to 20, geometric).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Relative change tolerated between consecutive plateau points.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    /// Minimum number of grid points of a plateau.
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    pub min_len: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// A number, `auto-sow` or `auto-propagation`.
    #[arg(long)]
    pub lambda: String,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Success level of `auto-propagation`.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Simulated datasets of `auto-propagation`.
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Labels CSV (`point_id,cluster_id`); stdout when omitted.
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
    /// Positive weights as `i,j,w` triplets with `i < j`.
    #[arg(long)]
    pub out_weights: Option<PathBuf>,
    /// JSON run report.
    #[arg(long)]
    pub out_diag: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Curve CSV (`lambda,S,plateau_id`); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Curve and plateaus as JSON.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    OneCluster,
    Connectedness,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, env = "AWC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CriterionArg::OneCluster)]
    pub criterion: CriterionArg,
    /// Tolerated disconnected share for `--criterion connectedness`.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Full calibration report as JSON.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted labels CSV (`point_id,cluster_id`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference labels CSV (`point_id,cluster_id`).
    #[arg(long)]
    pub truth: PathBuf,
    /// Raw predicted weights (`i,j,w`); adds metrics on the weights.
    #[arg(long)]
    pub pred_weights: Option<PathBuf>,
    /// Reference labels whose points restrict the separation error.
    #[arg(long, value_delimiter = ',')]
    pub restrict: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator spec, e.g. `hole:n=1000,eps=0.5`.
    pub spec: String,
    #[arg(long, env = "AWC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Points CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Files written under temporary names, renamed on [`Outputs::commit`] and
/// deleted otherwise.
#[derive(Default)]
struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Outputs {
    fn stage(&mut self, dest: &Path) -> PathBuf {
        let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dest.with_file_name(format!(".{name}.{}.partial", std::process::id()));
        self.staged.push((tmp.clone(), dest.to_path_buf()));
        tmp
    }

    fn write_text(&mut self, dest: &Path, text: &str) -> Result<()> {
        let tmp = self.stage(dest);
        fs::write(&tmp, text).map_err(|source| AwcError::Io { path: dest.to_path_buf(), source })
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, dest) in std::mem::take(&mut self.staged) {
            fs::rename(&tmp, &dest).map_err(|source| AwcError::Io { path: dest, source })?;
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn print_stdout(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|source| AwcError::Io { path: "<stdout>".into(), source })
}

/// Write through a temporary file when `dest` is given, otherwise through a
/// scratch file copied to stdout.
fn emit(outputs: &mut Outputs, dest: Option<&Path>, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    match dest {
        Some(dest) => write(&outputs.stage(dest)),
        None => {
            let scratch = std::env::temp_dir().join(format!("awc-{}-{}.csv", std::process::id(), outputs.staged.len()));
            let result = write(&scratch).and_then(|_| {
                fs::read_to_string(&scratch).map_err(|source| AwcError::Io { path: scratch.clone(), source })
            });
            let _ = fs::remove_file(&scratch);
            print_stdout(&result?)
        }
    }
}

pub fn load_dataset(input: &InputArgs) -> Result<Dataset> {
    let s = &input.source;
    if let Some(path) = &s.input {
        let label_column = input.label_column.as_ref().map(|c| match c.parse::<usize>() {
            Ok(i) if input.no_header => LabelColumn::Index(i),
            _ => LabelColumn::Name(c.clone()),
        });
        return load_points_csv(path, &PointsCsvOptions { has_header: !input.no_header, label_column });
    }
    if let Some(path) = &s.distances {
        return load_distance_csv(path);
    }
    if let Some(path) = &s.docs {
        let docs = load_docs(path)?;
        let dm = sparse_distances(&tfidf(&docs))?;
        return Ok(Dataset {
            features: Features::Distances(dm),
            labels: None,
            provenance: Provenance::SparseTfidf(path.display().to_string()),
        });
    }
    if let Some(spec) = &s.gen {
        return Ok(data::generator(spec)?.generate(input.seed));
    }
    Err(AwcError::Config("one of --input, --distances, --docs, --gen is required".into()))
}

pub fn prepare(dataset: Dataset, config: &AwcConfig) -> Result<PreparedAwc> {
    match dataset.features {
        Features::Points(p) => PreparedAwc::from_points(&p, config),
        Features::Distances(d) => PreparedAwc::new(d, None, config),
    }
}

fn grid_of(args: &GridArgs) -> Vec<f64> {
    args.grid.clone().unwrap_or_else(default_grid)
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    provenance: &'a Provenance,
    n: usize,
    num_clusters: usize,
    cluster_sizes: Vec<usize>,
    lambda: &'a LambdaChoice,
    config: &'a AwcConfig,
    workers: usize,
    run: &'a RunDiagnostics,
    wall_secs: f64,
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let started = Instant::now();
    let config = args.algo.config()?;
    let dataset = load_dataset(&args.input)?;
    let provenance = dataset.provenance.clone();
    let prepared = prepare(dataset, &config)?;
    let selector_args = SelectorArgs {
        value: None,
        grid: grid_of(&args.grid),
        rel_tol: args.grid.rel_tol,
        min_len: args.grid.min_len,
        level: args.level,
        runs: args.runs,
        seed: args.input.seed,
    };
    let choice = lambda_selector(&args.lambda, &selector_args)?.select(&SelectionContext {
        prepared: &prepared,
        config: &config,
    })?;
    let result = prepared.run(choice.lambda)?;

    let mut outputs = Outputs::default();
    emit(&mut outputs, args.out_labels.as_deref(), |p| write_labels_csv(&result.labels, p))?;
    if let Some(dest) = &args.out_weights {
        write_weights_csv(&result.weights, outputs.stage(dest))?;
    }
    if let Some(dest) = &args.out_diag {
        let mut sizes = vec![0; result.num_clusters];
        for &l in &result.labels {
            sizes[l] += 1;
        }
        let report = ClusterReport {
            provenance: &provenance,
            n: prepared.n(),
            num_clusters: result.num_clusters,
            cluster_sizes: sizes,
            lambda: &choice,
            config: &config,
            workers: rayon::current_num_threads(),
            run: &result.diagnostics,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        outputs.write_text(dest, &to_json(&report))?;
    }
    outputs.commit()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = args.algo.config()?;
    let prepared = prepare(load_dataset(&args.input)?, &config)?;
    let mut curve: SweepCurve = sweep_lambda(&prepared, &grid_of(&args.grid))?;
    curve.plateaus = crate::tuning::detect_plateau(&curve, args.grid.rel_tol, args.grid.min_len)?;
    let mut outputs = Outputs::default();
    emit(&mut outputs, args.out.as_deref(), |p| write_sweep_csv(&curve, p))?;
    if let Some(dest) = &args.out_json {
        let report = json!({
            "curve": &curve,
            "recommended_lambda": curve.recommended(),
        });
        outputs.write_text(dest, &to_json(&report))?;
    }
    outputs.commit()
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let config = args.algo.config()?;
    let mut spec = CalibrationSpec::new(args.n, args.dim, args.level, args.runs, args.seed);
    if args.criterion == CriterionArg::Connectedness {
        spec.criterion = Criterion::Connectedness { alpha: args.alpha };
    }
    let calibration = calibrate_propagation(&spec, &config)?;
    let mut outputs = Outputs::default();
    if let Some(dest) = &args.out_json {
        outputs.write_text(dest, &to_json(&json!({ "spec": &spec, "calibration": &calibration })))?;
    }
    outputs.commit()?;
    print_stdout(&format!("{}\n", calibration.lambda))
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub propagation_error: Option<f64>,
    pub separation_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation_error_restricted: Option<Option<f64>>,
    pub general_error: Option<f64>,
    pub rand_index: Option<f64>,
    pub nmi: f64,
    pub pairs: PairCounts,
    /// Metrics of the raw weights, when supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_weights: Option<Box<EvalReport>>,
}

fn eval_report(
    pred: &WeightMatrix,
    truth: &WeightMatrix,
    pred_ids: &[usize],
    truth_ids: &[usize],
    restrict: Option<&[usize]>,
) -> Result<EvalReport> {
    let pairs = PairCounts::new(pred, truth)?;
    let general = pairs.general_error();
    Ok(EvalReport {
        n: pred.n(),
        propagation_error: pairs.propagation_error(),
        separation_error: pairs.separation_error(),
        separation_error_restricted: restrict.map(|r| separation_error(pred, truth, Some(r))).transpose()?,
        general_error: general,
        rand_index: general.map(|e| 1.0 - e),
        nmi: nmi(pred_ids, truth_ids)?,
        pairs,
        raw_weights: None,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let pred_labels = read_labels_csv(&args.pred)?;
    let truth_labels = read_labels_csv(&args.truth)?;
    if pred_labels.len() != truth_labels.len() {
        return Err(AwcError::InvalidInput(format!(
            "{} labels {} points but {} labels {}",
            args.pred.display(),
            pred_labels.len(),
            args.truth.display(),
            truth_labels.len()
        )));
    }
    let pred_ids = encode_labels(&pred_labels);
    let truth_ids = encode_labels(&truth_labels);
    let truth = WeightMatrix::from_labels(&truth_ids);
    let restrict: Option<Vec<usize>> = args.restrict.as_ref().map(|keep| {
        (0..truth_labels.len()).filter(|&i| keep.contains(&truth_labels[i])).collect()
    });
    let mut report = eval_report(
        &WeightMatrix::from_labels(&pred_ids),
        &truth,
        &pred_ids,
        &truth_ids,
        restrict.as_deref(),
    )?;
    if let Some(path) = &args.pred_weights {
        let raw = read_weights_csv(path, pred_ids.len())?;
        report.raw_weights = Some(Box::new(eval_report(&raw, &truth, &pred_ids, &truth_ids, restrict.as_deref())?));
    }
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
            let mut rows = vec![
                ("propagation_error", fmt(report.propagation_error)),
                ("separation_error", fmt(report.separation_error)),
                ("general_error", fmt(report.general_error)),
                ("rand_index", fmt(report.rand_index)),
                ("nmi", report.nmi.to_string()),
            ];
            if let Some(r) = report.separation_error_restricted {
                rows.push(("separation_error_restricted", fmt(r)));
            }
            if let Some(raw) = &report.raw_weights {
                rows.push(("raw_propagation_error", fmt(raw.propagation_error)));
                rows.push(("raw_separation_error", fmt(raw.separation_error)));
                rows.push(("raw_general_error", fmt(raw.general_error)));
                if let Some(r) = raw.separation_error_restricted {
                    rows.push(("raw_separation_error_restricted", fmt(r)));
                }
            }
            let mut out = String::from("metric,value\n");
            for (k, v) in rows {
                out += &format!("{k},{v}\n");
            }
            out
        }
    };
    match &args.out {
        Some(dest) => {
            let mut outputs = Outputs::default();
            outputs.write_text(dest, &text)?;
            outputs.commit()
        }
        None => print_stdout(&text),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let dataset = data::generator(&args.spec)?.generate(args.seed);
    let points = dataset.points().expect("generators produce coordinates");
    let mut outputs = Outputs::default();
    emit(&mut outputs, args.out.as_deref(), |p| write_points_csv(points, dataset.labels.as_deref(), p))?;
    outputs.commit()
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(AwcError::Config("--workers must be positive".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| AwcError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
    })
}

/// One-line JSON error record printed on failure.
pub fn error_line(err: &AwcError) -> String {
    json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}
