//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 validation findings,
//! 3 partial failure (some manifest datasets could not be evaluated).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::dataset::{parse_dataset, synthesize, synthesize_dag, Dataset};
use crate::error::Error;
use crate::evaluation::{
    compare, cross_validate, CvConfig, DatasetComparison, FailedDataset, Method,
};
use crate::hierarchy::{parse_dag, FeatureDag};
use crate::tan::RootPolicy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HRETAN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hretan",
    version,
    about = "TAN and lazy HRE-TAN classifiers for DAG-structured binary features"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset against the true-path rule of its feature hierarchy.
    Validate(ValidateArgs),
    /// Cross-validate one classifier on one dataset.
    Cv(CvArgs),
    /// Compare HRE-TAN with TAN over a manifest of datasets.
    Compare(CompareArgs),
    /// Write a synthetic hierarchy and a dataset consistent with it.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub dag: PathBuf,
    /// Write a copy with 1s propagated to all ancestors.
    #[arg(long)]
    pub repair: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Classifier {
    Tan,
    HreTan,
}

impl From<Classifier> for Method {
    fn from(c: Classifier) -> Self {
        match c {
            Classifier::Tan => Method::Tan,
            Classifier::HreTan => Method::HreTan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RootChoice {
    Random,
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    TsvPlot,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Laplace pseudo-count for the conditional probability tables.
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long, value_enum, default_value_t = RootChoice::Random)]
    pub root: RootChoice,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl EvalArgs {
    fn config(&self) -> Result<CvConfig, Error> {
        if self.folds < 2 {
            return Err(Error::Argument(format!(
                "--folds {} must be at least 2",
                self.folds
            )));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::Argument(format!(
                "--smoothing {} must be >= 0",
                self.smoothing
            )));
        }
        Ok(CvConfig {
            folds: self.folds,
            seed: self.seed,
            smoothing: self.smoothing,
            root: match self.root {
                RootChoice::Random => RootPolicy::Random(self.seed),
                RootChoice::First => RootPolicy::First,
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Hierarchy edge file; a flat hierarchy when absent.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub classifier: Classifier,
    /// Class name treated as positive (index 1).
    #[arg(long)]
    pub positive: Option<String>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// TSV of `name<TAB>data path<TAB>dag path`, paths relative to the manifest.
    #[arg(
        long,
        required_unless_present = "stub_gmeans",
        conflicts_with = "stub_gmeans"
    )]
    pub manifest: Option<PathBuf>,
    /// TSV of recorded `name<TAB>D<TAB>gmean_tan<TAB>gmean_hretan` rows fed
    /// straight into the comparison statistics.
    #[arg(long)]
    pub stub_gmeans: Option<PathBuf>,
    #[arg(long)]
    pub positive: Option<String>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub data_out: PathBuf,
    #[arg(long)]
    pub dag_out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    /// Probability of the positive class.
    #[arg(long, default_value_t = 0.4)]
    pub class_balance: f64,
    #[arg(long, default_value_t = 0.3)]
    pub dependency: f64,
    #[arg(long, default_value_t = 0.2)]
    pub edge_prob: f64,
    #[arg(long, default_value_t = 2)]
    pub max_parents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure carrying the exit code it maps to.
#[derive(Debug)]
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure(EXIT_USAGE, format!("cannot write {}: {e}", path.display())))
}

fn with_context(path: &Path, e: Error) -> Failure {
    Failure(EXIT_USAGE, format!("{}: {e}", path.display()))
}

fn load(
    data: &Path,
    dag: Option<&Path>,
    positive: Option<&str>,
) -> Result<(Dataset, FeatureDag), Failure> {
    let dataset = parse_dataset(&read(data)?, positive).map_err(|e| with_context(data, e))?;
    let hierarchy = match dag {
        Some(p) => parse_dag(&read(p)?, dataset.feature_names()).map_err(|e| with_context(p, e))?,
        None => FeatureDag::flat(dataset.feature_names())?,
    };
    Ok((dataset, hierarchy))
}

fn emit(out: &mut (dyn Write + Send), path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure(EXIT_USAGE, format!("cannot write output: {e}"))),
    }
}

fn json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_validate(args: &ValidateArgs, out: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let (data, dag) = load(&args.data, Some(&args.dag), None)?;
    let violations = dag.validate_true_path(&data)?;
    let names = data.feature_names();
    let mut report = String::new();
    for v in &violations {
        let _ = writeln!(
            report,
            "row {}\t{}\tancestor {} is 0",
            v.row, names[v.feature], names[v.ancestor]
        );
    }
    emit(out, None, &report)?;
    if let Some(path) = &args.repair {
        write_file(path, &dag.repair_true_path(&data)?.to_csv())?;
    }
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn cmd_cv(args: &CvArgs, out: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let config = args.eval.config()?;
    let (data, dag) = load(&args.data, args.dag.as_deref(), args.positive.as_deref())?;
    let report = cross_validate(&data, &dag, args.classifier.into(), &config)?;
    let text = match args.eval.format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("fold,tp,fn,tn,fp\n");
            for (k, c) in report.fold_counts.iter().enumerate() {
                let _ = writeln!(s, "{k},{},{},{},{}", c.tp, c.fn_, c.tn, c.fp);
            }
            s
        }
        Format::TsvPlot => {
            return Err(Failure(
                EXIT_USAGE,
                "tsv-plot output is only available for `compare`".into(),
            ))
        }
    };
    emit(out, args.eval.output.as_deref(), &text)?;
    Ok(EXIT_OK)
}

struct ManifestEntry {
    name: String,
    data: PathBuf,
    dag: Option<PathBuf>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let line = line.trim_end_matches('\r');
        let t = line.trim();
        (!t.is_empty() && !t.starts_with('#'))
            .then(|| (k + 1, line.split('\t').map(str::trim).collect()))
    })
}

/// Manifest rows: `name<TAB>data<TAB>dag`; a dag of `-` (or a missing third
/// column) means a flat hierarchy.
fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>, Failure> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (line, fields) in data_lines(&text) {
        if !(2..=3).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(with_context(
                path,
                Error::Parse {
                    line,
                    message: "expected `name<TAB>data<TAB>dag`".into(),
                },
            ));
        }
        entries.push(ManifestEntry {
            name: fields[0].to_owned(),
            data: base.join(fields[1]),
            dag: fields.get(2).filter(|d| **d != "-").map(|d| base.join(d)),
        });
    }
    Ok(entries)
}

fn parse_stub(path: &Path) -> Result<Vec<DatasetComparison>, Failure> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (line, fields) in data_lines(&text) {
        if fields.first() == Some(&"dataset") {
            continue;
        }
        let bad = |message: String| with_context(path, Error::Parse { line, message });
        if fields.len() != 4 {
            return Err(bad(
                "expected `name<TAB>D<TAB>gmean_tan<TAB>gmean_hretan`".into()
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("`{s}` is not a number")))
        };
        rows.push(DatasetComparison {
            name: fields[0].to_owned(),
            degree_of_imbalance: num(fields[1])?,
            gmean_tan: num(fields[2])?,
            gmean_hretan: num(fields[3])?,
        });
    }
    Ok(rows)
}

fn evaluate_entry(
    entry: &ManifestEntry,
    positive: Option<&str>,
    config: &CvConfig,
) -> Result<DatasetComparison, Failure> {
    let (data, dag) = load(&entry.data, entry.dag.as_deref(), positive)?;
    let d = crate::evaluation::degree_of_imbalance(data.labels())?;
    let gmean = |method| -> Result<f64, Failure> {
        cross_validate(&data, &dag, method, config)?
            .gmean
            .ok_or_else(|| Failure(EXIT_USAGE, "GMean undefined".into()))
    };
    Ok(DatasetComparison {
        name: entry.name.clone(),
        degree_of_imbalance: d,
        gmean_hretan: gmean(Method::HreTan)?,
        gmean_tan: gmean(Method::Tan)?,
    })
}

fn cmd_compare(
    args: &CompareArgs,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32, Failure> {
    let config = args.eval.config()?;
    let (rows, failed) = match (&args.stub_gmeans, &args.manifest) {
        (Some(stub), _) => (parse_stub(stub)?, Vec::new()),
        (None, Some(manifest)) => {
            let entries = parse_manifest(manifest)?;
            let results: Vec<_> = entries
                .par_iter()
                .map(|e| evaluate_entry(e, args.positive.as_deref(), &config))
                .collect();
            let mut rows = Vec::new();
            let mut failed = Vec::new();
            for (entry, result) in entries.iter().zip(results) {
                match result {
                    Ok(row) => rows.push(row),
                    Err(Failure(_, message)) => {
                        let _ = writeln!(err, "error: dataset `{}`: {message}", entry.name);
                        failed.push(FailedDataset {
                            name: entry.name.clone(),
                            error: message,
                        });
                    }
                }
            }
            (rows, failed)
        }
        (None, None) => {
            return Err(Failure(
                EXIT_USAGE,
                "either --manifest or --stub-gmeans is required".into(),
            ))
        }
    };
    let any_failed = !failed.is_empty();
    let report = compare(rows, failed);
    let text = match args.eval.format {
        Format::Json => json(&report),
        Format::Csv => report.to_csv(),
        Format::TsvPlot => report.to_plot_tsv(),
    };
    emit(out, args.eval.output.as_deref(), &text)?;
    Ok(if any_failed { EXIT_PARTIAL } else { EXIT_OK })
}

fn cmd_synth(args: &SynthArgs) -> Result<i32, Failure> {
    let dag = synthesize_dag(args.features, args.max_parents, args.edge_prob, args.seed)?;
    let data = synthesize(
        &dag,
        args.instances,
        args.class_balance,
        args.dependency,
        args.seed.wrapping_add(1),
    )?;
    write_file(&args.dag_out, &dag.to_edge_list())?;
    write_file(&args.data_out, &data.to_csv())?;
    Ok(EXIT_OK)
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Failure(
                    EXIT_USAGE,
                    format!("{THREADS_ENV}={value} is not a positive integer"),
                )
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure(EXIT_USAGE, format!("cannot start worker threads: {e}")))
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = thread_pool().and_then(|pool| {
        pool.install(|| match &cli.command {
            Command::Validate(a) => cmd_validate(a, out),
            Command::Cv(a) => cmd_cv(a, out),
            Command::Compare(a) => cmd_compare(a, out, err),
            Command::Synth(a) => cmd_synth(a),
        })
    });
    match result {
        Ok(code) => code,
        Err(Failure(code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}
