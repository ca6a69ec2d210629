//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::aggregation::{
    build_pools, evaluate, pareto_points, AggregationConfig, Method, Overhead, TieRule, DEFAULT_ETA, DEFAULT_PREFIX_LEN,
};
use crate::analysis::{
    correlation_table, heatmap_from_profile, heatmap_matrix, hyperparam_sweep, BinAxis, CorrelationConfig, DEFAULT_BINS,
};
use crate::distributions::LogBase;
use crate::effort::{Measure, RecordProfile};
use crate::error::{Error, Result};
use crate::report::{self, RenderOptions, ReportFormat, Table, Value};
use crate::settling::{DistanceMetric, RegimeConvention, SettlingConfig, DEFAULT_G, DEFAULT_RHO};
use crate::toy::{
    synth_benchmark, synth_toy_trace, CorrectnessModel, LengthModel, PlantedBenchmarkSpec, ToyModelConfig, ToyRunSpec,
    ToySampling,
};
use crate::trace::{build_curve_cache, detect_input, load_profiles, read_trace, validate_trace, InputKind};

pub const THREADS_ENV: &str = "LENS_EFFORT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lens-effort",
    version,
    about = "Layer-wise settling analysis of language-model traces"
)]
pub struct Cli {
    /// Worker threads (falls back to LENS_EFFORT_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy-model or planted trace.
    Synth(SynthArgs),
    /// Check traces against the format and probability invariants.
    Validate(ValidateArgs),
    /// Derive a curve cache from a trace.
    Cache(CacheArgs),
    /// Per-record DTR and effort scores.
    Analyze(AnalyzeArgs),
    /// Token x layer divergence matrix of one record.
    Heatmap(HeatmapArgs),
    /// Binned correlation of measures with accuracy.
    Correlate(CorrelateArgs),
    /// Mean DTR and its correlation over a g x rho grid.
    Sweep(SweepArgs),
    /// Accuracy and cost of selection methods.
    Aggregate(AggregateArgs),
    /// Accuracy/cost points over a method and config grid.
    Pareto(ParetoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SettlingArgs {
    /// Settling threshold.
    #[arg(long, default_value_t = DEFAULT_G)]
    pub g: f64,
    /// Depth fraction defining the deep regime.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// jsd, kl or cosine.
    #[arg(long, default_value = "jsd")]
    pub metric: DistanceMetric,
    /// natural or base2 (divergences only).
    #[arg(long, default_value = "natural")]
    pub log_base: LogBase,
    /// top_fraction (l >= ceil(rho L)) or complement (l >= ceil((1 - rho) L)).
    #[arg(long, default_value = "top_fraction")]
    pub regime_convention: RegimeConvention,
}

impl SettlingArgs {
    fn config(&self) -> Result<SettlingConfig> {
        SettlingConfig {
            g: self.g,
            rho: self.rho,
            regime_convention: self.regime_convention,
            metric: self.metric,
            log_base: self.log_base,
        }
        .validated()
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// csv, text or jsonl.
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Planted benchmark instead of the toy model.
    #[arg(long)]
    pub planted: bool,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub questions: usize,
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Defaults to 32 (toy) or 8 (planted).
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Defaults to `toy` or `planted`.
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,

    /// Toy: hidden width.
    #[arg(long, default_value_t = 16)]
    pub hidden_dim: usize,
    /// Toy: tokens per sample.
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    pub top_p: f64,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub eos: Option<u32>,
    #[arg(long, default_value_t = 4)]
    pub prompt_len: usize,

    /// Planted: shortest base length.
    #[arg(long, default_value_t = 200)]
    pub min_len: usize,
    /// Planted: longest base length.
    #[arg(long, default_value_t = 600)]
    pub max_len: usize,
    /// Planted: length shrink factor per unit of DTR.
    #[arg(long, default_value_t = 0.5)]
    pub length_coupling: f64,
    /// Planted: accuracy at DTR 0.
    #[arg(long, default_value_t = 0.05)]
    pub intercept: f64,
    /// Planted: accuracy gain per unit of DTR.
    #[arg(long, default_value_t = 0.9)]
    pub slope: f64,
    /// Planted: depth fraction used to place deep tokens.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[arg(long, default_value = "top_fraction")]
    pub regime_convention: RegimeConvention,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub settling: SettlingArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    /// Comma-separated measures or `all`.
    #[arg(long, default_value = "all")]
    pub measures: String,
    /// Score only the first N tokens.
    #[arg(long)]
    pub prefix: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    pub input: PathBuf,
    /// Defaults to the first record.
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub sample: Option<u32>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    #[arg(long, default_value = "all")]
    pub measures: String,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// mean_score or bin_index.
    #[arg(long, default_value = "mean_score")]
    pub x_axis: BinAxis,
    #[arg(long)]
    pub prefix: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub g_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.85,0.9,0.95")]
    pub rho_grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value = "mean_score")]
    pub x_axis: BinAxis,
    #[arg(long)]
    pub prefix: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PoolArgs {
    /// ranked or first_index; defaults per method.
    #[arg(long)]
    pub tie_rule: Option<TieRule>,
    /// literal (eta*n) or unselected ((1-eta)*n).
    #[arg(long, default_value = "literal")]
    pub overhead: Overhead,
    /// Show costs in thousands of tokens.
    #[arg(long)]
    pub k_tokens: bool,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    /// Comma-separated methods or `all`.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Samples per question; defaults to the pool size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_PREFIX_LEN)]
    pub prefix: usize,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub settling: SettlingArgs,
    #[arg(long, default_value = "all")]
    pub methods: String,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub eta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub prefix_grid: Vec<usize>,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Configuration(format!("{THREADS_ENV}={v} is not a thread count"))),
        _ => Ok(None),
    }
}

fn emit(text: &str, output: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn render(table: &Table, out: &OutputArgs, options: RenderOptions, stdout: &mut dyn Write) -> Result<()> {
    emit(&table.render(out.format, options), out.output.as_deref(), stdout)
}

fn load_all(inputs: &[PathBuf], settling: &SettlingConfig, threads: Option<usize>) -> Result<Vec<RecordProfile>> {
    let mut profiles = Vec::new();
    for input in inputs {
        profiles.extend(load_profiles(input, settling, threads)?.profiles);
    }
    Ok(profiles)
}

fn synth(args: &SynthArgs, threads: Option<usize>, stdout: &mut dyn Write) -> Result<()> {
    let summary = if args.planted {
        let base = PlantedBenchmarkSpec::default();
        let spec = PlantedBenchmarkSpec {
            num_questions: args.questions,
            samples_per_question: args.samples,
            num_layers: args.layers.unwrap_or(base.num_layers),
            vocab_size: args.vocab.unwrap_or(base.vocab_size),
            rho: args.rho,
            regime_convention: args.regime_convention,
            correctness: CorrectnessModel {
                intercept: args.intercept,
                slope: args.slope,
            },
            lengths: LengthModel {
                min_tokens: args.min_len,
                max_tokens: args.max_len,
                dtr_coupling: args.length_coupling,
            },
            seed: args.seed,
            model_id: args.model_id.clone().unwrap_or_else(|| "planted".into()),
            dataset_tag: args.dataset.clone().unwrap_or_else(|| "planted".into()),
            ..base
        };
        synth_benchmark(&spec, &args.output, threads)?
    } else {
        let base = ToyModelConfig::default();
        let spec = ToyRunSpec {
            model: ToyModelConfig {
                sampling: ToySampling {
                    temperature: args.temperature,
                    top_p: args.top_p,
                    max_tokens: args.max_tokens,
                    eos_token_id: args.eos,
                    greedy: args.greedy,
                },
                ..ToyModelConfig::new(
                    args.layers.unwrap_or(base.num_layers),
                    args.hidden_dim,
                    args.vocab.unwrap_or(base.vocab_size),
                    args.seed,
                )
            },
            num_questions: args.questions,
            samples_per_question: args.samples,
            prompt_len: args.prompt_len,
            model_id: args.model_id.clone().unwrap_or_else(|| "toy".into()),
            dataset_tag: args.dataset.clone().unwrap_or_else(|| "toy".into()),
        };
        synth_toy_trace(&spec, &args.output, threads)?
    };
    writeln!(
        stdout,
        "wrote {} records, {} tokens, {} bytes to {}",
        summary.records,
        summary.tokens,
        summary.bytes,
        args.output.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn analyze(args: &AnalyzeArgs, threads: Option<usize>, stdout: &mut dyn Write) -> Result<()> {
    let settling = args.settling.config()?;
    let measures = Measure::parse_list(&args.measures)?;
    let profiles = load_all(&args.inputs, &settling, threads)?;
    let mut columns = vec![
        "model",
        "dataset",
        "question_id",
        "sample_index",
        "tokens",
        "is_correct",
        "answer",
        "deep_tokens",
        "evaluated_tokens",
    ];
    columns.extend(measures.iter().map(|m| m.name()));
    let mut table = Table::new(&columns);
    for p in &profiles {
        let dtr = p.curves.as_ref().and_then(|_| p.dtr(&settling, args.prefix).ok());
        let mut row = vec![
            Value::Str(p.model_id.clone()),
            Value::Str(p.dataset_tag.clone()),
            Value::Str(p.question_id.clone()),
            Value::Int(p.sample_index as i64),
            Value::Int(p.token_count as i64),
            Value::Bool(p.is_correct),
            Value::Str(p.answer.clone()),
            dtr.as_ref()
                .map_or(Value::Missing, |d| Value::Int(d.deep_tokens as i64)),
            dtr.as_ref()
                .map_or(Value::Missing, |d| Value::Int(d.evaluated_tokens as i64)),
        ];
        for &m in &measures {
            row.push(match p.score(m, &settling, args.prefix) {
                Ok(s) => Value::Num(s.value, 6),
                Err(Error::MissingData(_) | Error::EmptySequence) => Value::Missing,
                Err(e) => return Err(e),
            });
        }
        table.push(row);
    }
    render(&table, &args.out, RenderOptions::default(), stdout)
}

fn heatmap(args: &HeatmapArgs, threads: Option<usize>, stdout: &mut dyn Write) -> Result<()> {
    let settling = args.settling.config()?;
    let wanted = |qid: &str, sample: u32| {
        args.question.as_deref().is_none_or(|q| q == qid) && args.sample.is_none_or(|s| s == sample)
    };
    let not_found = || {
        Error::MissingData(format!(
            "no record matches question {} sample {}",
            args.question.as_deref().unwrap_or("*"),
            args.sample.map_or("*".to_owned(), |s| s.to_string())
        ))
    };
    let map = match detect_input(&args.input)? {
        InputKind::Trace => {
            let mut found = None;
            for record in read_trace(&args.input)? {
                let record = record?;
                if wanted(&record.question_id, record.sample_index) {
                    found = Some(record);
                    break;
                }
            }
            heatmap_matrix(&found.ok_or_else(not_found)?, &settling)?
        }
        InputKind::Cache => {
            let loaded = load_profiles(&args.input, &settling, threads)?;
            let profile = loaded
                .profiles
                .iter()
                .find(|p| wanted(&p.question_id, p.sample_index))
                .ok_or_else(not_found)?;
            heatmap_from_profile(profile, &settling)?
        }
    };
    emit(&map.to_csv(), args.output.as_deref(), stdout)
}

fn correlation_config(
    settling: &SettlingArgs,
    bins: usize,
    axis: BinAxis,
    prefix: Option<usize>,
) -> Result<CorrelationConfig> {
    Ok(CorrelationConfig {
        settling: settling.config()?,
        num_bins: bins,
        prefix_len: prefix,
        axis,
    })
}

fn pool_configs(
    methods: &[Method],
    ns: &[Option<usize>],
    etas: &[f64],
    prefixes: &[usize],
    settling: SettlingConfig,
    pool: &PoolArgs,
) -> Vec<(usize, AggregationConfig)> {
    let mut out = Vec::new();
    for &prefix_len in prefixes {
        for &n in ns {
            for &eta in etas {
                for &method in methods {
                    out.push((
                        prefix_len,
                        AggregationConfig {
                            method,
                            n,
                            eta,
                            prefix_len,
                            settling,
                            tie_rule: pool.tie_rule,
                            overhead: pool.overhead,
                        },
                    ));
                }
            }
        }
    }
    out
}

fn run_pools(
    inputs: &[PathBuf],
    configs: &[(usize, AggregationConfig)],
    settling: &SettlingConfig,
    threads: Option<usize>,
) -> Result<Vec<crate::aggregation::MethodSummary>> {
    let profiles = load_all(inputs, settling, threads)?;
    let mut rows = Vec::new();
    let mut prefixes: Vec<usize> = configs.iter().map(|c| c.0).collect();
    prefixes.dedup();
    for prefix in prefixes {
        let pools = build_pools(&profiles, settling, prefix)?;
        let batch: Vec<AggregationConfig> = configs.iter().filter(|c| c.0 == prefix).map(|c| c.1).collect();
        rows.extend(evaluate(&pools, &batch, threads)?);
    }
    Ok(rows)
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    match &cli.command {
        Command::Synth(args) => synth(args, threads, stdout),
        Command::Validate(args) => {
            let reports: Vec<(String, _)> = args
                .inputs
                .iter()
                .map(|p| (p.display().to_string(), validate_trace(p)))
                .collect();
            render(
                &report::validation_report(&reports),
                &args.out,
                RenderOptions::default(),
                stdout,
            )?;
            match reports.iter().find_map(|(name, r)| r.first_error().map(|f| (name, f))) {
                Some((name, f)) => Err(Error::Validation {
                    line: f.line,
                    question_id: f.question_id.clone().unwrap_or_default(),
                    message: format!("{name}: {}", f.message),
                }),
                None => Ok(()),
            }
        }
        Command::Cache(args) => {
            let settling = args.settling.config()?;
            let s = build_curve_cache(&args.input, &settling, &args.output, threads)?;
            writeln!(
                stdout,
                "cached {} records, {} tokens, {} bytes to {} ({})",
                s.records,
                s.tokens,
                s.bytes,
                args.output.display(),
                settling.fingerprint()
            )
            .map_err(|e| Error::io("<stdout>", e))
        }
        Command::Analyze(args) => analyze(args, threads, stdout),
        Command::Heatmap(args) => heatmap(args, threads, stdout),
        Command::Correlate(args) => {
            let config = correlation_config(&args.settling, args.bins, args.x_axis, args.prefix)?;
            let measures = Measure::parse_list(&args.measures)?;
            let profiles = load_all(&args.inputs, &config.settling, threads)?;
            let table = correlation_table(&profiles, &measures, &config, threads)?;
            render(
                &report::correlation_report(&table),
                &args.out,
                RenderOptions::default(),
                stdout,
            )
        }
        Command::Sweep(args) => {
            let config = correlation_config(&args.settling, args.bins, args.x_axis, args.prefix)?;
            let profiles = load_all(&args.inputs, &config.settling, threads)?;
            let points = hyperparam_sweep(&profiles, &args.g_grid, &args.rho_grid, &config, threads)?;
            render(
                &report::sweep_report(&points),
                &args.out,
                RenderOptions::default(),
                stdout,
            )
        }
        Command::Aggregate(args) => {
            let settling = args.settling.config()?;
            let methods = Method::parse_list(&args.method)?;
            let configs = pool_configs(&methods, &[args.n], &[args.eta], &[args.prefix], settling, &args.pool);
            let rows = run_pools(&args.inputs, &configs, &settling, threads)?;
            let options = RenderOptions {
                thousands: args.pool.k_tokens,
            };
            render(&report::aggregate_report(&rows), &args.out, options, stdout)
        }
        Command::Pareto(args) => {
            let settling = args.settling.config()?;
            let methods = Method::parse_list(&args.methods)?;
            let ns: Vec<Option<usize>> = if args.n_grid.is_empty() {
                vec![None]
            } else {
                args.n_grid.iter().map(|&n| Some(n)).collect()
            };
            let configs = pool_configs(&methods, &ns, &args.eta_grid, &args.prefix_grid, settling, &args.pool);
            let rows = run_pools(&args.inputs, &configs, &settling, threads)?;
            let options = RenderOptions {
                thousands: args.pool.k_tokens,
            };
            render(
                &report::pareto_report(&pareto_points(&rows)),
                &args.out,
                options,
                stdout,
            )
        }
    }
}

/// Exit code of an error: configuration problems are usage errors.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Configuration(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` and runs the command, writing reports to `stdout` and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    let code = run(argv, &mut stdout, &mut stderr);
    let _ = stdout.flush();
    code
}
