//! The `appendmem` command line.
//!
//! Every flag can also come from a `--config` file of `key=value` lines
//! (keys spelled like the flags, without the leading dashes). Flags win over
//! the file, the file wins over defaults. `APPENDMEM_SEED` supplies the seed
//! when neither sets one.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or input error,
//! 3 training stopped at `--max-epochs` without reaching the threshold.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::{Read as _, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::episodes::{parse_key, parse_pairs, stream_rng, Stream, Task};
use crate::experiments::{
    capacity_sweep, overfit_control, positional_accuracy, sort_exact_match, sort_numbers, test_accuracy, SweepResult,
    SweepRow, DEFAULT_CAPACITY_COUNTS, DEFAULT_TRIALS,
};
use crate::memstore::{load_memory, open_session, save_memory, Checkpoint, Session, StoreError};
use crate::model::gradcheck::{run_gradcheck, DEFAULT_EPS, TOLERANCE};
use crate::trainer::{format_decimal, train_with, MetricsWriter, StopMetric, StopReason, TrainConfig, TrainError, TrainMode};

pub const SEED_ENV: &str = "APPENDMEM_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "appendmem", version, about = "Train and use Memorizer–Recaller appendable memories")]
struct Cli {
    /// File of key=value defaults for the subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train(TrainArgs),
    /// Run an evaluation protocol against a checkpoint.
    Eval(EvalArgs),
    /// Append `key_csv<TAB>value` lines to a memory file.
    Memorize(MemorizeArgs),
    /// Look a key up in a memory file.
    Recall(RecallArgs),
    /// Sort numbers with a sort-task checkpoint.
    Sort(SortArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    mode: Option<TrainMode>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Accuracy that stops training.
    #[arg(long)]
    stop_acc: Option<f64>,
    /// train_acc or val_acc; defaults to train_acc in standard mode and
    /// val_acc in randomized mode.
    #[arg(long)]
    stop_on: Option<StopMetric>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// test, capacity, positional, sort-exact or overfit.
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input count for test, positional and sort-exact; defaults to the
    /// trained n.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated input counts for the capacity sweep.
    #[arg(long)]
    counts: Option<CsvList>,
    /// Comma-separated training sizes for the overfitting control.
    #[arg(long)]
    n_values: Option<CsvList>,
    /// Epoch cap for each overfitting-control run.
    #[arg(long)]
    max_epochs: Option<u64>,
    /// Batch size for each overfitting-control run.
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Debug, Args)]
struct MemorizeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Memory file; created with a fresh initial memory if missing.
    #[arg(long)]
    memory: Option<PathBuf>,
    /// Pair file; standard input when absent.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RecallArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    memory: Option<PathBuf>,
    #[arg(long)]
    key: Option<String>,
}

#[derive(Debug, Args)]
struct SortArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    numbers: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Experiment {
    Test,
    Capacity,
    Positional,
    SortExact,
    Overfit,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Self::Test),
            "capacity" => Ok(Self::Capacity),
            "positional" => Ok(Self::Positional),
            "sort-exact" => Ok(Self::SortExact),
            "overfit" => Ok(Self::Overfit),
            other => Err(format!(
                "unknown experiment `{other}` (expected test, capacity, positional, sort-exact or overfit)"
            )),
        }
    }
}

impl Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Test => "test",
            Self::Capacity => "capacity",
            Self::Positional => "positional",
            Self::SortExact => "sort-exact",
            Self::Overfit => "overfit",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct CsvList(Vec<usize>);

impl FromStr for CsvList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("`{x}` is not a non-negative integer")))
            .collect::<Result<Vec<_>, _>>()
            .map(CsvList)
    }
}

impl Display for CsvList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// A failed command and its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn check_failed(message: impl Display) -> Failure {
    Failure {
        code: EXIT_CHECK_FAILED,
        message: message.to_string(),
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        usage(e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => check_failed(e),
            other => usage(other),
        }
    }
}

impl From<crate::experiments::ExperimentError> for Failure {
    fn from(e: crate::experiments::ExperimentError) -> Self {
        match e {
            crate::experiments::ExperimentError::Train(t) => t.into(),
            other => usage(other),
        }
    }
}

type CmdResult = Result<i32, Failure>;

const KNOWN_KEYS: &[&str] = &[
    "task", "mode", "n", "hidden", "batch", "lr", "stop_acc", "stop_on", "max_epochs", "seed", "eval_every",
    "checkpoint", "metrics", "experiment", "trials", "out", "counts", "n_values", "memory", "in", "key", "numbers",
    "eps",
];

/// Resolves each setting from its flag, then the config file, then a default.
struct Resolver {
    file: BTreeMap<String, String>,
    audit: Vec<(String, String)>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> Result<Self, Failure> {
        let mut file = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
                let key = k.trim().trim_start_matches("--").replace('-', "_");
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(usage(format!("{}:{}: unknown key `{}`", path.display(), i + 1, k.trim())));
                }
                file.insert(key, v.trim().to_string());
            }
        }
        Ok(Self { file, audit: Vec::new() })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|v| v.parse().map_err(|e| usage(format!("config key `{key}`: {e}"))))
            .transpose()
    }

    fn record<T: Display>(&mut self, key: &str, value: &T) {
        self.audit.push((key.to_string(), value.to_string()));
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: impl FnOnce() -> T) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or_else(default),
        };
        self.record(key, &value);
        Ok(value)
    }

    fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
        Ok(PathBuf::from(self.required::<String>(key, flag.map(|p| p.display().to_string()))?))
    }

    fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
        Ok(self
            .optional::<String>(key, flag.map(|p| p.display().to_string()))?
            .map(PathBuf::from))
    }

    /// Flag, then config file, then `APPENDMEM_SEED`, then `fallback`.
    fn seed(&mut self, flag: Option<u64>, fallback: u64) -> Result<u64, Failure> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| usage(format!("{SEED_ENV}=`{v}` is not an integer")))?),
            Err(_) => None,
        };
        self.get("seed", flag, || env.unwrap_or(fallback))
    }

    fn audit_line(&self, command: &str) -> String {
        let fields: Vec<String> = self.audit.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("resolved {command}: {}", fields.join(" "))
    }
}

/// Runs the command line in-process and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{e}");
                EXIT_OK
            };
            return code;
        }
    };
    let result = Resolver::new(cli.config.as_deref()).and_then(|mut r| match cli.command {
        Command::Train(a) => cmd_train(a, &mut r, out, err),
        Command::Eval(a) => cmd_eval(a, &mut r, out, err),
        Command::Memorize(a) => cmd_memorize(a, &mut r, out, err),
        Command::Recall(a) => cmd_recall(a, &mut r, out, err),
        Command::Sort(a) => cmd_sort(a, &mut r, out, err),
        Command::Gradcheck(a) => cmd_gradcheck(a, &mut r, out, err),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn io_failure(e: std::io::Error) -> Failure {
    usage(format!("I/O error: {e}"))
}

fn cmd_train(a: TrainArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let task = r.get("task", a.task, || Task::Kv)?;
    let mode = r.get("mode", a.mode, || TrainMode::Randomized)?;
    let n = r.get("n", a.n, || 8)?;
    let base = match task {
        Task::Kv => TrainConfig::kv(mode, n),
        Task::Sort => TrainConfig {
            mode,
            ..TrainConfig::sort(n)
        },
    };
    let default_stop = TrainConfig::kv(mode, n).stop_metric;
    let config = TrainConfig {
        hidden_dim: r.get("hidden", a.hidden, || base.hidden_dim)?,
        batch_size: r.get("batch", a.batch, || base.batch_size)?,
        lr: r.get("lr", a.lr, || base.lr)?,
        stop_threshold: r.get("stop_acc", a.stop_acc, || base.stop_threshold)?,
        stop_metric: r.get("stop_on", a.stop_on, || default_stop)?,
        max_epochs: r.get("max_epochs", a.max_epochs, || base.max_epochs)?,
        eval_every: r.get("eval_every", a.eval_every, || base.eval_every)?,
        seed: r.seed(a.seed, 0)?,
        ..base
    };
    let checkpoint_path = r.get("checkpoint", a.checkpoint.map(|p| p.display().to_string()), || {
        "checkpoint.amem".to_string()
    })?;
    let metrics_path = r.get("metrics", a.metrics.map(|p| p.display().to_string()), || "metrics.csv".to_string())?;
    writeln!(err, "{}", r.audit_line("train")).map_err(io_failure)?;
    config.validate()?;

    let mut metrics = MetricsWriter::create(Path::new(&metrics_path)).map_err(io_failure)?;
    let mut write_error = None;
    let (params, report) = train_with(&config, |row| {
        if let Err(e) = metrics.write(row) {
            write_error.get_or_insert(e);
        }
        if let Some(val) = row.val_acc {
            let _ = writeln!(
                err,
                "epoch {} loss {} train_acc {} val_acc {}",
                row.epoch,
                format_decimal(row.loss),
                format_decimal(row.train_acc),
                format_decimal(val)
            );
        }
    })?;
    if let Some(e) = write_error {
        return Err(io_failure(e));
    }
    let checkpoint = Checkpoint::new(config.task, config.model_config(), config.n, config.seed, report.epochs_run, params);
    checkpoint.save(Path::new(&checkpoint_path))?;

    let reason = match report.stop_reason {
        StopReason::Threshold => "threshold",
        StopReason::MaxEpochs => "max_epochs",
    };
    writeln!(out, "epochs_run={}", report.epochs_run).map_err(io_failure)?;
    writeln!(out, "stop_reason={reason}").map_err(io_failure)?;
    writeln!(out, "final_train_acc={}", format_decimal(report.final_train_acc)).map_err(io_failure)?;
    if let Some(v) = report.final_val_acc {
        writeln!(out, "final_val_acc={}", format_decimal(v)).map_err(io_failure)?;
    }
    writeln!(out, "checkpoint={checkpoint_path}").map_err(io_failure)?;
    writeln!(out, "metrics={metrics_path}").map_err(io_failure)?;
    Ok(match report.stop_reason {
        StopReason::Threshold => EXIT_OK,
        StopReason::MaxEpochs => EXIT_NOT_CONVERGED,
    })
}

fn cmd_eval(a: EvalArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let checkpoint_path = r.path("checkpoint", a.checkpoint)?;
    let experiment: Experiment = r.required("experiment", a.experiment)?;
    let trials = r.get("trials", a.trials, || DEFAULT_TRIALS)?;
    let out_path = r.get("out", a.out.map(|p| p.display().to_string()), || format!("{experiment}.csv"))?;
    let ck = Checkpoint::load(&checkpoint_path)?;
    let seed = r.seed(a.seed, ck.seed)?;
    let n = r.get("n", a.n, || ck.trained_n)?;
    let counts = r.get("counts", a.counts, || CsvList(DEFAULT_CAPACITY_COUNTS.to_vec()))?;
    let n_values = r.get("n_values", a.n_values, || CsvList(vec![ck.trained_n]))?;
    let max_epochs = r.get("max_epochs", a.max_epochs, || 20_000)?;
    let batch = r.get("batch", a.batch, || crate::episodes::DEFAULT_BATCH_SIZE)?;
    writeln!(err, "{}", r.audit_line("eval")).map_err(io_failure)?;

    let wants_sort = experiment == Experiment::SortExact;
    if wants_sort != (ck.task == Task::Sort) {
        return Err(usage(format!(
            "experiment {experiment} does not apply to a {} checkpoint",
            ck.task
        )));
    }
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let (params, config) = (&ck.params, &ck.config);
    let result = match experiment {
        Experiment::Test => {
            let acc = test_accuracy(params, config, n, trials, seed)?;
            writeln!(out, "accuracy={} inputs={n} trials={trials}", format_decimal(acc)).map_err(io_failure)?;
            SweepResult {
                experiment: "test".into(),
                rows: vec![SweepRow {
                    param: n,
                    accuracy: acc,
                    trials,
                }],
            }
        }
        Experiment::Capacity => {
            let sweep = capacity_sweep(params, config, &counts.0, trials, seed)?;
            for row in &sweep.rows {
                writeln!(out, "inputs={} accuracy={}", row.param, format_decimal(row.accuracy)).map_err(io_failure)?;
            }
            sweep
        }
        Experiment::Positional => {
            let sweep = positional_accuracy(params, config, n, trials, seed)?;
            for row in &sweep.rows {
                writeln!(out, "position={} accuracy={}", row.param, format_decimal(row.accuracy))
                    .map_err(io_failure)?;
            }
            writeln!(
                out,
                "mean={} std={}",
                format_decimal(sweep.mean_accuracy()),
                format_decimal(sweep.std_accuracy())
            )
            .map_err(io_failure)?;
            sweep
        }
        Experiment::SortExact => {
            let score = sort_exact_match(params, config, n, trials, seed)?;
            writeln!(
                out,
                "exact_match={} per_query={} n={n} trials={trials}",
                format_decimal(score.exact_match),
                format_decimal(score.per_query)
            )
            .map_err(io_failure)?;
            SweepResult {
                experiment: "sort-exact".into(),
                rows: vec![SweepRow {
                    param: n,
                    accuracy: score.exact_match,
                    trials,
                }],
            }
        }
        Experiment::Overfit => {
            let base = TrainConfig {
                hidden_dim: config.hidden_dim,
                key_dim: config.key_dim,
                leaky_slope: config.leaky_slope,
                max_epochs,
                batch_size: batch,
                seed,
                ..TrainConfig::kv(TrainMode::Standard, ck.trained_n)
            };
            let rows = overfit_control(&base, &n_values.0)?;
            for row in &rows {
                writeln!(
                    out,
                    "n={} epochs={} train_acc={} val_acc={}{}",
                    row.n,
                    row.epochs,
                    format_decimal(row.train_acc),
                    format_decimal(row.val_acc),
                    if row.reached_threshold { "" } else { " threshold_not_reached" }
                )
                .map_err(io_failure)?;
            }
            SweepResult {
                experiment: "overfit".into(),
                rows: rows
                    .iter()
                    .map(|row| SweepRow {
                        param: row.n,
                        accuracy: row.val_acc,
                        trials: batch,
                    })
                    .collect(),
            }
        }
    };
    result
        .write_csv(Path::new(&out_path), &checkpoint_path.display().to_string())
        .map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn cmd_memorize(a: MemorizeArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let checkpoint_path = r.path("checkpoint", a.checkpoint)?;
    let memory_path = r.path("memory", a.memory)?;
    let input = r.optional_path("in", a.input)?;
    let ck = Checkpoint::load(&checkpoint_path)?;
    let seed = r.seed(a.seed, ck.seed)?;
    writeln!(err, "{}", r.audit_line("memorize")).map_err(io_failure)?;

    let text = match &input {
        Some(path) => std::fs::read_to_string(path).map_err(io_failure)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(io_failure)?;
            s
        }
    };
    let pairs = parse_pairs(&text).map_err(usage)?;
    let mut session = if memory_path.exists() {
        load_memory(&memory_path, &ck)?
    } else {
        open_session(&ck, &mut stream_rng(seed, Stream::Session, 0, 0))
    };
    for (i, (key, value)) in pairs.iter().enumerate() {
        session
            .append(key, *value)
            .map_err(|e| usage(format!("pair {}: {e}", i + 1)))?;
    }
    save_memory(&memory_path, &session)?;
    writeln!(out, "appended={} append_count={}", pairs.len(), session.append_count()).map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn cmd_recall(a: RecallArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let checkpoint_path = r.path("checkpoint", a.checkpoint)?;
    let memory_path = r.path("memory", a.memory)?;
    let key_text: String = r.required("key", a.key)?;
    writeln!(err, "{}", r.audit_line("recall")).map_err(io_failure)?;
    let ck = Checkpoint::load(&checkpoint_path)?;
    let session: Session = load_memory(&memory_path, &ck)?;
    let key = parse_key(&key_text).map_err(usage)?;
    let (class, probs) = session.lookup(&key)?;
    writeln!(out, "class={class}").map_err(io_failure)?;
    let probs: Vec<String> = probs.iter().map(|&p| format_decimal(p as f64)).collect();
    writeln!(out, "probabilities={}", probs.join(",")).map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn cmd_sort(a: SortArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let checkpoint_path = r.path("checkpoint", a.checkpoint)?;
    let numbers_text: String = r.required("numbers", a.numbers)?;
    let ck = Checkpoint::load(&checkpoint_path)?;
    let seed = r.seed(a.seed, ck.seed)?;
    writeln!(err, "{}", r.audit_line("sort")).map_err(io_failure)?;
    if ck.task != Task::Sort {
        return Err(usage(format!("sort needs a sort checkpoint, got {}", ck.task)));
    }
    let numbers = parse_key(&numbers_text).map_err(usage)?;
    if numbers.len() > ck.trained_n {
        return Err(usage(format!(
            "{} numbers given but the model was trained to sort {}",
            numbers.len(),
            ck.trained_n
        )));
    }
    let m0 = crate::episodes::sample_m0(ck.config.memory_dim, &mut stream_rng(seed, Stream::Session, 0, 0));
    let sorted = sort_numbers(&ck.params, &ck.config, &numbers, &m0)?;
    for x in &sorted.numbers {
        writeln!(out, "{x}").map_err(io_failure)?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: GradcheckArgs, r: &mut Resolver, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let trials = r.get("trials", a.trials, || 12)?;
    let eps = r.get("eps", a.eps, || DEFAULT_EPS)?;
    let seed = r.seed(a.seed, 0)?;
    writeln!(err, "{}", r.audit_line("gradcheck")).map_err(io_failure)?;
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(usage("--eps must be a positive number"));
    }
    if eps < f32::EPSILON as f64 {
        return Err(check_failed(format!(
            "eps {eps:e} is below 32-bit machine precision ({:e}); finite differences at this step \
             measure parameter rounding, not the gradient, so the check is refused",
            f32::EPSILON
        )));
    }
    let report = run_gradcheck(trials, eps, seed).map_err(check_failed)?;
    for (i, inst) in report.instances.iter().enumerate() {
        writeln!(
            out,
            "instance={i} n={} max_rel_err={:.3e} checked={} kinked={}",
            inst.n, inst.max_rel_err, inst.checked, inst.kinked
        )
        .map_err(io_failure)?;
    }
    let passed = report.passed();
    writeln!(
        out,
        "max_rel_err={:.3e} tolerance={TOLERANCE:e} {}",
        report.max_rel_err(),
        if passed { "PASS" } else { "FAIL" }
    )
    .map_err(io_failure)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
