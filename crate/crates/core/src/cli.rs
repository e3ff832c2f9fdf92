//! Command-line surface. Run definitions come from a JSON config; flags only
//! pick the subcommand and the files.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{convergence_compare, pareto_sweep, summarize, synthetic_prefs};
use crate::io;
use crate::isotonic::{moreau_grad_dual, permutahedron_project};
use crate::model::{dcg_exposure_weights, ExposureWeights, PreferenceMatrix};
use crate::optimizer::{evaluate_objective, optimize, ObjectiveKind, OptimizerConfig, Variant};
use crate::welfare::{GgfWeights, WeightScheme};

/// Environment variable capping the worker count (0 = automatic).
pub const THREADS_ENV: &str = "LORENZ_RANK_THREADS";

/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

fn default_quantiles() -> Vec<f64> {
    vec![0.25, 0.5]
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99]
}

fn default_compare_beta0() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

fn default_trace_every() -> usize {
    10
}

fn default_true() -> bool {
    true
}

/// Full run definition as read from the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    #[serde(default)]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub lambda: f64,
    pub user_weights: WeightScheme,
    pub item_weights: WeightScheme,
    pub k: usize,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveKind,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    #[serde(default)]
    pub merit_weighted: bool,
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub reciprocal: bool,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_compare_beta0")]
    pub compare_beta0: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub prefs: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub trace: Option<PathBuf>,
}

fn default_objective() -> ObjectiveKind {
    ObjectiveKind::TwoSidedGgf
}

fn default_variant() -> Variant {
    Variant::Smoothing
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.reciprocal && !config.objective.is_reciprocal() {
            config.objective = ObjectiveKind::ReciprocalGgf { side_balance: 0.5 };
        }
        config
            .optimizer()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        for &q in &config.quantiles {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!("quantiles: {q} must lie in (0, 1]")));
            }
        }
        if let Some(bad) = config.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda_grid: {bad} must lie in [0, 1]")));
        }
        if let Some(bad) = config.compare_beta0.iter().find(|b| b.is_nan() || **b <= 0.0) {
            return Err(Error::Config(format!("compare_beta0: {bad} must be positive")));
        }
        Ok(config)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            iterations: self.iterations,
            beta0: self.beta0,
            lambda: self.lambda,
            user_weights: self.user_weights.clone(),
            item_weights: self.item_weights.clone(),
            k: self.k,
            objective: self.objective.clone(),
            variant: self.variant,
            seed: self.seed,
            trace_every: self.trace_every,
            merit_weighted: self.merit_weighted,
            record_wall_time: self.record_wall_time,
        }
    }

    /// Effective configuration recorded in output files (paths omitted).
    pub fn provenance(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lorenz-rank",
    version,
    about = "Fair stochastic rankings with generalized Gini welfare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    prefs: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Square preference matrix, reciprocal two-sided utilities.
    #[arg(long)]
    reciprocal: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic preference matrix.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the optimizer once and write the policy and its trace.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep lambda and write one metrics row per value.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print metrics of an existing policy.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Project z onto the permutahedron of the reversed-negated weights.
    Project {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        z: PathBuf,
        /// Project z / beta instead of z.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Compare smoothing against subgradients for several beta0.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn worker_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{s}`"))),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    let result = worker_count().and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        pool.install(|| dispatch(cli.command))
    });
    match result {
        Ok(printed) => {
            if let Some(text) = printed {
                let _ = writeln!(stdout, "{text}");
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

struct Loaded {
    config: RunConfig,
    prefs: PreferenceMatrix,
    exp: ExposureWeights,
}

fn load_run(args: &RunArgs, need_out: bool) -> CliResult<Loaded> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if args.reciprocal && !config.objective.is_reciprocal() {
        config.reciprocal = true;
        config.objective = ObjectiveKind::ReciprocalGgf { side_balance: 0.5 };
    }
    if let Some(p) = &args.prefs {
        config.prefs = Some(p.clone());
    }
    if let Some(p) = &args.out {
        config.out = Some(p.clone());
    }
    let prefs_path = config
        .prefs
        .clone()
        .ok_or_else(|| Failure::Usage("no preference file (use --prefs or the `prefs` key)".into()))?;
    if need_out && config.out.is_none() {
        return Err(Failure::Usage("no output file (use --out or the `out` key)".into()));
    }
    let prefs = io::load_prefs(&prefs_path)?;
    if config.objective.is_reciprocal() && !prefs.is_square() {
        return Err(Failure::Usage(format!(
            "reciprocal mode needs a square matrix, got {}x{}",
            prefs.n(),
            prefs.m()
        )));
    }
    let exp = dcg_exposure_weights(prefs.m(), config.k).map_err(|e| Failure::Usage(format!("k: {e}")))?;
    Ok(Loaded { config, prefs, exp })
}

fn out_path(config: &RunConfig) -> &Path {
    config.out.as_deref().expect("checked in load_run")
}

/// Runs one subcommand; returns text destined for stdout.
fn dispatch(command: Command) -> CliResult<Option<String>> {
    let mut printed = None;
    match command {
        Command::Gen { n, m, skew, seed, out } => {
            let prefs = synthetic_prefs(n, m, skew, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            io::write_prefs(
                &out,
                &prefs,
                &json!({"gen": {"n": n, "m": m, "skew": skew, "seed": seed}}),
            )?;
        }
        Command::Optimize { run, trace } => {
            let mut loaded = load_run(&run, true)?;
            if let Some(t) = trace {
                loaded.config.trace = Some(t);
            }
            let cfg = loaded.config.optimizer();
            let (policy, tr) = optimize(&cfg, &loaded.prefs, &loaded.exp)?;
            let prov = loaded.config.provenance();
            io::write_policy(out_path(&loaded.config), &policy, &prov)?;
            if let Some(t) = &loaded.config.trace {
                io::write_trace(t, &tr, &prov)?;
            }
        }
        Command::Sweep { run } => {
            let loaded = load_run(&run, true)?;
            let c = &loaded.config;
            let records = pareto_sweep(&c.optimizer(), &c.lambda_grid, &loaded.prefs, &loaded.exp, &c.quantiles)?;
            io::write_sweep(out_path(c), &records, &c.quantiles, &c.provenance())?;
        }
        Command::Eval { run, policy } => {
            let loaded = load_run(&run, false)?;
            let policy = io::read_policy(&policy)?;
            let cfg = loaded.config.optimizer();
            let objective = evaluate_objective(&cfg, &policy, &loaded.prefs, &loaded.exp)?;
            let record = summarize(
                &cfg,
                &policy,
                objective,
                &loaded.prefs,
                &loaded.exp,
                &loaded.config.quantiles,
            )?;
            let quantiles: serde_json::Map<String, Value> = record
                .quantile_utilities
                .iter()
                .map(|(q, v)| (io::quantile_label(*q), json!(v)))
                .collect();
            let report = json!({
                "objective_kind": record.objective_kind,
                "objective": record.final_objective,
                "total_utility": record.total_utility,
                "gini_exposure": record.gini_exposure,
                "quantiles": quantiles,
                "components": policy.components().len(),
            });
            let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            match &loaded.config.out {
                Some(p) => fs::write(p, text + "\n").map_err(Error::from)?,
                None => printed = Some(text),
            }
        }
        Command::Project { weights, z, beta } => {
            let read = |p: &Path| -> CliResult<Vec<f64>> {
                let text =
                    fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
                Ok(io::parse_vector(&text)?)
            };
            let w = GgfWeights::new(read(&weights)?).map_err(|e| Failure::Usage(format!("weights: {e}")))?;
            let z = read(&z)?;
            let y = match beta {
                Some(b) => moreau_grad_dual(&w, &z, b)?,
                None => permutahedron_project(&w, &z)?.y,
            };
            let line: Vec<String> = y.iter().map(f64::to_string).collect();
            printed = Some(line.join(","));
        }
        Command::Compare { run } => {
            let loaded = load_run(&run, true)?;
            let c = &loaded.config;
            if !matches!(
                c.objective,
                ObjectiveKind::TwoSidedGgf | ObjectiveKind::ReciprocalGgf { .. }
            ) {
                return Err(Failure::Usage(format!(
                    "objective: compare needs a GGF objective, got {}",
                    c.objective.name()
                )));
            }
            let cmp = convergence_compare(&c.optimizer(), &loaded.prefs, &loaded.exp, &c.compare_beta0)?;
            fs::write(out_path(c), io::format_comparison(&cmp, &c.provenance())).map_err(Error::from)?;
        }
    }
    Ok(printed)
}
