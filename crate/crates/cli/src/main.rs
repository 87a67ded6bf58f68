//! `m2m-pool`: runs the traffic, analysis, simulation and sweep experiments
//! from a scenario file and writes their data as CSV or JSON.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use m2m_pool::analysis::{expected_costs, naive_expected_cost};
use m2m_pool::config::{ExperimentConfig, SimulationKind};
use m2m_pool::optimizer::{compare_naive, sweep, Evaluation};
use m2m_pool::rng::derive_seed;
use m2m_pool::simulator::{run_scenario, ScenarioStats};
use m2m_pool::traffic::{activation_curve, fit_beta};

#[derive(Parser)]
#[command(name = "m2m-pool", version, about = "Adaptive reservation-slot access experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alarm activation curves and their Beta fits.
    Traffic(Common),
    /// Closed-form cost and detection probabilities.
    Analyze(Common),
    /// Pool simulation: one continuous scenario or independent pool replications.
    Simulate(Common),
    /// Grid search over slot degree and threshold.
    Sweep(Common),
    /// Adaptive scheme against the always-contention-free baseline.
    CompareNaive(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Seed for placement and every random draw.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Pool replications for simulated evaluations.
    #[arg(long, default_value_t = 10_000)]
    replications: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
enum CliError {
    Core(m2m_pool::Error),
    Io(PathBuf, std::io::Error),
    Usage(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io(..) => "io",
            CliError::Usage(_) => "usage",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io(p, e) => format!("{}: {e}", p.display()),
            CliError::Usage(m) => m.clone(),
        }
    }
}

impl From<m2m_pool::Error> for CliError {
    fn from(e: m2m_pool::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: ExperimentConfig,
    args: Common,
}

impl Ctx {
    fn load(args: Common) -> Result<Self> {
        let cfg = ExperimentConfig::load(&args.config)?;
        Ok(Ctx { cfg, args })
    }

    /// Random draws always need an explicit seed. Purely analytical commands
    /// may omit it when the placement seed is fixed in the config.
    fn seed(&self, stochastic: bool) -> Result<u64> {
        match (self.args.seed, stochastic, self.cfg.cell.placement_seed) {
            (Some(s), _, _) => Ok(s),
            (None, false, Some(_)) => Ok(0),
            _ => Err(CliError::Usage("--seed is required for this command".into())),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.args.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.args.out).map_err(|e| CliError::Io(self.args.out.clone(), e))?;
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::Io(p, e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(w))
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(p, e))
    }

    fn write_csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let p = self.path(name);
        let io = |e: csv::Error| CliError::Io(p.clone(), e.into());
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(p.clone(), e))
    }

    /// Writes `stem.json` or `stem.csv` (one row per item) per `--format`.
    fn write_table<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<()> {
        match self.args.format {
            Format::Json => self.write_json(&format!("{stem}.json"), &rows),
            Format::Csv => self.write_csv(&format!("{stem}.csv"), rows),
        }
    }

    fn with_writer(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Io(self.path(name), e))
    }
}

#[derive(Serialize)]
struct CurveSummary {
    index: usize,
    total: u64,
    span_s: Option<f64>,
    alpha: f64,
    beta: f64,
    t_span_s: f64,
    residual: f64,
}

fn cmd_traffic(ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed(true)?;
    let alarms = ctx.cfg.alarms()?;
    if alarms.is_empty() {
        return Err(m2m_pool::Error::NoScenarios.into());
    }
    let geometry = ctx.cfg.geometry(seed)?;
    let mut summary = Vec::new();
    for (i, a) in alarms.iter().enumerate() {
        let curve = activation_curve(&geometry, a, ctx.cfg.activation.bin_width_s, derive_seed(seed, 1 + i as u64))?;
        match ctx.args.format {
            Format::Csv => ctx.with_writer(&format!("activation_{i}.csv"), |w| curve.write_csv(w))?,
            Format::Json => ctx.write_json(&format!("activation_{i}.json"), &curve)?,
        }
        let fit = fit_beta(&curve)?;
        ctx.write_json(&format!("beta_fit_{i}.json"), &fit)?;
        summary.push(CurveSummary {
            index: i,
            total: curve.total(),
            span_s: curve.span_s(),
            alpha: fit.alpha,
            beta: fit.beta,
            t_span_s: fit.t_span_s,
            residual: fit.residual,
        });
    }
    ctx.write_table("traffic_summary", &summary)
}

#[derive(Serialize)]
struct AnalyzeOutput {
    #[serde(flatten)]
    report: m2m_pool::analysis::AnalysisReport,
    max_pool_duration_s: f64,
    e_c_naive: f64,
}

fn cmd_analyze(ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed(false)?;
    let params = ctx.cfg.protocol()?;
    let deadlines = ctx.cfg.deadlines()?;
    params.check_deadline(deadlines.tau_a)?;
    let activity = ctx.cfg.activity(&ctx.cfg.geometry(seed)?)?;
    let p_h1 = ctx.cfg.priors.p_h1;
    let out = AnalyzeOutput {
        report: expected_costs(&params, &activity, p_h1)?,
        max_pool_duration_s: params.max_pool_duration_s(),
        e_c_naive: naive_expected_cost(&params, &activity, p_h1)?,
    };
    match ctx.args.format {
        Format::Json => ctx.write_json("analysis.json", &out),
        // flattened fields do not map onto csv records; write the plain report
        Format::Csv => ctx.write_csv("analysis.csv", [out.report]),
    }
}

fn write_stats(ctx: &Ctx, stats: &ScenarioStats) -> Result<()> {
    ctx.write_table("stats", &[stats.summary()])?;
    ctx.with_writer("delays.csv", |w| stats.write_delay_csv(w))
}

fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed(true)?;
    let stats = match ctx.cfg.simulation.kind {
        SimulationKind::Scenario => {
            let scenario = ctx.cfg.scenario(seed)?;
            if ctx.cfg.simulation.trace {
                let mut w = ctx.create("trace.jsonl")?;
                let stats = run_scenario(&scenario, seed, Some(&mut w))?;
                w.flush().map_err(|e| CliError::Io(ctx.path("trace.jsonl"), e))?;
                stats
            } else {
                run_scenario(&scenario, seed, None)?
            }
        }
        SimulationKind::Pools => ctx.cfg.pool_experiment(seed)?.run(ctx.args.replications, seed)?,
    };
    write_stats(ctx, &stats)
}

fn evaluation_seed(ctx: &Ctx) -> Result<u64> {
    let simulated = ctx.cfg.sweep.evaluation == m2m_pool::config::EvaluationMode::Simulated;
    ctx.seed(simulated)
}

fn cmd_sweep(ctx: &Ctx) -> Result<()> {
    let seed = evaluation_seed(ctx)?;
    let grid = ctx.cfg.sweep_grid(ctx.args.replications)?;
    let result = sweep(&grid, &ctx.cfg.sweep_base(seed)?, seed)?;
    ctx.write_csv("sweep.csv", &result.rows)?;
    match ctx.args.format {
        Format::Json => ctx.write_json("sweep.json", &result),
        Format::Csv => ctx.write_json("argmin.json", &result.argmin),
    }
}

#[derive(Serialize)]
struct ComparisonSummary {
    delta_c_pct: f64,
    best_adaptive_omega: usize,
    best_adaptive_e_c: Option<f64>,
    best_naive_omega: usize,
    best_naive_e_c: Option<f64>,
    ratio: f64,
}

fn cmd_compare_naive(ctx: &Ctx) -> Result<()> {
    let seed = evaluation_seed(ctx)?;
    let grid = ctx.cfg.sweep_grid(ctx.args.replications)?;
    let delta = ctx.cfg.protocol.delta_c_pct;
    let c = compare_naive(&ctx.cfg.sweep_base(seed)?, &grid.omega_values, delta, grid.frames, grid.evaluation, seed)?;
    let pick = |r: &m2m_pool::optimizer::SweepRow| match grid.evaluation {
        Evaluation::Analytical => r.e_c_analytical,
        Evaluation::Simulated { .. } => r.e_c_simulated,
    };
    ctx.write_csv("comparison.csv", &c.rows)?;
    let summary = ComparisonSummary {
        delta_c_pct: delta,
        best_adaptive_omega: c.best_adaptive.omega,
        best_adaptive_e_c: pick(&c.best_adaptive),
        best_naive_omega: c.best_naive.omega,
        best_naive_e_c: pick(&c.best_naive),
        ratio: c.ratio,
    };
    match ctx.args.format {
        Format::Json => ctx.write_json("comparison_summary.json", &summary),
        Format::Csv => ctx.write_csv("comparison_summary.csv", [summary]),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (args, f): (Common, fn(&Ctx) -> Result<()>) = match cli.command {
        Command::Traffic(a) => (a, cmd_traffic),
        Command::Analyze(a) => (a, cmd_analyze),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::CompareNaive(a) => (a, cmd_compare_naive),
    };
    if args.replications == 0 {
        return Err(CliError::Usage("--replications must be at least 1".into()));
    }
    f(&Ctx::load(args)?)
}

fn fail(e: &CliError) -> ExitCode {
    let msg = e.message().replace(['\n', '\r'], " ");
    eprintln!("error[{}]: {}", e.category(), msg.trim());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(first));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

