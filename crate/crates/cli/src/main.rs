//! `infomarket`: instances, learning runs, equilibria, analytic curves,
//! signal diagnostics and disorder-averaged sweeps from the command line.
//!
//! Exit status is 0 on success, 1 on invalid input and 2 when a solver or
//! learning run stops before converging (its output is still written).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use infomarket_core::diagnostics;
use infomarket_core::experiment::{self, Calibration, Engine, Fixed, SweepSpec, Swept};
use infomarket_core::learning::{self, ChiKind, CostConvention, LearningConfig};
use infomarket_core::replica::{self, ReplicaSolution};
use infomarket_core::solver::{self, Method, SolverOptions};
use infomarket_core::{Error, MarketInstance, ModelParams, Result};

#[derive(Parser)]
#[command(name = "infomarket", version, about = "Informed traders and a trend follower in a single-asset market")]
struct Cli {
    /// Seed for instance sampling and learning noise; overrides a sweep config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// No timestamp header and no progress notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an instance (returns and private signals).
    Gen(GenArgs),
    /// Run the learning dynamics and write step records.
    Simulate(SimulateArgs),
    /// Minimize the cost-augmented objective directly.
    Equilibrium(EquilibriumArgs),
    /// Evaluate an analytic branch over a threshold grid.
    Replica(ReplicaArgs),
    /// Signal information content and indistinguishable state pairs.
    Diagnostics(DiagnosticsArgs),
    /// Disorder-averaged sweep over n or eps.
    Sweep(SweepArgs),
    /// Pick the load-density map and fit overlay scales.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    n_states: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    mean_return: f64,
    #[arg(long, default_value_t = 1.0)]
    return_scale: f64,
}

impl SampleArgs {
    fn params(&self, eps: f64, seed: u64) -> Result<ModelParams> {
        let (Some(n), Some(omega)) = (self.n_agents, self.n_states) else {
            return Err(Error::InvalidParams("need --n-agents and --n-states, or --instance".into()));
        };
        let params = ModelParams { mean_return: self.mean_return, return_scale: self.return_scale, ..ModelParams::new(n, omega, eps, seed) };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON written by `gen`.
    #[arg(long, conflicts_with_all = ["n_agents", "n_states"])]
    instance: Option<PathBuf>,
    #[command(flatten)]
    sample: SampleArgs,
}

impl InstanceArgs {
    fn load(&self, eps: f64, seed: u64) -> Result<MarketInstance> {
        match &self.instance {
            Some(path) => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
            None => MarketInstance::sample(&self.sample.params(eps, seed)?),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    sample: SampleArgs,
    /// Information cost stored with the instance.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eps: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChiArg {
    Exponential,
    RectifiedLinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    ObjectiveMatched,
    PerAgent,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = ChiArg::Exponential)]
    chi: ChiArg,
    /// Response gain of the investment function.
    #[arg(long, default_value_t = 0.1)]
    gain: f64,
    #[arg(long, value_enum, default_value_t = CostArg::ObjectiveMatched)]
    cost: CostArg,
    #[arg(long, default_value_t = 2_000_000)]
    t_max: u64,
    #[arg(long, default_value_t = 400_000)]
    transient: u64,
    #[arg(long, default_value_t = 400_000)]
    window: u64,
    /// Relative drift between windows that counts as converged; 0 runs to --t-max.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Keep every k-th step record.
    #[arg(long, default_value_t = 1000)]
    record_stride: u64,
    #[arg(long)]
    no_chartist: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    CoordinateDescent,
    ProjectedGradient,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::CoordinateDescent)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-8)]
    kt_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    #[arg(long)]
    no_chartist: bool,
    /// Let the two chartist legs move independently.
    #[arg(long)]
    untied: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    FixedEps,
    FixedAlpha,
}

#[derive(Args)]
struct ReplicaArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Threshold grid `start:stop:step`; tau = 0 is skipped.
    #[arg(long, allow_hyphen_values = true)]
    tau: String,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    r_bar: f64,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n_agents: Vec<usize>,
    /// One value for all rows, or one per --n-agents entry.
    #[arg(long, value_delimiter = ',', required = true)]
    n_states: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweptArg {
    N,
    Eps,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Dynamics,
    Equilibrium,
    Both,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification JSON; the flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    swept: Option<SweptArg>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Vec<f64>,
    /// Fixed cost when sweeping n.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Fixed density when sweeping eps.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long, default_value_t = 32)]
    omega: usize,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Equilibrium)]
    engine: EngineArg,
    #[arg(long)]
    no_chartist: bool,
    /// Calibration written by `calibrate`, for the analytic overlay columns.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 32)]
    omega: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0, 8.0])]
    n_grid: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
}

/// Rendered output plus whether every numerical run converged.
struct Output {
    body: Vec<u8>,
    csv: bool,
    converged: bool,
}

impl Output {
    fn json<T: serde::Serialize>(value: &T) -> Result<Self> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        Ok(Output { body, csv: false, converged: true })
    }

    fn csv(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Self> {
        let mut body = Vec::new();
        write(&mut body)?;
        Ok(Output { body, csv: true, converged: true })
    }

    fn converged(mut self, converged: bool) -> Self {
        self.converged = converged;
        self
    }
}

fn note(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParams(format!("expected start:stop:step, got {text:?}"));
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + k as f64 * step).filter(|t| t.abs() > 1e-12).collect())
}

fn gen(args: &GenArgs, cli: &Cli) -> Result<Output> {
    let inst = MarketInstance::sample(&args.sample.params(args.eps, cli.seed.unwrap_or(0))?)?;
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => Output::json(&inst),
        Format::Csv => Output::csv(|out| {
            let agents: Vec<String> = (1..=inst.n_agents()).map(|i| format!("k_{i}")).collect();
            writeln!(out, "omega,R,{}", agents.join(","))?;
            for (w, r) in inst.returns().iter().enumerate() {
                let signals: Vec<String> = (0..inst.n_agents()).map(|i| inst.signal(i, w).value().to_string()).collect();
                writeln!(out, "{w},{r},{}", signals.join(","))?;
            }
            Ok(())
        }),
    }
}

fn simulate(args: &SimulateArgs, cli: &Cli) -> Result<Output> {
    let seed = cli.seed.unwrap_or(0);
    let inst = args.instance.load(args.eps, seed)?;
    let config = LearningConfig {
        chi: match args.chi {
            ChiArg::Exponential => ChiKind::Exponential,
            ChiArg::RectifiedLinear => ChiKind::RectifiedLinear,
        },
        gain: args.gain,
        cost_convention: match args.cost {
            CostArg::ObjectiveMatched => CostConvention::ObjectiveMatched,
            CostArg::PerAgent => CostConvention::PerAgent,
        },
        t_max: args.t_max,
        transient: args.transient,
        avg_window: args.window,
        tol: args.tol,
        seed,
        record_stride: args.record_stride,
    };
    let run = learning::run(&inst, args.eps, &config, !args.no_chartist)?;
    note(
        cli.quiet,
        format!(
            "{} steps, converged: {}, last window H_eps {:.6e}",
            run.steps,
            run.converged,
            run.h_series.last().copied().unwrap_or(f64::NAN)
        ),
    );
    let out = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => Output::csv(|out| learning::write_step_csv(out, &run.records))?,
        Format::Json => Output::json(&run)?,
    };
    Ok(out.converged(run.converged))
}

fn equilibrium(args: &EquilibriumArgs, cli: &Cli) -> Result<Output> {
    let inst = args.instance.load(args.eps, cli.seed.unwrap_or(0))?;
    let opts = SolverOptions {
        method: match args.method {
            MethodArg::CoordinateDescent => Method::CoordinateDescent,
            MethodArg::ProjectedGradient => Method::ProjectedGradient,
        },
        kt_tol: args.kt_tol,
        max_iter: args.max_iter,
        chartist_enabled: !args.no_chartist,
        tie_chartist: !args.untied,
        ..SolverOptions::default()
    };
    let res = solver::solve(&inst, args.eps, &opts)?;
    note(
        cli.quiet,
        format!("H_eps {:.10e}, KT residual {:.2e}, {} iterations", res.objective, res.kt_residual, res.iterations),
    );
    let out = match cli.format.unwrap_or(Format::Json) {
        Format::Json => Output::json(&res)?,
        Format::Csv => Output::csv(|out| {
            writeln!(out, "trader,z_minus,z_plus")?;
            writeln!(out, "chartist,{},{}", res.alloc.z0[0], res.alloc.z0[1])?;
            for (i, z) in res.alloc.z.iter().enumerate() {
                writeln!(out, "{i},{},{}", z[0], z[1])?;
            }
            Ok(())
        })?,
    };
    Ok(out.converged(res.converged))
}

fn replica_curve(args: &ReplicaArgs, cli: &Cli) -> Result<Output> {
    let taus = parse_range(&args.tau)?;
    let points = match args.mode {
        Mode::FixedEps => {
            let eps = args.eps.ok_or_else(|| Error::InvalidParams("--mode fixed-eps needs --eps".into()))?;
            replica::solve_fixed_eps(eps, args.s, args.r_bar, &taus)
        }
        Mode::FixedAlpha => {
            let alpha = args.alpha.ok_or_else(|| Error::InvalidParams("--mode fixed-alpha needs --alpha".into()))?;
            replica::solve_fixed_alpha(alpha, args.s, args.r_bar, &taus)
        }
    };
    let mut good: Vec<ReplicaSolution> = Vec::with_capacity(points.len());
    for (tau, p) in taus.iter().zip(points) {
        match p {
            Ok(sol) => good.push(sol),
            Err(e) => note(cli.quiet, format!("tau {tau}: skipped ({e})")),
        }
    }
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => Output::csv(|out| replica::write_curve_csv(out, &good)),
        Format::Json => Output::json(&good),
    }
}

fn diagnostics_table(args: &DiagnosticsArgs, cli: &Cli) -> Result<Output> {
    let states = match args.n_states.len() {
        1 => vec![args.n_states[0]; args.n_agents.len()],
        k if k == args.n_agents.len() => args.n_states.clone(),
        k => return Err(Error::DimensionMismatch { what: "--n-states entries", expected: args.n_agents.len(), actual: k }),
    };
    let seed = cli.seed.unwrap_or(0);
    let rows = args
        .n_agents
        .iter()
        .zip(&states)
        .map(|(&n, &omega)| {
            ModelParams::new(n, omega, 0.0, seed).validate()?;
            diagnostics::diagnostics_table(n, omega, args.instances, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => Output::csv(|out| diagnostics::write_diagnostics_csv(out, &rows)),
        Format::Json => Output::json(&rows),
    }
}

fn read_calibration(path: &Path) -> Result<Calibration> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    // Accept either a bare calibration or a full `calibrate` report.
    let inner = match value.get("selected") {
        Some(selected) if selected.is_null() => {
            return Err(Error::InvalidParams("calibration report has no selected map".into()))
        }
        Some(selected) => selected.clone(),
        None => value,
    };
    Ok(serde_json::from_value(inner)?)
}

fn sweep_spec(args: &SweepArgs, cli: &Cli) -> Result<SweepSpec> {
    let mut spec = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => {
            let swept = args.swept.ok_or_else(|| Error::InvalidParams("need --config or --swept".into()))?;
            SweepSpec {
                swept: match swept {
                    SweptArg::N => Swept::N,
                    SweptArg::Eps => Swept::Eps,
                },
                values: args.values.clone(),
                fixed: Fixed { eps: args.eps, n: args.n },
                omega: args.omega,
                realizations: args.realizations,
                engine: match args.engine {
                    EngineArg::Dynamics => Engine::Dynamics,
                    EngineArg::Equilibrium => Engine::Equilibrium,
                    EngineArg::Both => Engine::Both,
                },
                chartist: !args.no_chartist,
                base_seed: 0,
                s: 1.0,
                r_bar: 1.0,
                learning: LearningConfig::default(),
                solver: SolverOptions::default(),
            }
        }
    };
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn sweep(args: &SweepArgs, cli: &Cli) -> Result<Output> {
    let spec = sweep_spec(args, cli)?;
    let calibration = args.calibration.as_deref().map(read_calibration).transpose()?;
    let rows = experiment::sweep(&spec, calibration.as_ref())?;
    let mut converged = true;
    for row in &rows {
        for failure in &row.failures {
            note(cli.quiet, format!("{} at {}: {failure}", row.engine.tag(), row.value));
        }
        if row.unconverged > 0 {
            converged = false;
            note(cli.quiet, format!("{} at {}: {} realizations did not converge", row.engine.tag(), row.value, row.unconverged));
        }
    }
    let out = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => Output::csv(|out| experiment::write_sweep_csv(out, &rows))?,
        Format::Json => Output::json(&rows)?,
    };
    Ok(out.converged(converged))
}

fn calibrate(args: &CalibrateArgs, cli: &Cli) -> Result<Output> {
    let report = experiment::calibrate_alpha_map(args.omega, args.eps, &args.n_grid, args.realizations, cli.seed.unwrap_or(0))?;
    if report.insufficient_data {
        note(cli.quiet, "a single grid point cannot separate the candidate maps");
    }
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => Output::json(&report),
        Format::Csv => Output::csv(|out| {
            writeln!(out, "map,distance_scale,z0_scale,ssd,monotone_consistent,selected")?;
            for c in &report.candidates {
                let selected = report.selected.is_some_and(|s| s.map == c.map);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.map.label(),
                    c.distance_scale,
                    c.z0_scale,
                    c.ssd,
                    c.monotone_consistent,
                    selected
                )?;
            }
            Ok(())
        }),
    }
}

fn emit(cli: &Cli, name: &str, output: &Output) -> Result<()> {
    let mut text = Vec::with_capacity(output.body.len() + 64);
    if output.csv && !cli.quiet {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(text, "# infomarket {name} generated_at_unix={stamp}")?;
    }
    text.extend_from_slice(&output.body);
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(&text)?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Gen(args) => gen(args, cli),
        Command::Simulate(args) => simulate(args, cli),
        Command::Equilibrium(args) => equilibrium(args, cli),
        Command::Replica(args) => replica_curve(args, cli),
        Command::Diagnostics(args) => diagnostics_table(args, cli),
        Command::Sweep(args) => sweep(args, cli),
        Command::Calibrate(args) => calibrate(args, cli),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Gen(_) => "gen",
        Command::Simulate(_) => "simulate",
        Command::Equilibrium(_) => "equilibrium",
        Command::Replica(_) => "replica",
        Command::Diagnostics(_) => "diagnostics",
        Command::Sweep(_) => "sweep",
        Command::Calibrate(_) => "calibrate",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let output = match run(&cli) {
        Ok(output) => output,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = emit(&cli, command_name(&cli.command), &output) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if output.converged {
        ExitCode::SUCCESS
    } else {
        note(cli.quiet, "stopped before converging");
        ExitCode::from(2)
    }
}
