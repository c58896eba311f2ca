//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input or missing file, 2 solver did not
//! converge, 3 golden values not reproduced.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ancillary;
use crate::equilibrium::{
    solve_doe, solve_flat, solve_mcp, BrConfig, DoeConfig, McpConfig, ObliviousStrategy,
    SolveReport,
};
use crate::error::{Error, Result};
use crate::finite_game::{self, DeviationConfig, Summary, DEFAULT_SEED};
use crate::scenario::Scenario;
use crate::twostage;

/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "DYNPRICE_SEED";

const GOLDEN: &str = include_str!("../fixtures/golden.toml");

#[derive(Debug, Parser)]
#[command(
    name = "dynprice",
    about = "Dynamic pricing with ancillary costs: equilibria, tables and experiments"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Master seed; falls back to $DYNPRICE_SEED, then a fixed constant.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file (or directory for `verify`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mechanism {
    Proposed,
    Mcp,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    RealizedWelfare,
    DeviationGain,
    WelfareGap,
    All,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "proposed")]
    pub mechanism: Mechanism,
    /// Convergence tolerance of the solver.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file; the built-in two-type instance when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Strategy followed by the population.
    #[arg(long, value_enum, default_value = "proposed")]
    pub mechanism: Mechanism,
    #[arg(long, value_enum, default_value = "all")]
    pub experiment: Experiment,
    /// Population sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 50, 500])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub draws: usize,
    /// Type of the deviating consumer.
    #[arg(long, default_value_t = 1)]
    pub tagged: usize,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AncillaryArgs {
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Primary ramp rate; all reference curves when omitted.
    #[arg(long)]
    pub r_b: Option<f64>,
    #[arg(long, requires = "r_b")]
    pub r_d: Option<f64>,
    /// Grid of omega / r_b.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
}

#[derive(Debug, Args)]
pub struct TwoStageArgs {
    #[arg(long = "E", default_value_t = 0.0)]
    pub e: f64,
    #[arg(long, default_value_t = 1.12)]
    pub b0: f64,
    /// Substitutability grid for both reserve factors, plus the reserve
    /// factor grid at `--peak-e`, instead of a single instance.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 0.08)]
    pub peak_e: f64,
    #[arg(long, default_value_t = 0.01)]
    pub e_step: f64,
    #[arg(long, default_value_t = 0.01)]
    pub b0_step: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one mechanism on a scenario file.
    Solve(SolveArgs),
    /// Finite-population experiments.
    Simulate(SimulateArgs),
    /// Surrogate supplier cost error experiment.
    Ancillary(AncillaryArgs),
    /// Two-stage instance tables and sweeps.
    Twostage(TwoStageArgs),
    /// Reproduce the pinned reference values and write all result CSVs.
    Verify,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => 2,
        _ => 1,
    }
}

pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// Run a parsed configuration; returns the exit code on success paths.
pub fn execute(cfg: &RunConfig) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &RunConfig) -> Result<i32> {
    let seed = cfg.seed.unwrap_or_else(default_seed);
    match &cfg.command {
        Command::Solve(a) => {
            let sc = Scenario::load(&a.scenario)?;
            let report = solve(&sc, a.mechanism, a.tol)?;
            let tree = sc.tree()?;
            emit(cfg.out.as_deref(), &report.to_csv(&sc, &tree, None, None)?)?;
            Ok(0)
        }
        Command::Simulate(a) => {
            let sc = match &a.scenario {
                Some(p) => Scenario::load(p)?,
                None => default_population(),
            };
            let text = simulate(&sc, a, seed)?;
            emit(cfg.out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Ancillary(a) => {
            let ratios = a.ratios.clone().unwrap_or_else(ancillary::default_ratios);
            let curves: Vec<(f64, f64)> = match (a.r_b, a.r_d) {
                (Some(rb), Some(rd)) => vec![(rb, rd)],
                (Some(rb), None) => vec![(rb, 2.0 * rb)],
                _ => ancillary::REFERENCE_CURVES.to_vec(),
            };
            let mut points = Vec::new();
            for (rb, rd) in curves {
                points.extend(ancillary::error_experiment_with_horizon(
                    rb, rd, &ratios, a.trials, a.horizon, seed,
                )?);
            }
            emit(cfg.out.as_deref(), &ancillary::to_csv(&points)?)?;
            Ok(0)
        }
        Command::Twostage(a) => {
            let tables = if a.sweep {
                let mut t = twostage::sweep(&twostage::linspace(0.0, 0.1, a.e_step), &[1.12, 1.2])?;
                t.extend(twostage::sweep(
                    &[a.peak_e],
                    &twostage::linspace(1.12, 1.2, a.b0_step),
                )?);
                t
            } else {
                vec![twostage::run_tables(a.e, a.b0)?]
            };
            emit(cfg.out.as_deref(), &twostage::to_csv(&tables)?)?;
            Ok(0)
        }
        Command::Verify => {
            let dir = cfg
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("verify_out"));
            let failures = verify(&dir, seed)?;
            for f in &failures {
                eprintln!("mismatch: {f}");
            }
            if failures.is_empty() {
                println!("verify: all golden values reproduced");
                Ok(0)
            } else {
                Ok(3)
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// The two-type instance used by default for population experiments:
/// equal shares of an inflexible (`E = 0`) and a flexible (`E = 0.08`)
/// consumer with `b0 = 1.2`.
pub fn default_population() -> Scenario {
    twostage::build_mixed(0.0, 0.08, 0.5, 1.2)
}

/// Solve `mechanism`; a flat tariff charges the marginal-cost-pricing
/// average price (future charges excluded).
pub fn solve(sc: &Scenario, mechanism: Mechanism, tol: Option<f64>) -> Result<SolveReport> {
    let mut doe = DoeConfig::default();
    if let Some(t) = tol {
        doe.tol = t;
    }
    let mcp_cfg = |warm: Option<ObliviousStrategy>| {
        let mut c = McpConfig {
            warm_start: warm,
            ..McpConfig::default()
        };
        if let Some(t) = tol {
            c.tol = t;
        }
        c
    };
    match mechanism {
        Mechanism::Proposed => solve_doe(sc, &doe),
        Mechanism::Mcp => solve_mcp(sc, &mcp_cfg(None)),
        Mechanism::Flat => {
            let mcp = solve_mcp(sc, &mcp_cfg(None))?;
            let rate = mcp.average_price(&sc.tree()?, false)?;
            solve_flat(sc, rate, &BrConfig::default())
        }
    }
}

fn simulate(sc: &Scenario, a: &SimulateArgs, seed: u64) -> Result<String> {
    if a.tagged >= sc.num_types() {
        return Err(Error::Config(format!(
            "tagged type {} out of range",
            a.tagged
        )));
    }
    let strategy = solve(sc, a.mechanism, a.tol)?.strategy;
    let want = |e: Experiment| a.experiment == e || a.experiment == Experiment::All;
    let mut rows: Vec<(String, usize, usize, u64, Summary, String)> = Vec::new();
    let metric = |s: &str| format!("{s}_per_consumer");
    if want(Experiment::RealizedWelfare) {
        for &n in &a.n {
            let s = finite_game::simulate_symmetric(sc, &strategy, n, a.draws, seed)?;
            rows.push((
                "realized_welfare".into(),
                n,
                a.draws,
                seed,
                s,
                metric("welfare"),
            ));
        }
    }
    if want(Experiment::DeviationGain) {
        let dc = DeviationConfig {
            draws: a.draws,
            tagged_type: a.tagged,
            ..DeviationConfig::default()
        };
        for &n in &a.n {
            let g = finite_game::deviation_gain(sc, &strategy, n, seed, &dc)?;
            rows.push((
                "deviation_gain".into(),
                n,
                a.draws,
                seed,
                g.gain,
                format!("gain_type_{}", a.tagged),
            ));
        }
    }
    if want(Experiment::WelfareGap) {
        for g in finite_game::welfare_gap(sc, &strategy, &a.n, a.draws, seed)? {
            rows.push((
                "welfare_gap".into(),
                g.n,
                a.draws,
                seed,
                g.gap,
                metric("gap"),
            ));
        }
    }
    finite_game::to_csv(&rows)
}

#[derive(Debug, serde::Deserialize)]
struct Golden {
    case: Vec<GoldenCase>,
}

#[derive(Debug, serde::Deserialize)]
struct GoldenCase {
    #[serde(rename = "E")]
    e: f64,
    b0: f64,
    mechanism: String,
    field: String,
    expected: f64,
    tol: f64,
}

fn field(r: &twostage::TableRow, name: &str) -> Result<f64> {
    Ok(match name {
        "a0" => r.a0,
        "a1" => r.a1,
        "welfare" => r.welfare,
        "p0w0" => r.p0w0,
        "p1w1" => r.p1w1,
        "q1" => r.q1,
        "avg_price_exq" => r.avg_price_exq,
        "avg_price_incq" => r.avg_price_incq,
        "peak_reduction_pct" => r.peak_reduction_pct,
        other => return Err(Error::Config(format!("unknown golden field {other}"))),
    })
}

/// Check the embedded golden values and write `twostage.csv`,
/// `sweep.csv`, `simulate.csv` and `ancillary.csv` into `dir`. Returns
/// one message per value that was not reproduced.
pub fn verify(dir: &Path, seed: u64) -> Result<Vec<String>> {
    let golden: Golden = toml::from_str(GOLDEN).map_err(|e| Error::Config(e.to_string()))?;
    let mut instances: Vec<(f64, f64)> = golden.case.iter().map(|c| (c.e, c.b0)).collect();
    instances.sort_by(|x, y| x.partial_cmp(y).unwrap());
    instances.dedup();
    let tables: Vec<twostage::Tables> = instances
        .iter()
        .map(|&(e, b0)| twostage::run_tables(e, b0))
        .collect::<Result<_>>()?;
    let mut failures = Vec::new();
    for c in &golden.case {
        let k = instances.iter().position(|x| *x == (c.e, c.b0)).unwrap();
        let row = tables[k]
            .rows()
            .into_iter()
            .find(|r| r.mechanism == c.mechanism)
            .ok_or_else(|| Error::Config(format!("unknown mechanism {}", c.mechanism)))?;
        let got = field(row, &c.field)?;
        if !((got - c.expected).abs() <= c.tol) {
            failures.push(format!(
                "E={} b0={} {} {}: got {got:.6}, expected {} +/- {}",
                c.e, c.b0, c.mechanism, c.field, c.expected, c.tol
            ));
        }
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("twostage.csv"), twostage::to_csv(&tables)?)?;

    let mut sweep = twostage::sweep(&twostage::linspace(0.0, 0.1, 0.01), &[1.12, 1.2])?;
    sweep.extend(twostage::sweep(
        &[0.08],
        &twostage::linspace(1.12, 1.2, 0.01),
    )?);
    for t in &sweep {
        let (p, m, f) = (&t.proposed, &t.mcp, &t.flat);
        if p.welfare < m.welfare - 1e-6 || m.welfare < f.welfare - 1e-6 {
            failures.push(format!("E={} b0={}: welfare ordering violated", p.e, p.b0));
        }
    }
    fs::write(dir.join("sweep.csv"), twostage::to_csv(&sweep)?)?;

    let sim = SimulateArgs {
        scenario: None,
        mechanism: Mechanism::Proposed,
        experiment: Experiment::All,
        n: vec![5, 50, 500],
        draws: 100,
        tagged: 1,
        tol: None,
    };
    fs::write(
        dir.join("simulate.csv"),
        simulate(&default_population(), &sim, seed)?,
    )?;

    let mut points = Vec::new();
    for (rb, rd) in ancillary::REFERENCE_CURVES {
        points.extend(ancillary::error_experiment(
            rb,
            rd,
            &ancillary::default_ratios(),
            20_000,
            seed,
        )?);
    }
    fs::write(dir.join("ancillary.csv"), ancillary::to_csv(&points)?)?;
    Ok(failures)
}
