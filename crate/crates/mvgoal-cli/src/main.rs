//! Command-line front end: frontier tables, analytic goal probabilities,
//! Monte Carlo experiment runs, bound reports and horizon scans, with CSV
//! (default) or JSON output.
//!
//! Exit codes: 0 on success, 1 on errors, 2 when a Monte Carlo smoke gate
//! trips (an estimate more than 4 standard errors from its analytic
//! reference).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mvgoal::analytics::{
    bound_constants, goal_prob, horizon_scan, minimize_universal_curve, universal_curve_points,
};
use mvgoal::numfmt::sig12;
use mvgoal::simulate::{
    bankruptcy_report, goal_prob_report, run_paths, stopped_report, terminal_moments_report,
    write_path_csv, McReport, Scheme, SimConfig,
};
use mvgoal::{EfficientStrategy, MarketModel};

#[derive(Parser)]
#[command(
    name = "mvgoal",
    version,
    about = "Mean-variance efficient portfolios, goal probabilities and Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frontier rows (target, gamma, variance, std dev) for a list of targets
    Frontier(FrontierArgs),
    /// Analytic goal probability with the universal lower bound margin
    Prob(ProbArgs),
    /// Monte Carlo experiments: goal probability, terminal moments, stopped
    /// strategy and the bankruptcy triple
    Simulate(SimulateArgs),
    /// Bound constants, the minimum of the goal-probability curve, and
    /// plot-ready curve data
    Bound(BoundArgs),
    /// Analytic goal probability across horizons, optionally with a Monte
    /// Carlo bankruptcy-before-goal scan
    Horizon(HorizonArgs),
}

#[derive(Args)]
struct MarketArgs {
    /// Market specification file (JSON); omitted: built-in reference market
    /// (T = 1, r = 0.06, one stock with mu = 0.12, sigma = 0.15)
    #[arg(long)]
    market: Option<PathBuf>,
}

impl MarketArgs {
    fn load(&self) -> mvgoal::Result<MarketModel> {
        match &self.market {
            Some(path) => MarketModel::from_json_file(path),
            None => Ok(MarketModel::reference()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; omitted: stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl OutputArgs {
    fn write(&self, text: &str) -> std::io::Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text),
            None => std::io::stdout().write_all(text.as_bytes()),
        }
    }
}

#[derive(Args)]
struct StrategyArgs {
    /// Initial wealth
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    /// Target expected terminal wealth (repeatable where a list is accepted)
    #[arg(long = "target", required = true)]
    targets: Vec<f64>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    /// Steps per coefficient piece
    #[arg(long, default_value_t = 1_000)]
    steps: usize,
    /// Seed (flag takes precedence over the environment variable)
    #[arg(long, env = "MVGOAL_SEED", default_value_t = 42)]
    seed: u64,
    /// exact | euler
    #[arg(long, default_value = "exact")]
    scheme: String,
    /// on | off
    #[arg(long, default_value = "on")]
    bridge: String,
}

impl McArgs {
    fn config(&self) -> mvgoal::Result<SimConfig> {
        let scheme: Scheme = self.scheme.parse()?;
        let bridge = match self.bridge.as_str() {
            "on" => true,
            "off" => false,
            other => {
                return Err(mvgoal::Error::InvalidConfig(format!(
                    "--bridge expects on|off, got '{other}'"
                )))
            }
        };
        Ok(SimConfig::new(self.paths, self.steps, self.seed)
            .with_scheme(scheme)
            .with_bridge(bridge))
    }
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProbArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Extra squared-price-of-risk integrals to tabulate besides the
    /// market's own value
    #[arg(long = "beta")]
    betas: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.10)]
    target: f64,
    #[command(flatten)]
    mc: McArgs,
    /// Write a per-path CSV (path_id, tau, bankruptcy_time, terminal_wealth,
    /// which_first)
    #[arg(long)]
    dump_paths: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BoundArgs {
    /// Right endpoint of the minimization interval
    #[arg(long, default_value_t = 10.0)]
    xmax: f64,
    /// Grid points for the minimization sweep
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Write the curve samples (x, value) to this CSV file
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Right endpoint and sample count of the emitted curve
    #[arg(long, default_value_t = 5.0)]
    curve_xmax: f64,
    #[arg(long, default_value_t = 500)]
    curve_points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct HorizonArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Comma-separated horizon grid, e.g. 0.25,0.5,1,2
    #[arg(long)]
    grid: String,
    /// Add a Monte Carlo bankruptcy-before-goal column per horizon
    #[arg(long, default_value_t = false)]
    mc_bankruptcy: bool,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.10)]
    target: f64,
    #[command(flatten)]
    mc: McArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Frontier(args) => cmd_frontier(args),
        Command::Prob(args) => cmd_prob(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Horizon(args) => cmd_horizon(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CmdResult = Result<ExitCode, Box<dyn std::error::Error>>;

// ---------------------------------------------------------------------------
// frontier
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FrontierRow {
    target: f64,
    gamma: Option<f64>,
    variance: Option<f64>,
    std_dev: Option<f64>,
    error: Option<String>,
}

fn cmd_frontier(args: FrontierArgs) -> CmdResult {
    let market = args.market.load()?;
    let rows: Vec<FrontierRow> = args
        .strategy
        .targets
        .iter()
        .map(|&z| match EfficientStrategy::new(&market, args.strategy.x0, z) {
            Ok(s) => FrontierRow {
                target: z,
                gamma: Some(s.gamma()),
                variance: Some(s.min_variance()),
                std_dev: Some(s.min_variance().sqrt()),
                error: None,
            },
            Err(e) => FrontierRow {
                target: z,
                gamma: None,
                variance: None,
                std_dev: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        Format::Csv => {
            let mut t = String::from("target,gamma,variance,std_dev,error\n");
            for r in &rows {
                let opt = |v: Option<f64>| v.map(sig12).unwrap_or_default();
                t += &format!(
                    "{},{},{},{},{}\n",
                    sig12(r.target),
                    opt(r.gamma),
                    opt(r.variance),
                    opt(r.std_dev),
                    r.error.clone().unwrap_or_default()
                );
            }
            t
        }
    };
    args.output.write(&text)?;
    if rows.iter().all(|r| r.error.is_some()) {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// prob
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ProbRow {
    beta: f64,
    goal_prob: f64,
    lower_bound: f64,
    margin: f64,
}

fn cmd_prob(args: ProbArgs) -> CmdResult {
    let market = args.market.load()?;
    let lower = bound_constants().lower_bound;
    let mut betas = vec![market.beta_total()?];
    betas.extend(&args.betas);
    let rows: Vec<ProbRow> = betas
        .iter()
        .map(|&b| {
            let p = goal_prob(b)?;
            Ok(ProbRow {
                beta: b,
                goal_prob: p,
                lower_bound: lower,
                margin: p - lower,
            })
        })
        .collect::<mvgoal::Result<_>>()?;

    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        Format::Csv => {
            let mut t = String::from("beta,goal_prob,lower_bound,margin\n");
            for r in &rows {
                t += &format!(
                    "{},{},{},{}\n",
                    sig12(r.beta),
                    sig12(r.goal_prob),
                    sig12(r.lower_bound),
                    sig12(r.margin)
                );
            }
            t
        }
    };
    args.output.write(&text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn mc_csv_header() -> &'static str {
    "quantity,estimate,std_error,ci_low,ci_high,n_paths,seed,scheme,analytic,deviation_se\n"
}

fn mc_csv_row(r: &McReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        r.quantity,
        sig12(r.estimate),
        sig12(r.std_error),
        sig12(r.ci_low),
        sig12(r.ci_high),
        r.n_paths,
        r.seed,
        r.scheme,
        r.analytic.map(sig12).unwrap_or_default(),
        r.deviation_in_se().map(sig12).unwrap_or_default()
    )
}

#[derive(Serialize)]
struct SimulateOutput {
    goal: McReport,
    mean: McReport,
    variance: McReport,
    stopped_success: McReport,
    stopped_terminal_mean: f64,
    stopped_terminal_std: f64,
    n_stopped: usize,
    bankruptcy: McReport,
    bankruptcy_before_goal: McReport,
    goal_before_bankruptcy: McReport,
    neither_fraction: f64,
    gate_tripped: bool,
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let market = args.market.load()?;
    let strategy = EfficientStrategy::new(&market, args.x0, args.target)?;
    let config = args.mc.config()?;
    let outcomes = run_paths(&strategy, &config)?;

    let goal = goal_prob_report(&outcomes, &strategy, &config)?;
    let moments = terminal_moments_report(&outcomes, &strategy, &config);
    let stopped = stopped_report(&outcomes, &strategy, &config)?;
    let bankruptcy = bankruptcy_report(&outcomes, &strategy, &config)?;

    if let Some(path) = &args.dump_paths {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_path_csv(&outcomes, &mut file)?;
    }

    let reports = [
        &goal,
        &moments.mean,
        &moments.variance,
        &stopped.success,
        &bankruptcy.bankruptcy,
        &bankruptcy.bankruptcy_first,
        &bankruptcy.goal_first,
    ];
    let gate_tripped = reports
        .iter()
        .any(|r| r.deviation_in_se().is_some_and(|d| d > 4.0));

    let text = match args.output.format {
        Format::Json => {
            let out = SimulateOutput {
                goal,
                mean: moments.mean,
                variance: moments.variance,
                stopped_success: stopped.success,
                stopped_terminal_mean: stopped.terminal_mean,
                stopped_terminal_std: stopped.terminal_std,
                n_stopped: stopped.n_stopped,
                bankruptcy: bankruptcy.bankruptcy,
                bankruptcy_before_goal: bankruptcy.bankruptcy_first,
                goal_before_bankruptcy: bankruptcy.goal_first,
                neither_fraction: bankruptcy.neither_fraction,
                gate_tripped,
            };
            serde_json::to_string_pretty(&out)? + "\n"
        }
        Format::Csv => {
            let mut t = String::from(mc_csv_header());
            for r in reports {
                t += &mc_csv_row(r);
            }
            t
        }
    };
    args.output.write(&text)?;
    if gate_tripped {
        eprintln!("smoke gate: an estimate deviates more than 4 standard errors from its analytic reference");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundOutput {
    lower_bound: f64,
    tail_bound: f64,
    h_argmin: f64,
    curve_min: f64,
    curve_argmin: f64,
    min_exceeds_bound_by: f64,
}

fn cmd_bound(args: BoundArgs) -> CmdResult {
    let constants = bound_constants();
    let (curve_argmin, curve_min) = minimize_universal_curve(args.xmax, args.points)?;
    let out = BoundOutput {
        lower_bound: constants.lower_bound,
        tail_bound: constants.tail_bound,
        h_argmin: constants.h_argmin,
        curve_min,
        curve_argmin,
        min_exceeds_bound_by: curve_min - constants.lower_bound,
    };

    if let Some(path) = &args.curve_out {
        let curve = universal_curve_points(args.curve_xmax, args.curve_points)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        curve.write_csv(&mut file)?;
    }

    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&out)? + "\n",
        Format::Csv => {
            let mut t = String::from("quantity,value\n");
            for (name, v) in [
                ("lower_bound", out.lower_bound),
                ("tail_bound", out.tail_bound),
                ("h_argmin", out.h_argmin),
                ("curve_min", out.curve_min),
                ("curve_argmin", out.curve_argmin),
                ("min_exceeds_bound_by", out.min_exceeds_bound_by),
            ] {
                t += &format!("{name},{}\n", sig12(v));
            }
            t
        }
    };
    args.output.write(&text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// horizon
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct HorizonRow {
    horizon: f64,
    goal_prob: f64,
    bankruptcy_before_goal: Option<f64>,
    std_error: Option<f64>,
    is_empirical_argmin: Option<bool>,
}

fn cmd_horizon(args: HorizonArgs) -> CmdResult {
    let market = args.market.load()?;
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("invalid --grid entry: {e}"))?;
    let curve = horizon_scan(&market, &grid)?;

    let mut rows: Vec<HorizonRow> = curve
        .points
        .iter()
        .map(|&(t, p)| HorizonRow {
            horizon: t,
            goal_prob: p,
            bankruptcy_before_goal: None,
            std_error: None,
            is_empirical_argmin: None,
        })
        .collect();

    if args.mc_bankruptcy {
        let config = args.mc.config()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in rows.iter_mut().enumerate() {
            // truncating or extending the market to the scan horizon is the
            // same operation the analytic scan performs on beta
            let scan_market = truncate_or_extend(&market, row.horizon)?;
            let strategy = EfficientStrategy::new(&scan_market, args.x0, args.target)?;
            let report = mvgoal::simulate::mc_bankruptcy(&strategy, &config)?;
            row.bankruptcy_before_goal = Some(report.bankruptcy_first.estimate);
            row.std_error = Some(report.bankruptcy_first.std_error);
            if best.is_none_or(|(_, b)| report.bankruptcy_first.estimate < b) {
                best = Some((i, report.bankruptcy_first.estimate));
            }
        }
        if let Some((i, _)) = best {
            for (j, row) in rows.iter_mut().enumerate() {
                row.is_empirical_argmin = Some(j == i);
            }
        }
    }

    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        Format::Csv => {
            let mut t = if args.mc_bankruptcy {
                String::from("horizon,goal_prob,bankruptcy_before_goal,std_error,is_empirical_argmin\n")
            } else {
                String::from("horizon,goal_prob\n")
            };
            for r in &rows {
                if args.mc_bankruptcy {
                    t += &format!(
                        "{},{},{},{},{}\n",
                        sig12(r.horizon),
                        sig12(r.goal_prob),
                        r.bankruptcy_before_goal.map(sig12).unwrap_or_default(),
                        r.std_error.map(sig12).unwrap_or_default(),
                        r.is_empirical_argmin
                            .map(|b| b.to_string())
                            .unwrap_or_default()
                    );
                } else {
                    t += &format!("{},{}\n", sig12(r.horizon), sig12(r.goal_prob));
                }
            }
            t
        }
    };
    args.output.write(&text)?;
    Ok(ExitCode::SUCCESS)
}

/// Rebuilds the market on `[0, horizon]`, truncating curves or extending
/// their final values, so Monte Carlo scans and the analytic scan see the
/// same coefficients.
fn truncate_or_extend(market: &MarketModel, horizon: f64) -> mvgoal::Result<MarketModel> {
    let rebuild = |curve: &mvgoal::CoefficientCurve| -> mvgoal::Result<mvgoal::CoefficientCurve> {
        let mut breakpoints: Vec<f64> = curve
            .breakpoints()
            .iter()
            .copied()
            .filter(|&b| b < horizon)
            .collect();
        breakpoints.push(horizon);
        let values = breakpoints[..breakpoints.len() - 1]
            .iter()
            .map(|&lo| curve.value_at(lo))
            .collect::<mvgoal::Result<Vec<_>>>()?;
        mvgoal::CoefficientCurve::piecewise(breakpoints, values)
    };
    let rate = rebuild(market.rate_curve())?;
    let stocks = market
        .stocks()
        .iter()
        .map(|s| {
            Ok(mvgoal::Stock {
                appreciation: rebuild(&s.appreciation)?,
                volatility_row: s
                    .volatility_row
                    .iter()
                    .map(&rebuild)
                    .collect::<mvgoal::Result<_>>()?,
            })
        })
        .collect::<mvgoal::Result<Vec<_>>>()?;
    MarketModel::new(horizon, rate, stocks, market.ellipticity())
}
