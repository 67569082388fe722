//! Monte Carlo engine for the efficient wealth process.
//!
//! The simulation driver is the scalar process
//! `phi(t) = (3/2) int_0^t |theta|^2 ds + int_0^t theta dW`, which is exact
//! in distribution for any number of stocks (the stochastic integral is a
//! time-changed one-dimensional Brownian motion). Wealth is an explicit
//! monotone transform of `phi`, so goal-hitting and bankruptcy are barrier
//! crossings of `phi` at the levels given by
//! [`crate::frontier::BarrierConstants`].
//!
//! Two schemes are available: `exact_y` simulates `phi` exactly at the grid
//! points and maps to wealth in closed form; `euler` discretizes the
//! controlled wealth equation directly with the feedback allocation
//! (single-asset markets only, as a cross-check) and shares the per-step
//! normal draws with `exact_y` for a given seed.
//!
//! Reproducibility contract: every path owns two counter-derived RNG
//! streams, one for normal increments and one for bridge-correction
//! uniforms, both determined by `(seed, path index)`. Path generation is
//! embarrassingly parallel and aggregation runs in fixed path order, so
//! reports are bit-identical regardless of thread count. Keeping the
//! bridge uniforms on their own stream, consumed in lockstep pairs, makes
//! the goal-hitting decision independent of the (target-dependent)
//! bankruptcy barrier: identical seeds yield identical hitting-time arrays
//! across different targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frontier::EfficientStrategy;
use crate::market::MarketModel;

/// Hard cap on `steps per piece * pieces` to guard against runaway configs.
pub const MAX_TOTAL_STEPS: usize = 10_000_000;
/// Cap on stored values for the path-returning diagnostics APIs.
const MAX_STORED_VALUES: usize = 20_000_000;

/// 97.5% standard normal quantile, for two-sided 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

/// Discretization scheme for the wealth process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact simulation of the driving process, wealth in closed form.
    ExactY,
    /// Euler-Maruyama on the controlled wealth equation (single asset).
    Euler,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::ExactY => write!(f, "exact_y"),
            Scheme::Euler => write!(f, "euler"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_y" => Ok(Scheme::ExactY),
            "euler" => Ok(Scheme::Euler),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (expected exact|euler)"
            ))),
        }
    }
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Steps per coefficient piece; the step grid is uniform within each
    /// piece and aligned to the piece boundaries.
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Flag intra-step barrier crossings with the Brownian-bridge crossing
    /// probability; removes the downward bias of grid-only monitoring.
    pub bridge_correction: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            scheme: Scheme::ExactY,
            bridge_correction: true,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    fn validate(&self, n_pieces: usize) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        let total = self.n_steps.checked_mul(n_pieces);
        if total.is_none_or(|t| t > MAX_TOTAL_STEPS) {
            return Err(Error::InvalidConfig(format!(
                "n_steps * pieces = {} * {n_pieces} exceeds the {MAX_TOTAL_STEPS} guard",
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// Which terminal-relevant event came first on a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhichFirst {
    Goal,
    Bankruptcy,
    Neither,
}

impl std::fmt::Display for WhichFirst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WhichFirst::Goal => write!(f, "goal"),
            WhichFirst::Bankruptcy => write!(f, "bankruptcy"),
            WhichFirst::Neither => write!(f, "neither"),
        }
    }
}

/// One simulated path: unstopped terminal wealth plus first-passage times.
///
/// Crossing times are reported at the right endpoint of the detecting step.
/// When both barriers flag inside the same step the goal takes precedence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub terminal_wealth: f64,
    /// First time the wealth reaches the discounted target, if any.
    pub hitting_time: Option<f64>,
    /// First time the wealth reaches zero, if any.
    pub bankruptcy_time: Option<f64>,
    pub which_first: WhichFirst,
}

fn which_first(goal: Option<f64>, bank: Option<f64>) -> WhichFirst {
    match (goal, bank) {
        (None, None) => WhichFirst::Neither,
        (Some(_), None) => WhichFirst::Goal,
        (None, Some(_)) => WhichFirst::Bankruptcy,
        // equal times break toward the goal
        (Some(g), Some(b)) => {
            if g <= b {
                WhichFirst::Goal
            } else {
                WhichFirst::Bankruptcy
            }
        }
    }
}

/// A Monte Carlo point estimate with its uncertainty and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub quantity: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Closed-form reference value, where one exists.
    pub analytic: Option<f64>,
}

impl McReport {
    fn new(
        quantity: &str,
        estimate: f64,
        std_error: f64,
        config: &SimConfig,
        analytic: Option<f64>,
    ) -> Self {
        Self {
            quantity: quantity.to_string(),
            estimate,
            std_error,
            ci_low: estimate - Z95 * std_error,
            ci_high: estimate + Z95 * std_error,
            n_paths: config.n_paths,
            seed: config.seed,
            scheme: config.scheme,
            analytic,
        }
    }

    fn proportion(quantity: &str, count: usize, config: &SimConfig, analytic: Option<f64>) -> Self {
        let n = config.n_paths as f64;
        let p = count as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        Self::new(quantity, p, se, config, analytic)
    }

    /// Absolute deviation from the analytic reference in standard errors,
    /// when both are available and meaningful.
    pub fn deviation_in_se(&self) -> Option<f64> {
        let a = self.analytic?;
        (self.std_error > 0.0).then(|| (self.estimate - a).abs() / self.std_error)
    }
}

/// Sample mean and variance of the terminal wealth with their standard
/// errors and analytic references.
#[derive(Debug, Clone, Serialize)]
pub struct MomentsReport {
    pub mean: McReport,
    pub variance: McReport,
}

/// Outcome of the stop-at-the-goal policy: follow the efficient strategy
/// until the discounted target is hit, then hold the bank account (so the
/// terminal wealth is exactly the target on that event).
#[derive(Debug, Clone, Serialize)]
pub struct StoppedReport {
    /// `P(x(T) >= z)` under the stopped policy.
    pub success: McReport,
    pub terminal_mean: f64,
    pub terminal_std: f64,
    pub terminal_min: f64,
    pub terminal_max: f64,
    pub n_stopped: usize,
}

/// Bankruptcy experiment: the marginal bankruptcy probability plus the
/// exhaustive goal-first / bankruptcy-first / neither partition.
#[derive(Debug, Clone, Serialize)]
pub struct BankruptcyReport {
    pub bankruptcy: McReport,
    pub bankruptcy_first: McReport,
    pub goal_first: McReport,
    pub neither_fraction: f64,
}

// ---------------------------------------------------------------------------
// Step grid and per-strategy constants
// ---------------------------------------------------------------------------

/// Precomputed uniform-within-piece step grid.
struct SimGrid {
    times: Vec<f64>,
    /// `1.5 |theta|^2 dt` per step.
    step_drift: Vec<f64>,
    /// `|theta| sqrt(dt)` per step.
    step_vol: Vec<f64>,
    /// `|theta|^2 dt` per step.
    step_var: Vec<f64>,
    /// Rate and squared price of risk per step (euler).
    step_rate: Vec<f64>,
    step_theta_sq: Vec<f64>,
    step_dt: Vec<f64>,
    /// `e^{-int_{t_i}^T r}` per grid point.
    disc: Vec<f64>,
}

impl SimGrid {
    fn build(market: &MarketModel, steps_per_piece: usize) -> Result<Self> {
        let pieces = market.grid();
        let n = steps_per_piece * (pieces.len() - 1);
        let mut grid = SimGrid {
            times: Vec::with_capacity(n + 1),
            step_drift: Vec::with_capacity(n),
            step_vol: Vec::with_capacity(n),
            step_var: Vec::with_capacity(n),
            step_rate: Vec::with_capacity(n),
            step_theta_sq: Vec::with_capacity(n),
            step_dt: Vec::with_capacity(n),
            disc: Vec::with_capacity(n + 1),
        };
        grid.times.push(0.0);
        for j in 0..pieces.len() - 1 {
            let theta_sq = market.piece_theta_sq(j)?;
            let rate = market.piece_rate(j);
            let dt = (pieces[j + 1] - pieces[j]) / steps_per_piece as f64;
            for k in 1..=steps_per_piece {
                let t = if k == steps_per_piece {
                    pieces[j + 1]
                } else {
                    pieces[j] + dt * k as f64
                };
                grid.times.push(t);
                grid.step_drift.push(1.5 * theta_sq * dt);
                grid.step_vol.push(theta_sq.sqrt() * dt.sqrt());
                grid.step_var.push(theta_sq * dt);
                grid.step_rate.push(rate);
                grid.step_theta_sq.push(theta_sq);
                grid.step_dt.push(dt);
            }
        }
        let horizon = market.horizon();
        for &t in &grid.times {
            grid.disc.push((-market.rate_integral(t, horizon)?).exp());
        }
        Ok(grid)
    }

    fn n_steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Strategy-level constants shared by every path.
struct PathConsts {
    /// Goal barrier `int_0^T |theta|^2`.
    b: f64,
    /// Bankruptcy barrier.
    c: f64,
    /// `(z - x0 e^{int r}) / (e^b - 1)`; positive above the boundary target.
    k: f64,
    gamma: f64,
    z: f64,
    x0: f64,
}

impl PathConsts {
    fn new(strategy: &EfficientStrategy<'_>) -> Result<Self> {
        let barriers = strategy.barrier_constants()?;
        let k = (strategy.target() - strategy.risk_free_terminal()) / strategy.beta_total().exp_m1();
        Ok(Self {
            b: barriers.goal,
            c: barriers.bankruptcy,
            k,
            gamma: strategy.gamma(),
            z: strategy.target(),
            x0: strategy.initial_wealth(),
        })
    }

    /// Wealth as a function of the driving process at discount factor `disc`.
    #[inline]
    fn wealth(&self, phi: f64, disc: f64) -> f64 {
        disc * (self.gamma - self.k * (self.b - phi).exp())
    }
}

/// Euler-only precomputation: discounted targets and the near-barrier gates
/// that let the inner loop skip the log/exp work when far from a barrier.
struct EulerAux {
    /// `z e^{-int_{t_i}^T r}` per grid point.
    targets: Vec<f64>,
    /// `e^{+int_{t_i}^T r}` per grid point.
    inv_disc: Vec<f64>,
    /// Goal gate per step: skip the bridge when the ceiling gap exceeds this.
    goal_gate: Vec<f64>,
    /// Bankruptcy gate per step: skip when the ceiling gap is below this.
    bank_gate: Vec<f64>,
}

impl EulerAux {
    fn build(grid: &SimGrid, consts: &PathConsts) -> Self {
        let targets = grid.disc.iter().map(|d| consts.z * d).collect();
        let inv_disc = grid.disc.iter().map(|d| 1.0 / d).collect();
        // bridge crossing probability drops below u-resolution once
        // 2 d0 d1 / var > 37 with d = |log-distance to the barrier|
        let goal_gate = grid
            .step_var
            .iter()
            .map(|&v| (consts.gamma - consts.z) * (18.5 * v).sqrt().exp())
            .collect();
        let bank_gate = grid
            .step_var
            .iter()
            .map(|&v| consts.gamma * (-(18.5 * v).sqrt()).exp())
            .collect();
        Self {
            targets,
            inv_disc,
            goal_gate,
            bank_gate,
        }
    }
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

const NOISE_LANE: u64 = 0;
const BRIDGE_LANE: u64 = 1;

/// Per-path RNG: one ChaCha stream per (path, lane), same key for the whole
/// run. Path sets are identical under any execution order or parallelism.
fn path_rng(seed: u64, path: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + lane);
    rng
}

/// Brownian-bridge crossing test for one step: both endpoints on the
/// non-crossing side at distances `d0`, `d1 > 0`, step variance `step_var`,
/// auxiliary uniform `u`. Crossing probability `exp(-2 d0 d1 / step_var)`.
#[inline]
fn bridge_crossed(d0: f64, d1: f64, step_var: f64, u: f64) -> bool {
    let prod = d0 * d1;
    // p < 8.5e-17 once 2 prod / var > 37: below the uniform's resolution,
    // so skip the exp unless u landed in the bottom sliver
    if prod > 18.5 * step_var && u > 1e-16 {
        return false;
    }
    u < (-2.0 * prod / step_var).exp()
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

fn simulate_path_exact(
    grid: &SimGrid,
    consts: &PathConsts,
    config: &SimConfig,
    path: u64,
) -> PathOutcome {
    let mut noise = path_rng(config.seed, path, NOISE_LANE);
    let mut bridge = config
        .bridge_correction
        .then(|| path_rng(config.seed, path, BRIDGE_LANE));

    let mut phi = 0.0_f64;
    let mut goal: Option<f64> = None;
    let mut bank: Option<f64> = None;

    for i in 0..grid.n_steps() {
        let xi: f64 = StandardNormal.sample(&mut noise);
        let next = phi + grid.step_drift[i] + grid.step_vol[i] * xi;

        // lockstep pair of uniforms per step until both events resolve,
        // so each decision always sees the same stream position
        let (ug, ub) = match bridge.as_mut() {
            Some(rng) if goal.is_none() || bank.is_none() => {
                (rng.random::<f64>(), rng.random::<f64>())
            }
            _ => (1.0, 1.0),
        };

        let t1 = grid.times[i + 1];
        if goal.is_none()
            && (next >= consts.b
                || (bridge.is_some()
                    && bridge_crossed(consts.b - phi, consts.b - next, grid.step_var[i], ug)))
        {
            goal = Some(t1);
        }
        if bank.is_none()
            && (next <= consts.c
                || (bridge.is_some()
                    && bridge_crossed(phi - consts.c, next - consts.c, grid.step_var[i], ub)))
        {
            bank = Some(t1);
        }
        phi = next;
    }

    PathOutcome {
        terminal_wealth: consts.wealth(phi, 1.0),
        hitting_time: goal,
        bankruptcy_time: bank,
        which_first: which_first(goal, bank),
    }
}

fn simulate_path_euler(
    grid: &SimGrid,
    consts: &PathConsts,
    aux: &EulerAux,
    config: &SimConfig,
    path: u64,
) -> PathOutcome {
    let mut noise = path_rng(config.seed, path, NOISE_LANE);
    let mut bridge = config
        .bridge_correction
        .then(|| path_rng(config.seed, path, BRIDGE_LANE));

    let mut x = consts.x0;
    let mut goal: Option<f64> = None;
    let mut bank: Option<f64> = None;
    let gap = consts.gamma - consts.z;

    for i in 0..grid.n_steps() {
        let xi: f64 = StandardNormal.sample(&mut noise);
        let y = x - consts.gamma * grid.disc[i];
        let next = x + (grid.step_rate[i] * x - grid.step_theta_sq[i] * y) * grid.step_dt[i]
            - grid.step_vol[i] * y * xi;

        let (ug, ub) = match bridge.as_mut() {
            Some(rng) if goal.is_none() || bank.is_none() => {
                (rng.random::<f64>(), rng.random::<f64>())
            }
            _ => (1.0, 1.0),
        };

        let t1 = grid.times[i + 1];
        // gaps below the riskless ceiling gamma e^{-int r}; positive while
        // the respective barrier has not been touched on the grid
        let w0 = consts.gamma - x * aux.inv_disc[i];
        let w1 = consts.gamma - next * aux.inv_disc[i + 1];

        if goal.is_none()
            && (next >= aux.targets[i + 1]
                || (bridge.is_some()
                    && !(w0 >= aux.goal_gate[i] && w1 >= aux.goal_gate[i] && ug > 1e-16)
                    && bridge_crossed((w0 / gap).ln(), (w1 / gap).ln(), grid.step_var[i], ug)))
        {
            goal = Some(t1);
        }
        // an endpoint above the riskless ceiling (w <= 0) has no finite
        // log-distance to the bankruptcy barrier; treat the step as
        // non-crossing
        if bank.is_none()
            && (next <= 0.0
                || (bridge.is_some()
                    && !(w0 <= aux.bank_gate[i] && w1 <= aux.bank_gate[i] && ub > 1e-16)
                    && w0 > 0.0
                    && w1 > 0.0
                    && bridge_crossed(
                        (consts.gamma / w0).ln(),
                        (consts.gamma / w1).ln(),
                        grid.step_var[i],
                        ub,
                    )))
        {
            bank = Some(t1);
        }
        x = next;
    }

    PathOutcome {
        terminal_wealth: x,
        hitting_time: goal,
        bankruptcy_time: bank,
        which_first: which_first(goal, bank),
    }
}

/// Simulates every path and returns the outcomes in path order.
pub fn run_paths(strategy: &EfficientStrategy<'_>, config: &SimConfig) -> Result<Vec<PathOutcome>> {
    let market = strategy.market();
    config.validate(market.piece_count())?;
    if config.scheme == Scheme::Euler && market.n_stocks() != 1 {
        return Err(Error::EulerMultiAsset {
            m: market.n_stocks(),
        });
    }
    let grid = SimGrid::build(market, config.n_steps)?;
    let consts = PathConsts::new(strategy)?;
    let aux = (config.scheme == Scheme::Euler).then(|| EulerAux::build(&grid, &consts));

    Ok((0..config.n_paths)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| match &aux {
            None => simulate_path_exact(&grid, &consts, config, i as u64),
            Some(aux) => simulate_path_euler(&grid, &consts, aux, config, i as u64),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Diagnostics: raw paths
// ---------------------------------------------------------------------------

/// Discretized paths on the step grid.
#[derive(Debug, Clone)]
pub struct SamplePaths {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

fn check_storage(config: &SimConfig, n_grid: usize) -> Result<()> {
    let total = config.n_paths.checked_mul(n_grid);
    if total.is_none_or(|t| t > MAX_STORED_VALUES) {
        return Err(Error::InvalidConfig(format!(
            "storing {} paths x {n_grid} points exceeds the in-memory path guard",
            config.n_paths
        )));
    }
    Ok(())
}

/// Simulates the driving process `phi` itself and returns the full paths
/// (diagnostics; uses the same noise streams as [`run_paths`]).
///
/// Only requires `theta` to be well-defined, so it also serves degenerate
/// markets with zero price of risk.
pub fn simulate_phi(market: &MarketModel, config: &SimConfig) -> Result<SamplePaths> {
    config.validate(market.piece_count())?;
    let grid = SimGrid::build(market, config.n_steps)?;
    check_storage(config, grid.times.len())?;
    let paths = (0..config.n_paths)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let mut noise = path_rng(config.seed, i as u64, NOISE_LANE);
            let mut path = Vec::with_capacity(grid.times.len());
            let mut phi = 0.0_f64;
            path.push(phi);
            for s in 0..grid.n_steps() {
                let xi: f64 = StandardNormal.sample(&mut noise);
                phi += grid.step_drift[s] + grid.step_vol[s] * xi;
                path.push(phi);
            }
            path
        })
        .collect();
    Ok(SamplePaths {
        times: grid.times,
        paths,
    })
}

/// Maps one discretized `phi` path to the wealth path in closed form.
pub fn wealth_from_phi(
    strategy: &EfficientStrategy<'_>,
    times: &[f64],
    phi: &[f64],
) -> Result<Vec<f64>> {
    if times.len() != phi.len() {
        return Err(Error::InvalidConfig(format!(
            "times ({}) and phi ({}) lengths differ",
            times.len(),
            phi.len()
        )));
    }
    let consts = PathConsts::new(strategy)?;
    let market = strategy.market();
    let horizon = market.horizon();
    times
        .iter()
        .zip(phi)
        .map(|(&t, &p)| {
            let disc = (-market.rate_integral(t, horizon)?).exp();
            Ok(consts.wealth(p, disc))
        })
        .collect()
}

/// Simulates full wealth paths under the configured scheme. With matching
/// seeds the two schemes consume identical normal draws, so their paths are
/// pathwise comparable.
pub fn simulate_wealth_paths(
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<SamplePaths> {
    let market = strategy.market();
    config.validate(market.piece_count())?;
    if config.scheme == Scheme::Euler && market.n_stocks() != 1 {
        return Err(Error::EulerMultiAsset {
            m: market.n_stocks(),
        });
    }
    let grid = SimGrid::build(market, config.n_steps)?;
    check_storage(config, grid.times.len())?;
    let consts = PathConsts::new(strategy)?;

    let paths = (0..config.n_paths)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let mut noise = path_rng(config.seed, i as u64, NOISE_LANE);
            let mut path = Vec::with_capacity(grid.times.len());
            match config.scheme {
                Scheme::ExactY => {
                    let mut phi = 0.0_f64;
                    path.push(consts.wealth(phi, grid.disc[0]));
                    for s in 0..grid.n_steps() {
                        let xi: f64 = StandardNormal.sample(&mut noise);
                        phi += grid.step_drift[s] + grid.step_vol[s] * xi;
                        path.push(consts.wealth(phi, grid.disc[s + 1]));
                    }
                }
                Scheme::Euler => {
                    let mut x = consts.x0;
                    path.push(x);
                    for s in 0..grid.n_steps() {
                        let xi: f64 = StandardNormal.sample(&mut noise);
                        let y = x - consts.gamma * grid.disc[s];
                        x += (grid.step_rate[s] * x - grid.step_theta_sq[s] * y)
                            * grid.step_dt[s]
                            - grid.step_vol[s] * y * xi;
                        path.push(x);
                    }
                }
            }
            path
        })
        .collect();
    Ok(SamplePaths {
        times: grid.times,
        paths,
    })
}

// ---------------------------------------------------------------------------
// Stand-alone crossing detection
// ---------------------------------------------------------------------------

/// Crossing direction for [`detect_crossing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossDir {
    Up,
    Down,
}

/// First crossing time of `level` by a discretized path.
///
/// Grid crossings use weak inequalities and report the grid time; with
/// `bridge_uniforms` supplied (one per step), a step whose endpoints stay on
/// the non-crossing side additionally flags an interior crossing with
/// probability `exp(-2 d0 d1 / step_var)` and reports the step's right
/// endpoint.
pub fn detect_crossing(
    times: &[f64],
    path: &[f64],
    level: f64,
    dir: CrossDir,
    step_var: &[f64],
    bridge_uniforms: Option<&[f64]>,
) -> Option<f64> {
    assert_eq!(times.len(), path.len());
    assert_eq!(step_var.len() + 1, path.len());
    if let Some(u) = bridge_uniforms {
        assert_eq!(u.len() + 1, path.len());
    }
    let dist = |v: f64| match dir {
        CrossDir::Up => level - v,
        CrossDir::Down => v - level,
    };
    if dist(path[0]) <= 0.0 {
        return Some(times[0]);
    }
    for i in 0..step_var.len() {
        let d0 = dist(path[i]);
        let d1 = dist(path[i + 1]);
        if d1 <= 0.0 {
            return Some(times[i + 1]);
        }
        if let Some(u) = bridge_uniforms {
            if bridge_crossed(d0, d1, step_var[i], u[i]) {
                return Some(times[i + 1]);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Proportion of paths that reach the discounted target by the horizon.
pub fn goal_prob_report(
    outcomes: &[PathOutcome],
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<McReport> {
    let hits = outcomes.iter().filter(|o| o.hitting_time.is_some()).count();
    let analytic = crate::analytics::goal_prob(strategy.beta_total())?;
    Ok(McReport::proportion(
        "goal_prob",
        hits,
        config,
        Some(analytic),
    ))
}

pub fn mc_goal_prob(strategy: &EfficientStrategy<'_>, config: &SimConfig) -> Result<McReport> {
    let outcomes = run_paths(strategy, config)?;
    goal_prob_report(&outcomes, strategy, config)
}

fn sample_moments(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, 0.0);
    }
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let variance = m2 / (n - 1) as f64;
    m2 /= n as f64;
    m4 /= n as f64;
    // asymptotic variance of the sample variance, no normality assumption
    let var_of_var = (m4 - m2 * m2 * (n - 3) as f64 / (n - 1) as f64) / n as f64;
    (mean, variance, var_of_var.max(0.0).sqrt())
}

/// Sample mean and variance of the unstopped terminal wealth, with the
/// target and the closed-form minimum variance as references.
pub fn terminal_moments_report(
    outcomes: &[PathOutcome],
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> MomentsReport {
    let n = outcomes.len();
    let (mean, variance, se_var) = sample_moments(outcomes.iter().map(|o| o.terminal_wealth), n);
    let se_mean = if n > 1 {
        (variance / n as f64).sqrt()
    } else {
        0.0
    };
    MomentsReport {
        mean: McReport::new(
            "terminal_mean",
            mean,
            se_mean,
            config,
            Some(strategy.target()),
        ),
        variance: McReport::new(
            "terminal_variance",
            variance,
            se_var,
            config,
            Some(strategy.min_variance()),
        ),
    }
}

pub fn mc_terminal_moments(
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<MomentsReport> {
    let outcomes = run_paths(strategy, config)?;
    Ok(terminal_moments_report(&outcomes, strategy, config))
}

/// Stop-at-the-goal policy: on goal-hitting paths the wealth moves to the
/// bank account and finishes at exactly the target; other paths keep the
/// unstopped terminal wealth (strictly below the target).
pub fn stopped_report(
    outcomes: &[PathOutcome],
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<StoppedReport> {
    let z = strategy.target();
    let stopped_terminal = |o: &PathOutcome| {
        if o.hitting_time.is_some() {
            z
        } else {
            o.terminal_wealth
        }
    };
    let successes = outcomes
        .iter()
        .filter(|o| stopped_terminal(o) >= z)
        .count();
    let n_stopped = outcomes.iter().filter(|o| o.hitting_time.is_some()).count();
    let n = outcomes.len();
    let mean = outcomes.iter().map(&stopped_terminal).sum::<f64>() / n as f64;
    let var = if n > 1 {
        outcomes
            .iter()
            .map(|o| (stopped_terminal(o) - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in outcomes {
        let v = stopped_terminal(o);
        min = min.min(v);
        max = max.max(v);
    }
    let analytic = crate::analytics::goal_prob(strategy.beta_total())?;
    Ok(StoppedReport {
        success: McReport::proportion("stopped_success", successes, config, Some(analytic)),
        terminal_mean: mean,
        terminal_std: var.sqrt(),
        terminal_min: min,
        terminal_max: max,
        n_stopped,
    })
}

pub fn simulate_stopped(
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<StoppedReport> {
    let outcomes = run_paths(strategy, config)?;
    stopped_report(&outcomes, strategy, config)
}

/// Bankruptcy probabilities with the one-sided first-passage oracle as the
/// analytic reference for the marginal probability.
pub fn bankruptcy_report(
    outcomes: &[PathOutcome],
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<BankruptcyReport> {
    let barriers = strategy.barrier_constants()?;
    let beta = strategy.beta_total();
    // phi falling to c is -phi (drift -3/2 per unit of the beta clock)
    // rising to -c
    let analytic =
        crate::analytics::reflection_hitting_prob(-1.5, -barriers.bankruptcy, beta)?;
    let n_bank = outcomes
        .iter()
        .filter(|o| o.bankruptcy_time.is_some())
        .count();
    let n_bank_first = outcomes
        .iter()
        .filter(|o| o.which_first == WhichFirst::Bankruptcy)
        .count();
    let n_goal_first = outcomes
        .iter()
        .filter(|o| o.which_first == WhichFirst::Goal)
        .count();
    let n_neither = outcomes.len() - n_bank_first - n_goal_first;
    Ok(BankruptcyReport {
        bankruptcy: McReport::proportion("bankruptcy", n_bank, config, Some(analytic)),
        bankruptcy_first: McReport::proportion("bankruptcy_before_goal", n_bank_first, config, None),
        goal_first: McReport::proportion("goal_before_bankruptcy", n_goal_first, config, None),
        neither_fraction: n_neither as f64 / outcomes.len() as f64,
    })
}

pub fn mc_bankruptcy(
    strategy: &EfficientStrategy<'_>,
    config: &SimConfig,
) -> Result<BankruptcyReport> {
    let outcomes = run_paths(strategy, config)?;
    bankruptcy_report(&outcomes, strategy, config)
}

/// Per-path dump: `path_id,tau,bankruptcy_time,terminal_wealth,which_first`.
pub fn write_path_csv(outcomes: &[PathOutcome], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "path_id,tau,bankruptcy_time,terminal_wealth,which_first")?;
    let opt = |t: Option<f64>| t.map(crate::numfmt::sig12).unwrap_or_default();
    for (i, o) in outcomes.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{}",
            opt(o.hitting_time),
            opt(o.bankruptcy_time),
            crate::numfmt::sig12(o.terminal_wealth),
            o.which_first
        )?;
    }
    Ok(())
}
