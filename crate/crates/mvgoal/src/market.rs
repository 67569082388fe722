//! Deterministic market model: a bank account plus `m` stocks with
//! piecewise-constant coefficient curves, uniform-ellipticity and
//! price-of-risk validation, and exact time integrals of the short rate
//! and of the squared market price of risk.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::Path;

use crate::error::{Error, Result};

/// Condition-number threshold above which a volatility matrix is treated as
/// effectively singular (uniform-ellipticity violation).
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default ellipticity threshold used when a market file does not set one.
pub const DEFAULT_ELLIPTICITY: f64 = 1e-8;

/// A piecewise-constant deterministic function of time on `[0, T]`.
///
/// `breakpoints` has `n + 1` strictly increasing entries starting at `0`;
/// `values[i]` holds on the right-open interval
/// `[breakpoints[i], breakpoints[i + 1])`, with the final interval closed
/// at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl CoefficientCurve {
    /// Constant value over `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        Self::piecewise(vec![0.0, horizon], vec![value])
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidCurve(
                "need at least two breakpoints".into(),
            ));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidCurve(format!(
                "{} breakpoints require {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidCurve(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        if !breakpoints.iter().all(|b| b.is_finite())
            || !values.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidCurve("non-finite entry".into()));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidCurve(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn piece_index(&self, t: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(self.values.len() - 1)
    }

    /// Value at `t`; the last interval is closed at the horizon.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon(),
            });
        }
        Ok(self.values[self.piece_index(t)])
    }

    /// Exact integral over `[s, t]` (piecewise sum, no quadrature).
    pub fn integral(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::InvalidInterval { s, t });
        }
        if s < 0.0 || t > self.horizon() {
            return Err(Error::TimeOutOfRange {
                t: if s < 0.0 { s } else { t },
                horizon: self.horizon(),
            });
        }
        let mut total = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i].max(s);
            let hi = self.breakpoints[i + 1].min(t);
            if hi > lo {
                total += v * (hi - lo);
            }
        }
        Ok(total)
    }

    /// Resample onto a refined grid (must contain all existing breakpoints).
    fn refined(&self, grid: &[f64]) -> Self {
        let values = grid[..grid.len() - 1]
            .iter()
            .map(|&lo| self.values[self.piece_index(lo)])
            .collect();
        Self {
            breakpoints: grid.to_vec(),
            values,
        }
    }
}

/// Sorted union of the breakpoint grids of several curves.
fn merge_breakpoints<'a>(curves: impl Iterator<Item = &'a CoefficientCurve>) -> Vec<f64> {
    let mut grid: Vec<f64> = curves.flat_map(|c| c.breakpoints.iter().copied()).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// One risky asset: appreciation rate and a row of the volatility matrix.
#[derive(Debug, Clone)]
pub struct Stock {
    pub appreciation: CoefficientCurve,
    pub volatility_row: Vec<CoefficientCurve>,
}

/// Per-piece derived quantities on the merged breakpoint grid.
#[derive(Debug, Clone)]
struct MarketDerived {
    /// Merged grid, `0 = g[0] < ... < g[n] = T`.
    grid: Vec<f64>,
    /// Short rate per piece.
    rate: Vec<f64>,
    /// Excess appreciation vector `B` per piece.
    excess: Vec<Vec<f64>>,
    /// Market price of risk per piece; `None` when the volatility matrix is
    /// effectively singular there.
    theta: Vec<Option<Vec<f64>>>,
    /// `|theta|^2` per piece (0 where theta is unavailable).
    theta_sq: Vec<f64>,
    /// Smallest eigenvalue of `sigma sigma'` per piece.
    min_eigenvalue: Vec<f64>,
    /// 2-norm condition number of `sigma` per piece.
    condition: Vec<f64>,
    /// Cumulative `int_0^{g[i]} |theta|^2` at grid points.
    beta_cum: Vec<f64>,
    /// Cumulative `int_0^{g[i]} r` at grid points.
    rate_cum: Vec<f64>,
}

/// A deterministic market on `[0, T]`: bank account with rate `r(t)` and
/// `m` stocks with appreciation `mu_i(t)` and volatility `sigma_ij(t)`.
///
/// Immutable after construction; all derived per-piece quantities are
/// precomputed on the merged breakpoint grid, so the struct is safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct MarketModel {
    horizon: f64,
    rate: CoefficientCurve,
    stocks: Vec<Stock>,
    ellipticity: f64,
    derived: MarketDerived,
}

/// Outcome of checking one model assumption.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub passed: bool,
    pub detail: String,
}

/// Validation never aborts: both assumptions are always reported, plus any
/// notes about extensions beyond the baseline model (e.g. zero rate pieces).
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Uniform ellipticity: smallest eigenvalue of `sigma sigma'` at least
    /// the ellipticity threshold on every piece.
    pub ellipticity: AssumptionCheck,
    /// Non-degenerate price of risk: `0 < int_0^T |theta|^2 dt < inf`.
    pub price_of_risk: AssumptionCheck,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.ellipticity.passed && self.price_of_risk.passed
    }
}

impl MarketModel {
    /// Builds the model and precomputes derived quantities.
    ///
    /// Structural requirements are enforced here (matching horizons, square
    /// volatility, nonnegative rate). Assumption checks are *not* enforced:
    /// construction succeeds for e.g. a singular volatility matrix, and
    /// [`MarketModel::validate`] reports the violation.
    pub fn new(
        horizon: f64,
        rate: CoefficientCurve,
        stocks: Vec<Stock>,
        ellipticity: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidMarket(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if !(ellipticity.is_finite() && ellipticity > 0.0) {
            return Err(Error::InvalidMarket(format!(
                "ellipticity threshold must be positive, got {ellipticity}"
            )));
        }
        if stocks.is_empty() {
            return Err(Error::InvalidMarket("need at least one stock".into()));
        }
        let m = stocks.len();
        for (i, s) in stocks.iter().enumerate() {
            if s.volatility_row.len() != m {
                return Err(Error::InvalidMarket(format!(
                    "stock {i}: volatility row has {} entries, expected {m}",
                    s.volatility_row.len()
                )));
            }
        }
        let mut all_curves: Vec<&CoefficientCurve> = vec![&rate];
        for s in &stocks {
            all_curves.push(&s.appreciation);
            all_curves.extend(s.volatility_row.iter());
        }
        for c in &all_curves {
            if c.horizon() != horizon {
                return Err(Error::InvalidMarket(format!(
                    "coefficient horizon {} differs from market horizon {horizon}",
                    c.horizon()
                )));
            }
        }
        if rate.values().iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidMarket(
                "negative short rate is not supported".into(),
            ));
        }

        let grid = merge_breakpoints(all_curves.into_iter());
        let rate_refined = rate.refined(&grid);
        let mu: Vec<CoefficientCurve> = stocks
            .iter()
            .map(|s| s.appreciation.refined(&grid))
            .collect();
        let sigma: Vec<Vec<CoefficientCurve>> = stocks
            .iter()
            .map(|s| s.volatility_row.iter().map(|c| c.refined(&grid)).collect())
            .collect();

        let n_pieces = grid.len() - 1;
        let mut derived = MarketDerived {
            grid: grid.clone(),
            rate: rate_refined.values().to_vec(),
            excess: Vec::with_capacity(n_pieces),
            theta: Vec::with_capacity(n_pieces),
            theta_sq: Vec::with_capacity(n_pieces),
            min_eigenvalue: Vec::with_capacity(n_pieces),
            condition: Vec::with_capacity(n_pieces),
            beta_cum: vec![0.0; n_pieces + 1],
            rate_cum: vec![0.0; n_pieces + 1],
        };

        for j in 0..n_pieces {
            let r = derived.rate[j];
            let excess: Vec<f64> = mu.iter().map(|c| c.values()[j] - r).collect();
            let sig = DMatrix::from_fn(m, m, |row, col| sigma[row][col].values()[j]);

            let cov = &sig * sig.transpose();
            let min_eig = cov
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));

            let svd = sig.clone().svd(false, false);
            let (sv_max, sv_min) = svd
                .singular_values
                .iter()
                .fold((0.0_f64, f64::INFINITY), |(hi, lo), &s| {
                    (hi.max(s), lo.min(s))
                });
            let cond = if sv_min > 0.0 {
                sv_max / sv_min
            } else {
                f64::INFINITY
            };

            // theta = B (sigma')^{-1}, i.e. sigma theta' = B'.
            let theta = if cond <= CONDITION_LIMIT {
                sig.clone()
                    .lu()
                    .solve(&DVector::from_column_slice(&excess))
                    .map(|v| v.iter().copied().collect::<Vec<f64>>())
            } else {
                None
            };
            let theta_sq = theta
                .as_ref()
                .map_or(0.0, |th| th.iter().map(|x| x * x).sum());

            let dt = grid[j + 1] - grid[j];
            derived.beta_cum[j + 1] = derived.beta_cum[j] + theta_sq * dt;
            derived.rate_cum[j + 1] = derived.rate_cum[j] + r * dt;
            derived.excess.push(excess);
            derived.theta.push(theta);
            derived.theta_sq.push(theta_sq);
            derived.min_eigenvalue.push(min_eig);
            derived.condition.push(cond);
        }

        Ok(Self {
            horizon,
            rate,
            stocks,
            ellipticity,
            derived,
        })
    }

    /// Single-stock market with constant coefficients.
    pub fn single_stock(horizon: f64, rate: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::new(
            horizon,
            CoefficientCurve::constant(rate, horizon)?,
            vec![Stock {
                appreciation: CoefficientCurve::constant(mu, horizon)?,
                volatility_row: vec![CoefficientCurve::constant(sigma, horizon)?],
            }],
            DEFAULT_ELLIPTICITY,
        )
    }

    /// Single-stock market with a prescribed constant market price of risk
    /// (volatility fixed at 0.15, appreciation backed out).
    pub fn with_price_of_risk(horizon: f64, rate: f64, theta: f64) -> Result<Self> {
        let sigma = 0.15;
        Self::single_stock(horizon, rate, rate + theta * sigma, sigma)
    }

    /// Built-in reference market: `T = 1`, `r = 0.06`, one stock with
    /// `mu = 0.12`, `sigma = 0.15`, hence price of risk `0.4` and
    /// `int_0^T |theta|^2 = 0.16`.
    pub fn reference() -> Self {
        Self::single_stock(1.0, 0.06, 0.12, 0.15).expect("reference market is well-formed")
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn rate_curve(&self) -> &CoefficientCurve {
        &self.rate
    }

    pub fn stocks(&self) -> &[Stock] {
        &self.stocks
    }

    /// Merged breakpoint grid shared by all coefficients.
    pub fn grid(&self) -> &[f64] {
        &self.derived.grid
    }

    pub fn piece_count(&self) -> usize {
        self.derived.grid.len() - 1
    }

    pub fn piece_rate(&self, piece: usize) -> f64 {
        self.derived.rate[piece]
    }

    /// `|theta|^2` on a piece; errors when the volatility matrix is
    /// effectively singular there.
    pub fn piece_theta_sq(&self, piece: usize) -> Result<f64> {
        if self.derived.theta[piece].is_none() {
            return Err(self.singular_error(piece));
        }
        Ok(self.derived.theta_sq[piece])
    }

    fn singular_error(&self, piece: usize) -> Error {
        Error::SingularVolatility {
            start: self.derived.grid[piece],
            end: self.derived.grid[piece + 1],
            cond: self.derived.condition[piece],
        }
    }

    fn piece_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let idx = self.derived.grid.partition_point(|&b| b <= t);
        Ok(idx.saturating_sub(1).min(self.piece_count() - 1))
    }

    /// Excess appreciation vector `B(t) = (mu_i(t) - r(t))_i`.
    pub fn excess_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.derived.excess[self.piece_index(t)?].clone())
    }

    /// Volatility matrix at `t`.
    pub fn sigma_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = self.n_stocks();
        let mut out = DMatrix::zeros(m, m);
        for (i, s) in self.stocks.iter().enumerate() {
            for (j, c) in s.volatility_row.iter().enumerate() {
                out[(i, j)] = c.value_at(t)?;
            }
        }
        Ok(out)
    }

    /// Market price of risk `theta(t) = B(t) (sigma(t)')^{-1}`.
    pub fn theta_at(&self, t: f64) -> Result<Vec<f64>> {
        let piece = self.piece_index(t)?;
        self.derived.theta[piece]
            .clone()
            .ok_or_else(|| self.singular_error(piece))
    }

    /// `|theta(t)|^2`.
    pub fn theta_sq_at(&self, t: f64) -> Result<f64> {
        let piece = self.piece_index(t)?;
        self.piece_theta_sq(piece)
    }

    /// Exact `int_0^t |theta(s)|^2 ds`.
    pub fn beta(&self, t: f64) -> Result<f64> {
        let piece = self.piece_index(t)?;
        for j in 0..=piece {
            if self.derived.theta[j].is_none() && self.derived.grid[j] < t {
                return Err(self.singular_error(j));
            }
        }
        let partial = self.derived.theta_sq[piece] * (t - self.derived.grid[piece]);
        Ok(self.derived.beta_cum[piece] + partial)
    }

    /// `int_0^T |theta(s)|^2 ds`, the single market statistic driving all
    /// goal probabilities.
    pub fn beta_total(&self) -> Result<f64> {
        self.beta(self.horizon)
    }

    /// `int_0^t |theta|^2` extended beyond the horizon by the final piece
    /// value (used for horizon scans).
    pub fn beta_extended(&self, t: f64) -> Result<f64> {
        if t <= self.horizon {
            return self.beta(t);
        }
        let last = self.piece_count() - 1;
        Ok(self.beta_total()? + self.piece_theta_sq(last)? * (t - self.horizon))
    }

    /// Exact `int_s^t r(u) du`.
    pub fn rate_integral(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::InvalidInterval { s, t });
        }
        self.rate.integral(s, t)
    }

    /// Risk-free growth factor `e^{int_s^t r}`.
    pub fn growth(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.rate_integral(s, t)?.exp())
    }

    /// Checks the two model assumptions; reports, never aborts.
    pub fn validate(&self) -> ValidationReport {
        let delta = self.ellipticity;
        let mut worst_eig = f64::INFINITY;
        let mut offender: Option<usize> = None;
        for j in 0..self.piece_count() {
            let eig = self.derived.min_eigenvalue[j];
            let bad = eig < delta || self.derived.condition[j] > CONDITION_LIMIT;
            if bad && offender.is_none() {
                offender = Some(j);
            }
            worst_eig = worst_eig.min(eig);
        }
        let ellipticity = match offender {
            None => AssumptionCheck {
                passed: true,
                detail: format!(
                    "min eigenvalue of sigma sigma' is {worst_eig:.6e} >= {delta:.1e} on every piece"
                ),
            },
            Some(j) => AssumptionCheck {
                passed: false,
                detail: format!(
                    "violated on [{}, {}): min eigenvalue {:.6e} (threshold {:.1e}), condition number {:.3e}",
                    self.derived.grid[j],
                    self.derived.grid[j + 1],
                    self.derived.min_eigenvalue[j],
                    delta,
                    self.derived.condition[j],
                ),
            },
        };

        let price_of_risk = match self.beta_total() {
            Err(_) => AssumptionCheck {
                passed: false,
                detail: "price of risk undefined on a singular piece".into(),
            },
            Ok(b) if b > 0.0 => AssumptionCheck {
                passed: true,
                detail: format!("int_0^T |theta|^2 dt = {b:.12}"),
            },
            Ok(b) => AssumptionCheck {
                passed: false,
                detail: format!("int_0^T |theta|^2 dt = {b} (must be strictly positive)"),
            },
        };

        let mut notes = Vec::new();
        if self.derived.rate.contains(&0.0) {
            notes.push(
                "short rate is zero on some piece; discounting degenerates to the identity \
                 there (extension beyond the positive-rate model)"
                    .into(),
            );
        }

        ValidationReport {
            ellipticity,
            price_of_risk,
            notes,
        }
    }
}

// ---------------------------------------------------------------------------
// Market specification files
// ---------------------------------------------------------------------------

/// Coefficient entry in a market file: either a scalar shorthand for a
/// constant, or an explicit `{breakpoints, values}` curve.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CoeffSpec {
    Constant(f64),
    Curve {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl CoeffSpec {
    fn into_curve(self, horizon: f64) -> Result<CoefficientCurve> {
        match self {
            CoeffSpec::Constant(v) => CoefficientCurve::constant(v, horizon),
            CoeffSpec::Curve {
                breakpoints,
                values,
            } => {
                let curve = CoefficientCurve::piecewise(breakpoints, values)?;
                if curve.horizon() != horizon {
                    return Err(Error::MarketSpec(format!(
                        "curve ends at {} but the market horizon is {horizon}",
                        curve.horizon()
                    )));
                }
                Ok(curve)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StockSpec {
    mu: CoeffSpec,
    sigma_row: Vec<CoeffSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSpecFile {
    horizon: f64,
    rate: CoeffSpec,
    stocks: Vec<StockSpec>,
    #[serde(default)]
    delta: Option<f64>,
}

impl MarketModel {
    /// Parses a market specification from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: MarketSpecFile =
            serde_json::from_str(text).map_err(|e| Error::MarketSpec(e.to_string()))?;
        let horizon = spec.horizon;
        let rate = spec.rate.into_curve(horizon)?;
        let stocks = spec
            .stocks
            .into_iter()
            .map(|s| {
                Ok(Stock {
                    appreciation: s.mu.into_curve(horizon)?,
                    volatility_row: s
                        .sigma_row
                        .into_iter()
                        .map(|c| c.into_curve(horizon))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            horizon,
            rate,
            stocks,
            spec.delta.unwrap_or(DEFAULT_ELLIPTICITY),
        )
    }

    /// Parses a market specification from a JSON file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_piece_theta_market() -> MarketModel {
        // |theta|^2 = 0.16 on [0, 0.5), 0.04 on [0.5, 1]: theta = 0.4 then 0.2.
        let horizon = 1.0;
        let sigma = 0.15;
        let rate = CoefficientCurve::constant(0.06, horizon).unwrap();
        let mu = CoefficientCurve::piecewise(
            vec![0.0, 0.5, 1.0],
            vec![0.06 + 0.4 * sigma, 0.06 + 0.2 * sigma],
        )
        .unwrap();
        MarketModel::new(
            horizon,
            rate,
            vec![Stock {
                appreciation: mu,
                volatility_row: vec![CoefficientCurve::constant(sigma, horizon).unwrap()],
            }],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap()
    }

    #[test]
    fn curve_lookup_and_integral() {
        let c = CoefficientCurve::piecewise(vec![0.0, 0.5, 1.0], vec![0.04, 0.08]).unwrap();
        assert_eq!(c.value_at(0.0).unwrap(), 0.04);
        assert_eq!(c.value_at(0.49).unwrap(), 0.04);
        assert_eq!(c.value_at(0.5).unwrap(), 0.08);
        assert_eq!(c.value_at(1.0).unwrap(), 0.08); // closed at the horizon
        assert!((c.integral(0.0, 1.0).unwrap() - 0.06).abs() < 1e-15);
        assert_eq!(c.integral(0.3, 0.3).unwrap(), 0.0);
        assert!(c.integral(0.7, 0.2).is_err());
        assert!(c.value_at(1.5).is_err());
    }

    #[test]
    fn curve_structural_errors() {
        assert!(CoefficientCurve::piecewise(vec![0.5, 1.0], vec![1.0]).is_err());
        assert!(CoefficientCurve::piecewise(vec![0.0, 1.0, 0.5], vec![1.0, 2.0]).is_err());
        assert!(CoefficientCurve::piecewise(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(CoefficientCurve::piecewise(vec![0.0, f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn reference_market_passes_validation() {
        let market = MarketModel::reference();
        let report = market.validate();
        assert!(report.all_passed(), "{report:?}");
        // 1x1 case: min eigenvalue is sigma^2 = 0.0225.
        assert!(report.ellipticity.detail.contains("2.25"));

        // same market under a coarse threshold of 0.01 still passes;
        // a threshold above sigma^2 fails with the offending interval named
        let horizon = 1.0;
        let stock = || Stock {
            appreciation: CoefficientCurve::constant(0.12, horizon).unwrap(),
            volatility_row: vec![CoefficientCurve::constant(0.15, horizon).unwrap()],
        };
        let rate = || CoefficientCurve::constant(0.06, horizon).unwrap();
        let coarse = MarketModel::new(horizon, rate(), vec![stock()], 0.01).unwrap();
        assert!(coarse.validate().ellipticity.passed);
        let strict = MarketModel::new(horizon, rate(), vec![stock()], 0.03).unwrap();
        let check = strict.validate().ellipticity;
        assert!(!check.passed);
        assert!(check.detail.contains("[0, 1)"), "{}", check.detail);
    }

    #[test]
    fn zero_excess_fails_price_of_risk() {
        let market = MarketModel::single_stock(1.0, 0.06, 0.06, 0.15).unwrap();
        let report = market.validate();
        assert!(report.ellipticity.passed);
        assert!(!report.price_of_risk.passed);
        assert_eq!(market.beta_total().unwrap(), 0.0);
        assert_eq!(market.theta_at(0.3).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_piece_beta_is_exact() {
        let market = two_piece_theta_market();
        assert!(market.validate().all_passed());
        assert!((market.beta_total().unwrap() - 0.10).abs() < 1e-15);
        assert!((market.beta(0.5).unwrap() - 0.08).abs() < 1e-15);
        assert_eq!(market.beta(0.0).unwrap(), 0.0);
    }

    #[test]
    fn theta_single_and_identity_cases() {
        let market = MarketModel::reference();
        let th = market.theta_at(0.2).unwrap();
        assert!((th[0] - 0.4).abs() < 1e-14);

        // m = 2 with identity volatility: theta equals the excess vector.
        let horizon = 1.0;
        let ident = |v: f64| CoefficientCurve::constant(v, horizon).unwrap();
        let market = MarketModel::new(
            horizon,
            ident(0.02),
            vec![
                Stock {
                    appreciation: ident(0.02 + 0.07),
                    volatility_row: vec![ident(1.0), ident(0.0)],
                },
                Stock {
                    appreciation: ident(0.02 + 0.03),
                    volatility_row: vec![ident(0.0), ident(1.0)],
                },
            ],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap();
        let th = market.theta_at(0.5).unwrap();
        assert!((th[0] - 0.07).abs() < 1e-14);
        assert!((th[1] - 0.03).abs() < 1e-14);
    }

    #[test]
    fn theta_times_sigma_transpose_recovers_excess() {
        let horizon = 2.0;
        let c = |v: f64| CoefficientCurve::constant(v, horizon).unwrap();
        let market = MarketModel::new(
            horizon,
            c(0.03),
            vec![
                Stock {
                    appreciation: c(0.10),
                    volatility_row: vec![c(0.20), c(0.05)],
                },
                Stock {
                    appreciation: c(0.07),
                    volatility_row: vec![c(0.04), c(0.25)],
                },
            ],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap();
        let t = 1.3;
        let theta = market.theta_at(t).unwrap();
        let sigma = market.sigma_at(t).unwrap();
        let excess = market.excess_at(t).unwrap();
        for i in 0..2 {
            let recovered: f64 = (0..2).map(|j| theta[j] * sigma[(i, j)]).sum();
            assert!(
                (recovered - excess[i]).abs() < 1e-12,
                "component {i}: {recovered} vs {}",
                excess[i]
            );
        }
    }

    #[test]
    fn singular_volatility_is_reported_and_blocks_theta() {
        let horizon = 1.0;
        let c = |v: f64| CoefficientCurve::constant(v, horizon).unwrap();
        // Second row is a multiple of the first: rank one.
        let market = MarketModel::new(
            horizon,
            c(0.03),
            vec![
                Stock {
                    appreciation: c(0.08),
                    volatility_row: vec![c(0.2), c(0.1)],
                },
                Stock {
                    appreciation: c(0.09),
                    volatility_row: vec![c(0.4), c(0.2)],
                },
            ],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap();
        let report = market.validate();
        assert!(!report.ellipticity.passed);
        assert!(!report.price_of_risk.passed);
        assert!(matches!(
            market.theta_at(0.5),
            Err(Error::SingularVolatility { .. })
        ));
        assert!(market.beta(0.5).is_err());
    }

    #[test]
    fn rate_integral_examples() {
        let market = MarketModel::reference();
        assert!((market.rate_integral(0.0, 1.0).unwrap() - 0.06).abs() < 1e-15);
        assert_eq!(market.rate_integral(0.4, 0.4).unwrap(), 0.0);
        assert!(market.rate_integral(0.8, 0.2).is_err());

        let rate = CoefficientCurve::piecewise(vec![0.0, 0.5, 1.0], vec![0.04, 0.08]).unwrap();
        let market = MarketModel::new(
            1.0,
            rate,
            vec![Stock {
                appreciation: CoefficientCurve::constant(0.12, 1.0).unwrap(),
                volatility_row: vec![CoefficientCurve::constant(0.15, 1.0).unwrap()],
            }],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap();
        assert!((market.rate_integral(0.0, 1.0).unwrap() - 0.06).abs() < 1e-15);
    }

    #[test]
    fn beta_is_additive_over_splits() {
        let market = two_piece_theta_market();
        for split in [0.1, 0.25, 0.5, 0.513, 0.9] {
            let left = market.beta(split).unwrap();
            let total = market.beta_total().unwrap();
            let right: f64 = {
                // integral over [split, T] computed piecewise by hand
                let ts = market.grid();
                let mut acc = 0.0;
                for j in 0..market.piece_count() {
                    let lo = ts[j].max(split);
                    let hi = ts[j + 1];
                    if hi > lo {
                        acc += market.piece_theta_sq(j).unwrap() * (hi - lo);
                    }
                }
                acc
            };
            assert!(
                (left + right - total).abs() < 1e-15,
                "split {split}: {left} + {right} != {total}"
            );
        }
    }

    #[test]
    fn refining_the_grid_changes_nothing() {
        let coarse = two_piece_theta_market();
        // Same market expressed on a finer mu grid with repeated values.
        let horizon = 1.0;
        let sigma = 0.15;
        let mu = CoefficientCurve::piecewise(
            vec![0.0, 0.2, 0.5, 0.77, 1.0],
            vec![0.12, 0.12, 0.09, 0.09],
        )
        .unwrap();
        let fine = MarketModel::new(
            horizon,
            CoefficientCurve::constant(0.06, horizon).unwrap(),
            vec![Stock {
                appreciation: mu,
                volatility_row: vec![CoefficientCurve::constant(sigma, horizon).unwrap()],
            }],
            DEFAULT_ELLIPTICITY,
        )
        .unwrap();
        for t in [0.0, 0.2, 0.35, 0.5, 0.8, 1.0] {
            assert!(
                (coarse.beta(t).unwrap() - fine.beta(t).unwrap()).abs() < 1e-15,
                "beta mismatch at {t}"
            );
            assert!(
                (coarse.rate_integral(0.0, t).unwrap() - fine.rate_integral(0.0, t).unwrap())
                    .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn json_parsing_round_trip() {
        let text = r#"{
            "horizon": 1.0,
            "rate": 0.06,
            "stocks": [
                { "mu": { "breakpoints": [0.0, 0.5, 1.0], "values": [0.12, 0.09] },
                  "sigma_row": [0.15] }
            ],
            "delta": 1e-8
        }"#;
        let market = MarketModel::from_json_str(text).unwrap();
        assert_eq!(market.n_stocks(), 1);
        assert!((market.beta_total().unwrap() - 0.10).abs() < 1e-15);

        // scalar shorthand everywhere
        let market = MarketModel::from_json_str(
            r#"{"horizon": 1.0, "rate": 0.06, "stocks": [{"mu": 0.12, "sigma_row": [0.15]}]}"#,
        )
        .unwrap();
        assert!((market.theta_at(0.0).unwrap()[0] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn json_parsing_rejects_malformed_input() {
        for text in [
            r#"{"horizon": 1.0, "rate": 0.06}"#,
            r#"{"horizon": 1.0, "rate": -0.01, "stocks": [{"mu": 0.1, "sigma_row": [0.2]}]}"#,
            r#"{"horizon": 1.0, "rate": 0.06, "stocks": [{"mu": 0.1, "sigma_row": [0.2, 0.3]}]}"#,
            r#"{"horizon": 1.0, "rate": {"breakpoints": [0.0, 0.7], "values": [0.06]},
                "stocks": [{"mu": 0.1, "sigma_row": [0.2]}]}"#,
            r#"{"horizon": 1.0, "rate": 0.06, "stocks": [{"mu": 0.1, "sigma_row": [0.2]}],
                "unknown_key": 3}"#,
        ] {
            assert!(MarketModel::from_json_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn zero_rate_is_permitted_with_a_note() {
        let market = MarketModel::single_stock(1.0, 0.0, 0.06, 0.15).unwrap();
        let report = market.validate();
        assert!(report.all_passed());
        assert!(!report.notes.is_empty());
        assert_eq!(market.growth(0.0, 1.0).unwrap(), 1.0);
    }
}
