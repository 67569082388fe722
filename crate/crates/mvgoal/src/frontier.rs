//! The variance-minimizing feedback strategy for a prescribed expected
//! terminal wealth: the scaling constant `gamma`, the affine feedback
//! allocation, the minimum variance, and the barrier levels at which the
//! driving process corresponds to goal-hitting and to bankruptcy.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Barrier levels for the scalar driving process
/// `phi(t) = (3/2) int_0^t |theta|^2 + int_0^t theta dW`.
///
/// Wealth touches the discounted target exactly when `phi` reaches `goal`,
/// and touches zero exactly when `phi` falls to `bankruptcy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConstants {
    /// `int_0^T |theta|^2 dt`; positive, independent of the target.
    pub goal: f64,
    /// `goal + ln(1 - z/gamma)`; finite and below `goal`, negative whenever
    /// the initial wealth is positive.
    pub bankruptcy: f64,
}

/// A mean-variance efficient strategy: initial wealth `x0`, target expected
/// terminal wealth `z`, and the derived feedback rule.
///
/// Immutable; every operation is a pure function of `(self, t, x)`.
#[derive(Debug, Clone)]
pub struct EfficientStrategy<'a> {
    market: &'a MarketModel,
    x0: f64,
    z: f64,
    /// Risk-free terminal growth of the initial wealth, `x0 e^{int_0^T r}`.
    floor: f64,
    gamma: f64,
    beta_total: f64,
}

impl<'a> EfficientStrategy<'a> {
    /// Builds the strategy for target `z >= x0 e^{int_0^T r}`.
    ///
    /// Requires a strictly positive `int_0^T |theta|^2` (the denominator of
    /// `gamma`); the boundary target `z = x0 e^{int_0^T r}` is accepted and
    /// yields `gamma = z` with identically zero stock allocation.
    pub fn new(market: &'a MarketModel, x0: f64, z: f64) -> Result<Self> {
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(Error::InvalidStrategy(format!(
                "initial wealth must be positive, got {x0}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::InvalidStrategy(format!("target must be finite, got {z}")));
        }
        let beta_total = market.beta_total()?;
        if beta_total <= 0.0 {
            return Err(Error::ZeroPriceOfRisk);
        }
        let floor = x0 * market.growth(0.0, market.horizon())?;
        if z < floor {
            return Err(Error::InfeasibleTarget { z, floor });
        }
        let gamma = if z == floor {
            // exact boundary: the formula reduces to z
            z
        } else {
            let rate_int = market.rate_integral(0.0, market.horizon())?;
            (z - x0 * (rate_int - beta_total).exp()) / (-(-beta_total).exp_m1())
        };
        Ok(Self {
            market,
            x0,
            z,
            floor,
            gamma,
            beta_total,
        })
    }

    pub fn market(&self) -> &'a MarketModel {
        self.market
    }

    pub fn initial_wealth(&self) -> f64 {
        self.x0
    }

    /// Target expected terminal wealth; also the mean of the terminal wealth
    /// under the strategy.
    pub fn target(&self) -> f64 {
        self.z
    }

    /// `x0 e^{int_0^T r}`, the lowest feasible target.
    pub fn risk_free_terminal(&self) -> f64 {
        self.floor
    }

    /// The scaling constant of the feedback rule; `gamma >= z`, with
    /// equality exactly at the boundary target.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `int_0^T |theta|^2 dt` of the underlying market.
    pub fn beta_total(&self) -> f64 {
        self.beta_total
    }

    /// Amount invested in each stock at time `t` and wealth `x`:
    /// `-(sigma sigma')^{-1} B' (x - gamma e^{-int_t^T r})`. Affine in `x`
    /// and zero exactly on the curve `x = gamma e^{-int_t^T r}`.
    pub fn allocation(&self, t: f64, x: f64) -> Result<Vec<f64>> {
        let sigma = self.market.sigma_at(t)?;
        let excess = self.market.excess_at(t)?;
        // check invertibility through the same gate as theta
        self.market.theta_at(t)?;
        let cov = &sigma * sigma.transpose();
        let weights = cov
            .lu()
            .solve(&DVector::from_column_slice(&excess))
            .ok_or_else(|| Error::InvalidMarket("covariance solve failed".into()))?;
        let gap = x - self.gamma * self.discount_to_horizon(t)?;
        Ok(weights.iter().map(|w| -w * gap).collect())
    }

    /// `e^{-int_t^T r}`.
    fn discount_to_horizon(&self, t: f64) -> Result<f64> {
        Ok((-self.market.rate_integral(t, self.market.horizon())?).exp())
    }

    /// Minimum attainable variance of the terminal wealth:
    /// `(z - x0 e^{int_0^T r})^2 / (e^{int_0^T |theta|^2} - 1)`.
    pub fn min_variance(&self) -> f64 {
        let gap = self.z - self.floor;
        gap * gap / self.beta_total.exp_m1()
    }

    /// Discounted target `z e^{-int_t^T r}`: the wealth level whose
    /// risk-free growth reaches exactly `z` at the horizon.
    pub fn discounted_target(&self, t: f64) -> Result<f64> {
        Ok(self.z * self.discount_to_horizon(t)?)
    }

    /// Barrier levels of the driving process; requires a strictly
    /// above-boundary target (at the boundary the bankruptcy barrier is
    /// `-inf`: a zero-risk strategy cannot go bankrupt).
    pub fn barrier_constants(&self) -> Result<BarrierConstants> {
        if self.z == self.floor {
            return Err(Error::RiskFreeTarget);
        }
        Ok(BarrierConstants {
            goal: self.beta_total,
            bankruptcy: self.beta_total + (-(self.z / self.gamma)).ln_1p(),
        })
    }
}
