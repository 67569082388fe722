use thiserror::Error;

/// Errors produced by market construction, frontier evaluation and the
/// simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coefficient curve: {0}")]
    InvalidCurve(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("time {t} outside the market horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("interval start {s} exceeds end {t}")]
    InvalidInterval { s: f64, t: f64 },

    #[error(
        "volatility matrix is effectively singular on [{start}, {end}) \
         (condition number {cond:.3e}); market price of risk undefined"
    )]
    SingularVolatility { start: f64, end: f64, cond: f64 },

    #[error("market price of risk vanishes: squared-norm integral over the horizon is zero")]
    ZeroPriceOfRisk,

    #[error("target {z} below the risk-free growth {floor} of the initial wealth; infeasible")]
    InfeasibleTarget { z: f64, floor: f64 },

    #[error(
        "target equals the risk-free growth of the initial wealth; the strategy takes no \
         risk and hitting/bankruptcy probabilities are degenerate"
    )]
    RiskFreeTarget,

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid argument: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("euler scheme supports single-asset markets only (market has {m} stocks)")]
    EulerMultiAsset { m: usize },

    #[error("failed to parse market specification: {0}")]
    MarketSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
