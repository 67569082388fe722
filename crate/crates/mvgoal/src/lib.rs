//! Continuous-time mean-variance efficient portfolios under deterministic
//! market coefficients: the closed-form efficient frontier, the probability
//! that the efficient wealth reaches the discounted target on or before the
//! horizon (with its universal ~0.8072 lower bound), and a reproducible
//! Monte Carlo engine for goal-hitting, stopped-strategy and bankruptcy
//! experiments.
//!
//! Organization:
//! - [`market`]: piecewise-constant coefficient curves, model validation,
//!   exact integrals of the rate and of the squared market price of risk;
//! - [`frontier`]: the feedback strategy for a target expected terminal
//!   wealth, its scaling constant, minimum variance and barrier levels;
//! - [`analytics`]: special functions and every closed-form probability;
//! - [`simulate`]: seeded, parallel, bit-reproducible Monte Carlo.

pub mod analytics;
pub mod error;
pub mod frontier;
pub mod market;
pub mod numfmt;
pub mod simulate;

pub use error::{Error, Result};
pub use frontier::{BarrierConstants, EfficientStrategy};
pub use market::{CoefficientCurve, MarketModel, Stock, ValidationReport};
pub use simulate::{McReport, PathOutcome, Scheme, SimConfig};
