//! Closed-form probabilities: the universal goal-achieving curve, its two
//! analytic lower envelopes, the ~0.8072 universal bound, the drifted
//! Brownian first-passage formula used as an independent oracle, and
//! horizon scans.

pub mod special;

pub use special::{erf, erfc, erfcx, norm_cdf, norm_pdf};

use crate::error::{Error, Result};
use crate::market::MarketModel;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Universal goal-achieving curve evaluated at `x = sqrt(int_0^T |theta|^2)`:
///
/// `F(x) = N(x/2) + e^{3x^2} (1 - N(5x/2))`
///
/// computed in the overflow-free form
/// `N(x/2) + (1/2) e^{-x^2/8} erfcx(5x / (2 sqrt 2))`, using
/// `3x^2 - (5x/(2 sqrt 2))^2 = -x^2/8`.
pub fn universal_curve(x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain {
            what: "universal_curve argument",
            value: x,
        });
    }
    Ok(universal_curve_unchecked(x))
}

#[inline]
fn universal_curve_unchecked(x: f64) -> f64 {
    norm_cdf(0.5 * x) + 0.5 * (-x * x / 8.0).exp() * erfcx(5.0 * x / (2.0 * SQRT_2))
}

/// Analytic derivative of the universal curve,
/// `F'(x) = e^{-x^2/8} (3x erfcx(5x/(2 sqrt 2)) - 2/sqrt(2 pi))`.
pub fn universal_curve_deriv(x: f64) -> f64 {
    (-x * x / 8.0).exp() * (3.0 * x * erfcx(5.0 * x / (2.0 * SQRT_2)) - 2.0 / SQRT_2PI)
}

/// Probability that the efficient wealth reaches the discounted target on or
/// before the horizon, as a function of `beta_t = int_0^T |theta|^2 dt > 0`.
pub fn goal_prob(beta_t: f64) -> Result<f64> {
    if !(beta_t.is_finite() && beta_t > 0.0) {
        return Err(Error::Domain {
            what: "goal_prob squared-price-of-risk integral",
            value: beta_t,
        });
    }
    Ok(universal_curve_unchecked(beta_t.sqrt()))
}

/// First-passage probability of a drifted Brownian motion:
///
/// `P(sup_{0<=t<=s} (mu t + W(t)) >= b) = N((mu s - b)/sqrt s) + e^{2 mu b} N(-(b + mu s)/sqrt s)`
///
/// with the exponential term evaluated through `erfcx` to avoid overflow.
/// Serves as the independent oracle for [`goal_prob`]: with drift `3/2` and
/// `level = horizon = beta` the two agree identically.
pub fn reflection_hitting_prob(drift: f64, level: f64, horizon: f64) -> Result<f64> {
    if !(level.is_finite() && level > 0.0) {
        return Err(Error::Domain {
            what: "barrier level",
            value: level,
        });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain {
            what: "horizon",
            value: horizon,
        });
    }
    if !drift.is_finite() {
        return Err(Error::Domain {
            what: "drift",
            value: drift,
        });
    }
    let root = horizon.sqrt();
    let first = norm_cdf((drift * horizon - level) / root);
    let v = (level + drift * horizon) / root;
    let second = if v >= 0.0 {
        // e^{2 mu b} N(-v) = (1/2) e^{-(b - mu s)^2 / (2s)} erfcx(v / sqrt 2)
        let exponent = -(level - drift * horizon).powi(2) / (2.0 * horizon);
        0.5 * exponent.exp() * erfcx(v / SQRT_2)
    } else {
        // strongly negative drift: both factors are well-scaled directly
        (2.0 * drift * level).exp() * norm_cdf(-v)
    };
    Ok((first + second).min(1.0))
}

/// Lower envelope `g(x) = N(x/2) + ((sqrt(16 + 25x^2) - 5x) / (4 sqrt(2 pi))) e^{-x^2/8}`,
/// a lower bound for the universal curve on `x >= 1`, strictly increasing
/// there.
pub fn envelope_g(x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain {
            what: "envelope_g argument",
            value: x,
        });
    }
    // sqrt(16 + 25x^2) - 5x rewritten to avoid cancellation for large x
    let diff = 16.0 / ((16.0 + 25.0 * x * x).sqrt() + 5.0 * x);
    Ok(norm_cdf(0.5 * x) + diff / (4.0 * SQRT_2PI) * (-x * x / 8.0).exp())
}

/// Lower envelope `h(x) = N(x/2) + e^{-x^2/8} / (3 sqrt(2 pi) x)` for
/// `x > 0`; its global minimum at `x = 2/sqrt 5` yields the universal
/// lower-bound constant.
pub fn envelope_h(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain {
            what: "envelope_h argument",
            value: x,
        });
    }
    Ok(norm_cdf(0.5 * x) + (-x * x / 8.0).exp() / (3.0 * SQRT_2PI * x))
}

/// The closed-form bound constants.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants {
    /// `N(1/sqrt 5) + (1/12) sqrt(10/pi) e^{-1/10}`, approximately 0.8072:
    /// the universal lower bound for the goal-achieving probability.
    pub lower_bound: f64,
    /// `N(1/2) + (1/sqrt(2 pi)) ((sqrt 41 - 5)/4) e^{-1/8}`, approximately
    /// 0.8150: the bound valid for arguments at least 1.
    pub tail_bound: f64,
    /// `2/sqrt 5`, the global minimizer of the `h` envelope.
    pub h_argmin: f64,
}

pub fn bound_constants() -> BoundConstants {
    let lower_bound =
        norm_cdf(1.0 / 5.0_f64.sqrt()) + (10.0 / std::f64::consts::PI).sqrt() / 12.0 * (-0.1_f64).exp();
    let tail_bound = norm_cdf(0.5) + (41.0_f64.sqrt() - 5.0) / (4.0 * SQRT_2PI) * (-0.125_f64).exp();
    BoundConstants {
        lower_bound,
        tail_bound,
        h_argmin: 2.0 / 5.0_f64.sqrt(),
    }
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)` once the bracket shrinks below `tol`.
pub fn golden_section_minimize(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizes the universal curve over `[0, xmax]` by a grid sweep followed
/// by golden-section refinement of the best bracket.
///
/// Requires `xmax >= 2` (the minimizer is known to lie left of 1, and the
/// curve grows afterwards) and `npoints >= 1000`. Returns
/// `(argmin, min value)`.
pub fn minimize_universal_curve(xmax: f64, npoints: usize) -> Result<(f64, f64)> {
    if !(xmax.is_finite() && xmax >= 2.0) {
        return Err(Error::Domain {
            what: "minimize_universal_curve xmax",
            value: xmax,
        });
    }
    if npoints < 1000 {
        return Err(Error::Domain {
            what: "minimize_universal_curve npoints",
            value: npoints as f64,
        });
    }
    let step = xmax / npoints as f64;
    let mut best_i = 0usize;
    let mut best = f64::INFINITY;
    for i in 0..=npoints {
        let v = universal_curve_unchecked(i as f64 * step);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = best_i.saturating_sub(1) as f64 * step;
    let hi = ((best_i + 1).min(npoints)) as f64 * step;
    Ok(golden_section_minimize(
        universal_curve_unchecked,
        lo,
        hi,
        1e-12,
    ))
}

/// A tabulated probability curve, serializable to two-column CSV.
#[derive(Debug, Clone)]
pub struct ProbabilityCurve {
    /// Name of the abscissa (e.g. `x` or `T`).
    pub abscissa: String,
    /// Ordered `(abscissa, probability)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Which formula generated the curve.
    pub formula: String,
}

impl ProbabilityCurve {
    pub fn new(abscissa: &str, points: Vec<(f64, f64)>, formula: &str) -> Result<Self> {
        if !points.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::InvalidCurve(
                "curve abscissa must be strictly increasing".into(),
            ));
        }
        if !points
            .iter()
            .all(|&(a, v)| a.is_finite() && (0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidCurve(
                "curve values must be probabilities in [0, 1]".into(),
            ));
        }
        Ok(Self {
            abscissa: abscissa.to_string(),
            points,
            formula: formula.to_string(),
        })
    }

    /// Writes `abscissa,value` rows with 12 significant digits.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{},value", self.abscissa)?;
        for &(a, v) in &self.points {
            writeln!(w, "{},{}", crate::numfmt::sig12(a), crate::numfmt::sig12(v))?;
        }
        Ok(())
    }
}

/// Samples the universal curve on `[0, xmax]` at `n + 1` equally spaced
/// points (the plot-ready data behind the bound report).
pub fn universal_curve_points(xmax: f64, n: usize) -> Result<ProbabilityCurve> {
    if !(xmax.is_finite() && xmax > 0.0) || n == 0 {
        return Err(Error::Domain {
            what: "universal_curve_points xmax",
            value: xmax,
        });
    }
    let points = (0..=n)
        .map(|i| {
            let x = i as f64 * xmax / n as f64;
            (x, universal_curve_unchecked(x))
        })
        .collect();
    ProbabilityCurve::new("x", points, "goal probability vs sqrt of int |theta|^2")
}

/// Analytic goal probability as a function of the horizon.
///
/// Horizons beyond the market's final breakpoint use the last piece's
/// `|theta|^2` extended at its final value. Each horizon must produce a
/// strictly positive `int |theta|^2`.
pub fn horizon_scan(market: &MarketModel, t_grid: &[f64]) -> Result<ProbabilityCurve> {
    if t_grid.is_empty() {
        return Err(Error::Domain {
            what: "horizon grid length",
            value: 0.0,
        });
    }
    if !t_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidCurve(
            "horizon grid must be strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Domain {
                what: "scan horizon",
                value: t,
            });
        }
        points.push((t, goal_prob(market.beta_extended(t)?)?));
    }
    ProbabilityCurve::new("T", points, "goal probability vs horizon")
}
