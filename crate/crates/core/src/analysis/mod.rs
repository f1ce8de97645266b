//! Gain conditions and analytic amplitude bounds.
//!
//! For a perturbation with rate bound `L` and period `T`, the limit cycle of
//! an under-tuned loop satisfies
//!
//! - `max |x1| < (k2 + L) T² / 8`,
//! - `|ẋ1| ≤ (k2 + L) T / 2` (chatter bound),
//! - `w1_max ≤ W1 = (L - k2)² n² T² / (k1 - 2(L - k2)/k1)²` whenever
//!   `k1 > √(2(L - k2))`, where `0 < n ≤ 1/2` is the fraction of the period
//!   spent rising from `x1 = 0` to the peak.

pub mod cycle;
pub mod fit;
pub mod sweep;

use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::vector_fields::Gains;

/// Default fraction `n` used for `W1`; `1/2` is the conservative end.
pub const DEFAULT_N_FRACTION: f64 = 0.5;

/// `k2 > L` and `k1 ≥ 1.8 √(k2 + L)`: finite-time stability for any perturbation
/// whose rate is bounded by `L`.
pub fn check_finite_time_gains(g: Gains, rate_bound: f64) -> bool {
    g.k2 > rate_bound && g.k1 >= 1.8 * (g.k2 + rate_bound).sqrt()
}

/// `k2 > |q̄|` and `k1 ≥ 1.8 √(k2 + |q̄|)`, with `q̄` the period-mean rate.
pub fn check_limit_cycle_gains(g: Gains, q_bar: f64) -> bool {
    check_mean_rate_k2(g, q_bar) && check_mean_rate_k1(g, q_bar)
}

pub fn check_mean_rate_k2(g: Gains, q_bar: f64) -> bool {
    g.k2 > q_bar.abs()
}

pub fn check_mean_rate_k1(g: Gains, q_bar: f64) -> bool {
    g.k1 >= 1.8 * (g.k2 + q_bar.abs()).sqrt()
}

/// `k1 > √(2(L - k2))`, the condition under which `W1` is defined. Vacuous
/// when `k2 ≥ L`.
pub fn check_w1_bound_gain(g: Gains, rate_bound: f64) -> bool {
    g.k2 >= rate_bound || g.k1 > (2.0 * (rate_bound - g.k2)).sqrt()
}

/// `(k2 + L) T² / 8`.
pub fn prop3_bound(g: Gains, rate_bound: f64, period: f64) -> f64 {
    0.125 * (g.k2 + rate_bound) * period * period
}

/// `(k2 + L) T / 2`.
pub fn chatter_bound(g: Gains, rate_bound: f64, period: f64) -> f64 {
    0.5 * (g.k2 + rate_bound) * period
}

/// Tuning bound `W1(k1, k2)`; zero once `k2 ≥ L`.
pub fn w1_tuning_bound(g: Gains, rate_bound: f64, period: f64, n_fraction: f64) -> Result<f64> {
    validate_n_fraction(n_fraction)?;
    let excess = rate_bound - g.k2;
    if excess <= 0.0 {
        return Ok(0.0);
    }
    if !check_w1_bound_gain(g, rate_bound) {
        return Err(Error::BoundInapplicable(format!(
            "k1 = {} does not exceed sqrt(2(L - k2)) = {}",
            g.k1,
            (2.0 * excess).sqrt()
        )));
    }
    let denom = g.k1 - 2.0 * excess / g.k1;
    Ok((excess * n_fraction * period).powi(2) / (denom * denom))
}

pub fn validate_n_fraction(n: f64) -> Result<()> {
    if n > 0.0 && n <= 0.5 {
        Ok(())
    } else {
        Err(config_err(format!("n_fraction must lie in (0, 1/2], got {n}")))
    }
}

/// All analytic bounds for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSet {
    pub prop3_bound: f64,
    #[serde(rename = "W1")]
    pub w1: Option<f64>,
    pub chatter_bound: f64,
    pub n_fraction: f64,
}

impl BoundSet {
    pub fn new(g: Gains, rate_bound: f64, period: f64, n_fraction: f64) -> Result<Self> {
        validate_n_fraction(n_fraction)?;
        let w1 = match w1_tuning_bound(g, rate_bound, period, n_fraction) {
            Ok(v) => Some(v),
            Err(Error::BoundInapplicable(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            prop3_bound: prop3_bound(g, rate_bound, period),
            w1,
            chatter_bound: chatter_bound(g, rate_bound, period),
            n_fraction,
        })
    }
}

/// Every gain condition and bound for `(k1, k2)` against `(L, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub gains: Gains,
    pub rate_bound: f64,
    pub period: f64,
    pub mean_rate: f64,
    pub finite_time: bool,
    pub under_tuned: bool,
    pub mean_rate_k2: bool,
    pub mean_rate_k1: bool,
    pub w1_bound_gain: bool,
    pub bounds: BoundSet,
}

impl ConditionReport {
    pub fn new(g: Gains, rate_bound: f64, period: f64, mean_rate: f64, n_fraction: f64) -> Result<Self> {
        Ok(Self {
            gains: g,
            rate_bound,
            period,
            mean_rate,
            finite_time: check_finite_time_gains(g, rate_bound),
            under_tuned: g.is_under_tuned(rate_bound),
            mean_rate_k2: check_mean_rate_k2(g, mean_rate),
            mean_rate_k1: check_mean_rate_k1(g, mean_rate),
            w1_bound_gain: check_w1_bound_gain(g, rate_bound),
            bounds: BoundSet::new(g, rate_bound, period, n_fraction)?,
        })
    }
}
