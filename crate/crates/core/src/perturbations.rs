//! Periodic perturbation models.
//!
//! A perturbation is a finite harmonic sum `d(t) = Σ aᵢ cos(ωᵢ t + ϕᵢ)` with a
//! common period `T`. The closed loop only sees its rate `q(t) = ḋ(t)`, which
//! is evaluated analytically. Every bound used elsewhere in the crate takes the
//! rate bound `L` as an input, so `L` is declared by the user and checked with
//! [`PerturbationSpec::verify_rate_bound`] rather than inferred.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// One term `amp · cos(omega · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amp: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

/// An exactly `T`-periodic harmonic perturbation with a declared rate bound.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct PerturbationSpec {
    terms: Vec<Harmonic>,
    period: f64,
    rate_bound: f64,
}

#[derive(Deserialize)]
struct RawSpec {
    #[serde(default)]
    terms: Vec<Harmonic>,
    period: f64,
    rate_bound: f64,
}

impl TryFrom<RawSpec> for PerturbationSpec {
    type Error = crate::Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        PerturbationSpec::new(raw.terms, raw.period, raw.rate_bound)
    }
}

/// Outcome of [`PerturbationSpec::verify_rate_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBoundCheck {
    pub max_abs_q: f64,
    pub ok: bool,
}

impl PerturbationSpec {
    /// Every `omega` must be a nonzero integer multiple of `2π / period`.
    pub fn new(terms: Vec<Harmonic>, period: f64, rate_bound: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(config_err(format!("period must be positive, got {period}")));
        }
        if !(rate_bound.is_finite() && rate_bound >= 0.0) {
            return Err(config_err(format!("rate_bound must be non-negative, got {rate_bound}")));
        }
        let base = TAU / period;
        for (i, h) in terms.iter().enumerate() {
            if !(h.amp.is_finite() && h.omega.is_finite() && h.phase.is_finite()) {
                return Err(config_err(format!("terms[{i}] has a non-finite field")));
            }
            let multiple = h.omega / base;
            let k = multiple.round();
            if k == 0.0 || (multiple - k).abs() > 1e-9 * k.abs().max(1.0) {
                return Err(config_err(format!(
                    "terms[{i}].omega = {} is not a nonzero integer multiple of 2π/period = {base}",
                    h.omega
                )));
            }
        }
        Ok(Self { terms, period, rate_bound })
    }

    /// `d ≡ 0` with the given nominal period.
    pub fn zero(period: f64) -> Result<Self> {
        Self::new(Vec::new(), period, 0.0)
    }

    pub fn terms(&self) -> &[Harmonic] {
        &self.terms
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    pub fn eval_d(&self, t: f64) -> f64 {
        self.terms.iter().map(|h| h.amp * (h.omega * t + h.phase).cos()).sum()
    }

    pub fn eval_q(&self, t: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|h| h.amp * h.omega * (h.omega * t + h.phase).sin())
            .sum::<f64>()
    }

    /// Period mean of `q`, computed exactly as `(d(T) - d(0)) / T`.
    pub fn mean_rate(&self) -> f64 {
        (self.eval_d(self.period) - self.eval_d(0.0)) / self.period
    }

    /// The spec with `d` replaced by `-d` (same period and bound).
    pub fn negated(&self) -> Self {
        let terms = self.terms.iter().map(|h| Harmonic { amp: -h.amp, ..*h }).collect();
        Self { terms, ..self.clone() }
    }

    /// Dense search for `max |q(t)|` over one period.
    ///
    /// Samples a uniform grid of `n_samples` points (at least 1000), then
    /// refines around the grid maximum by golden-section search. `ok` allows
    /// a relative slack of 1e-12 so that an exactly attained bound passes.
    pub fn verify_rate_bound(&self, n_samples: usize) -> RateBoundCheck {
        let n = n_samples.max(1000);
        let h = self.period / n as f64;
        let abs_q = |t: f64| self.eval_q(t).abs();

        let (mut best_i, mut best) = (0usize, abs_q(0.0));
        for i in 1..n {
            let v = abs_q(i as f64 * h);
            if v > best {
                best = v;
                best_i = i;
            }
        }

        let center = best_i as f64 * h;
        let refined = golden_max(abs_q, center - h, center + h, 1e-14 * self.period.max(1.0));
        let max_abs_q = best.max(refined);
        RateBoundCheck {
            max_abs_q,
            ok: max_abs_q <= self.rate_bound * (1.0 + 1e-12),
        }
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Perturbation driving a simulation.
///
/// `ConstantRate` (`q ≡ c`, `d = c·t`) is not periodic. It exists for the
/// divergence experiment and is rejected by limit-cycle analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Periodic(PerturbationSpec),
    ConstantRate(f64),
}

impl Perturbation {
    pub fn eval_d(&self, t: f64) -> f64 {
        match self {
            Perturbation::Periodic(spec) => spec.eval_d(t),
            Perturbation::ConstantRate(c) => c * t,
        }
    }

    pub fn eval_q(&self, t: f64) -> f64 {
        match self {
            Perturbation::Periodic(spec) => spec.eval_q(t),
            Perturbation::ConstantRate(c) => *c,
        }
    }

    pub fn mean_rate(&self) -> f64 {
        match self {
            Perturbation::Periodic(spec) => spec.mean_rate(),
            Perturbation::ConstantRate(c) => *c,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Perturbation::Periodic(spec) => Some(spec.period()),
            Perturbation::ConstantRate(_) => None,
        }
    }

    pub fn rate_bound(&self) -> f64 {
        match self {
            Perturbation::Periodic(spec) => spec.rate_bound(),
            Perturbation::ConstantRate(c) => c.abs(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Perturbation::Periodic(_))
    }

    pub fn negated(&self) -> Self {
        match self {
            Perturbation::Periodic(spec) => Perturbation::Periodic(spec.negated()),
            Perturbation::ConstantRate(c) => Perturbation::ConstantRate(-c),
        }
    }
}

impl From<PerturbationSpec> for Perturbation {
    fn from(spec: PerturbationSpec) -> Self {
        Perturbation::Periodic(spec)
    }
}
