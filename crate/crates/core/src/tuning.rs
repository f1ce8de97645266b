//! Search for under-tuned gains whose amplitude bound `W1` hits a target `η`.
//!
//! For fixed `k2`, `W1` is strictly decreasing in `k1` on the feasible
//! interval, so the `k1` that best matches `η` is found by bisection. The
//! outer search runs over a logarithmic `k2` grid and is then refined
//! between neighbouring grid points. Among `k2` values for which `W1 = η`
//! is attainable the smallest wins (less chatter); otherwise the point with
//! the smallest `|W1 - η|` is kept and `target_unmet` is set when that
//! error exceeds `ε`.

use serde::{Deserialize, Serialize};

use crate::analysis::cycle::{simulate_cycle, CycleOptions, LimitCycleReport};
use crate::analysis::{
    check_mean_rate_k1, check_mean_rate_k2, check_w1_bound_gain, validate_n_fraction, w1_tuning_bound,
    DEFAULT_N_FRACTION,
};
use crate::error::{config_err, Result};
use crate::scenarios::ripple_rate;
use crate::vector_fields::Gains;

pub const K2_GRID_POINTS: usize = 50;

fn default_n_fraction() -> f64 {
    DEFAULT_N_FRACTION
}
fn default_k2_max_fraction() -> f64 {
    0.55
}
fn default_k2_min_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningProblem {
    #[serde(rename = "L")]
    pub rate_bound: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub eta: f64,
    pub eps: f64,
    #[serde(default = "default_n_fraction")]
    pub n_fraction: f64,
    /// Defaults to `20 √L`.
    #[serde(default)]
    pub k1_max: Option<f64>,
    /// Upper end of the `k2` search as a fraction of `L`; below 1 keeps `k2 < L`.
    #[serde(default = "default_k2_max_fraction")]
    pub k2_max_fraction: f64,
    /// Lower end of the `k2` search as a fraction of `L`.
    #[serde(default = "default_k2_min_fraction")]
    pub k2_min_fraction: f64,
    /// Period-mean perturbation rate `q̄`.
    #[serde(default)]
    pub mean_rate: f64,
}

impl TuningProblem {
    pub fn new(rate_bound: f64, period: f64, eta: f64, eps: f64) -> Self {
        Self {
            rate_bound,
            period,
            eta,
            eps,
            n_fraction: DEFAULT_N_FRACTION,
            k1_max: None,
            k2_max_fraction: default_k2_max_fraction(),
            k2_min_fraction: default_k2_min_fraction(),
            mean_rate: 0.0,
        }
    }

    pub fn k1_max(&self) -> f64 {
        self.k1_max.unwrap_or(20.0 * self.rate_bound.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("L", self.rate_bound), ("T", self.period), ("eta", self.eta), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be positive and finite, got {v}")));
            }
        }
        validate_n_fraction(self.n_fraction)?;
        let k1_max = self.k1_max();
        if !(k1_max.is_finite() && k1_max > 0.0) {
            return Err(config_err(format!("k1_max must be positive and finite, got {k1_max}")));
        }
        if !(self.k2_max_fraction > 0.0 && self.k2_max_fraction < 1.0) {
            return Err(config_err(format!("k2_max_fraction must lie in (0, 1), got {}", self.k2_max_fraction)));
        }
        if !(self.k2_min_fraction > 0.0 && self.k2_min_fraction <= self.k2_max_fraction) {
            return Err(config_err(format!(
                "k2_min_fraction must lie in (0, k2_max_fraction], got {}",
                self.k2_min_fraction
            )));
        }
        if !self.mean_rate.is_finite() {
            return Err(config_err("mean_rate must be finite"));
        }
        Ok(())
    }

    fn w1(&self, g: Gains) -> f64 {
        w1_tuning_bound(g, self.rate_bound, self.period, self.n_fraction).unwrap_or(f64::INFINITY)
    }

    /// Feasible `k1` range for a given `k2`, if any.
    fn k1_interval(&self, k2: f64) -> Option<(f64, f64)> {
        let mean_rate_min = 1.8 * (k2 + self.mean_rate.abs()).sqrt();
        let excess = self.rate_bound - k2;
        // strict inequality: step just past √(2(L - k2))
        let w1_min = if excess > 0.0 { next_up((2.0 * excess).sqrt()) } else { 0.0 };
        let lo = mean_rate_min.max(w1_min);
        let hi = self.k1_max();
        (lo <= hi).then_some((lo, hi))
    }
}

fn next_up(v: f64) -> f64 {
    v * (1.0 + 4.0 * f64::EPSILON)
}

/// Each constraint re-evaluated on the returned gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintsReport {
    /// `k2 > |q̄|`
    pub mean_rate_k2: bool,
    /// `k1 ≥ 1.8 √(k2 + |q̄|)`
    pub mean_rate_k1: bool,
    /// `k1 > √(2(L - k2))`
    pub w1_gain: bool,
    /// `0 < k2 < L`
    pub under_tuned: bool,
    pub k1_within_max: bool,
    pub k2_within_max: bool,
}

impl ConstraintsReport {
    pub fn evaluate(g: Gains, p: &TuningProblem) -> Self {
        Self {
            mean_rate_k2: check_mean_rate_k2(g, p.mean_rate),
            mean_rate_k1: check_mean_rate_k1(g, p.mean_rate),
            w1_gain: check_w1_bound_gain(g, p.rate_bound),
            under_tuned: g.is_under_tuned(p.rate_bound),
            k1_within_max: g.k1 <= p.k1_max(),
            k2_within_max: g.k2 <= p.k2_max_fraction * p.rate_bound * (1.0 + 1e-12),
        }
    }

    pub fn all(&self) -> bool {
        self.mean_rate_k2 && self.mean_rate_k1 && self.w1_gain && self.under_tuned && self.k1_within_max && self.k2_within_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    /// `None` when no gains satisfy the constraints.
    pub gains: Option<Gains>,
    #[serde(rename = "W1")]
    pub w1: Option<f64>,
    pub eta: f64,
    pub eps: f64,
    pub constraints_report: Option<ConstraintsReport>,
    pub feasible: bool,
    /// Feasible, but saturations keep `|W1 - η|` above `ε`.
    pub target_unmet: bool,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gains: Gains,
    w1: f64,
    err: f64,
}

impl Candidate {
    fn met(&self, eps: f64) -> bool {
        self.err <= eps
    }

    /// `W1 = η` up to rounding.
    fn exact(&self, eta: f64) -> bool {
        self.err <= EXACT_MATCH * eta
    }
}

const EXACT_MATCH: f64 = 1e-9;

/// Best `k1` for this `k2`: the root of `W1 = η` when it lies in the feasible
/// interval, otherwise the nearer endpoint.
fn best_for_k2(p: &TuningProblem, k2: f64) -> Option<Candidate> {
    let (lo, hi) = p.k1_interval(k2)?;
    let w = |k1: f64| p.w1(Gains { k1, k2 });
    let k1 = if w(lo) <= p.eta {
        lo
    } else if w(hi) >= p.eta {
        hi
    } else {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if w(m) > p.eta {
                a = m;
            } else {
                b = m;
            }
        }
        // b keeps W1 ≤ η; take whichever endpoint is closer
        if (w(a) - p.eta).abs() < (w(b) - p.eta).abs() {
            a
        } else {
            b
        }
    };
    let gains = Gains { k1, k2 };
    let w1 = w(k1);
    Some(Candidate { gains, w1, err: (w1 - p.eta).abs() })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || lo == hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

/// Golden-section minimisation of the matching error over `k2 ∈ [a, b]`.
fn refine_unmet(p: &TuningProblem, mut a: f64, mut b: f64, best: Candidate) -> Candidate {
    let err = |k2: f64| best_for_k2(p, k2).map_or(f64::INFINITY, |c| c.err);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (err(c), err(d));
    for _ in 0..100 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = err(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = err(d);
        }
    }
    match best_for_k2(p, 0.5 * (a + b)) {
        Some(cand) if cand.err < best.err => cand,
        _ => best,
    }
}

/// Bisection on `k2` for the smallest value at which `W1 = η` is still attainable.
fn refine_met(p: &TuningProblem, mut below: f64, mut met: Candidate) -> Candidate {
    for _ in 0..100 {
        let mid = 0.5 * (below + met.gains.k2);
        if mid <= below || mid >= met.gains.k2 {
            break;
        }
        match best_for_k2(p, mid) {
            Some(c) if c.exact(p.eta) => met = c,
            _ => below = mid,
        }
    }
    met
}

pub fn tune_gains(p: &TuningProblem) -> Result<TuningResult> {
    p.validate()?;
    let l = p.rate_bound;
    let k2_lo = (p.k2_min_fraction * l).max(next_up(p.mean_rate.abs()));
    let k2_hi = p.k2_max_fraction * l;
    let infeasible = TuningResult {
        gains: None,
        w1: None,
        eta: p.eta,
        eps: p.eps,
        constraints_report: None,
        feasible: false,
        target_unmet: true,
    };
    if k2_lo > k2_hi {
        return Ok(infeasible);
    }
    let grid = log_grid(k2_lo, k2_hi, K2_GRID_POINTS);
    let cands: Vec<Option<Candidate>> = grid.iter().map(|&k2| best_for_k2(p, k2)).collect();

    let chosen = if let Some(i) = cands.iter().position(|c| c.is_some_and(|c| c.exact(p.eta))) {
        let met = cands[i].expect("checked above");
        if i == 0 {
            met
        } else {
            refine_met(p, grid[i - 1], met)
        }
    } else {
        // η is out of reach on the grid: smallest error, first on ties
        let Some((i, best)) = cands
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
            .min_by(|a, b| a.1.err.total_cmp(&b.1.err))
        else {
            return Ok(infeasible);
        };
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        refine_unmet(p, a, b, best)
    };

    let report = ConstraintsReport::evaluate(chosen.gains, p);
    Ok(TuningResult {
        gains: Some(chosen.gains),
        w1: Some(chosen.w1),
        eta: p.eta,
        eps: p.eps,
        constraints_report: Some(report),
        feasible: report.all(),
        target_unmet: !chosen.met(p.eps),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningValidation {
    /// `max |x1|` over the detected cycle.
    pub simulated_w1_max: f64,
    #[serde(rename = "within_W1")]
    pub within_w1: bool,
    pub report: LimitCycleReport,
}

/// Simulates the tuned gains against the torque-ripple rate profile for
/// `(L, T)` and compares the cycle amplitude with `W1`.
pub fn validate_tuning(result: &TuningResult, p: &TuningProblem, opts: &CycleOptions) -> Result<TuningValidation> {
    let (Some(gains), Some(w1)) = (result.gains, result.w1) else {
        return Err(config_err("cannot validate an infeasible tuning result"));
    };
    let spec = ripple_rate(p.rate_bound, p.period)?;
    let run = simulate_cycle(gains, &spec, opts)?;
    let report = run.report?;
    let simulated_w1_max = report.max_abs_x1();
    Ok(TuningValidation { simulated_w1_max, within_w1: simulated_w1_max <= w1, report })
}
