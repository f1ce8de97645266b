//! Motor velocity tracking under torque ripple.
//!
//! The tracking error `e = ω - ω_r` obeys `J ė = u - T_F(ω) - T_L + d(t)`
//! with ripple `d = L1 cos(ω_r t) + L2 cos(3 ω_r t)`, `L1 = 3 L2 = -L J / (2 ω_r)`.
//! The control
//!
//! `u = -k1' |e|^½ φ_δ(e) - k2' ∫ φ_δ(e) dτ + T_F(ω) + T_L`
//!
//! cancels friction and load and leaves the regularised loop in `x1 = e`,
//! `x2 = (d - k2' ∫φ_δ) / J` with gains `k = k' / J` and rate
//! `q = ḋ / J = (L/2)(sin ω_r t + sin 3 ω_r t)`, whose bound is `L`.

use std::f64::consts::{FRAC_2_PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::cycle::{simulate_cycle, CycleOptions};
use crate::analysis::w1_tuning_bound;
use crate::error::{config_err, Result};
use crate::perturbations::{Harmonic, PerturbationSpec};
use crate::tuning::{tune_gains, TuningProblem};
use crate::vector_fields::{phi_delta, Gains, RegWidth, State};

fn default_inertia() -> f64 {
    1.0
}
fn default_coulomb() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    1000.0
}
fn default_beta() -> f64 {
    0.01
}

/// Drive parameters. `omega_r` is normally derived from the ripple period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    /// Inertia, kg·m².
    #[serde(rename = "J", default = "default_inertia")]
    pub inertia: f64,
    /// Velocity set point, rad/s.
    pub omega_r: f64,
    /// Coulomb friction level, N·m.
    #[serde(rename = "T_C", default = "default_coulomb")]
    pub coulomb: f64,
    /// Steepness of the arctan friction model; must exceed 100.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Viscous coefficient, N·m·s.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Known load torque, N·m.
    #[serde(rename = "T_L", default)]
    pub load: f64,
}

impl MotorParams {
    /// Default drive with `ω_r = 2π / T`.
    pub fn for_period(period: f64) -> Self {
        Self {
            inertia: default_inertia(),
            omega_r: TAU / period,
            coulomb: default_coulomb(),
            alpha: default_alpha(),
            beta: default_beta(),
            load: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(config_err(format!("motor.J must be positive, got {}", self.inertia)));
        }
        if !(self.omega_r.is_finite() && self.omega_r != 0.0) {
            return Err(config_err(format!("motor.omega_r must be finite and nonzero, got {}", self.omega_r)));
        }
        if !(self.alpha.is_finite() && self.alpha > 100.0) {
            return Err(config_err(format!("motor.alpha must exceed 100, got {}", self.alpha)));
        }
        if !(self.coulomb.is_finite() && self.beta.is_finite() && self.load.is_finite()) {
            return Err(config_err("motor.T_C, motor.beta and motor.T_L must be finite"));
        }
        Ok(())
    }

    /// Ripple period `2π / |ω_r|`.
    pub fn period(&self) -> f64 {
        TAU / self.omega_r.abs()
    }
}

/// `T_C (2/π) arctan(α ω) + β ω`.
pub fn friction_torque(omega: f64, m: &MotorParams) -> f64 {
    m.coulomb * FRAC_2_PI * (m.alpha * omega).atan() + m.beta * omega
}

fn ripple_terms(scale: f64, rate_bound: f64, omega_r: f64) -> Vec<Harmonic> {
    let l1 = -rate_bound * scale / (2.0 * omega_r);
    vec![
        Harmonic { amp: l1, omega: omega_r, phase: 0.0 },
        Harmonic { amp: l1 / 3.0, omega: 3.0 * omega_r, phase: 0.0 },
    ]
}

/// Ripple torque `d(t)` in N·m; its rate is bounded by `L J`.
pub fn ripple_torque(rate_bound: f64, m: &MotorParams) -> Result<PerturbationSpec> {
    m.validate()?;
    PerturbationSpec::new(ripple_terms(m.inertia, rate_bound, m.omega_r.abs()), m.period(), rate_bound * m.inertia)
}

/// Normalised ripple `d(t) / J`, whose rate `q` has declared bound `L`.
pub fn ripple_perturbation(rate_bound: f64, m: &MotorParams) -> Result<PerturbationSpec> {
    m.validate()?;
    ripple_rate(rate_bound, m.period())
}

/// Normalised ripple for rate bound `L` and period `T`.
pub fn ripple_rate(rate_bound: f64, period: f64) -> Result<PerturbationSpec> {
    if !(rate_bound.is_finite() && rate_bound > 0.0) {
        return Err(config_err(format!("L must be positive, got {rate_bound}")));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(config_err(format!("T must be positive, got {period}")));
    }
    PerturbationSpec::new(ripple_terms(1.0, rate_bound, TAU / period), period, rate_bound)
}

/// Physical gains `(k1', k2')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalGains {
    pub k1p: f64,
    pub k2p: f64,
}

/// Motor-side state: tracking error and the controller integral `∫ φ_δ(e)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MotorState {
    pub e: f64,
    pub integral: f64,
}

/// The motor loop under the feed-forward super-twisting law.
#[derive(Debug, Clone)]
pub struct MotorLoop {
    pub params: MotorParams,
    pub physical: PhysicalGains,
    pub ripple: PerturbationSpec,
    pub width: RegWidth,
}

impl MotorLoop {
    /// Control torque `u`.
    pub fn control(&self, s: MotorState) -> f64 {
        let omega = s.e + self.params.omega_r;
        let phi = phi_delta(s.e, self.width);
        -self.physical.k1p * s.e.abs().sqrt() * phi - self.physical.k2p * s.integral
            + friction_torque(omega, &self.params)
            + self.params.load
    }

    pub fn rhs(&self, t: f64, s: MotorState) -> MotorState {
        let omega = s.e + self.params.omega_r;
        let torque = self.control(s) - friction_torque(omega, &self.params) - self.params.load + self.ripple.eval_d(t);
        MotorState { e: torque / self.params.inertia, integral: phi_delta(s.e, self.width) }
    }

    /// Normalised coordinates `(x1, x2)` of a motor state.
    pub fn to_state(&self, t: f64, s: MotorState) -> State {
        State::new(s.e, (self.ripple.eval_d(t) - self.physical.k2p * s.integral) / self.params.inertia)
    }

    /// Motor state with the given normalised coordinates at time `t`.
    pub fn from_state(&self, t: f64, x: State) -> MotorState {
        MotorState { e: x.x1, integral: (self.ripple.eval_d(t) - self.params.inertia * x.x2) / self.physical.k2p }
    }
}

/// Normalised gains `k' / J`, the normalised ripple and the motor loop.
pub fn motor_closed_loop(
    m: &MotorParams,
    physical: PhysicalGains,
    rate_bound: f64,
    delta: f64,
) -> Result<(Gains, PerturbationSpec, MotorLoop)> {
    m.validate()?;
    if !(physical.k1p > 0.0 && physical.k2p > 0.0 && physical.k1p.is_finite() && physical.k2p.is_finite()) {
        return Err(config_err("gains.k1p and gains.k2p must be positive and finite"));
    }
    let gains = Gains::new(physical.k1p / m.inertia, physical.k2p / m.inertia)?;
    let spec = ripple_perturbation(rate_bound, m)?;
    let motor = MotorLoop { params: *m, physical, ripple: ripple_torque(rate_bound, m)?, width: RegWidth::new(delta)? };
    Ok((gains, spec, motor))
}

/// Finite-time reference gains `k̄2 = 1.1 L`, `k̄1 = 1.8 √(k̄2 + L)`.
pub fn reference_gains(rate_bound: f64) -> Gains {
    let k2 = 1.1 * rate_bound;
    Gains { k1: 1.8 * (k2 + rate_bound).sqrt(), k2 }
}

/// A published reference operating point with its tuned gains and amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "L")]
    pub rate_bound: f64,
    pub kbar1: f64,
    pub kbar2: f64,
    pub k1: f64,
    pub k2: f64,
    pub abs_x1: f64,
    #[serde(rename = "W1")]
    pub w1: f64,
}

#[allow(clippy::too_many_arguments)]
const fn row(period: f64, rate_bound: f64, kbar1: f64, kbar2: f64, k1: f64, k2: f64, abs_x1: f64, w1: f64) -> ReferenceRow {
    ReferenceRow { period, rate_bound, kbar1, kbar2, k1, k2, abs_x1, w1 }
}

/// Reference rows (values as published, rounded).
pub const REFERENCE_ROWS: [ReferenceRow; 4] = [
    row(2.0, 2.5, 4.12, 2.75, 4.12, 0.43, 0.0099, 0.01),
    row(2.0, 25.0, 13.04, 27.5, 12.54, 12.9, 0.0055, 0.12),
    row(0.25, 2.5, 4.12, 2.75, 1.76, 1.08, 0.0002, 0.01),
    row(0.25, 25.0, 13.04, 27.5, 6.14, 9.74, 0.0016, 0.01),
];

/// Accuracy target and tolerance used when re-tuning the reference rows.
pub const REFERENCE_ETA: f64 = 0.01;
pub const REFERENCE_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "L")]
    pub rate_bound: f64,
    pub kbar1: f64,
    pub kbar2: f64,
    /// Gains found by [`tune_gains`]; `NaN` when infeasible.
    pub k1: f64,
    pub k2: f64,
    pub sim_abs_x1: f64,
    #[serde(rename = "W1")]
    pub w1: f64,
    pub target_unmet: bool,
    pub ref_k1: f64,
    pub ref_k2: f64,
    pub ref_abs_x1: f64,
    #[serde(rename = "ref_W1")]
    pub ref_w1: f64,
    /// `max |x1|` simulated with the published gains.
    pub ref_sim_abs_x1: f64,
    /// `W1` of the published gains at the chosen `n`.
    #[serde(rename = "ref_gains_W1")]
    pub ref_gains_w1: f64,
}

impl Table1Row {
    pub const CSV_HEADER: [&'static str; 15] = [
        "T",
        "L",
        "kbar1",
        "kbar2",
        "k1",
        "k2",
        "sim_abs_x1",
        "W1",
        "target_unmet",
        "ref_k1",
        "ref_k2",
        "ref_abs_x1",
        "ref_W1",
        "ref_sim_abs_x1",
        "ref_gains_W1",
    ];
}

fn simulated_amplitude(g: Gains, spec: &PerturbationSpec, opts: &CycleOptions) -> Result<f64> {
    let run = simulate_cycle(g, spec, opts)?;
    Ok(run.report?.max_abs_x1())
}

/// Re-tunes and re-simulates every reference row; rows run in parallel and
/// come back in order.
pub fn reproduce_table1(n_fraction: f64, opts: &CycleOptions) -> Result<Vec<Table1Row>> {
    REFERENCE_ROWS
        .par_iter()
        .map(|r| {
            let spec = ripple_rate(r.rate_bound, r.period)?;
            let kbar = reference_gains(r.rate_bound);
            let problem = TuningProblem {
                n_fraction,
                ..TuningProblem::new(r.rate_bound, r.period, REFERENCE_ETA, REFERENCE_EPS)
            };
            let tuned = tune_gains(&problem)?;
            let (k1, k2, sim_abs_x1, w1) = match (tuned.gains, tuned.w1) {
                (Some(g), Some(w1)) => (g.k1, g.k2, simulated_amplitude(g, &spec, opts)?, w1),
                _ => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            let ref_gains = Gains::new(r.k1, r.k2)?;
            Ok(Table1Row {
                period: r.period,
                rate_bound: r.rate_bound,
                kbar1: kbar.k1,
                kbar2: kbar.k2,
                k1,
                k2,
                sim_abs_x1,
                w1,
                target_unmet: tuned.target_unmet,
                ref_k1: r.k1,
                ref_k2: r.k2,
                ref_abs_x1: r.abs_x1,
                ref_w1: r.w1,
                ref_sim_abs_x1: simulated_amplitude(ref_gains, &spec, opts)?,
                ref_gains_w1: w1_tuning_bound(ref_gains, r.rate_bound, r.period, n_fraction)?,
            })
        })
        .collect()
}
