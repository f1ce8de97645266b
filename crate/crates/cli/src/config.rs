//! Scenario files and their resolution into runnable parameters.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use stsmc_core::analysis::sweep::{Scaling, SweepAxis, SweepParam};
use stsmc_core::analysis::DEFAULT_N_FRACTION;
use stsmc_core::integrator::default_delta;
use stsmc_core::scenarios::{motor_closed_loop, MotorParams, PhysicalGains};
use stsmc_core::{CycleOptions, FieldKind, Gains, Perturbation, PerturbationSpec, State, SCHEMA_VERSION};

/// Flags that override values from the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub n_fraction: Option<f64>,
}

/// Motor block; every field is optional and `omega_r` defaults to `2π / T`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorSection {
    #[serde(rename = "J")]
    pub inertia: Option<f64>,
    pub omega_r: Option<f64>,
    #[serde(rename = "T_C")]
    pub coulomb: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "T_L")]
    pub load: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerturbationOverride {
    ConstantRate { constant_rate: f64 },
    Harmonic(PerturbationSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    #[serde(default)]
    pub gain_scaling: Scaling,
    #[serde(default)]
    pub delta_scaling: Scaling,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub motor: Option<MotorSection>,
    #[serde(rename = "L")]
    pub rate_bound: f64,
    #[serde(rename = "T")]
    pub period: Option<f64>,
    pub gains: PhysicalGains,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub x0: Option<[f64; 2]>,
    /// Periods simulated before the first detection attempt.
    pub periods: Option<usize>,
    pub max_periods: Option<usize>,
    pub samples_per_period: Option<usize>,
    pub tol: Option<f64>,
    pub field: Option<FieldKind>,
    pub perturbation: Option<PerturbationOverride>,
    /// Horizon for non-periodic perturbations.
    pub t_end: Option<f64>,
    pub n_fraction: Option<f64>,
    pub sweep: Option<SweepSection>,
}

/// Reads a JSON file, reporting the path of the offending field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    if text.trim().is_empty() {
        bail!("config {} is empty", path.display());
    }
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| field_error(path, e.path(), e.inner()))
}

pub fn field_error(path: &Path, field: &serde_path_to_error::Path, inner: impl std::fmt::Display) -> anyhow::Error {
    match field.to_string().as_str() {
        "." => anyhow!("config {}: {inner}", path.display()),
        f => anyhow!("config {}: field `{f}`: {inner}", path.display()),
    }
}

pub fn check_schema_version(v: Option<u32>) -> Result<()> {
    match v {
        Some(v) if v != SCHEMA_VERSION => {
            bail!("field `schema_version`: unsupported version {v}, expected {SCHEMA_VERSION}")
        }
        _ => Ok(()),
    }
}

/// Everything a command needs, with defaults and overrides applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub motor: MotorParams,
    pub physical: PhysicalGains,
    pub gains: Gains,
    pub rate_bound: f64,
    /// `None` only for non-periodic perturbation overrides without `T`.
    pub period: Option<f64>,
    pub perturbation: Perturbation,
    pub delta: f64,
    pub dt: Option<f64>,
    pub x0: State,
    pub cycle: CycleOptions,
    pub t_end: Option<f64>,
    pub n_fraction: f64,
}

fn resolve_period(cfg: &ScenarioConfig) -> Result<Option<f64>> {
    let from_motor = cfg.motor.as_ref().and_then(|m| m.omega_r).map(|w| std::f64::consts::TAU / w.abs());
    match (cfg.period, from_motor) {
        (Some(t), Some(tm)) if (t - tm).abs() > 1e-9 * t.abs() => {
            bail!("field `T`: {t} disagrees with motor.omega_r, which implies T = {tm}")
        }
        (Some(t), _) => Ok(Some(t)),
        (None, tm) => Ok(tm),
    }
}

impl ScenarioConfig {
    pub fn resolve(&self, ov: Overrides) -> Result<Resolved> {
        check_schema_version(self.schema_version)?;
        let period = resolve_period(self)?;
        let x0 = self.x0.map_or(State::default(), |[a, b]| State::new(a, b));
        let delta = ov.delta.or(self.delta).unwrap_or_else(|| default_delta(x0));
        let dt = ov.dt.or(self.dt);
        let n_fraction = ov.n_fraction.or(self.n_fraction).unwrap_or(DEFAULT_N_FRACTION);

        let periodic_t = match (&self.perturbation, period) {
            (Some(PerturbationOverride::ConstantRate { .. }), t) => t.unwrap_or(1.0),
            (Some(PerturbationOverride::Harmonic(spec)), _) => spec.period(),
            (None, Some(t)) => t,
            (None, None) => bail!("missing field `T` (or motor.omega_r)"),
        };
        let section = self.motor.clone().unwrap_or_default();
        let defaults = MotorParams::for_period(periodic_t);
        let motor = MotorParams {
            inertia: section.inertia.unwrap_or(defaults.inertia),
            omega_r: section.omega_r.unwrap_or(defaults.omega_r),
            coulomb: section.coulomb.unwrap_or(defaults.coulomb),
            alpha: section.alpha.unwrap_or(defaults.alpha),
            beta: section.beta.unwrap_or(defaults.beta),
            load: section.load.unwrap_or(defaults.load),
        };
        let (gains, ripple, _) = motor_closed_loop(&motor, self.gains, self.rate_bound, delta)?;
        let perturbation = match &self.perturbation {
            None => Perturbation::Periodic(ripple),
            Some(PerturbationOverride::Harmonic(spec)) => Perturbation::Periodic(spec.clone()),
            Some(PerturbationOverride::ConstantRate { constant_rate }) => {
                if !constant_rate.is_finite() {
                    bail!("field `perturbation.constant_rate` must be finite");
                }
                Perturbation::ConstantRate(*constant_rate)
            }
        };
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                bail!("field `tol` must be positive, got {tol}");
            }
        }
        let defaults = CycleOptions::default();
        let cycle = CycleOptions {
            x0,
            delta,
            tol: self.tol.unwrap_or(defaults.tol),
            samples_per_period: self.samples_per_period.unwrap_or(defaults.samples_per_period),
            min_periods: self.periods.unwrap_or(defaults.min_periods),
            max_periods: self.max_periods.unwrap_or(defaults.max_periods),
            dt,
            field: self.field.unwrap_or_default(),
        };
        Ok(Resolved {
            motor,
            physical: self.gains,
            gains,
            rate_bound: self.rate_bound,
            period: perturbation.period().or(period),
            perturbation,
            delta,
            dt,
            x0,
            cycle,
            t_end: self.t_end,
            n_fraction,
        })
    }

    pub fn sweep_axis(&self) -> Result<(SweepAxis, Scaling, Scaling)> {
        let s = self.sweep.as_ref().ok_or_else(|| anyhow!("missing field `sweep`"))?;
        if s.values.is_empty() {
            bail!("field `sweep.values` must not be empty");
        }
        Ok((SweepAxis { param: s.param, values: s.values.clone() }, s.gain_scaling, s.delta_scaling))
    }
}
