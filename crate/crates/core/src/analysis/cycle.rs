//! Limit-cycle detection through the period-`T` return map.
//!
//! For each full period `k` the residual is `sup |x(t) - x(t - T)|` over the
//! samples of that period, with `x(t - T)` linearly interpolated. It is judged
//! relative to the size of the orbit: the peak-to-peak range of the state
//! over the period, floored at the regularisation width `δ` so that a
//! collapsed orbit (an equilibrium inside the band) can still converge.

use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::integrator::{integrate, SimConfig, Trajectory};
use crate::perturbations::{Perturbation, PerturbationSpec};
use crate::vector_fields::{to_w, FieldKind, Gains, RegWidth, State};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitCycleReport {
    pub converged: bool,
    /// Absolute sup-norm return-map residual of the last analysed period, or
    /// the smallest one seen when not converged.
    pub return_map_residual: f64,
    /// `return_map_residual` divided by the orbit scale of the same period.
    pub relative_residual: f64,
    #[serde(rename = "period")]
    pub period_t: f64,
    pub w1_max: f64,
    pub w1_min: f64,
    pub w2_max_abs: f64,
    pub n_transient_periods: usize,
    pub periods_analysed: usize,
}

impl LimitCycleReport {
    /// `max(w1_max, -w1_min)`.
    pub fn max_abs_x1(&self) -> f64 {
        self.w1_max.max(-self.w1_min)
    }
}

/// Return-map residual of one period against the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodResidual {
    pub absolute: f64,
    pub scale: f64,
}

impl PeriodResidual {
    pub fn relative(&self) -> f64 {
        self.absolute / self.scale
    }
}

fn period_index_range(traj: &Trajectory, start: f64, end: f64) -> (usize, usize) {
    let lo = ((start - traj.t0) / traj.dt_sample - 1e-9).ceil().max(0.0) as usize;
    let hi = (((end - traj.t0) / traj.dt_sample + 1e-9).floor() as usize).min(traj.len() - 1);
    (lo, hi)
}

fn full_periods(traj: &Trajectory, period: f64) -> usize {
    if traj.is_empty() {
        return 0;
    }
    ((traj.t_last() - traj.t0) / period + 1e-9).floor() as usize
}

/// Residuals for periods `1..P`; entry `k - 1` compares period `k` with `k - 1`.
pub fn period_residuals(traj: &Trajectory, period: f64, width: RegWidth) -> Vec<PeriodResidual> {
    let n_periods = full_periods(traj, period);
    (1..n_periods)
        .map(|k| {
            let start = traj.t0 + k as f64 * period;
            let (lo, hi) = period_index_range(traj, start, start + period);
            let mut absolute = 0.0f64;
            let (mut min, mut max) = (State::new(f64::MAX, f64::MAX), State::new(f64::MIN, f64::MIN));
            for i in lo..=hi {
                let s = traj.samples[i];
                if let Some(prev) = traj.interpolate(traj.time(i) - period) {
                    absolute = absolute.max((s - prev).max_abs());
                }
                min = State::new(min.x1.min(s.x1), min.x2.min(s.x2));
                max = State::new(max.x1.max(s.x1), max.x2.max(s.x2));
            }
            let range = (max - min).max_abs();
            PeriodResidual { absolute, scale: range.max(width.get()) }
        })
        .collect()
}

/// Extremum of `f` over samples `lo..=hi`, refined by a parabola through the
/// extreme sample and its neighbours when that parabola has an interior vertex.
fn refined_extremum(values: impl Fn(usize) -> f64, lo: usize, hi: usize, last: usize, maximize: bool) -> f64 {
    let sign = if maximize { 1.0 } else { -1.0 };
    let mut best_i = lo;
    let mut best = sign * values(lo);
    for i in lo + 1..=hi {
        let v = sign * values(i);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if best_i > 0 && best_i < last {
        let (a, b, c) = (sign * values(best_i - 1), best, sign * values(best_i + 1));
        let curvature = a - 2.0 * b + c;
        if curvature < 0.0 {
            let offset = 0.5 * (a - c) / curvature;
            if offset.abs() <= 1.0 {
                best = best.max(b - 0.25 * (a - c) * offset);
            }
        }
    }
    sign * best
}

/// Detects convergence onto a `T`-periodic orbit and measures it.
///
/// Requires at least six full periods. Scans from the end: the cycle counts
/// as converged when the last two period comparisons both have relative
/// residual at most `tol`. Amplitudes are taken over the last two periods.
/// A run that never settles returns `converged = false` with the smallest
/// residual observed; that is a result, not an error.
pub fn detect_limit_cycle(
    traj: &Trajectory,
    g: Gains,
    width: RegWidth,
    period: f64,
    tol: f64,
) -> Result<LimitCycleReport> {
    if let Some(div) = traj.divergence {
        return Err(Error::Divergence { time: div.time, state: div.state });
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(config_err("limit-cycle detection needs a positive period"));
    }
    let n_periods = full_periods(traj, period);
    if n_periods < 6 {
        return Err(Error::InsufficientData(format!(
            "trajectory covers {n_periods} full periods, at least 6 are required"
        )));
    }
    let residuals = period_residuals(traj, period, width);

    let passing_tail = residuals.iter().rev().take_while(|r| r.relative() <= tol).count();
    let converged = passing_tail >= 2;
    let first_converged = residuals.len() - passing_tail; // index into residuals
    let chosen = if converged {
        *residuals.last().expect("at least five residuals")
    } else {
        *residuals
            .iter()
            .min_by(|a, b| a.relative().total_cmp(&b.relative()))
            .expect("at least five residuals")
    };

    let end = traj.t0 + n_periods as f64 * period;
    let (lo, hi) = period_index_range(traj, end - 2.0 * period, end);
    let last = traj.len() - 1;
    let x1 = |i: usize| traj.samples[i].x1;
    let w2 = |i: usize| to_w(traj.samples[i], g, width).w2.abs();

    Ok(LimitCycleReport {
        converged,
        return_map_residual: chosen.absolute,
        relative_residual: chosen.relative(),
        period_t: period,
        w1_max: refined_extremum(x1, lo, hi, last, true),
        w1_min: refined_extremum(x1, lo, hi, last, false),
        w2_max_abs: refined_extremum(w2, lo, hi, last, true),
        n_transient_periods: if converged { first_converged } else { n_periods },
        periods_analysed: n_periods,
    })
}

/// Options for [`simulate_cycle`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleOptions {
    pub x0: State,
    pub delta: f64,
    pub tol: f64,
    pub samples_per_period: usize,
    /// Periods integrated before the first detection attempt (at least 6).
    pub min_periods: usize,
    /// The horizon doubles until convergence or until this many periods.
    pub max_periods: usize,
    /// Step override; must respect the stability cap.
    pub dt: Option<f64>,
    pub field: FieldKind,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            x0: State::default(),
            delta: 1e-5,
            tol: DEFAULT_TOLERANCE,
            samples_per_period: 2000,
            min_periods: 8,
            max_periods: 128,
            dt: None,
            field: FieldKind::Regularized,
        }
    }
}

/// A simulated run together with its limit-cycle verdict.
#[derive(Debug, Clone)]
pub struct CycleRun {
    pub config: SimConfig,
    pub trajectory: Trajectory,
    /// Divergence and insufficient data are reported here.
    pub report: Result<LimitCycleReport>,
}

/// Simulates the loop and detects its limit cycle, extending
/// the horizon (doubling) until convergence or `max_periods`.
///
/// Configuration problems are returned as `Err`; divergence is carried in
/// [`CycleRun::report`] together with the trajectory up to that point.
pub fn simulate_cycle(g: Gains, spec: &PerturbationSpec, opts: &CycleOptions) -> Result<CycleRun> {
    let perturbation = Perturbation::Periodic(spec.clone());
    let width = RegWidth::new(opts.delta)?;
    let min_periods = opts.min_periods.max(6);
    let mut config = SimConfig::for_periods(g, &perturbation, opts.delta, opts.x0, min_periods, opts.samples_per_period)?;
    config.field = opts.field;
    if let Some(dt) = opts.dt {
        config = config.with_dt(dt);
    }
    let mut trajectory = integrate(&config, g, &perturbation)?;
    let period = spec.period();
    let mut periods = min_periods;
    loop {
        let report = detect_limit_cycle(&trajectory, g, width, period, opts.tol);
        let settled = !matches!(report, Ok(ref r) if !r.converged);
        if settled || periods >= opts.max_periods {
            config.t_end = trajectory.t0 + periods as f64 * period;
            return Ok(CycleRun { config, trajectory, report });
        }
        let extra = periods.min(opts.max_periods - periods);
        let next = SimConfig {
            t0: trajectory.t_last(),
            t_end: trajectory.t0 + (periods + extra) as f64 * period,
            x0: trajectory.last().expect("non-empty trajectory"),
            ..config.clone()
        };
        trajectory.append(integrate(&next, g, &perturbation)?);
        periods += extra;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbations::Harmonic;
    use std::f64::consts::TAU;

    fn synthetic(period: f64, n_periods: usize, spp: usize, decay: f64) -> Trajectory {
        let dt = period / spp as f64;
        let samples = (0..=n_periods * spp)
            .map(|i| {
                let t = i as f64 * dt;
                let env = 1.0 + 5.0 * (-decay * t).exp();
                State::new(0.01 * (TAU * t / period).sin() * env, 0.02 * (TAU * t / period).cos())
            })
            .collect();
        Trajectory { t0: 0.0, dt_sample: dt, samples, divergence: None }
    }

    #[test]
    fn periodic_signal_converges_with_exact_amplitudes() {
        let tr = synthetic(0.5, 8, 400, 1e3);
        let g = Gains::new(1.0, 1.0).unwrap();
        let r = detect_limit_cycle(&tr, g, RegWidth::new(1e-6).unwrap(), 0.5, 1e-3).unwrap();
        assert!(r.converged);
        assert!((r.w1_max - 0.01).abs() < 1e-9, "{}", r.w1_max);
        assert!((r.w1_min + 0.01).abs() < 1e-9);
        assert_eq!(r.periods_analysed, 8);
        assert!(r.n_transient_periods <= 1);
    }

    #[test]
    fn slowly_decaying_signal_is_not_converged() {
        let tr = synthetic(0.5, 8, 400, 0.05);
        let g = Gains::new(1.0, 1.0).unwrap();
        let r = detect_limit_cycle(&tr, g, RegWidth::new(1e-6).unwrap(), 0.5, 1e-3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.n_transient_periods, 8);
        assert!(r.relative_residual > 1e-3);
    }

    #[test]
    fn short_or_divergent_input_rejected() {
        let g = Gains::new(1.0, 1.0).unwrap();
        let w = RegWidth::new(1e-6).unwrap();
        let tr = synthetic(0.5, 5, 100, 1.0);
        assert!(matches!(detect_limit_cycle(&tr, g, w, 0.5, 1e-3), Err(Error::InsufficientData(_))));
        let mut tr = synthetic(0.5, 8, 100, 1.0);
        tr.divergence = Some(crate::integrator::Divergence { time: 4.0, state: State::new(1e13, 0.0) });
        assert!(matches!(detect_limit_cycle(&tr, g, w, 0.5, 1e-3), Err(Error::Divergence { .. })));
    }

    #[test]
    fn parabolic_refinement_recovers_peak_between_samples() {
        // coarse sampling of a cosine whose peak falls between samples
        let period = 1.0;
        let spp = 50;
        let dt = period / spp as f64;
        let samples: Vec<State> = (0..=8 * spp)
            .map(|i| State::new((TAU * (i as f64 * dt - 0.013)).cos(), 0.0))
            .collect();
        let tr = Trajectory { t0: 0.0, dt_sample: dt, samples, divergence: None };
        let g = Gains::new(1.0, 1.0).unwrap();
        let r = detect_limit_cycle(&tr, g, RegWidth::new(1e-6).unwrap(), period, 1e-3).unwrap();
        let raw_max = tr.samples.iter().map(|s| s.x1).fold(f64::MIN, f64::max);
        assert!((r.w1_max - 1.0).abs() < (raw_max - 1.0).abs());
        assert!((r.w1_max - 1.0).abs() < 1e-5);
    }

    fn ripple(l: f64, period: f64) -> PerturbationSpec {
        let w = TAU / period;
        let l1 = -l / (2.0 * w);
        PerturbationSpec::new(
            vec![Harmonic { amp: l1, omega: w, phase: 0.0 }, Harmonic { amp: l1 / 3.0, omega: 3.0 * w, phase: 0.0 }],
            period,
            l,
        )
        .unwrap()
    }

    #[test]
    fn zero_perturbation_finite_time_gains_collapse_to_band() {
        let l = 2.5;
        let g = Gains::new(1.8 * (2.1f64 * l).sqrt(), 1.1 * l).unwrap();
        let spec = PerturbationSpec::zero(0.25).unwrap();
        let opts = CycleOptions { x0: State::new(1.0, 0.0), delta: 1e-4, samples_per_period: 400, ..Default::default() };
        let run = simulate_cycle(g, &spec, &opts).unwrap();
        let r = run.report.unwrap();
        assert!(r.converged);
        assert!(r.max_abs_x1() <= 10.0 * opts.delta);
    }

    #[test]
    fn under_tuned_cycle_is_symmetric_and_bounded() {
        let (l, t) = (2.5, 0.25);
        let g = Gains::new(1.76, 1.08).unwrap();
        let opts = CycleOptions { samples_per_period: 1000, ..Default::default() };
        let run = simulate_cycle(g, &ripple(l, t), &opts).unwrap();
        let r = run.report.unwrap();
        assert!(r.converged);
        assert!(r.w1_min <= 0.0 && r.w1_max >= 0.0);
        assert!((r.w1_max + r.w1_min).abs() <= 0.05 * r.w1_max);
        assert!(r.max_abs_x1() < crate::analysis::prop3_bound(g, l, t));
        assert!(r.w2_max_abs <= 1.05 * crate::analysis::chatter_bound(g, l, t));
    }
}
