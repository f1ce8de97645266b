//! Fixed-step classical RK4 integration of the closed-loop fields.
//!
//! The regularised field has a local Lipschitz constant of order
//! `k1 δ^{-1/2} + k2/δ` inside the ramp, which adaptive controllers handle
//! poorly. Integration therefore uses a fixed step bounded by
//! [`stability_cap`]. Divergence (a non-finite component or one beyond
//! [`DIVERGENCE_THRESHOLD`]) stops the run and is recorded in the
//! [`Trajectory`]; it is data, not an error.

use std::io::Write;

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::perturbations::Perturbation;
use crate::vector_fields::{to_w, ClosedLoop, FieldKind, Gains, RegWidth, State};

pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Largest admissible step: `min(T/2000, 0.2 δ/(k2 + L), 0.2 √δ / k1)`.
///
/// The `T/2000` term is dropped for non-periodic perturbations.
pub fn stability_cap(g: Gains, rate_bound: f64, period: Option<f64>, delta: f64) -> f64 {
    let mut cap = (0.2 * delta / (g.k2 + rate_bound)).min(0.2 * delta.sqrt() / g.k1);
    if let Some(t) = period {
        cap = cap.min(t / 2000.0);
    }
    cap
}

/// Default regularisation width for a given initial state: `1e-5 · max(1, |x0|∞)`.
pub fn default_delta(x0: State) -> f64 {
    1e-5 * x0.max_abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub delta: f64,
    pub dt: f64,
    pub t0: f64,
    pub t_end: f64,
    pub x0: State,
    pub field: FieldKind,
    pub record_stride: usize,
}

impl SimConfig {
    /// Configuration covering `periods` periods of `T`, with exactly
    /// `samples_per_period` recorded samples per period and the largest
    /// step below the stability cap that keeps that alignment.
    pub fn for_periods(
        g: Gains,
        perturbation: &Perturbation,
        delta: f64,
        x0: State,
        periods: usize,
        samples_per_period: usize,
    ) -> Result<Self> {
        let period = perturbation
            .period()
            .ok_or_else(|| config_err("a periodic perturbation is required to size the run in periods"))?;
        if samples_per_period == 0 {
            return Err(config_err("samples_per_period must be at least 1"));
        }
        RegWidth::new(delta)?;
        g.validate()?;
        let cap = stability_cap(g, perturbation.rate_bound(), Some(period), delta);
        let sample_dt = period / samples_per_period as f64;
        let stride = (sample_dt / cap).ceil().max(1.0) as usize;
        Ok(Self {
            delta,
            dt: sample_dt / stride as f64,
            t0: 0.0,
            t_end: period * periods as f64,
            x0,
            field: FieldKind::Regularized,
            record_stride: stride,
        })
    }

    /// Replaces the step while keeping the sampling interval as close as possible.
    pub fn with_dt(mut self, dt: f64) -> Self {
        let sample_dt = self.dt * self.record_stride as f64;
        self.record_stride = ((sample_dt / dt).round() as usize).max(1);
        self.dt = dt;
        self
    }

    pub fn n_steps(&self) -> usize {
        let span = (self.t_end - self.t0) / self.dt;
        // tolerate rounding in t_end = n·dt
        (span - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self, g: Gains, perturbation: &Perturbation) -> Result<()> {
        g.validate()?;
        RegWidth::new(self.delta)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(config_err(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t0.is_finite() && self.t_end >= self.t0) {
            return Err(config_err("t_end must be finite and not before t0"));
        }
        if !self.x0.is_finite() {
            return Err(config_err("x0 must be finite"));
        }
        if self.record_stride == 0 {
            return Err(config_err("record_stride must be at least 1"));
        }
        let cap = stability_cap(g, perturbation.rate_bound(), perturbation.period(), self.delta);
        if self.dt > cap * (1.0 + 1e-9) {
            return Err(config_err(format!("dt = {} exceeds the stability cap {cap}", self.dt)));
        }
        Ok(())
    }
}

/// Time and state of the first sample that left the finite region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Divergence {
    pub time: f64,
    pub state: State,
}

/// Uniformly sampled solution; samples are finite up to `divergence`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt_sample: f64,
    pub samples: Vec<State>,
    pub divergence: Option<Divergence>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt_sample
    }

    pub fn t_last(&self) -> f64 {
        self.time(self.samples.len().saturating_sub(1))
    }

    pub fn last(&self) -> Option<State> {
        self.samples.last().copied()
    }

    /// State at time `t` by linear interpolation between samples.
    pub fn interpolate(&self, t: f64) -> Option<State> {
        if self.samples.is_empty() {
            return None;
        }
        let pos = (t - self.t0) / self.dt_sample;
        let last = (self.samples.len() - 1) as f64;
        if pos < -1e-9 || pos > last + 1e-9 {
            return None;
        }
        let pos = pos.clamp(0.0, last);
        let i = (pos.floor() as usize).min(self.samples.len() - 1);
        let frac = pos - i as f64;
        if frac == 0.0 || i + 1 == self.samples.len() {
            return Some(self.samples[i]);
        }
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        Some(a + (b - a) * frac)
    }

    /// Appends a continuation whose first sample repeats this trajectory's last one.
    pub fn append(&mut self, next: Trajectory) {
        self.samples.extend(next.samples.into_iter().skip(1));
        self.divergence = next.divergence;
    }

    /// Writes `t,x1,x2,w1,w2` with 17 significant digits. Every line of
    /// `header_comments` is emitted first, prefixed with `# `.
    pub fn write_csv<W: Write>(
        &self,
        out: W,
        g: Gains,
        width: RegWidth,
        header_comments: &[String],
    ) -> std::io::Result<()> {
        let mut out = out;
        for line in header_comments {
            writeln!(out, "# {line}")?;
        }
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "x1", "x2", "w1", "w2"])?;
        for (i, s) in self.samples.iter().enumerate() {
            let w = to_w(*s, g, width);
            wtr.write_record([
                fmt_f64(self.time(i)),
                fmt_f64(s.x1),
                fmt_f64(s.x2),
                fmt_f64(w.w1),
                fmt_f64(w.w2),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[inline]
fn rk4_step(rhs: &impl Fn(f64, State) -> State, t: f64, x: State, dt: f64) -> State {
    let h2 = 0.5 * dt;
    let k1 = rhs(t, x);
    let k2 = rhs(t + h2, x + k1 * h2);
    let k3 = rhs(t + h2, x + k2 * h2);
    let k4 = rhs(t + dt, x + k3 * dt);
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

fn out_of_bounds(s: State) -> bool {
    !(s.x1.abs() <= DIVERGENCE_THRESHOLD && s.x2.abs() <= DIVERGENCE_THRESHOLD)
}

/// Integrates an arbitrary two-state field with RK4.
///
/// Records `x0` and then every `stride`-th step. Stops at the first state
/// that is non-finite or exceeds [`DIVERGENCE_THRESHOLD`]; that state is
/// reported in `divergence` and not recorded as a sample.
pub fn integrate_fn(
    rhs: impl Fn(f64, State) -> State,
    t0: f64,
    x0: State,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> Trajectory {
    let stride = stride.max(1);
    let mut samples = Vec::with_capacity(n_steps / stride + 1);
    samples.push(x0);
    let mut x = x0;
    let mut divergence = None;
    for i in 0..n_steps {
        let t = t0 + i as f64 * dt;
        x = rk4_step(&rhs, t, x, dt);
        if out_of_bounds(x) {
            divergence = Some(Divergence { time: t0 + (i + 1) as f64 * dt, state: x });
            break;
        }
        if (i + 1) % stride == 0 {
            samples.push(x);
        }
    }
    Trajectory { t0, dt_sample: dt * stride as f64, samples, divergence }
}

/// Integrates the closed loop selected by `cfg.field`.
///
/// For the averaged field the perturbation enters only through its mean rate.
pub fn integrate(cfg: &SimConfig, g: Gains, p: &Perturbation) -> Result<Trajectory> {
    cfg.validate(g, p)?;
    let system = ClosedLoop::new(g, p.clone(), RegWidth::new(cfg.delta)?, cfg.field);
    Ok(integrate_fn(
        |t, s| system.rhs(t, s),
        cfg.t0,
        cfg.x0,
        cfg.dt,
        cfg.n_steps(),
        cfg.record_stride,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X1Zero,
    X2Zero,
    W2Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub t_cross: f64,
    pub direction: Direction,
    pub axis: Axis,
}

/// Zero crossings of the selected coordinate, located by linear interpolation.
///
/// A sample lying exactly on zero counts as the end of the crossing that
/// reached it, so a touch-and-return produces no event.
pub fn find_crossings(traj: &Trajectory, axis: Axis, g: Gains, width: RegWidth) -> Vec<CrossingEvent> {
    let value = |s: &State| match axis {
        Axis::X1Zero => s.x1,
        Axis::X2Zero => s.x2,
        Axis::W2Zero => to_w(*s, g, width).w2,
    };
    let mut events = Vec::new();
    // last nonzero sample and the first zero sample seen after it
    let mut prev: Option<(usize, f64)> = None;
    let mut first_zero: Option<usize> = None;
    for (i, s) in traj.samples.iter().enumerate() {
        let v = value(s);
        if v == 0.0 {
            first_zero = first_zero.or(Some(i));
            continue;
        }
        if let Some((j, u)) = prev {
            let direction = if u < 0.0 && v > 0.0 {
                Some(Direction::Rising)
            } else if u > 0.0 && v < 0.0 {
                Some(Direction::Falling)
            } else {
                None
            };
            if let Some(direction) = direction {
                let t_cross = match first_zero {
                    Some(z) => traj.time(z),
                    None => traj.time(j) + u / (u - v) * (traj.time(i) - traj.time(j)),
                };
                events.push(CrossingEvent { t_cross, direction, axis });
            }
        }
        prev = Some((i, v));
        first_zero = None;
    }
    events
}
