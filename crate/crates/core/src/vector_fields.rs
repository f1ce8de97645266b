//! Closed-loop vector fields of the super-twisting loop.
//!
//! With `x1 = y` and `x2 = -k2 ∫ sgn(y) + d(t)` the loop reads
//!
//! ```text
//! ẋ1 = -k1 |x1|^½ sgn(x1) + x2
//! ẋ2 = -k2 sgn(x1) + q(t)
//! ```
//!
//! The regularised field replaces `sgn` by the ramp [`phi_delta`] of width
//! `δ`, and the averaged field replaces `q(t)` by its period mean. Fixed-step
//! integration of the discontinuous field chatters numerically around
//! `x1 = 0`; that is expected and is the reason the regularised field exists.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::perturbations::Perturbation;

/// Super-twisting gains `(k1, k2)`, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
}

impl Gains {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        let g = Self { k1, k2 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(config_err(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(self.k2.is_finite() && self.k2 > 0.0) {
            return Err(config_err(format!("k2 must be positive, got {}", self.k2)));
        }
        Ok(())
    }

    /// `0 < k2 < L`: finite-time convergence is not guaranteed.
    pub fn is_under_tuned(&self, rate_bound: f64) -> bool {
        self.k2 > 0.0 && self.k2 < rate_bound
    }

    /// `k2 > L` and `k1 ≥ 1.8 √(k2 + L)`.
    pub fn is_finite_time(&self, rate_bound: f64) -> bool {
        crate::analysis::check_finite_time_gains(*self, rate_bound)
    }
}

/// Closed-loop state `(x1, x2)`; also used for state derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x1: f64,
    pub x2: f64,
}

impl State {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x1.abs().max(self.x2.abs())
    }
}

impl Add for State {
    type Output = State;
    fn add(self, rhs: State) -> State {
        State::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, rhs: State) -> State {
        State::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, rhs: f64) -> State {
        State::new(self.x1 * rhs, self.x2 * rhs)
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        State::new(-self.x1, -self.x2)
    }
}

/// Phase-plane coordinates `w1 = x1`, `w2 = ẋ1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WState {
    pub w1: f64,
    pub w2: f64,
}

/// Width `δ > 0` of the regularisation ramp.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct RegWidth(f64);

impl RegWidth {
    pub fn new(delta: f64) -> Result<Self> {
        if delta.is_finite() && delta > 0.0 {
            Ok(Self(delta))
        } else {
            Err(config_err(format!("regularisation width must be positive, got {delta}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Which right-hand side to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Discontinuous,
    #[default]
    Regularized,
    Averaged,
}

/// `sgn(v)` with `sgn(0) = 0`, so the origin is an equilibrium of the
/// unperturbed discontinuous field.
pub fn signum(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Saturating ramp: `1` for `v ≥ δ`, `v/δ` inside, `-1` for `v ≤ -δ`.
pub fn phi_delta(v: f64, width: RegWidth) -> f64 {
    let d = width.0;
    if v >= d {
        1.0
    } else if v <= -d {
        -1.0
    } else {
        v / d
    }
}

/// Residual `sgn(v) - φ_δ(v)`; zero outside `(-δ, δ)` and bounded by one.
pub fn rho(v: f64, width: RegWidth) -> f64 {
    signum(v) - phi_delta(v, width)
}

#[inline]
fn field_with(s: State, g: Gains, switch: f64, q: f64) -> State {
    State::new(-g.k1 * s.x1.abs().sqrt() * switch + s.x2, -g.k2 * switch + q)
}

fn check_finite(t: f64, s: State) -> Result<()> {
    if s.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { time: t, state: s })
    }
}

/// Discontinuous closed-loop field.
pub fn eval_discontinuous(t: f64, s: State, g: Gains, q: impl Fn(f64) -> f64) -> Result<State> {
    check_finite(t, s)?;
    Ok(field_with(s, g, signum(s.x1), q(t)))
}

/// Regularised field; identical to [`eval_discontinuous`] wherever `|x1| ≥ δ`.
pub fn eval_regularized(
    t: f64,
    s: State,
    g: Gains,
    q: impl Fn(f64) -> f64,
    width: RegWidth,
) -> Result<State> {
    check_finite(t, s)?;
    Ok(field_with(s, g, phi_delta(s.x1, width), q(t)))
}

/// Averaged field: the regularised field with `q(t)` frozen at its mean `q_bar`.
pub fn eval_averaged(s: State, g: Gains, q_bar: f64, width: RegWidth) -> Result<State> {
    check_finite(0.0, s)?;
    Ok(field_with(s, g, phi_delta(s.x1, width), q_bar))
}

/// Maps a state to `(w1, w2) = (x1, ẋ1)` using the regularised field.
///
/// `ẋ1` does not depend on `q`, so no time argument is needed.
pub fn to_w(s: State, g: Gains, width: RegWidth) -> WState {
    WState {
        w1: s.x1,
        w2: -g.k1 * s.x1.abs().sqrt() * phi_delta(s.x1, width) + s.x2,
    }
}

/// A fully specified closed loop: gains, perturbation, width and field kind.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub gains: Gains,
    pub perturbation: Perturbation,
    pub width: RegWidth,
    pub kind: FieldKind,
    q_bar: f64,
}

impl ClosedLoop {
    pub fn new(gains: Gains, perturbation: Perturbation, width: RegWidth, kind: FieldKind) -> Self {
        let q_bar = perturbation.mean_rate();
        Self { gains, perturbation, width, kind, q_bar }
    }

    /// Right-hand side without finiteness checks; the integrator handles divergence.
    #[inline]
    pub fn rhs(&self, t: f64, s: State) -> State {
        match self.kind {
            FieldKind::Discontinuous => {
                field_with(s, self.gains, signum(s.x1), self.perturbation.eval_q(t))
            }
            FieldKind::Regularized => field_with(
                s,
                self.gains,
                phi_delta(s.x1, self.width),
                self.perturbation.eval_q(t),
            ),
            FieldKind::Averaged => field_with(s, self.gains, phi_delta(s.x1, self.width), self.q_bar),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbations::{Harmonic, PerturbationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn w(d: f64) -> RegWidth {
        RegWidth::new(d).unwrap()
    }

    #[test]
    fn signum_values() {
        assert_eq!(signum(3.2), 1.0);
        assert_eq!(signum(0.0), 0.0);
        assert_eq!(signum(-1e-300), -1.0);
    }

    #[test]
    fn phi_delta_branches() {
        assert_eq!(phi_delta(2.0, w(1.0)), 1.0);
        assert_eq!(phi_delta(0.0, w(0.3)), 0.0);
        assert_eq!(phi_delta(-0.5, w(1.0)), -0.5);
        assert!(RegWidth::new(0.0).is_err());
        assert!(RegWidth::new(-1.0).is_err());
        assert!(RegWidth::new(f64::NAN).is_err());
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(2.0, w(1.0)), 0.0);
        assert_eq!(rho(0.5, w(1.0)), 0.5);
        assert_eq!(rho(0.0, w(1.0)), 0.0);
    }

    #[test]
    fn discontinuous_field_examples() {
        let q0 = |_t: f64| 0.0;
        let g = Gains::new(1.0, 1.0).unwrap();
        assert_eq!(eval_discontinuous(0.0, State::new(0.0, 0.0), g, q0).unwrap(), State::new(0.0, 0.0));

        let g = Gains::new(2.0, 3.0).unwrap();
        let f = eval_discontinuous(0.0, State::new(1.0, 0.0), g, |_| 0.5).unwrap();
        assert_eq!(f, State::new(-2.0, -2.5));

        let g = Gains::new(1.0, 1.0).unwrap();
        let f = eval_discontinuous(0.0, State::new(-4.0, 1.0), g, q0).unwrap();
        assert_eq!(f, State::new(3.0, 1.0));

        let err = eval_discontinuous(0.0, State::new(f64::NAN, 0.0), g, q0);
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn regularized_field_examples() {
        let g = Gains::new(1.7, 0.9).unwrap();
        let d = 1e-3;
        let q = |_t: f64| 0.0;
        let at_edge = State::new(d, 0.0);
        assert_eq!(
            eval_regularized(0.0, at_edge, g, q, w(d)).unwrap(),
            eval_discontinuous(0.0, at_edge, g, q).unwrap()
        );

        let half = eval_regularized(0.0, State::new(d / 2.0, 0.0), g, q, w(d)).unwrap();
        assert_eq!(half, State::new(-g.k1 * (d / 2.0).sqrt() * 0.5, -g.k2 / 2.0));

        let f = eval_regularized(1.3, State::new(0.0, 0.4), g, |_| 0.25, w(d)).unwrap();
        assert_eq!(f, State::new(0.4, 0.25));
    }

    #[test]
    fn averaged_field_examples() {
        let g = Gains::new(1.0, 2.0).unwrap();
        assert_eq!(eval_averaged(State::default(), g, 0.0, w(1e-3)).unwrap(), State::default());

        let s = State::new(2e-4, -0.3);
        assert_eq!(
            eval_averaged(s, g, 0.7, w(1e-3)).unwrap(),
            eval_regularized(12.0, s, g, |_| 0.7, w(1e-3)).unwrap()
        );

        let spec = PerturbationSpec::new(vec![Harmonic { amp: 0.1, omega: TAU, phase: 0.0 }], 1.0, 1.0).unwrap();
        let q_bar = spec.mean_rate();
        let unperturbed = eval_regularized(0.0, s, g, |_| 0.0, w(1e-3)).unwrap();
        let averaged = eval_averaged(s, g, q_bar, w(1e-3)).unwrap();
        assert!((averaged - unperturbed).max_abs() < 1e-12);
    }

    #[test]
    fn to_w_examples() {
        let g = Gains::new(2.0, 1.0).unwrap();
        let ws = to_w(State::new(0.0, 2.0), g, w(1e-3));
        assert_eq!((ws.w1, ws.w2), (0.0, 2.0));
        let ws = to_w(State::new(1.0, 0.0), g, w(1.0));
        assert_eq!((ws.w1, ws.w2), (1.0, -2.0));
    }

    #[test]
    fn rho_properties_randomised() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let d: f64 = 10f64.powf(rng.gen_range(-8.0..2.0));
            let v: f64 = rng.gen_range(-3.0..3.0) * d * 10f64.powf(rng.gen_range(-3.0..3.0));
            let r = rho(v, w(d));
            assert!(r.abs() <= 1.0);
            if v.abs() >= d {
                assert_eq!(r, 0.0);
            }
            if v != 0.0 {
                let smaller = v.abs() * rng.gen_range(1e-6..1.0);
                assert_eq!(rho(v, w(smaller)), 0.0);
            }
        }
    }

    #[test]
    fn field_agreement_outside_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let d: f64 = 10f64.powf(rng.gen_range(-7.0..0.0));
            let g = Gains::new(rng.gen_range(0.1..20.0), rng.gen_range(0.1..30.0)).unwrap();
            let mag = d * (1.0 + rng.gen_range(0.0..1e3));
            let x1 = if rng.gen_bool(0.5) { mag } else { -mag };
            let s = State::new(x1, rng.gen_range(-10.0..10.0));
            let qv = rng.gen_range(-30.0..30.0);
            let t = rng.gen_range(0.0..10.0);
            assert_eq!(
                eval_regularized(t, s, g, |_| qv, w(d)).unwrap(),
                eval_discontinuous(t, s, g, |_| qv).unwrap()
            );
        }
    }

    #[test]
    fn odd_symmetry_randomised() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = PerturbationSpec::new(
            vec![
                Harmonic { amp: 0.3, omega: TAU / 0.5, phase: 0.2 },
                Harmonic { amp: -0.1, omega: 3.0 * TAU / 0.5, phase: 0.0 },
            ],
            0.5,
            10.0,
        )
        .unwrap();
        let neg = spec.negated();
        for _ in 0..10_000 {
            let g = Gains::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0)).unwrap();
            let d = w(10f64.powf(rng.gen_range(-6.0..-1.0)));
            let s = State::new(rng.gen_range(-0.2..0.2), rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(0.0..5.0);
            let a = eval_regularized(t, s, g, |t| spec.eval_q(t), d).unwrap();
            let b = eval_regularized(t, -s, g, |t| neg.eval_q(t), d).unwrap();
            assert_eq!(b, -a);
        }
    }

    #[test]
    fn continuity_across_seams() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let d: f64 = 10f64.powf(rng.gen_range(-6.0..0.0));
            let g = Gains::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0)).unwrap();
            let seam = if rng.gen_bool(0.5) { d } else { -d };
            let eps = rng.gen_range(0.0..1e-9);
            let (a, b) = (State::new(seam - eps, 0.3), State::new(seam + eps, 0.3));
            let fa = eval_regularized(0.0, a, g, |_| 0.0, w(d)).unwrap();
            let fb = eval_regularized(0.0, b, g, |_| 0.0, w(d)).unwrap();
            let k = g.k1.max(g.k2);
            let allowed = k * 1e-9 / d * (1.0 + d.sqrt()) * 2.0;
            assert!((fa - fb).max_abs() <= allowed, "{:?} {:?} allowed {allowed}", fa, fb);
        }
    }
}
