//! Parameter sweeps over `L`, `T` or one gain, one simulate-and-detect run
//! per grid point.
//!
//! The closed loop is homogeneous: replacing `L` by `λL` together with
//! `k2 → λk2`, `k1 → √λ k1` scales the state by `λ`; replacing `T` by `τT`
//! with gains unchanged scales `x1` by `τ²` and `x2` by `τ`. Homogeneous
//! scaling applies the same maps to the gains and to `δ` and `x0`, so every
//! grid point is the same orbit seen at a different scale up to integration
//! error. Fixed scaling keeps the reference values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cycle::{simulate_cycle, CycleOptions, LimitCycleReport};
use super::fit::{linear_fit, loglog_fit, LinearFit};
use super::{validate_n_fraction, BoundSet};
use crate::error::{config_err, Result};
use crate::integrator::fmt_f64;
use crate::scenarios::ripple_rate;
use crate::vector_fields::{Gains, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Fixed,
    #[default]
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "L")]
    RateBound,
    #[serde(rename = "T")]
    Period,
    #[serde(rename = "k1")]
    K1,
    #[serde(rename = "k2")]
    K2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Reference operating point the grid is built around. `cycle.delta` and
/// `cycle.x0` are the reference regularisation width and initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBase {
    pub gains: Gains,
    pub rate_bound: f64,
    pub period: f64,
    pub n_fraction: f64,
    pub gain_scaling: Scaling,
    pub delta_scaling: Scaling,
    pub cycle: CycleOptions,
}

/// Concrete run parameters for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gains: Gains,
    pub rate_bound: f64,
    pub period: f64,
    pub delta: f64,
    pub x0: State,
}

impl SweepBase {
    /// Run parameters at `(L, T)` with the reference gains, scaled per the
    /// configured rules.
    pub fn point_at(&self, rate_bound: f64, period: f64) -> SweepPoint {
        let lambda = rate_bound / self.rate_bound;
        let tau = period / self.period;
        let gains = match self.gain_scaling {
            Scaling::Fixed => self.gains,
            Scaling::Homogeneous => Gains { k1: self.gains.k1 * lambda.sqrt(), k2: self.gains.k2 * lambda },
        };
        let (delta, x0) = match self.delta_scaling {
            Scaling::Fixed => (self.cycle.delta, self.cycle.x0),
            Scaling::Homogeneous => {
                let s1 = lambda * tau * tau;
                (self.cycle.delta * s1, State::new(self.cycle.x0.x1 * s1, self.cycle.x0.x2 * lambda * tau))
            }
        };
        SweepPoint { gains, rate_bound, period, delta, x0 }
    }

    pub fn point(&self, param: SweepParam, value: f64) -> SweepPoint {
        match param {
            SweepParam::RateBound => self.point_at(value, self.period),
            SweepParam::Period => self.point_at(self.rate_bound, value),
            SweepParam::K1 => SweepPoint { gains: Gains { k1: value, ..self.gains }, ..self.point_at(self.rate_bound, self.period) },
            SweepParam::K2 => SweepPoint { gains: Gains { k2: value, ..self.gains }, ..self.point_at(self.rate_bound, self.period) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub point: SweepPoint,
    pub bounds: Option<BoundSet>,
    pub report: Option<LimitCycleReport>,
    /// Set when the run diverged, was misconfigured or was too short.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        self.report.is_some_and(|r| r.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepParam,
    pub rows: Vec<SweepRow>,
}

fn run_point(base: &SweepBase, param: SweepParam, value: f64) -> SweepRow {
    let point = base.point(param, value);
    let outcome = (|| {
        let g = Gains::new(point.gains.k1, point.gains.k2)?;
        let bounds = BoundSet::new(g, point.rate_bound, point.period, base.n_fraction)?;
        let spec = ripple_rate(point.rate_bound, point.period)?;
        let opts = CycleOptions { x0: point.x0, delta: point.delta, ..base.cycle.clone() };
        let run = simulate_cycle(g, &spec, &opts)?;
        Ok::<_, crate::Error>((bounds, run.report))
    })();
    let (bounds, report, error) = match outcome {
        Ok((b, Ok(r))) => (Some(b), Some(r), None),
        Ok((b, Err(e))) => (Some(b), None, Some(e.to_string())),
        Err(e) => (None, None, Some(e.to_string())),
    };
    SweepRow { param: value, point, bounds, report, error }
}

/// One simulate-and-detect run per grid value, in parallel, rows in grid order.
/// Failures are recorded in their row.
pub fn run_sweep(base: &SweepBase, axis: &SweepAxis) -> Result<SweepTable> {
    validate_n_fraction(base.n_fraction)?;
    if axis.values.is_empty() {
        return Err(config_err("sweep.values must not be empty"));
    }
    let rows = axis.values.par_iter().map(|&v| run_point(base, axis.param, v)).collect();
    Ok(SweepTable { axis: axis.param, rows })
}

impl SweepTable {
    pub const CSV_HEADER: [&'static str; 9] =
        ["param", "w1_max", "w1_min", "w2_max", "prop3_bound", "W1", "chatter_bound", "converged", "residual"];

    /// Fit of `w1_max` against the swept value over converged rows: linear
    /// for `L`, log-log for `T`, none for gain sweeps.
    pub fn fit(&self) -> Option<LinearFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.converged())
            .map(|r| (r.param, r.report.expect("converged row has a report").w1_max))
            .unzip();
        match self.axis {
            SweepParam::RateBound => linear_fit(&x, &y),
            SweepParam::Period => loglog_fit(&x, &y),
            SweepParam::K1 | SweepParam::K2 => None,
        }
    }

    /// Missing values (failed runs, inapplicable `W1`) are written as `NaN`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, header_comments: &[String]) -> std::io::Result<()> {
        let mut out = out;
        for line in header_comments {
            writeln!(out, "# {line}")?;
        }
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(Self::CSV_HEADER)?;
        for row in &self.rows {
            let r = row.report;
            let b = row.bounds;
            let num = |v: Option<f64>| fmt_f64(v.unwrap_or(f64::NAN));
            wtr.write_record([
                fmt_f64(row.param),
                num(r.map(|r| r.w1_max)),
                num(r.map(|r| r.w1_min)),
                num(r.map(|r| r.w2_max_abs)),
                num(b.map(|b| b.prop3_bound)),
                num(b.and_then(|b| b.w1)),
                num(b.map(|b| b.chatter_bound)),
                row.converged().to_string(),
                num(r.map(|r| r.return_map_residual)),
            ])?;
        }
        wtr.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SweepBase {
        SweepBase {
            gains: Gains::new(1.76, 1.08).unwrap(),
            rate_bound: 2.5,
            period: 0.25,
            n_fraction: 0.5,
            gain_scaling: Scaling::Homogeneous,
            delta_scaling: Scaling::Homogeneous,
            cycle: CycleOptions { samples_per_period: 500, ..Default::default() },
        }
    }

    #[test]
    fn homogeneous_point_scaling() {
        let b = SweepBase { cycle: CycleOptions { x0: State::new(1.0, 1.0), ..base().cycle }, ..base() };
        let p = b.point(SweepParam::RateBound, 10.0);
        assert!((p.gains.k2 - 4.0 * 1.08).abs() < 1e-12);
        assert!((p.gains.k1 - 2.0 * 1.76).abs() < 1e-12);
        assert!((p.delta - 4e-5).abs() < 1e-18);
        assert_eq!(p.x0, State::new(4.0, 4.0));
        let p = b.point(SweepParam::Period, 0.5);
        assert_eq!(p.gains, b.gains);
        assert!((p.delta - 4e-5).abs() < 1e-18);
        assert_eq!(p.x0, State::new(4.0, 2.0));
        let p = b.point(SweepParam::K1, 3.0);
        assert_eq!(p.gains, Gains { k1: 3.0, k2: 1.08 });
        assert_eq!(p.delta, 1e-5);
    }

    #[test]
    fn fixed_scaling_keeps_reference() {
        let b = SweepBase { gain_scaling: Scaling::Fixed, delta_scaling: Scaling::Fixed, ..base() };
        let p = b.point(SweepParam::RateBound, 10.0);
        assert_eq!(p.gains, b.gains);
        assert_eq!(p.delta, 1e-5);
    }

    #[test]
    fn rows_keep_grid_order_and_record_failures() {
        let axis = SweepAxis { param: SweepParam::K2, values: vec![1.08, -1.0, 0.9] };
        let t = run_sweep(&base(), &axis).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.param).collect::<Vec<_>>(), vec![1.08, -1.0, 0.9]);
        assert!(t.rows[1].error.is_some() && t.rows[1].report.is_none());
        assert!(t.rows[0].converged() && t.rows[2].converged());
        assert!(t.fit().is_none());
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["x".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# x\nparam,w1_max,w1_min,w2_max,prop3_bound,W1,chatter_bound,converged,residual\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(3).unwrap().contains("NaN"));
    }

    #[test]
    fn parallel_matches_serial() {
        let b = base();
        let axis = SweepAxis { param: SweepParam::RateBound, values: vec![1.0, 2.5, 5.0] };
        let par = run_sweep(&b, &axis).unwrap();
        let serial: Vec<SweepRow> = axis.values.iter().map(|&v| run_point(&b, axis.param, v)).collect();
        assert_eq!(par.rows, serial);
    }

    #[test]
    fn empty_grid_and_bad_fraction_rejected() {
        let axis = SweepAxis { param: SweepParam::RateBound, values: vec![] };
        assert!(run_sweep(&base(), &axis).is_err());
        let axis = SweepAxis { param: SweepParam::RateBound, values: vec![1.0] };
        assert!(run_sweep(&SweepBase { n_fraction: 0.7, ..base() }, &axis).is_err());
    }
}
