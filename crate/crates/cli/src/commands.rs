use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use stsmc_core::analysis::fit::linear_fit;
use stsmc_core::analysis::sweep::{run_sweep, SweepBase};
use stsmc_core::analysis::ConditionReport;
use stsmc_core::integrator::{fmt_f64, integrate_fn, stability_cap};
use stsmc_core::scenarios::{reproduce_table1, Table1Row};
use stsmc_core::tuning::validate_tuning;
use stsmc_core::vector_fields::ClosedLoop;
use stsmc_core::{
    simulate_cycle, tune_gains, CycleOptions, Error, Gains, Perturbation, RegWidth, SimConfig, Trajectory,
    TuningProblem, SCHEMA_VERSION,
};

use crate::config::{check_schema_version, field_error, read_json, Overrides, Resolved, ScenarioConfig};
use crate::manifest::{Command, RunManifest};

/// Samples kept for non-periodic runs.
const MAX_RECORDED_SAMPLES: usize = 20_000;

/// How a successful invocation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Diverged,
}

pub struct RunContext {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl RunContext {
    fn manifest(&self, command: Command) -> RunManifest {
        RunManifest::new(command, self.config.as_deref(), &self.out)
    }

    fn config_path(&self) -> Result<&Path> {
        self.config.as_deref().ok_or_else(|| anyhow!("--config <path> is required for this command"))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn load_scenario(ctx: &RunContext) -> Result<(ScenarioConfig, Resolved)> {
    let cfg: ScenarioConfig = read_json(ctx.config_path()?)?;
    let resolved = cfg.resolve(ctx.overrides)?;
    Ok((cfg, resolved))
}

fn divergence_json(traj: &Trajectory) -> Value {
    traj.divergence.map_or(Value::Null, |d| json!({ "time": d.time, "state": d.state }))
}

fn conditions(r: &Resolved) -> Result<Option<ConditionReport>> {
    match r.period {
        Some(t) => Ok(Some(ConditionReport::new(r.gains, r.rate_bound, t, r.perturbation.mean_rate(), r.n_fraction)?)),
        None => Ok(None),
    }
}

pub fn simulate(ctx: &RunContext) -> Result<Outcome> {
    let manifest = ctx.manifest(Command::Simulate);
    let (_, r) = load_scenario(ctx)?;
    let width = RegWidth::new(r.delta)?;
    let header = manifest.header_lines();

    let (traj, dt, limit_cycle, extra) = match &r.perturbation {
        Perturbation::Periodic(spec) => {
            let run = simulate_cycle(r.gains, spec, &r.cycle)?;
            let (report, error) = match run.report {
                Ok(rep) => (Some(rep), None),
                Err(Error::Divergence { .. }) => (None, None),
                Err(e) => (None, Some(e.to_string())),
            };
            (run.trajectory, run.config.dt, report, json!({ "error": error }))
        }
        Perturbation::ConstantRate(_) => {
            let t_end = r.t_end.ok_or_else(|| anyhow!("missing field `t_end` (required for a constant_rate perturbation)"))?;
            let dt = r.dt.unwrap_or_else(|| stability_cap(r.gains, r.perturbation.rate_bound(), None, r.delta));
            let cfg = SimConfig {
                delta: r.delta,
                dt,
                t0: 0.0,
                t_end,
                x0: r.x0,
                field: r.cycle.field,
                record_stride: 1,
            };
            let stride = (cfg.n_steps() / MAX_RECORDED_SAMPLES).max(1);
            let cfg = SimConfig { record_stride: stride, ..cfg };
            cfg.validate(r.gains, &r.perturbation)?;
            let system = ClosedLoop::new(r.gains, r.perturbation.clone(), width, cfg.field);
            let traj = integrate_fn(|t, s| system.rhs(t, s), 0.0, cfg.x0, dt, cfg.n_steps(), stride);
            let slope = x2_slope(&traj);
            (traj, dt, None, json!({ "x2_slope": slope }))
        }
    };

    let mut w = ctx.create("trajectory.csv")?;
    traj.write_csv(&mut w, r.gains, width, &header)?;
    w.flush()?;

    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "gains": r.gains,
        "physical_gains": r.physical,
        "motor": r.motor,
        "L": r.rate_bound,
        "T": r.period,
        "delta": r.delta,
        "dt": dt,
        "x0": r.x0,
        "field": r.cycle.field,
        "conditions": conditions(&r)?,
        "limit_cycle": limit_cycle,
        "divergence": divergence_json(&traj),
    });
    merge(&mut report, extra);
    ctx.write_json("report.json", &report)?;

    if let Some(d) = traj.divergence {
        eprintln!("diverged at t = {} (x1 = {}, x2 = {})", d.time, d.state.x1, d.state.x2);
        return Ok(Outcome::Diverged);
    }
    match limit_cycle {
        Some(rep) => out!(
            "converged = {}, w1_max = {}, w1_min = {}, w2_max_abs = {}, residual = {}",
            rep.converged, rep.w1_max, rep.w1_min, rep.w2_max_abs, rep.return_map_residual
        ),
        None => out!("completed {} samples", traj.len()),
    }
    Ok(Outcome::Ok)
}

fn merge(into: &mut Value, extra: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, extra) {
        a.extend(b);
    }
}

/// Least-squares slope of `x2` over the second half of the recorded samples.
pub fn x2_slope(traj: &Trajectory) -> Option<f64> {
    let start = traj.len() / 2;
    let t: Vec<f64> = (start..traj.len()).map(|i| traj.time(i)).collect();
    let x2: Vec<f64> = traj.samples[start..].iter().map(|s| s.x2).collect();
    linear_fit(&t, &x2).map(|f| f.slope)
}

pub fn sweep(ctx: &RunContext) -> Result<Outcome> {
    let manifest = ctx.manifest(Command::Sweep);
    let (cfg, r) = load_scenario(ctx)?;
    let (axis, gain_scaling, delta_scaling) = cfg.sweep_axis()?;
    let period = r.period.ok_or_else(|| anyhow!("missing field `T`: sweeps need a periodic perturbation"))?;
    if cfg.perturbation.is_some() {
        bail!("field `perturbation`: sweeps always use the torque-ripple profile");
    }
    let base = SweepBase {
        gains: r.gains,
        rate_bound: r.rate_bound,
        period,
        n_fraction: r.n_fraction,
        gain_scaling,
        delta_scaling,
        cycle: r.cycle.clone(),
    };
    let table = run_sweep(&base, &axis)?;
    let mut w = ctx.create("sweep.csv")?;
    table.write_csv(&mut w, &manifest.header_lines())?;
    w.flush()?;

    let fit = table.fit();
    let converged = table.rows.iter().filter(|row| row.converged()).count();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "param": axis.param,
        "kind": match axis.param {
            stsmc_core::analysis::sweep::SweepParam::RateBound => "linear",
            stsmc_core::analysis::sweep::SweepParam::Period => "log-log",
            _ => "none",
        },
        "fit": fit.map(|f| json!({ "slope": f.slope, "intercept": f.intercept, "R2": f.r2, "n_points": f.n_points })),
        "rows": table.rows.len(),
        "converged_rows": converged,
        "base": base,
    });
    ctx.write_json("fit.json", &summary)?;
    for row in &table.rows {
        match (&row.report, &row.error) {
            (Some(rep), _) => out!("{} w1_max={} converged={}", row.param, rep.w1_max, rep.converged),
            (None, Some(e)) => out!("{} error: {e}", row.param),
            (None, None) => out!("{} no result", row.param),
        }
    }
    if let Some(f) = fit {
        out!("fit: slope = {}, intercept = {}, R2 = {}", f.slope, f.intercept, f.r2);
    }
    Ok(Outcome::Ok)
}

#[derive(serde::Deserialize)]
struct TuneFile {
    schema_version: Option<u32>,
    #[serde(flatten)]
    problem: Value,
}

pub fn tune(ctx: &RunContext, validate: bool) -> Result<Outcome> {
    let manifest = ctx.manifest(Command::Tune);
    let path = ctx.config_path()?;
    let file: TuneFile = read_json(path)?;
    check_schema_version(file.schema_version)?;
    let mut problem: TuningProblem =
        serde_path_to_error::deserialize(file.problem).map_err(|e| field_error(path, e.path(), e.inner()))?;
    if let Some(n) = ctx.overrides.n_fraction {
        problem.n_fraction = n;
    }
    let result = tune_gains(&problem)?;
    let validation = if validate && result.feasible {
        let mut opts = CycleOptions { dt: ctx.overrides.dt, ..CycleOptions::default() };
        if let Some(delta) = ctx.overrides.delta {
            opts.delta = delta;
        }
        Some(validate_tuning(&result, &problem, &opts)?)
    } else {
        None
    };
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "problem": problem,
        "result": result,
        "validation": validation,
    });
    ctx.write_json("tuning.json", &out)?;
    out!("{}", serde_json::to_string_pretty(&json!({ "result": result, "validation": validation }))?);
    Ok(Outcome::Ok)
}

pub fn table1(ctx: &RunContext) -> Result<Outcome> {
    let manifest = ctx.manifest(Command::Table1);
    let n = ctx.overrides.n_fraction.unwrap_or(stsmc_core::analysis::DEFAULT_N_FRACTION);
    let mut opts = CycleOptions { dt: ctx.overrides.dt, ..CycleOptions::default() };
    if let Some(delta) = ctx.overrides.delta {
        opts.delta = delta;
    }
    let rows = reproduce_table1(n, &opts)?;
    let mut w = ctx.create("table1.csv")?;
    for line in manifest.header_lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# n_fraction={} delta={}", fmt_f64(n), fmt_f64(opts.delta))?;
    write_table1(&mut w, &rows)?;
    w.flush()?;
    // stdout may be a closed pipe; the CSV is already on disk
    let _ = write_table1(std::io::stdout().lock(), &rows);
    Ok(Outcome::Ok)
}

fn write_table1<W: Write>(out: W, rows: &[Table1Row]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(Table1Row::CSV_HEADER)?;
    for r in rows {
        let nums = [r.period, r.rate_bound, r.kbar1, r.kbar2, r.k1, r.k2, r.sim_abs_x1, r.w1];
        let refs = [r.ref_k1, r.ref_k2, r.ref_abs_x1, r.ref_w1, r.ref_sim_abs_x1, r.ref_gains_w1];
        let mut record: Vec<String> = nums.iter().map(|v| fmt_f64(*v)).collect();
        record.push(r.target_unmet.to_string());
        record.extend(refs.iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GainArgs {
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub rate_bound: Option<f64>,
    pub period: Option<f64>,
    pub mean_rate: Option<f64>,
}

#[derive(Serialize)]
struct CheckGainsOutput<'a> {
    schema_version: u32,
    manifest: &'a RunManifest,
    #[serde(flatten)]
    report: &'a ConditionReport,
}

pub fn check_gains(ctx: &RunContext, args: GainArgs) -> Result<Outcome> {
    let manifest = ctx.manifest(Command::CheckGains);
    let from_config = match ctx.config {
        Some(_) => Some(load_scenario(ctx)?.1),
        None => None,
    };
    let pick = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
        flag.or(cfg).ok_or_else(|| anyhow!("missing value for `{name}` (flag or --config)"))
    };
    let c = from_config.as_ref();
    let k1 = pick(args.k1, c.map(|r| r.gains.k1), "k1")?;
    let k2 = pick(args.k2, c.map(|r| r.gains.k2), "k2")?;
    let l = pick(args.rate_bound, c.map(|r| r.rate_bound), "L")?;
    let t = pick(args.period, c.and_then(|r| r.period), "T")?;
    let q_bar = args.mean_rate.or(c.map(|r| r.perturbation.mean_rate())).unwrap_or(0.0);
    let n = ctx.overrides.n_fraction.or(c.map(|r| r.n_fraction)).unwrap_or(stsmc_core::analysis::DEFAULT_N_FRACTION);
    let g = Gains::new(k1, k2)?;
    let report = ConditionReport::new(g, l, t, q_bar, n)?;
    let out = serde_json::to_value(CheckGainsOutput { schema_version: SCHEMA_VERSION, manifest: &manifest, report: &report })?;
    ctx.write_json("check_gains.json", &out)?;

    let yes = |b: bool| if b { "yes" } else { "no" };
    out!("gains k1 = {k1}, k2 = {k2}; L = {l}, T = {t}, mean rate = {q_bar}");
    out!("  finite-time (k2 > L, k1 >= 1.8 sqrt(k2 + L)):   {}", yes(report.finite_time));
    out!("  under-tuned (0 < k2 < L):                        {}", yes(report.under_tuned));
    out!("  k2 > |mean rate|:                                {}", yes(report.mean_rate_k2));
    out!("  k1 >= 1.8 sqrt(k2 + |mean rate|):                {}", yes(report.mean_rate_k1));
    out!("  k1 > sqrt(2 (L - k2)):                           {}", yes(report.w1_bound_gain));
    out!("  max |x1| bound (k2 + L) T^2 / 8:                 {}", report.bounds.prop3_bound);
    match report.bounds.w1 {
        Some(w) => out!("  W1 (n = {n}):                                   {w}"),
        None => out!("  W1 (n = {n}):                                   not applicable"),
    }
    out!("  chatter bound (k2 + L) T / 2:                    {}", report.bounds.chatter_bound);
    Ok(Outcome::Ok)
}
