//! Artifact writers: trajectory CSV (stable schema, 17 significant
//! digits), verification reports in text and JSON, and figure emission.

use crate::config::ExperimentConfig;
use crate::svg::{LinePlot, Series};
use anyhow::{Context, Result};
use pblf_core::sim::{RunMetrics, TrajectoryRecord};
use pblf_core::verify::VerificationReport;
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// One value, locale-independent, 17 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header: `t,x1..xn,z1..zn,alpha1..alpha{n-1},u,V,Vdot_analytic`.
pub fn trajectory_header(n: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=n {
        write!(h, ",x{i}").unwrap();
    }
    for i in 1..=n {
        write!(h, ",z{i}").unwrap();
    }
    for i in 1..n {
        write!(h, ",alpha{i}").unwrap();
    }
    h.push_str(",u,V,Vdot_analytic");
    h
}

pub fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let n = rec.order();
    let mut out = String::with_capacity(rec.len() * 32 * (2 * n + 4));
    out.push_str(&trajectory_header(n));
    out.push('\n');
    for row in 0..rec.len() {
        out.push_str(&fmt_value(rec.t[row]));
        for v in &rec.x[row] {
            out.push(',');
            out.push_str(&fmt_value(*v));
        }
        for v in &rec.z[row] {
            out.push(',');
            out.push_str(&fmt_value(*v));
        }
        for v in &rec.alpha[row] {
            out.push(',');
            out.push_str(&fmt_value(*v));
        }
        out.push(',');
        out.push_str(&fmt_value(rec.u[row]));
        out.push(',');
        out.push_str(&fmt_value(rec.v[row]));
        out.push(',');
        out.push_str(&fmt_value(rec.vdot_analytic[row]));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(dir: &Path, name: &str, rec: &TrajectoryRecord) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, trajectory_csv(rec))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn metrics_json(met: &RunMetrics) -> serde_json::Value {
    json!({
        "max_abs_x": met.max_abs_x,
        "max_abs_z": met.max_abs_z,
        "max_abs_u": met.max_abs_u,
        "tail_sup_z1": met.tail_sup_z1,
        "control_effort": met.control_effort,
        "max_vdot_residual": met.max_vdot_residual,
        "max_v_step_increase": met.max_v_step_increase,
    })
}

pub fn report_json(
    config: &ExperimentConfig,
    report: &VerificationReport,
    met: &RunMetrics,
) -> serde_json::Value {
    json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "config": config,
        "all_passed": report.all_passed(),
        "checks": report.checks.iter().map(|c| json!({
            "name": c.name,
            "passed": c.passed,
            "worst": if c.worst.is_finite() { Some(c.worst) } else { None },
            "tolerance": if c.tolerance.is_finite() { Some(c.tolerance) } else { None },
            "location_t": c.location_t,
            "detail": c.detail,
        })).collect::<Vec<_>>(),
        "bounds": report.bounds,
        "metrics": metrics_json(met),
    })
}

pub fn report_text(
    config: &ExperimentConfig,
    report: &VerificationReport,
    met: &RunMetrics,
) -> String {
    let mut out = String::new();
    let preset = config.preset.as_deref().unwrap_or("custom");
    writeln!(
        out,
        "experiment: {preset} ({} / {})",
        config.design, config.plant
    )
    .unwrap();
    writeln!(
        out,
        "integrator: {} h={} t_final={} stride={}",
        config.integrator.method,
        config.integrator.h,
        config.integrator.t_final,
        config.integrator.record_stride
    )
    .unwrap();
    writeln!(out, "initial state: {:?}", config.x0).unwrap();
    writeln!(out).unwrap();
    writeln!(
        out,
        "{:<28} {:>6}  {:>13}  {:>10}  {:>10}",
        "check", "result", "worst", "tolerance", "at t"
    )
    .unwrap();
    writeln!(out, "{}", "-".repeat(76)).unwrap();
    for c in &report.checks {
        writeln!(
            out,
            "{:<28} {:>6}  {:>13.4e}  {:>10.1e}  {:>10}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.worst,
            c.tolerance,
            c.location_t.map_or("-".into(), |t| format!("{t:.3}")),
        )
        .unwrap();
    }
    if !report.bounds.is_empty() {
        writeln!(out).unwrap();
        for (ch, d) in &report.bounds {
            writeln!(out, "invariant-set radius D_z{ch} = {d:.9}").unwrap();
        }
    }
    writeln!(out).unwrap();
    writeln!(out, "max |x| per channel: {:?}", met.max_abs_x).unwrap();
    writeln!(out, "max |z| per channel: {:?}", met.max_abs_z).unwrap();
    writeln!(out, "max |u|: {:.6}", met.max_abs_u).unwrap();
    writeln!(out, "tail sup |z1|: {:.6e}", met.tail_sup_z1).unwrap();
    writeln!(
        out,
        "control effort (int u^2 dt): {:.6}",
        met.control_effort
    )
    .unwrap();
    if let Some(r) = met.max_vdot_residual {
        writeln!(out, "max Lyapunov-rate residual: {r:.6e}").unwrap();
    }
    writeln!(
        out,
        "max single-step V increase: {:.6e}",
        met.max_v_step_increase
    )
    .unwrap();
    writeln!(
        out,
        "\noverall: {}",
        if report.all_passed() {
            "ALL CHECKS PASSED"
        } else {
            "CHECK FAILURES PRESENT"
        }
    )
    .unwrap();
    out
}

/// The five standard figures for one state-space run.
pub fn write_figures(dir: &Path, rec: &TrajectoryRecord, k_x1: Option<f64>) -> Result<()> {
    let t: Vec<f64> = rec.t.clone();
    let series = |vals: Vec<f64>| -> Vec<(f64, f64)> { t.iter().copied().zip(vals).collect() };

    let mut fig1 = LinePlot::new("Output x1(t) and its constraint", "t [s]", "x1");
    fig1.add(Series::new("x1", series(rec.x_channel(0).collect())));
    if let Some(kx) = k_x1 {
        fig1.h_line(kx, &format!("+k_x1 = {kx}"));
        fig1.h_line(-kx, &format!("-k_x1 = {kx}"));
    }
    fs::write(dir.join("fig1.svg"), fig1.render())?;

    let mut fig2 = LinePlot::new("State x2(t)", "t [s]", "x2");
    fig2.add(Series::new(
        "x2",
        series(rec.x_channel(1.min(rec.order() - 1)).collect()),
    ));
    fs::write(dir.join("fig2.svg"), fig2.render())?;

    let mut fig3 = LinePlot::new("Control input u(t)", "t [s]", "u");
    fig3.add(Series::new("u", series(rec.u.clone())));
    fs::write(dir.join("fig3.svg"), fig3.render())?;

    let mut fig4 = LinePlot::new("Tracking errors", "t [s]", "z");
    fig4.add(Series::new("z1", series(rec.z_channel(0).collect())));
    if rec.order() > 1 {
        fig4.add(Series::new("z2", series(rec.z_channel(1).collect())).dashed());
    }
    fs::write(dir.join("fig4.svg"), fig4.render())?;

    let mut fig5 = LinePlot::new("Error phase portrait", "z1", "z2");
    if rec.order() > 1 {
        let pts: Vec<(f64, f64)> = rec.z_channel(0).zip(rec.z_channel(1)).collect();
        fig5.add(Series::new("", pts));
    }
    fs::write(dir.join("fig5.svg"), fig5.render())?;
    Ok(())
}
