//! The four subcommands: simulate, verify, compare, sweep.

use crate::config::{self, ExperimentConfig, ResolvedExperiment};
use crate::output;
use crate::svg::{LinePlot, Series};
use anyhow::{bail, Context, Result};
use pblf_core::barrier::{BarrierKind, BarrierParams};
use pblf_core::controller::{self, ControlDesign, ControllerConfig};
use pblf_core::sim::{metrics, simulate_x_space, simulate_z_space, TrajectoryRecord};
use pblf_core::verify::run_standard_checks;
use pblf_core::Error as CoreError;
use rayon::prelude::*;
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Exit codes: 0 success, 1 failed verification check, 2 constraint
/// breach or runtime failure, 3 configuration error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_BREACH: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

pub fn exit_code_for_core_error(e: &CoreError) -> i32 {
    match e {
        CoreError::Config(_) | CoreError::VanishingGain { .. } => EXIT_CONFIG,
        _ => EXIT_BREACH,
    }
}

fn core_err(e: &anyhow::Error) -> Option<&CoreError> {
    e.downcast_ref::<CoreError>()
}

/// Maps an error chain to the CLI exit code.
pub fn exit_code_for(e: &anyhow::Error) -> i32 {
    core_err(e).map_or(EXIT_CONFIG, exit_code_for_core_error)
}

fn initial_errors(exp: &ResolvedExperiment) -> Result<Vec<f64>> {
    if let Some(z0) = &exp.config.z0 {
        return Ok(z0.clone());
    }
    let (_, ev) = controller::control(
        &exp.config.x0,
        0.0,
        &exp.controller,
        &exp.model,
        &exp.reference,
    )?;
    Ok(ev.z)
}

fn run_x(exp: &ResolvedExperiment) -> Result<TrajectoryRecord> {
    Ok(simulate_x_space(
        &exp.model,
        &exp.controller,
        &exp.reference,
        &exp.integrator,
        &exp.config.x0,
    )?)
}

fn run_z(exp: &ResolvedExperiment) -> Result<TrajectoryRecord> {
    let z0 = initial_errors(exp)?;
    Ok(simulate_z_space(
        &exp.model,
        &exp.controller,
        &exp.reference,
        &exp.integrator,
        &z0,
    )?)
}

pub fn cmd_simulate(cfg: ExperimentConfig, out_dir: &Path) -> Result<()> {
    let exp = config::resolve(cfg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let (primary, secondary) = match exp.config.mode.as_str() {
        "z-space" => (run_z(&exp)?, None),
        "both" => (run_x(&exp)?, Some(run_z(&exp)?)),
        _ => (run_x(&exp)?, None),
    };

    output::write_trajectory(out_dir, "trajectory.csv", &primary)?;
    if let Some(z_rec) = &secondary {
        output::write_trajectory(out_dir, "trajectory_z.csv", z_rec)?;
    }

    let met = metrics(&primary);
    let report = run_standard_checks(
        &exp.controller,
        &exp.reference,
        &primary,
        secondary.as_ref(),
    );
    fs::write(
        out_dir.join("report.txt"),
        output::report_text(&exp.config, &report, &met),
    )?;
    output::write_figures(out_dir, &primary, exp.config.constraint_box[0])?;

    log::info!(
        "simulate: {} rows, max|x1| = {:.6}, tail sup |z1| = {:.3e}",
        primary.len(),
        met.max_abs_x[0],
        met.tail_sup_z1
    );
    println!(
        "wrote trajectory.csv ({} rows), report.txt, fig1..fig5.svg to {}",
        primary.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_verify(cfg: ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let mut cfg = cfg;
    cfg.mode = "both".into();
    let exp = config::resolve(cfg)?;
    fs::create_dir_all(out_dir)?;

    let x_rec = run_x(&exp)?;
    let z_rec = run_z(&exp)?;
    let met = metrics(&x_rec);
    let report = run_standard_checks(&exp.controller, &exp.reference, &x_rec, Some(&z_rec));

    let text = output::report_text(&exp.config, &report, &met);
    print!("{text}");
    fs::write(out_dir.join("report.txt"), &text)?;
    let jsonv = output::report_json(&exp.config, &report, &met);
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&jsonv)?,
    )?;

    Ok(if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

/// A comparison run holds the preset plant, reference, gains, and barrier
/// shape, swapping only the barrier kind. The declared output box is the
/// provable `k1 + sup|y_d|`: kinds without the beta-boosted restoring
/// term let `x1` ride above the tight figure bound transiently.
pub fn cmd_compare(cfg: ExperimentConfig, kinds: &[String], out_dir: &Path) -> Result<()> {
    if kinds.len() < 2 {
        bail!("compare needs at least two barrier kinds");
    }
    let mut parsed = Vec::new();
    for k in kinds {
        let kind = BarrierKind::parse(k)?;
        if kind == BarrierKind::ZoneLog {
            bail!("the zone-log form is comparison-only for static shapes, not control runs");
        }
        parsed.push(kind);
    }
    fs::create_dir_all(out_dir)?;

    let base = config::resolve(cfg.clone())?;
    let k1 = base.controller.barriers[0].k;
    let beta = base.controller.barriers[0].beta;
    let loose_box = k1 + base.reference.bound(0);

    let mut rows = Vec::new();
    let mut u_plot = LinePlot::new("Control magnitude by barrier kind", "t [s]", "|u|");
    for kind in &parsed {
        let design = ControlDesign::OutputConstrained;
        let barrier = BarrierParams::new(*kind, k1, beta)?;
        let mut boxes = base.controller.constraint_box.clone();
        boxes[0] = Some(loose_box);
        let controller =
            ControllerConfig::new(design, base.controller.kappa.clone(), vec![barrier], boxes)?;
        let rec = simulate_x_space(
            &base.model,
            &controller,
            &base.reference,
            &base.integrator,
            &cfg.x0,
        )?;
        let met = metrics(&rec);
        u_plot.add(Series::new(
            kind.name(),
            rec.t
                .iter()
                .copied()
                .zip(rec.u.iter().map(|u| u.abs()))
                .collect(),
        ));
        rows.push((kind.name().to_string(), met));
    }

    let mut csv = String::from("kind,control_effort,max_abs_u,max_abs_x1\n");
    for (name, met) in &rows {
        writeln!(
            csv,
            "{name},{},{},{}",
            output::fmt_value(met.control_effort),
            output::fmt_value(met.max_abs_u),
            output::fmt_value(met.max_abs_x[0])
        )
        .unwrap();
    }
    fs::write(out_dir.join("compare.csv"), csv)?;
    fs::write(out_dir.join("compare_u.svg"), u_plot.render())?;

    // Static barrier shape overlays on (-k1, k1).
    let mut v_plot = LinePlot::new("Barrier value V(z)", "z", "V");
    let mut g_plot = LinePlot::new("Barrier gradient V'(z)", "z", "V'");
    let grid: Vec<f64> = (0..999)
        .map(|i| -0.999 * k1 + 1.998 * k1 * i as f64 / 998.0)
        .collect();
    for kind in &parsed {
        let p = BarrierParams::new(*kind, k1, beta)?;
        let vals: Vec<(f64, f64)> = grid.iter().map(|&z| (z, p.value(z).unwrap())).collect();
        let grads: Vec<(f64, f64)> = grid.iter().map(|&z| (z, p.gradient(z).unwrap())).collect();
        v_plot.add(Series::new(kind.name(), vals));
        g_plot.add(Series::new(kind.name(), grads));
    }
    fs::write(out_dir.join("barrier_value.svg"), v_plot.render())?;
    fs::write(out_dir.join("barrier_gradient.svg"), g_plot.render())?;

    println!(
        "wrote compare.csv, compare_u.svg, barrier_value.svg, barrier_gradient.svg to {}",
        out_dir.display()
    );
    Ok(())
}

const SWEEP_PARAMS: [&str; 4] = ["beta", "kappa1", "kappa2", "h"];

/// One row per swept value, metrics summarized, failures recorded in-row.
/// For `h` sweeps an extra column reports the sup-norm state difference
/// against the finest swept step on the shared time grid.
pub fn cmd_sweep(
    cfg: ExperimentConfig,
    parameter: &str,
    values: &[f64],
    out_dir: &Path,
) -> Result<()> {
    if !SWEEP_PARAMS.contains(&parameter) {
        bail!("sweep parameter must be one of {SWEEP_PARAMS:?}, got '{parameter}'");
    }
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    fs::create_dir_all(out_dir)?;

    let runs: Vec<std::result::Result<TrajectoryRecord, String>> = values
        .par_iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match parameter {
                "beta" => c.barriers.iter_mut().for_each(|b| b.beta = v),
                "kappa1" => c.kappa[0] = v,
                "kappa2" => {
                    if c.kappa.len() < 2 {
                        return Err("no kappa2 channel".into());
                    }
                    c.kappa[1] = v;
                }
                _ => c.integrator.h = v,
            }
            let exp = config::resolve(c).map_err(|e| e.to_string())?;
            run_x(&exp).map_err(|e| e.to_string())
        })
        .collect();

    // For h sweeps, compare each run against the finest one at shared
    // sample times (index-aligned when the step ratio is an integer).
    let mut err_vs_finest: Vec<Option<f64>> = vec![None; values.len()];
    if parameter == "h" {
        let finest_idx = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        if let Ok(reference) = &runs[finest_idx] {
            let h_ref = values[finest_idx];
            for (i, run) in runs.iter().enumerate() {
                let Ok(rec) = run else { continue };
                let ratio = values[i] / h_ref;
                if (ratio - ratio.round()).abs() > 1e-9 {
                    continue;
                }
                let ratio = ratio.round() as usize;
                let mut worst = 0.0f64;
                for (row, x) in rec.x.iter().enumerate() {
                    let Some(ref_row) = reference.x.get(row * ratio) else {
                        break;
                    };
                    for c in 0..x.len() {
                        worst = worst.max((x[c] - ref_row[c]).abs());
                    }
                }
                err_vs_finest[i] = Some(worst);
            }
        }
    }

    let mut csv = String::from(
        "parameter,value,status,max_x1,max_x2,max_z1,max_z2,tail_sup_z1,control_effort,\
         max_vdot_residual,max_v_step_increase,sup_err_vs_finest\n",
    );
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok(rec) => {
                let met = metrics(rec);
                writeln!(
                    csv,
                    "{parameter},{},ok,{},{},{},{},{},{},{},{},{}",
                    output::fmt_value(values[i]),
                    output::fmt_value(met.max_abs_x[0]),
                    output::fmt_value(met.max_abs_x.get(1).copied().unwrap_or(f64::NAN)),
                    output::fmt_value(met.max_abs_z[0]),
                    output::fmt_value(met.max_abs_z.get(1).copied().unwrap_or(f64::NAN)),
                    output::fmt_value(met.tail_sup_z1),
                    output::fmt_value(met.control_effort),
                    met.max_vdot_residual
                        .map_or(String::new(), output::fmt_value),
                    output::fmt_value(met.max_v_step_increase),
                    err_vs_finest[i].map_or(String::new(), output::fmt_value),
                )
                .unwrap();
            }
            Err(msg) => {
                writeln!(
                    csv,
                    "{parameter},{},error: {},,,,,,,,,",
                    output::fmt_value(values[i]),
                    msg.replace(',', ";")
                )
                .unwrap();
            }
        }
    }
    fs::write(out_dir.join("sweep.csv"), &csv)?;
    println!(
        "wrote sweep.csv ({} rows) to {}",
        values.len(),
        out_dir.display()
    );
    Ok(())
}

/// Snapshot of the resolved configuration for reproducibility.
pub fn write_config_snapshot(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let v = json!(cfg);
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&v)?,
    )?;
    Ok(())
}
