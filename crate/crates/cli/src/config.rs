//! Experiment configuration: JSON schema, built-in presets, and `--set`
//! overrides. A resolved configuration converts into the library's model,
//! reference, controller, and integrator objects.

use anyhow::{anyhow, bail, Context, Result};
use pblf_core::barrier::{BarrierKind, BarrierParams};
use pblf_core::controller::{ControlDesign, ControllerConfig};
use pblf_core::plant::{paper_plant, paper_reference, ReferenceSignal, StrictFeedbackModel};
use pblf_core::sim::{IntegratorConfig, Method};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BarrierSpec {
    pub kind: String,
    pub k: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntegratorSpec {
    pub method: String,
    pub h: f64,
    pub t_final: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub design: String,
    pub plant: String,
    pub reference: String,
    pub kappa: Vec<f64>,
    pub barriers: Vec<BarrierSpec>,
    pub constraint_box: Vec<Option<f64>>,
    pub integrator: IntegratorSpec,
    pub x0: Vec<f64>,
    /// Initial errors for z-space runs; derived from `x0` when absent.
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_mode() -> String {
    "x-space".into()
}

/// The benchmark experiment: log p-BLF output-constrained tracking of
/// `0.2 + 0.3 sin t` with `k1 = 0.56`, gains 2, and `beta = 10`.
pub fn preset_output_constrained() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        preset: Some("paper-output-constrained".into()),
        design: "output-constrained".into(),
        plant: "paper-2nd-order".into(),
        reference: "paper-sine".into(),
        kappa: vec![2.0, 2.0],
        barriers: vec![BarrierSpec {
            kind: "log-pblf".into(),
            k: 0.56,
            beta: 10.0,
        }],
        constraint_box: vec![Some(0.56), None],
        integrator: IntegratorSpec {
            method: "rk4".into(),
            h: 1e-3,
            t_final: 30.0,
            abs_tol: default_tol(),
            rel_tol: default_tol(),
            record_stride: 1,
        },
        x0: vec![0.25, 1.5],
        z0: None,
        mode: default_mode(),
    }
}

/// Full-state variant of the benchmark: log barriers on both error
/// channels (`k2 = 2.0`). The second channel collapses roughly two orders
/// of magnitude faster than in the output-constrained design, so the
/// default step is finer.
pub fn preset_full_state() -> ExperimentConfig {
    let mut cfg = preset_output_constrained();
    cfg.preset = Some("paper-full-state".into());
    cfg.design = "full-state".into();
    cfg.barriers.push(BarrierSpec {
        kind: "log-pblf".into(),
        k: 2.0,
        beta: 10.0,
    });
    cfg.integrator.h = 2e-4;
    cfg
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "paper-output-constrained" => Ok(preset_output_constrained()),
        "paper-full-state" => Ok(preset_full_state()),
        other => bail!(
            "unknown preset '{other}' (available: paper-output-constrained, paper-full-state)"
        ),
    }
}

pub fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!(
            "config schema version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
    }
    Ok(cfg)
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| anyhow!("--set {key}: '{value}' is not a number"))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("--set {key}: '{v}' is not a number"))
        })
        .collect()
}

/// Applies one `key=value` override to the configuration.
pub fn apply_set(cfg: &mut ExperimentConfig, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got '{spec}'"))?;
    let key = key.trim();
    let value = value.trim();
    match key {
        "x0" => cfg.x0 = parse_f64_list(key, value)?,
        "z0" => cfg.z0 = Some(parse_f64_list(key, value)?),
        "h" => cfg.integrator.h = parse_f64(key, value)?,
        "t_final" => cfg.integrator.t_final = parse_f64(key, value)?,
        "abs_tol" => cfg.integrator.abs_tol = parse_f64(key, value)?,
        "rel_tol" => cfg.integrator.rel_tol = parse_f64(key, value)?,
        "method" => cfg.integrator.method = value.into(),
        "stride" => {
            cfg.integrator.record_stride = value
                .parse::<usize>()
                .map_err(|_| anyhow!("--set stride: '{value}' is not an integer"))?
        }
        "mode" => cfg.mode = value.into(),
        "design" => cfg.design = value.into(),
        "kind" => {
            for b in &mut cfg.barriers {
                b.kind = value.into();
            }
        }
        "beta" => {
            let beta = parse_f64(key, value)?;
            for b in &mut cfg.barriers {
                b.beta = beta;
            }
        }
        _ => {
            if let Some(idx) = key.strip_prefix("kappa") {
                let i: usize = idx.parse().map_err(|_| anyhow!("bad gain index '{idx}'"))?;
                let slot = cfg
                    .kappa
                    .get_mut(i.wrapping_sub(1))
                    .ok_or_else(|| anyhow!("--set {key}: no such gain channel"))?;
                *slot = parse_f64(key, value)?;
            } else if let Some(idx) = key.strip_prefix("kx") {
                let i: usize = idx
                    .parse()
                    .map_err(|_| anyhow!("bad channel index '{idx}'"))?;
                let slot = cfg
                    .constraint_box
                    .get_mut(i.wrapping_sub(1))
                    .ok_or_else(|| anyhow!("--set {key}: no such constraint channel"))?;
                *slot = Some(parse_f64(key, value)?);
            } else if let Some(idx) = key.strip_prefix('k') {
                let i: usize = idx.parse().map_err(|_| anyhow!("unknown key '{key}'"))?;
                let slot = cfg
                    .barriers
                    .get_mut(i.wrapping_sub(1))
                    .ok_or_else(|| anyhow!("--set {key}: no such barrier channel"))?;
                slot.k = parse_f64(key, value)?;
            } else {
                bail!("unknown --set key '{key}'");
            }
        }
    }
    Ok(())
}

/// Library-facing objects resolved from a configuration.
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub model: StrictFeedbackModel,
    pub reference: ReferenceSignal,
    pub controller: ControllerConfig,
    pub integrator: IntegratorConfig,
}

pub fn resolve(config: ExperimentConfig) -> Result<ResolvedExperiment> {
    let model = match config.plant.as_str() {
        "paper-2nd-order" => paper_plant(),
        other => bail!("unknown plant '{other}' (available: paper-2nd-order)"),
    };
    let reference = match config.reference.as_str() {
        "paper-sine" => paper_reference(),
        "zero" => pblf_core::plant::zero_reference(),
        other => bail!("unknown reference '{other}' (available: paper-sine, zero)"),
    };
    let design = ControlDesign::parse(&config.design)?;
    let mut barriers = Vec::new();
    for b in &config.barriers {
        barriers.push(BarrierParams::new(
            BarrierKind::parse(&b.kind)?,
            b.k,
            b.beta,
        )?);
    }
    let controller = ControllerConfig::new(
        design,
        config.kappa.clone(),
        barriers,
        config.constraint_box.clone(),
    )?;
    let method = Method::parse(&config.integrator.method)?;
    let integrator = IntegratorConfig {
        method,
        h: config.integrator.h,
        t_final: config.integrator.t_final,
        abs_tol: config.integrator.abs_tol,
        rel_tol: config.integrator.rel_tol,
        record_stride: config.integrator.record_stride,
    };
    integrator.validate()?;
    if config.x0.len() != model.order() {
        bail!(
            "x0 has {} entries, plant order is {}",
            config.x0.len(),
            model.order()
        );
    }
    if let Some(z0) = &config.z0 {
        if z0.len() != model.order() {
            bail!(
                "z0 has {} entries, plant order is {}",
                z0.len(),
                model.order()
            );
        }
    }
    match config.mode.as_str() {
        "x-space" | "z-space" | "both" => {}
        other => bail!("unknown mode '{other}' (use x-space, z-space, or both)"),
    }
    Ok(ResolvedExperiment {
        config,
        model,
        reference,
        controller,
        integrator,
    })
}
