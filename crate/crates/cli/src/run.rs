//! Subcommand implementations and report assembly.
//!
//! Every report is a JSON document with a `schema_version` field, the
//! seed, and an echo of every numeric tolerance the run used. With
//! `fixed_clock = true` the timestamp is a constant so identical
//! configurations produce byte-identical reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use stabmin::algebra::{check_xi_inequality, XiBatchConfig};
use stabmin::criterion::{critical_slope, CriterionConstants, CriterionMode};
use stabmin::eigen::{min_rayleigh, MinRayleighResult, RayleighConfig};
use stabmin::fields::{induced_metric, second_fundamental_form, MetricField};
use stabmin::flow::{monitor_omega, run_flow, scale_to_criterion, FlowConfig, FlowRun, FlowStatus};
use stabmin::frame::frame_field;
use stabmin::grid::{build_grid, compute_jet, sample_function, write_sample_csv, CsvColumn, GraphSample};
use stabmin::variation::{NormalField, StabilityVerdict};

use crate::builtins::evaluator;
use crate::config::{parse_config, RunConfig, Scaling};

pub enum Subcommand {
    Criterion,
    Analyze,
    Flow,
    VerifyAlgebra,
    Pipeline,
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<String>,
}

const SCHEMA_VERSION: u32 = 1;
const EXIT_STABLE: i32 = 0;
const EXIT_ERROR: i32 = 1;
const EXIT_UNSTABLE: i32 = 2;
const EXIT_INCONCLUSIVE: i32 = 3;

pub fn execute(sub: Subcommand, config_path: &Path, overrides: &Overrides) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return EXIT_ERROR;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("configuration errors:");
            for e in &errors {
                eprintln!("  - {e}");
            }
            return EXIT_ERROR;
        }
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &overrides.mode {
        match CriterionMode::parse(mode) {
            Ok(parsed) => cfg.mode = parsed,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        }
    }
    if let Some(out) = &overrides.out {
        cfg.output.dir = Some(out.display().to_string());
    }

    let result = match sub {
        Subcommand::Criterion => cmd_criterion(&cfg),
        Subcommand::Analyze => cmd_analyze(&cfg),
        Subcommand::Flow => cmd_flow(&cfg),
        Subcommand::VerifyAlgebra => cmd_verify_algebra(&cfg),
        Subcommand::Pipeline => cmd_pipeline(&cfg),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn timestamp(cfg: &RunConfig) -> Value {
    if cfg.output.fixed_clock {
        json!("fixed")
    } else {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!(secs)
    }
}

fn build_sample(cfg: &RunConfig) -> stabmin::Result<GraphSample> {
    let domain = build_grid(cfg.domain.n, &cfg.domain.bounds, &cfg.domain.resolution)?;
    let f = evaluator(&cfg.function.builtin, &cfg.domain, cfg.function.m, cfg.seed);
    sample_function(&domain, cfg.function.m, move |x| f(x))
}

fn out_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.output.dir.as_ref().map(PathBuf::from)
}

fn emit_report(cfg: &RunConfig, report: &Value) -> std::io::Result<()> {
    let text = format!("{}\n", serde_json::to_string_pretty(report)?);
    match out_dir(cfg) {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            let path = dir.join("report.json");
            fs::write(&path, text)?;
            eprintln!("report written to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn write_file(cfg: &RunConfig, name: &str, content: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = out_dir(cfg) {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn monitor_tolerance(sample: &GraphSample) -> f64 {
    let h = sample.domain.spacing().iter().cloned().fold(0.0, f64::max);
    10.0 * h * h
}

fn rayleigh_config(cfg: &RunConfig) -> RayleighConfig {
    RayleighConfig { seed: cfg.seed ^ 0x5eed, tol_eig_scale: cfg.tol_eig_scale, ..Default::default() }
}

fn verdict_exit(verdict: StabilityVerdict) -> i32 {
    match verdict {
        StabilityVerdict::StableNumerically => EXIT_STABLE,
        StabilityVerdict::UnstableNumerically => EXIT_UNSTABLE,
        StabilityVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn field_csv(sample: &GraphSample, metric: &MetricField) -> Vec<u8> {
    let count = sample.domain.node_count();
    let undefined = |vals: &[f64]| -> Vec<f64> {
        (0..count)
            .map(|k| if sample.domain.is_interior(k) { vals[k] } else { f64::NAN })
            .collect()
    };
    let cols = [
        CsvColumn { name: "star_omega", values: undefined(&metric.star_omega) },
        CsvColumn { name: "sqrt_det_g", values: undefined(&metric.sqrt_det_g) },
    ];
    let mut buf = Vec::new();
    write_sample_csv(&mut buf, sample, &cols).expect("in-memory write");
    buf
}

fn eigenfield_csv(sample: &GraphSample, field: &NormalField) -> Vec<u8> {
    let d = sample.dimension() + sample.codimension;
    let names: Vec<String> = (1..=d).map(|c| format!("v{c}")).collect();
    let cols: Vec<CsvColumn> = (0..d)
        .map(|c| CsvColumn {
            name: &names[c],
            values: (0..sample.domain.node_count()).map(|k| field.vectors[k][c]).collect(),
        })
        .collect();
    let mut buf = Vec::new();
    write_sample_csv(&mut buf, sample, &cols).expect("in-memory write");
    buf
}

fn cmd_criterion(cfg: &RunConfig) -> stabmin::Result<i32> {
    let mut sample = build_sample(cfg)?;
    compute_jet(&mut sample)?;
    let metric = induced_metric(&sample)?;
    let constants = CriterionConstants::for_dimensions(cfg.domain.n, cfg.function.m)?;
    let report = stabmin::criterion::check_graph(&sample, &metric, &constants, cfg.mode)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "criterion",
        "seed": cfg.seed,
        "timestamp": timestamp(cfg),
        "constants": serde_json::to_value(&constants).unwrap(),
        "criterion": serde_json::to_value(&report).unwrap(),
        "tolerances": {
            "minimality_diagnostic": monitor_tolerance(&sample),
        },
    });
    emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    if cfg.output.write_fields {
        write_file(cfg, "fields.csv", &field_csv(&sample, &metric))
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
    }
    Ok(if report.pass { EXIT_STABLE } else { EXIT_UNSTABLE })
}

fn spectrum(
    sample: &GraphSample,
    metric: &MetricField,
    cfg: &RunConfig,
) -> stabmin::Result<(MinRayleighResult, Value)> {
    let frames = frame_field(sample)?;
    let sff = second_fundamental_form(sample, metric, &frames)?;
    let eig = min_rayleigh(sample, metric, &frames, &sff, &rayleigh_config(cfg))?;
    let value = json!({
        "mu_min": eig.mu,
        "residual": eig.residual,
        "iterations": eig.iterations,
        "converged": eig.converged,
        "report": serde_json::to_value(&eig.report).unwrap(),
    });
    Ok((eig, value))
}

fn cmd_analyze(cfg: &RunConfig) -> stabmin::Result<i32> {
    let mut sample = build_sample(cfg)?;
    compute_jet(&mut sample)?;
    let metric = induced_metric(&sample)?;
    let constants = CriterionConstants::for_dimensions(cfg.domain.n, cfg.function.m)?;
    let criterion = stabmin::criterion::check_graph(&sample, &metric, &constants, cfg.mode)?;
    let (eig, spectrum_doc) = spectrum(&sample, &metric, cfg)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "seed": cfg.seed,
        "timestamp": timestamp(cfg),
        "constants": serde_json::to_value(&constants).unwrap(),
        "criterion": serde_json::to_value(&criterion).unwrap(),
        "spectrum": spectrum_doc,
        "tolerances": {
            "minimality_diagnostic": monitor_tolerance(&sample),
            "tol_eig": eig.report.tol_eig,
            "eigen_residual": rayleigh_config(cfg).residual_tol,
        },
    });
    emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    if cfg.output.write_fields {
        write_file(cfg, "fields.csv", &field_csv(&sample, &metric))
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
        write_file(cfg, "eigenfield.csv", &eigenfield_csv(&sample, &eig.eigenfield))
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
    }
    Ok(verdict_exit(eig.report.verdict))
}

fn flow_config(cfg: &RunConfig) -> FlowConfig {
    FlowConfig {
        dt_safety: cfg.flow.dt_safety,
        max_steps: cfg.flow.max_steps,
        residual_target: cfg.flow.residual_target,
        omega_floor: cfg.flow.omega_floor,
        log_interval: cfg.flow.log_interval,
        scaling: match cfg.flow.scaling {
            Scaling::Factor(t) => Some(t),
            _ => None,
        },
    }
}

/// Applies the configured scaling; returns the sample actually flowed and
/// the multiplier used.
fn apply_scaling(cfg: &RunConfig, sample: GraphSample) -> stabmin::Result<(GraphSample, f64, &'static str)> {
    match cfg.flow.scaling {
        Scaling::None => Ok((sample, 1.0, "none")),
        Scaling::Factor(t) => {
            let mut scaled = sample;
            for v in scaled.values.iter_mut() {
                *v *= t;
            }
            Ok((scaled, t, "factor"))
        }
        Scaling::Auto => {
            let constants = CriterionConstants::for_dimensions(cfg.domain.n, cfg.function.m)?;
            let (scaled, t) = scale_to_criterion(&sample, &constants, cfg.mode)?;
            Ok((scaled, t, "auto"))
        }
    }
}

fn flow_doc(run: &FlowRun) -> Value {
    json!({
        "status": serde_json::to_value(run.status).unwrap(),
        "steps": run.steps,
        "t_final": run.state.t,
        "residual": run.state.residual,
        "min_star_omega": run.state.min_star_omega,
        "omega_alarm": run.omega_alarm,
    })
}

fn cmd_flow(cfg: &RunConfig) -> stabmin::Result<i32> {
    let sample = build_sample(cfg)?;
    let (scaled, t, scaling_kind) = apply_scaling(cfg, sample)?;
    let run = run_flow(scaled, &flow_config(cfg))?;
    let tol = monitor_tolerance(&run.state.sample);
    let monitor = monitor_omega(&run.trace, tol)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "flow",
        "seed": cfg.seed,
        "timestamp": timestamp(cfg),
        "scaling": { "kind": scaling_kind, "t": t },
        "flow": flow_doc(&run),
        "omega_monitor": serde_json::to_value(&monitor).unwrap(),
        "tolerances": {
            "residual_target": cfg.flow.residual_target,
            "omega_monitor": tol,
        },
    });
    emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    let mut trace = Vec::new();
    run.trace.write_csv(&mut trace).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    write_file(cfg, "trace.csv", &trace).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    if cfg.output.write_fields {
        let mut buf = Vec::new();
        write_sample_csv(&mut buf, &run.state.sample, &[])
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
        write_file(cfg, "final.csv", &buf).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    }
    Ok(if run.status == FlowStatus::Converged { EXIT_STABLE } else { EXIT_ERROR })
}

fn cmd_verify_algebra(cfg: &RunConfig) -> stabmin::Result<i32> {
    let n = cfg.domain.n;
    let m = cfg.function.m;
    let c = stabmin::criterion::c_constant(n, m)?;
    let cap = match cfg.algebra.lambda_cap {
        Some(v) => v,
        None => critical_slope(c)?,
    };
    let config = XiBatchConfig::new(n, m, cap, cfg.algebra.count, cfg.seed);
    let report = check_xi_inequality(&config)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify-algebra",
        "seed": cfg.seed,
        "timestamp": timestamp(cfg),
        "batch": serde_json::to_value(&report).unwrap(),
        "tolerances": {
            "relative_margin": config.tolerance,
        },
    });
    emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    Ok(if report.violations == 0 { EXIT_STABLE } else { EXIT_UNSTABLE })
}

fn cmd_pipeline(cfg: &RunConfig) -> stabmin::Result<i32> {
    let sample = build_sample(cfg)?;
    let (scaled, t, scaling_kind) = apply_scaling(cfg, sample)?;
    let run = run_flow(scaled, &flow_config(cfg))?;
    let tol_monitor = monitor_tolerance(&run.state.sample);
    let monitor = monitor_omega(&run.trace, tol_monitor)?;

    let mut trace = Vec::new();
    run.trace.write_csv(&mut trace).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    write_file(cfg, "trace.csv", &trace).map_err(|e| stabmin::Error::Data(e.to_string()))?;

    if run.status != FlowStatus::Converged {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "pipeline",
            "seed": cfg.seed,
            "timestamp": timestamp(cfg),
            "scaling": { "kind": scaling_kind, "t": t },
            "flow": flow_doc(&run),
            "omega_monitor": serde_json::to_value(&monitor).unwrap(),
            "tolerances": { "residual_target": cfg.flow.residual_target, "omega_monitor": tol_monitor },
        });
        emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
        return Ok(EXIT_ERROR);
    }

    let sample = &run.state.sample;
    let metric = induced_metric(sample)?;
    let constants = CriterionConstants::for_dimensions(cfg.domain.n, cfg.function.m)?;
    let criterion = stabmin::criterion::check_graph(sample, &metric, &constants, cfg.mode)?;
    let (eig, spectrum_doc) = spectrum(sample, &metric, cfg)?;

    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "pipeline",
        "seed": cfg.seed,
        "timestamp": timestamp(cfg),
        "scaling": { "kind": scaling_kind, "t": t },
        "flow": flow_doc(&run),
        "omega_monitor": serde_json::to_value(&monitor).unwrap(),
        "constants": serde_json::to_value(&constants).unwrap(),
        "criterion": serde_json::to_value(&criterion).unwrap(),
        "spectrum": spectrum_doc,
        "tolerances": {
            "residual_target": cfg.flow.residual_target,
            "omega_monitor": tol_monitor,
            "tol_eig": eig.report.tol_eig,
            "eigen_residual": rayleigh_config(cfg).residual_tol,
        },
    });
    emit_report(cfg, &doc).map_err(|e| stabmin::Error::Data(e.to_string()))?;
    if cfg.output.write_fields {
        write_file(cfg, "fields.csv", &field_csv(sample, &metric))
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
        write_file(cfg, "eigenfield.csv", &eigenfield_csv(sample, &eig.eigenfield))
            .map_err(|e| stabmin::Error::Data(e.to_string()))?;
    }
    Ok(verdict_exit(eig.report.verdict))
}
