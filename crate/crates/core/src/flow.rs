//! Nonparametric mean-curvature flow `f_t = g^{ij} d2f/dx^i dx^j` with
//! Dirichlet boundary data, explicit Euler stepping under the parabolic
//! step bound, and projection-density monitoring along the trajectory.
//! Stationary points solve the minimal surface system.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::criterion::{check_graph, CriterionConstants, CriterionMode};
use crate::error::{Error, Result};
use crate::fields::induced_metric;
use crate::grid::{compute_jet, GraphSample};

/// Flow parameters. The step is `dt_safety * h_min^2 / (2 n Lambda)`
/// with `Lambda` the largest spectral norm of `g^{-1}` over nodes.
#[derive(Debug, Clone, Serialize)]
pub struct FlowConfig {
    pub dt_safety: f64,
    pub max_steps: usize,
    pub residual_target: f64,
    /// Alarm threshold on the projection density; crossing it flags the
    /// run but does not stop it.
    pub omega_floor: f64,
    pub log_interval: usize,
    /// Optional multiplier applied to the initial data by callers.
    pub scaling: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_safety: 0.9,
            max_steps: 1_000_000,
            residual_target: 1e-8,
            omega_floor: 0.0,
            log_interval: 100,
            scaling: None,
        }
    }
}

/// Current flow state; residual and density are refreshed after every
/// accepted step.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub sample: GraphSample,
    pub t: f64,
    /// Max node norm of `g^{ij} d2f/dx^i dx^j`.
    pub residual: f64,
    pub min_star_omega: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub residual: f64,
    pub min_star_omega: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,residual,min_star_omega")?;
        for row in &self.rows {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", row.t, row.residual, row.min_star_omega)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    BudgetExhausted,
    BlowUp,
}

/// A finished (or aborted) flow run with its trace.
#[derive(Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub trace: FlowTrace,
    pub status: FlowStatus,
    pub steps: usize,
    pub omega_alarm: bool,
}

/// Per-node update vectors plus the step-size and monitoring data.
struct StepData {
    updates: Vec<DVector<f64>>,
    residual: f64,
    min_star_omega: f64,
    /// Largest spectral norm of `g^{-1}`.
    lambda: f64,
}

fn step_data(sample: &GraphSample) -> Result<StepData> {
    let domain = &sample.domain;
    let n = domain.dimension();
    let m = sample.codimension;
    let h = domain.spacing().to_vec();
    let mut updates = vec![DVector::zeros(m); domain.node_count()];
    let mut residual = 0.0f64;
    let mut min_omega = f64::INFINITY;
    let mut lambda = 0.0f64;

    for &node in &domain.interior_nodes() {
        // local first and second differences
        let f0 = &sample.values[node];
        let mut df = DMatrix::zeros(m, n);
        let mut hess = vec![DMatrix::zeros(n, n); m];
        for i in 0..n {
            let plus = domain.neighbor(node, i, 1).expect("interior");
            let minus = domain.neighbor(node, i, -1).expect("interior");
            let fp = &sample.values[plus];
            let fm = &sample.values[minus];
            for a in 0..m {
                df[(a, i)] = (fp[a] - fm[a]) / (2.0 * h[i]);
                hess[a][(i, i)] = (fp[a] - 2.0 * f0[a] + fm[a]) / (h[i] * h[i]);
            }
            for j in (i + 1)..n {
                let pp = domain.neighbor(plus, j, 1).expect("interior");
                let pm = domain.neighbor(plus, j, -1).expect("interior");
                let mp = domain.neighbor(minus, j, 1).expect("interior");
                let mm = domain.neighbor(minus, j, -1).expect("interior");
                for a in 0..m {
                    let v = (sample.values[pp][a] - sample.values[pm][a] - sample.values[mp][a]
                        + sample.values[mm][a])
                        / (4.0 * h[i] * h[j]);
                    hess[a][(i, j)] = v;
                    hess[a][(j, i)] = v;
                }
            }
        }
        let g = DMatrix::identity(n, n) + df.transpose() * &df;
        let chol = g
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Consistency(format!("metric not positive definite at node {node}")))?;
        let det: f64 = (0..n).map(|i| chol.l()[(i, i)]).product::<f64>().powi(2);
        let g_inv = chol.inverse();
        min_omega = min_omega.min(1.0 / det.sqrt());
        lambda = lambda.max(g_inv.clone().symmetric_eigenvalues().max());

        let mut r = DVector::zeros(m);
        for a in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += g_inv[(i, j)] * hess[a][(i, j)];
                }
            }
            r[a] = acc;
        }
        residual = residual.max(r.norm());
        updates[node] = r;
    }
    Ok(StepData { updates, residual, min_star_omega: min_omega, lambda })
}

/// Builds the initial state (jet not required; the flow differentiates
/// internally).
pub fn flow_state(sample: GraphSample) -> Result<FlowState> {
    let data = step_data(&sample)?;
    Ok(FlowState {
        sample,
        t: 0.0,
        residual: data.residual,
        min_star_omega: data.min_star_omega,
    })
}

/// One explicit Euler step at the parabolic bound; boundary values are
/// untouched. Fails with a blow-up error on non-finite values.
pub fn mcf_step(state: &FlowState, config: &FlowConfig) -> Result<FlowState> {
    let n = state.sample.dimension();
    let data = step_data(&state.sample)?;
    let h_min = state.sample.domain.min_spacing();
    let dt = config.dt_safety * h_min * h_min / (2.0 * n as f64 * data.lambda.max(1e-12));

    let mut next = state.sample.clone();
    next.jet = None;
    for &node in &state.sample.domain.interior_nodes() {
        next.values[node] = &state.sample.values[node] + dt * &data.updates[node];
        if next.values[node].iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!(
                "non-finite value at node {node}, t = {}, residual = {}",
                state.t, data.residual
            )));
        }
    }
    let after = step_data(&next)?;
    Ok(FlowState {
        sample: next,
        t: state.t + dt,
        residual: after.residual,
        min_star_omega: after.min_star_omega,
    })
}

/// Runs the flow until the residual target or the step budget. The
/// returned sample carries a fresh jet. Blow-ups and exhausted budgets
/// produce a partial trace with the corresponding status rather than an
/// error.
pub fn run_flow(sample: GraphSample, config: &FlowConfig) -> Result<FlowRun> {
    let mut state = flow_state(sample)?;
    let mut trace = FlowTrace::default();
    trace.rows.push(TraceRow {
        t: state.t,
        residual: state.residual,
        min_star_omega: state.min_star_omega,
    });
    let mut omega_alarm = state.min_star_omega < config.omega_floor;
    let mut steps = 0usize;
    let mut status = FlowStatus::Converged;
    let mut local = config.clone();
    let initial_residual = state.residual;

    while state.residual > config.residual_target {
        if steps >= config.max_steps {
            status = FlowStatus::BudgetExhausted;
            break;
        }
        match mcf_step(&state, &local) {
            Ok(next) => {
                // halve the step on a pronounced residual increase
                if next.residual > 1.5 * state.residual && local.dt_safety > 1e-4 {
                    local.dt_safety *= 0.5;
                    continue;
                }
                if next.residual > 1e6 * initial_residual.max(config.residual_target) {
                    status = FlowStatus::BlowUp;
                    break;
                }
                state = next;
                steps += 1;
                omega_alarm |= state.min_star_omega < config.omega_floor;
                if steps % config.log_interval == 0 {
                    trace.rows.push(TraceRow {
                        t: state.t,
                        residual: state.residual,
                        min_star_omega: state.min_star_omega,
                    });
                }
            }
            Err(Error::BlowUp(_)) => {
                status = FlowStatus::BlowUp;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    trace.rows.push(TraceRow {
        t: state.t,
        residual: state.residual,
        min_star_omega: state.min_star_omega,
    });
    compute_jet(&mut state.sample)?;
    Ok(FlowRun { state, trace, status, steps, omega_alarm })
}

/// Density-preservation report over a trace.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaMonitorReport {
    pub initial: f64,
    pub min_over_time: f64,
    /// Largest drop below the initial value (non-negative).
    pub max_drop: f64,
    pub tolerance: f64,
    pub preserved: bool,
}

/// Checks empirically whether the minimum projection density ever dropped
/// below its initial value by more than `tolerance`.
pub fn monitor_omega(trace: &FlowTrace, tolerance: f64) -> Result<OmegaMonitorReport> {
    let first = trace.rows.first().ok_or_else(|| Error::State("empty flow trace".into()))?;
    let min_over_time = trace.rows.iter().map(|r| r.min_star_omega).fold(f64::INFINITY, f64::min);
    let max_drop = (first.min_star_omega - min_over_time).max(0.0);
    Ok(OmegaMonitorReport {
        initial: first.min_star_omega,
        min_over_time,
        max_drop,
        tolerance,
        preserved: max_drop <= tolerance,
    })
}

/// Largest multiplier `t` (within `[0, 1]`, by bisection) such that `t
/// phi` passes the criterion in the requested mode; returns the scaled
/// sample with its jet and the multiplier. Data already passing keeps
/// `t = 1`.
pub fn scale_to_criterion(
    sample: &GraphSample,
    constants: &CriterionConstants,
    mode: CriterionMode,
) -> Result<(GraphSample, f64)> {
    let passes = |t: f64| -> Result<bool> {
        let mut scaled = sample.clone();
        for v in scaled.values.iter_mut() {
            *v *= t;
        }
        scaled.jet = None;
        compute_jet(&mut scaled)?;
        let metric = induced_metric(&scaled)?;
        Ok(check_graph(&scaled, &metric, constants, mode)?.pass)
    };

    let mut t = 1.0;
    if !passes(1.0)? {
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if passes(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = lo;
    }
    let mut scaled = sample.clone();
    for v in scaled.values.iter_mut() {
        *v *= t;
    }
    scaled.jet = None;
    compute_jet(&mut scaled)?;
    Ok((scaled, t))
}
