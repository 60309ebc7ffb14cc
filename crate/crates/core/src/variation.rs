//! Second variation of volume over a discretized graph: normal fields,
//! the curvature term `B(V, V)`, the normal-bundle gradient energy, and
//! two independent finite-difference oracles (volume second derivative
//! and pullback constancy) against which the assembled quadratic form is
//! validated.
//!
//! Normal fields are stored in ambient coordinates and projected
//! pointwise; adapted frames are never differentiated, so singular-value
//! crossings cannot introduce artificial discontinuities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::MetricField;
use crate::grid::{field_jacobian, GraphSample};

/// Compactly supported ambient-valued field, normal to the graph at every
/// supported node and zero on the boundary ring.
#[derive(Debug, Clone)]
pub struct NormalField {
    pub vectors: Vec<DVector<f64>>,
    pub support: Vec<bool>,
}

impl NormalField {
    pub fn zero(sample: &GraphSample) -> Self {
        let d = sample.dimension() + sample.codimension;
        NormalField {
            vectors: vec![DVector::zeros(d); sample.domain.node_count()],
            support: (0..sample.domain.node_count()).map(|k| sample.domain.is_interior(k)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn scale(&self, t: f64) -> Self {
        NormalField {
            vectors: self.vectors.iter().map(|v| v * t).collect(),
            support: self.support.clone(),
        }
    }

    /// Largest violation of normality over supported nodes, measured
    /// against the tangent basis `[I; df]`.
    pub fn normality_defect(&self, sample: &GraphSample) -> Result<f64> {
        let jet = sample.jet()?;
        let n = sample.dimension();
        let m = sample.codimension;
        let mut worst = 0.0f64;
        for node in 0..sample.domain.node_count() {
            if !self.support[node] {
                continue;
            }
            let df = &jet.df[node];
            for c in 0..n {
                let mut dot = self.vectors[node][c];
                for a in 0..m {
                    dot += df[(a, c)] * self.vectors[node][n + a];
                }
                worst = worst.max(dot.abs());
            }
        }
        Ok(worst)
    }
}

/// `[I; df]`, the (n+m) x n tangent basis of the graph at a node.
pub(crate) fn tangent_basis(df: &DMatrix<f64>) -> DMatrix<f64> {
    let m = df.nrows();
    let n = df.ncols();
    DMatrix::from_fn(n + m, n, |r, c| {
        if r < n {
            if r == c {
                1.0
            } else {
                0.0
            }
        } else {
            df[(r - n, c)]
        }
    })
}

/// Orthogonal projector onto the normal space, `I - J g^{-1} J^T`.
pub(crate) fn normal_projector(df: &DMatrix<f64>, g_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let j = tangent_basis(df);
    let d = j.nrows();
    DMatrix::identity(d, d) - &j * g_inv * j.transpose()
}

/// Projects an arbitrary ambient field onto the normal bundle; the
/// boundary ring is zeroed (compact support).
pub fn project_normal(field: &[DVector<f64>], sample: &GraphSample, metric: &MetricField) -> Result<NormalField> {
    let jet = sample.jet()?;
    let d = sample.dimension() + sample.codimension;
    if field.len() != sample.domain.node_count() {
        return Err(Error::Config("field length does not match the grid".into()));
    }
    let mut out = NormalField::zero(sample);
    for &node in &sample.domain.interior_nodes() {
        if field[node].len() != d {
            return Err(Error::Config(format!("field vector at node {node} has wrong length")));
        }
        let p = normal_projector(&jet.df[node], &metric.g_inv[node]);
        out.vectors[node] = &p * &field[node];
    }
    Ok(out)
}

/// `B(V, V)` per node: with `P_ij = <(0, Hess f_ij), V>`,
/// `B = sum g^{ik} g^{jl} P_ij P_kl`.
pub fn b_form(field: &NormalField, sample: &GraphSample, metric: &MetricField) -> Result<Vec<f64>> {
    let jet = sample.jet()?;
    let n = sample.dimension();
    let m = sample.codimension;
    let mut out = vec![0.0; sample.domain.node_count()];
    for &node in &sample.domain.interior_nodes() {
        let v = &field.vectors[node];
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut dot = 0.0;
                for a in 0..m {
                    dot += jet.hessian[node][a][(i, j)] * v[n + a];
                }
                p[(i, j)] = dot;
            }
        }
        let q = &metric.g_inv[node] * &p * &metric.g_inv[node];
        out[node] = p.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
    }
    Ok(out)
}

/// `||nabla^N V||^2` per node: centered differences of the ambient field,
/// projected pointwise, contracted with `g^{ij}`.
pub fn grad_normal_energy(field: &NormalField, sample: &GraphSample, metric: &MetricField) -> Result<Vec<f64>> {
    let jet = sample.jet()?;
    let n = sample.dimension();
    let d = n + sample.codimension;
    let jac = field_jacobian(&sample.domain, &field.vectors, d, false);
    let mut out = vec![0.0; sample.domain.node_count()];
    for &node in &sample.domain.interior_nodes() {
        let p = normal_projector(&jet.df[node], &metric.g_inv[node]);
        let projected = &p * &jac[node];
        let ginv = &metric.g_inv[node];
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += ginv[(i, j)] * projected.column(i).dot(&projected.column(j));
            }
        }
        out[node] = acc;
    }
    Ok(out)
}

/// Integral of a per-node scalar with density `sqrt(det g)` over the
/// interior, with uniform node weights (exact for compactly supported
/// integrands on the uniform grid).
pub fn integrate_interior(values: &[f64], sample: &GraphSample, metric: &MetricField) -> f64 {
    let w = sample.domain.cell_volume();
    sample
        .domain
        .interior_nodes()
        .iter()
        .map(|&k| values[k] * metric.sqrt_det_g[k])
        .sum::<f64>()
        * w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    StableNumerically,
    UnstableNumerically,
    Inconclusive,
}

/// Energies and Rayleigh quotient of a variation field, plus the
/// spectral estimate when produced by the eigensolver.
#[derive(Debug, Clone, Serialize)]
pub struct QuadraticFormReport {
    pub gradient_energy: f64,
    pub b_energy: f64,
    pub q_value: f64,
    pub l2_norm: f64,
    pub rayleigh: f64,
    pub min_eig_estimate: Option<f64>,
    pub min_eig_residual: Option<f64>,
    pub tol_eig: f64,
    pub verdict: StabilityVerdict,
}

/// Default eigenvalue tolerance, ten times the squared grid spacing
/// (matching the truncation order of the stencils).
pub fn default_tol_eig(sample: &GraphSample) -> f64 {
    let h = sample.domain.spacing().iter().cloned().fold(0.0, f64::max);
    10.0 * h * h
}

/// Assembles `Q(V) = int (||nabla^N V||^2 - B(V, V)) dv` and the L2 norm
/// of `V`, both with density `sqrt(det g)`.
pub fn quadratic_form(field: &NormalField, sample: &GraphSample, metric: &MetricField) -> Result<QuadraticFormReport> {
    let grad = grad_normal_energy(field, sample, metric)?;
    let b = b_form(field, sample, metric)?;
    let gradient_energy = integrate_interior(&grad, sample, metric);
    let b_energy = integrate_interior(&b, sample, metric);
    let l2: Vec<f64> = field.vectors.iter().map(|v| v.norm_squared()).collect();
    let l2_norm = integrate_interior(&l2, sample, metric);
    if l2_norm <= 0.0 {
        return Err(Error::Degenerate("variation field vanishes identically".into()));
    }
    let q_value = gradient_energy - b_energy;
    let rayleigh = q_value / l2_norm;
    let tol = default_tol_eig(sample);
    Ok(QuadraticFormReport {
        gradient_energy,
        b_energy,
        q_value,
        l2_norm,
        rayleigh,
        min_eig_estimate: None,
        min_eig_residual: None,
        tol_eig: tol,
        verdict: if rayleigh >= -tol {
            StabilityVerdict::StableNumerically
        } else {
            StabilityVerdict::UnstableNumerically
        },
    })
}

/// A straight-line variation `F_s = F + s V` with a symmetric list of
/// parameter values; straight lines make the acceleration term vanish
/// identically.
pub struct VariationPath<'a> {
    pub sample: &'a GraphSample,
    pub field: &'a NormalField,
    pub s0: f64,
    pub s_values: Vec<f64>,
}

impl<'a> VariationPath<'a> {
    /// Step chosen as `1e-3` divided by the sup norm of the field.
    pub fn new(sample: &'a GraphSample, field: &'a NormalField) -> Self {
        let sup = field.sup_norm();
        let s0 = if sup > 0.0 { 1e-3 / sup } else { 1e-3 };
        Self::with_step(sample, field, s0)
    }

    pub fn with_step(sample: &'a GraphSample, field: &'a NormalField, s0: f64) -> Self {
        VariationPath {
            sample,
            field,
            s0,
            s_values: vec![-s0, -s0 / 2.0, 0.0, s0 / 2.0, s0],
        }
    }
}

/// Second difference of the volume along the path, with a Richardson
/// refinement at half step.
#[derive(Debug, Clone, Serialize)]
pub struct VolumeSecondDerivative {
    /// `(Vol(s0) - 2 Vol(0) + Vol(-s0)) / s0^2`.
    pub value: f64,
    /// Richardson extrapolation from the half-step estimate.
    pub refined: f64,
    /// Half-step estimate minus `value`; a truncation indicator.
    pub richardson_delta: f64,
    /// Centered first difference; near zero on minimal bases.
    pub first_derivative: f64,
    /// Set when the first derivative is not negligible, since the
    /// identification with the quadratic form presumes minimality.
    pub minimality_warning: bool,
}

/// Volume of the perturbed immersion at each `s`, by the same centered
/// jet pipeline applied to `F_s = F + s V`, then the second difference.
pub fn volume_second_derivative(path: &VariationPath<'_>) -> Result<VolumeSecondDerivative> {
    let sample = path.sample;
    let jet = sample.jet()?;
    let n = sample.dimension();
    let d = n + sample.codimension;
    // dF_s = [I; df] + s dV, with dV the centered Jacobian of the field
    let dv = field_jacobian(&sample.domain, &path.field.vectors, d, false);
    let interior = sample.domain.interior_nodes();
    let w = sample.domain.cell_volume();
    let volume = |s: f64| -> Result<f64> {
        let mut total = 0.0;
        for &node in &interior {
            let js = tangent_basis(&jet.df[node]) + s * &dv[node];
            let gs = js.transpose() * &js;
            let det = gs.determinant();
            if !(det.is_finite() && det > 0.0) {
                return Err(Error::Consistency(format!("degenerate perturbed metric at node {node}")));
            }
            total += det.sqrt();
        }
        Ok(total * w)
    };
    let s0 = path.s0;
    let v0 = volume(0.0)?;
    let vp = volume(s0)?;
    let vm = volume(-s0)?;
    let vph = volume(s0 / 2.0)?;
    let vmh = volume(-s0 / 2.0)?;
    let value = (vp - 2.0 * v0 + vm) / (s0 * s0);
    let half = (vph - 2.0 * v0 + vmh) / (s0 * s0 / 4.0);
    let refined = (4.0 * half - value) / 3.0;
    let first = (vp - vm) / (2.0 * s0);
    let warning = first.abs() > 1e-4 * value.abs().max(1.0);
    Ok(VolumeSecondDerivative {
        value,
        refined,
        richardson_delta: half - value,
        first_derivative: first,
        minimality_warning: warning,
    })
}

/// Second difference of `int det(I + s D(V_h)) dX` where `V_h` is the
/// horizontal part of the field. The integrand's `s`-coefficients are
/// discrete null Lagrangians, so the result is roundoff-small for
/// compactly supported fields.
///
/// The sum runs over every node with the difference stencil extended by
/// zero past the grid; that extension is what makes the discrete
/// summation-by-parts identity exact.
pub fn pullback_constancy(path: &VariationPath<'_>) -> Result<f64> {
    let sample = path.sample;
    let n = sample.dimension();
    let horizontal: Vec<DVector<f64>> = path
        .field
        .vectors
        .iter()
        .map(|v| DVector::from_fn(n, |i, _| v[i]))
        .collect();
    let jac = field_jacobian(&sample.domain, &horizontal, n, true);
    let s0 = path.s0;
    let eye = DMatrix::identity(n, n);
    let mut total = 0.0;
    for node in 0..sample.domain.node_count() {
        let dp = (&eye + s0 * &jac[node]).determinant();
        let dm = (&eye - s0 * &jac[node]).determinant();
        total += (dp + dm - 2.0) / (s0 * s0);
    }
    Ok(total * sample.domain.cell_volume())
}

/// Seeded low-frequency ambient field times the product-sine bump,
/// projected onto the normal bundle. Vanishes on the boundary ring.
pub fn random_compact_normal_field(
    sample: &GraphSample,
    metric: &MetricField,
    seed: u64,
    modes: usize,
) -> Result<NormalField> {
    let n = sample.dimension();
    let d = n + sample.codimension;
    let domain = &sample.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // coefficients per component and mode multi-index
    let mode_count = modes.pow(n as u32);
    let coeffs: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..mode_count).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut raw = Vec::with_capacity(domain.node_count());
    for node in 0..domain.node_count() {
        let x = domain.point(node);
        let mut v = DVector::zeros(d);
        for (comp, c) in coeffs.iter().enumerate() {
            let mut acc = 0.0;
            for (mi, coeff) in c.iter().enumerate() {
                let mut rem = mi;
                let mut prod = 1.0;
                let mut weight = 0.0;
                for i in 0..n {
                    let k = (rem % modes) + 1;
                    rem /= modes;
                    let (a, b) = domain.bounds()[i];
                    prod *= (k as f64 * std::f64::consts::PI * (x[i] - a) / (b - a)).sin();
                    weight += (k * k) as f64;
                }
                acc += coeff * prod / weight;
            }
            v[comp] = acc;
        }
        raw.push(v);
    }
    project_normal(&raw, sample, metric)
}
