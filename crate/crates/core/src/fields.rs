//! Induced metric, projection density and second fundamental form of a
//! sampled graph.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frame::PointFrame;
use crate::grid::GraphSample;

/// Per-node metric data. Entries at non-interior nodes are placeholders
/// (identity metric) and must not be read.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub g: Vec<DMatrix<f64>>,
    pub g_inv: Vec<DMatrix<f64>>,
    pub sqrt_det_g: Vec<f64>,
    /// Jacobian of the projection onto the base, `1/sqrt(det g)` in `(0, 1]`.
    pub star_omega: Vec<f64>,
}

/// Computes `g = I + (df)^T df`, its inverse, `sqrt(det g)` and the
/// projection density at every interior node.
pub fn induced_metric(sample: &GraphSample) -> Result<MetricField> {
    let jet = sample.jet()?;
    let n = sample.dimension();
    let count = sample.domain.node_count();

    let mut g = vec![DMatrix::identity(n, n); count];
    let mut g_inv = vec![DMatrix::identity(n, n); count];
    let mut sqrt_det_g = vec![1.0; count];
    let mut star_omega = vec![1.0; count];

    for &node in &sample.domain.interior_nodes() {
        let df = &jet.df[node];
        let metric = DMatrix::identity(n, n) + df.transpose() * df;
        let chol = metric.clone().cholesky().ok_or_else(|| {
            Error::Consistency(format!("induced metric at node {node} is not positive definite"))
        })?;
        let det: f64 = (0..n).map(|i| chol.l()[(i, i)]).product::<f64>().powi(2);
        if !(det.is_finite() && det >= 1.0 - 1e-12) {
            return Err(Error::Consistency(format!("det g = {det} < 1 at node {node}")));
        }
        let so = 1.0 / det.sqrt();
        if !(so > 0.0 && so <= 1.0 + 1e-12) {
            return Err(Error::Consistency(format!("*Omega = {so} outside (0, 1] at node {node}")));
        }
        g_inv[node] = chol.inverse();
        sqrt_det_g[node] = det.sqrt();
        star_omega[node] = so.min(1.0);
        g[node] = metric;
    }

    Ok(MetricField { g, g_inv, sqrt_det_g, star_omega })
}

/// Largest slope of the graph: `max` over interior nodes of the top
/// singular value of `df`.
pub fn df_norm(sample: &GraphSample) -> Result<f64> {
    let jet = sample.jet()?;
    let mut max = 0.0f64;
    for &node in &sample.domain.interior_nodes() {
        let sv = jet.df[node].clone().singular_values();
        max = max.max(sv.iter().cloned().fold(0.0, f64::max));
    }
    Ok(max)
}

/// Second fundamental form coefficients against the adapted frames,
/// `h[node][alpha]` an n x n symmetric matrix, plus the per-node mean
/// curvature components `sum_i h_{alpha i i}`.
#[derive(Debug, Clone)]
pub struct SffField {
    pub h: Vec<Vec<DMatrix<f64>>>,
    pub mean_curvature: Vec<DVector<f64>>,
}

/// Frame components of the second fundamental form.
///
/// The ambient second derivative of the immersion along coordinate
/// directions is the vertical vector `(0, Hess f_{kl})`; contracting with
/// the g-orthonormal tangent frame `E_i = a_i / sqrt(1 + lambda_i^2)` and
/// the normal frame `e_alpha` gives `h_{alpha i j}`.
pub fn second_fundamental_form(
    sample: &GraphSample,
    _metric: &MetricField,
    frames: &[Option<PointFrame>],
) -> Result<SffField> {
    let jet = sample.jet()?;
    let n = sample.dimension();
    let m = sample.codimension;
    let count = sample.domain.node_count();

    let mut h = vec![vec![DMatrix::zeros(n, n); m]; count];
    let mut mean = vec![DVector::zeros(m); count];

    for &node in &sample.domain.interior_nodes() {
        let frame = frames[node]
            .as_ref()
            .ok_or_else(|| Error::State(format!("frames missing at interior node {node}")))?;
        // Coordinate coefficients of the orthonormal tangent frame.
        let coeff = DMatrix::from_fn(n, n, |k, i| {
            frame.a_tangent[(k, i)] / (1.0 + frame.lambda[i] * frame.lambda[i]).sqrt()
        });
        // Vertical components of each normal frame vector.
        let e_vert = DMatrix::from_fn(m, m, |b, a| frame.e_normal[(n + b, a)]);
        for alpha in 0..m {
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            // <e_alpha, (0, Hess f_{kl})>
                            let mut dot = 0.0;
                            for b in 0..m {
                                dot += e_vert[(b, alpha)] * jet.hessian[node][b][(k, l)];
                            }
                            acc += coeff[(k, i)] * coeff[(l, j)] * dot;
                        }
                    }
                    h[node][alpha][(i, j)] = acc;
                    h[node][alpha][(j, i)] = acc;
                }
            }
            mean[node][alpha] = (0..n).map(|i| h[node][alpha][(i, i)]).sum();
        }
    }

    Ok(SffField { h, mean_curvature: mean })
}

impl SffField {
    /// Max over interior nodes of |mean curvature| in the frame components.
    pub fn max_mean_curvature(&self, sample: &GraphSample) -> f64 {
        sample
            .domain
            .interior_nodes()
            .iter()
            .map(|&k| self.mean_curvature[k].norm())
            .fold(0.0, f64::max)
    }
}
