//! Smallest Rayleigh quotient of the stability form over compactly
//! supported grid normal fields.
//!
//! Degrees of freedom are the normal-frame components at interior nodes.
//! The gradient part of the form is assembled with multilinear elements
//! and full tensor Gauss quadrature, which keeps the operator symmetric
//! positive semi-definite for flat metrics and free of the spurious
//! sublattice kernel a node-centered wide stencil would have; the
//! curvature term is lumped at nodes from the frame components of the
//! second fundamental form, and the mass is the lumped L2 mass with
//! density `sqrt(det g)`. The smallest eigenpair comes from Lanczos with
//! full reorthogonalization (dense solve below a size threshold), with
//! budgeted restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{MetricField, SffField};
use crate::frame::PointFrame;
use crate::grid::GraphSample;
use crate::variation::{
    default_tol_eig, quadratic_form, NormalField, QuadraticFormReport, StabilityVerdict,
};

/// Eigensolver configuration; defaults suit desk-scale grids.
#[derive(Debug, Clone)]
pub struct RayleighConfig {
    pub seed: u64,
    pub max_krylov: usize,
    pub restarts: usize,
    /// Convergence threshold on `||S x - theta x||` relative to `1 + |theta|`.
    pub residual_tol: f64,
    /// `tol_eig = tol_eig_scale * h_max^2`.
    pub tol_eig_scale: f64,
    /// Problems at most this large are solved densely.
    pub dense_threshold: usize,
}

impl Default for RayleighConfig {
    fn default() -> Self {
        RayleighConfig {
            seed: 0x5eed,
            max_krylov: 450,
            restarts: 4,
            residual_tol: 1e-7,
            tol_eig_scale: 10.0,
            dense_threshold: 420,
        }
    }
}

/// Symmetric sparse matrix in CSR form.
struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    fn from_triplets(dim: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &(r, c, v) in triplets.iter() {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseSym { dim, row_ptr, cols, vals }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }
}

/// Result of the smallest-eigenvalue estimate.
pub struct MinRayleighResult {
    pub report: QuadraticFormReport,
    pub eigenfield: NormalField,
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Assembled {
    stiffness: SparseSym,
    mass: Vec<f64>,
    dof_of_node: Vec<Option<usize>>,
    nodes: Vec<usize>,
    block: usize,
}

fn assemble(
    sample: &GraphSample,
    metric: &MetricField,
    frames: &[Option<PointFrame>],
    sff: &SffField,
) -> Result<Assembled> {
    let domain = &sample.domain;
    let n = sample.dimension();
    let m = sample.codimension;
    let d = n + m;
    let h = domain.spacing().to_vec();
    let corners = 1usize << n;

    let nodes = domain.interior_nodes();
    let mut dof_of_node = vec![None; domain.node_count()];
    for (slot, &node) in nodes.iter().enumerate() {
        dof_of_node[node] = Some(slot);
    }
    let dim = nodes.len() * m;

    // Normal-frame basis per supported node, as (n+m) x m matrices.
    let basis: Vec<Option<DMatrix<f64>>> = (0..domain.node_count())
        .map(|node| frames[node].as_ref().map(|f| f.e_normal.clone()))
        .collect();

    // Gauss points (+-1/sqrt(3) per axis) and per-corner shape gradients.
    let gp = 1.0 / 3.0f64.sqrt();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let res = domain.resolution().to_vec();

    // iterate cells by multi-index
    let mut cell = vec![0usize; n];
    loop {
        // corner nodes of this cell
        let corner_nodes: Vec<usize> = (0..corners)
            .map(|mask| {
                let multi: Vec<usize> =
                    (0..n).map(|i| cell[i] + ((mask >> i) & 1)).collect();
                domain.index(&multi)
            })
            .collect();

        let w_gp: f64 = h.iter().map(|hi| hi / 2.0).product();
        for gmask in 0..corners {
            let xi: Vec<f64> = (0..n).map(|i| if (gmask >> i) & 1 == 1 { gp } else { -gp }).collect();
            // shape values and physical gradients per corner
            let mut grads = vec![vec![0.0; n]; corners];
            for (k, grad) in grads.iter_mut().enumerate() {
                for i in 0..n {
                    let mut g = (if (k >> i) & 1 == 1 { 1.0 } else { -1.0 }) / h[i];
                    for j in 0..n {
                        if j != i {
                            let sj = if (k >> j) & 1 == 1 { 1.0 } else { -1.0 };
                            g *= (1.0 + sj * xi[j]) / 2.0;
                        }
                    }
                    grad[i] = g;
                }
            }
            // Jacobian of the interpolated map at the Gauss point
            let mut df = DMatrix::zeros(m, n);
            for (k, &node) in corner_nodes.iter().enumerate() {
                for a in 0..m {
                    for i in 0..n {
                        df[(a, i)] += sample.values[node][a] * grads[k][i];
                    }
                }
            }
            let g_mat = DMatrix::identity(n, n) + df.transpose() * &df;
            let chol = g_mat
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Consistency("cell metric not positive definite".into()))?;
            let det: f64 = (0..n).map(|i| chol.l()[(i, i)]).product::<f64>().powi(2);
            let g_inv = chol.inverse();
            let proj = crate::variation::normal_projector(&df, &g_inv);
            let weight = det.sqrt() * w_gp;

            for (k, &node_k) in corner_nodes.iter().enumerate() {
                let Some(slot_k) = dof_of_node[node_k] else { continue };
                let nk = basis[node_k].as_ref().expect("interior node has frames");
                for (l, &node_l) in corner_nodes.iter().enumerate() {
                    let Some(slot_l) = dof_of_node[node_l] else { continue };
                    let nl = basis[node_l].as_ref().expect("interior node has frames");
                    // c_kl = grad_k^T g^{-1} grad_l
                    let mut c_kl = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            c_kl += grads[k][i] * g_inv[(i, j)] * grads[l][j];
                        }
                    }
                    if c_kl == 0.0 {
                        continue;
                    }
                    // m x m block N_k^T P N_l
                    let mut block = DMatrix::zeros(m, m);
                    for a in 0..m {
                        for b in 0..m {
                            let mut acc = 0.0;
                            for r in 0..d {
                                for s in 0..d {
                                    acc += nk[(r, a)] * proj[(r, s)] * nl[(s, b)];
                                }
                            }
                            block[(a, b)] = acc;
                        }
                    }
                    for a in 0..m {
                        for b in 0..m {
                            let v = weight * c_kl * block[(a, b)];
                            if v != 0.0 {
                                triplets.push((slot_k * m + a, slot_l * m + b, v));
                            }
                        }
                    }
                }
            }
        }

        // advance cell multi-index
        let mut axis = n;
        while axis > 0 {
            axis -= 1;
            cell[axis] += 1;
            if cell[axis] + 1 < res[axis] {
                break;
            }
            cell[axis] = 0;
            if axis == 0 {
                axis = usize::MAX;
                break;
            }
        }
        if axis == usize::MAX {
            break;
        }
    }

    // curvature term, lumped at nodes: B_u[(a,b)] = sum_ij h_{a i j} h_{b i j}
    let vol = domain.cell_volume();
    for (slot, &node) in nodes.iter().enumerate() {
        let weight = metric.sqrt_det_g[node] * vol;
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += sff.h[node][a][(i, j)] * sff.h[node][b][(i, j)];
                    }
                }
                if acc != 0.0 {
                    triplets.push((slot * m + a, slot * m + b, -weight * acc));
                }
            }
        }
    }

    let stiffness = SparseSym::from_triplets(dim, &mut triplets);
    let mass: Vec<f64> = nodes
        .iter()
        .flat_map(|&node| std::iter::repeat(metric.sqrt_det_g[node] * vol).take(m))
        .collect();
    Ok(Assembled { stiffness, mass, dof_of_node, nodes, block: m })
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)`
/// strictly below `x`, by the Sturm sequence.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0usize;
    let mut d = 1.0f64;
    for i in 0..alpha.len() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - off / if d.abs() < 1e-300 { 1e-300f64.copysign(d) } else { d };
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiag_smallest(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i < k - 1 { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of the tridiagonal for an isolated eigenvalue, by inverse
/// iteration with a partially pivoted tridiagonal solve.
fn tridiag_eigvec(alpha: &[f64], beta: &[f64], theta: f64) -> Vec<f64> {
    let k = alpha.len();
    let shift = theta + 1e-12 * (1.0 + theta.abs());
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    for _ in 0..4 {
        // solve (T - shift I) w = v with the Thomas algorithm + pivoting
        let mut a: Vec<f64> = (0..k).map(|i| alpha[i] - shift).collect();
        let mut b: Vec<f64> = beta.to_vec(); // super-diagonal
        let mut c: Vec<f64> = beta.to_vec(); // sub-diagonal
        let mut extra = vec![0.0; k]; // second super-diagonal from pivoting
        let mut rhs = v.clone();
        for i in 0..k - 1 {
            if c[i].abs() > a[i].abs() {
                std::mem::swap(&mut a[i], &mut c[i]);
                let tmp = b[i];
                b[i] = a[i + 1];
                a[i + 1] = tmp;
                if i + 2 < k {
                    extra[i] = b[i + 1];
                    b[i + 1] = 0.0;
                }
                rhs.swap(i, i + 1);
            }
            let pivot = if a[i].abs() < 1e-300 { 1e-300f64.copysign(a[i]) } else { a[i] };
            let factor = c[i] / pivot;
            a[i + 1] -= factor * b[i];
            if i + 2 < k {
                b[i + 1] -= factor * extra[i];
            }
            rhs[i + 1] -= factor * rhs[i];
        }
        let mut w = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = rhs[i];
            if i + 1 < k {
                acc -= b[i] * w[i + 1];
            }
            if i + 2 < k {
                acc -= extra[i] * w[i + 2];
            }
            let pivot = if a[i].abs() < 1e-300 { 1e-300f64.copysign(a[i]) } else { a[i] };
            w[i] = acc / pivot;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    v
}

struct LanczosOutcome {
    theta: f64,
    vector: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn lanczos_smallest<F>(apply: &F, dim: usize, config: &RayleighConfig) -> LanczosOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut total_iters = 0usize;
    let mut best = LanczosOutcome {
        theta: f64::NAN,
        vector: start.clone(),
        residual: f64::INFINITY,
        iterations: 0,
        converged: false,
    };

    for _restart in 0..=config.restarts {
        let norm = start.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm).collect()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        let steps = config.max_krylov.min(dim);

        for k in 0..steps {
            apply(&basis[k], &mut w);
            let a = dot(&w, &basis[k]);
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&basis[k]) {
                *wi -= a * vi;
            }
            if k > 0 {
                let b = beta[k - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[k - 1]) {
                    *wi -= b * vi;
                }
            }
            // full reorthogonalization, twice
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    if c != 0.0 {
                        for (wi, vi) in w.iter_mut().zip(v) {
                            *wi -= c * vi;
                        }
                    }
                }
            }
            total_iters += 1;
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let check = b < 1e-13 || k + 1 == steps || (k >= 30 && (k + 1) % 50 == 0);
            if check {
                let theta = tridiag_smallest(&alpha, &beta);
                let y = tridiag_eigvec(&alpha, &beta, theta);
                let mut ritz = vec![0.0; dim];
                for (coef, v) in y.iter().zip(&basis) {
                    for (ri, vi) in ritz.iter_mut().zip(v) {
                        *ri += coef * vi;
                    }
                }
                let rn = ritz.iter().map(|x| x * x).sum::<f64>().sqrt();
                for r in ritz.iter_mut() {
                    *r /= rn;
                }
                let mut sx = vec![0.0; dim];
                apply(&ritz, &mut sx);
                let res = sx
                    .iter()
                    .zip(&ritz)
                    .map(|(s, r)| (s - theta * r) * (s - theta * r))
                    .sum::<f64>()
                    .sqrt();
                if res < best.residual {
                    best = LanczosOutcome {
                        theta,
                        vector: ritz.clone(),
                        residual: res,
                        iterations: total_iters,
                        converged: res <= config.residual_tol * (1.0 + theta.abs()),
                    };
                }
                if best.converged || b < 1e-13 {
                    return best;
                }
            }
            if b < 1e-13 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        start = best.vector.clone();
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest generalized eigenvalue of `Q(V) = mu M(V)` over supported
/// normal fields, with the eigenfield, residual and verdict.
pub fn min_rayleigh(
    sample: &GraphSample,
    metric: &MetricField,
    frames: &[Option<PointFrame>],
    sff: &SffField,
    config: &RayleighConfig,
) -> Result<MinRayleighResult> {
    let assembled = assemble(sample, metric, frames, sff)?;
    let dim = assembled.mass.len();
    if dim == 0 {
        return Err(Error::State("no supported nodes".into()));
    }
    let inv_sqrt_mass: Vec<f64> = assembled.mass.iter().map(|&v| 1.0 / v.sqrt()).collect();
    let stiffness = &assembled.stiffness;
    let apply = |x: &[f64], y: &mut [f64]| {
        let scaled: Vec<f64> = x.iter().zip(&inv_sqrt_mass).map(|(v, s)| v * s).collect();
        stiffness.matvec(&scaled, y);
        for (yi, s) in y.iter_mut().zip(&inv_sqrt_mass) {
            *yi *= s;
        }
    };

    let outcome = if dim <= config.dense_threshold {
        // exact small-problem path
        let mut dense = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for k in stiffness.row_ptr[r]..stiffness.row_ptr[r + 1] {
                let c = stiffness.cols[k];
                dense[(r, c)] += stiffness.vals[k] * inv_sqrt_mass[r] * inv_sqrt_mass[c];
            }
        }
        let dense = (dense.clone() + dense.transpose()) * 0.5;
        let eig = dense.clone().symmetric_eigen();
        let mut arg = 0;
        for i in 0..dim {
            if eig.eigenvalues[i] < eig.eigenvalues[arg] {
                arg = i;
            }
        }
        let theta = eig.eigenvalues[arg];
        let vector: Vec<f64> = eig.eigenvectors.column(arg).iter().cloned().collect();
        let mut sx = vec![0.0; dim];
        apply(&vector, &mut sx);
        let residual = sx
            .iter()
            .zip(&vector)
            .map(|(s, v)| (s - theta * v) * (s - theta * v))
            .sum::<f64>()
            .sqrt();
        LanczosOutcome { theta, vector, residual, iterations: dim, converged: true }
    } else {
        lanczos_smallest(&apply, dim, config)
    };

    // map y = M^{-1/2} u back to an ambient normal field
    let m = assembled.block;
    let n = sample.dimension();
    let mut eigenfield = NormalField::zero(sample);
    for (slot, &node) in assembled.nodes.iter().enumerate() {
        let frame = frames[node].as_ref().expect("interior frames");
        let mut v = DVector::zeros(n + m);
        for a in 0..m {
            let dof = slot * m + a;
            let coef = outcome.vector[dof] * inv_sqrt_mass[dof];
            v += coef * frame.e_normal.column(a);
        }
        eigenfield.vectors[node] = v;
    }
    debug_assert!(assembled.dof_of_node.iter().flatten().count() == assembled.nodes.len());

    let tol_eig = config.tol_eig_scale / 10.0 * default_tol_eig(sample);
    let verdict = if !outcome.converged {
        StabilityVerdict::Inconclusive
    } else if outcome.theta >= -tol_eig {
        StabilityVerdict::StableNumerically
    } else {
        StabilityVerdict::UnstableNumerically
    };

    // node-centered energies of the eigenfield, for the report
    let mut report = quadratic_form(&eigenfield, sample, metric)?;
    report.min_eig_estimate = Some(outcome.theta);
    report.min_eig_residual = Some(outcome.residual);
    report.tol_eig = tol_eig;
    report.verdict = verdict;

    Ok(MinRayleighResult {
        report,
        eigenfield,
        mu: outcome.theta,
        residual: outcome.residual,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{induced_metric, second_fundamental_form};
    use crate::frame::frame_field;
    use crate::grid::{build_grid, compute_jet, sample_function};

    fn setup(
        res: usize,
        m: usize,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> (GraphSample, MetricField, Vec<Option<crate::frame::PointFrame>>, SffField) {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 1.0)], &[res, res]).unwrap();
        let mut s = sample_function(&g, m, f).unwrap();
        compute_jet(&mut s).unwrap();
        let metric = induced_metric(&s).unwrap();
        let frames = frame_field(&s).unwrap();
        let sff = second_fundamental_form(&s, &metric, &frames).unwrap();
        (s, metric, frames, sff)
    }

    #[test]
    fn flat_square_ground_mode_matches_dirichlet_laplacian() {
        let (s, metric, frames, sff) = setup(17, 1, |_| vec![0.0]);
        let result = min_rayleigh(&s, &metric, &frames, &sff, &RayleighConfig::default()).unwrap();
        let expected = 2.0 * std::f64::consts::PI.powi(2);
        let rel = (result.mu - expected).abs() / expected;
        assert!(rel < 0.02, "mu = {}, rel err {rel}", result.mu);
        assert!(result.converged);
        assert_eq!(result.report.verdict, StabilityVerdict::StableNumerically);
    }

    #[test]
    fn dense_and_lanczos_paths_agree() {
        let (s, metric, frames, sff) = setup(13, 1, |_| vec![0.0]);
        let dense_cfg = RayleighConfig { dense_threshold: 10_000, ..Default::default() };
        let lanczos_cfg = RayleighConfig { dense_threshold: 0, ..Default::default() };
        let a = min_rayleigh(&s, &metric, &frames, &sff, &dense_cfg).unwrap();
        let b = min_rayleigh(&s, &metric, &frames, &sff, &lanczos_cfg).unwrap();
        assert!((a.mu - b.mu).abs() < 1e-8 * (1.0 + a.mu.abs()), "{} vs {}", a.mu, b.mu);
    }

    #[test]
    fn tilted_plane_spectrum_matches_the_constant_metric_laplacian() {
        // f = (0.3 x, 0.4 y): constant diagonal metric, eigenvalue
        // pi^2 (1/1.09 + 1/1.16), with multiplicity two across the normal bundle
        let (s, metric, frames, sff) = setup(17, 2, |x| vec![0.3 * x[0], 0.4 * x[1]]);
        let result = min_rayleigh(&s, &metric, &frames, &sff, &RayleighConfig::default()).unwrap();
        let expected = std::f64::consts::PI.powi(2) * (1.0 / 1.09 + 1.0 / 1.16);
        let rel = (result.mu - expected).abs() / expected;
        assert!(rel < 0.02, "mu = {}, expected {expected}, rel {rel}", result.mu);
        assert!(result.mu > 0.0);
    }

    #[test]
    fn general_linear_graph_stays_positive() {
        let (s, metric, frames, sff) = setup(13, 2, |x| {
            vec![0.2 * x[0] - 0.3 * x[1], 0.1 * x[0] + 0.25 * x[1]]
        });
        let result = min_rayleigh(&s, &metric, &frames, &sff, &RayleighConfig::default()).unwrap();
        assert!(result.mu > 0.0);
        assert_eq!(result.report.verdict, StabilityVerdict::StableNumerically);
    }

    #[test]
    fn eigenfield_is_normal_and_reported_energies_are_consistent() {
        let (s, metric, frames, sff) = setup(13, 2, |x| vec![0.2 * x[0] * x[1], 0.0]);
        let result = min_rayleigh(&s, &metric, &frames, &sff, &RayleighConfig::default()).unwrap();
        assert!(result.eigenfield.normality_defect(&s).unwrap() < 1e-10);
        let r = &result.report;
        assert!((r.q_value - (r.gradient_energy - r.b_energy)).abs() < 1e-12 * r.q_value.abs().max(1.0));
        assert!((r.rayleigh - r.q_value / r.l2_norm).abs() < 1e-12 * r.rayleigh.abs().max(1.0));
    }
}
