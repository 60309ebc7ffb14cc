//! Singular-value-adapted orthonormal frames of a graph point.
//!
//! For a Jacobian `df : R^n -> R^m` with singular values `lambda_i` and
//! singular vector pairs `df(a_i) = lambda_i a_{n+i}`, the vectors
//!
//! ```text
//! e_i     = (a_i, lambda_i a_{n+i}) / sqrt(1 + lambda_i^2)
//! e_{n+i} = (-lambda_i a_i, a_{n+i}) / sqrt(1 + lambda_i^2)
//! ```
//!
//! form orthonormal bases of the tangent and normal spaces of the graph.
//! Frames are not unique; this module fixes a deterministic completion so
//! repeated runs and tests see identical bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GraphSample;

/// Adapted frames at one point.
///
/// `lambda` is non-increasing with exactly `n` entries, padded with zeros
/// when `m < n`. Columns of `a_tangent` are the `a_i`, columns of
/// `a_normal` the `a_{n+i}` (completed to a basis of `R^m`), and columns
/// of `e_tangent` / `e_normal` the ambient frame vectors.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub n: usize,
    pub m: usize,
    pub lambda: Vec<f64>,
    pub a_tangent: DMatrix<f64>,
    pub a_normal: DMatrix<f64>,
    pub e_tangent: DMatrix<f64>,
    pub e_normal: DMatrix<f64>,
}

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;
/// Relative gap under which neighboring singular values form one cluster.
pub const CLUSTER_TOL: f64 = 1e-10;
const GS_ACCEPT: f64 = 1e-6;
const SIGN_TOL: f64 = 1e-8;

/// Orthogonalizes `v` against the first `k` columns of `basis` (twice, for
/// stability) and returns it normalized, unless the residual is negligible.
fn orthonormalize_against(v: &DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let mut w = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&w);
            w -= b * c;
        }
    }
    let norm = w.norm();
    if norm > GS_ACCEPT {
        Some(w / norm)
    } else {
        None
    }
}

/// Flips the vector so its first entry larger than `SIGN_TOL` in magnitude
/// is positive. Returns the applied sign.
fn canonical_sign(v: &mut DVector<f64>) -> f64 {
    for x in v.iter() {
        if x.abs() > SIGN_TOL {
            if *x < 0.0 {
                *v = -&*v;
                return -1.0;
            }
            return 1.0;
        }
    }
    1.0
}

/// Deterministic adapted frames from the singular value decomposition of `df`.
pub fn svd_frames(df: &DMatrix<f64>) -> Result<PointFrame> {
    let m = df.nrows();
    let n = df.ncols();
    if df.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("df has non-finite entries".into()));
    }

    let svd = df.clone().svd(true, true);
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let k = svd.singular_values.len();

    // Sorted (sigma, right vector) pairs, largest first, stable on ties.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap().then(a.cmp(&b)));
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let right: Vec<DVector<f64>> = order.iter().map(|&i| v_t.row(i).transpose()).collect();

    let sigma_max = sigmas.first().copied().unwrap_or(0.0);
    let rank_tol = RANK_TOL * sigma_max.max(1.0);
    let rank = sigmas.iter().take_while(|&&s| s > rank_tol).count();
    let cluster_tol = CLUSTER_TOL * (1.0 + sigma_max);

    // Re-orthonormalize each cluster of equal singular values against the
    // standard basis, in fixed pivot order, so repeated values still yield
    // reproducible frames.
    let mut a_tan: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < rank {
        let mut end = start + 1;
        while end < rank && (sigmas[end - 1] - sigmas[end]).abs() <= cluster_tol {
            end += 1;
        }
        let dim = end - start;
        // Projector onto the cluster's right singular subspace.
        let mut proj = DMatrix::zeros(n, n);
        for v in &right[start..end] {
            proj += v * v.transpose();
        }
        let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(dim);
        for p in 0..n {
            if accepted.len() == dim {
                break;
            }
            let mut cand = DVector::zeros(n);
            cand[p] = 1.0;
            let projected = &proj * cand;
            if let Some(w) = orthonormalize_against(&projected, &accepted) {
                accepted.push(w);
            }
        }
        if accepted.len() != dim {
            // Projections of the standard basis span the subspace, so this
            // only triggers on pathological roundoff; keep the SVD vectors.
            accepted = right[start..end].to_vec();
        }
        for mut v in accepted {
            canonical_sign(&mut v);
            a_tan.push(v);
        }
        start = end;
    }
    // Null directions of df, completed from the standard basis.
    for p in 0..n {
        if a_tan.len() == n {
            break;
        }
        let mut cand = DVector::zeros(n);
        cand[p] = 1.0;
        if let Some(mut w) = orthonormalize_against(&cand, &a_tan) {
            canonical_sign(&mut w);
            a_tan.push(w);
        }
    }
    debug_assert_eq!(a_tan.len(), n);

    // lambda recomputed as |df a_i| so that df(a_i) = lambda_i a_{n+i} holds
    // exactly for the re-orthonormalized tangent vectors.
    let mut lambda = vec![0.0; n];
    let mut a_nor: Vec<DVector<f64>> = Vec::with_capacity(m);
    for i in 0..rank.min(n) {
        let image = df * &a_tan[i];
        let norm = image.norm();
        lambda[i] = norm;
        a_nor.push(image / norm);
    }
    for p in 0..m {
        if a_nor.len() == m {
            break;
        }
        let mut cand = DVector::zeros(m);
        cand[p] = 1.0;
        if let Some(mut w) = orthonormalize_against(&cand, &a_nor) {
            canonical_sign(&mut w);
            a_nor.push(w);
        }
    }
    debug_assert_eq!(a_nor.len(), m);

    let e_tangent = DMatrix::from_fn(n + m, n, |r, i| {
        let s = (1.0 + lambda[i] * lambda[i]).sqrt();
        if r < n {
            a_tan[i][r] / s
        } else if i < m {
            lambda[i] * a_nor[i][r - n] / s
        } else {
            0.0
        }
    });
    let e_normal = DMatrix::from_fn(n + m, m, |r, j| {
        let lam = if j < n { lambda[j] } else { 0.0 };
        let s = (1.0 + lam * lam).sqrt();
        if r < n {
            if j < n {
                -lam * a_tan[j][r] / s
            } else {
                0.0
            }
        } else {
            a_nor[j][r - n] / s
        }
    });

    Ok(PointFrame {
        n,
        m,
        lambda,
        a_tangent: DMatrix::from_columns(&a_tan),
        a_normal: DMatrix::from_columns(&a_nor),
        e_tangent,
        e_normal,
    })
}

/// Frames at every interior node; non-interior slots are `None`.
pub fn frame_field(sample: &GraphSample) -> Result<Vec<Option<PointFrame>>> {
    let jet = sample.jet()?;
    let mut out = vec![None; sample.domain.node_count()];
    for &node in &sample.domain.interior_nodes() {
        out[node] = Some(svd_frames(&jet.df[node])?);
    }
    Ok(out)
}

impl PointFrame {
    /// Gram matrix of the combined `n + m` frame vectors.
    pub fn gram(&self) -> DMatrix<f64> {
        let all = DMatrix::from_fn(self.n + self.m, self.n + self.m, |r, c| {
            if c < self.n {
                self.e_tangent[(r, c)]
            } else {
                self.e_normal[(r, c - self.n)]
            }
        });
        all.transpose() * all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let mut df = DMatrix::zeros(2, 2);
        df[(0, 1)] = f64::NAN;
        assert!(matches!(svd_frames(&df), Err(crate::error::Error::Data(_))));
    }

    #[test]
    fn zero_jacobian_gives_standard_bases() {
        let frame = svd_frames(&DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(frame.lambda, vec![0.0; 3]);
        assert_eq!(frame.a_tangent, DMatrix::identity(3, 3));
        assert_eq!(frame.a_normal, DMatrix::identity(2, 2));
        // horizontal tangents, vertical normals
        for i in 0..3 {
            assert_eq!(frame.e_tangent[(i, i)], 1.0);
        }
        for j in 0..2 {
            assert_eq!(frame.e_normal[(3 + j, j)], 1.0);
        }
    }

    #[test]
    fn diagonal_case_sorts_singular_values() {
        // columns (1,0,0) and (0,2,0)
        let df = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let frame = svd_frames(&df).unwrap();
        assert!((frame.lambda[0] - 2.0).abs() < 1e-12);
        assert!((frame.lambda[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_from_frames_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let df = random_matrix(&mut rng, 3, 3);
            let frame = svd_frames(&df).unwrap();
            let mut rebuilt = DMatrix::zeros(3, 3);
            for i in 0..3 {
                rebuilt += frame.lambda[i] * frame.a_normal.column(i) * frame.a_tangent.column(i).transpose();
            }
            assert!((&rebuilt - &df).amax() < 1e-12, "max err {}", (&rebuilt - &df).amax());
        }
    }

    #[test]
    fn frames_are_orthonormal_and_adapted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, n) in &[(1usize, 2usize), (2, 2), (3, 2), (2, 3), (4, 3)] {
            let df = random_matrix(&mut rng, m, n);
            let frame = svd_frames(&df).unwrap();
            let gram = frame.gram();
            assert!((&gram - DMatrix::identity(n + m, n + m)).amax() < 1e-10);
            // df(a_i) = lambda_i a_{n+i}
            for i in 0..n.min(m) {
                let lhs = &df * frame.a_tangent.column(i);
                let rhs = frame.lambda[i] * frame.a_normal.column(i);
                assert!((lhs - rhs).amax() < 1e-10);
            }
            // tangency of e_i and normality of e_alpha against [I; df] columns
            for c in 0..n {
                let mut col = DVector::zeros(n + m);
                col[c] = 1.0;
                for a in 0..m {
                    col[n + a] = df[(a, c)];
                }
                for j in 0..m {
                    assert!(frame.e_normal.column(j).dot(&col).abs() < 1e-10);
                }
            }
            for i in 0..n {
                // e_i should be reproducible as [I; df] u for some u
                let top: DVector<f64> = DVector::from_fn(n, |r, _| frame.e_tangent[(r, i)]);
                let bottom: DVector<f64> = DVector::from_fn(m, |r, _| frame.e_tangent[(n + r, i)]);
                assert!((&df * &top - bottom).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn repeated_singular_values_resolve_deterministically() {
        // df = rotation-like with equal singular values; run twice and compare
        let df = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let f1 = svd_frames(&df).unwrap();
        let f2 = svd_frames(&df).unwrap();
        assert_eq!(f1.a_tangent, f2.a_tangent);
        assert_eq!(f1.a_normal, f2.a_normal);
        assert!((f1.lambda[0] - 1.0).abs() < 1e-12 && (f1.lambda[1] - 1.0).abs() < 1e-12);
        // canonical tie-break picks vectors aligned with the standard basis
        assert!((f1.a_tangent[(0, 0)] - 1.0).abs() < 1e-10);
    }
}
