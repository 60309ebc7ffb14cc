//! Uniform rectangular grids and grid-sampled graph maps
//! `f : D ⊂ R^n -> R^m` together with their finite-difference jets.
//!
//! Nodes are ordered lexicographically by multi-index (axis 0 slowest,
//! last axis fastest). Interior nodes are those at least one node away
//! from every face; all second-order stencils and all downstream
//! integrals live on the interior. The outermost ring carries Dirichlet
//! data and the compact-support convention for variation fields.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rectangular sampling domain in `R^n`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    n: usize,
    bounds: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    node_count: usize,
}

/// Builds a grid with `resolution[i]` nodes on `[bounds[i].0, bounds[i].1]`.
///
/// Requires well-ordered bounds and at least 5 nodes per axis so that the
/// interior supports centered second-order stencils inside a boundary ring.
pub fn build_grid(n: usize, bounds: &[(f64, f64)], resolution: &[usize]) -> Result<GridDomain> {
    if n == 0 {
        return Err(Error::Config("dimension n must be positive".into()));
    }
    if bounds.len() != n || resolution.len() != n {
        return Err(Error::Config(format!(
            "expected {n} bounds and resolutions, got {} and {}",
            bounds.len(),
            resolution.len()
        )));
    }
    for (i, &(a, b)) in bounds.iter().enumerate() {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Config(format!("bounds for axis {i} must satisfy a < b, got ({a}, {b})")));
        }
    }
    for (i, &r) in resolution.iter().enumerate() {
        if r < 5 {
            return Err(Error::Config(format!("resolution on axis {i} must be at least 5, got {r}")));
        }
    }
    let spacing: Vec<f64> = bounds
        .iter()
        .zip(resolution)
        .map(|(&(a, b), &r)| (b - a) / (r - 1) as f64)
        .collect();
    let mut strides = vec![0usize; n];
    let mut acc = 1usize;
    for i in (0..n).rev() {
        strides[i] = acc;
        acc = acc.checked_mul(resolution[i]).ok_or_else(|| Error::Config("grid too large".into()))?;
    }
    Ok(GridDomain {
        n,
        bounds: bounds.to_vec(),
        resolution: resolution.to_vec(),
        spacing,
        strides,
        node_count: acc,
    })
}

impl GridDomain {
    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Product of spacings; the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.n);
        multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        self.strides
            .iter()
            .map(|&s| {
                let q = rem / s;
                rem %= s;
                q
            })
            .collect()
    }

    /// Coordinates of a node.
    pub fn point(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.bounds[axis].0 + i as f64 * self.spacing[axis])
            .collect()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.resolution)
            .all(|(&i, &r)| i >= 1 && i + 1 < r)
    }

    /// Linear indices of all interior nodes, in node order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&k| self.is_interior(k)).collect()
    }

    /// Neighbor of `node` shifted by `step` along `axis`, if inside the grid.
    pub fn neighbor(&self, node: usize, axis: usize, step: isize) -> Option<usize> {
        let mut multi = self.multi_index(node);
        let i = multi[axis] as isize + step;
        if i < 0 || i as usize >= self.resolution[axis] {
            return None;
        }
        multi[axis] = i as usize;
        Some(self.index(&multi))
    }
}

/// First- and second-order centered differences of the sampled map,
/// stored per node. Entries at non-interior nodes are zero and must not
/// be read.
#[derive(Debug, Clone)]
pub struct Jet {
    /// `df[node]` is the m x n Jacobian.
    pub df: Vec<DMatrix<f64>>,
    /// `hessian[node][alpha]` is the symmetric n x n Hessian of `f^alpha`.
    pub hessian: Vec<Vec<DMatrix<f64>>>,
}

/// A map `f : D -> R^m` sampled at every grid node.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub domain: GridDomain,
    pub codimension: usize,
    /// `values[node]` is `f(x_node)` in `R^m`.
    pub values: Vec<DVector<f64>>,
    pub jet: Option<Jet>,
}

/// Evaluates `f` at every node. The jet is left unset.
pub fn sample_function<F>(domain: &GridDomain, m: usize, evaluator: F) -> Result<GraphSample>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if m == 0 {
        return Err(Error::Config("codimension m must be positive".into()));
    }
    let mut values = Vec::with_capacity(domain.node_count());
    for node in 0..domain.node_count() {
        let x = domain.point(node);
        let y = evaluator(&x);
        if y.len() != m {
            return Err(Error::Data(format!(
                "evaluator returned {} components at node {node}, expected {m}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("evaluator returned a non-finite value at node {node}")));
        }
        values.push(DVector::from_vec(y));
    }
    Ok(GraphSample {
        domain: domain.clone(),
        codimension: m,
        values,
        jet: None,
    })
}

impl GraphSample {
    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn jet(&self) -> Result<&Jet> {
        self.jet.as_ref().ok_or_else(|| Error::State("jet not computed; call compute_jet first".into()))
    }

    /// Immersion point `F(x) = (x, f(x))` of a node.
    pub fn immersion_point(&self, node: usize) -> DVector<f64> {
        let n = self.dimension();
        let mut p = DVector::zeros(n + self.codimension);
        for (i, xi) in self.domain.point(node).iter().enumerate() {
            p[i] = *xi;
        }
        for a in 0..self.codimension {
            p[n + a] = self.values[node][a];
        }
        p
    }
}

/// Populates `sample.jet` with second-order centered differences at every
/// interior node. Exact (up to roundoff) for polynomials of degree <= 2.
pub fn compute_jet(sample: &mut GraphSample) -> Result<()> {
    let domain = sample.domain.clone();
    let n = domain.dimension();
    let m = sample.codimension;
    let h = domain.spacing().to_vec();
    let count = domain.node_count();

    let mut df = vec![DMatrix::zeros(m, n); count];
    let mut hessian = vec![vec![DMatrix::zeros(n, n); m]; count];

    for node in 0..count {
        if !domain.is_interior(node) {
            continue;
        }
        let f0 = &sample.values[node];
        for i in 0..n {
            let plus = domain.neighbor(node, i, 1).expect("interior node");
            let minus = domain.neighbor(node, i, -1).expect("interior node");
            let fp = &sample.values[plus];
            let fm = &sample.values[minus];
            for a in 0..m {
                df[node][(a, i)] = (fp[a] - fm[a]) / (2.0 * h[i]);
                hessian[node][a][(i, i)] = (fp[a] - 2.0 * f0[a] + fm[a]) / (h[i] * h[i]);
            }
            for j in (i + 1)..n {
                let pp = domain.neighbor(plus, j, 1).expect("interior node");
                let pm = domain.neighbor(plus, j, -1).expect("interior node");
                let mp = domain.neighbor(minus, j, 1).expect("interior node");
                let mm = domain.neighbor(minus, j, -1).expect("interior node");
                for a in 0..m {
                    let v = (sample.values[pp][a] - sample.values[pm][a] - sample.values[mp][a]
                        + sample.values[mm][a])
                        / (4.0 * h[i] * h[j]);
                    hessian[node][a][(i, j)] = v;
                    hessian[node][a][(j, i)] = v;
                }
            }
        }
    }

    sample.jet = Some(Jet { df, hessian });
    Ok(())
}

/// Centered-difference Jacobian of an arbitrary per-node vector field.
///
/// `field[node]` may have any fixed length `d`; the result at an interior
/// node is the d x n matrix of partials. With `extend_by_zero` the stencil
/// treats nodes outside the grid (and the field itself where undefined) as
/// zero, which makes the operator summation-by-parts exact for compactly
/// supported fields; without it, non-interior rows are left zero.
pub fn field_jacobian(
    domain: &GridDomain,
    field: &[DVector<f64>],
    d: usize,
    extend_by_zero: bool,
) -> Vec<DMatrix<f64>> {
    let n = domain.dimension();
    let h = domain.spacing();
    let mut out = vec![DMatrix::zeros(d, n); domain.node_count()];
    for node in 0..domain.node_count() {
        if !extend_by_zero && !domain.is_interior(node) {
            continue;
        }
        for i in 0..n {
            let fp = domain.neighbor(node, i, 1).map(|k| field[k].clone());
            let fm = domain.neighbor(node, i, -1).map(|k| field[k].clone());
            for a in 0..d {
                let vp = fp.as_ref().map_or(0.0, |v| v[a]);
                let vm = fm.as_ref().map_or(0.0, |v| v[a]);
                out[node][(a, i)] = (vp - vm) / (2.0 * h[i]);
            }
        }
    }
    out
}

/// One named per-node column for CSV snapshots. Undefined entries are NaN.
pub struct CsvColumn<'a> {
    pub name: &'a str,
    pub values: Vec<f64>,
}

/// Writes the snapshot `node_index, x1..xn, f1..fm, [extra columns]`.
pub fn write_sample_csv<W: Write>(
    w: &mut W,
    sample: &GraphSample,
    extra: &[CsvColumn<'_>],
) -> std::io::Result<()> {
    let n = sample.dimension();
    let m = sample.codimension;
    let mut header = String::from("node_index");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for a in 1..=m {
        header.push_str(&format!(",f{a}"));
    }
    for col in extra {
        header.push(',');
        header.push_str(col.name);
    }
    writeln!(w, "{header}")?;
    for node in 0..sample.domain.node_count() {
        let mut row = format!("{node}");
        for x in sample.domain.point(node) {
            row.push_str(&format!(",{x:.17e}"));
        }
        for a in 0..m {
            row.push_str(&format!(",{:.17e}", sample.values[node][a]));
        }
        for col in extra {
            row.push_str(&format!(",{:.17e}", col.values[node]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}
