//! Pointwise verification engine for the stability inequality.
//!
//! Everything here is exact frame algebra at a single point: synthetic
//! samples `(lambda, V, dV, h)`, the calibrated integrand evaluated both
//! by direct determinant expansion and in closed form, the quantity `Xi`,
//! and seeded randomized checks of `Xi >= delta * [ ... ]`.
//!
//! Two published displays of the integrand are kept alongside the
//! implemented ones for comparison tests: the closed-form bracket as
//! published carries the opposite sign on its four h-coupling sums, and
//! the assembled statement lists the tangent/normal cross-term family
//! twice while omitting its mirror. The determinant evaluation is the
//! arbiter; the suite records which variant it confirms instead of
//! patching anything silently. Since jointly flipping `V` negates the
//! h-couplings, the sign convention does not affect any inf over the
//! sample space, so inequality verdicts are convention independent.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::criterion::{c_constant, critical_slope, epsilon_star};
use crate::error::{Error, Result};

/// A synthetic pointwise instance.
///
/// `lambda` holds `n` slopes (zero for indices past `min(n, m)`), `v` the
/// normal-frame components `V^alpha`, `dv[(i, alpha)]` the components
/// `V_i^alpha` of the normal covariant derivative, and `h[alpha]` the
/// symmetric matrices `h_{alpha i j}`.
#[derive(Debug, Clone)]
pub struct AlgebraSample {
    pub n: usize,
    pub m: usize,
    pub lambda: Vec<f64>,
    pub v: DVector<f64>,
    pub dv: DMatrix<f64>,
    pub h: Vec<DMatrix<f64>>,
    pub trace_free: bool,
}

impl AlgebraSample {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.len() != self.n || self.v.len() != self.m {
            return Err(Error::Config("sample dimensions are inconsistent".into()));
        }
        if self.dv.nrows() != self.n || self.dv.ncols() != self.m || self.h.len() != self.m {
            return Err(Error::Config("sample dimensions are inconsistent".into()));
        }
        if self.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::Domain("lambda must be non-negative".into()));
        }
        if self.lambda.iter().skip(self.m).any(|&l| l != 0.0) {
            return Err(Error::Domain("lambda must vanish past index m".into()));
        }
        for ha in &self.h {
            if (ha - ha.transpose()).amax() > 1e-12 {
                return Err(Error::Config("h must be symmetric in its last two indices".into()));
            }
            if self.trace_free && ha.trace().abs() > 1e-10 {
                return Err(Error::Config("trace_free sample has non-zero trace".into()));
            }
        }
        Ok(())
    }

    /// `w_{ij} = sum_alpha V^alpha h_{alpha i j}`.
    pub fn coupled_h(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for alpha in 0..self.m {
            w += self.v[alpha] * &self.h[alpha];
        }
        w
    }

    /// Projection density `prod 1/sqrt(1 + lambda_i^2)`.
    pub fn star_omega(&self) -> f64 {
        self.lambda.iter().map(|l| 1.0 / (1.0 + l * l).sqrt()).product()
    }
}

/// Evaluates the fixed calibrating n-form on `n` ambient vectors: the
/// determinant of their first `n` coordinates.
pub fn omega_eval(n: usize, vectors: &[DVector<f64>]) -> f64 {
    assert_eq!(vectors.len(), n, "need exactly n slots");
    DMatrix::from_fn(n, n, |r, c| vectors[c][r]).determinant()
}

/// Canonical frame vectors for given slopes: `a_i` and `a_{n+i}` are the
/// standard bases, so the tangent frame has horizontal part `a_i / s_i`
/// and vertical part `lambda_i a_{n+i} / s_i`, and the normal frame the
/// mirrored combination.
pub fn build_frame_vectors(lambda: &[f64], n: usize, m: usize) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if lambda.len() != n {
        return Err(Error::Config(format!("expected {n} slopes, got {}", lambda.len())));
    }
    if lambda.iter().any(|&l| l < 0.0) {
        return Err(Error::Domain("lambda must be non-negative".into()));
    }
    if lambda.iter().skip(m).any(|&l| l != 0.0) {
        return Err(Error::Domain("lambda must vanish past index m".into()));
    }
    let mut tangent = Vec::with_capacity(n);
    for i in 0..n {
        let s = (1.0 + lambda[i] * lambda[i]).sqrt();
        let mut e = DVector::zeros(n + m);
        e[i] = 1.0 / s;
        if i < m {
            e[n + i] = lambda[i] / s;
        }
        tangent.push(e);
    }
    let mut normal = Vec::with_capacity(m);
    for j in 0..m {
        let lam = if j < n { lambda[j] } else { 0.0 };
        let s = (1.0 + lam * lam).sqrt();
        let mut e = DVector::zeros(n + m);
        if j < n {
            e[j] = -lam / s;
        }
        e[n + j] = 1.0 / s;
        normal.push(e);
    }
    Ok((tangent, normal))
}

/// Tangent and normal parts of the ambient derivatives of the variation
/// field: `(nabla_i V)^T = -sum_{alpha,j} V^alpha h_{alpha i j} e_j` and
/// `(nabla_i V)^N = sum_alpha V_i^alpha e_alpha`.
pub fn covariant_parts(sample: &AlgebraSample) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    sample.validate()?;
    let (et, en) = build_frame_vectors(&sample.lambda, sample.n, sample.m)?;
    let w = sample.coupled_h();
    let mut out = Vec::with_capacity(sample.n);
    for i in 0..sample.n {
        let mut t = DVector::zeros(sample.n + sample.m);
        for j in 0..sample.n {
            t -= w[(i, j)] * &et[j];
        }
        let mut nrm = DVector::zeros(sample.n + sample.m);
        for alpha in 0..sample.m {
            nrm += sample.dv[(i, alpha)] * &en[alpha];
        }
        out.push((t, nrm));
    }
    Ok(out)
}

fn cross_sum(
    n: usize,
    et: &[DVector<f64>],
    parts: &[(DVector<f64>, DVector<f64>)],
    pick_i_tangent: bool,
    pick_j_tangent: bool,
) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut slots: Vec<DVector<f64>> = et.to_vec();
            slots[i] = if pick_i_tangent { parts[i].0.clone() } else { parts[i].1.clone() };
            slots[j] = if pick_j_tangent { parts[j].0.clone() } else { parts[j].1.clone() };
            total += omega_eval(n, &slots);
        }
    }
    total
}

/// Calibrated integrand by direct determinant evaluation:
/// `*Omega ||dV||^2` minus twice the `{T,N}`, `{N,T}` and `{N,N}`
/// cross-term sums, with unlisted slots filled by the tangent frame in
/// index order.
pub fn integrand_direct(sample: &AlgebraSample) -> Result<f64> {
    sample.validate()?;
    let (et, _) = build_frame_vectors(&sample.lambda, sample.n, sample.m)?;
    let parts = covariant_parts(sample)?;
    let so = sample.star_omega();
    let grad = sample.dv.iter().map(|x| x * x).sum::<f64>();
    let tn = cross_sum(sample.n, &et, &parts, true, false);
    let nt = cross_sum(sample.n, &et, &parts, false, true);
    let nn = cross_sum(sample.n, &et, &parts, false, false);
    Ok(so * grad - 2.0 * tn - 2.0 * nt - 2.0 * nn)
}

/// The assembled statement as published lists `{T,N}` twice and omits
/// `{N,T}`. Kept only so the suite can record that it disagrees with the
/// determinant evaluation whenever `h` couples.
pub fn integrand_direct_published_families(sample: &AlgebraSample) -> Result<f64> {
    sample.validate()?;
    let (et, _) = build_frame_vectors(&sample.lambda, sample.n, sample.m)?;
    let parts = covariant_parts(sample)?;
    let so = sample.star_omega();
    let grad = sample.dv.iter().map(|x| x * x).sum::<f64>();
    let tn = cross_sum(sample.n, &et, &parts, true, false);
    let nn = cross_sum(sample.n, &et, &parts, false, false);
    Ok(so * grad - 4.0 * tn - 2.0 * nn)
}

fn expanded_terms(sample: &AlgebraSample) -> (f64, f64, f64, f64, f64) {
    let n = sample.n;
    let m = sample.m;
    let lam = &sample.lambda;
    let dv = &sample.dv;
    let w = sample.coupled_h();
    let grad = dv.iter().map(|x| x * x).sum::<f64>();
    let mut diag = 0.0;
    let mut swap = 0.0;
    let mut h_diag = 0.0;
    let mut h_mixed = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if i < m && j < m {
                diag += lam[i] * lam[j] * dv[(i, i)] * dv[(j, j)];
                swap += lam[i] * lam[j] * dv[(i, j)] * dv[(j, i)];
            }
            if j < m {
                h_diag += w[(i, i)] * dv[(j, j)] * lam[j];
            }
            if i < m {
                h_mixed += w[(i, j)] * dv[(j, i)] * lam[i];
            }
        }
    }
    (grad, diag, swap, h_diag, h_mixed)
}

/// Closed-form expansion of the calibrated integrand in the adapted
/// frames. The h-coupling sums enter with the signs the determinant
/// evaluation confirms (opposite to the published bracket):
///
/// ```text
/// *Omega [ sum (V_i^a)^2 - sum_{i!=j} l_i l_j V_i^{n+i} V_j^{n+j}
///          + sum_{i!=j} l_i l_j V_i^{n+j} V_j^{n+i}
///          - 2 sum_{a, i!=j} V^a h_{aii} V_j^{n+j} l_j
///          + 2 sum_{a, i!=j} V^a h_{aij} V_j^{n+i} l_i ]
/// ```
pub fn integrand_expanded(sample: &AlgebraSample) -> Result<f64> {
    sample.validate()?;
    let (grad, diag, swap, h_diag, h_mixed) = expanded_terms(sample);
    Ok(sample.star_omega() * (grad - diag + swap - 2.0 * h_diag + 2.0 * h_mixed))
}

/// The bracket with the h-coupling signs as published. Disagrees with
/// `integrand_direct` whenever the couplings are non-zero.
pub fn integrand_expanded_published_signs(sample: &AlgebraSample) -> Result<f64> {
    sample.validate()?;
    let (grad, diag, swap, h_diag, h_mixed) = expanded_terms(sample);
    Ok(sample.star_omega() * (grad - diag + swap + 2.0 * h_diag - 2.0 * h_mixed))
}

/// The quantity `Xi`: the expanded integrand divided by `*Omega` after the
/// minimality identity `sum_{i!=j} h_{aii} = -h_{ajj}` merges the diagonal
/// h-sum into the mixed one:
///
/// ```text
/// Xi = sum (V_i^a)^2 - sum_{i!=j} l_i l_j V_i^{n+i} V_j^{n+j}
///      + sum_{i!=j} l_i l_j V_i^{n+j} V_j^{n+i}
///      + 2 sum_{a,i,j} V^a h_{aij} V_j^{n+i} l_i
/// ```
///
/// (the final sign follows the determinant evaluation; the inf of any
/// margin over a V-symmetric sample family is unaffected).
pub fn xi(sample: &AlgebraSample) -> Result<f64> {
    sample.validate()?;
    let n = sample.n;
    let m = sample.m;
    let lam = &sample.lambda;
    let dv = &sample.dv;
    let w = sample.coupled_h();
    let grad = dv.iter().map(|x| x * x).sum::<f64>();
    let mut diag = 0.0;
    let mut swap = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || i >= m || j >= m {
                continue;
            }
            diag += lam[i] * lam[j] * dv[(i, i)] * dv[(j, j)];
            swap += lam[i] * lam[j] * dv[(i, j)] * dv[(j, i)];
        }
    }
    let mut coupling = 0.0;
    for i in 0..n.min(m) {
        for j in 0..n {
            coupling += w[(i, j)] * dv[(j, i)] * lam[i];
        }
    }
    Ok(grad - diag + swap + 2.0 * coupling)
}

/// Right-hand side `delta [ sum (V_i^a)^2 - sum_{ij} (sum_a V^a h_{aij})^2 ]`.
pub fn rhs_bound(sample: &AlgebraSample, delta: f64) -> Result<f64> {
    sample.validate()?;
    let grad = sample.dv.iter().map(|x| x * x).sum::<f64>();
    let w = sample.coupled_h();
    let hsq = w.iter().map(|x| x * x).sum::<f64>();
    Ok(delta * (grad - hsq))
}

/// Seeded generator configuration for the randomized inequality check.
#[derive(Debug, Clone, Serialize)]
pub struct XiBatchConfig {
    pub n: usize,
    pub m: usize,
    pub lambda_cap: f64,
    pub count: usize,
    pub seed: u64,
    /// Relative tolerance; margins are measured against
    /// `sum (V_i^a)^2 + sum (sum_a V^a h_{aij})^2 + 1`.
    pub tolerance: f64,
}

impl XiBatchConfig {
    pub fn new(n: usize, m: usize, lambda_cap: f64, count: usize, seed: u64) -> Self {
        XiBatchConfig { n, m, lambda_cap, count, seed, tolerance: 1e-10 }
    }
}

/// Serializable snapshot of one sample plus its margin.
#[derive(Debug, Clone, Serialize)]
pub struct XiSamplePayload {
    pub lambda: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<Vec<f64>>,
    pub h: Vec<Vec<Vec<f64>>>,
    pub xi: f64,
    pub bound: f64,
    pub margin: f64,
    pub relative_margin: f64,
}

fn payload(sample: &AlgebraSample, xi_val: f64, bound: f64, rel: f64) -> XiSamplePayload {
    XiSamplePayload {
        lambda: sample.lambda.clone(),
        v: sample.v.iter().cloned().collect(),
        dv: (0..sample.n)
            .map(|i| (0..sample.m).map(|a| sample.dv[(i, a)]).collect())
            .collect(),
        h: sample
            .h
            .iter()
            .map(|ha| (0..sample.n).map(|i| (0..sample.n).map(|j| ha[(i, j)]).collect()).collect())
            .collect(),
        xi: xi_val,
        bound,
        margin: xi_val - bound,
        relative_margin: rel,
    }
}

/// Batch outcome; `violations == 0` means every sampled instance satisfied
/// the inequality within tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct XiBatchReport {
    pub config: XiBatchConfig,
    pub delta: f64,
    pub count: usize,
    pub violations: usize,
    pub min_relative_margin: f64,
    pub argmin: Option<XiSamplePayload>,
}

/// Draws one sample: entries of `V`, `dV` and `h` i.i.d. uniform on
/// `[-1, 1]`, `h` symmetrized and (optionally) trace-projected, slopes
/// uniform on `[0, cap]` with zero padding past `min(n, m)`.
pub fn random_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    lambda_cap: f64,
    trace_free: bool,
) -> AlgebraSample {
    let k = n.min(m);
    let lambda: Vec<f64> = (0..n)
        .map(|i| if i < k { rng.gen_range(0.0..=lambda_cap) } else { 0.0 })
        .collect();
    let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..=1.0));
    let dv = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..=1.0));
    let mut h = Vec::with_capacity(m);
    for _ in 0..m {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
        let mut sym = (&raw + raw.transpose()) * 0.5;
        if trace_free {
            let t = sym.trace() / n as f64;
            for i in 0..n {
                sym[(i, i)] -= t;
            }
        }
        h.push(sym);
    }
    AlgebraSample { n, m, lambda, v, dv, h, trace_free }
}

/// Randomized verification of `Xi >= delta [ ... ]` over trace-free
/// samples with capped slopes. The cap must not exceed the critical slope
/// for `c(n, m)`; `delta = epsilon_star(c)`.
pub fn check_xi_inequality(config: &XiBatchConfig) -> Result<XiBatchReport> {
    let c = c_constant(config.n, config.m)?;
    let slope = critical_slope(c)?;
    if config.lambda_cap > slope + 1e-12 {
        return Err(Error::Config(format!(
            "lambda cap {} exceeds the critical slope {slope}",
            config.lambda_cap
        )));
    }
    let (delta, _) = epsilon_star(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut violations = 0usize;
    let mut min_rel = f64::INFINITY;
    let mut argmin = None;
    for _ in 0..config.count {
        let sample = random_sample(&mut rng, config.n, config.m, config.lambda_cap, true);
        let xi_val = xi(&sample)?;
        let bound = rhs_bound(&sample, delta)?;
        let grad = sample.dv.iter().map(|x| x * x).sum::<f64>();
        let hsq = sample.coupled_h().iter().map(|x| x * x).sum::<f64>();
        let scale = grad + hsq + 1.0;
        let rel = (xi_val - bound) / scale;
        if rel < min_rel {
            min_rel = rel;
            argmin = Some(payload(&sample, xi_val, bound, rel));
        }
        if xi_val - bound < -config.tolerance * scale {
            violations += 1;
        }
    }
    Ok(XiBatchReport {
        config: config.clone(),
        delta,
        count: config.count,
        violations,
        min_relative_margin: min_rel,
        argmin,
    })
}

/// Deterministic coarse-grid scan at a fixed slope value (typically far
/// above the critical slope) looking for pointwise violations of the
/// bound. Scans diagonal and two-entry `dV` patterns against canonical
/// `V` and trace-free `h` patterns.
#[derive(Debug, Clone, Serialize)]
pub struct XiScanReport {
    pub lambda_value: f64,
    pub delta: f64,
    pub checked: usize,
    pub violations: usize,
    pub worst: Option<XiSamplePayload>,
}

pub fn xi_violation_scan(n: usize, m: usize, lambda_value: f64, delta: f64) -> Result<XiScanReport> {
    let k = n.min(m);
    let lambda: Vec<f64> = (0..n).map(|i| if i < k { lambda_value } else { 0.0 }).collect();

    let mut dv_patterns: Vec<DMatrix<f64>> = Vec::new();
    // uniform diagonal and sign flips
    for s in [1.0, -1.0] {
        dv_patterns.push(DMatrix::from_fn(n, m, |i, a| if i == a { s } else { 0.0 }));
    }
    // single entries and symmetric/antisymmetric two-entry patterns
    for i in 0..n {
        for a in 0..m {
            dv_patterns.push(DMatrix::from_fn(n, m, |r, c| if (r, c) == (i, a) { 1.0 } else { 0.0 }));
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            for s in [1.0, -1.0] {
                dv_patterns.push(DMatrix::from_fn(n, m, |r, c| {
                    if (r, c) == (i, j) {
                        1.0
                    } else if (r, c) == (j, i) {
                        s
                    } else {
                        0.0
                    }
                }));
            }
        }
    }

    let mut v_patterns: Vec<DVector<f64>> = Vec::new();
    for a in 0..m {
        v_patterns.push(DVector::from_fn(m, |r, _| if r == a { 1.0 } else { 0.0 }));
    }
    v_patterns.push(DVector::from_element(m, 1.0 / (m as f64).sqrt()));

    let mut h_patterns: Vec<Vec<DMatrix<f64>>> = vec![vec![DMatrix::zeros(n, n); m]];
    if n >= 2 {
        for alpha in 0..m {
            // diag(1, -1, 0, ...) in slot alpha
            let mut hs = vec![DMatrix::zeros(n, n); m];
            hs[alpha] = DMatrix::from_fn(n, n, |r, c| {
                if r != c {
                    0.0
                } else if r == 0 {
                    1.0
                } else if r == 1 {
                    -1.0
                } else {
                    0.0
                }
            });
            h_patterns.push(hs);
            // off-diagonal pair
            let mut hs = vec![DMatrix::zeros(n, n); m];
            hs[alpha] = DMatrix::from_fn(n, n, |r, c| {
                if (r, c) == (0, 1) || (r, c) == (1, 0) {
                    1.0
                } else {
                    0.0
                }
            });
            h_patterns.push(hs);
        }
    }

    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst: Option<XiSamplePayload> = None;
    for dv in &dv_patterns {
        for v in &v_patterns {
            for h in &h_patterns {
                let sample = AlgebraSample {
                    n,
                    m,
                    lambda: lambda.clone(),
                    v: v.clone(),
                    dv: dv.clone(),
                    h: h.clone(),
                    trace_free: true,
                };
                let xi_val = xi(&sample)?;
                let bound = rhs_bound(&sample, delta)?;
                let grad = sample.dv.iter().map(|x| x * x).sum::<f64>();
                let hsq = sample.coupled_h().iter().map(|x| x * x).sum::<f64>();
                let scale = grad + hsq + 1.0;
                let rel = (xi_val - bound) / scale;
                checked += 1;
                if xi_val < bound {
                    violations += 1;
                    if worst.as_ref().map_or(true, |w| rel < w.relative_margin) {
                        worst = Some(payload(&sample, xi_val, bound, rel));
                    }
                }
            }
        }
    }
    Ok(XiScanReport { lambda_value, delta, checked, violations, worst })
}
