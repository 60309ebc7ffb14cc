//! Closed-form stability constants for graph submanifolds and the
//! criterion decision over a sampled graph.
//!
//! The slope bound `(sqrt(1+c) - 1)/sqrt(c)` and the density threshold
//! `c / (2(c + 1 - sqrt(1+c)))` are reproduced exactly as published. Two
//! quantities are additionally reported in an independently derived form:
//!
//! * `omega_threshold_derived = sqrt(paper threshold)` is the density
//!   bound that actually forces `|df| <= slope` through
//!   `prod(1 + lambda_i^2) = (*Omega)^-2`; the published threshold does
//!   not, so both are exposed and labeled.
//! * `epsilon_max` is the true maximum of `eps(1-eps)/(1+c*eps)`, namely
//!   `eps_star^2` with `eps_star = (sqrt(1+c)-1)/c`. The published closed
//!   form for this maximum, kept as `epsilon_max_printed`, equals
//!   `c * eps_star^2` and agrees with the curve only at `c = 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{df_norm, second_fundamental_form, MetricField, SffField};
use crate::frame::frame_field;
use crate::grid::GraphSample;

/// `c = 1` when `m <= 2` or `n <= 2`, otherwise `min(m-1, n-1)`.
pub fn c_constant(n: usize, m: usize) -> Result<f64> {
    if n < 1 || m < 1 {
        return Err(Error::Config(format!("dimensions must be positive, got n={n}, m={m}")));
    }
    if m <= 2 || n <= 2 {
        Ok(1.0)
    } else {
        Ok((m - 1).min(n - 1) as f64)
    }
}

/// Critical slope `(sqrt(1+c) - 1) / sqrt(c)`.
pub fn critical_slope(c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::Config(format!("constant c must be >= 1, got {c}")));
    }
    Ok(((1.0 + c).sqrt() - 1.0) / c.sqrt())
}

/// The feasibility curve `eps (1 - eps) / (1 + c eps)` on `0 < eps < 1`.
pub fn epsilon_curve(eps: f64, c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::Config(format!("constant c must be >= 1, got {c}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    Ok(eps * (1.0 - eps) / (1.0 + c * eps))
}

/// Maximizer and maximum of the feasibility curve:
/// `eps_star = (sqrt(1+c) - 1)/c` and value `eps_star^2`.
pub fn epsilon_star(c: f64) -> Result<(f64, f64)> {
    if !(c >= 1.0) {
        return Err(Error::Config(format!("constant c must be >= 1, got {c}")));
    }
    let eps = ((1.0 + c).sqrt() - 1.0) / c;
    Ok((eps, eps * eps))
}

/// The published closed form for the curve maximum,
/// `(sqrt(c+1) - 1)^2 / c = slope^2`. Coincides with the curve value only
/// at `c = 1`; see the module docs.
pub fn epsilon_max_printed(c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::Config(format!("constant c must be >= 1, got {c}")));
    }
    let r = (1.0 + c).sqrt() - 1.0;
    Ok(r * r / c)
}

/// Density thresholds `(published, derived)` with
/// `derived = sqrt(published) = 1/sqrt(1 + slope^2)`.
pub fn omega_thresholds(c: f64) -> Result<(f64, f64)> {
    if !(c >= 1.0) {
        return Err(Error::Config(format!("constant c must be >= 1, got {c}")));
    }
    let paper = c / (2.0 * (c + 1.0 - (1.0 + c).sqrt()));
    Ok((paper, paper.sqrt()))
}

/// All closed-form constants for one `(n, m)`.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionConstants {
    pub n: usize,
    pub m: usize,
    pub c: f64,
    pub slope: f64,
    pub delta: f64,
    pub epsilon_star: f64,
    /// True maximum of the feasibility curve (`= epsilon_star^2`).
    pub epsilon_max: f64,
    /// Published closed form for that maximum (`= slope^2`).
    pub epsilon_max_printed: f64,
    pub omega_threshold_paper: f64,
    pub omega_threshold_derived: f64,
}

impl CriterionConstants {
    pub fn for_dimensions(n: usize, m: usize) -> Result<Self> {
        let c = c_constant(n, m)?;
        let slope = critical_slope(c)?;
        let (eps, eps_max) = epsilon_star(c)?;
        let (paper, derived) = omega_thresholds(c)?;
        Ok(CriterionConstants {
            n,
            m,
            c,
            slope,
            delta: eps,
            epsilon_star: eps,
            epsilon_max: eps_max,
            epsilon_max_printed: epsilon_max_printed(c)?,
            omega_threshold_paper: paper,
            omega_threshold_derived: derived,
        })
    }
}

/// Which form of the criterion decides the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionMode {
    Slope,
    OmegaPaper,
    OmegaDerived,
}

impl CriterionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "slope" => Ok(CriterionMode::Slope),
            "omega_paper" => Ok(CriterionMode::OmegaPaper),
            "omega_derived" => Ok(CriterionMode::OmegaDerived),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected slope|omega_paper|omega_derived"
            ))),
        }
    }
}

/// Outcome of checking a sampled graph against the criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub c: f64,
    pub slope: f64,
    pub omega_threshold_paper: f64,
    pub omega_threshold_derived: f64,
    pub max_df_norm: f64,
    pub min_star_omega: f64,
    /// Max over interior nodes of |sum_i h_{alpha i i}|; the criterion
    /// presumes minimality and reports this residual rather than refusing
    /// non-minimal input.
    pub mean_curvature_residual: f64,
    pub mode: CriterionMode,
    pub pass: bool,
    /// Signed distance to the selected bound; positive iff the mode passes
    /// (slope bound minus attained slope, or attained density minus its
    /// threshold).
    pub margin: f64,
    pub pass_slope: bool,
    pub pass_omega_paper: bool,
    pub pass_omega_derived: bool,
    pub margin_slope: f64,
    pub margin_omega_paper: f64,
    pub margin_omega_derived: f64,
}

/// Evaluates the criterion on the discrete essential sup/inf over
/// interior nodes: `max lambda_1` against the slope bound and
/// `min *Omega` against either density threshold.
pub fn check_graph(
    sample: &GraphSample,
    metric: &MetricField,
    constants: &CriterionConstants,
    mode: CriterionMode,
) -> Result<CriterionReport> {
    let max_df = df_norm(sample)?;
    let interior = sample.domain.interior_nodes();
    if interior.is_empty() {
        return Err(Error::State("no interior nodes".into()));
    }
    let min_omega = interior.iter().map(|&k| metric.star_omega[k]).fold(f64::INFINITY, f64::min);

    let frames = frame_field(sample)?;
    let sff: SffField = second_fundamental_form(sample, metric, &frames)?;
    let residual = sff.max_mean_curvature(sample);

    let margin_slope = constants.slope - max_df;
    let margin_paper = min_omega - constants.omega_threshold_paper;
    let margin_derived = min_omega - constants.omega_threshold_derived;
    let (pass, margin) = match mode {
        CriterionMode::Slope => (margin_slope >= 0.0, margin_slope),
        CriterionMode::OmegaPaper => (margin_paper >= 0.0, margin_paper),
        CriterionMode::OmegaDerived => (margin_derived >= 0.0, margin_derived),
    };

    Ok(CriterionReport {
        c: constants.c,
        slope: constants.slope,
        omega_threshold_paper: constants.omega_threshold_paper,
        omega_threshold_derived: constants.omega_threshold_derived,
        max_df_norm: max_df,
        min_star_omega: min_omega,
        mean_curvature_residual: residual,
        mode,
        pass,
        margin,
        pass_slope: margin_slope >= 0.0,
        pass_omega_paper: margin_paper >= 0.0,
        pass_omega_derived: margin_derived >= 0.0,
        margin_slope,
        margin_omega_paper: margin_paper,
        margin_omega_derived: margin_derived,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::induced_metric;
    use crate::grid::{build_grid, compute_jet, sample_function};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn c_constant_cases() {
        assert_eq!(c_constant(3, 2).unwrap(), 1.0);
        assert_eq!(c_constant(2, 7).unwrap(), 1.0);
        assert_eq!(c_constant(3, 3).unwrap(), 2.0);
        assert_eq!(c_constant(5, 4).unwrap(), 3.0);
        assert!(matches!(c_constant(0, 3), Err(Error::Config(_))));
    }

    #[test]
    fn slope_values() {
        assert!((critical_slope(1.0).unwrap() - (SQRT2 - 1.0)).abs() < 1e-12);
        assert!((critical_slope(2.0).unwrap() - 0.5176380902050415).abs() < 1e-12);
        assert!((critical_slope(3.0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(critical_slope(0.5), Err(Error::Config(_))));
    }

    #[test]
    fn epsilon_star_and_curve() {
        let (eps, max) = epsilon_star(1.0).unwrap();
        assert!((eps - (SQRT2 - 1.0)).abs() < 1e-12);
        assert!((max - (3.0 - 2.0 * SQRT2)).abs() < 1e-12);
        // at c = 1 the printed closed form agrees with the curve maximum
        assert!((epsilon_max_printed(1.0).unwrap() - max).abs() < 1e-12);
        // the curve value at eps_star equals the reported maximum for every c
        for c in [1.0, 2.0, 3.0, 4.5, 6.0] {
            let (e, v) = epsilon_star(c).unwrap();
            assert!((epsilon_curve(e, c).unwrap() - v).abs() < 1e-12);
            // printed form is c times the curve maximum
            assert!((epsilon_max_printed(c).unwrap() - c * v).abs() < 1e-12);
            // and equals slope^2
            let s = critical_slope(c).unwrap();
            assert!((epsilon_max_printed(c).unwrap() - s * s).abs() < 1e-12);
        }
        assert!(matches!(epsilon_curve(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(epsilon_curve(1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_search_confirms_epsilon_maximum() {
        for c in [1.0f64, 2.0, 3.0] {
            let (eps_cf, max_cf) = epsilon_star(c).unwrap();
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0.0;
            for k in 1..=999 {
                let e = k as f64 / 1000.0;
                let v = epsilon_curve(e, c).unwrap();
                if v > best {
                    best = v;
                    arg = e;
                }
            }
            assert!((best - max_cf).abs() < 1e-6, "c={c}: {best} vs {max_cf}");
            assert!((arg - eps_cf).abs() < 1e-3, "c={c}: argmax {arg} vs {eps_cf}");
        }
    }

    #[test]
    fn omega_threshold_values() {
        let (paper, derived) = omega_thresholds(1.0).unwrap();
        assert!((paper - (2.0 + SQRT2) / 4.0).abs() < 1e-12);
        assert!((derived - ((2.0 + SQRT2) / 4.0).sqrt()).abs() < 1e-12);
        let (paper2, _) = omega_thresholds(2.0).unwrap();
        assert!((paper2 - 1.0 / (3.0 - 3f64.sqrt())).abs() < 1e-12);
        for c in [1.0, 2.0, 5.0, 9.0] {
            let (p, d) = omega_thresholds(c).unwrap();
            assert!(p > 0.0 && p < 1.0 && d > 0.0 && d < 1.0);
            assert!((d * d - p).abs() < 1e-12);
            // derived threshold is exactly the density matching the slope bound
            let s = critical_slope(c).unwrap();
            assert!((d - 1.0 / (1.0 + s * s).sqrt()).abs() < 1e-12);
        }
    }

    // The published bound (sqrt(1+c)-1)/sqrt(c) grows with c, and both
    // density thresholds shrink toward 1/2; these directions are what the
    // formulas actually do for c in 1..=10.
    #[test]
    fn constant_trends_in_c() {
        for c in 1..10 {
            let (a, b) = (c as f64, (c + 1) as f64);
            assert!(critical_slope(b).unwrap() > critical_slope(a).unwrap());
            let (pa, da) = omega_thresholds(a).unwrap();
            let (pb, db) = omega_thresholds(b).unwrap();
            assert!(pb < pa && db < da);
            assert!(pb > 0.5 && db > 0.5);
        }
    }

    #[test]
    fn constants_bundle_is_consistent() {
        let k = CriterionConstants::for_dimensions(3, 3).unwrap();
        assert_eq!(k.c, 2.0);
        assert!((k.delta - k.epsilon_star).abs() < 1e-15);
        assert!(k.slope > 0.0 && k.slope < 1.0);
        assert!(k.delta > 0.0 && k.delta < 1.0);
        assert!((k.epsilon_max - k.epsilon_star * k.epsilon_star).abs() < 1e-15);
    }

    fn linear_sample(a: &[[f64; 3]; 3]) -> (GraphSample, MetricField) {
        let g = build_grid(3, &[(0.0, 1.0); 3], &[6, 6, 6]).unwrap();
        let mut s = sample_function(&g, 3, |x| {
            (0..3).map(|r| (0..3).map(|c| a[r][c] * x[c]).sum()).collect()
        })
        .unwrap();
        compute_jet(&mut s).unwrap();
        let metric = induced_metric(&s).unwrap();
        (s, metric)
    }

    #[test]
    fn zero_graph_passes_all_modes_with_full_margin() {
        let (s, metric) = linear_sample(&[[0.0; 3]; 3]);
        let k = CriterionConstants::for_dimensions(3, 3).unwrap();
        for mode in [CriterionMode::Slope, CriterionMode::OmegaPaper, CriterionMode::OmegaDerived] {
            let rep = check_graph(&s, &metric, &k, mode).unwrap();
            assert!(rep.pass && rep.pass_slope && rep.pass_omega_paper && rep.pass_omega_derived);
        }
        let rep = check_graph(&s, &metric, &k, CriterionMode::Slope).unwrap();
        assert!((rep.margin_slope - k.slope).abs() < 1e-12);
        assert!((rep.margin_omega_paper - (1.0 - k.omega_threshold_paper)).abs() < 1e-12);
    }

    #[test]
    fn slope_mode_decides_against_the_top_singular_value() {
        // ||A||_2 = 0.3 < slope(2) = 0.5176: pass
        let (s, metric) = linear_sample(&[[0.3, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.05]]);
        let k = CriterionConstants::for_dimensions(3, 3).unwrap();
        let rep = check_graph(&s, &metric, &k, CriterionMode::Slope).unwrap();
        assert!(rep.pass, "margin {}", rep.margin);

        // ||A||_2 = 0.6 > slope(2): fail
        let (s, metric) = linear_sample(&[[0.6, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.05]]);
        let rep = check_graph(&s, &metric, &k, CriterionMode::Slope).unwrap();
        assert!(!rep.pass);
        assert!(rep.mean_curvature_residual < 1e-10, "linear graphs are minimal");
    }

    #[test]
    fn derived_density_bound_forces_the_slope_bound() {
        // pointwise implication via prod(1 + lambda^2) = (*Omega)^-2
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let k = CriterionConstants::for_dimensions(3, 3).unwrap();
        for _ in 0..200 {
            let lambdas: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.5)).collect();
            let star: f64 = lambdas.iter().map(|l| 1.0 / (1.0 + l * l).sqrt()).product();
            if star >= k.omega_threshold_derived {
                let max = lambdas.iter().cloned().fold(0.0, f64::max);
                assert!(max <= k.slope + 1e-12);
            }
        }
    }
}
