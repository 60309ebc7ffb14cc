//! The builtin function library: closures `x -> f(x)` built from a
//! validated configuration. The random smooth field is a seeded
//! low-frequency sine sum with `1/|k|^2` decay plus an optional linear
//! tilt, so repeated runs with one seed sample the same map.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Builtin, DomainSpec};

pub fn evaluator(
    builtin: &Builtin,
    domain: &DomainSpec,
    m: usize,
    seed: u64,
) -> Box<dyn Fn(&[f64]) -> Vec<f64>> {
    let n = domain.n;
    match builtin {
        Builtin::Zero => Box::new(move |_| vec![0.0; m]),
        Builtin::Linear { matrix } => {
            let a = matrix.clone();
            Box::new(move |x| {
                (0..m)
                    .map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum())
                    .collect()
            })
        }
        Builtin::Quadratic { q, linear, constant } => {
            let q = q.clone();
            let linear = linear.clone();
            let constant = constant.clone();
            Box::new(move |x| {
                (0..m)
                    .map(|a| {
                        let mut acc = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                acc += 0.5 * q[a * n * n + i * n + j] * x[i] * x[j];
                            }
                        }
                        if let Some(l) = &linear {
                            for c in 0..n {
                                acc += l[a * n + c] * x[c];
                            }
                        }
                        if let Some(b) = &constant {
                            acc += b[a];
                        }
                        acc
                    })
                    .collect()
            })
        }
        Builtin::Sinusoidal { amplitude, frequency } => {
            let amplitude = amplitude.clone();
            let frequency = frequency.clone();
            let bounds = domain.bounds.clone();
            Box::new(move |x| {
                let shape: f64 = (0..n)
                    .map(|i| {
                        let (a, b) = bounds[i];
                        (frequency[i] * std::f64::consts::PI * (x[i] - a) / (b - a)).sin()
                    })
                    .product();
                amplitude.iter().map(|&amp| amp * shape).collect()
            })
        }
        Builtin::RandomSmooth { amplitude, modes, tilt } => {
            let modes = *modes;
            let amplitude = *amplitude;
            let tilt = tilt.clone();
            let bounds = domain.bounds.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode_count = modes.pow(n as u32);
            let coeffs: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..mode_count).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            Box::new(move |x| {
                (0..m)
                    .map(|a| {
                        let mut acc = 0.0;
                        for (mi, &c) in coeffs[a].iter().enumerate() {
                            let mut rem = mi;
                            let mut prod = 1.0;
                            let mut weight = 0.0;
                            for i in 0..n {
                                let k = (rem % modes) + 1;
                                rem /= modes;
                                let (lo, hi) = bounds[i];
                                prod *= (k as f64 * std::f64::consts::PI * (x[i] - lo) / (hi - lo)).sin();
                                weight += (k * k) as f64;
                            }
                            acc += c * prod / weight;
                        }
                        if let Some(t) = &tilt {
                            for c in 0..n {
                                acc += t[a * n + c] * x[c];
                            }
                        }
                        amplitude * acc
                    })
                    .collect()
            })
        }
    }
}
