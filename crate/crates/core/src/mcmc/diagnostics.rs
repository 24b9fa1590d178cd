use serde::{Deserialize, Serialize};

use super::summary::mean_sd;
use super::PosteriorDraws;
use crate::error::{Error, Result};

pub const MIN_DRAWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub ess: f64,
    pub split_rhat: f64,
}

/// Effective sample size via Geyer's initial monotone sequence estimator.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>() / nf;
    if gamma0 <= 0.0 {
        return nf;
    }
    let rho = |t: usize| -> f64 {
        let s: f64 = c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum();
        s / nf / gamma0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    nf / tau.max(1.0 / nf)
}

/// Potential scale reduction over the two halves of one chain.
pub fn split_rhat(x: &[f64]) -> f64 {
    let half = x.len() / 2;
    let (a, b) = (&x[..half], &x[x.len() - half..]);
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let n = half as f64;
    let w = 0.5 * (sa * sa + sb * sb);
    if w <= 0.0 {
        return if ma == mb { 1.0 } else { f64::INFINITY };
    }
    let grand = 0.5 * (ma + mb);
    let between = n * ((ma - grand).powi(2) + (mb - grand).powi(2));
    let var_plus = (n - 1.0) / n * w + between / n;
    (var_plus / w).sqrt()
}

pub fn effective_diagnostics(draws: &PosteriorDraws) -> Result<Vec<Diagnostic>> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::invalid(format!(
            "diagnostics need at least {MIN_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    Ok(draws
        .labels
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = draws.column(j);
            Diagnostic {
                name: name.clone(),
                ess: ess(&col),
                split_rhat: split_rhat(&col),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn white_noise_ess_near_k() {
        let x = normals(5000, 1);
        let e = ess(&x);
        assert!((e / 5000.0 - 1.0).abs() < 0.15, "{e}");
    }

    #[test]
    fn ar1_ess() {
        let rho = 0.9;
        let eps = normals(10_000, 2);
        let mut x = Vec::with_capacity(eps.len());
        let mut prev = 0.0;
        for e in eps {
            prev = rho * prev + (1.0 - rho * rho as f64).sqrt() * e;
            x.push(prev);
        }
        let ratio = ess(&x) / x.len() as f64;
        let theory = (1.0 - rho) / (1.0 + rho);
        assert!((ratio / theory - 1.0).abs() < 0.5, "{ratio} vs {theory}");
    }

    #[test]
    fn identical_halves() {
        let h = normals(500, 3);
        let mut x = h.clone();
        x.extend_from_slice(&h);
        assert!((split_rhat(&x) - 1.0).abs() < 0.02);
    }

    #[test]
    fn shifted_halves_flagged() {
        let mut x = normals(400, 4);
        for v in &mut x[200..] {
            *v += 3.0;
        }
        assert!(split_rhat(&x) > 1.1);
    }
}
