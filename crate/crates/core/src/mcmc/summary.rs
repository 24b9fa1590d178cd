use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::io::sig6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// Equal-tailed 2.5% / 97.5% empirical quantiles.
    Quantile95,
    /// Shortest window holding ⌈0.95 K⌉ sorted draws.
    Hpd95,
}

impl std::str::FromStr for IntervalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile95" | "quantile" => Ok(IntervalKind::Quantile95),
            "hpd95" | "hpd" => Ok(IntervalKind::Hpd95),
            other => Err(Error::invalid(format!("unknown interval kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ParamSummary {
    pub fn covers(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub interval_kind: IntervalKind,
    pub params: Vec<ParamSummary>,
}

impl Summary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>12} {:>12} {:>12} {:>12}\n",
            "parameter", "mean", "sd", "lower", "upper"
        );
        for p in &self.params {
            out.push_str(&format!(
                "{:<20} {:>12} {:>12} {:>12} {:>12}\n",
                p.name,
                sig6(p.mean),
                sig6(p.sd),
                sig6(p.ci_low),
                sig6(p.ci_high)
            ));
        }
        out
    }
}

/// Linear interpolation between order statistics (`h = (K−1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Shortest contiguous window of `⌈mass·K⌉` sorted draws; ties go to the
/// leftmost window.
pub fn hpd_interval(sorted: &[f64], mass: f64) -> (f64, f64) {
    let n = sorted.len();
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=(n - m) {
        let w = sorted[i + m - 1] - sorted[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    (sorted[best], sorted[best + m - 1])
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize_column(name: &str, values: &[f64], kind: IntervalKind) -> Result<ParamSummary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty column"));
    }
    let (mean, sd) = mean_sd(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = match kind {
        IntervalKind::Quantile95 => (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)),
        IntervalKind::Hpd95 => hpd_interval(&sorted, 0.95),
    };
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        ci_low,
        ci_high,
    })
}

pub fn summarize(draws: &PosteriorDraws, kind: IntervalKind) -> Result<Summary> {
    if draws.len() < 2 {
        return Err(Error::invalid("summaries need at least two draws"));
    }
    let params = draws
        .labels
        .iter()
        .enumerate()
        .map(|(j, name)| summarize_column(name, &draws.column(j), kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary {
        interval_kind: kind,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_column() {
        let s = summarize_column("c", &[2.5; 10], IntervalKind::Hpd95).unwrap();
        assert_eq!((s.mean, s.sd, s.ci_low, s.ci_high), (2.5, 0.0, 2.5, 2.5));
        let s = summarize_column("c", &[2.5; 10], IntervalKind::Quantile95).unwrap();
        assert_eq!((s.ci_low, s.ci_high), (2.5, 2.5));
    }

    #[test]
    fn percentile_convention() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize_column("x", &x, IntervalKind::Quantile95).unwrap();
        assert_relative_eq!(s.ci_low, 3.475, epsilon = 1e-12);
        assert_relative_eq!(s.ci_high, 97.525, epsilon = 1e-12);
    }

    #[test]
    fn hpd_of_standard_normal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = summarize_column("z", &x, IntervalKind::Hpd95).unwrap();
        assert!((s.ci_low + 1.96).abs() < 0.05 && (s.ci_high - 1.96).abs() < 0.05, "{s:?}");
    }

    #[test]
    fn hpd_prefers_dense_region() {
        let mut x = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        x.push(50.0);
        x.sort_by(f64::total_cmp);
        let (lo, hi) = hpd_interval(&x, 0.9);
        assert_eq!((lo, hi), (0.0, 0.9));
    }

    #[test]
    fn quantile_interval_commutes_with_monotone_maps() {
        // equal order statistics, so exp of the interval endpoints of log x
        // coincides with the interval of x when the grid points are hit
        let x: Vec<f64> = (0..41).map(|i| 0.5 + i as f64 * 0.05).collect();
        let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let a = summarize_column("x", &x, IntervalKind::Quantile95).unwrap();
        let b = summarize_column("lx", &logs, IntervalKind::Quantile95).unwrap();
        assert_relative_eq!(b.ci_low.exp(), a.ci_low, max_relative = 1e-12);
        assert_relative_eq!(b.ci_high.exp(), a.ci_high, max_relative = 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(summarize_column("e", &[], IntervalKind::Hpd95).is_err());
    }
}
