//! Intensity-dependent logistic mark model:
//! `logit θ(s) = ξ·link(λ(s)) + Z(s)ᵀα`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Point};
use crate::rng::{seeded, SimRng};

/// Probability floor used only in MSE/CPO denominators.
pub const PROB_FLOOR: f64 = 1e-12;

/// How `λ(s)` enters the mark predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityLink {
    Raw,
    /// `λ(s) / max_cells λ`, in `(0, 1]`.
    #[default]
    MaxNormalized,
    /// `(λ(s) − mean_cells λ) / sd_cells λ`.
    ZScored,
}

impl IntensityLink {
    /// Fix the normalizing constants from an intensity field.
    pub fn calibrate(self, field: &Field) -> Result<LinkTransform> {
        LinkTransform::from_values(self, field.values())
    }
}

impl std::str::FromStr for IntensityLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(IntensityLink::Raw),
            "max_normalized" | "max" => Ok(IntensityLink::MaxNormalized),
            "z_scored" | "z" => Ok(IntensityLink::ZScored),
            other => Err(Error::invalid(format!("unknown intensity link {other:?}"))),
        }
    }
}

/// A link mode together with the cell statistics it normalizes by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTransform {
    pub mode: IntensityLink,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

impl LinkTransform {
    pub fn raw() -> Self {
        LinkTransform {
            mode: IntensityLink::Raw,
            max: 1.0,
            mean: 0.0,
            sd: 1.0,
        }
    }

    pub fn from_values(mode: IntensityLink, cells: &[f64]) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("link calibration needs at least one cell"));
        }
        let n = cells.len() as f64;
        let max = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = cells.iter().sum::<f64>() / n;
        let var = cells.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let t = LinkTransform {
            mode,
            max,
            mean,
            sd: var.sqrt(),
        };
        match mode {
            IntensityLink::MaxNormalized if !(max > 0.0) => {
                Err(Error::invalid("max-normalized link needs a positive intensity maximum"))
            }
            _ => Ok(t),
        }
    }

    #[inline]
    pub fn apply(&self, lambda: f64) -> f64 {
        match self.mode {
            IntensityLink::Raw => lambda,
            IntensityLink::MaxNormalized => lambda / self.max,
            // a flat field has no spread; every cell sits at its mean
            IntensityLink::ZScored if self.sd == 0.0 => 0.0,
            IntensityLink::ZScored => (lambda - self.mean) / self.sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkParams {
    pub xi: f64,
    pub alpha: Vec<f64>,
}

impl MarkParams {
    pub fn new(xi: f64, alpha: Vec<f64>) -> Self {
        MarkParams { xi, alpha }
    }
}

/// Per-shot metadata from the shot-chart schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotMeta {
    pub shot_type: u8,
    pub distance: Option<f64>,
    pub period: u8,
    pub seconds_left: f64,
    pub opp_playoff: bool,
}

/// Mark covariates `Z`, stored as an `N × q` row-major base matrix.
///
/// Columns flagged `intensity_scaled` are multiplied by the linked intensity
/// of their point at evaluation time, which is how intensity interactions
/// track the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkCovariates {
    n: usize,
    base: Vec<f64>,
    labels: Vec<String>,
    intensity_scaled: Vec<bool>,
}

impl MarkCovariates {
    pub fn new(n: usize, base: Vec<f64>, labels: Vec<String>, intensity_scaled: Vec<bool>) -> Result<Self> {
        let q = labels.len();
        if intensity_scaled.len() != q {
            return Err(Error::dims("intensity_scaled flags", q, intensity_scaled.len()));
        }
        if base.len() != n * q {
            return Err(Error::dims("mark covariate matrix", n * q, base.len()));
        }
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mark covariate".into()));
        }
        Ok(MarkCovariates {
            n,
            base,
            labels,
            intensity_scaled,
        })
    }

    /// Plain columns given as rows of length `q`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let q = labels.len();
        let mut base = Vec::with_capacity(rows.len() * q);
        for r in rows {
            if r.len() != q {
                return Err(Error::dims("mark covariate row", q, r.len()));
            }
            base.extend_from_slice(r);
        }
        MarkCovariates::new(rows.len(), base, labels, vec![false; q])
    }

    pub fn empty(n: usize) -> Self {
        MarkCovariates {
            n,
            base: Vec::new(),
            labels: Vec::new(),
            intensity_scaled: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn intensity_scaled(&self) -> &[bool] {
        &self.intensity_scaled
    }

    pub fn base_row(&self, i: usize) -> &[f64] {
        let q = self.q();
        &self.base[i * q..(i + 1) * q]
    }

    /// Realized covariate row for point `i` with linked intensity `link_value`.
    pub fn row(&self, i: usize, link_value: f64) -> Vec<f64> {
        self.base_row(i)
            .iter()
            .zip(&self.intensity_scaled)
            .map(|(v, s)| if *s { v * link_value } else { *v })
            .collect()
    }

    /// Realized `N × q` matrix.
    pub fn realize(&self, link_values: &[f64]) -> Result<Vec<Vec<f64>>> {
        if link_values.len() != self.n {
            return Err(Error::dims("link values", self.n, link_values.len()));
        }
        Ok((0..self.n).map(|i| self.row(i, link_values[i])).collect())
    }

    /// Split the predictor as `logit = link·(ξ + slope) + offset`.
    #[inline]
    pub(crate) fn predictor_parts(&self, i: usize, alpha: &[f64]) -> (f64, f64) {
        let mut slope = 0.0;
        let mut offset = 0.0;
        for ((v, s), a) in self.base_row(i).iter().zip(&self.intensity_scaled).zip(alpha) {
            if *s {
                slope += v * a;
            } else {
                offset += v * a;
            }
        }
        (slope, offset)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let q = self.q();
        if let Some(j) = indices.iter().find(|j| **j >= q) {
            return Err(Error::invalid(format!("mark column {j} out of range")));
        }
        let mut base = Vec::with_capacity(self.n * indices.len());
        for i in 0..self.n {
            let row = self.base_row(i);
            base.extend(indices.iter().map(|&j| row[j]));
        }
        MarkCovariates::new(
            self.n,
            base,
            indices.iter().map(|&j| self.labels[j].clone()).collect(),
            indices.iter().map(|&j| self.intensity_scaled[j]).collect(),
        )
    }

    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let mut base = Vec::with_capacity(self.base.len());
        for &i in order {
            base.extend_from_slice(self.base_row(i));
        }
        MarkCovariates::new(order.len(), base, self.labels.clone(), self.intensity_scaled.clone())
    }
}

/// Observed locations with binary marks and their covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPattern {
    pub locations: Vec<Point>,
    pub marks: Vec<u8>,
    pub covariates: MarkCovariates,
    pub meta: Option<Vec<ShotMeta>>,
}

impl MarkedPattern {
    pub fn new(locations: Vec<Point>, marks: Vec<u8>, covariates: MarkCovariates) -> Result<Self> {
        let n = locations.len();
        if marks.len() != n {
            return Err(Error::dims("marks", n, marks.len()));
        }
        if covariates.n() != n {
            return Err(Error::dims("mark covariate rows", n, covariates.n()));
        }
        if let Some(i) = marks.iter().position(|m| *m > 1) {
            return Err(Error::invalid(format!("mark {i} is {} (must be 0 or 1)", marks[i])));
        }
        Ok(MarkedPattern {
            locations,
            marks,
            covariates,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: Vec<ShotMeta>) -> Result<Self> {
        if meta.len() != self.len() {
            return Err(Error::dims("shot metadata", self.len(), meta.len()));
        }
        self.meta = Some(meta);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn mark_rate(&self) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        self.marks.iter().map(|&m| m as f64).sum::<f64>() / self.len() as f64
    }

    /// Reorder points; used to check order invariance.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::dims("permutation", self.len(), order.len()));
        }
        let mut out = MarkedPattern::new(
            order.iter().map(|&i| self.locations[i]).collect(),
            order.iter().map(|&i| self.marks[i]).collect(),
            self.covariates.permute_rows(order)?,
        )?;
        if let Some(meta) = &self.meta {
            out.meta = Some(order.iter().map(|&i| meta[i].clone()).collect());
        }
        Ok(out)
    }

    pub fn with_covariates(mut self, covariates: MarkCovariates) -> Result<Self> {
        if covariates.n() != self.len() {
            return Err(Error::dims("mark covariate rows", self.len(), covariates.n()));
        }
        self.covariates = covariates;
        Ok(self)
    }
}

#[inline]
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `log σ(t)` without overflow.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-pmf of mark `m` under logit `t`.
#[inline]
pub fn log_bernoulli(m: u8, t: f64) -> f64 {
    if m == 1 {
        log_sigmoid(t)
    } else {
        log_sigmoid(-t)
    }
}

pub fn theta_at(lambda: f64, z_row: &[f64], params: &MarkParams, link: &LinkTransform) -> Result<f64> {
    if z_row.len() != params.alpha.len() {
        return Err(Error::dims("mark covariate row", params.alpha.len(), z_row.len()));
    }
    let t = params.xi * link.apply(lambda) + dot(z_row, &params.alpha);
    if t.is_nan() {
        return Err(Error::NonFinite("mark predictor".into()));
    }
    Ok(logistic(t))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(pattern: &MarkedPattern, lambdas: &[f64], params: &MarkParams) -> Result<()> {
    if lambdas.len() != pattern.len() {
        return Err(Error::dims("per-point intensities", pattern.len(), lambdas.len()));
    }
    if params.alpha.len() != pattern.covariates.q() {
        return Err(Error::dims("alpha", pattern.covariates.q(), params.alpha.len()));
    }
    Ok(())
}

/// Per-point mark logits.
pub fn mark_logits(
    pattern: &MarkedPattern,
    lambdas: &[f64],
    params: &MarkParams,
    link: &LinkTransform,
) -> Result<Vec<f64>> {
    check_lengths(pattern, lambdas, params)?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let lv = link.apply(l);
            let (slope, offset) = pattern.covariates.predictor_parts(i, &params.alpha);
            lv * (params.xi + slope) + offset
        })
        .collect())
}

pub fn log_lik_mark(
    pattern: &MarkedPattern,
    lambdas: &[f64],
    params: &MarkParams,
    link: &LinkTransform,
) -> Result<f64> {
    let logits = mark_logits(pattern, lambdas, params, link)?;
    Ok(logits
        .iter()
        .zip(&pattern.marks)
        .map(|(t, m)| log_bernoulli(*m, *t))
        .sum())
}

/// Draw marks from the model. `z` holds realized rows.
pub fn simulate_marks(
    lambdas: &[f64],
    z: &[Vec<f64>],
    params: &MarkParams,
    link: &LinkTransform,
    seed: u64,
) -> Result<Vec<u8>> {
    simulate_marks_with(lambdas, z, params, link, &mut seeded(seed))
}

pub fn simulate_marks_with(
    lambdas: &[f64],
    z: &[Vec<f64>],
    params: &MarkParams,
    link: &LinkTransform,
    rng: &mut SimRng,
) -> Result<Vec<u8>> {
    if z.len() != lambdas.len() {
        return Err(Error::dims("mark covariate rows", lambdas.len(), z.len()));
    }
    lambdas
        .iter()
        .zip(z)
        .map(|(&l, row)| {
            let theta = theta_at(l, row, params, link)?;
            Ok(u8::from(rng.random::<f64>() < theta))
        })
        .collect()
}

/// Which mark columns to assemble from shot metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkColumns {
    pub intercept: bool,
    pub intensity_x_three: bool,
    pub distance: bool,
    pub seconds_left: bool,
    pub periods: bool,
    pub opp_playoff: bool,
}

impl Default for MarkColumns {
    fn default() -> Self {
        MarkColumns {
            intercept: true,
            intensity_x_three: true,
            distance: true,
            seconds_left: true,
            periods: true,
            opp_playoff: true,
        }
    }
}

impl MarkColumns {
    pub fn intercept_only() -> Self {
        MarkColumns {
            intercept: true,
            intensity_x_three: false,
            distance: false,
            seconds_left: false,
            periods: false,
            opp_playoff: false,
        }
    }
}

pub const INTERACTION_LABEL: &str = "intensity_x_3pt";

/// Assemble the mark design from shot metadata. Column order: intercept,
/// intensity × 1{3pt}, distance, seconds_left, period 2–5 dummies (period 1
/// is the reference), opp_playoff.
pub fn mark_design_from_meta(meta: &[ShotMeta], columns: &MarkColumns) -> Result<MarkCovariates> {
    let mut labels = Vec::new();
    let mut scaled = Vec::new();
    let mut push = |label: &str, s: bool| {
        labels.push(label.to_string());
        scaled.push(s);
    };
    if columns.intercept {
        push("intercept", false);
    }
    if columns.intensity_x_three {
        push(INTERACTION_LABEL, true);
    }
    if columns.distance {
        push("distance", false);
    }
    if columns.seconds_left {
        push("seconds_left", false);
    }
    if columns.periods {
        for p in 2..=5 {
            push(&format!("period{p}"), false);
        }
    }
    if columns.opp_playoff {
        push("opp_playoff", false);
    }

    let mut base = Vec::with_capacity(meta.len() * labels.len());
    for (i, m) in meta.iter().enumerate() {
        if columns.intercept {
            base.push(1.0);
        }
        if columns.intensity_x_three {
            base.push(if m.shot_type == 3 { 1.0 } else { 0.0 });
        }
        if columns.distance {
            let d = m
                .distance
                .ok_or_else(|| Error::invalid(format!("shot {i}: distance missing")))?;
            base.push(d);
        }
        if columns.seconds_left {
            base.push(m.seconds_left);
        }
        if columns.periods {
            if !(1..=5).contains(&m.period) {
                return Err(Error::invalid(format!("shot {i}: period {} outside 1..5", m.period)));
            }
            for p in 2..=5u8 {
                base.push(if m.period == p { 1.0 } else { 0.0 });
            }
        }
        if columns.opp_playoff {
            base.push(if m.opp_playoff { 1.0 } else { 0.0 });
        }
    }
    MarkCovariates::new(meta.len(), base, labels, scaled)
}

/// Realized mark covariates for given per-point intensities.
pub fn build_mark_covariates(
    pattern: &MarkedPattern,
    lambdas: &[f64],
    link: &LinkTransform,
    columns: &MarkColumns,
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let meta = pattern
        .meta
        .as_ref()
        .ok_or_else(|| Error::invalid("pattern carries no shot metadata"))?;
    let design = mark_design_from_meta(meta, columns)?;
    let links: Vec<f64> = lambdas.iter().map(|&l| link.apply(l)).collect();
    Ok((design.realize(&links)?, design.labels().to_vec()))
}

pub fn mark_mse(marks: &[u8], thetas: &[f64]) -> Result<f64> {
    if marks.len() != thetas.len() {
        return Err(Error::dims("fitted probabilities", marks.len(), thetas.len()));
    }
    if marks.is_empty() {
        return Err(Error::invalid("MSE of an empty pattern"));
    }
    let sse: f64 = marks
        .iter()
        .zip(thetas)
        .map(|(&m, &t)| (m as f64 - t).powi(2))
        .sum();
    Ok(sse / marks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn intercept_pattern(marks: Vec<u8>) -> MarkedPattern {
        let n = marks.len();
        let locs = vec![Point::new(0.0, 0.0); n];
        let z = MarkCovariates::from_rows(&vec![vec![1.0]; n], vec!["intercept".into()]).unwrap();
        MarkedPattern::new(locs, marks, z).unwrap()
    }

    #[test]
    fn theta_examples() {
        let raw = LinkTransform::raw();
        let p0 = MarkParams::new(0.0, vec![0.0]);
        assert_eq!(theta_at(5.0, &[1.0], &p0, &raw).unwrap(), 0.5);
        let p = MarkParams::new(0.5, vec![0.5]);
        assert_relative_eq!(theta_at(1.0, &[1.0], &p, &raw).unwrap(), 0.731_058_578_6, epsilon = 1e-9);
        let lo = theta_at(0.2, &[1.0], &p, &raw).unwrap();
        let hi = theta_at(0.9, &[1.0], &p, &raw).unwrap();
        assert!(hi > lo);
        assert!(theta_at(1.0, &[1.0, 2.0], &p, &raw).is_err());
        assert!(theta_at(f64::NAN, &[1.0], &p, &raw).is_err());
    }

    #[test]
    fn log_lik_examples() {
        let raw = LinkTransform::raw();
        let pat = intercept_pattern(vec![1, 0, 1, 1, 0]);
        let ll = log_lik_mark(&pat, &[1.0; 5], &MarkParams::new(0.0, vec![0.0]), &raw).unwrap();
        assert_relative_eq!(ll, -5.0 * 2f64.ln(), epsilon = 1e-12);

        let empty = intercept_pattern(vec![]);
        assert_eq!(log_lik_mark(&empty, &[], &MarkParams::new(0.3, vec![1.0]), &raw).unwrap(), 0.0);

        let one = intercept_pattern(vec![1]);
        let ll = log_lik_mark(&one, &[1.0], &MarkParams::new(0.0, vec![2.0]), &raw).unwrap();
        assert_relative_eq!(ll, -0.126_928_011, epsilon = 1e-8);

        assert!(log_lik_mark(&one, &[1.0, 2.0], &MarkParams::new(0.0, vec![2.0]), &raw).is_err());
    }

    #[test]
    fn stable_at_extreme_logits() {
        assert!((log_sigmoid(-700.0) + 700.0).abs() < 1e-9);
        assert!(log_sigmoid(700.0).abs() < 1e-300);
        assert!(log_bernoulli(0, 700.0).is_finite());
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
    }

    proptest! {
        #[test]
        fn matches_naive_bernoulli(
            logits in proptest::collection::vec(-15.0f64..15.0, 1..40),
            seed in 0u64..1000,
        ) {
            let marks: Vec<u8> = (0..logits.len()).map(|i| ((seed >> (i % 60)) & 1) as u8).collect();
            let pat = intercept_pattern(marks.clone());
            let n = logits.len();
            let ll = log_lik_mark(&pat, &logits, &MarkParams::new(1.0, vec![0.0]), &LinkTransform::raw()).unwrap();
            let naive: f64 = logits.iter().zip(&marks).map(|(t, m)| {
                let th = 1.0 / (1.0 + (-t).exp());
                if *m == 1 { th.ln() } else { (1.0 - th).ln() }
            }).sum();
            prop_assert!((ll - naive).abs() <= 1e-10 * (1.0 + naive.abs()), "{} vs {} (n={})", ll, naive, n);
        }
    }

    #[test]
    fn link_modes() {
        let cells = [1.0, 2.0, 4.0, 5.0];
        let m = LinkTransform::from_values(IntensityLink::MaxNormalized, &cells).unwrap();
        assert_eq!(m.apply(5.0), 1.0);
        assert_eq!(m.apply(2.5), 0.5);
        let z = LinkTransform::from_values(IntensityLink::ZScored, &cells).unwrap();
        let zs: Vec<f64> = cells.iter().map(|&c| z.apply(c)).collect();
        assert!(zs.iter().sum::<f64>().abs() < 1e-12);
        assert_relative_eq!(zs.iter().map(|v| v * v).sum::<f64>() / 4.0, 1.0, epsilon = 1e-12);
        let flat = LinkTransform::from_values(IntensityLink::ZScored, &[3.0, 3.0]).unwrap();
        assert_eq!(flat.apply(3.0), 0.0);
        assert_eq!("raw".parse::<IntensityLink>().unwrap(), IntensityLink::Raw);
    }

    #[test]
    fn simulate_extremes_and_rate() {
        let raw = LinkTransform::raw();
        let n = 10_000;
        let z = vec![vec![1.0]; n];
        let ones = simulate_marks(&vec![1.0; n], &z, &MarkParams::new(0.0, vec![f64::INFINITY]), &raw, 3).unwrap();
        assert!(ones.iter().all(|&m| m == 1));

        let fair = simulate_marks(&vec![1.0; n], &z, &MarkParams::new(0.0, vec![0.0]), &raw, 4).unwrap();
        let rate = fair.iter().map(|&m| m as f64).sum::<f64>() / n as f64;
        assert!((rate - 0.5).abs() < 0.015, "{rate}");

        // a non-constant probability: empirical rate within 4 SE of mean θ
        let lambdas: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let p = MarkParams::new(1.5, vec![-0.4]);
        let marks = simulate_marks(&lambdas, &z, &p, &raw, 8).unwrap();
        let thetas: Vec<f64> = lambdas.iter().map(|&l| theta_at(l, &[1.0], &p, &raw).unwrap()).collect();
        let mean_theta = thetas.iter().sum::<f64>() / n as f64;
        let se = (thetas.iter().map(|t| t * (1.0 - t)).sum::<f64>()).sqrt() / n as f64;
        let rate = marks.iter().map(|&m| m as f64).sum::<f64>() / n as f64;
        assert!((rate - mean_theta).abs() < 4.0 * se);

        assert_eq!(
            simulate_marks(&lambdas, &z, &p, &raw, 8).unwrap(),
            marks,
            "deterministic given seed"
        );
    }

    fn shot(shot_type: u8, period: u8) -> ShotMeta {
        ShotMeta {
            shot_type,
            distance: Some(12.0),
            period,
            seconds_left: 300.0,
            opp_playoff: true,
        }
    }

    #[test]
    fn design_columns() {
        let meta = vec![shot(2, 1), shot(3, 3)];
        let d = mark_design_from_meta(&meta, &MarkColumns::intercept_only()).unwrap();
        assert_eq!(d.labels(), ["intercept"]);
        assert_eq!(d.base_row(0), [1.0]);

        let d = mark_design_from_meta(&meta, &MarkColumns::default()).unwrap();
        assert_eq!(
            d.labels(),
            ["intercept", INTERACTION_LABEL, "distance", "seconds_left", "period2", "period3", "period4", "period5", "opp_playoff"]
        );
        assert_eq!(d.row(0, 0.7)[1], 0.0);
        assert_eq!(d.row(1, 0.7)[1], 0.7);
        assert_eq!(&d.base_row(1)[4..8], &[0.0, 1.0, 0.0, 0.0]);

        let mut missing = meta.clone();
        missing[1].distance = None;
        assert!(mark_design_from_meta(&missing, &MarkColumns::default()).is_err());
    }

    #[test]
    fn build_requires_meta() {
        let pat = intercept_pattern(vec![1, 0]);
        assert!(build_mark_covariates(&pat, &[1.0, 1.0], &LinkTransform::raw(), &MarkColumns::default()).is_err());
        let pat = pat.with_meta(vec![shot(3, 1), shot(2, 5)]).unwrap();
        let (z, labels) = build_mark_covariates(&pat, &[2.0, 3.0], &LinkTransform::raw(), &MarkColumns::default()).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(labels.len(), 9);
        assert_eq!(z[0][1], 2.0);
        assert_eq!(z[1][7], 1.0);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mark_mse(&[1, 0, 1], &[1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(mark_mse(&[1, 0, 0, 1], &[0.5; 4]).unwrap(), 0.25);
        assert_relative_eq!(mark_mse(&[1, 0], &[0.8, 0.3]).unwrap(), 0.065, epsilon = 1e-12);
        assert!(mark_mse(&[], &[]).is_err());
    }

    #[test]
    fn pattern_validation() {
        let z = MarkCovariates::empty(2);
        assert!(MarkedPattern::new(vec![Point::new(0.0, 0.0); 2], vec![1, 2], z.clone()).is_err());
        assert!(MarkedPattern::new(vec![Point::new(0.0, 0.0); 2], vec![1], z).is_err());
    }
}
