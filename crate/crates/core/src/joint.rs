//! The joint model: parameter vector, priors, joint log-likelihood and the
//! unnormalized log-posterior, plus [`JointModel`], a cached evaluator used
//! by the sampler and the model-comparison criteria.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::intensity::{self, CovariateStack, IntensityParams};
use crate::mark::{self, log_bernoulli, IntensityLink, LinkTransform, MarkParams, MarkedPattern};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub intensity: IntensityParams,
    pub mark: MarkParams,
    pub xi_enabled: bool,
}

impl ModelParams {
    pub fn new(intensity: IntensityParams, mark: MarkParams, xi_enabled: bool) -> Self {
        let mut p = ModelParams {
            intensity,
            mark,
            xi_enabled,
        };
        if !xi_enabled {
            p.mark.xi = 0.0;
        }
        p
    }

    /// `ξ` as seen by the likelihood (zero when disabled).
    pub fn effective_xi(&self) -> f64 {
        if self.xi_enabled {
            self.mark.xi
        } else {
            0.0
        }
    }

    /// Mark parameters with ξ zeroed when it is disabled.
    pub fn mark_effective(&self) -> MarkParams {
        MarkParams::new(self.effective_xi(), self.mark.alpha.clone())
    }

    fn effective_mark(&self) -> MarkParams {
        MarkParams::new(self.effective_xi(), self.mark.alpha.clone())
    }
}

/// Hyper-parameters: `λ0 ~ Gamma(a, rate b)` and zero-mean normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub a: f64,
    pub b: f64,
    pub sigma2_beta: f64,
    pub sigma2_xi: f64,
    pub sigma2_alpha: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            a: 0.01,
            b: 0.01,
            sigma2_beta: 100.0,
            sigma2_xi: 100.0,
            sigma2_alpha: 100.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.sigma2_beta, self.sigma2_xi, self.sigma2_alpha];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("prior hyper-parameters must be positive"))
        }
    }
}

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - x * x / (2.0 * var)
}

/// Log prior density; `-∞` when `λ0 ≤ 0`.
pub fn log_prior(params: &ModelParams, prior: &PriorSpec) -> f64 {
    let l0 = params.intensity.lambda0;
    if !(l0 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = (prior.a, prior.b);
    let mut lp = a * b.ln() - ln_gamma(a) + (a - 1.0) * l0.ln() - b * l0;
    lp += params
        .intensity
        .beta
        .iter()
        .map(|x| ln_normal(*x, prior.sigma2_beta))
        .sum::<f64>();
    if params.xi_enabled {
        lp += ln_normal(params.mark.xi, prior.sigma2_xi);
    }
    lp += params
        .mark
        .alpha
        .iter()
        .map(|x| ln_normal(*x, prior.sigma2_alpha))
        .sum::<f64>();
    lp
}

/// Per-point intensities, the intensity field, and the calibrated link for
/// one parameter setting. The same `lambdas` feed both likelihood factors.
pub struct IntensityEval {
    pub field: Field,
    pub lambdas: Vec<f64>,
    pub link: LinkTransform,
}

pub fn evaluate_intensity(
    pattern: &MarkedPattern,
    params: &ModelParams,
    covs: &CovariateStack,
    link: IntensityLink,
) -> Result<IntensityEval> {
    let field = intensity::intensity_field(&params.intensity, covs)?;
    let lambdas = intensity::points_intensity(&pattern.locations, &field)?;
    let link = link.calibrate(&field)?;
    Ok(IntensityEval { field, lambdas, link })
}

pub fn log_joint_likelihood(
    pattern: &MarkedPattern,
    params: &ModelParams,
    covs: &CovariateStack,
    link: IntensityLink,
) -> Result<f64> {
    let ev = evaluate_intensity(pattern, params, covs, link)?;
    let ll_int = intensity::log_lik_from_parts(&ev.lambdas, &ev.field);
    let ll_mark = mark::log_lik_mark(pattern, &ev.lambdas, &params.effective_mark(), &ev.link)?;
    Ok(ll_mark + ll_int)
}

pub fn log_posterior(
    pattern: &MarkedPattern,
    params: &ModelParams,
    covs: &CovariateStack,
    prior: &PriorSpec,
    link: IntensityLink,
) -> Result<f64> {
    if !(params.intensity.lambda0 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_joint_likelihood(pattern, params, covs, link)? + log_prior(params, prior))
}

/// Names and order of the free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub beta_names: Vec<String>,
    pub alpha_names: Vec<String>,
    pub xi_enabled: bool,
}

impl ParamLayout {
    pub fn p(&self) -> usize {
        self.beta_names.len()
    }

    pub fn q(&self) -> usize {
        self.alpha_names.len()
    }

    pub fn dim(&self) -> usize {
        1 + self.p() + usize::from(self.xi_enabled) + self.q()
    }

    /// `lambda0, beta_<name>…, xi, alpha_<name>…`
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec!["lambda0".to_string()];
        out.extend(self.beta_names.iter().map(|n| format!("beta_{n}")));
        if self.xi_enabled {
            out.push("xi".into());
        }
        out.extend(self.alpha_names.iter().map(|n| format!("alpha_{n}")));
        out
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out = vec![Block::LogLambda0];
        out.extend((0..self.p()).map(Block::Beta));
        if self.xi_enabled {
            out.push(Block::Xi);
        }
        out.extend((0..self.q()).map(Block::Alpha));
        out
    }

    /// Natural-scale vector in label order.
    pub fn to_vec(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = vec![params.intensity.lambda0];
        v.extend_from_slice(&params.intensity.beta);
        if self.xi_enabled {
            v.push(params.mark.xi);
        }
        v.extend_from_slice(&params.mark.alpha);
        v
    }

    pub fn from_vec(&self, v: &[f64], scale: f64) -> Result<ModelParams> {
        if v.len() != self.dim() {
            return Err(Error::dims("parameter vector", self.dim(), v.len()));
        }
        let p = self.p();
        let beta = v[1..1 + p].to_vec();
        let mut at = 1 + p;
        let xi = if self.xi_enabled {
            at += 1;
            v[at - 1]
        } else {
            0.0
        };
        let alpha = v[at..].to_vec();
        Ok(ModelParams::new(
            IntensityParams::new(v[0], beta).with_scale(scale),
            MarkParams::new(xi, alpha),
            self.xi_enabled,
        ))
    }

    /// Flat `label → value` JSON object.
    pub fn to_json(&self, params: &ModelParams) -> serde_json::Value {
        let map = self
            .labels()
            .into_iter()
            .zip(self.to_vec(params))
            .map(|(k, v)| (k, serde_json::Value::from(v)))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn from_json(&self, value: &serde_json::Value, scale: f64) -> Result<ModelParams> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::invalid("parameter document must be a JSON object"))?;
        let v = self
            .labels()
            .iter()
            .map(|k| {
                obj.get(k)
                    .and_then(|x| x.as_f64())
                    .ok_or_else(|| Error::invalid(format!("missing numeric parameter {k:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.from_vec(&v, scale)
    }
}

/// A scalar parameter block of the Gibbs cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    LogLambda0,
    Beta(usize),
    Xi,
    Alpha(usize),
}

impl Block {
    /// Unconstrained coordinate value.
    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Block::LogLambda0 => p.intensity.lambda0.ln(),
            Block::Beta(j) => p.intensity.beta[j],
            Block::Xi => p.mark.xi,
            Block::Alpha(j) => p.mark.alpha[j],
        }
    }

    pub fn set(self, p: &mut ModelParams, v: f64) {
        match self {
            Block::LogLambda0 => p.intensity.lambda0 = v.exp(),
            Block::Beta(j) => p.intensity.beta[j] = v,
            Block::Xi => p.mark.xi = v,
            Block::Alpha(j) => p.mark.alpha[j] = v,
        }
    }
}

/// Cell statistics of `exp(Xᵀβ)` (the intensity up to `scale·λ0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    pub sum_exp: f64,
    pub max_eta: f64,
    pub mean_exp: f64,
    pub sd_exp: f64,
}

/// Cached pieces of one log-posterior evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub grid: GridStats,
    pub point_eta: Vec<f64>,
    pub point_link: Vec<f64>,
    pub sum_point_eta: f64,
    pub ll_intensity: f64,
    pub ll_mark: f64,
    pub log_prior: f64,
}

impl Evaluation {
    pub fn log_likelihood(&self) -> f64 {
        self.ll_intensity + self.ll_mark
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood() + self.log_prior
    }
}

/// Fixed data and model settings with precomputed design matrices.
#[derive(Debug, Clone)]
pub struct JointModel<'a> {
    pub pattern: &'a MarkedPattern,
    pub covs: &'a CovariateStack,
    pub prior: PriorSpec,
    pub link: IntensityLink,
    pub scale: f64,
    layout: ParamLayout,
    cell_x: Vec<f64>,
    point_cells: Vec<usize>,
    cell_area: f64,
}

impl<'a> JointModel<'a> {
    pub fn new(
        pattern: &'a MarkedPattern,
        covs: &'a CovariateStack,
        prior: PriorSpec,
        link: IntensityLink,
        scale: f64,
        xi_enabled: bool,
    ) -> Result<Self> {
        prior.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        let grid = covs.grid();
        let point_cells = pattern
            .locations
            .iter()
            .map(|p| grid.flat_cell_of(*p))
            .collect::<Result<Vec<_>>>()?;
        let layout = ParamLayout {
            beta_names: covs.names().to_vec(),
            alpha_names: pattern.covariates.labels().to_vec(),
            xi_enabled,
        };
        Ok(JointModel {
            pattern,
            covs,
            prior,
            link,
            scale,
            layout,
            cell_x: covs.cell_matrix(),
            point_cells,
            cell_area: grid.cell_area(),
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn xi_enabled(&self) -> bool {
        self.layout.xi_enabled
    }

    pub fn n_points(&self) -> usize {
        self.point_cells.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub(crate) fn point_cells(&self) -> &[usize] {
        &self.point_cells
    }

    pub(crate) fn cell_row(&self, k: usize) -> &[f64] {
        let p = self.layout.p();
        &self.cell_x[k * p..(k + 1) * p]
    }

    /// Default starting point: `λ0 = N / (scale·|B|)`, everything else zero.
    pub fn default_init(&self) -> ModelParams {
        let area = self.covs.grid().domain.area();
        let n = self.n_points().max(1) as f64;
        ModelParams::new(
            IntensityParams::new(n / (self.scale * area), vec![0.0; self.layout.p()]).with_scale(self.scale),
            MarkParams::new(0.0, vec![0.0; self.layout.q()]),
            self.layout.xi_enabled,
        )
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.intensity.beta.len() != self.layout.p() {
            return Err(Error::dims("beta", self.layout.p(), params.intensity.beta.len()));
        }
        if params.mark.alpha.len() != self.layout.q() {
            return Err(Error::dims("alpha", self.layout.q(), params.mark.alpha.len()));
        }
        if params.xi_enabled != self.layout.xi_enabled {
            return Err(Error::invalid("xi_enabled flag disagrees with the model"));
        }
        Ok(())
    }

    /// Grid pass: cell statistics of `exp(Xᵀβ)`.
    pub fn grid_stats(&self, beta: &[f64], cell_eta: &mut Vec<f64>) -> GridStats {
        let n = self.covs.grid().n_cells();
        cell_eta.clear();
        let mut max_eta = f64::NEG_INFINITY;
        let mut sum_exp = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..n {
            let eta = intensity::linear_predictor(self.cell_row(k), beta);
            let e = eta.exp();
            max_eta = max_eta.max(eta);
            sum_exp += e;
            sum_sq += e * e;
            cell_eta.push(eta);
        }
        let mean_exp = sum_exp / n as f64;
        let var = (sum_sq / n as f64 - mean_exp * mean_exp).max(0.0);
        GridStats {
            sum_exp,
            max_eta,
            mean_exp,
            sd_exp: var.sqrt(),
        }
    }

    /// Link value for a point with linear predictor `eta`.
    #[inline]
    pub fn link_value(&self, eta: f64, lambda0: f64, grid: &GridStats) -> f64 {
        match self.link {
            IntensityLink::Raw => self.scale * lambda0 * eta.exp(),
            IntensityLink::MaxNormalized => (eta - grid.max_eta).exp(),
            IntensityLink::ZScored if grid.sd_exp == 0.0 => 0.0,
            IntensityLink::ZScored => (eta.exp() - grid.mean_exp) / grid.sd_exp,
        }
    }

    #[inline]
    pub fn point_log_density(&self, i: usize, link_value: f64, params: &ModelParams) -> f64 {
        let (slope, offset) = self
            .pattern
            .covariates
            .predictor_parts(i, &params.mark.alpha);
        let t = link_value * (params.effective_xi() + slope) + offset;
        log_bernoulli(self.pattern.marks[i], t)
    }

    fn ll_intensity(&self, lambda0: f64, grid: &GridStats, sum_point_eta: f64) -> f64 {
        let base = self.scale * lambda0;
        self.n_points() as f64 * base.ln() + sum_point_eta - base * self.cell_area * grid.sum_exp
    }

    fn fill_links(&self, params: &ModelParams, ev: &mut Evaluation) {
        let l0 = params.intensity.lambda0;
        ev.point_link.clear();
        for &eta in &ev.point_eta {
            ev.point_link.push(self.link_value(eta, l0, &ev.grid));
        }
    }

    fn ll_mark(&self, params: &ModelParams, links: &[f64]) -> f64 {
        links
            .iter()
            .enumerate()
            .map(|(i, &l)| self.point_log_density(i, l, params))
            .sum()
    }

    /// Full evaluation at `params`.
    pub fn evaluate(&self, params: &ModelParams) -> Result<Evaluation> {
        self.check_params(params)?;
        let mut scratch = Vec::new();
        let grid = self.grid_stats(&params.intensity.beta, &mut scratch);
        let point_eta: Vec<f64> = self.point_cells.iter().map(|&k| scratch[k]).collect();
        let sum_point_eta = point_eta.iter().sum();
        let mut ev = Evaluation {
            grid,
            point_eta,
            point_link: Vec::with_capacity(self.n_points()),
            sum_point_eta,
            ll_intensity: 0.0,
            ll_mark: 0.0,
            log_prior: log_prior(params, &self.prior),
        };
        self.fill_links(params, &mut ev);
        ev.ll_intensity = self.ll_intensity(params.intensity.lambda0, &ev.grid, ev.sum_point_eta);
        ev.ll_mark = self.ll_mark(params, &ev.point_link);
        Ok(ev)
    }

    /// Re-evaluate into `out` after only `changed` moved from `current`.
    pub fn update(
        &self,
        params: &ModelParams,
        changed: Block,
        current: &Evaluation,
        out: &mut Evaluation,
        scratch: &mut Vec<f64>,
    ) {
        out.log_prior = log_prior(params, &self.prior);
        let l0 = params.intensity.lambda0;
        match changed {
            Block::Beta(_) => {
                out.grid = self.grid_stats(&params.intensity.beta, scratch);
                out.point_eta.clear();
                out.point_eta.extend(self.point_cells.iter().map(|&k| scratch[k]));
                out.sum_point_eta = out.point_eta.iter().sum();
                self.fill_links(params, out);
                out.ll_intensity = self.ll_intensity(l0, &out.grid, out.sum_point_eta);
                out.ll_mark = self.ll_mark(params, &out.point_link);
            }
            Block::LogLambda0 => {
                out.grid = current.grid;
                out.sum_point_eta = current.sum_point_eta;
                out.point_eta.clone_from(&current.point_eta);
                out.ll_intensity = self.ll_intensity(l0, &out.grid, out.sum_point_eta);
                if self.link == IntensityLink::Raw {
                    self.fill_links(params, out);
                    out.ll_mark = self.ll_mark(params, &out.point_link);
                } else {
                    out.point_link.clone_from(&current.point_link);
                    out.ll_mark = current.ll_mark;
                }
            }
            Block::Xi | Block::Alpha(_) => {
                out.grid = current.grid;
                out.sum_point_eta = current.sum_point_eta;
                out.point_eta.clone_from(&current.point_eta);
                out.point_link.clone_from(&current.point_link);
                out.ll_intensity = current.ll_intensity;
                out.ll_mark = self.ll_mark(params, &out.point_link);
            }
        }
    }

    pub fn log_posterior(&self, params: &ModelParams) -> Result<f64> {
        if !(params.intensity.lambda0 > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.evaluate(params)?.log_posterior())
    }
}
