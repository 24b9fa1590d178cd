//! Metropolis–Hastings within Gibbs over the joint model.
//!
//! Each scalar block (log λ0, each β_j, ξ, each α_j) gets a Gaussian
//! random-walk proposal on its unconstrained coordinate. Proposal SDs adapt
//! every `adapt_interval` iterations during burn-in (Robbins–Monro on the log
//! SD) and are frozen afterwards.

mod diagnostics;
mod summary;

pub use diagnostics::{effective_diagnostics, ess, split_rhat, Diagnostic};
pub use summary::{hpd_interval, quantile_sorted, summarize, IntervalKind, ParamSummary, Summary};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::CovariateStack;
use crate::joint::{JointModel, ModelParams, ParamLayout, PriorSpec};
use crate::mark::{IntensityLink, MarkedPattern};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: Option<ModelParams>,
    #[serde(default = "default_adapt_interval")]
    pub adapt_interval: usize,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default = "default_initial_sd")]
    pub initial_sd: f64,
    #[serde(default = "default_true")]
    pub adapt: bool,
}

fn default_adapt_interval() -> usize {
    50
}
fn default_target_accept() -> f64 {
    0.44
}
fn default_initial_sd() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

impl ChainConfig {
    pub fn new(n_iter: usize, n_burnin: usize, thin: usize, seed: u64) -> Self {
        ChainConfig {
            n_iter,
            n_burnin,
            thin,
            seed,
            init: None,
            adapt_interval: default_adapt_interval(),
            target_accept: default_target_accept(),
            initial_sd: default_initial_sd(),
            adapt: true,
        }
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.n_iter.saturating_sub(self.n_burnin)) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.adapt_interval == 0 {
            return Err(Error::invalid("thin and adapt_interval must be positive"));
        }
        if self.n_burnin >= self.n_iter {
            return Err(Error::invalid("n_burnin must be smaller than n_iter"));
        }
        if self.retained() < 2 {
            return Err(Error::invalid("chain retains fewer than two draws"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if !(self.initial_sd > 0.0) {
            return Err(Error::invalid("initial_sd must be positive"));
        }
        Ok(())
    }
}

/// One adaptation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptEvent {
    pub iteration: usize,
    pub acceptance: Vec<f64>,
    pub proposal_sds: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub adaptations: Vec<AdaptEvent>,
    /// Proposal SDs in force after burn-in.
    pub frozen_sds: Vec<f64>,
    /// Proposal SDs observed at every retained draw; constant by construction.
    pub retained_sd_changes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub labels: Vec<String>,
    /// `K` rows on the natural scale, one column per label.
    pub draws: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per block.
    pub acceptance_rates: Vec<f64>,
    pub config: ChainConfig,
    pub layout: ParamLayout,
    pub scale: f64,
    pub log: RunLog,
}

impl PosteriorDraws {
    /// Wrap externally produced draws.
    pub fn from_rows(layout: ParamLayout, scale: f64, draws: Vec<Vec<f64>>, config: ChainConfig) -> Result<Self> {
        let d = layout.dim();
        if let Some(r) = draws.iter().find(|r| r.len() != d) {
            return Err(Error::dims("draw row", d, r.len()));
        }
        Ok(PosteriorDraws {
            labels: layout.labels(),
            acceptance_rates: vec![f64::NAN; d],
            draws,
            config,
            layout,
            scale,
            log: RunLog::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_label(&self, label: &str) -> Option<Vec<f64>> {
        self.labels.iter().position(|l| l == label).map(|j| self.column(j))
    }

    pub fn params(&self, k: usize) -> Result<ModelParams> {
        self.layout.from_vec(&self.draws[k], self.scale)
    }

    /// Column-wise posterior mean on the natural scale.
    pub fn mean_params(&self) -> Result<ModelParams> {
        if self.draws.is_empty() {
            return Err(Error::invalid("no posterior draws"));
        }
        let d = self.labels.len();
        let mut m = vec![0.0; d];
        for r in &self.draws {
            for (a, v) in m.iter_mut().zip(r) {
                *a += v;
            }
        }
        let k = self.draws.len() as f64;
        m.iter_mut().for_each(|v| *v /= k);
        self.layout.from_vec(&m, self.scale)
    }
}

/// MH acceptance rule: accept iff `ln u < log_ratio`.
#[inline]
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    u.ln() < log_ratio
}

/// Robbins–Monro step on the log proposal SD after `times_adapted` previous
/// adaptations.
pub fn adapted_sd(sd: f64, acceptance: f64, target: f64, times_adapted: usize) -> f64 {
    let gamma = 1.0 / ((times_adapted as f64) + 3.0).powf(0.8);
    sd * (10.0 * gamma * (acceptance - target)).exp()
}

/// Sampler coordinates include the log-λ0 Jacobian.
#[inline]
fn target(log_post: f64, params: &ModelParams) -> f64 {
    log_post + params.intensity.lambda0.ln()
}

fn block_name(layout: &ParamLayout, b: usize) -> String {
    layout.labels()[b].clone()
}

pub fn run_chain(model: &JointModel<'_>, config: &ChainConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let layout = model.layout().clone();
    let blocks = layout.blocks();
    let nb = blocks.len();

    let mut params = config.init.clone().unwrap_or_else(|| model.default_init());
    params.intensity.scale = model.scale;
    model.check_params(&params)?;
    let mut current = model.evaluate(&params)?;
    let mut current_target = target(current.log_posterior(), &params);
    if !current_target.is_finite() {
        return Err(Error::Sampler {
            iteration: 0,
            block: "init".into(),
            message: format!("initial log-posterior is {current_target}"),
        });
    }

    let mut rng = seeded(config.seed);
    let mut sds = vec![config.initial_sd; nb];
    let mut window_accepts = vec![0usize; nb];
    let mut post_accepts = vec![0usize; nb];
    let mut times_adapted = 0usize;
    let mut log = RunLog::default();

    let mut proposal = current.clone();
    let mut cand_params = params.clone();
    let mut scratch = Vec::new();
    let mut draws = Vec::with_capacity(config.retained());

    for it in 1..=config.n_iter {
        for (b, &block) in blocks.iter().enumerate() {
            let x = block.get(&params);
            let step: f64 = rng.sample(StandardNormal);
            cand_params.clone_from(&params);
            block.set(&mut cand_params, x + sds[b] * step);
            model.update(&cand_params, block, &current, &mut proposal, &mut scratch);
            let cand_target = target(proposal.log_posterior(), &cand_params);
            if cand_target.is_nan() || cand_target == f64::INFINITY {
                return Err(Error::Sampler {
                    iteration: it,
                    block: block_name(&layout, b),
                    message: format!(
                        "log-posterior {cand_target} at {:?}",
                        layout.to_vec(&cand_params)
                    ),
                });
            }
            let u: f64 = rng.random();
            if mh_accept(cand_target - current_target, u) {
                std::mem::swap(&mut params, &mut cand_params);
                std::mem::swap(&mut current, &mut proposal);
                current_target = cand_target;
                window_accepts[b] += 1;
                if it > config.n_burnin {
                    post_accepts[b] += 1;
                }
            }
        }

        if config.adapt && it <= config.n_burnin && it % config.adapt_interval == 0 {
            let rates: Vec<f64> = window_accepts
                .iter()
                .map(|&a| a as f64 / config.adapt_interval as f64)
                .collect();
            for (sd, r) in sds.iter_mut().zip(&rates) {
                *sd = adapted_sd(*sd, *r, config.target_accept, times_adapted);
            }
            times_adapted += 1;
            log.adaptations.push(AdaptEvent {
                iteration: it,
                acceptance: rates,
                proposal_sds: sds.clone(),
            });
        }
        if it % config.adapt_interval == 0 || it == config.n_burnin {
            window_accepts.iter_mut().for_each(|a| *a = 0);
        }
        if it == config.n_burnin {
            log.frozen_sds = sds.clone();
        }

        if it > config.n_burnin && (it - config.n_burnin) % config.thin == 0 {
            if sds != log.frozen_sds {
                log.retained_sd_changes += 1;
            }
            draws.push(layout.to_vec(&params));
        }
    }

    let n_post = (config.n_iter - config.n_burnin) as f64;
    Ok(PosteriorDraws {
        labels: layout.labels(),
        draws,
        acceptance_rates: post_accepts.iter().map(|&a| a as f64 / n_post).collect(),
        config: config.clone(),
        layout,
        scale: model.scale,
        log,
    })
}

/// Build the model and run one chain.
pub fn run_chain_for(
    pattern: &MarkedPattern,
    covs: &CovariateStack,
    prior: &PriorSpec,
    link: IntensityLink,
    scale: f64,
    xi_enabled: bool,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    let model = JointModel::new(pattern, covs, *prior, link, scale, xi_enabled)?;
    run_chain(&model, config)
}
