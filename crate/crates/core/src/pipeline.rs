//! End-to-end workflow: assemble covariates, run the sampler, summarize,
//! compute model-comparison criteria, and export fitted surfaces.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis;
use crate::court::{court_grid, CourtGeometry};
use crate::error::{Error, Result};
use crate::grid::{Domain, DomainGrid, Field};
use crate::intensity::{self, CovariateStack};
use crate::io::{self, Provenance};
use crate::joint::{JointModel, PriorSpec};
use crate::mark::{self, IntensityLink, MarkColumns, MarkCovariates, MarkedPattern};
use crate::mcmc::{effective_diagnostics, run_chain, Diagnostic, summarize, ChainConfig, IntervalKind, PosteriorDraws, Summary};
use crate::selection::{criteria, CriteriaReport};

/// Split-Rhat above which a fit is reported as unconverged.
pub const RHAT_WARN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataKind {
    /// Shot-chart CSV on the 50×35 half court.
    Shots,
    /// Generic `x,y,made,<z...>` CSV on a square grid over `[−1, 1]²`, with
    /// coordinate (or no) intensity covariates.
    Generic {
        grid_n: usize,
        #[serde(default = "default_true")]
        coordinates: bool,
    },
}

fn default_true() -> bool {
    true
}
fn default_scale() -> f64 {
    1.0
}
fn default_interval() -> IntervalKind {
    IntervalKind::Hpd95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    #[serde(default = "default_kind")]
    pub data_kind: DataKind,
    /// Directory holding a saved basis set; without it the intensity is
    /// homogeneous on the court.
    #[serde(default)]
    pub basis_dir: Option<PathBuf>,
    /// Basis labels to keep; all when absent.
    #[serde(default)]
    pub intensity_bases: Option<Vec<String>>,
    #[serde(default)]
    pub mark_columns: MarkColumns,
    /// Mark covariate labels to leave out.
    #[serde(default)]
    pub mark_exclude: Vec<String>,
    #[serde(default)]
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    #[serde(default)]
    pub link: IntensityLink,
    #[serde(default = "default_true")]
    pub xi_enabled: bool,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_interval")]
    pub interval: IntervalKind,
}

fn default_kind() -> DataKind {
    DataKind::Shots
}

impl RunConfig {
    pub fn new(data: PathBuf, chain: ChainConfig) -> Self {
        RunConfig {
            data,
            data_kind: DataKind::Shots,
            basis_dir: None,
            intensity_bases: None,
            mark_columns: MarkColumns::default(),
            mark_exclude: vec![],
            prior: PriorSpec::default(),
            chain,
            link: IntensityLink::default(),
            xi_enabled: true,
            scale: 1.0,
            interval: IntervalKind::Hpd95,
        }
    }

    pub fn spec(&self) -> FitSpec {
        FitSpec {
            prior: self.prior,
            chain: self.chain.clone(),
            link: self.link,
            scale: self.scale,
            xi_enabled: self.xi_enabled,
            interval: self.interval,
        }
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Provenance::new(self, self.chain.seed)
    }
}

/// Inputs assembled from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Inputs {
    pub pattern: MarkedPattern,
    pub covs: CovariateStack,
    pub dropped_rows: usize,
}

fn keep_labels<'a>(labels: &'a [String], wanted: &[String], what: &str) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|w| {
            labels
                .iter()
                .position(|l| l == w)
                .ok_or_else(|| Error::invalid(format!("unknown {what} {w:?}")))
        })
        .collect()
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let text = std::fs::read_to_string(&config.data)?;
    let (pattern, covs, dropped_rows) = match &config.data_kind {
        DataKind::Shots => {
            let data = io::parse_shot_csv(&text)?;
            let meta = data.pattern.meta.clone().unwrap_or_default();
            let z = mark::mark_design_from_meta(&meta, &config.mark_columns)?;
            let covs = match &config.basis_dir {
                Some(dir) => basis::basis_covariates(&basis::load_basis_set(dir)?)?,
                None => CovariateStack::homogeneous(court_grid()?),
            };
            (data.pattern.with_covariates(z)?, covs, data.dropped)
        }
        DataKind::Generic { grid_n, coordinates } => {
            let pattern = io::parse_marked_csv(&text)?;
            let grid = DomainGrid::new(Domain::unit_square(), *grid_n, *grid_n)?;
            let covs = if *coordinates {
                CovariateStack::coordinates(grid)
            } else {
                CovariateStack::homogeneous(grid)
            };
            (pattern, covs, 0)
        }
    };
    let covs = match &config.intensity_bases {
        Some(names) => covs.select(&keep_labels(covs.names(), names, "intensity covariate")?)?,
        None => covs,
    };
    let labels = pattern.covariates.labels().to_vec();
    keep_labels(&labels, &config.mark_exclude, "mark covariate")?;
    let keep: Vec<usize> = (0..labels.len()).filter(|&j| !config.mark_exclude.contains(&labels[j])).collect();
    let z = pattern.covariates.select(&keep)?;
    Ok(Inputs {
        pattern: pattern.with_covariates(z)?,
        covs,
        dropped_rows,
    })
}

/// Model and sampler settings for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    pub link: IntensityLink,
    pub scale: f64,
    pub xi_enabled: bool,
    pub interval: IntervalKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub summary: Summary,
    pub draws: PosteriorDraws,
    pub criteria: CriteriaReport,
    pub diagnostics: Vec<Diagnostic>,
    pub max_rhat: f64,
    pub converged: bool,
    pub mark_mse: f64,
}

pub fn fit_model(pattern: &MarkedPattern, covs: &CovariateStack, spec: &FitSpec) -> Result<FitResult> {
    let model = JointModel::new(pattern, covs, spec.prior, spec.link, spec.scale, spec.xi_enabled)?;
    let draws = run_chain(&model, &spec.chain)?;
    let summary = summarize(&draws, spec.interval)?;
    let criteria = criteria(&model, &draws)?;
    let diagnostics = effective_diagnostics(&draws)?;
    let max_rhat = diagnostics
        .iter()
        .map(|d| d.split_rhat)
        .filter(|r| r.is_finite())
        .fold(f64::NAN, f64::max);
    let converged = !(max_rhat > RHAT_WARN);
    if !converged {
        log::warn!("max split-Rhat {max_rhat:.3} exceeds {RHAT_WARN}");
    }
    let thetas = fitted_thetas(&model, &draws)?;
    let mark_mse = if pattern.is_empty() {
        f64::NAN
    } else {
        mark::mark_mse(&pattern.marks, &thetas)?
    };
    Ok(FitResult {
        summary,
        draws,
        criteria,
        diagnostics,
        max_rhat,
        converged,
        mark_mse,
    })
}

/// Mark probabilities at the posterior mean.
fn fitted_thetas(model: &JointModel<'_>, draws: &PosteriorDraws) -> Result<Vec<f64>> {
    let params = draws.mean_params()?;
    let ev = model.evaluate(&params)?;
    Ok((0..model.n_points())
        .map(|i| model.point_log_density(i, ev.point_link[i], &params))
        .zip(&model.pattern.marks)
        .map(|(lf, &m)| if m == 1 { lf.exp() } else { 1.0 - lf.exp() })
        .collect())
}

pub fn fit(config: &RunConfig) -> Result<FitResult> {
    let inputs = load_inputs(config)?;
    fit_model(&inputs.pattern, &inputs.covs, &config.spec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageResult {
    pub stage1: FitResult,
    pub stage2: FitResult,
    /// Parameter labels removed after stage 1.
    pub dropped: Vec<String>,
    pub xi_enabled: bool,
    pub beta_names: Vec<String>,
    pub alpha_names: Vec<String>,
}

/// Fit, drop every coefficient whose interval covers zero, and refit.
/// `λ0` and the mark intercept are always kept.
pub fn two_stage_fit(pattern: &MarkedPattern, covs: &CovariateStack, spec: &FitSpec) -> Result<TwoStageResult> {
    let stage1 = fit_model(pattern, covs, spec)?;
    let covers_zero = |label: &str| stage1.summary.get(label).is_some_and(|p| p.covers(0.0));

    let mut dropped = Vec::new();
    let keep_beta: Vec<usize> = (0..covs.p())
        .filter(|&j| {
            let label = format!("beta_{}", covs.names()[j]);
            let drop = covers_zero(&label);
            if drop {
                dropped.push(label);
            }
            !drop
        })
        .collect();
    let xi_enabled = spec.xi_enabled && !covers_zero("xi");
    if spec.xi_enabled && !xi_enabled {
        dropped.push("xi".into());
    }
    let z = &pattern.covariates;
    let keep_alpha: Vec<usize> = (0..z.q())
        .filter(|&j| {
            let name = &z.labels()[j];
            if name == "intercept" {
                return true;
            }
            let label = format!("alpha_{name}");
            let drop = covers_zero(&label);
            if drop {
                dropped.push(label);
            }
            !drop
        })
        .collect();

    let covs2 = covs.select(&keep_beta)?;
    let z2 = if keep_alpha.is_empty() {
        log::warn!("every mark covariate was dropped; refitting with an intercept only");
        MarkCovariates::from_rows(&vec![vec![1.0]; pattern.len()], vec!["intercept".into()])?
    } else {
        z.select(&keep_alpha)?
    };
    let pattern2 = pattern.clone().with_covariates(z2)?;
    let mut spec2 = spec.clone();
    spec2.xi_enabled = xi_enabled;
    spec2.chain.init = None;
    let stage2 = fit_model(&pattern2, &covs2, &spec2)?;
    Ok(TwoStageResult {
        stage1,
        stage2,
        dropped,
        xi_enabled,
        beta_names: covs2.names().to_vec(),
        alpha_names: pattern2.covariates.labels().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `λ·θ·points`.
    #[default]
    ExpectedPoints,
    /// `λ·θ`, ignoring the shot value.
    MakeRate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surfaces {
    pub intensity: Field,
    pub theta: Field,
    pub score: Field,
}

/// Reference value of a mark covariate at cell center `s` for surface export.
fn reference_value(label: &str, s: crate::grid::Point, court: &CourtGeometry, median_seconds: f64) -> f64 {
    match label {
        "intercept" => 1.0,
        mark::INTERACTION_LABEL => f64::from(u8::from(court.is_three(s))),
        "distance" => court.distance_to_basket(s),
        "seconds_left" => median_seconds,
        _ => 0.0,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Intensity, make probability and score surfaces at the posterior mean.
///
/// Non-spatial mark covariates sit at reference levels: period 1, median
/// `seconds_left`, no playoff opponent, and distance equal to the cell's
/// distance to the basket. Unrecognized covariates are set to zero.
pub fn export_surfaces(
    draws: &PosteriorDraws,
    pattern: &MarkedPattern,
    covs: &CovariateStack,
    link: IntensityLink,
    court: &CourtGeometry,
    kind: ScoreKind,
) -> Result<Surfaces> {
    let params = draws.mean_params()?;
    let intensity = intensity::intensity_field(&params.intensity, covs)?;
    let transform = link.calibrate(&intensity)?;
    let median_seconds = median(
        pattern
            .meta
            .as_ref()
            .map(|m| m.iter().map(|s| s.seconds_left).collect())
            .unwrap_or_default(),
    );
    let z = &pattern.covariates;
    let mp = params.mark_effective();
    let grid = *covs.grid();
    let mut theta = Vec::with_capacity(grid.n_cells());
    let mut score = Vec::with_capacity(grid.n_cells());
    for (s, &lam) in grid.centers().zip(intensity.values()) {
        let lv = transform.apply(lam);
        let row: Vec<f64> = z
            .labels()
            .iter()
            .zip(z.intensity_scaled())
            .map(|(l, &scaled)| {
                let v = reference_value(l, s, court, median_seconds);
                if scaled {
                    v * lv
                } else {
                    v
                }
            })
            .collect();
        let t = mark::theta_at(lam, &row, &mp, &transform)?;
        let reward = match kind {
            ScoreKind::ExpectedPoints => court.points(s),
            ScoreKind::MakeRate => 1.0,
        };
        theta.push(t);
        score.push(lam * t * reward);
    }
    Ok(Surfaces {
        intensity,
        theta: Field::from_values(grid, theta)?,
        score: Field::from_values(grid, score)?,
    })
}

pub fn write_surfaces(dir: &Path, surfaces: &Surfaces, provenance: &Provenance) -> Result<()> {
    io::write_grid_csv(&dir.join("intensity.csv"), &surfaces.intensity, Some(provenance))?;
    io::write_grid_csv(&dir.join("theta.csv"), &surfaces.theta, Some(provenance))?;
    io::write_grid_csv(&dir.join("score.csv"), &surfaces.score, Some(provenance))
}

/// Write summary, draws, criteria and diagnostics under `dir`.
pub fn write_fit_outputs(dir: &Path, result: &FitResult, provenance: &Provenance) -> Result<()> {
    io::write_json(&dir.join("summary.json"), &io::stamped(&result.summary, provenance)?)?;
    io::write_atomic(&dir.join("summary.txt"), result.summary.to_table().as_bytes())?;
    io::write_draws_csv(&dir.join("draws.csv"), &result.draws, Some(provenance))?;
    io::write_json(&dir.join("criteria.json"), &io::stamped(&result.criteria, provenance)?)?;
    let diag = serde_json::json!({
        "diagnostics": result.diagnostics,
        "max_rhat": result.max_rhat,
        "converged": result.converged,
        "mark_mse": result.mark_mse,
        "acceptance_rates": result.draws.acceptance_rates,
    });
    io::write_json(&dir.join("diagnostics.json"), &io::stamped(&diag, provenance)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simstudy::SimDesign;

    fn simulated(seed: u64) -> (MarkedPattern, CovariateStack, SimDesign) {
        let d = SimDesign {
            grid_n: 40,
            ..SimDesign::default()
        };
        let covs = d.covariates().unwrap();
        let p = d.simulate(&covs, &mut crate::rng::seeded(seed)).unwrap();
        (p, covs, d)
    }

    fn spec(seed: u64, xi: bool) -> FitSpec {
        FitSpec {
            prior: PriorSpec::default(),
            chain: ChainConfig::new(3000, 1500, 1, seed),
            link: IntensityLink::MaxNormalized,
            scale: 100.0,
            xi_enabled: xi,
            interval: IntervalKind::Hpd95,
        }
    }

    #[test]
    fn fit_is_reproducible_and_additive() {
        let (p, covs, _) = simulated(1);
        let a = fit_model(&p, &covs, &spec(5, true)).unwrap();
        let b = fit_model(&p, &covs, &spec(5, true)).unwrap();
        assert_eq!(a, b);
        let c = &a.criteria;
        assert!((c.dic_joint - c.dic_intensity - c.dic_mark).abs() <= 1e-8 * c.dic_joint.abs());
        assert!(a.mark_mse > 0.0 && a.mark_mse < 0.25);
    }

    #[test]
    fn restricted_fit_keeps_intensity_dic() {
        let (p, covs, _) = simulated(2);
        let full = fit_model(&p, &covs, &spec(9, true)).unwrap();
        let restricted = fit_model(&p, &covs, &spec(9, false)).unwrap();
        assert!((full.criteria.dic_intensity - restricted.criteria.dic_intensity).abs() < 1.0);
    }

    #[test]
    fn two_stage_drops_noise_covariate() {
        let (p, covs, _) = simulated(3);
        // replace z2 by pure noise unrelated to the marks
        let mut rng = crate::rng::seeded(77);
        let rows: Vec<Vec<f64>> = (0..p.len())
            .map(|i| {
                let r = p.covariates.base_row(i);
                vec![r[0], r[1], r[2], rand::Rng::sample(&mut rng, rand_distr::StandardNormal)]
            })
            .collect();
        let labels = vec!["intercept".into(), "z1".into(), "z2".into(), "noise".into()];
        let p = p.with_covariates(MarkCovariates::from_rows(&rows, labels).unwrap()).unwrap();
        let r = two_stage_fit(&p, &covs, &spec(4, true)).unwrap();
        let r2 = two_stage_fit(&p, &covs, &spec(4, true)).unwrap();
        assert_eq!(r.dropped, r2.dropped);
        assert!(r.alpha_names.contains(&"z1".to_string()));
        assert!(r.beta_names.len() == 2);
        assert_eq!(r.stage2.summary.params.len(), 1 + r.beta_names.len() + usize::from(r.xi_enabled) + r.alpha_names.len());
    }

    #[test]
    fn surfaces_bounds_and_degenerate_theta() {
        let grid = court_grid().unwrap();
        let covs = CovariateStack::homogeneous(grid);
        let text = "x,y,made,shot_type,distance,period,seconds_left,opp_playoff\n\
            25,10,1,2,5,1,300,0\n3,2,0,3,22,2,12,1\n25,30,1,3,25,4,40,0\n20,8,0,2,5,1,100,0\n";
        let data = io::parse_shot_csv(text).unwrap();
        let meta = data.pattern.meta.clone().unwrap();
        let z = mark::mark_design_from_meta(&meta, &MarkColumns::intercept_only()).unwrap();
        let pattern = data.pattern.with_covariates(z).unwrap();
        let mut s = spec(1, false);
        s.scale = 1.0;
        s.chain = ChainConfig::new(600, 300, 1, 1);
        let res = fit_model(&pattern, &covs, &s).unwrap();
        let surf = export_surfaces(&res.draws, &pattern, &covs, IntensityLink::MaxNormalized, &CourtGeometry::default(), ScoreKind::ExpectedPoints).unwrap();
        assert_eq!(surf.intensity.max(), surf.intensity.min());
        assert_eq!(surf.theta.max(), surf.theta.min());
        for ((l, t), sc) in surf.intensity.values().iter().zip(surf.theta.values()).zip(surf.score.values()) {
            assert!(*t > 0.0 && *t < 1.0);
            assert!(*sc >= 0.0 && *sc <= 3.0 * l);
        }
    }

    #[test]
    fn config_round_trip_and_exclusions() {
        let dir = tempfile::tempdir().unwrap();
        let (p, _, _) = simulated(6);
        let path = dir.path().join("data.csv");
        io::write_marked_csv(&path, &p).unwrap();
        let mut cfg = RunConfig::new(path, ChainConfig::new(100, 50, 1, 3));
        cfg.data_kind = DataKind::Generic { grid_n: 40, coordinates: true };
        cfg.mark_exclude = vec!["z2".into()];
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let inputs = load_inputs(&cfg).unwrap();
        assert_eq!(inputs.pattern.covariates.labels(), &["intercept", "z1"]);
        cfg.mark_exclude = vec!["nope".into()];
        assert!(load_inputs(&cfg).is_err());
    }
}
