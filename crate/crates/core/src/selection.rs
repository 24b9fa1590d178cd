//! DIC and LPML for the joint model, each split into an intensity part and
//! a conditional mark part.
//!
//! LPML for the intensity uses the Monte Carlo approximation
//! `Σ log λ̃(sᵢ) − ∫ λ̄`, with `λ̃` the per-point harmonic mean over draws and
//! `λ̄` the arithmetic mean surface. LPML for the marks is the usual sum of
//! log CPOs, each CPO being a harmonic mean of per-draw densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{self, CovariateStack, IntensityParams};
use crate::io::sig6;
use crate::joint::{GridStats, JointModel, ModelParams, PriorSpec};
use crate::mark::{self, IntensityLink, LinkTransform, MarkParams, MarkedPattern, PROB_FLOOR};
use crate::mcmc::{run_chain, ChainConfig, PosteriorDraws};
use crate::par::Exec;

/// DIC difference regarded as substantial.
pub const DIC_SUBSTANTIAL: f64 = 10.0;
/// LPML difference regarded as very strong.
pub const LPML_VERY_STRONG: f64 = 4.5;

pub fn deviance_intensity(
    pattern: &MarkedPattern,
    params: &IntensityParams,
    covs: &CovariateStack,
) -> Result<f64> {
    Ok(-2.0 * intensity::log_lik_intensity(&pattern.locations, params, covs)?)
}

pub fn deviance_mark(
    pattern: &MarkedPattern,
    lambdas: &[f64],
    params: &MarkParams,
    link: &LinkTransform,
) -> Result<f64> {
    Ok(-2.0 * mark::log_lik_mark(pattern, lambdas, params, link)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Joint,
    Intensity,
    Mark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicValue {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub dic_joint: f64,
    pub dic_intensity: f64,
    pub dic_mark: f64,
    #[serde(rename = "pD_joint")]
    pub p_d_joint: f64,
    #[serde(rename = "pD_intensity")]
    pub p_d_intensity: f64,
    #[serde(rename = "pD_mark")]
    pub p_d_mark: f64,
    pub lpml_joint: f64,
    pub lpml_intensity: f64,
    pub lpml_mark: f64,
    pub n_draws: usize,
    /// Per-draw mark densities that fell below the probability floor.
    pub clamped_densities: usize,
}

struct DrawEval {
    params: ModelParams,
    grid: GridStats,
    ll_intensity: f64,
    ll_mark: f64,
}

fn draw_evals(model: &JointModel<'_>, draws: &PosteriorDraws, exec: Exec) -> Result<Vec<DrawEval>> {
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws"));
    }
    exec.map(draws.len(), |k| {
        let params = draws.params(k)?;
        let ev = model.evaluate(&params)?;
        Ok(DrawEval {
            params,
            grid: ev.grid,
            ll_intensity: ev.ll_intensity,
            ll_mark: ev.ll_mark,
        })
    })
    .into_iter()
    .collect()
}

fn dic_from(mean_ll: f64, ll_at_mean: f64) -> DicValue {
    let mean_deviance = -2.0 * mean_ll;
    let deviance_at_mean = -2.0 * ll_at_mean;
    let p_d = mean_deviance - deviance_at_mean;
    DicValue {
        dic: deviance_at_mean + 2.0 * p_d,
        p_d,
        mean_deviance,
        deviance_at_mean,
    }
}

fn dic_all(model: &JointModel<'_>, draws: &PosteriorDraws, evals: &[DrawEval]) -> Result<[DicValue; 3]> {
    let k = evals.len() as f64;
    let mean_int = evals.iter().map(|e| e.ll_intensity).sum::<f64>() / k;
    let mean_mark = evals.iter().map(|e| e.ll_mark).sum::<f64>() / k;
    let at_mean = model.evaluate(&draws.mean_params()?)?;
    let intensity = dic_from(mean_int, at_mean.ll_intensity);
    let mark = dic_from(mean_mark, at_mean.ll_mark);
    // the joint deviance is the sum of the two component deviances
    let joint = DicValue {
        dic: intensity.dic + mark.dic,
        p_d: intensity.p_d + mark.p_d,
        mean_deviance: intensity.mean_deviance + mark.mean_deviance,
        deviance_at_mean: intensity.deviance_at_mean + mark.deviance_at_mean,
    };
    Ok([joint, intensity, mark])
}

pub fn dic(model: &JointModel<'_>, draws: &PosteriorDraws, component: Component) -> Result<DicValue> {
    let evals = draw_evals(model, draws, Exec::default())?;
    let [joint, intensity, mark] = dic_all(model, draws, &evals)?;
    Ok(match component {
        Component::Joint => joint,
        Component::Intensity => intensity,
        Component::Mark => mark,
    })
}

/// Per-point posterior predictive quantities, all on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBounds {
    /// `log λ̃(sᵢ)` (harmonic mean over draws).
    pub log_harmonic_lambda: Vec<f64>,
    /// `log λ̄(sᵢ)` (arithmetic mean over draws).
    pub log_mean_lambda: Vec<f64>,
    pub log_cpo: Vec<f64>,
    /// Log of the arithmetic-mean predictive density of the observed mark.
    pub log_mean_density: Vec<f64>,
    pub clamped: usize,
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + (s / values.len() as f64).ln()
}

/// `−log mean(exp(−v))`: the log of a harmonic mean.
fn log_harmonic_mean(values: &[f64]) -> f64 {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    -log_mean_exp(&neg)
}

fn pointwise_from(model: &JointModel<'_>, evals: &[DrawEval], exec: Exec) -> PointwiseBounds {
    let floor = PROB_FLOOR.ln();
    let per_point = exec.map(model.n_points(), |i| {
        let row = model.cell_row(model.point_cells()[i]);
        let mut log_lambda = Vec::with_capacity(evals.len());
        let mut log_f = Vec::with_capacity(evals.len());
        let mut clamped = 0usize;
        for e in evals {
            let l0 = e.params.intensity.lambda0;
            let eta = intensity::linear_predictor(row, &e.params.intensity.beta);
            log_lambda.push((model.scale * l0).ln() + eta);
            let lf = model.point_log_density(i, model.link_value(eta, l0, &e.grid), &e.params);
            if lf < floor {
                clamped += 1;
                log_f.push(floor);
            } else {
                log_f.push(lf);
            }
        }
        (
            log_harmonic_mean(&log_lambda),
            log_mean_exp(&log_lambda),
            log_harmonic_mean(&log_f),
            log_mean_exp(&log_f),
            clamped,
        )
    });
    let mut out = PointwiseBounds {
        log_harmonic_lambda: Vec::with_capacity(per_point.len()),
        log_mean_lambda: Vec::with_capacity(per_point.len()),
        log_cpo: Vec::with_capacity(per_point.len()),
        log_mean_density: Vec::with_capacity(per_point.len()),
        clamped: 0,
    };
    for (h, a, c, d, n) in per_point {
        out.log_harmonic_lambda.push(h);
        out.log_mean_lambda.push(a);
        out.log_cpo.push(c);
        out.log_mean_density.push(d);
        out.clamped += n;
    }
    out
}

/// `∫ λ̄` on the model grid.
fn mean_surface_integral(model: &JointModel<'_>, evals: &[DrawEval], exec: Exec) -> f64 {
    let k = evals.len() as f64;
    let n_cells = model.covs.grid().n_cells();
    let total = exec.sum(n_cells, |c| {
        let row = model.cell_row(c);
        evals
            .iter()
            .map(|e| {
                let p = &e.params.intensity;
                model.scale * p.lambda0 * intensity::linear_predictor(row, &p.beta).exp()
            })
            .sum::<f64>()
            / k
    });
    model.cell_area() * total
}

pub fn pointwise(model: &JointModel<'_>, draws: &PosteriorDraws) -> Result<PointwiseBounds> {
    let evals = draw_evals(model, draws, Exec::default())?;
    Ok(pointwise_from(model, &evals, Exec::default()))
}

pub fn lpml_intensity(model: &JointModel<'_>, draws: &PosteriorDraws) -> Result<f64> {
    let exec = Exec::default();
    let evals = draw_evals(model, draws, exec)?;
    let pw = pointwise_from(model, &evals, exec);
    Ok(pw.log_harmonic_lambda.iter().sum::<f64>() - mean_surface_integral(model, &evals, exec))
}

pub fn lpml_mark(model: &JointModel<'_>, draws: &PosteriorDraws) -> Result<f64> {
    let evals = draw_evals(model, draws, Exec::default())?;
    Ok(pointwise_from(model, &evals, Exec::default()).log_cpo.iter().sum())
}

/// All criteria from one set of draws.
pub fn criteria(model: &JointModel<'_>, draws: &PosteriorDraws) -> Result<CriteriaReport> {
    criteria_with(model, draws, Exec::default())
}

pub fn criteria_with(model: &JointModel<'_>, draws: &PosteriorDraws, exec: Exec) -> Result<CriteriaReport> {
    let evals = draw_evals(model, draws, exec)?;
    let [joint, intensity, mark] = dic_all(model, draws, &evals)?;
    let pw = pointwise_from(model, &evals, exec);
    let lpml_intensity =
        pw.log_harmonic_lambda.iter().sum::<f64>() - mean_surface_integral(model, &evals, exec);
    let lpml_mark: f64 = pw.log_cpo.iter().sum();
    if pw.clamped > 0 {
        log::warn!("{} per-draw mark densities clamped at {PROB_FLOOR}", pw.clamped);
    }
    Ok(CriteriaReport {
        dic_joint: joint.dic,
        dic_intensity: intensity.dic,
        dic_mark: mark.dic,
        p_d_joint: joint.p_d,
        p_d_intensity: intensity.p_d,
        p_d_mark: mark.p_d,
        lpml_joint: lpml_intensity + lpml_mark,
        lpml_intensity,
        lpml_mark,
        n_draws: draws.len(),
        clamped_densities: pw.clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferred {
    /// The model with ξ estimated.
    Full,
    /// The model with ξ fixed at zero.
    Restricted,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub full: f64,
    pub restricted: f64,
    pub preferred: Preferred,
    /// Difference beyond the decision threshold (10 for DIC, 4.5 for LPML).
    pub decisive: bool,
}

fn verdict(criterion: &str, full: f64, restricted: f64, lower_is_better: bool) -> Verdict {
    let advantage_full = if lower_is_better { restricted - full } else { full - restricted };
    let threshold = if lower_is_better { DIC_SUBSTANTIAL } else { LPML_VERY_STRONG };
    let preferred = if advantage_full > 0.0 {
        Preferred::Full
    } else if advantage_full < 0.0 {
        Preferred::Restricted
    } else {
        Preferred::Tie
    };
    Verdict {
        criterion: criterion.to_string(),
        full,
        restricted,
        preferred,
        decisive: advantage_full.abs() > threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiComparison {
    pub full: CriteriaReport,
    pub restricted: CriteriaReport,
    pub verdicts: Vec<Verdict>,
}

impl XiComparison {
    pub fn from_reports(full: CriteriaReport, restricted: CriteriaReport) -> Self {
        let verdicts = vec![
            verdict("dic_joint", full.dic_joint, restricted.dic_joint, true),
            verdict("dic_intensity", full.dic_intensity, restricted.dic_intensity, true),
            verdict("dic_mark", full.dic_mark, restricted.dic_mark, true),
            verdict("lpml_joint", full.lpml_joint, restricted.lpml_joint, false),
            verdict("lpml_intensity", full.lpml_intensity, restricted.lpml_intensity, false),
            verdict("lpml_mark", full.lpml_mark, restricted.lpml_mark, false),
        ];
        XiComparison {
            full,
            restricted,
            verdicts,
        }
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    /// Side-by-side layout: component × criterion × model variant.
    pub fn to_table(&self) -> String {
        let f = &self.full;
        let r = &self.restricted;
        let rows = [
            ("Joint", "DIC", f.dic_joint, r.dic_joint),
            ("", "LPML", f.lpml_joint, r.lpml_joint),
            ("Intensity", "DIC", f.dic_intensity, r.dic_intensity),
            ("", "LPML", f.lpml_intensity, r.lpml_intensity),
            ("Mark", "DIC", f.dic_mark, r.dic_mark),
            ("", "LPML", f.lpml_mark, r.lpml_mark),
        ];
        let mut out = format!("{:<10} {:<5} {:>14} {:>14}\n", "component", "crit", "xi != 0", "xi = 0");
        for (c, k, a, b) in rows {
            out.push_str(&format!("{c:<10} {k:<5} {:>14} {:>14}\n", sig6(a), sig6(b)));
        }
        out
    }
}

/// Fit the model with ξ free and with ξ = 0 under the same chain settings
/// and compare their criteria.
pub fn compare_xi_models(
    pattern: &MarkedPattern,
    covs: &CovariateStack,
    prior: &PriorSpec,
    link: IntensityLink,
    scale: f64,
    config: &ChainConfig,
) -> Result<XiComparison> {
    let fit = |xi_enabled: bool| -> Result<CriteriaReport> {
        let model = JointModel::new(pattern, covs, *prior, link, scale, xi_enabled)?;
        let mut cfg = config.clone();
        if let Some(init) = cfg.init.as_mut() {
            init.xi_enabled = xi_enabled;
            if !xi_enabled {
                init.mark.xi = 0.0;
            }
        }
        let draws = run_chain(&model, &cfg)?;
        criteria(&model, &draws)
    };
    Ok(XiComparison::from_reports(fit(true)?, fit(false)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, DomainGrid, Point};
    use crate::joint::ParamLayout;
    use crate::mark::MarkCovariates;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn setup(n: usize) -> (MarkedPattern, CovariateStack) {
        let grid = DomainGrid::new(Domain::unit_square(), 20, 20).unwrap();
        let covs = CovariateStack::coordinates(grid);
        let mut rng = crate::rng::seeded(n as u64);
        let locs: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let marks = (0..n).map(|_| rng.random_range(0..2)).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, rng.random_range(-1.0..1.0)]).collect();
        let z = MarkCovariates::from_rows(&rows, vec!["intercept".into(), "z1".into()]).unwrap();
        (MarkedPattern::new(locs, marks, z).unwrap(), covs)
    }

    fn fake_draws(model: &JointModel<'_>, rows: Vec<Vec<f64>>) -> PosteriorDraws {
        PosteriorDraws::from_rows(model.layout().clone(), model.scale, rows, ChainConfig::new(10, 5, 1, 0)).unwrap()
    }

    fn layout() -> ParamLayout {
        ParamLayout {
            beta_names: vec!["x".into(), "y".into()],
            alpha_names: vec!["intercept".into(), "z1".into()],
            xi_enabled: true,
        }
    }

    #[test]
    fn deviance_examples() {
        let grid = DomainGrid::new(Domain::unit_square(), 10, 10).unwrap();
        let hom = CovariateStack::homogeneous(grid);
        let empty = MarkedPattern::new(vec![], vec![], MarkCovariates::empty(0)).unwrap();
        let d = deviance_intensity(&empty, &IntensityParams::new(1.0, vec![]), &hom).unwrap();
        assert_relative_eq!(d, 8.0, epsilon = 1e-12);

        let raw = LinkTransform::raw();
        let (pat, _) = setup(6);
        let half = MarkParams::new(0.0, vec![0.0, 0.0]);
        assert_relative_eq!(deviance_mark(&pat, &[1.0; 6], &half, &raw).unwrap(), 12.0 * 2f64.ln(), epsilon = 1e-12);

        let one = MarkedPattern::new(
            vec![Point::new(0.0, 0.0)],
            vec![1],
            MarkCovariates::from_rows(&[vec![1.0]], vec!["intercept".into()]).unwrap(),
        )
        .unwrap();
        let d = deviance_mark(&one, &[1.0], &MarkParams::new(0.5, vec![0.5]), &raw).unwrap();
        assert!((d - 0.6265).abs() < 1e-4);
        assert_eq!(deviance_mark(&empty, &[], &MarkParams::new(1.0, vec![]), &raw).unwrap(), 0.0);
    }

    #[test]
    fn deviance_scaling_in_lambda0() {
        let (pat, covs) = setup(40);
        let p = IntensityParams::new(0.8, vec![0.5, -0.2]).with_scale(50.0);
        let c = 1.7;
        let mut q = p.clone();
        q.lambda0 *= c;
        let integral = intensity::intensity_field(&p, &covs).unwrap().riemann_integral();
        let diff = deviance_intensity(&pat, &q, &covs).unwrap() - deviance_intensity(&pat, &p, &covs).unwrap();
        let expected = -2.0 * (40.0 * c.ln() - (c - 1.0) * integral);
        assert_relative_eq!(diff, expected, max_relative = 1e-9);
    }

    #[test]
    fn single_draw_identities() {
        let (pat, covs) = setup(50);
        let model = JointModel::new(&pat, &covs, PriorSpec::default(), IntensityLink::MaxNormalized, 30.0, true).unwrap();
        let theta = vec![0.9, 0.7, -0.3, 1.1, 0.2, -0.6];
        let draws = fake_draws(&model, vec![theta.clone()]);
        let r = criteria(&model, &draws).unwrap();
        let ev = model.evaluate(&layout().from_vec(&theta, 30.0).unwrap()).unwrap();
        assert!(r.p_d_joint.abs() < 1e-10 && r.p_d_mark.abs() < 1e-10 && r.p_d_intensity.abs() < 1e-10);
        assert!((r.dic_intensity + 2.0 * ev.ll_intensity).abs() < 1e-10);
        assert!((r.dic_mark + 2.0 * ev.ll_mark).abs() < 1e-10);
        assert!((r.lpml_intensity - ev.ll_intensity).abs() < 1e-10);
        assert!((r.lpml_mark - ev.ll_mark).abs() < 1e-10);
    }

    #[test]
    fn harmonic_mean_examples() {
        let l = log_harmonic_mean(&[1f64.ln(), 3f64.ln()]).exp();
        assert_relative_eq!(l, 1.5, epsilon = 1e-12);
        let cpo = log_harmonic_mean(&[0.5f64.ln(), 0.25f64.ln()]).exp();
        assert_relative_eq!(cpo, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_density_lpml() {
        let (pat, covs) = setup(30);
        let model = JointModel::new(&pat, &covs, PriorSpec::default(), IntensityLink::MaxNormalized, 30.0, true).unwrap();
        let draws = fake_draws(
            &model,
            vec![vec![0.9, 0.7, -0.3, 0.0, 0.0, 0.0], vec![1.1, 0.5, 0.1, 0.0, 0.0, 0.0]],
        );
        assert_relative_eq!(lpml_mark(&model, &draws).unwrap(), 30.0 * 0.5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn additivity_bounds_and_order_invariance() {
        let (pat, covs) = setup(60);
        let model = JointModel::new(&pat, &covs, PriorSpec::default(), IntensityLink::MaxNormalized, 30.0, true).unwrap();
        let mut rng = crate::rng::seeded(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                vec![
                    rng.random_range(0.7..1.3),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let draws = fake_draws(&model, rows);
        let r = criteria(&model, &draws).unwrap();
        assert!((r.dic_joint - (r.dic_intensity + r.dic_mark)).abs() <= 1e-8 * r.dic_joint.abs());
        assert_eq!(r.lpml_joint, r.lpml_intensity + r.lpml_mark);
        assert!(r.p_d_intensity > 0.0);

        let pw = pointwise(&model, &draws).unwrap();
        for i in 0..pat.len() {
            assert!(pw.log_harmonic_lambda[i] <= pw.log_mean_lambda[i] + 1e-12);
            assert!(pw.log_cpo[i] <= pw.log_mean_density[i] + 1e-12);
        }

        let order: Vec<usize> = (0..60).map(|i| (i * 13) % 60).collect();
        let perm = pat.permuted(&order).unwrap();
        let pmodel = JointModel::new(&perm, &covs, PriorSpec::default(), IntensityLink::MaxNormalized, 30.0, true).unwrap();
        let rp = criteria(&pmodel, &draws).unwrap();
        for (a, b) in [
            (r.dic_joint, rp.dic_joint),
            (r.dic_mark, rp.dic_mark),
            (r.lpml_intensity, rp.lpml_intensity),
            (r.lpml_mark, rp.lpml_mark),
        ] {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn sequential_and_parallel_criteria_identical() {
        let (pat, covs) = setup(40);
        let model = JointModel::new(&pat, &covs, PriorSpec::default(), IntensityLink::ZScored, 30.0, true).unwrap();
        let rows: Vec<Vec<f64>> = (0..25).map(|k| vec![1.0 + 0.01 * k as f64, 0.1, -0.1, 0.3, 0.2, 0.1]).collect();
        let draws = fake_draws(&model, rows);
        let a = criteria_with(&model, &draws, Exec::Sequential).unwrap();
        let b = criteria_with(&model, &draws, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verdict_thresholds() {
        let v = verdict("dic_mark", 100.0, 115.0, true);
        assert_eq!(v.preferred, Preferred::Full);
        assert!(v.decisive);
        let v = verdict("lpml_mark", -50.0, -47.0, false);
        assert_eq!(v.preferred, Preferred::Restricted);
        assert!(!v.decisive);
    }
}
