//! Parameter-recovery simulation studies: simulate marked patterns from a
//! known model, refit them, and tabulate bias, spread and interval coverage.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, DomainGrid};
use crate::intensity::{self, CovariateStack, IntensityParams};
use crate::joint::{JointModel, ModelParams, ParamLayout, PriorSpec};
use crate::mark::{self, IntensityLink, MarkCovariates, MarkParams, MarkedPattern};
use crate::mcmc::{run_chain, summarize, ChainConfig, IntervalKind};
use crate::par::Exec;
use crate::rng::{derive_seed, seeded, SimRng};

/// Mark-rate band the design is meant to produce.
pub const MARK_RATE_BAND: (f64, f64) = (0.55, 0.78);
/// Looser band for the design-level audit warning.
pub const MARK_RATE_AUDIT: (f64, f64) = (0.45, 0.85);
/// Acceptable range of mean posterior SD over empirical SD.
pub const SD_RATIO_RANGE: (f64, f64) = (0.7, 1.4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Z2Kind {
    Normal,
    Bernoulli,
}

impl std::str::FromStr for Z2Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Z2Kind::Normal),
            "bernoulli" => Ok(Z2Kind::Bernoulli),
            _ => Err(Error::invalid(format!("unknown Z2 kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub lambda0: f64,
    /// Coefficients on the x and y coordinates; empty gives a homogeneous process.
    pub beta: Vec<f64>,
    pub xi: f64,
    /// Whether ξ is part of the simulated and fitted model.
    pub xi_enabled: bool,
    /// Intercept, then Z1, then Z2 (prefixes allowed).
    pub alpha: Vec<f64>,
    pub z2_kind: Z2Kind,
    pub n_replicates: usize,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub grid_n: usize,
    pub scale: f64,
    pub link: IntensityLink,
    pub prior: PriorSpec,
    pub master_seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            lambda0: 1.0,
            beta: vec![2.0, 1.0],
            xi: 0.5,
            xi_enabled: true,
            alpha: vec![0.5, 0.8, 1.0],
            z2_kind: Z2Kind::Normal,
            n_replicates: 50,
            n_iter: 8000,
            n_burnin: 4000,
            thin: 1,
            grid_n: 100,
            scale: 100.0,
            link: IntensityLink::default(),
            prior: PriorSpec::default(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 50 replicates, 8000 iterations with 4000 burn-in.
    Desk,
    /// 200 replicates, 20000 iterations with 10000 burn-in.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::invalid(format!("unknown preset {s:?}"))),
        }
    }
}

impl SimDesign {
    pub fn cell(lambda0: f64, alpha1: f64, z2_kind: Z2Kind, preset: Preset) -> Self {
        let mut d = SimDesign {
            lambda0,
            alpha: vec![0.5, alpha1, 1.0],
            z2_kind,
            ..SimDesign::default()
        };
        d.apply_preset(preset);
        d
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (reps, iter, burn) = match preset {
            Preset::Desk => (50, 8000, 4000),
            Preset::Full => (200, 20000, 10000),
        };
        self.n_replicates = reps;
        self.n_iter = iter;
        self.n_burnin = burn;
    }

    /// λ0 ∈ {0.5, 1} × α1 ∈ {0.8, 1, 2} × Z2 ∈ {normal, Bernoulli}.
    pub fn paper_grid(preset: Preset) -> Vec<SimDesign> {
        let mut out = Vec::new();
        for z2 in [Z2Kind::Normal, Z2Kind::Bernoulli] {
            for l0 in [0.5, 1.0] {
                for a1 in [0.8, 1.0, 2.0] {
                    out.push(SimDesign::cell(l0, a1, z2, preset));
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let a: Vec<String> = self.alpha.iter().map(|v| v.to_string()).collect();
        format!(
            "lambda0={} alpha=({}) z2={} xi={}",
            self.lambda0,
            a.join(","),
            match self.z2_kind {
                Z2Kind::Normal => "normal",
                Z2Kind::Bernoulli => "bernoulli",
            },
            if self.xi_enabled { self.xi.to_string() } else { "off".into() }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) || !(self.scale > 0.0) {
            return Err(Error::invalid("lambda0 and scale must be positive"));
        }
        if !matches!(self.beta.len(), 0 | 2) {
            return Err(Error::invalid("beta must have 0 or 2 entries"));
        }
        if self.alpha.is_empty() || self.alpha.len() > 3 {
            return Err(Error::invalid("alpha must have 1 to 3 entries"));
        }
        if self.grid_n == 0 {
            return Err(Error::invalid("grid_n must be positive"));
        }
        self.prior.validate()?;
        self.chain_config(0).validate()
    }

    pub fn covariates(&self) -> Result<CovariateStack> {
        let grid = DomainGrid::new(Domain::unit_square(), self.grid_n, self.grid_n)?;
        Ok(if self.beta.is_empty() {
            CovariateStack::homogeneous(grid)
        } else {
            CovariateStack::coordinates(grid)
        })
    }

    pub fn truth(&self) -> ModelParams {
        ModelParams::new(
            IntensityParams::new(self.lambda0, self.beta.clone()).with_scale(self.scale),
            MarkParams::new(self.xi, self.alpha.clone()),
            self.xi_enabled,
        )
    }

    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig::new(self.n_iter, self.n_burnin, self.thin, seed)
    }

    fn alpha_labels(&self) -> Vec<String> {
        ["intercept", "z1", "z2"][..self.alpha.len()].iter().map(|s| s.to_string()).collect()
    }

    /// One simulated marked pattern.
    pub fn simulate(&self, covs: &CovariateStack, rng: &mut SimRng) -> Result<MarkedPattern> {
        let truth = self.truth();
        let field = intensity::intensity_field(&truth.intensity, covs)?;
        let locations = intensity::simulate_from_field(&field, rng)?;
        let lambdas = intensity::points_intensity(&locations, &field)?;
        let rows: Vec<Vec<f64>> = (0..locations.len())
            .map(|_| {
                let mut row = vec![1.0];
                let z1: f64 = rng.sample(StandardNormal);
                row.push(z1);
                row.push(match self.z2_kind {
                    Z2Kind::Normal => rng.sample(StandardNormal),
                    Z2Kind::Bernoulli => f64::from(u8::from(rng.random::<f64>() < 0.5)),
                });
                row.truncate(self.alpha.len());
                row
            })
            .collect();
        let link = self.link.calibrate(&field)?;
        let marks = mark::simulate_marks_with(&lambdas, &rows, &truth.mark_effective(), &link, rng)?;
        let z = MarkCovariates::from_rows(&rows, self.alpha_labels())?;
        MarkedPattern::new(locations, marks, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub n_points: usize,
    pub mark_rate: f64,
    pub estimates: Vec<f64>,
    pub posterior_sd: Vec<f64>,
    pub covered: Vec<bool>,
    pub error: Option<String>,
}

/// Simulate and fit replicate `index` of `design`.
pub fn run_replicate(design: &SimDesign, covs: &CovariateStack, index: usize) -> ReplicateResult {
    let seed = derive_seed(design.master_seed, index as u64);
    let mut out = ReplicateResult {
        index,
        seed,
        n_points: 0,
        mark_rate: f64::NAN,
        estimates: vec![],
        posterior_sd: vec![],
        covered: vec![],
        error: None,
    };
    let res = (|| -> Result<()> {
        let mut rng = seeded(seed);
        let pattern = design.simulate(covs, &mut rng)?;
        out.n_points = pattern.len();
        out.mark_rate = pattern.mark_rate();
        let model = JointModel::new(&pattern, covs, design.prior, design.link, design.scale, design.xi_enabled)?;
        let draws = run_chain(&model, &design.chain_config(derive_seed(seed, 1)))?;
        let summary = summarize(&draws, IntervalKind::Quantile95)?;
        let truth = model.layout().to_vec(&design.truth());
        for (p, t) in summary.params.iter().zip(truth) {
            out.estimates.push(p.mean);
            out.posterior_sd.push(p.sd);
            out.covered.push(p.covers(t));
        }
        Ok(())
    })();
    if let Err(e) = res {
        out.error = Some(e.to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecovery {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub sd_hat: f64,
    pub cr: f64,
    /// `sd_hat / sd` falls outside [`SD_RATIO_RANGE`].
    pub sd_ratio_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub design: SimDesign,
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub mean_mark_rate: f64,
    /// Fraction of replicates whose mark rate lies in [`MARK_RATE_BAND`].
    pub mark_rate_in_band: f64,
    pub mark_rate_warning: bool,
    pub params: Vec<ParamRecovery>,
    pub replicates: Vec<ReplicateResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub cells: Vec<CellReport>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregate replicate results. Results are ordered by seed first, so the
/// aggregate does not depend on the order replicates were run in.
pub fn aggregate(design: &SimDesign, layout: &ParamLayout, replicates: Vec<ReplicateResult>) -> CellReport {
    let mut replicates = replicates;
    replicates.sort_by_key(|r| (r.seed, r.index));
    let ok: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.error.is_none()).collect();
    let n_failed = replicates.len() - ok.len();
    if n_failed > 0 {
        log::warn!("{}: {n_failed} replicate fits failed and were excluded", design.label());
    }
    let labels = layout.labels();
    let truth = layout.to_vec(&design.truth());
    let mut params = Vec::new();
    if !ok.is_empty() {
        for (j, name) in labels.iter().enumerate() {
            let est: Vec<f64> = ok.iter().map(|r| r.estimates[j]).collect();
            let m = mean(&est);
            let sd = if est.len() > 1 {
                (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let sd_hat = mean(&ok.iter().map(|r| r.posterior_sd[j]).collect::<Vec<_>>());
            let cr = ok.iter().filter(|r| r.covered[j]).count() as f64 / ok.len() as f64;
            let ratio = sd_hat / sd;
            params.push(ParamRecovery {
                name: name.clone(),
                truth: truth[j],
                bias: m - truth[j],
                sd,
                sd_hat,
                cr,
                sd_ratio_flag: !(ratio >= SD_RATIO_RANGE.0 && ratio <= SD_RATIO_RANGE.1),
            });
        }
    }
    let rates: Vec<f64> = ok.iter().map(|r| r.mark_rate).filter(|r| r.is_finite()).collect();
    let mean_mark_rate = if rates.is_empty() { f64::NAN } else { mean(&rates) };
    let in_band = if rates.is_empty() {
        f64::NAN
    } else {
        rates.iter().filter(|&&r| r > MARK_RATE_BAND.0 && r < MARK_RATE_BAND.1).count() as f64 / rates.len() as f64
    };
    let mark_rate_warning = !rates.is_empty() && !(mean_mark_rate > MARK_RATE_AUDIT.0 && mean_mark_rate < MARK_RATE_AUDIT.1);
    if mark_rate_warning {
        log::warn!("{}: mean mark rate {mean_mark_rate:.3} outside the audit band", design.label());
    }
    CellReport {
        label: design.label(),
        design: design.clone(),
        n_succeeded: ok.len(),
        n_failed,
        mean_mark_rate,
        mark_rate_in_band: in_band,
        mark_rate_warning,
        params,
        replicates,
    }
}

fn layout(design: &SimDesign, covs: &CovariateStack) -> ParamLayout {
    ParamLayout {
        beta_names: covs.names().to_vec(),
        alpha_names: design.alpha_labels(),
        xi_enabled: design.xi_enabled,
    }
}

/// Run every replicate of one design cell, in parallel across replicates.
pub fn run_design(design: &SimDesign) -> Result<RecoveryReport> {
    run_design_with(design, Exec::default())
}

pub fn run_design_with(design: &SimDesign, exec: Exec) -> Result<RecoveryReport> {
    Ok(RecoveryReport {
        cells: vec![run_cell(design, exec)?],
    })
}

pub fn run_designs(designs: &[SimDesign], exec: Exec) -> Result<RecoveryReport> {
    Ok(RecoveryReport {
        cells: designs.iter().map(|d| run_cell(d, exec)).collect::<Result<_>>()?,
    })
}

fn run_cell(design: &SimDesign, exec: Exec) -> Result<CellReport> {
    design.validate()?;
    let covs = design.covariates()?;
    let results = exec.map(design.n_replicates, |r| run_replicate(design, &covs, r));
    Ok(aggregate(design, &layout(design, &covs), results))
}

/// Aligned text tables, one block per design cell, columns Bias, SD, ŜD, CR.
pub fn format_report(report: &RecoveryReport) -> String {
    let mut out = String::new();
    for cell in &report.cells {
        out.push_str(&format!(
            "{}  (replicates {}, failed {}, mean mark rate {:.3})\n",
            cell.label, cell.n_succeeded, cell.n_failed, cell.mean_mark_rate
        ));
        out.push_str(&format!(
            "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "parameter", "truth", "Bias", "SD", "SD-hat", "CR"
        ));
        for p in &cell.params {
            out.push_str(&format!(
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}{}\n",
                p.name,
                p.truth,
                p.bias,
                p.sd,
                p.sd_hat,
                p.cr,
                if p.sd_ratio_flag { "  *" } else { "" }
            ));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub design: String,
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub sd_hat: f64,
    pub cr: f64,
}

pub fn report_csv(report: &RecoveryReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["design", "parameter", "truth", "bias", "sd", "sd_hat", "cr"])?;
    for cell in &report.cells {
        for p in &cell.params {
            w.write_record([
                cell.label.clone(),
                p.name.clone(),
                format!("{:.4}", p.truth),
                format!("{:.4}", p.bias),
                format!("{:.4}", p.sd),
                format!("{:.4}", p.sd_hat),
                format!("{:.4}", p.cr),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimDesign {
        SimDesign {
            n_replicates: 3,
            n_iter: 400,
            n_burnin: 200,
            grid_n: 20,
            master_seed: 11,
            ..SimDesign::default()
        }
    }

    #[test]
    fn zero_replicates_empty() {
        let d = SimDesign { n_replicates: 0, ..tiny() };
        let r = run_design(&d).unwrap();
        assert!(r.cells[0].params.is_empty());
        assert_eq!(r.cells[0].n_succeeded, 0);
    }

    #[test]
    fn presets_and_grid() {
        let g = SimDesign::paper_grid(Preset::Desk);
        assert_eq!(g.len(), 12);
        assert!(g.iter().all(|d| d.n_replicates == 50 && d.n_iter == 8000 && d.n_burnin == 4000));
        let f = SimDesign::cell(0.5, 2.0, Z2Kind::Bernoulli, Preset::Full);
        assert_eq!((f.n_replicates, f.n_iter, f.n_burnin), (200, 20000, 10000));
        assert_eq!(f.alpha, vec![0.5, 2.0, 1.0]);
    }

    #[test]
    fn report_shape_and_determinism() {
        let d = tiny();
        let a = run_design(&d).unwrap();
        let b = run_design_with(&d, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let cell = &a.cells[0];
        let names: Vec<&str> = cell.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["lambda0", "beta_x", "beta_y", "xi", "alpha_intercept", "alpha_z1", "alpha_z2"]);
        assert!(cell.params.iter().all(|p| (0.0..=1.0).contains(&p.cr)));
        assert_eq!(cell.params[0].truth, 1.0);
        assert_eq!(cell.params[6].truth, 1.0);
    }

    #[test]
    fn aggregate_ignores_replicate_order() {
        let d = tiny();
        let covs = d.covariates().unwrap();
        let labels = layout(&d, &covs);
        let reps: Vec<ReplicateResult> = (0..3).map(|i| run_replicate(&d, &covs, i)).collect();
        let mut rev = reps.clone();
        rev.reverse();
        assert_eq!(aggregate(&d, &labels, reps), aggregate(&d, &labels, rev));
    }

    #[test]
    fn failed_replicates_excluded() {
        let d = tiny();
        let covs = d.covariates().unwrap();
        let labels = layout(&d, &covs);
        let mut reps: Vec<ReplicateResult> = (0..2).map(|i| run_replicate(&d, &covs, i)).collect();
        reps[1].error = Some("boom".into());
        let cell = aggregate(&d, &labels, reps.clone());
        assert_eq!((cell.n_succeeded, cell.n_failed), (1, 1));
        assert_eq!(cell.params[0].bias, reps[0].estimates[0] - 1.0);
    }

    #[test]
    fn text_and_csv_round_trip() {
        let r = run_design(&SimDesign { n_replicates: 2, ..tiny() }).unwrap();
        let text = format_report(&r);
        assert_eq!(text.matches("Bias").count(), 1);
        let header = text.lines().nth(1).unwrap();
        let order: Vec<usize> = ["Bias", "SD", "SD-hat", "CR"].iter().map(|h| header.find(h).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));

        let csv = report_csv(&r).unwrap();
        let rows = parse_report_csv(&csv).unwrap();
        assert_eq!(rows.len(), r.cells[0].params.len());
        for (row, p) in rows.iter().zip(&r.cells[0].params) {
            assert_eq!(row.parameter, p.name);
            assert!((row.bias - p.bias).abs() <= 5e-5 + 1e-12);
            assert!((row.cr - p.cr).abs() <= 5e-5 + 1e-12);
        }
        assert_eq!(parse_report_csv(&report_csv(&RecoveryReport { cells: vec![] }).unwrap()).unwrap(), vec![]);
    }

    #[test]
    fn simulated_mark_rate_plausible() {
        let d = SimDesign { grid_n: 50, ..SimDesign::default() };
        let covs = d.covariates().unwrap();
        let mut rng = seeded(4);
        let p = d.simulate(&covs, &mut rng).unwrap();
        assert!(p.len() > 600 && p.len() < 1100, "{}", p.len());
        assert!(p.mark_rate() > 0.5 && p.mark_rate() < 0.8, "{}", p.mark_rate());
    }
}
