//! Log-linear Poisson intensity `λ(s) = scale · λ0 · exp(X(s)ᵀβ)` over a
//! covariate stack, its grid log-likelihood, and exact simulation by thinning.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainGrid, Field, Point};
use crate::rng::{seeded, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    pub lambda0: f64,
    pub beta: Vec<f64>,
    /// Known multiplier on the baseline; not estimated.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl IntensityParams {
    pub fn new(lambda0: f64, beta: Vec<f64>) -> Self {
        IntensityParams {
            lambda0,
            beta,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.beta.len() != p {
            return Err(Error::dims("beta", p, self.beta.len()));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::invalid(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {}", self.scale)));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("beta".into()));
        }
        Ok(())
    }
}

/// Spatial covariates `X(s)`: `p` fields sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateStack {
    grid: DomainGrid,
    fields: Vec<Field>,
    names: Vec<String>,
}

impl CovariateStack {
    pub fn new(grid: DomainGrid, fields: Vec<Field>, names: Vec<String>) -> Result<Self> {
        if fields.len() != names.len() {
            return Err(Error::dims("covariate names", fields.len(), names.len()));
        }
        if fields.iter().any(|f| *f.grid() != grid) {
            return Err(Error::invalid("all covariate fields must share one grid"));
        }
        Ok(CovariateStack { grid, fields, names })
    }

    /// No covariates: a homogeneous process.
    pub fn homogeneous(grid: DomainGrid) -> Self {
        CovariateStack {
            grid,
            fields: Vec::new(),
            names: Vec::new(),
        }
    }

    /// Cell-center coordinates as covariates, named `x` and `y`.
    pub fn coordinates(grid: DomainGrid) -> Self {
        let fx = Field::from_fn(grid, |p| p.x).expect("finite coordinates");
        let fy = Field::from_fn(grid, |p| p.y).expect("finite coordinates");
        CovariateStack {
            grid,
            fields: vec![fx, fy],
            names: vec!["x".into(), "y".into()],
        }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Keep the covariates at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut fields = Vec::with_capacity(indices.len());
        let mut names = Vec::with_capacity(indices.len());
        for &j in indices {
            let f = self
                .fields
                .get(j)
                .ok_or_else(|| Error::invalid(format!("covariate index {j} out of range")))?;
            fields.push(f.clone());
            names.push(self.names[j].clone());
        }
        CovariateStack::new(self.grid, fields, names)
    }

    /// Covariate vector of the flat cell `k`.
    pub fn row_at_cell(&self, k: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f.values()[k]).collect()
    }

    /// Dense `n_cells × p` row-major design matrix.
    pub fn cell_matrix(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let p = self.p();
        let mut m = vec![0.0; n * p];
        for (j, f) in self.fields.iter().enumerate() {
            for (k, v) in f.values().iter().enumerate() {
                m[k * p + j] = *v;
            }
        }
        m
    }
}

#[inline]
pub(crate) fn linear_predictor(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(x, b)| x * b).sum()
}

#[inline]
pub(crate) fn intensity_from_eta(params: &IntensityParams, eta: f64) -> f64 {
    params.scale * params.lambda0 * eta.exp()
}

fn check(params: &IntensityParams, covs: &CovariateStack) -> Result<()> {
    params.validate(covs.p())
}

pub fn intensity_at(point: Point, params: &IntensityParams, covs: &CovariateStack) -> Result<f64> {
    check(params, covs)?;
    let k = covs.grid.flat_cell_of(point)?;
    Ok(intensity_at_cell(k, params, covs))
}

#[inline]
fn intensity_at_cell(k: usize, params: &IntensityParams, covs: &CovariateStack) -> f64 {
    let eta: f64 = covs
        .fields
        .iter()
        .zip(&params.beta)
        .map(|(f, b)| f.values()[k] * b)
        .sum();
    intensity_from_eta(params, eta)
}

pub fn intensity_field(params: &IntensityParams, covs: &CovariateStack) -> Result<Field> {
    check(params, covs)?;
    let values = (0..covs.grid.n_cells())
        .map(|k| intensity_at_cell(k, params, covs))
        .collect();
    Field::from_values(covs.grid, values)
}

/// `Σ log λ(sᵢ) − ∫ λ`, with the integral on the covariate grid.
pub fn log_lik_intensity(points: &[Point], params: &IntensityParams, covs: &CovariateStack) -> Result<f64> {
    let field = intensity_field(params, covs)?;
    let lambdas = points_intensity(points, &field)?;
    Ok(log_lik_from_parts(&lambdas, &field))
}

pub(crate) fn points_intensity(points: &[Point], field: &Field) -> Result<Vec<f64>> {
    points.iter().map(|p| field.value_at(*p)).collect()
}

pub(crate) fn log_lik_from_parts(lambdas: &[f64], field: &Field) -> f64 {
    lambdas.iter().map(|l| l.ln()).sum::<f64>() - field.riemann_integral()
}

/// Simulate the process with the given parameters; deterministic in `seed`.
pub fn simulate_nhpp(params: &IntensityParams, covs: &CovariateStack, seed: u64) -> Result<Vec<Point>> {
    let field = intensity_field(params, covs)?;
    simulate_from_field(&field, &mut seeded(seed))
}

/// Lewis–Shedler thinning against the piecewise-constant `field`.
///
/// The dominating rate is the maximum cell value, which bounds the field
/// exactly everywhere in the domain.
pub fn simulate_from_field(field: &Field, rng: &mut SimRng) -> Result<Vec<Point>> {
    let lambda_max = field.max();
    if !lambda_max.is_finite() {
        return Err(Error::NonFinite("intensity field maximum".into()));
    }
    if field.min() < 0.0 {
        return Err(Error::invalid("intensity field has negative cells"));
    }
    if lambda_max <= 0.0 {
        return Ok(Vec::new());
    }
    let domain = field.grid().domain;
    let mean = lambda_max * domain.area();
    let n_hom = Poisson::new(mean)
        .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::with_capacity(n_hom);
    for _ in 0..n_hom {
        let p = Point::new(
            domain.x_min + rng.random::<f64>() * domain.width(),
            domain.y_min + rng.random::<f64>() * domain.height(),
        );
        let keep = rng.random::<f64>() * lambda_max < field.value_at(p)?;
        if keep {
            points.push(p);
        }
    }
    Ok(points)
}
