//! Rectangular domains, their regular partitions, and piecewise-constant
//! fields with midpoint-rule quadrature.
//!
//! Cells are indexed `(ix, iy)` and flattened row-major as `ix * ny + iy`.
//! A point belongs to the half-open cell `[x_k, x_{k+1}) × [y_l, y_{l+1})`;
//! points on the upper boundary of the domain fall into the last cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::invalid(format!(
                "degenerate domain [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Domain {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// The square `[-1, 1]²` used by the simulation designs.
    pub fn unit_square() -> Self {
        Domain {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub ix: usize,
    pub iy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainGrid {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
}

impl DomainGrid {
    pub fn new(domain: Domain, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("grid needs at least one cell per axis"));
        }
        Ok(DomainGrid { domain, nx, ny })
    }

    pub fn dx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.domain.area() / (self.nx * self.ny) as f64
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn flat(&self, cell: CellIndex) -> usize {
        cell.ix * self.ny + cell.iy
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> CellIndex {
        CellIndex {
            ix: k / self.ny,
            iy: k % self.ny,
        }
    }

    pub fn cell_center(&self, cell: CellIndex) -> Point {
        Point {
            x: self.domain.x_min + (cell.ix as f64 + 0.5) * self.dx(),
            y: self.domain.y_min + (cell.iy as f64 + 0.5) * self.dy(),
        }
    }

    /// Cell centers in flat (row-major) order.
    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.n_cells()).map(move |k| self.cell_center(self.unflat(k)))
    }

    pub fn cell_of(&self, p: Point) -> Result<CellIndex> {
        if !p.x.is_finite() || !p.y.is_finite() || !self.domain.contains(p) {
            return Err(Error::OutOfDomain { x: p.x, y: p.y });
        }
        let ix = axis_cell(p.x, self.domain.x_min, self.dx(), self.nx);
        let iy = axis_cell(p.y, self.domain.y_min, self.dy(), self.ny);
        Ok(CellIndex { ix, iy })
    }

    pub fn flat_cell_of(&self, p: Point) -> Result<usize> {
        self.cell_of(p).map(|c| self.flat(c))
    }
}

#[inline]
fn axis_cell(v: f64, min: f64, h: f64, n: usize) -> usize {
    let k = ((v - min) / h).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

/// Locate the grid cell containing `point`.
pub fn cell_of(point: Point, grid: &DomainGrid) -> Result<CellIndex> {
    grid.cell_of(point)
}

/// A piecewise-constant field: one finite value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: DomainGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: DomainGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::dims("field values", grid.n_cells(), values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at cell {k}")));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: DomainGrid, c: f64) -> Result<Self> {
        Field::from_values(grid, vec![c; grid.n_cells()])
    }

    /// Evaluate `f` at every cell center.
    pub fn from_fn(grid: DomainGrid, f: impl Fn(Point) -> f64) -> Result<Self> {
        Field::from_values(grid, grid.centers().map(f).collect())
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, cell: CellIndex) -> f64 {
        self.values[self.grid.flat(cell)]
    }

    pub fn value_at(&self, p: Point) -> Result<f64> {
        Ok(self.values[self.grid.flat_cell_of(p)?])
    }

    pub fn riemann_integral(&self) -> f64 {
        self.riemann_integral_with(Exec::default())
    }

    pub fn riemann_integral_with(&self, exec: Exec) -> f64 {
        self.grid.cell_area() * exec.sum_slice(&self.values)
    }

    pub fn sum(&self) -> f64 {
        Exec::default().sum_slice(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> CellIndex {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        self.grid.unflat(best)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Field> {
        self.map(|v| c * v)
    }

    /// Cell-wise linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::invalid("fields live on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        Field::from_values(self.grid, values)
    }
}

pub fn field_value_at(field: &Field, point: Point) -> Result<f64> {
    field.value_at(point)
}

pub fn riemann_integral(field: &Field) -> f64 {
    field.riemann_integral()
}
