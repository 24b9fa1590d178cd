//! Shot-type bases: per-player kernel intensity surfaces factorized by
//! non-negative matrix factorization.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, DomainGrid, Field, Point};
use crate::intensity::CovariateStack;
use crate::io;
use crate::par::Exec;

pub const DEFAULT_MIN_SHOTS: usize = 50;
pub const DEFAULT_RANK: usize = 10;
pub const MIN_BANDWIDTH: f64 = 1.5;

/// Gaussian kernel intensity at cell centers, rescaled so its Riemann
/// integral equals the number of points. There is no edge correction: mass
/// near the boundary is redistributed proportionally over the whole field.
pub fn kernel_intensity(points: &[Point], grid: DomainGrid, bandwidth: f64) -> Result<Field> {
    kernel_intensity_with(points, grid, bandwidth, Exec::default())
}

pub fn kernel_intensity_with(points: &[Point], grid: DomainGrid, bandwidth: f64, exec: Exec) -> Result<Field> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    for p in points {
        grid.cell_of(*p)?;
    }
    if points.is_empty() {
        return Field::constant(grid, 0.0);
    }
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let norm = inv / std::f64::consts::PI;
    let raw = exec.map(grid.n_cells(), |k| {
        let c = grid.cell_center(grid.unflat(k));
        points
            .iter()
            .map(|p| {
                let d2 = (c.x - p.x).powi(2) + (c.y - p.y).powi(2);
                (-d2 * inv).exp()
            })
            .sum::<f64>()
            * norm
    });
    let integral = exec.sum_slice(&raw) * grid.cell_area();
    if !(integral > 0.0) {
        return Err(Error::NonFinite(format!(
            "kernel mass vanished on the grid (bandwidth {bandwidth})"
        )));
    }
    let c = points.len() as f64 / integral;
    Field::from_values(grid, raw.into_iter().map(|v| v * c).collect())
}

/// Rule-of-thumb bandwidth `1.06·σ̂·N^(−1/6)`, with `σ̂` averaged over the
/// two axes and floored at [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 2 {
        return MIN_BANDWIDTH;
    }
    let sd = |f: fn(&Point) -> f64| {
        let m = points.iter().map(f).sum::<f64>() / n as f64;
        (points.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let sigma = 0.5 * (sd(|p| p.x) + sd(|p| p.y));
    (1.06 * sigma * (n as f64).powf(-1.0 / 6.0)).max(MIN_BANDWIDTH)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix entries", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// `self · other`, rows computed independently.
    pub fn matmul(&self, other: &Matrix, exec: Exec) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let rows = exec.map(self.rows, |i| {
            let mut out = vec![0.0; other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    for (o, &b) in out.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            }
            out
        });
        Matrix {
            rows: self.rows,
            cols: other.cols,
            data: rows.concat(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfResult {
    pub w: Matrix,
    pub h: Matrix,
    /// `‖V − WH‖²_F` at initialization and after every iteration.
    pub objective: Vec<f64>,
}

impl NmfResult {
    pub fn reconstruction(&self) -> Matrix {
        self.w.matmul(&self.h, Exec::Sequential)
    }

    pub fn relative_error(&self, v: &Matrix) -> f64 {
        (self.objective.last().copied().unwrap_or(f64::NAN)).sqrt() / v.frobenius()
    }
}

fn squared_error(v: &Matrix, w: &Matrix, h: &Matrix, exec: Exec) -> f64 {
    exec.sum(v.rows, |i| {
        let wi = w.row(i);
        (0..v.cols)
            .map(|j| {
                let fit: f64 = wi.iter().enumerate().map(|(a, &wa)| wa * h.get(a, j)).sum();
                (v.get(i, j) - fit).powi(2)
            })
            .sum()
    })
}

fn multiplicative_step(x: &mut Matrix, num: &Matrix, den: &Matrix) {
    for ((x, &n), &d) in x.data.iter_mut().zip(&num.data).zip(&den.data) {
        if d > 0.0 {
            *x *= n / d;
        }
    }
}

/// Lee–Seung multiplicative updates for `V ≈ WH` under squared Frobenius
/// loss. Initial factors are uniform on `[0, s)` with `s = √(mean(V)/rank)`,
/// which makes the result equivariant to scaling `V`.
pub fn nmf(v: &Matrix, rank: usize, n_iter: usize, seed: u64) -> Result<NmfResult> {
    nmf_with(v, rank, n_iter, seed, Exec::default())
}

pub fn nmf_with(v: &Matrix, rank: usize, n_iter: usize, seed: u64, exec: Exec) -> Result<NmfResult> {
    if rank == 0 {
        return Err(Error::invalid("NMF rank must be positive"));
    }
    if rank > v.rows.min(v.cols) {
        return Err(Error::invalid(format!(
            "NMF rank {rank} exceeds min dimension {}",
            v.rows.min(v.cols)
        )));
    }
    if let Some(bad) = v.data.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("NMF input has a negative or non-finite entry {bad}")));
    }
    let mean = v.data.iter().sum::<f64>() / v.data.len() as f64;
    let s = (mean / rank as f64).sqrt();
    let mut rng = crate::rng::seeded(seed);
    let mut w = Matrix::new(v.rows, rank, (0..v.rows * rank).map(|_| s * rng.random::<f64>()).collect())?;
    let mut h = Matrix::new(rank, v.cols, (0..rank * v.cols).map(|_| s * rng.random::<f64>()).collect())?;

    let mut objective = Vec::with_capacity(n_iter + 1);
    objective.push(squared_error(v, &w, &h, exec));
    for _ in 0..n_iter {
        let wt = w.transpose();
        let num_h = wt.matmul(v, exec);
        let den_h = wt.matmul(&w, exec).matmul(&h, exec);
        multiplicative_step(&mut h, &num_h, &den_h);

        let ht = h.transpose();
        let num_w = v.matmul(&ht, exec);
        let den_w = w.matmul(&h.matmul(&ht, exec), exec);
        multiplicative_step(&mut w, &num_w, &den_w);

        objective.push(squared_error(v, &w, &h, exec));
    }
    Ok(NmfResult { w, h, objective })
}

/// Per-player kernel intensity surfaces on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrixSet {
    pub players: Vec<String>,
    pub matrices: Vec<Field>,
    pub min_shots: usize,
}

impl IntensityMatrixSet {
    /// Players with fewer than `min_shots` points are skipped. `bandwidth`
    /// of `None` uses [`silverman_bandwidth`] per player.
    pub fn build(
        players: &[(String, Vec<Point>)],
        grid: DomainGrid,
        min_shots: usize,
        bandwidth: Option<f64>,
        exec: Exec,
    ) -> Result<Self> {
        let kept: Vec<&(String, Vec<Point>)> = players.iter().filter(|(_, p)| p.len() >= min_shots).collect();
        let fields = exec.map(kept.len(), |i| {
            let pts = &kept[i].1;
            let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(pts));
            kernel_intensity_with(pts, grid, h, Exec::Sequential)
        });
        Ok(IntensityMatrixSet {
            players: kept.iter().map(|(id, _)| id.clone()).collect(),
            matrices: fields.into_iter().collect::<Result<_>>()?,
            min_shots,
        })
    }

    /// Players × cells matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let cols = self.matrices.first().map(|f| f.values().len()).unwrap_or(0);
        let data: Vec<f64> = self.matrices.iter().flat_map(|f| f.values().iter().copied()).collect();
        Matrix::new(self.matrices.len(), cols, data)
    }
}

/// Unit-sum basis surfaces with per-player weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub rank: usize,
    pub bases: Vec<Field>,
    /// Players × rank, carrying the scale removed from the bases.
    pub weights: Matrix,
    pub players: Vec<String>,
    /// Original NMF component index of each output basis.
    pub ordering: Vec<usize>,
    pub seed: u64,
}

impl BasisSet {
    /// Normalize each row of `H` to unit sum, push the scale into `W`, and
    /// order components by descending total weight.
    pub fn from_nmf(result: &NmfResult, grid: DomainGrid, players: Vec<String>, seed: u64) -> Result<Self> {
        let rank = result.h.rows;
        if result.h.cols != grid.n_cells() {
            return Err(Error::dims("basis cells", grid.n_cells(), result.h.cols));
        }
        let mut rows = Vec::with_capacity(rank);
        let mut w = result.w.clone();
        for a in 0..rank {
            let row = result.h.row(a);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                rows.push(row.iter().map(|v| v / s).collect::<Vec<f64>>());
                for i in 0..w.rows {
                    w.data[i * rank + a] *= s;
                }
            } else {
                rows.push(vec![1.0 / row.len() as f64; row.len()]);
                for i in 0..w.rows {
                    w.data[i * rank + a] = 0.0;
                }
            }
        }
        let totals: Vec<f64> = (0..rank).map(|a| (0..w.rows).map(|i| w.get(i, a)).sum()).collect();
        let mut ordering: Vec<usize> = (0..rank).collect();
        ordering.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]));
        let bases = ordering
            .iter()
            .map(|&a| Field::from_values(grid, rows[a].clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut weights = Matrix::zeros(w.rows, rank);
        for i in 0..w.rows {
            for (k, &a) in ordering.iter().enumerate() {
                weights.data[i * rank + k] = w.get(i, a);
            }
        }
        Ok(BasisSet {
            rank,
            bases,
            weights,
            players,
            ordering,
            seed,
        })
    }

    pub fn labels(&self) -> Vec<String> {
        (1..=self.rank).map(|k| format!("basis{k}")).collect()
    }

    pub fn grid(&self) -> Option<&DomainGrid> {
        self.bases.first().map(|b| b.grid())
    }
}

/// Kernel surfaces → NMF → normalized bases.
pub fn build_basis_set(set: &IntensityMatrixSet, rank: usize, n_iter: usize, seed: u64) -> Result<BasisSet> {
    let grid = *set
        .matrices
        .first()
        .ok_or_else(|| Error::invalid("no players meet the shot threshold"))?
        .grid();
    let v = set.to_matrix()?;
    let res = nmf(&v, rank, n_iter, seed)?;
    BasisSet::from_nmf(&res, grid, set.players.clone(), seed)
}

/// The bases as intensity covariates `basis1..basisR`.
pub fn basis_covariates(basis_set: &BasisSet) -> Result<CovariateStack> {
    let grid = *basis_set.grid().ok_or_else(|| Error::invalid("empty basis set"))?;
    CovariateStack::new(grid, basis_set.bases.clone(), basis_set.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    rank: usize,
    ordering: Vec<usize>,
    normalization: String,
    seed: u64,
    domain: Domain,
    nx: usize,
    ny: usize,
    files: Vec<String>,
    players: Vec<String>,
    weights: Vec<Vec<f64>>,
}

const MANIFEST: &str = "manifest.json";

pub fn save_basis_set(dir: &Path, set: &BasisSet, provenance: Option<&io::Provenance>) -> Result<()> {
    let grid = *set.grid().ok_or_else(|| Error::invalid("empty basis set"))?;
    let files: Vec<String> = set.labels().iter().map(|l| format!("{l}.csv")).collect();
    for (f, b) in files.iter().zip(&set.bases) {
        io::write_grid_csv(&dir.join(f), b, provenance)?;
    }
    let manifest = Manifest {
        rank: set.rank,
        ordering: set.ordering.clone(),
        normalization: "unit_sum".into(),
        seed: set.seed,
        domain: grid.domain,
        nx: grid.nx,
        ny: grid.ny,
        files,
        players: set.players.clone(),
        weights: (0..set.weights.rows).map(|i| set.weights.row(i).to_vec()).collect(),
    };
    match provenance {
        Some(p) => io::write_json(&dir.join(MANIFEST), &io::stamped(&manifest, p)?),
        None => io::write_json(&dir.join(MANIFEST), &manifest),
    }
}

pub fn load_basis_set(dir: &Path) -> Result<BasisSet> {
    let m: Manifest = io::read_json(&dir.join(MANIFEST))?;
    let grid = DomainGrid::new(m.domain, m.nx, m.ny)?;
    let bases = m
        .files
        .iter()
        .map(|f| io::read_grid_csv(&dir.join(f), grid))
        .collect::<Result<Vec<_>>>()?;
    if bases.len() != m.rank {
        return Err(Error::dims("basis files", m.rank, bases.len()));
    }
    let data: Vec<f64> = m.weights.concat();
    Ok(BasisSet {
        rank: m.rank,
        bases,
        weights: Matrix::new(m.weights.len(), m.rank, data)?,
        players: m.players,
        ordering: m.ordering,
        seed: m.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::court::court_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::seeded(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn kernel_single_point_mass_and_linearity() {
        let grid = court_grid().unwrap();
        let one = kernel_intensity(&[Point::new(25.3, 17.6)], grid, 3.0).unwrap();
        assert_relative_eq!(one.riemann_integral(), 1.0, max_relative = 0.02);
        let two = kernel_intensity(&[Point::new(25.3, 17.6); 2], grid, 3.0).unwrap();
        for (a, b) in one.values().iter().zip(two.values()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12);
        }
        assert_eq!(kernel_intensity(&[], grid, 3.0).unwrap().max(), 0.0);
        assert!(kernel_intensity(&[Point::new(1.0, 1.0)], grid, 0.0).is_err());
    }

    #[test]
    fn kernel_flat_limit() {
        let grid = court_grid().unwrap();
        let pts = [Point::new(10.0, 5.0), Point::new(40.0, 30.0), Point::new(25.0, 20.0)];
        let f = kernel_intensity(&pts, grid, 5.0 * 50.0).unwrap();
        assert!(f.max() / f.min() < 1.1);
        assert_relative_eq!(f.riemann_integral(), 3.0, max_relative = 1e-10);
    }

    #[test]
    fn kernel_translation_moves_argmax() {
        let grid = court_grid().unwrap();
        let pts = [Point::new(20.5, 15.5), Point::new(21.5, 16.5), Point::new(20.5, 16.5)];
        let shifted: Vec<Point> = pts.iter().map(|p| Point::new(p.x + 1.0, p.y)).collect();
        let a = kernel_intensity(&pts, grid, 2.0).unwrap().argmax();
        let b = kernel_intensity(&shifted, grid, 2.0).unwrap().argmax();
        assert_eq!((a.ix + 1, a.iy), (b.ix, b.iy));
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(silverman_bandwidth(&[Point::new(1.0, 1.0)]), MIN_BANDWIDTH);
        let pts: Vec<Point> = (0..64).map(|i| Point::new((i % 8) as f64 * 6.0, (i / 8) as f64 * 4.0)).collect();
        let sx = (0..8).map(|i| (i as f64 * 6.0 - 21.0).powi(2)).sum::<f64>() * 8.0 / 63.0;
        let sy = (0..8).map(|i| (i as f64 * 4.0 - 14.0).powi(2)).sum::<f64>() * 8.0 / 63.0;
        let expected = 1.06 * 0.5 * (sx.sqrt() + sy.sqrt()) * 64f64.powf(-1.0 / 6.0);
        assert_relative_eq!(silverman_bandwidth(&pts), expected, max_relative = 1e-12);
    }

    #[test]
    fn nmf_planted_rank3() {
        let w0 = random_matrix(30, 3, 1);
        let h0 = random_matrix(3, 40, 2);
        let v = w0.matmul(&h0, Exec::Sequential);
        let res = nmf(&v, 3, 2000, 5).unwrap();
        assert!(res.relative_error(&v) < 1e-2, "{}", res.relative_error(&v));
        for t in 1..res.objective.len() {
            assert!(res.objective[t] <= res.objective[t - 1] + 1e-10);
        }
        assert!(res.w.data.iter().chain(&res.h.data).all(|x| *x >= 0.0));
        let direct = (v.data.iter().zip(&res.reconstruction().data).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt()
            / v.frobenius();
        assert_relative_eq!(direct, res.relative_error(&v), max_relative = 1e-8);
    }

    #[test]
    fn nmf_rank1_exact() {
        let a = random_matrix(12, 1, 3);
        let b = random_matrix(1, 20, 4);
        let v = a.matmul(&b, Exec::Sequential);
        let res = nmf(&v, 1, 2000, 9).unwrap();
        assert!(res.relative_error(&v) < 1e-6);
    }

    #[test]
    fn nmf_errors() {
        let v = random_matrix(4, 5, 1);
        assert!(nmf(&v, 0, 10, 0).is_err());
        assert!(nmf(&v, 5, 10, 0).is_err());
        let mut neg = v.clone();
        neg.data[3] = -1.0;
        assert!(nmf(&neg, 2, 10, 0).is_err());
    }

    #[test]
    fn nmf_deterministic_and_exec_independent() {
        let v = random_matrix(9, 14, 8);
        let a = nmf_with(&v, 2, 50, 3, Exec::Sequential).unwrap();
        let b = nmf_with(&v, 2, 50, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bases_unit_sum_sorted_and_scale_stable() {
        let grid = DomainGrid::new(Domain::unit_square(), 6, 5).unwrap();
        let v = random_matrix(8, 30, 11);
        let set = BasisSet::from_nmf(&nmf(&v, 3, 200, 1).unwrap(), grid, vec!["p".into(); 8], 1).unwrap();
        for b in &set.bases {
            assert_relative_eq!(b.sum(), 1.0, max_relative = 1e-12);
            assert!(b.min() >= 0.0);
        }
        let totals: Vec<f64> = (0..3).map(|a| (0..8).map(|i| set.weights.get(i, a)).sum()).collect();
        assert!(totals.windows(2).all(|w| w[0] >= w[1]));

        let c = 37.5;
        let scaled = Matrix::new(8, 30, v.data.iter().map(|x| x * c).collect()).unwrap();
        let set2 = BasisSet::from_nmf(&nmf(&scaled, 3, 200, 1).unwrap(), grid, vec!["p".into(); 8], 1).unwrap();
        for (a, b) in set.bases.iter().zip(&set2.bases) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        for (x, y) in set.weights.data.iter().zip(&set2.weights.data) {
            assert_relative_eq!(x * c, *y, max_relative = 1e-6);
        }
        let covs = basis_covariates(&set).unwrap();
        assert_eq!(covs.names(), &["basis1", "basis2", "basis3"]);
    }

    #[test]
    fn permuted_components_give_same_bases() {
        let grid = DomainGrid::new(Domain::unit_square(), 4, 5).unwrap();
        let res = nmf(&random_matrix(6, 20, 2), 3, 100, 4).unwrap();
        let perm = [2usize, 0, 1];
        let mut h = Matrix::zeros(3, 20);
        let mut w = Matrix::zeros(6, 3);
        for (k, &a) in perm.iter().enumerate() {
            h.data[k * 20..(k + 1) * 20].copy_from_slice(res.h.row(a));
            for i in 0..6 {
                w.data[i * 3 + k] = res.w.get(i, a);
            }
        }
        let permuted = NmfResult { w, h, objective: vec![] };
        let a = BasisSet::from_nmf(&res, grid, vec![], 0).unwrap();
        let b = BasisSet::from_nmf(&permuted, grid, vec![], 0).unwrap();
        assert_eq!(a.bases, b.bases);
        for (k, &o) in b.ordering.iter().enumerate() {
            assert_eq!(perm[o], a.ordering[k]);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = DomainGrid::new(Domain::unit_square(), 4, 3).unwrap();
        let set = BasisSet::from_nmf(&nmf(&random_matrix(5, 12, 6), 2, 50, 2).unwrap(), grid, (0..5).map(|i| format!("p{i}")).collect(), 2).unwrap();
        save_basis_set(dir.path(), &set, None).unwrap();
        let back = load_basis_set(dir.path()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn matrix_set_filters_small_players() {
        let grid = court_grid().unwrap();
        let players = vec![
            ("a".to_string(), vec![Point::new(25.0, 10.0); 60]),
            ("b".to_string(), vec![Point::new(5.0, 5.0); 10]),
        ];
        let set = IntensityMatrixSet::build(&players, grid, DEFAULT_MIN_SHOTS, None, Exec::default()).unwrap();
        assert_eq!(set.players, vec!["a".to_string()]);
        assert_relative_eq!(set.matrices[0].riemann_integral(), 60.0, max_relative = 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn nmf_factors_nonnegative(seed in 0u64..1000, rank in 1usize..4) {
            let v = random_matrix(6, 7, seed);
            let res = nmf(&v, rank, 30, seed).unwrap();
            prop_assert!(res.w.data.iter().chain(&res.h.data).all(|x| *x >= 0.0));
            for t in 1..res.objective.len() {
                prop_assert!(res.objective[t] <= res.objective[t - 1] * (1.0 + 1e-12) + 1e-10);
            }
        }
    }
}
