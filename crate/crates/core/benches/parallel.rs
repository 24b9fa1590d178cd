use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use markpp::basis::{kernel_intensity_with, nmf_with, Matrix};
use markpp::court::court_grid;
use markpp::grid::{Domain, DomainGrid, Field, Point};
use markpp::joint::{JointModel, PriorSpec};
use markpp::mcmc::{run_chain, ChainConfig};
use markpp::selection::criteria_with;
use markpp::simstudy::{run_design_with, SimDesign};
use markpp::{Exec, IntensityLink};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn riemann(c: &mut Criterion) {
    let grid = DomainGrid::new(Domain::unit_square(), 400, 400).unwrap();
    let f = Field::from_fn(grid, |p| (2.0 * p.x + p.y).exp()).unwrap();
    let mut g = c.benchmark_group("riemann_integral");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| f.riemann_integral_with(exec)));
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let grid = court_grid().unwrap();
    let mut rng = markpp::rng::seeded(1);
    let pts: Vec<Point> = (0..500)
        .map(|_| Point::new(rng.random_range(0.0..50.0), rng.random_range(0.0..35.0)))
        .collect();
    let mut g = c.benchmark_group("kernel_intensity");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| kernel_intensity_with(&pts, grid, 2.0, exec).unwrap())
        });
    }
    g.finish();
}

fn factorization(c: &mut Criterion) {
    let mut rng = markpp::rng::seeded(2);
    let v = Matrix::new(60, 1750, (0..60 * 1750).map(|_| rng.random::<f64>()).collect()).unwrap();
    let mut g = c.benchmark_group("nmf_50_iterations");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| nmf_with(&v, 10, 50, 3, exec).unwrap()));
    }
    g.finish();
}

fn model_criteria(c: &mut Criterion) {
    let design = SimDesign { grid_n: 60, ..SimDesign::default() };
    let covs = design.covariates().unwrap();
    let pattern = design.simulate(&covs, &mut markpp::rng::seeded(3)).unwrap();
    let model = JointModel::new(&pattern, &covs, PriorSpec::default(), IntensityLink::MaxNormalized, 100.0, true).unwrap();
    let draws = run_chain(&model, &ChainConfig::new(1500, 500, 1, 4)).unwrap();
    let mut g = c.benchmark_group("dic_lpml");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| criteria_with(&model, &draws, exec).unwrap()));
    }
    g.finish();
}

fn small_simstudy(c: &mut Criterion) {
    let design = SimDesign {
        n_replicates: 4,
        n_iter: 600,
        n_burnin: 300,
        grid_n: 40,
        ..SimDesign::default()
    };
    let mut g = c.benchmark_group("simstudy_4_replicates");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_design_with(&design, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, riemann, kernel, factorization, model_criteria, small_simstudy);
criterion_main!(benches);
