use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fosre::config::hz;
use fosre::crone::{crone_place, realize_crone, CroneConfig};
use fosre::elements::{make_fosre, make_sosre};
use fosre::hosidf::describing_functions;
use fosre::linalg::expm;
use fosre::sim::{simulate_reset, SimConfig};
use nalgebra::DMatrix;

fn bench_expm(c: &mut Criterion) {
    let crone = CroneConfig::covering(-0.4, hz(0.8), hz(1500.0)).unwrap();
    let rs = make_fosre(hz(3.18), 1.0, 0.2, &crone).unwrap();
    let a: DMatrix<f64> = rs.base_linear().a() * 1e-4;
    c.bench_function(&format!("expm {}x{}", a.nrows(), a.ncols()), |b| b.iter(|| expm(black_box(&a))));
}

fn bench_crone(c: &mut Criterion) {
    let cfg = CroneConfig::new(-0.4, 1.0, 1e4, 7).unwrap();
    c.bench_function("crone place and realize", |b| {
        b.iter(|| realize_crone(&crone_place(black_box(&cfg)).unwrap()).unwrap())
    });
}

fn bench_describing_function(c: &mut Criterion) {
    let crone = CroneConfig::covering(-0.1, hz(0.8), hz(1500.0)).unwrap();
    let fosre = make_fosre(hz(3.18), 1.0, 0.2, &crone).unwrap();
    let sosre = make_sosre(hz(6.5), 1.0, 0.2).unwrap();
    let orders = [1, 3, 5, 7, 9];
    c.bench_function("hosidf fosre", |b| {
        b.iter(|| describing_functions(&fosre, black_box(hz(5.0)), &orders).unwrap())
    });
    c.bench_function("hosidf sosre", |b| {
        b.iter(|| describing_functions(&sosre, black_box(hz(5.0)), &orders).unwrap())
    });
}

fn bench_simulation(c: &mut Criterion) {
    let sosre = make_sosre(hz(6.5), 1.0, 0.2).unwrap();
    let w = hz(5.0);
    let cfg = SimConfig::periodic(w, 1000, 2, 2);
    let mut g = c.benchmark_group("simulation");
    g.sample_size(20);
    g.bench_function("sosre 4 periods", |b| {
        b.iter(|| simulate_reset(&sosre, &|t| (w * t).sin(), black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_expm, bench_crone, bench_describing_function, bench_simulation);
criterion_main!(benches);
