use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cartan_lab::expr::PhasePoint;
use cartan_lab::frame::{choose_pivot, FrameBundle};
use cartan_lab::metric::MetricKind;
use cartan_lab::report::RunConfig;
use cartan_lab::suite::run_suite;
use cartan_lab::tensors::CartanGeometry;

fn hyperbolic() -> CartanGeometry {
    CartanGeometry::new("x2^2 * (p1^2 + p2^2)", 2, MetricKind::KSquared).unwrap()
}

fn pt() -> PhasePoint {
    PhasePoint::new(vec![0.2, 1.1], vec![0.7, 0.25]).unwrap()
}

fn bench_build(c: &mut Criterion) {
    c.bench_function("geometry_build_hyperbolic_2d", |b| {
        b.iter(|| black_box(hyperbolic()))
    });
    c.bench_function("geometry_build_randers_3d", |b| {
        b.iter(|| {
            black_box(
                CartanGeometry::new("sqrt(p1^2+p2^2+p3^2) + 0.05*p1", 3, MetricKind::K).unwrap(),
            )
        })
    });
}

fn bench_tensor_set(c: &mut Criterion) {
    let geo = hyperbolic();
    let at = pt();
    c.bench_function("tensor_set_hyperbolic_2d", |b| {
        b.iter(|| black_box(geo.tensor_set(&at).unwrap()))
    });
}

fn bench_frame_bundle(c: &mut Criterion) {
    let at = pt();
    c.bench_function("frame_bundle_hyperbolic_2d", |b| {
        b.iter_with_setup(hyperbolic, |mut geo| {
            let (_, _, _, ell) = geo.fundamental_metrics(&at).unwrap();
            let (pivot, _) = choose_pivot(&ell).unwrap();
            black_box(FrameBundle::build(&mut geo, pivot, false).unwrap())
        })
    });
}

fn bench_suite(c: &mut Criterion) {
    let cfg = RunConfig {
        metric: "hyperbolic-2d".into(),
        builtin: true,
        num_points: 10,
        checks: vec![
            "axioms".into(),
            "curvature-identities".into(),
            "frame-gram".into(),
            "killing".into(),
        ],
        ..RunConfig::default()
    };
    let mut group = c.benchmark_group("suite");
    group.sample_size(10);
    group.bench_function("subset_hyperbolic_2d_10pts", |b| {
        b.iter(|| black_box(run_suite(&cfg).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_build, bench_tensor_set, bench_frame_bundle, bench_suite);
criterion_main!(benches);
