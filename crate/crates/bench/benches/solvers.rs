use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kreinlab_core::dirichlet::ResolventHandle;
use kreinlab_core::dtn::*;
use kreinlab_core::elliptic::{CoefficientField, CoefficientSpec, EllipticOperator};
use kreinlab_core::geometry::{build_diffeo, BoundaryGraph};
use kreinlab_core::linalg::c64;
use kreinlab_core::GridSpec;
use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

fn op(nt: usize) -> Arc<EllipticOperator> {
    let g = GridSpec::new(2.0 * PI, nt, nt + 1, 1.0).unwrap();
    let b = BoundaryGraph::from_fn(2.0 * PI, nt, 2, 8.0, |x| 0.1 * x.sin()).unwrap();
    let d = build_diffeo(&g, &b, None).unwrap();
    let c = CoefficientField::from_spec(&CoefficientSpec::rough(0.3, 1.4), &d).unwrap();
    Arc::new(EllipticOperator::new(c, &d).unwrap())
}

fn rhs(n: usize) -> Vec<kreinlab_core::C64> {
    (0..n).map(|i| c64((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect()
}

fn dirichlet(c: &mut Criterion) {
    let mut g = c.benchmark_group("dirichlet_solve");
    for nt in [16, 32, 64] {
        let o = op(nt);
        let f = rhs(o.grid.len());
        g.bench_with_input(BenchmarkId::from_parameter(nt), &nt, |b, _| {
            b.iter(|| {
                let s = ResolventHandle::new(&o, c64(-1.0, 0.5), false).unwrap();
                black_box(s.solve_bvp(Some(&f), None, None))
            })
        });
    }
    g.finish();
}

fn dtn(c: &mut Criterion) {
    let mut g = c.benchmark_group("dtn_assemble");
    g.sample_size(10);
    for nt in [16, 32] {
        let o = op(nt);
        g.bench_with_input(BenchmarkId::from_parameter(nt), &nt, |b, _| {
            b.iter(|| black_box(dtn_assemble(&o, c64(-1.0, 0.5), Selection::Both, TraceKind::FiniteVolume).unwrap()))
        });
    }
    g.finish();
}

fn krein(c: &mut Criterion) {
    let mut g = c.benchmark_group("krein_solve");
    g.sample_size(10);
    for nt in [16, 32] {
        let o = op(nt);
        let spec = RealizationSpec::robin(-1.0, Selection::Both);
        let r = Realization::new(&o, spec).unwrap();
        let f = rhs(o.grid.len());
        g.bench_with_input(BenchmarkId::from_parameter(nt), &nt, |b, _| {
            b.iter(|| black_box(krein_solve(&r, c64(-1.0, 0.5), &f).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, dirichlet, dtn, krein);
criterion_main!(benches);
