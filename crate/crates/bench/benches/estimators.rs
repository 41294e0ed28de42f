use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use kplane::drury::multilinear_form_tx;
use kplane::estimate::seeded_rng;
use kplane::extremal::ratio;
use kplane::fields::{full_rearrange, slice_rearrange, standard_extremizer};
use kplane::geometry::sample_affine_plane;
use kplane::transforms::{kplane_transform, NormConfig, QuadConfig};
use kplane::{CoefficientMatrix, Field, GridField, McConfig};

fn transform(c: &mut Criterion) {
    let f = Field::gaussian(&[0.3, -0.2, 0.1], 0.8, 1.0).unwrap();
    let quad = QuadConfig::default();
    let mut rng = seeded_rng(1);
    c.bench_function("transform/gaussian n=3 k=2", |b| {
        b.iter_batched(
            || sample_affine_plane(3, 2, 2.0, &mut rng).unwrap().0,
            |plane| kplane_transform(black_box(&f), &plane, &quad).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn extremizer_ratio(c: &mut Criterion) {
    let f = standard_extremizer(2, 1).unwrap();
    let cfg = NormConfig::new(McConfig::new(20_000, 1));
    c.bench_function("ratio/extremizer 20k", |b| b.iter(|| ratio(black_box(&f), 1, &cfg).unwrap()));
}

fn tx_form(c: &mut Criterion) {
    let fields: Vec<Field> = [[-0.5, 0.5], [0.0, 1.0], [-1.0, 0.2]]
        .iter()
        .map(|cx| Field::gaussian(&[cx[0]], 1.0 + cx[1].abs(), 1.0).unwrap())
        .collect();
    let b = CoefficientMatrix::from_extra_rows(1, vec![vec![1.0, -1.0]]).unwrap();
    let cfg = McConfig::new(20_000, 2);
    c.bench_function("tx/three gaussians 20k", |bn| {
        bn.iter(|| multilinear_form_tx(black_box(&fields), &b, &cfg).unwrap())
    });
}

fn rearrangement(c: &mut Criterion) {
    let g = GridField::from_fn(vec![64, 64, 16], 0.1, vec![-3.2, -3.2, -0.8], |x| {
        (-(x[0] - 0.4).powi(2) - 2.0 * x[1].powi(2) - x[2].powi(2)).exp()
    })
    .unwrap();
    let f = Field::grid(g);
    c.bench_function("rearrange/full 64x64x16", |b| b.iter(|| full_rearrange(black_box(&f)).unwrap()));
    c.bench_function("rearrange/slice k=2 64x64x16", |b| b.iter(|| slice_rearrange(black_box(&f), 2).unwrap()));
}

criterion_group!(benches, transform, extremizer_ratio, tx_form, rearrangement);
criterion_main!(benches);
