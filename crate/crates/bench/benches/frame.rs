use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use deform_bench::{drag, posed_session};
use deform_core::coords::mvc_matrix;
use deform_core::rigs;
use deform_core::select::maxvol_select;
use deform_core::skinning::SkinningMethod;

fn per_frame(c: &mut Criterion) {
    let mut group = c.benchmark_group("arm");
    for method in [SkinningMethod::Lbs, SkinningMethod::Dqs, SkinningMethod::Cor] {
        let session = posed_session("arm", method);
        group.bench_function(format!("skin_{method}"), |b| b.iter(|| black_box(session.skin_current().unwrap())));
    }
    let session = posed_session("arm", SkinningMethod::Lbs);
    group.bench_function("cage_up", |b| b.iter(|| black_box(session.cage_up().unwrap())));
    let delta = drag(&session);
    group.bench_function("cage_rev_update", |b| {
        b.iter(|| black_box(session.cage_rev_uncached(&delta).unwrap()))
    });
    group.finish();
}

fn production_scale(c: &mut Criterion) {
    let mut group = c.benchmark_group("warrok");
    group.sample_size(10);
    let session = posed_session("warrok", SkinningMethod::Lbs);
    group.bench_function("skin_lbs", |b| b.iter(|| black_box(session.skin_current().unwrap())));
    let delta = drag(&session);
    group.bench_function("cage_rev_update", |b| {
        b.iter(|| black_box(session.cage_rev_uncached(&delta).unwrap()))
    });
    group.finish();
}

fn preprocessing(c: &mut Criterion) {
    let mut group = c.benchmark_group("setup");
    group.sample_size(10);
    let rig = rigs::arm().unwrap();
    group.bench_function("mvc_arm", |b| {
        b.iter(|| black_box(mvc_matrix(&rig.skin.vertices, &rig.cage).unwrap()))
    });
    let phi = mvc_matrix(&rig.skin.vertices, &rig.cage).unwrap();
    group.bench_function("maxvol_arm", |b| b.iter(|| black_box(maxvol_select(&phi).unwrap())));
    group.finish();
}

criterion_group!(benches, per_frame, production_scale, preprocessing);
criterion_main!(benches);
