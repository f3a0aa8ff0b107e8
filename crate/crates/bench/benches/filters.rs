use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvpure::filters::{self, select_rank, CovMode, MvpVariant, RankFamily};
use mvpure_bench::{interference_instance, SIZES};

fn construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("construction");
    for (m, l, k) in SIZES {
        let (fm, cov) = interference_instance(3, m, l, k);
        let id = format!("{m}x{l}+{k}");
        group.bench_with_input(BenchmarkId::new("lcmv_r", &id), &(), |b, _| {
            b.iter(|| filters::lcmv(&fm, &cov.r, CovMode::R).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("nulling_n", &id), &(), |b, _| {
            b.iter(|| filters::nulling(&fm, &cov.n, CovMode::N).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mvp_int_mse_full", &id), &(), |b, _| {
            b.iter(|| filters::mvpure_int(MvpVariant::Mse, &fm, &cov.r, Some(&cov.q), l).unwrap())
        });
        let s = (0.3 * k as f64).ceil() as usize;
        group.bench_with_input(BenchmarkId::new("mvp_patch_n", &id), &(), |b, _| {
            b.iter(|| filters::mvpure_patch(CovMode::N, &fm, s, &cov.n, None, l).unwrap())
        });
    }
    group.finish();
}

fn rank_selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_selection");
    for (m, l, k) in SIZES {
        let (fm, cov) = interference_instance(5, m, l, k);
        let id = format!("{m}x{l}+{k}");
        group.bench_with_input(BenchmarkId::new("int_mse", &id), &(), |b, _| {
            b.iter(|| select_rank(RankFamily::Interference(MvpVariant::Mse), &fm, &cov.r, Some(&cov.q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("free_r", &id), &(), |b, _| {
            b.iter(|| select_rank(RankFamily::Free(MvpVariant::R), &fm, &cov.r, Some(&cov.q)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, construction, rank_selection);
criterion_main!(benches);
