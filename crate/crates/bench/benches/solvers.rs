use criterion::{black_box, criterion_group, criterion_main, Criterion};
use vslab::gd::gd_step;
use vslab::loss::tune_vs_defaults;
use vslab::special::erfc;
use vslab::{sample_dataset, solve_cs_svm, Classifier, ProblemSpec, SvmOptions};

fn dataset(d: usize, n_plus: usize, n_minus: usize) -> vslab::Dataset {
    let spec = ProblemSpec::aligned(d / 2, d - d / 2, 0.25 * (d as f64).powf(0.6), 0.0, n_plus, n_minus)
        .unwrap();
    sample_dataset(&spec, 7).unwrap()
}

fn bench_svm(c: &mut Criterion) {
    let ds = dataset(1024, 196, 4);
    let params = tune_vs_defaults(196, 4).unwrap();
    let deltas = params.deltas();
    c.bench_function("cs_svm d=1024 n=200", |b| {
        b.iter(|| solve_cs_svm(black_box(&ds), &deltas, &SvmOptions::default()).unwrap())
    });
}

fn bench_gd(c: &mut Criterion) {
    let ds = dataset(1024, 196, 4);
    let params = tune_vs_defaults(196, 4).unwrap();
    let w = Classifier::zeros(ds.d());
    c.bench_function("gd_step d=1024 n=200", |b| {
        b.iter(|| gd_step(&params, black_box(&ds), &w, 1e-4).unwrap())
    });
}

fn bench_erfc(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|i| -10.0 + 0.02 * i as f64).collect();
    c.bench_function("erfc x1000", |b| {
        b.iter(|| xs.iter().map(|&x| erfc(black_box(x))).sum::<f64>())
    });
}

criterion_group!(benches, bench_svm, bench_gd, bench_erfc);
criterion_main!(benches);
