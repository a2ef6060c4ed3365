use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lkcs_core::coterie::build_grid_coterie;
use lkcs_core::harness::campaign::run_sequential;
use lkcs_core::harness::{AppConfig, CampaignSpec};
use lkcs_core::Mode;

fn campaigns(c: &mut Criterion) {
    let mut group = c.benchmark_group("gcs_campaign");
    group.sample_size(10);
    for n in [4, 9] {
        let spec = CampaignSpec::new(
            Mode::Gcs { l: 1, k: n / 2 },
            build_grid_coterie(n).unwrap(),
            16,
            vec![1, 5, 20],
            AppConfig::random(5, 2),
        );
        group.bench_with_input(BenchmarkId::new("sequential", n), &spec, |b, spec| {
            b.iter(|| run_sequential(spec).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &spec, |b, spec| {
            b.iter(|| lkcs_core::harness::campaign::run_parallel(spec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, campaigns);
criterion_main!(benches);
