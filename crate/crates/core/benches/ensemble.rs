use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ghostlens::exec::Execution;
use ghostlens::experiment::{accumulate_ensemble, EnsembleConfig};
use ghostlens::objects::double_slit;
use ghostlens::source::{Profile, SpeckleSpec};
use ghostlens::{Grid, SetupGeometry};

fn ensemble(c: &mut Criterion) {
    let geom = SetupGeometry::new(0.532e-6, 0.6e-3, 20e-3, 25e-3, 45e-3).unwrap();
    let grid = Grid::new_1d(1024, 2e-6).unwrap();
    let obj = double_slit(38e-6, 120e-6, &grid).unwrap();
    let spec = SpeckleSpec::new(0.6e-3, Profile::HardDisk);
    let cfg = EnsembleConfig { n_realizations: 256, test_roi: Some(0.4e-3), ..Default::default() };

    let mut group = c.benchmark_group("ensemble_1d_1024x256");
    group.sample_size(10);
    let mut modes = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        modes.push(("parallel", Execution::Parallel(0)));
    }
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| accumulate_ensemble(&geom, &obj, &spec, &cfg, exec, None, &mut |_| {}).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
