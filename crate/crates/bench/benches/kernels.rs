use std::hint::black_box;

use biot_core::linalg::Ilu0;
use biot_core::problems::{build_test_case, Problem, TestCase};
use biot_core::schemes::{initialize, SchemeConfig, SchemeKind, Stepper};
use criterion::{criterion_group, criterion_main, Criterion};

const CELLS: usize = 2500;

fn reservoir() -> Problem {
    Problem::from_config(&build_test_case(TestCase::Test2, CELLS)).unwrap()
}

fn kernels(c: &mut Criterion) {
    let problem = reservoir();
    let forms = problem.assemble().unwrap();
    let x = vec![1.0; forms.a.n_cols()];

    c.bench_function("assemble forms", |b| b.iter(|| black_box(problem.assemble().unwrap())));
    c.bench_function("spmv elastic", |b| b.iter(|| black_box(forms.a.spmv(black_box(&x)))));
    c.bench_function("ilu0 factor elastic", |b| {
        b.iter(|| black_box(Ilu0::factor(&forms.a).unwrap()))
    });
    let ilu = Ilu0::factor(&forms.a).unwrap();
    let mut z = vec![0.0; x.len()];
    c.bench_function("ilu0 apply elastic", |b| b.iter(|| ilu.solve(black_box(&x), &mut z)));
}

fn steps(c: &mut Criterion) {
    let problem = reservoir();
    let forms = problem.assemble().unwrap();
    let state = initialize(&problem, &forms, 1e-8).unwrap();
    let mut group = c.benchmark_group("scheme step");
    group.sample_size(10);
    for kind in [
        SchemeKind::CoupledTheta,
        SchemeKind::AdditiveD,
        SchemeKind::FixedStressRU,
    ] {
        let cfg = SchemeConfig::from_days(kind, 0.1, 3.0).with_tolerance(1e-8);
        let stepper = Stepper::new(&problem, &forms, cfg).unwrap();
        group.bench_function(kind.short_name(), |b| {
            b.iter(|| black_box(stepper.step(&state).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, steps);
criterion_main!(benches);
