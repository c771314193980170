use criterion::{criterion_group, criterion_main, Criterion};
use degen_bench::{robin, weak_coefficient};
use degen_core::nemytskii::ModelKind;
use degen_core::solver::{solve_strict, solve_strong, InitialDatum, ProblemSpec, RegularityClaim, SolverSettings};
use degen_core::{Degeneracy, Field, NemytskiiModel};

fn paper_example(u0: InitialDatum, claim: RegularityClaim) -> ProblemSpec {
    let kind = ModelKind::PaperExample {
        c: Field::Const(1.0),
        theta: 2.0,
    };
    ProblemSpec {
        coeff: weak_coefficient(),
        bc: robin(),
        alpha: Field::Const(0.5),
        model: NemytskiiModel::new(kind, Degeneracy::WeaklyDegenerate, 0.5).unwrap(),
        horizon: 0.5,
        u0,
        regularity_claim: claim,
    }
}

fn strict(c: &mut Criterion) {
    let spec = paper_example(InitialDatum::Legendre { n: 1 }, RegularityClaim::H1a);
    let settings = SolverSettings::new(256, 512, 2.0);
    c.bench_function("solve_strict/paper_example/256x512", |b| {
        b.iter(|| solve_strict(&spec, &settings).unwrap())
    });
}

fn strong(c: &mut Criterion) {
    let spec = paper_example(InitialDatum::Sign, RegularityClaim::L2Only);
    let settings = SolverSettings::new(128, 128, 2.0);
    let mut g = c.benchmark_group("solve_strong");
    g.sample_size(10);
    g.bench_function("sign/128x128/levels4-32", |b| {
        b.iter(|| solve_strong(&spec, &settings, &[4, 8, 16, 32], 0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, strict, strong);
criterion_main!(benches);
