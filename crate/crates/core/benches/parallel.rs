//! Sequential vs rayon execution of the three data-parallel kernels.

use std::hint::black_box;

use certabs_core::abstraction::{AbstractionParams, FiniteAbstraction, DEFAULT_MAX_CELLS};
use certabs_core::geometry::Bounds;
use certabs_core::labelling::{LabellingSpec, Proposition};
use certabs_core::logic::{parse_formula, Formula};
use certabs_core::synthesis::{cpre, run_batch, solve_until, Objective, RunSettings, Strategy};
use certabs_core::system::{car, SystemSpec};
use certabs_core::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn small_car() -> SystemSpec {
    let mut sys = car();
    sys.state_box = Bounds::new(vec![0.0, 0.0, -0.15], vec![1.0, 0.8, 0.15]).unwrap();
    sys.control_box = Bounds::new(vec![0.8, -0.1], vec![1.0, 0.1]).unwrap();
    sys
}

fn abstraction() -> FiniteAbstraction {
    let sys = small_car();
    let params = AbstractionParams::scheduled(sys.lipschitz, sys.bound, 0.1, 0.0, 2.0, 1.0, false);
    FiniteAbstraction::build(&sys, params, DEFAULT_MAX_CELLS).unwrap()
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn table_build(c: &mut Criterion) {
    let abs = abstraction();
    let mut g = c.benchmark_group("successor_table");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(abs.table(exec).unwrap()))
        });
    }
    g.finish();
}

fn controllable_predecessor(c: &mut Criterion) {
    let abs = abstraction();
    let table = abs.table(Exec::Parallel).unwrap();
    let w: Vec<bool> = (0..abs.num_states()).map(|q| q % 7 != 0).collect();
    let mut g = c.benchmark_group("cpre");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(cpre(&table, &w, exec)))
        });
    }
    g.finish();
}

fn batch_simulation(c: &mut Criterion) {
    let abs = abstraction();
    let table = abs.table(Exec::Parallel).unwrap();
    // the car always drives forward, so reach the far strip instead of staying put
    let target: Vec<bool> = (0..abs.num_states()).map(|q| abs.state(q)[0] >= 0.7).collect();
    let sol = solve_until(&table, &vec![true; abs.num_states()], &target, Exec::Parallel);
    let objective = Objective::Until {
        constraint: Formula::True,
        target: Formula::atom("goal"),
    };
    let strategy = Strategy::from_solution(abs.states().clone(), abs.controls().clone(), objective, abs.params().tau, &sol);
    let labels = LabellingSpec::new(vec![Proposition {
        name: "goal".into(),
        boxes: vec![Bounds::new(vec![0.7, 0.0, -0.15], vec![1.0, 0.8, 0.15]).unwrap()],
        complement: None,
    }])
    .unwrap();
    let f = parse_formula("F goal").unwrap();
    let starts: Vec<Vec<f64>> = (0..abs.num_states())
        .filter(|&q| strategy.action(q).is_some())
        .step_by(97)
        .take(256)
        .map(|q| abs.state(q))
        .collect();
    let settings = RunSettings {
        tau: abs.params().tau,
        delta: 0.0,
        steps: 20,
        substeps: 8,
    };
    let mut g = c.benchmark_group("closed_loop_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(run_batch(abs.system(), &strategy, &labels, &f, &starts, settings, 0, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, table_build, controllable_predecessor, batch_simulation);
criterion_main!(benches);
