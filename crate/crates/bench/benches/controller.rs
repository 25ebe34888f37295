use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use oflc_core::optimizer::{costate_matrices, estimate_costate};
use oflc_core::{
    compute_terms, inverse_park_clarke, run_scenario, AbcTriple, Controller, ControllerConfig, ControllerKind, DqState,
    DqVoltage, MachineParams, Scenario, Sensors,
};

fn control_tick(c: &mut Criterion) {
    let params = MachineParams::reference();
    let i = DqState::new(-1.2, 6.5);
    let abc = inverse_park_clarke(0.7, DqVoltage::new(i.i_d, i.i_q), &params);
    let sensors = Sensors {
        theta: 0.7,
        omega: 180.0,
        i_abc: AbcTriple::new(abc.a, abc.b, abc.c),
    };
    let mut ctrl = Controller::new(ControllerConfig::new(params)).unwrap();
    c.bench_function("control_step", |b| {
        b.iter(|| ctrl.control_step(0.0, black_box(sensors), black_box(4.0)).unwrap())
    });

    let terms = compute_terms(i, 180.0, &params).unwrap();
    c.bench_function("costate_estimate", |b| {
        b.iter(|| {
            let m = costate_matrices(black_box(i), 180.0, 4.0, &terms, &params).unwrap();
            estimate_costate(i, &m.a, 1e-3).unwrap()
        })
    });
}

fn scenario_run(c: &mut Criterion) {
    let mut s = Scenario::standard_mixed();
    s.duration = 0.02;
    let mut group = c.benchmark_group("run_scenario_20ms");
    group.sample_size(20);
    for kind in ControllerKind::ALL {
        group.bench_function(kind.name(), |b| b.iter(|| run_scenario(black_box(&s), kind).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, control_tick, scenario_run);
criterion_main!(benches);
