use criterion::{black_box, criterion_group, criterion_main, Criterion};

use vel_core::solver::{
    rhs_acceleration, run, step_darcy, step_euler_damped, stable_dt, InitialData, ModelKind,
    RunConfig, State1D,
};
use vel_core::weighted::{make_grid, Spacing};
use vel_core::GasParams;

fn setup(n: usize, model: ModelKind) -> (RunConfig, State1D) {
    let params = GasParams::derive(2.0, 1.0, 1.0).unwrap();
    let grid = make_grid(&params, n, Spacing::Uniform).unwrap();
    let init = InitialData::sine(1e-3, 1, 0.0);
    let dt = 0.45 * stable_dt(&params, &grid, &init, model).unwrap();
    let (omega, vel) = init.evaluate(&grid).unwrap();
    let state = State1D {
        time: 0.0,
        omega,
        vel,
    };
    let config = RunConfig {
        params,
        grid,
        dt,
        t_final: 1.0,
        model,
        init,
        cfl_safety: 0.45,
        output_every: 1_000_000,
    };
    (config, state)
}

fn bench_steps(c: &mut Criterion) {
    let (euler, state) = setup(400, ModelKind::EulerDamped);
    c.bench_function("step_euler_damped n=400", |b| {
        b.iter(|| step_euler_damped(black_box(&euler), black_box(&state)).unwrap())
    });
    let (darcy, dstate) = setup(400, ModelKind::Darcy);
    c.bench_function("step_darcy n=400", |b| {
        b.iter(|| step_darcy(black_box(&darcy), black_box(&dstate)).unwrap())
    });
    c.bench_function("rhs_acceleration n=400", |b| {
        b.iter(|| rhs_acceleration(black_box(&euler.params), &euler.grid, &state).unwrap())
    });
}

fn bench_energy(c: &mut Criterion) {
    let (euler, state) = setup(400, ModelKind::EulerDamped);
    c.bench_function("energy_report n=400", |b| {
        b.iter(|| {
            vel_core::solver::energy_report_for(black_box(&euler.params), &euler.grid, &state)
                .unwrap()
        })
    });
}

fn bench_short_run(c: &mut Criterion) {
    let (mut config, _) = setup(200, ModelKind::EulerDamped);
    config.t_final = 1.0;
    c.bench_function("run t=1 n=200", |b| b.iter(|| run(black_box(&config)).unwrap()));
}

criterion_group!(benches, bench_steps, bench_energy, bench_short_run);
criterion_main!(benches);
