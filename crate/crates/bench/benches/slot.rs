use beamtrack_core::channel::random_scenario;
use beamtrack_core::rng::{stream, Purpose};
use beamtrack_core::*;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;

fn grid() -> BeamGrid {
    BeamGrid::build(
        ArrayGeometry::half_wavelength(8, 8).unwrap(),
        AngleGrid::standard_64(),
    )
    .unwrap()
}

/// A model holding `slots` slots of eight random measurements each.
fn filled_model(grid: &BeamGrid, slots: u64) -> GpModel {
    let mut model = GpModel::new(
        Hyperparameters::initial(grid.default_metric()),
        PriorMean::default(),
        grid.shape(),
        256,
    )
    .unwrap();
    let mut rng = stream(1, Purpose::MeasurementNoise, 0);
    for slot in 0..slots {
        for _ in 0..8 {
            model
                .push(Observation {
                    slot,
                    beam: rng.random_range(0..grid.len()),
                    rsrp_db: rng.random_range(-10.0..10.0),
                })
                .unwrap();
        }
    }
    model
}

fn gp(c: &mut Criterion) {
    let grid = grid();
    let model = filled_model(&grid, 32);
    c.bench_function("posterior_256_obs", |b| {
        b.iter(|| model.posterior_at_slot(32).unwrap())
    });
    c.bench_function("log_marginal_likelihood_256_obs", |b| {
        b.iter(|| model.log_marginal_likelihood().unwrap())
    });

    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("fit_hyperparameters_256_obs", |b| {
        b.iter(|| {
            model.fit_hyperparameters(
                &FitConfig::default(),
                &mut stream(1, Purpose::HyperparameterFit, 0),
            )
        })
    });
    group.finish();
}

fn acquisition(c: &mut Criterion) {
    let grid = grid();
    let posterior = filled_model(&grid, 32).posterior_at_slot(32).unwrap();
    c.bench_function("context_1024_samples", |b| {
        b.iter_batched(
            || posterior.clone(),
            |p| AcquisitionContext::new(p, 1024, 7).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let ctx = AcquisitionContext::new(posterior, 1024, 7).unwrap();
    c.bench_function("choose_beamset_low_overhead", |b| {
        b.iter(|| ctx.choose_beamset(&OverheadPenalty::low_overhead()))
    });
    c.bench_function("choose_beamset_high_accuracy", |b| {
        b.iter(|| ctx.choose_beamset(&OverheadPenalty::high_accuracy()))
    });
}

fn episode(c: &mut Criterion) {
    let grid = grid();
    let dist = ScenarioDistribution::for_speed(SpeedClass::Slow);
    let scenario = random_scenario(&dist, &grid, 3, &mut stream(3, Purpose::Scenario, 0)).unwrap();
    let mut group = c.benchmark_group("episode_50_slots");
    group.sample_size(10);
    for (name, policy) in [
        (
            "bayes_opt",
            TrackerPolicy::BayesOpt(BayesOptConfig::default()),
        ),
        ("spline", TrackerPolicy::Spline { phi: 0.25 }),
        ("spatial_gpr", TrackerPolicy::SpatialGpr { phi: 0.25 }),
        ("oracle", TrackerPolicy::OracleFullSweep),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| run_episode(&policy, &scenario, &grid, 50, 3).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gp, acquisition, episode);
criterion_main!(benches);
