use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dprov_core::engine::{Engine, EngineConfig, MechanismKind, DEFAULT_DELTA};
use dprov_core::gauss;
use dprov_core::harness::synthetic::{adult_like, SyntheticConfig};
use dprov_core::{build_view, Analyst, AnalystId, Demand, LinearQuery, ViewSpec};

fn calibration(c: &mut Criterion) {
    c.bench_function("sigma_for", |b| {
        b.iter(|| gauss::sigma_for(black_box(0.5), black_box(1e-9), black_box(1.0)).unwrap())
    });
    c.bench_function("translate_vanilla", |b| {
        b.iter(|| {
            gauss::translate_vanilla(1.0, black_box(250.0), DEFAULT_DELTA, 1e-3, 6.4).unwrap()
        })
    });
}

fn additive(c: &mut Criterion) {
    let budgets: Vec<(AnalystId, f64)> = (0..4)
        .map(|i| (format!("a{i}").into(), 0.25 * (i + 1) as f64))
        .collect();
    let answer = vec![100.0; 128];
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    c.bench_function("additive_gm_4x128", |b| {
        b.iter(|| {
            gauss::additive_gm(black_box(&answer), &budgets, DEFAULT_DELTA, 1.0, &mut rng).unwrap()
        })
    });
}

fn engine(c: &mut Criterion) {
    let data = adult_like(&SyntheticConfig::default()).unwrap();
    let view = build_view(&data, &ViewSpec::over(&["age"])).unwrap();
    let n = view.bin_count();
    let queries: Vec<LinearQuery> = (0..64)
        .map(|i| {
            let lo = i % (n / 2);
            let analyst = if i % 2 == 0 { "a" } else { "b" };
            let std = 60.0 - (i as f64 * 0.7);
            LinearQuery::range(
                view.id.clone(),
                n,
                lo,
                lo + n / 3,
                analyst.into(),
                Demand::Accuracy {
                    variance: std * std,
                },
            )
            .unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("engine_64_queries");
    for mechanism in MechanismKind::ALL {
        group.bench_function(mechanism.name(), |b| {
            b.iter_batched(
                || {
                    let config = EngineConfig {
                        mechanism,
                        table_cap: 6.4,
                        ..EngineConfig::default()
                    };
                    let analysts =
                        vec![Analyst::new("a", 1).unwrap(), Analyst::new("b", 4).unwrap()];
                    Engine::new(config, vec![view.clone()], analysts, data.len()).unwrap()
                },
                |mut engine| {
                    for q in &queries {
                        black_box(engine.handle_query(q).unwrap());
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, calibration, additive, engine);
criterion_main!(benches);
