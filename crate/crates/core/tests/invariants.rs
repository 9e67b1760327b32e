use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use dprov_core::engine::{Engine, EngineConfig, MechanismKind, Status};
use dprov_core::gauss;
use dprov_core::harness::metrics::compute_ndcfg;
use dprov_core::harness::synthetic::{adult_like, SyntheticConfig};
use dprov_core::{
    build_view, Analyst, AnalystId, Dataset, Demand, HistogramView, LinearQuery, ViewSpec,
};

fn fixture() -> &'static (Dataset, Vec<HistogramView>) {
    static DATA: OnceLock<(Dataset, Vec<HistogramView>)> = OnceLock::new();
    DATA.get_or_init(|| {
        let d = adult_like(&SyntheticConfig {
            rows: 1_000,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let views = ["age", "sex", "race"]
            .iter()
            .map(|a| build_view(&d, &ViewSpec::over(&[a])).unwrap())
            .collect();
        (d, views)
    })
}

#[derive(Clone, Debug)]
struct Step {
    view: usize,
    analyst: usize,
    lo: f64,
    width: f64,
    demand: Demand,
}

fn step() -> impl Strategy<Value = Step> {
    let demand = prop_oneof![
        (1.0f64..1e4).prop_map(|variance| Demand::Accuracy { variance }),
        (0.01f64..1.5).prop_map(|epsilon| Demand::Budget { epsilon }),
    ];
    (0usize..3, 0usize..3, 0.0f64..1.0, 0.0f64..1.0, demand).prop_map(
        |(view, analyst, lo, width, demand)| Step {
            view,
            analyst,
            lo,
            width,
            demand,
        },
    )
}

fn mechanism() -> impl Strategy<Value = MechanismKind> {
    prop::sample::select(MechanismKind::ALL.to_vec())
}

fn engine(mechanism: MechanismKind, table_cap: f64, seed: u64) -> Engine {
    let (d, views) = fixture();
    let config = EngineConfig {
        mechanism,
        table_cap,
        seed,
        ..EngineConfig::default()
    };
    let analysts = vec![
        Analyst::new("a", 1).unwrap(),
        Analyst::new("b", 3).unwrap(),
        Analyst::new("c", 5).unwrap(),
    ];
    Engine::new(config, views.clone(), analysts, d.len()).unwrap()
}

fn query(s: &Step) -> LinearQuery {
    let view = &fixture().1[s.view];
    let n = view.bin_count();
    let lo = ((s.lo * n as f64) as usize).min(n - 1);
    let hi = (lo + (s.width * (n - lo) as f64) as usize).min(n - 1);
    let analyst: AnalystId = ["a", "b", "c"][s.analyst].into();
    LinearQuery::range(view.id.clone(), n, lo, hi, analyst, s.demand).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibrated_sigma_meets_delta_and_is_tight(eps in 0.01f64..10.0, log_delta in -12.0f64..-2.0, sens in 0.1f64..20.0) {
        let delta = 10f64.powf(log_delta);
        let s = gauss::sigma_for(eps, delta, sens).unwrap();
        prop_assert!(gauss::delta_at(eps, s, sens).unwrap() <= delta * (1.0 + 1e-9));
        prop_assert!(gauss::delta_at(eps, s * (1.0 - 1e-6), sens).unwrap() > delta * (1.0 - 1e-6));
    }

    #[test]
    fn engine_never_breaches_the_table(
        mech in mechanism(),
        table_cap in 0.2f64..8.0,
        steps in prop::collection::vec(step(), 1..60),
    ) {
        let mut e = engine(mech, table_cap, 0);
        for s in &steps {
            let q = query(s);
            let out = e.handle_query(&q).unwrap();
            if let (Status::Answered { variance, .. }, Demand::Accuracy { variance: want }) = (&out.status, s.demand) {
                prop_assert!(*variance <= want * (1.0 + 1e-9));
            }
            prop_assert!(e.consumed_budget() <= table_cap * (1.0 + 1e-9));
            if mech == MechanismKind::DProvDb {
                prop_assert!(e.table().sum_of_column_max() <= table_cap * (1.0 + 1e-9));
            }
        }
        let problems = e.table().audit();
        prop_assert!(problems.is_empty(), "{:?}", problems);
    }

    #[test]
    fn same_seed_same_answers(mech in mechanism(), seed in any::<u64>(), steps in prop::collection::vec(step(), 1..20)) {
        let (mut x, mut y) = (engine(mech, 3.2, seed), engine(mech, 3.2, seed));
        for s in &steps {
            let q = query(s);
            prop_assert_eq!(x.handle_query(&q).unwrap(), y.handle_query(&q).unwrap());
        }
    }

    #[test]
    fn ndcfg_is_scale_free(counts in prop::collection::vec(1u64..100, 1..6), k in 1u64..20) {
        let ids: Vec<AnalystId> = (0..counts.len()).map(|i| format!("a{i}").into()).collect();
        let privileges: BTreeMap<AnalystId, u32> = ids.iter().cloned().zip(1u32..).collect();
        let base: BTreeMap<AnalystId, u64> = ids.iter().cloned().zip(counts.iter().copied()).collect();
        let scaled: BTreeMap<AnalystId, u64> = base.iter().map(|(a, n)| (a.clone(), n * k)).collect();
        let f = compute_ndcfg(&base, &privileges).unwrap();
        let g = compute_ndcfg(&scaled, &privileges).unwrap();
        prop_assert!((f.ndcfg - g.ndcfg).abs() < 1e-12);
        prop_assert!((g.dcfg - k as f64 * f.dcfg).abs() < 1e-9 * g.dcfg.max(1.0));
    }
}
