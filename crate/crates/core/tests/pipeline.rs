use laimpute::baselines::{baseline_impute, BaselineConfig, Method};
use laimpute::series::{read_csv_from, write_csv_to, TimeSeriesRecord};
use laimpute::synth::{gen_dataset, PhenologyConfig};
use laimpute::train::{self, TrainConfig};
use laimpute::Arch;
use proptest::prelude::*;

fn arb_record() -> impl Strategy<Value = TimeSeriesRecord> {
    (1usize..20).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5f64..20.0, n),
            prop::collection::vec((prop::option::of(0.0f64..8.0), prop::option::of(-25.0f64..0.0)), n),
        )
            .prop_filter_map("every step needs an observation", |(steps, obs)| {
                let times = steps
                    .iter()
                    .scan(0.0, |t, d| {
                        *t += d;
                        Some(*t)
                    })
                    .collect();
                let (lai, vhvv): (Vec<_>, Vec<_>) = obs.into_iter().unzip();
                let split = |v: &[Option<f64>]| -> (Vec<f64>, Vec<bool>) {
                    v.iter().map(|x| (x.unwrap_or(0.0), x.is_some())).unzip()
                };
                let (l, lm) = split(&lai);
                let (v, vm) = split(&vhvv);
                TimeSeriesRecord::new("p", times, l, lm, v, vm).ok()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(records in prop::collection::vec(arb_record(), 1..4)) {
        let records: Vec<TimeSeriesRecord> = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                TimeSeriesRecord::new(
                    format!("r{i}"),
                    r.times().to_vec(),
                    r.lai().to_vec(),
                    r.lai_mask().to_vec(),
                    r.vhvv().to_vec(),
                    r.vhvv_mask().to_vec(),
                )
                .unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_csv_to(&records, &mut buf).unwrap();
        prop_assert_eq!(read_csv_from(buf.as_slice(), "mem.csv".as_ref()).unwrap(), records);
    }
}

#[test]
fn simulate_train_impute() {
    let data = gen_dataset(&PhenologyConfig::default(), 12).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let outcome = train::train(&data.gapped, Arch::Lstm, &cfg).unwrap();
    assert_eq!(outcome.loss_trace.len(), 3);
    for (g, t) in data.gapped.iter().zip(&data.truth) {
        let net = outcome.imputer.impute(g).unwrap();
        let poly = baseline_impute(g, &BaselineConfig::default()).unwrap();
        let exp = baseline_impute(
            g,
            &BaselineConfig {
                method: Method::Exp,
                ..BaselineConfig::default()
            },
        )
        .unwrap();
        for filled in [&net, &poly, &exp] {
            assert_eq!(filled.times(), t.times());
            assert_eq!(filled.vhvv(), g.vhvv());
            assert!(filled.lai_mask().iter().all(|&m| m));
            for i in 0..g.len() {
                assert!(filled.lai()[i].is_finite());
                if g.lai_mask()[i] {
                    assert_eq!(filled.lai()[i], g.lai()[i]);
                }
            }
        }
    }
}
