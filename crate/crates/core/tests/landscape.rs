use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bidshade::landscape::{generate_feedback, LandscapeKind, LandscapeSpec, Request, Spike};
use bidshade::shading::uniform_closed_form;
use bidshade::winrate::FeatureVector;

fn none() -> FeatureVector {
    FeatureVector::empty(4)
}

fn base_kind() -> impl Strategy<Value = LandscapeKind> {
    prop_oneof![
        (0.0..5.0f64, 0.01..5.0f64)
            .prop_map(|(low, w)| LandscapeKind::Uniform { low, high: low + w }),
        (-3.0..3.0f64, 0.05..2.0f64).prop_map(|(mu, sigma)| LandscapeKind::LogNormal { mu, sigma }),
    ]
}

fn any_spec() -> impl Strategy<Value = LandscapeSpec> {
    let spiked = (
        base_kind(),
        prop::collection::vec((0.1..5.0f64, 0.0..0.2f64), 1..4),
    )
        .prop_map(|(base, s)| LandscapeKind::Spiked {
            base: Box::new(base),
            spikes: s
                .into_iter()
                .map(|(price, weight)| Spike { price, weight })
                .collect(),
        });
    prop_oneof![base_kind(), spiked]
        .prop_map(|kind| LandscapeSpec::new(kind, BTreeMap::new()).unwrap())
}

proptest! {
    #[test]
    fn true_cdf_is_nondecreasing(spec in any_spec(), a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(spec.true_cdf(&none(), lo) <= spec.true_cdf(&none(), hi));
        prop_assert!(spec.true_cdf(&none(), lo) <= spec.prob_at_most(&none(), lo));
        prop_assert_eq!(spec.true_cdf(&none(), 0.0), 0.0);
    }

    #[test]
    fn won_iff_bid_above_revealed_mbtw(spec in any_spec(), factor in 0.01..2.0f64, seed in any::<u64>()) {
        let requests: Vec<Request> = (0..200)
            .map(|i| Request { features: none(), value: 0.5 + i as f64 / 40.0 })
            .collect();
        let policy = move |r: &Request| r.value * factor;
        let batch = generate_feedback(&spec, &policy, &requests, true, seed);
        prop_assert_eq!(batch.records.len(), requests.len());
        for r in &batch.records {
            prop_assert_eq!(r.won, r.bid > r.min_bid_to_win.unwrap());
        }
    }

    #[test]
    fn oracle_matches_uniform_closed_form(low in 0.0..2.0f64, width in 0.1..3.0f64, v in 0.1..8.0f64) {
        let spec = LandscapeSpec::uniform(low, low + width).unwrap();
        let grid_n = 20_000;
        let (bid, surplus) = spec.oracle_optimal_bid(&none(), v, grid_n).unwrap();
        let (cf_bid, cf_surplus) = uniform_closed_form(v, low, low + width).unwrap();
        let step = v / grid_n as f64;
        prop_assert!((surplus - cf_surplus).abs() <= 2.0 * step * (1.0 + v / width));
        if cf_surplus > 0.0 {
            prop_assert!((bid - cf_bid).abs() <= step + 1e-12 || (surplus - cf_surplus).abs() < 1e-9);
        }
    }
}

/// Kolmogorov-Smirnov distance between the sample and the landscape, comparing
/// both one-sided limits at every sample point so atoms are handled.
fn ks_distance(spec: &LandscapeSpec, samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at_most = j as f64 / n;
        worst = worst
            .max((below - spec.true_cdf(&none(), x)).abs())
            .max((at_most - spec.prob_at_most(&none(), x)).abs());
        i = j;
    }
    worst
}

#[test]
fn samples_follow_true_cdf_for_every_kind() {
    let specs = [
        LandscapeSpec::uniform(0.0, 1.0).unwrap(),
        LandscapeSpec::uniform(2.0, 4.0).unwrap(),
        LandscapeSpec::log_normal(-0.6, 0.5).unwrap(),
        LandscapeSpec::new(
            LandscapeKind::Spiked {
                base: Box::new(LandscapeKind::LogNormal {
                    mu: 0.0,
                    sigma: 0.8,
                }),
                spikes: vec![
                    Spike {
                        price: 0.5,
                        weight: 0.2,
                    },
                    Spike {
                        price: 1.0,
                        weight: 0.15,
                    },
                ],
            },
            BTreeMap::new(),
        )
        .unwrap(),
    ];
    for (k, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let mut samples: Vec<f64> = (0..100_000)
            .map(|_| spec.sample_highest_bid(&none(), &mut rng))
            .collect();
        let d = ks_distance(spec, &mut samples);
        assert!(d <= 0.01, "spec {k}: KS distance {d}");
    }
}

#[test]
fn hidden_mbtw_is_never_recorded() {
    let spec = LandscapeSpec::uniform(0.0, 1.0).unwrap();
    let requests = vec![
        Request {
            features: none(),
            value: 1.0
        };
        1000
    ];
    let policy = |r: &Request| 0.5 * r.value;
    let batch = generate_feedback(&spec, &policy, &requests, false, 9);
    assert!(batch.records.iter().all(|r| r.min_bid_to_win.is_none()));
}

#[test]
fn policies_share_competition_under_one_seed() {
    let spec = LandscapeSpec::log_normal(0.0, 1.0).unwrap();
    let requests = vec![
        Request {
            features: none(),
            value: 2.0
        };
        500
    ];
    let low = |r: &Request| 0.3 * r.value;
    let high = |r: &Request| 0.6 * r.value;
    let a = generate_feedback(&spec, &low, &requests, true, 5);
    let b = generate_feedback(&spec, &high, &requests, true, 5);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.min_bid_to_win, y.min_bid_to_win);
        assert!(y.won || !x.won);
    }
}
