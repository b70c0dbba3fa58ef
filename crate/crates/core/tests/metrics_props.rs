mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cogdpm::metrics::{
    crps_ensemble, csi, csi_neighborhood, economic_value, fss, pooled_crps, psd_radial, psd_total, rmse_mae,
    CrpsEstimator, EventRule, PoolAgg,
};
use cogdpm::Field;

/// Fields on a quarter-step grid so ties and exact threshold hits occur.
fn fields(count: usize) -> impl Strategy<Value = Vec<Field>> {
    (1usize..=8, 1usize..=8, 1usize..=2).prop_flat_map(move |(h, w, f)| {
        prop::collection::vec(prop::collection::vec(0u8..9, f * h * w), count).prop_map(move |vs| {
            vs.into_iter()
                .map(|v| Field::from_vec([f, 1, h, w], v.into_iter().map(|x| x as f64 * 0.25).collect()).unwrap())
                .collect()
        })
    })
}

fn threshold() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.25, 0.5, 1.0, 1.25, 2.0])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn crps_matches_the_integral(fs in (1usize..=4).prop_flat_map(|m| fields(m + 1))) {
        let (truth, members) = fs.split_last().unwrap();
        let got = crps_ensemble(members, truth, CrpsEstimator::Empirical).unwrap();
        prop_assert!(close(got.mean, common::crps_mean(members, truth, false)));
        prop_assert!(got.field.data().iter().all(|&v| v >= -1e-15));
        if members.len() >= 2 {
            let fair = crps_ensemble(members, truth, CrpsEstimator::Fair).unwrap();
            prop_assert!(close(fair.mean, common::crps_mean(members, truth, true)));
        }
    }

    #[test]
    fn pooled_crps_matches_naive_pooling(
        fs in (1usize..=4).prop_flat_map(|m| fields(m + 1)),
        pick in 0usize..8,
        max in any::<bool>(),
    ) {
        let (truth, members) = fs.split_last().unwrap();
        let window = 1 + pick % truth.height().min(truth.width());
        let agg = if max { PoolAgg::Max } else { PoolAgg::Avg };
        let got = pooled_crps(members, truth, window, agg, CrpsEstimator::Empirical).unwrap();
        let pm: Vec<Field> = members.iter().map(|f| common::pool(f, window, agg)).collect();
        prop_assert!(close(got, common::crps_mean(&pm, &common::pool(truth, window, agg), false)));
        let unit = pooled_crps(members, truth, 1, agg, CrpsEstimator::Empirical).unwrap();
        prop_assert_eq!(unit.to_bits(), crps_ensemble(members, truth, CrpsEstimator::Empirical).unwrap().mean.to_bits());
    }

    #[test]
    fn categorical_scores_match_window_scans(fs in fields(2), thr in threshold(), r in 0usize..4) {
        let window = 2 * r + 1;
        let (f, t) = (&fs[0..1], &fs[1..2]);
        let table = common::contingency(&fs[0], &fs[1], thr, window);
        let got = csi_neighborhood(f, t, thr, window).unwrap();
        prop_assert_eq!(got.table, table);
        prop_assert!((0.0..=1.0).contains(&got.score));
        if window == 1 {
            prop_assert_eq!(csi(f, t, thr).unwrap(), got);
        }
        let s = fss(f, t, thr, window).unwrap();
        prop_assert!(close(s, common::fss(f, t, thr, window)));
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn economic_value_matches_expected_expense(fs in (1usize..=4).prop_flat_map(|m| fields(m + 1)), thr in threshold()) {
        let (truth, members) = fs.split_last().unwrap();
        let ratios = [0.05, 0.2, 0.5, 0.8, 0.95];
        let ev = economic_value(&[members.to_vec()], std::slice::from_ref(truth), thr, &ratios, EventRule::AnyMember).unwrap();
        let table = common::any_member_table(members, truth, thr);
        prop_assert_eq!(ev.table, table);
        for (got, &r) in ev.values.iter().zip(&ratios) {
            let want = common::relative_value(&table, r);
            prop_assert_eq!(got.is_some(), want.is_some());
            if let (Some(a), Some(b)) = (got, want) {
                prop_assert!(close(*a, b), "{a} vs {b}");
                prop_assert!(*a <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rmse_and_mae_match(fs in fields(2)) {
        let got = rmse_mae(&fs[0], &fs[1]).unwrap();
        let (rmse, mae) = common::rmse_mae(&fs[0], &fs[1]);
        prop_assert!(close(got.rmse, rmse) && close(got.mae, mae));
        prop_assert_eq!(got.per_lead.len(), fs[0].frames());
    }

    #[test]
    fn spectrum_conserves_energy(h in 4usize..=8, w in 4usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane: Vec<f64> = (0..h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
        let bins = psd_radial(&plane, h, w).unwrap();
        let mean = plane.iter().sum::<f64>() / (h * w) as f64;
        let energy: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum();
        prop_assert!((psd_total(&bins) - energy).abs() <= 1e-6 * energy);
        let dft: f64 = common::dft_power(&plane, h, w).iter().sum::<f64>() / (h * w) as f64;
        prop_assert!((dft - energy).abs() <= 1e-9 * energy);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), h * w);
    }
}

#[test]
fn crps_shrinks_as_the_ensemble_grows() {
    // truth and members i.i.d. N(0, 1): the expected score is (1 + 1/M)/√π
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cells = 20_000;
    let shape = [1, 1, 100, cells / 100];
    let truth = Field::randn(shape, &mut rng);
    let mut results = Vec::new();
    for m in [1usize, 2, 4, 8] {
        let members: Vec<Field> = (0..m).map(|_| Field::randn(shape, &mut rng)).collect();
        let crps = crps_ensemble(&members, &truth, CrpsEstimator::Empirical).unwrap();
        let v = crps.field.data();
        let var = v.iter().map(|x| (x - crps.mean).powi(2)).sum::<f64>() / cells as f64;
        results.push((m, crps.mean, (var / cells as f64).sqrt()));
    }
    for pair in results.windows(2) {
        let ((m0, c0, s0), (m1, c1, s1)) = (pair[0], pair[1]);
        assert!(c1 < c0 - 2.0 * (s0 * s0 + s1 * s1).sqrt(), "M={m0}: {c0}, M={m1}: {c1}");
    }
}

#[test]
fn no_skill_forecast_has_no_positive_value() {
    // forecast events independent of the truth with matching frequency
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = [1, 1, 200, 200];
    let truth = Field::randn(shape, &mut rng);
    let forecast = Field::randn(shape, &mut rng);
    let ratios: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let ev = economic_value(&[vec![forecast]], &[truth], 0.5, &ratios, EventRule::AnyMember).unwrap();
    for v in ev.values.into_iter().flatten() {
        assert!(v <= 0.01, "value {v}");
    }
}

#[test]
fn perfect_forecast_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = Field::randn([2, 1, 8, 8], &mut rng);
    let one = std::slice::from_ref(&truth);
    assert_eq!(crps_ensemble(one, &truth, CrpsEstimator::Empirical).unwrap().mean, 0.0);
    assert_eq!(csi(one, one, 0.0).unwrap().score, 1.0);
    assert_eq!(fss(one, one, 0.0, 5).unwrap(), 1.0);
    let all = Field::filled([1, 1, 6, 6], 1.0);
    let none = Field::zeros([1, 1, 6, 6]);
    assert_eq!(fss(&[all], &[none], 0.5, 3).unwrap(), 0.0);
}
