mod common;

use acvae_core::datapipe::{
    aggregate_sessions, generate_synthetic_cohort, read_cohort, write_cohort, Group, RobustScaler, SynthSpec,
};
use acvae_core::diffcore::Matrix;
use common::hygiene::{check_cohort, random_cohort};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn preprocessing_fits_on_train_rows_only(seed in any::<u64>()) {
        check_cohort(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>()) {
        let cohort = random_cohort(seed);
        let mut buf = Vec::new();
        write_cohort(&mut buf, &cohort).unwrap();
        let back = read_cohort(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.records, &cohort.records);
        let mut again = Vec::new();
        write_cohort(&mut again, &back).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn scaler_inverse_restores_input(
        rows in 1usize..20,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = acvae_core::diffcore::Rng::new(seed);
        let x = common::random_matrix(&mut rng, rows, cols);
        let scaler = RobustScaler::fit(&x).unwrap();
        let back = scaler.inverse_transform(&scaler.transform(&x).unwrap()).unwrap();
        for (a, b) in x.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn synthetic_generation_is_seeded() {
    let spec = SynthSpec { n_hc: 50, n_ad: 5, ..SynthSpec::default() };
    assert_eq!(generate_synthetic_cohort(&spec).unwrap(), generate_synthetic_cohort(&spec).unwrap());
    let other = SynthSpec { seed: spec.seed + 1, ..spec.clone() };
    assert_ne!(generate_synthetic_cohort(&spec).unwrap(), generate_synthetic_cohort(&other).unwrap());
}

#[test]
fn synthetic_cohort_carries_planted_atrophy() {
    let spec = SynthSpec { noise_sd: 0.05, atrophy_fraction: 0.5, ..SynthSpec::default() };
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    let mean = |g: Group, r: usize| {
        let v: Vec<f64> = cohort.of_group(g).map(|s| s.roi[r] / s.roi.iter().sum::<f64>()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    for &r in &spec.atrophy_regions {
        assert!(mean(Group::AD, r) < 0.75 * mean(Group::HC, r), "region {r}");
    }
}

#[test]
fn aggregation_of_sessionless_cohort_is_identity() {
    let cohort = random_cohort(3);
    assert_eq!(aggregate_sessions(&cohort, 100).unwrap().records.len(), cohort.records.len());
}

#[test]
fn zero_iqr_feature_is_shifted_only() {
    let x = Matrix::from_rows(&[vec![2.0, 1.0], vec![2.0, 3.0], vec![2.0, 5.0]]).unwrap();
    let scaler = RobustScaler::fit(&x).unwrap();
    assert_eq!(scaler.iqr[0], 0.0);
    let t = scaler.transform(&x).unwrap();
    assert!(t.data().iter().step_by(2).all(|&v| v == 0.0));
}
