//! Independent checks that preprocessing statistics come from training rows
//! only and that covariate vectors are well formed.

use acvae_core::datapipe::{
    generate_synthetic_cohort, prepare, split_indices, Cohort, PreparedDataset, SynthSpec, COVARIATE_DIM,
};
use acvae_core::diffcore::{Matrix, Rng};

/// Random small cohort: sizes, noise and ages vary with `seed`.
pub fn random_cohort(seed: u64) -> Cohort {
    let mut rng = Rng::new(seed);
    let spec = SynthSpec {
        n_hc: 10 + rng.below(150),
        n_ad: 1 + rng.below(30),
        noise_sd: 0.05 + 0.3 * rng.uniform(),
        atrophy_fraction: 0.6 * rng.uniform(),
        age_min: 50.0 + 10.0 * rng.uniform(),
        age_max: 75.0 + 15.0 * rng.uniform(),
        seed,
        ..SynthSpec::default()
    };
    generate_synthetic_cohort(&spec).unwrap()
}

fn sorted_quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Scaler and bin parameters recomputed from the training records alone.
fn expected_stats(cohort: &Cohort, train: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let recs: Vec<_> = train.iter().map(|&i| &cohort.records[i]).collect();
    let icv: Vec<f64> = recs.iter().map(|r| r.roi.iter().sum()).collect();
    let ages: Vec<f64> = recs.iter().map(|r| r.age).collect();
    let mut median = Vec::new();
    let mut iqr = Vec::new();
    for j in 0..100 {
        let col: Vec<f64> = recs.iter().zip(&icv).map(|(r, t)| r.roi[j] / t).collect();
        median.push(sorted_quantile(col.clone(), 0.5));
        iqr.push(sorted_quantile(col.clone(), 0.75) - sorted_quantile(col, 0.25));
    }
    let edges = |v: &[f64]| (1..10).map(|k| sorted_quantile(v.to_vec(), k as f64 / 10.0)).collect::<Vec<f64>>();
    (median, iqr, edges(&ages), edges(&icv))
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300))
}

fn covariates_ok(c: &Matrix) -> Result<(), String> {
    if c.cols() != COVARIATE_DIM {
        return Err(format!("covariate width {}", c.cols()));
    }
    for (r, row) in c.iter_rows().enumerate() {
        let block = |range: std::ops::Range<usize>| row[range].iter().filter(|&&v| v == 1.0).count();
        let binary = row.iter().all(|&v| v == 0.0 || v == 1.0);
        if !binary || row.iter().sum::<f64>() != 3.0 || block(0..2) != 1 || block(2..12) != 1 || block(12..22) != 1 {
            return Err(format!("covariate row {r} is not one-hot per block: {row:?}"));
        }
    }
    Ok(())
}

/// Leakage and covariate checks on one cohort.
pub fn check_cohort(seed: u64) -> Result<(), String> {
    let cohort = random_cohort(seed);
    let (train, test) = split_indices(&cohort, 0.8, &mut Rng::new(seed ^ 0x5eed)).map_err(|e| e.to_string())?;
    let data = prepare(&cohort, &train, &test).map_err(|e| e.to_string())?;

    let (median, iqr, age_edges, icv_edges) = expected_stats(&cohort, &train);
    if !close(&data.scaler.median, &median) || !close(&data.scaler.iqr, &iqr) {
        return Err(format!("cohort {seed}: scaler differs from a train-only refit"));
    }
    if !close(&data.age_bins.edges, &age_edges) || !close(&data.icv_bins.edges, &icv_edges) {
        return Err(format!("cohort {seed}: bins differ from a train-only refit"));
    }

    // Wildly different test records must leave every fitted statistic unchanged.
    let mut altered = cohort.clone();
    for &i in &test {
        let r = &mut altered.records[i];
        r.age += 40.0;
        r.roi.iter_mut().enumerate().for_each(|(k, v)| *v = *v * 3.0 + k as f64);
    }
    let again: PreparedDataset = prepare(&altered, &train, &test).map_err(|e| e.to_string())?;
    if again.scaler != data.scaler || again.age_bins != data.age_bins || again.icv_bins != data.icv_bins {
        return Err(format!("cohort {seed}: test rows changed fitted statistics"));
    }
    if again.train_x != data.train_x || again.train_c != data.train_c {
        return Err(format!("cohort {seed}: test rows changed training features"));
    }
    if train.iter().any(|&i| cohort.records[i].group != acvae_core::datapipe::Group::HC) {
        return Err(format!("cohort {seed}: non-HC record in training set"));
    }
    covariates_ok(&data.train_c).map_err(|e| format!("cohort {seed} train: {e}"))?;
    covariates_ok(&data.test_c).map_err(|e| format!("cohort {seed} test: {e}"))?;
    covariates_ok(&again.test_c).map_err(|e| format!("cohort {seed} altered test: {e}"))?;
    Ok(())
}
