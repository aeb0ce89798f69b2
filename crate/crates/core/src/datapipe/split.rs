use serde::{Deserialize, Serialize};

use super::features::{compute_icv, encode_covariates, fit_quantile_bins, icv_scale, BinEdges, RobustScaler, N_BINS};
use super::record::{Cohort, Group, SubjectRecord};
use crate::diffcore::{Matrix, Rng};
use crate::error::{Error, Result};

/// Model-ready train/test matrices plus the statistics fit on the training
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub train_x: Matrix,
    pub train_c: Matrix,
    pub test_x: Matrix,
    pub test_c: Matrix,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<Group>,
    pub scaler: RobustScaler,
    pub age_bins: BinEdges,
    pub icv_bins: BinEdges,
}

impl PreparedDataset {
    pub fn test_indices(&self, group: Group) -> Vec<usize> {
        self.test_labels.iter().enumerate().filter(|(_, g)| **g == group).map(|(i, _)| i).collect()
    }
}

/// Draws `round(fraction · n_HC)` HC records for training; the remaining HC
/// and every AD record form the test set. Both index lists are ascending.
pub fn split_indices(cohort: &Cohort, hc_train_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(hc_train_fraction > 0.0 && hc_train_fraction <= 1.0) {
        return Err(Error::config(format!("hc_train_fraction must lie in (0, 1], got {hc_train_fraction}")));
    }
    let mut hc: Vec<usize> = (0..cohort.records.len()).filter(|&i| cohort.records[i].group == Group::HC).collect();
    let ad: Vec<usize> = (0..cohort.records.len()).filter(|&i| cohort.records[i].group == Group::AD).collect();
    if hc.is_empty() || ad.is_empty() {
        return Err(Error::data(format!(
            "cohort needs at least one HC and one AD record (got {} HC, {} AD)",
            hc.len(),
            ad.len()
        )));
    }
    let n_train = ((hc_train_fraction * hc.len() as f64).round() as usize).clamp(1, hc.len());
    rng.shuffle(&mut hc);
    let mut train = hc[..n_train].to_vec();
    let mut test_hc = hc[n_train..].to_vec();
    train.sort_unstable();
    test_hc.sort_unstable();
    test_hc.extend(ad);
    Ok((train, test_hc))
}

/// Fits bins and scaler on the `train` rows and applies them to both sets.
/// `train` must reference HC records only; it may repeat indices.
pub fn prepare(cohort: &Cohort, train: &[usize], test: &[usize]) -> Result<PreparedDataset> {
    if train.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let get = |i: usize| -> Result<&SubjectRecord> {
        cohort.records.get(i).ok_or_else(|| Error::data(format!("record index {i} out of range")))
    };
    let train_recs: Vec<&SubjectRecord> = train.iter().map(|&i| get(i)).collect::<Result<_>>()?;
    let test_recs: Vec<&SubjectRecord> = test.iter().map(|&i| get(i)).collect::<Result<_>>()?;
    if let Some(r) = train_recs.iter().find(|r| r.group != Group::HC) {
        return Err(Error::data(format!("{} is not HC and cannot be used for training", r.key())));
    }
    for r in train_recs.iter().chain(&test_recs) {
        r.validate()?;
    }

    let ages: Vec<f64> = train_recs.iter().map(|r| r.age).collect();
    let icvs: Vec<f64> = train_recs.iter().map(|r| compute_icv(r)).collect();
    let age_bins = fit_quantile_bins(&ages, N_BINS)?;
    let icv_bins = fit_quantile_bins(&icvs, N_BINS)?;

    let features = |recs: &[&SubjectRecord]| -> Result<Matrix> {
        let rows = recs.iter().map(|r| icv_scale(r)).collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, super::record::N_ROI));
        }
        Matrix::from_rows(&rows)
    };
    let covariates = |recs: &[&SubjectRecord]| -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = recs.iter().map(|r| encode_covariates(r, &age_bins, &icv_bins).0).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, super::features::COVARIATE_DIM));
        }
        Matrix::from_rows(&rows)
    };

    let train_raw = features(&train_recs)?;
    let scaler = RobustScaler::fit(&train_raw)?;
    let train_x = scaler.transform(&train_raw)?;
    let test_x = scaler.transform(&features(&test_recs)?)?;
    let train_c = covariates(&train_recs)?;
    let test_c = covariates(&test_recs)?;

    Ok(PreparedDataset {
        train_x,
        train_c,
        test_x,
        test_c,
        train_ids: train_recs.iter().map(|r| r.key()).collect(),
        test_ids: test_recs.iter().map(|r| r.key()).collect(),
        test_labels: test_recs.iter().map(|r| r.group).collect(),
        scaler,
        age_bins,
        icv_bins,
    })
}

/// Random HC train/test split followed by [`prepare`].
pub fn split_cohort(cohort: &Cohort, hc_train_fraction: f64, rng: &mut Rng) -> Result<PreparedDataset> {
    let (train, test) = split_indices(cohort, hc_train_fraction, rng)?;
    prepare(cohort, &train, &test)
}
