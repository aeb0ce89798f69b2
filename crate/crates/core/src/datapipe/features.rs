use serde::{Deserialize, Serialize};

use super::record::{Gender, SubjectRecord};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

/// Quantile bins per binned covariate.
pub const N_BINS: usize = 10;

/// `[gender_M, gender_F, age_bin_0..9, icv_bin_0..9]`
pub const COVARIATE_DIM: usize = 2 + 2 * N_BINS;

/// Intracranial volume: the sum of all ROI volumes.
pub fn compute_icv(record: &SubjectRecord) -> f64 {
    record.roi.iter().sum()
}

/// ROI volumes divided by ICV.
pub fn icv_scale(record: &SubjectRecord) -> Result<Vec<f64>> {
    let icv = compute_icv(record);
    if !(icv > 0.0 && icv.is_finite()) {
        return Err(Error::data(format!("{}: ICV is {icv}, cannot scale", record.key())));
    }
    Ok(record.roi.iter().map(|v| v / icv).collect())
}

/// Quantile `q` of already-sorted values, linear interpolation between order
/// statistics at position `q · (n − 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Interior cut points of a quantile binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub edges: Vec<f64>,
}

impl BinEdges {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Number of edges strictly below `value`; values outside the fitted
    /// range land in the first or last bin.
    pub fn bin_index(&self, value: f64) -> usize {
        self.edges.iter().filter(|&&e| e < value).count().min(self.n_bins() - 1)
    }
}

/// Edges at the `k / n_bins` quantiles, `k = 1..n_bins-1`.
pub fn fit_quantile_bins(values: &[f64], n_bins: usize) -> Result<BinEdges> {
    if values.is_empty() {
        return Err(Error::data("cannot fit quantile bins on an empty sample"));
    }
    if n_bins == 0 {
        return Err(Error::config("n_bins must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("cannot fit quantile bins on non-finite values"));
    }
    let sorted = sorted_copy(values);
    let edges = (1..n_bins).map(|k| quantile(&sorted, k as f64 / n_bins as f64)).collect();
    Ok(BinEdges { edges })
}

/// One-hot conditioning vector, layout `[M, F, age bins.., ICV bins..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn ones(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect()
    }
}

pub fn encode_covariates(record: &SubjectRecord, age_bins: &BinEdges, icv_bins: &BinEdges) -> CovariateVector {
    let mut v = vec![0.0; 2 + age_bins.n_bins() + icv_bins.n_bins()];
    v[match record.gender {
        Gender::M => 0,
        Gender::F => 1,
    }] = 1.0;
    v[2 + age_bins.bin_index(record.age)] = 1.0;
    v[2 + age_bins.n_bins() + icv_bins.bin_index(compute_icv(record))] = 1.0;
    CovariateVector(v)
}

/// Per-feature median / interquartile-range scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
}

impl RobustScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::data("cannot fit a scaler on zero rows"));
        }
        let mut median = Vec::with_capacity(x.cols());
        let mut iqr = Vec::with_capacity(x.cols());
        let mut column = Vec::with_capacity(x.rows());
        for j in 0..x.cols() {
            column.clear();
            column.extend((0..x.rows()).map(|i| x.get(i, j)));
            column.sort_by(f64::total_cmp);
            median.push(quantile(&column, 0.5));
            iqr.push(quantile(&column, 0.75) - quantile(&column, 0.25));
        }
        Ok(RobustScaler { median, iqr })
    }

    /// A zero IQR divides by 1 instead.
    fn divisor(&self, j: usize) -> f64 {
        if self.iqr[j] > 0.0 {
            self.iqr[j]
        } else {
            1.0
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.median[j]) / self.divisor(j);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.divisor(j) + self.median[j];
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.median.len() {
            return Err(Error::dim(format!("scaler fit on {} features, got {}", self.median.len(), x.cols())));
        }
        Ok(())
    }
}
