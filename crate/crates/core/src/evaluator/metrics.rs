use serde::{Deserialize, Serialize};

use super::deviation::DeviationMap;
use crate::datapipe::quantile;
use crate::diffcore::{derive_seed, Rng};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};

/// Area under the ROC curve with AD (`positive`) as the positive class:
/// `P(pos > neg) + ½ P(tie)`, computed from mid-ranks.
pub fn roc_auc(negative: &[f64], positive: &[f64]) -> Result<f64> {
    if negative.is_empty() || positive.is_empty() {
        return Err(Error::data("roc_auc needs at least one score in each group"));
    }
    if negative.iter().chain(positive).any(|v| v.is_nan()) {
        return Err(Error::data("roc_auc scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> =
        negative.iter().map(|&v| (v, false)).chain(positive.iter().map(|&v| (v, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mid-ranks are k + (len + 1) / 2, so twice the rank sum stays integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let positives = all[i..j].iter().filter(|e| e.1).count() as u64;
        twice_rank_sum += positives * (2 * i as u64 + (j - i) as u64 + 1);
        i = j;
    }
    let (n_pos, n_neg) = (positive.len() as u64, negative.len() as u64);
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss)
}

/// Standardized mean difference `(mean(b) − mean(a)) / pooled SD`, or
/// `None` when the pooled SD is zero.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, ssa) = mean_var(a);
    let (mb, ssb) = mean_var(b);
    let pooled = ((ssa + ssb) / (a.len() + b.len() - 2) as f64).sqrt();
    (pooled > 0.0 && pooled.is_finite()).then(|| (mb - ma) / pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectSettings {
    pub resamples: usize,
    pub ci_level: f64,
}

impl Default for EffectSettings {
    fn default() -> Self {
        EffectSettings { resamples: 2000, ci_level: 0.95 }
    }
}

impl EffectSettings {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::config("effect-size bootstrap needs at least one resample"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::config(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeResult {
    pub region: usize,
    pub d: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub selected: bool,
    /// Pooled SD was zero; `d` is reported as 0 and never selected.
    pub degenerate: bool,
}

/// Effect size of AD vs HC deviations for every region, with a stratified
/// percentile-bootstrap CI. The CI is widened to contain `d` when the
/// percentile interval misses it. Region `i` draws its resamples from
/// `derive_seed(seed, i)`, so results do not depend on `exec`.
pub fn effect_sizes(
    hc: &[DeviationMap],
    ad: &[DeviationMap],
    settings: &EffectSettings,
    seed: u64,
    exec: Execution,
) -> Result<Vec<EffectSizeResult>> {
    settings.validate()?;
    if hc.len() < 2 || ad.len() < 2 {
        return Err(Error::data(format!(
            "effect sizes need at least two subjects per group (got {} HC, {} AD)",
            hc.len(),
            ad.len()
        )));
    }
    let regions = hc[0].errors.len();
    if hc.iter().chain(ad).any(|m| m.errors.len() != regions) {
        return Err(Error::dim("deviation maps have differing region counts"));
    }
    let column = |maps: &[DeviationMap], i: usize| maps.iter().map(|m| m.errors[i]).collect::<Vec<f64>>();
    let tail = (1.0 - settings.ci_level) / 2.0;
    Ok(map_indexed(regions, exec, |i| {
        let (h, a) = (column(hc, i), column(ad, i));
        let Some(d) = cohens_d(&h, &a) else {
            return EffectSizeResult { region: i, d: 0.0, ci_low: 0.0, ci_high: 0.0, selected: false, degenerate: true };
        };
        let mut rng = Rng::new(derive_seed(seed, i as u64));
        let (mut hs, mut as_) = (vec![0.0; h.len()], vec![0.0; a.len()]);
        let mut stats: Vec<f64> = (0..settings.resamples)
            .map(|_| {
                hs.iter_mut().for_each(|v| *v = h[rng.below(h.len())]);
                as_.iter_mut().for_each(|v| *v = a[rng.below(a.len())]);
                cohens_d(&hs, &as_).unwrap_or(0.0)
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        let ci_low = quantile(&stats, tail).min(d);
        let ci_high = quantile(&stats, 1.0 - tail).max(d);
        EffectSizeResult { region: i, d, ci_low, ci_high, selected: ci_low > 0.0 || ci_high < 0.0, degenerate: false }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::Group;

    fn maps(group: Group, columns: &[Vec<f64>]) -> Vec<DeviationMap> {
        let n = columns[0].len();
        (0..n)
            .map(|s| DeviationMap::from_errors(format!("{s}"), group, columns.iter().map(|c| c[s]).collect()))
            .collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3, 0.4], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[1.0; 4], &[1.0; 3]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.75);
        assert!(roc_auc(&[], &[1.0]).is_err());
        assert!(roc_auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn cohens_d_hand_example() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]), Some(2.0));
        assert_eq!(cohens_d(&[2.0, 2.0], &[2.0, 2.0]), None);
    }

    #[test]
    fn identical_groups_are_not_selected() {
        let col: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let hc = maps(Group::HC, std::slice::from_ref(&col));
        let ad = maps(Group::AD, &[col]);
        let r = effect_sizes(&hc, &ad, &EffectSettings::default(), 1, Execution::Sequential).unwrap();
        assert_eq!(r[0].d, 0.0);
        assert!(!r[0].selected);
        assert!(r[0].ci_low <= 0.0 && r[0].ci_high >= 0.0);
    }

    #[test]
    fn degenerate_region_is_flagged() {
        let hc = maps(Group::HC, &[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]]);
        let ad = maps(Group::AD, &[vec![1.0, 1.0], vec![5.0, 6.0]]);
        let r = effect_sizes(&hc, &ad, &EffectSettings::default(), 1, Execution::Sequential).unwrap();
        assert!(r[0].degenerate && !r[0].selected && r[0].d == 0.0);
        assert!(!r[1].degenerate && r[1].d > 0.0);
    }

    #[test]
    fn strong_shift_is_selected_with_positive_sign() {
        let mut rng = Rng::new(5);
        let hc_col: Vec<f64> = (0..200).map(|_| rng.normal(1.0, 0.3)).collect();
        let ad_col: Vec<f64> = (0..20).map(|_| rng.normal(3.0, 0.3)).collect();
        let r = effect_sizes(
            &maps(Group::HC, &[hc_col]),
            &maps(Group::AD, &[ad_col]),
            &EffectSettings::default(),
            9,
            Execution::Sequential,
        )
        .unwrap();
        assert!(r[0].selected && r[0].d > 3.0 && r[0].ci_low > 0.0);
    }

    #[test]
    fn execution_mode_does_not_change_results() {
        let mut rng = Rng::new(6);
        let cols = |n: usize, rng: &mut Rng| (0..8).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect::<Vec<Vec<f64>>>();
        let hc = maps(Group::HC, &cols(40, &mut rng));
        let ad = maps(Group::AD, &cols(10, &mut rng));
        let s = EffectSettings { resamples: 300, ..EffectSettings::default() };
        assert_eq!(
            effect_sizes(&hc, &ad, &s, 3, Execution::Sequential).unwrap(),
            effect_sizes(&hc, &ad, &s, 3, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn too_few_subjects() {
        let hc = maps(Group::HC, &[vec![1.0]]);
        let ad = maps(Group::AD, &[vec![1.0, 2.0]]);
        assert!(effect_sizes(&hc, &ad, &EffectSettings::default(), 1, Execution::Sequential).is_err());
    }
}
