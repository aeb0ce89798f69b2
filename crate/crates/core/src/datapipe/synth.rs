use serde::{Deserialize, Serialize};

use super::record::{Cohort, Gender, Group, Provenance, SubjectRecord, N_ROI};
use crate::diffcore::Rng;
use crate::error::{Error, Result};

/// Planted-effect cohort description.
///
/// HC volumes follow `s · base_i · (1 − slope_i · (age − age_min))` plus
/// Gaussian noise with standard deviation `noise_sd · s · base_i`, where `s`
/// is a per-subject head-size factor. AD records additionally have every
/// region in `atrophy_regions` multiplied by `1 − atrophy_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_hc: usize,
    pub n_ad: usize,
    pub atrophy_regions: Vec<usize>,
    pub atrophy_fraction: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// Largest fractional volume change across the full age range.
    #[serde(default = "default_age_effect")]
    pub age_effect: f64,
    /// Relative spread of the per-subject head-size factor.
    #[serde(default = "default_head_size_sd")]
    pub head_size_sd: f64,
    /// Mean regional volume; 100 regions of ~610 give a Table-1-sized ICV.
    #[serde(default = "default_base_volume")]
    pub base_volume: f64,
    /// Age range for AD records; defaults to the HC range.
    #[serde(default)]
    pub ad_age_min: Option<f64>,
    #[serde(default)]
    pub ad_age_max: Option<f64>,
    /// Regions that change with age; `None` means all of them.
    #[serde(default)]
    pub age_regions: Option<Vec<usize>>,
}

fn default_age_effect() -> f64 {
    0.2
}

fn default_head_size_sd() -> f64 {
    0.15
}

fn default_base_volume() -> f64 {
    610.0
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_hc: 1476,
            n_ad: 21,
            atrophy_regions: vec![5, 17, 23, 31, 42, 56, 64, 71, 88, 93],
            atrophy_fraction: 0.5,
            age_min: 55.0,
            age_max: 82.0,
            noise_sd: 0.2,
            seed: 2023,
            age_effect: default_age_effect(),
            head_size_sd: default_head_size_sd(),
            base_volume: default_base_volume(),
            ad_age_min: None,
            ad_age_max: None,
            age_regions: None,
        }
    }
}

/// Per-region generative parameters shared by every subject of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProfile {
    pub base_volume: Vec<f64>,
    /// Fractional volume loss per year of age.
    pub age_slope: Vec<f64>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_hc == 0 || self.n_ad == 0 {
            return bad(format!("n_hc and n_ad must be positive (got {} / {})", self.n_hc, self.n_ad));
        }
        if !(0.0..1.0).contains(&self.atrophy_fraction) {
            return bad(format!("atrophy_fraction must lie in [0, 1), got {}", self.atrophy_fraction));
        }
        let (ad_min, ad_max) = self.ad_age_range();
        if !(self.age_min > 0.0 && self.age_min < self.age_max && ad_min > 0.0 && ad_min < ad_max) {
            return bad("age ranges must satisfy 0 < min < max".into());
        }
        if !(self.noise_sd >= 0.0 && self.head_size_sd >= 0.0 && self.base_volume > 0.0) {
            return bad("noise_sd and head_size_sd must be non-negative, base_volume positive".into());
        }
        if !(0.0..1.0).contains(&self.age_effect) {
            return bad(format!("age_effect must lie in [0, 1), got {}", self.age_effect));
        }
        for (what, regions) in [("atrophy", Some(&self.atrophy_regions)), ("age", self.age_regions.as_ref())] {
            let mut seen = [false; N_ROI];
            for &r in regions.into_iter().flatten() {
                if r >= N_ROI || seen[r] {
                    return bad(format!("{what} region {r} is out of range or repeated"));
                }
                seen[r] = true;
            }
        }
        Ok(())
    }

    fn ad_age_range(&self) -> (f64, f64) {
        (self.ad_age_min.unwrap_or(self.age_min), self.ad_age_max.unwrap_or(self.age_max))
    }

    /// Regional bases in `base_volume · [0.5, 1.5)` and age slopes whose total
    /// loss over the age range lies in `age_effect · [0, 1)`; regions
    /// outside `age_regions` get slope 0.
    pub fn region_profile(&self) -> RegionProfile {
        let mut rng = Rng::new(self.seed).fork(0);
        let span = self.age_max - self.age_min;
        let base_volume = (0..N_ROI).map(|_| self.base_volume * (0.5 + rng.uniform())).collect();
        let age_slope = (0..N_ROI)
            .map(|k| {
                let slope = self.age_effect * rng.uniform() / span;
                match &self.age_regions {
                    Some(regions) if !regions.contains(&k) => 0.0,
                    _ => slope,
                }
            })
            .collect();
        RegionProfile { base_volume, age_slope }
    }
}

pub fn generate_synthetic_cohort(spec: &SynthSpec) -> Result<Cohort> {
    spec.validate()?;
    let profile = spec.region_profile();
    let mut rng = Rng::new(spec.seed).fork(1);
    let mut atrophied = [false; N_ROI];
    for &r in &spec.atrophy_regions {
        atrophied[r] = true;
    }
    let (ad_min, ad_max) = spec.ad_age_range();

    let mut records = Vec::with_capacity(spec.n_hc + spec.n_ad);
    for i in 0..spec.n_hc + spec.n_ad {
        let group = if i < spec.n_hc { Group::HC } else { Group::AD };
        let (lo, hi) = if group == Group::HC { (spec.age_min, spec.age_max) } else { (ad_min, ad_max) };
        let gender = if rng.uniform() < 0.5 { Gender::M } else { Gender::F };
        let age = lo + (hi - lo) * rng.uniform();
        let head = (1.0 + spec.head_size_sd * rng.standard_normal()).max(0.3);
        let roi = (0..N_ROI)
            .map(|k| {
                let mean = head * profile.base_volume[k] * (1.0 - profile.age_slope[k] * (age - spec.age_min));
                let mut v = mean + spec.noise_sd * head * profile.base_volume[k] * rng.standard_normal();
                if group == Group::AD && atrophied[k] {
                    v *= 1.0 - spec.atrophy_fraction;
                }
                v.max(0.0)
            })
            .collect();
        let (prefix, n) = if group == Group::HC { ("HC", i) } else { ("AD", i - spec.n_hc) };
        records.push(SubjectRecord {
            subject_id: format!("{prefix}{:05}", n + 1),
            session_day: Some(0),
            group,
            age,
            gender,
            roi,
        });
    }
    Ok(Cohort { records, provenance: Provenance::Synthetic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let c = generate_synthetic_cohort(&SynthSpec::default()).unwrap();
        assert_eq!(c.count(Group::HC), 1476);
        assert_eq!(c.count(Group::AD), 21);
        assert!(c.records.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn deterministic() {
        let s = SynthSpec { n_hc: 50, n_ad: 5, ..Default::default() };
        assert_eq!(generate_synthetic_cohort(&s).unwrap(), generate_synthetic_cohort(&s).unwrap());
    }

    #[test]
    fn noiseless_atrophy_halves_planted_regions() {
        let s = SynthSpec {
            n_hc: 20,
            n_ad: 5,
            atrophy_fraction: 0.5,
            noise_sd: 0.0,
            head_size_sd: 0.0,
            age_effect: 0.0,
            ..Default::default()
        };
        let c = generate_synthetic_cohort(&s).unwrap();
        let mean = |g: Group, k: usize| {
            let v: Vec<f64> = c.of_group(g).map(|r| r.roi[k]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        for k in 0..N_ROI {
            let ratio = mean(Group::AD, k) / mean(Group::HC, k);
            let expected = if s.atrophy_regions.contains(&k) { 0.5 } else { 1.0 };
            assert!((ratio - expected).abs() < 1e-12, "region {k}: {ratio}");
        }
    }

    #[test]
    fn zero_fraction_leaves_groups_exchangeable() {
        let s = SynthSpec { n_hc: 10, n_ad: 10, atrophy_fraction: 0.0, noise_sd: 0.0, head_size_sd: 0.0, age_effect: 0.0, ..Default::default() };
        let c = generate_synthetic_cohort(&s).unwrap();
        let first = &c.records[0].roi;
        assert!(c.records.iter().all(|r| &r.roi == first));
    }

    #[test]
    fn invalid_specs() {
        for s in [
            SynthSpec { n_hc: 0, ..Default::default() },
            SynthSpec { atrophy_fraction: 1.0, ..Default::default() },
            SynthSpec { atrophy_fraction: -0.1, ..Default::default() },
            SynthSpec { atrophy_regions: vec![100], ..Default::default() },
            SynthSpec { age_min: 90.0, age_max: 60.0, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic_cohort(&s), Err(Error::Config(_))));
        }
    }

    #[test]
    fn spec_json_minimal_keys() {
        let s: SynthSpec = serde_json::from_str(
            r#"{"n_hc":3,"n_ad":1,"atrophy_regions":[1],"atrophy_fraction":0.2,
                "age_min":60,"age_max":80,"noise_sd":0.05,"seed":1}"#,
        )
        .unwrap();
        assert_eq!(s.age_effect, 0.2);
        assert_eq!(s.ad_age_min, None);
    }
}
