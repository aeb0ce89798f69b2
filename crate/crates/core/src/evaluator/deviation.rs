use serde::{Deserialize, Serialize};

use crate::datapipe::Group;
use crate::diffcore::{sample_standard_normal, Matrix, Rng};
use crate::error::{Error, Result};
use crate::models::{reparameterize_with, Encoded, NormativeModel};

/// Per-region squared reconstruction errors of one subject and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMap {
    pub subject_id: String,
    pub group: Group,
    pub errors: Vec<f64>,
    pub d_mse: f64,
}

impl DeviationMap {
    pub fn new(subject_id: impl Into<String>, group: Group, x: &[f64], x_hat: &[f64]) -> Self {
        let errors: Vec<f64> = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).collect();
        Self::from_errors(subject_id, group, errors)
    }

    pub fn from_errors(subject_id: impl Into<String>, group: Group, errors: Vec<f64>) -> Self {
        let d_mse = if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 };
        DeviationMap { subject_id: subject_id.into(), group, errors, d_mse }
    }
}

fn check_labels(x: &Matrix, ids: &[String], groups: &[Group]) -> Result<()> {
    if ids.len() != x.rows() || groups.len() != x.rows() {
        return Err(Error::dim(format!(
            "{} rows but {} ids and {} group labels",
            x.rows(),
            ids.len(),
            groups.len()
        )));
    }
    Ok(())
}

/// Scores each row by reconstructing it through the posterior mean.
pub fn deviation_maps(
    model: &NormativeModel,
    x: &Matrix,
    c: Option<&Matrix>,
    ids: &[String],
    groups: &[Group],
) -> Result<Vec<DeviationMap>> {
    check_labels(x, ids, groups)?;
    let x_hat = model.reconstruct(x, c)?;
    Ok((0..x.rows()).map(|r| DeviationMap::new(ids[r].clone(), groups[r], x.row(r), x_hat.row(r))).collect())
}

/// Monte-Carlo variant: squared errors averaged over `samples` latent draws
/// from the posterior. Deterministic encoders give the same result as
/// [`deviation_maps`].
pub fn deviation_maps_sampled(
    model: &NormativeModel,
    x: &Matrix,
    c: Option<&Matrix>,
    ids: &[String],
    groups: &[Group],
    samples: usize,
    rng: &mut Rng,
) -> Result<Vec<DeviationMap>> {
    check_labels(x, ids, groups)?;
    if samples == 0 {
        return Err(Error::config("Monte-Carlo deviation needs at least one sample"));
    }
    let (mean, logvar) = match model.encode(x, c)? {
        Encoded::Gaussian { mean, logvar } => (mean, logvar),
        Encoded::Point(_) => return deviation_maps(model, x, c, ids, groups),
    };
    let mut acc = Matrix::zeros(x.rows(), x.cols());
    for _ in 0..samples {
        let eps = sample_standard_normal(rng, mean.rows(), mean.cols());
        let x_hat = model.decode(&reparameterize_with(&mean, &logvar, &eps)?, c)?;
        let sq = x.zip_map(&x_hat, |a, b| (a - b) * (a - b))?;
        acc.add_scaled(&sq, 1.0 / samples as f64)?;
    }
    Ok((0..x.rows())
        .map(|r| DeviationMap::from_errors(ids[r].clone(), groups[r], acc.row(r).to_vec()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelConfig, Variant};

    #[test]
    fn perfect_and_constant_reconstructions() {
        let x = [0.3, -1.0, 2.0, 4.0];
        let m = DeviationMap::new("s", Group::HC, &x, &x);
        assert!(m.errors.iter().all(|&e| e == 0.0));
        assert_eq!(m.d_mse, 0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        let m = DeviationMap::new("s", Group::AD, &x, &shifted);
        assert!((m.d_mse - 0.01).abs() < 1e-15);
    }

    #[test]
    fn model_scores_use_posterior_mean() {
        let mut rng = Rng::new(1);
        let model = NormativeModel::new(ModelConfig::new(Variant::VAE, 10, [100, 100]), &mut rng).unwrap();
        let x = sample_standard_normal(&mut rng, 3, 100);
        let ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        let groups = [Group::HC, Group::HC, Group::AD];
        let maps = deviation_maps(&model, &x, None, &ids, &groups).unwrap();
        let again = deviation_maps(&model, &x, None, &ids, &groups).unwrap();
        assert_eq!(maps, again);
        let x_hat = model.reconstruct(&x, None).unwrap();
        for (r, m) in maps.iter().enumerate() {
            for i in 0..100 {
                assert_eq!(m.errors[i], (x.get(r, i) - x_hat.get(r, i)).powi(2));
            }
        }
        assert!(deviation_maps(&model, &x, None, &ids[..2], &groups).is_err());
    }

    #[test]
    fn sampled_scores_for_point_encoders_match_mean_scores() {
        let mut rng = Rng::new(2);
        let model = NormativeModel::new(ModelConfig::new(Variant::AE, 10, [100, 100]), &mut rng).unwrap();
        let x = sample_standard_normal(&mut rng, 2, 100);
        let ids = vec!["a".to_string(), "b".to_string()];
        let groups = [Group::HC, Group::AD];
        assert_eq!(
            deviation_maps_sampled(&model, &x, None, &ids, &groups, 5, &mut rng).unwrap(),
            deviation_maps(&model, &x, None, &ids, &groups).unwrap()
        );
    }
}
