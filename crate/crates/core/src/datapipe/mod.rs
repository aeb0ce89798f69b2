//! ROI-volume ingestion and feature generation.
//!
//! Fixed pipeline order: ICV is summed from raw volumes, ROI volumes are
//! divided by ICV, then robust-scaled with statistics fit on the training HC
//! rows only. Covariate bins are fit on raw age and raw ICV of the same rows.

mod features;
mod ingest;
mod record;
mod split;
mod synth;

pub use features::{
    compute_icv, encode_covariates, fit_quantile_bins, icv_scale, quantile, BinEdges, CovariateVector,
    RobustScaler, COVARIATE_DIM, N_BINS,
};
pub use ingest::{ingest_csv, read_cohort, write_cohort, CSV_HEADER_PREFIX};
pub use record::{aggregate_sessions, Cohort, Gender, Group, Provenance, SubjectRecord, N_ROI};
pub use split::{prepare, split_cohort, split_indices, PreparedDataset};
pub use synth::{generate_synthetic_cohort, RegionProfile, SynthSpec};
