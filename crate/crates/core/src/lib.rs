//! Dataset diversity toolkit.
//!
//! Scores named subsets ("scenarios") of a multimodal classification dataset
//! with image, text and metadata diversity metrics, ranks the scenarios per
//! metric, correlates those rankings, and inspects training dynamics through
//! data maps.
//!
//! The pipeline, module by module:
//!
//! - [`dataio`]: IDX and DIVT codecs, CSV/JSONL table loading, scenario configs
//! - [`features`]: pixel and HOG feature extraction
//! - [`numeric`]: dense symmetric eigensolvers, cosine kernels, covariance
//! - [`divmetrics`]: IS, FID, Vendi Score, RougeL, semantic and metadata diversity
//! - [`resample`]: stratified subsampling, bootstrap CIs, group-aware k-fold
//! - [`stats`]: rankings, Spearman correlation, ROC AUC
//! - [`trainer`]: reference softmax classifier with early stopping
//! - [`datamap`]: confidence/variability maps, KDE grids, subgroup flagging
//! - [`toygen`]: synthetic digit generator with morphological perturbations
//! - [`report`]: JSON/CSV/SVG report writers and the run manifest

pub mod datamap;
pub mod dataio;
pub mod divmetrics;
mod error;
pub mod features;
pub mod numeric;
pub mod report;
pub mod resample;
pub mod stats;
pub mod toygen;
pub mod trainer;

pub use error::{Error, Result};
