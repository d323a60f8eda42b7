//! Dataset generation, statistics and file formats.

pub mod bundle;
pub mod datasets;
pub mod files;
pub mod io;
pub mod stats;

pub use bundle::{DbnBundle, PadGpBundle, PerfGpBundle};
pub use datasets::{
    generate_elicitation, generate_induction, generate_unlabeled, stratified_labels, ElicitationDataset, InductionDataset,
};
pub use files::{
    load_elicitation, load_feature_rows, load_induction, load_trace, save_elicitation, save_features, save_induction,
    save_trace, FeatureTable, Prediction, TraceSidecar,
};
pub use stats::{spearman, spearman_with, SpearmanResult};
