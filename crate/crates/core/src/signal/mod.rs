//! EEG preprocessing and fractal-dimension features.

pub mod dwt;
pub mod features;
pub mod filter;
pub mod higuchi;
pub mod window;

pub use dwt::{band_reconstruct, dwt_decompose, Decomposition};
pub use features::{
    extract_batch, extract_features, extract_with, FeatureConfig, FeatureMode, FeatureVector,
};
pub use filter::{bandpass, BandpassFilter};
pub use higuchi::{higuchi_fd, DEFAULT_K_MAX};
pub use window::{car_filter, EegWindow, CHANNEL_LABELS, N_CHANNELS, SAMPLE_RATE, WINDOW_LEN};
