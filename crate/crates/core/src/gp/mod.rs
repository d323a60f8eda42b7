//! Gaussian-process inference: Phase I (PAD from EEG features through the
//! deep kernel), Phase II (performance from PAD means), and their Laplace
//! composition.

pub mod factor;
pub mod kernel;
pub mod laplace;
pub mod pad;
pub mod perf;
pub mod regressor;

pub use factor::GramFactor;
pub use kernel::{rbf_kernel, KernelParams};
pub use laplace::{laplace_marginal, laplace_marginal_joint, LinearGaussianLikelihood};
pub use pad::{heuristic_kernels, PadGpModel, PadPosterior};
pub use perf::{
    fit_perf_gp, prob_q_at_least, qot_posterior, qot_posterior_unscented, GridSearchReport, PerfGpConfig,
    PerfGpModel, QotPosterior,
};
pub use regressor::GpRegressor;
