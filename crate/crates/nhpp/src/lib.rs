//! Event-time modeling with non-homogeneous Poisson processes.
//!
//! Rate functions are spline basis expansions fitted by constrained maximum
//! likelihood. On top of the fitting core the crate provides per-class
//! classifiers with Bayes posteriors, EM clustering over NHPP mixtures, a
//! thinning-based simulator, and a cross-validation harness.

pub mod basis;
pub mod classify;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod likelihood;
pub mod numeric;
pub mod optimizer;
pub mod simulate;

pub use basis::BasisSpec;
pub use classify::{ClassifierModel, LabeledDataset, Posterior};
pub use cluster::{fit_em, EmConfig, EmFit, MixtureModel, Responsibilities};
pub use error::{Error, Result};
pub use eval::{clustering_accuracy, cross_validate, CvConfig, MetricsReport};
pub use likelihood::{EventSeries, RateModel};
pub use optimizer::{fit_mle, FitConfig, FitReport};
pub use simulate::{make_synthetic_dataset, thin, RateKind, RateSpec};
