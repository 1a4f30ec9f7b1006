//! Per-class rate estimation and Bayes-posterior classification.
//!
//! Training fits one rate model per class by pooling that class's
//! observations (unit weights). A test observation is scored by the posterior
//! `P(g = ν | χ) ∝ π_ν exp(-M_ν(T)) Π_i λ_ν(χ_i)`, evaluated entirely in log
//! space; with the default uniform priors the prior factor cancels.

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::likelihood::{EventSeries, RateModel};
use crate::numeric::log_sum_exp;
use crate::optimizer::{fit_mle, FitConfig, FitReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Labeled observations with 0-based class labels in `0..class_count`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    observations: Vec<EventSeries>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    /// Every label must be in range, every class non-empty, and all
    /// observations must share one window end.
    pub fn new(
        observations: Vec<EventSeries>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if observations.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} observations but {} labels",
                observations.len(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&g| g >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        for class in 0..class_count {
            if !labels.contains(&class) {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has no training observations"
                )));
            }
        }
        if let Some(first) = observations.first() {
            let window = first.window_end();
            if observations.iter().any(|o| o.window_end() != window) {
                return Err(Error::InvalidArgument(
                    "observations must share one window end".into(),
                ));
            }
        }
        Ok(LabeledDataset {
            observations,
            labels,
            class_count,
        })
    }

    pub fn observations(&self) -> &[EventSeries] {
        &self.observations
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn window_end(&self) -> Option<f64> {
        self.observations.first().map(|o| o.window_end())
    }

    /// Members of one class, in dataset order.
    pub fn class_members(&self, class: usize) -> Vec<&EventSeries> {
        self.observations
            .iter()
            .zip(&self.labels)
            .filter(|(_, &g)| g == class)
            .map(|(o, _)| o)
            .collect()
    }

    /// The subset with the given indices, relabeled over the same classes.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let observations = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(observations, labels, self.class_count)
    }
}

/// Posterior class probabilities for one observation.
///
/// `degenerate` marks the all-classes-impossible case (every class has
/// log-likelihood `-inf`), reported as a uniform posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probabilities: Vec<f64>,
    pub degenerate: bool,
}

impl Posterior {
    /// Argmax class; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate().skip(1) {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// One fitted rate model per class plus class priors (uniform by default).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierModel {
    class_rates: Vec<RateModel>,
    priors: Vec<f64>,
}

impl ClassifierModel {
    /// Assemble a model from pre-fitted per-class rates with uniform priors.
    pub fn from_rates(class_rates: Vec<RateModel>) -> Result<Self> {
        if class_rates.is_empty() {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        let basis = class_rates[0].basis();
        if class_rates.iter().any(|m| m.basis() != basis) {
            return Err(Error::InvalidArgument(
                "all class rates must share one basis".into(),
            ));
        }
        let k = class_rates.len();
        Ok(ClassifierModel {
            class_rates,
            priors: vec![1.0 / k as f64; k],
        })
    }

    /// Replace the uniform priors (e.g. with training class frequencies).
    pub fn with_priors(mut self, priors: Vec<f64>) -> Result<Self> {
        if priors.len() != self.class_rates.len() {
            return Err(Error::InvalidArgument(
                "prior count must match class count".into(),
            ));
        }
        if priors.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidArgument(
                "priors must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "priors must sum to 1, got {total}"
            )));
        }
        self.priors = priors;
        Ok(self)
    }

    /// Fit one rate model per class by pooled maximum likelihood.
    pub fn train(data: &LabeledDataset, basis: &BasisSpec, config: &FitConfig) -> Result<Self> {
        Ok(Self::train_with_reports(data, basis, config)?.0)
    }

    /// As [`train`](Self::train), also returning per-class solver reports.
    pub fn train_with_reports(
        data: &LabeledDataset,
        basis: &BasisSpec,
        config: &FitConfig,
    ) -> Result<(Self, Vec<FitReport>)> {
        let reports: Vec<FitReport> = (0..data.class_count())
            .into_par_iter()
            .map(|class| {
                let members: Vec<(&EventSeries, f64)> = data
                    .class_members(class)
                    .into_iter()
                    .map(|s| (s, 1.0))
                    .collect();
                fit_mle(&members, basis, config)
            })
            .collect::<Result<_>>()?;
        let class_rates = reports
            .iter()
            .map(|r| RateModel::new(basis.clone(), r.coefficients.clone()))
            .collect::<Result<_>>()?;
        Ok((Self::from_rates(class_rates)?, reports))
    }

    pub fn class_count(&self) -> usize {
        self.class_rates.len()
    }

    pub fn class_rates(&self) -> &[RateModel] {
        &self.class_rates
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Posterior class probabilities via log-space Bayes.
    pub fn posterior(&self, series: &EventSeries) -> Result<Posterior> {
        let mut scores = Vec::with_capacity(self.class_rates.len());
        for (model, &prior) in self.class_rates.iter().zip(&self.priors) {
            let ll = model.log_likelihood(series)?;
            let prior_term = if prior > 0.0 {
                prior.ln()
            } else {
                f64::NEG_INFINITY
            };
            scores.push(prior_term + ll);
        }
        let norm = log_sum_exp(&scores);
        if norm == f64::NEG_INFINITY {
            let k = scores.len();
            return Ok(Posterior {
                probabilities: vec![1.0 / k as f64; k],
                degenerate: true,
            });
        }
        let probabilities = scores.iter().map(|s| (s - norm).exp()).collect();
        Ok(Posterior {
            probabilities,
            degenerate: false,
        })
    }

    /// Maximum-posterior class; ties and degenerate posteriors go to class 0.
    pub fn assign(&self, series: &EventSeries) -> Result<usize> {
        Ok(self.posterior(series)?.argmax())
    }
}
