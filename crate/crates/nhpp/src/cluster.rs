//! EM clustering over a mixture of NHPPs.
//!
//! The E-step computes membership probabilities in log space; the M-step
//! updates mixing weights in closed form and refits each component by a
//! responsibility-weighted coefficient fit. Initialization assigns random
//! labels, fits per-label pooled rates, and the best of several restarts
//! (by incomplete-data log-likelihood) wins.

use crate::basis::BasisSpec;
use crate::classify::{ClassifierModel, LabeledDataset};
use crate::error::{Error, Result};
use crate::likelihood::{EventSeries, RateModel};
use crate::numeric::log_sum_exp;
use crate::optimizer::{fit_mle, FitConfig};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A component whose total responsibility falls below this mass has lost
/// every observation; the restart is abandoned.
const COLLAPSE_THRESHOLD: f64 = 1e-8;

/// `k` rate models sharing one basis, plus mixing weights summing to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<RateModel>,
    mixing_weights: Vec<f64>,
}

impl MixtureModel {
    pub fn new(components: Vec<RateModel>, mixing_weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        let basis = components[0].basis();
        if components.iter().any(|c| c.basis() != basis) {
            return Err(Error::InvalidArgument(
                "all components must share one basis".into(),
            ));
        }
        if mixing_weights.len() != components.len() {
            return Err(Error::InvalidArgument(
                "mixing weight count must match component count".into(),
            ));
        }
        if mixing_weights
            .iter()
            .any(|&w| !w.is_finite() || !(0.0..=1.0 + 1e-12).contains(&w))
        {
            return Err(Error::InvalidArgument(
                "mixing weights must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = mixing_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixing weights must sum to 1, got {total}"
            )));
        }
        Ok(MixtureModel {
            components,
            mixing_weights,
        })
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[RateModel] {
        &self.components
    }

    pub fn mixing_weights(&self) -> &[f64] {
        &self.mixing_weights
    }
}

/// Membership probabilities: one row per observation, one column per
/// component, rows summing to 1. Rows where every component was impossible
/// are uniform and listed in `degenerate_rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: Vec<f64>,
    observations: usize,
    components: usize,
    degenerate_rows: Vec<usize>,
}

impl Responsibilities {
    /// Build from explicit rows (e.g. hard 0/1 memberships); validates shape,
    /// entry range, and row sums.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "responsibility matrix needs at least one row".into(),
            ));
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::InvalidArgument(
                "responsibility matrix needs at least one column".into(),
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * k);
        for (l, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "row {l} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&r| !(0.0..=1.0 + 1e-12).contains(&r)) {
                return Err(Error::InvalidArgument(format!(
                    "row {l} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "row {l} sums to {sum}, expected 1"
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(Responsibilities {
            values,
            observations: rows.len(),
            components: k,
            degenerate_rows: Vec::new(),
        })
    }

    pub fn observation_count(&self) -> usize {
        self.observations
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.components..(l + 1) * self.components]
    }

    pub fn get(&self, l: usize, component: usize) -> f64 {
        self.values[l * self.components + component]
    }

    /// Observations for which every component had log-likelihood `-inf`.
    pub fn degenerate_rows(&self) -> &[usize] {
        &self.degenerate_rows
    }

    /// Argmax component per row; ties break to the lowest index.
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.observations)
            .map(|l| {
                let row = self.row(l);
                let mut best = 0;
                for (i, &r) in row.iter().enumerate().skip(1) {
                    if r > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// EM driver settings; `fit` configures the inner coefficient solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub component_count: usize,
    pub restarts: usize,
    pub convergence_threshold: f64,
    pub max_em_iterations: usize,
    pub rng_seed: u64,
    pub fit: FitConfig,
}

impl EmConfig {
    pub fn new(component_count: usize) -> Self {
        EmConfig {
            component_count,
            restarts: 3,
            convergence_threshold: 1e-4,
            max_em_iterations: 100,
            rng_seed: 0,
            fit: FitConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.component_count == 0 {
            return Err(Error::InvalidArgument(
                "need at least one mixture component".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("need at least one restart".into()));
        }
        if !self.convergence_threshold.is_finite() || self.convergence_threshold <= 0.0 {
            return Err(Error::InvalidArgument(
                "convergence threshold must be positive".into(),
            ));
        }
        if self.max_em_iterations == 0 {
            return Err(Error::InvalidArgument(
                "need at least one EM iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`fit_em`]: the winning restart's model, the responsibilities
/// under that model, and its log-likelihood trace (one entry per EM
/// iteration, starting at the initial model).
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    pub responsibilities: Responsibilities,
    pub log_likelihood_trace: Vec<f64>,
    pub restart_index: usize,
    pub initial_labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Membership probabilities of every observation under the current mixture.
pub fn e_step(model: &MixtureModel, data: &[EventSeries]) -> Result<Responsibilities> {
    Ok(e_step_with_log_likelihood(model, data)?.0)
}

fn e_step_with_log_likelihood(
    model: &MixtureModel,
    data: &[EventSeries],
) -> Result<(Responsibilities, f64)> {
    let k = model.component_count();
    let mut values = Vec::with_capacity(data.len() * k);
    let mut degenerate_rows = Vec::new();
    let mut total_ll = 0.0;
    let mut scores = vec![0.0; k];
    for (l, series) in data.iter().enumerate() {
        for (q, (component, &tau)) in model
            .components()
            .iter()
            .zip(model.mixing_weights())
            .enumerate()
        {
            let prior = if tau > 0.0 {
                tau.ln()
            } else {
                f64::NEG_INFINITY
            };
            scores[q] = prior + component.log_likelihood(series)?;
        }
        let norm = log_sum_exp(&scores);
        if norm == f64::NEG_INFINITY {
            values.extend(std::iter::repeat_n(1.0 / k as f64, k));
            degenerate_rows.push(l);
        } else {
            values.extend(scores.iter().map(|s| (s - norm).exp()));
            total_ll += norm;
        }
    }
    Ok((
        Responsibilities {
            values,
            observations: data.len(),
            components: k,
            degenerate_rows,
        },
        total_ll,
    ))
}

/// The incomplete-data log-likelihood `Σ_l ln Σ_q τ_q L_q(χ_l)`, the
/// quantity EM ascends and the convergence monitor for [`fit_em`].
pub fn mixture_log_likelihood(model: &MixtureModel, data: &[EventSeries]) -> Result<f64> {
    let k = model.component_count();
    let mut total = 0.0;
    let mut scores = vec![0.0; k];
    for series in data {
        for (q, (component, &tau)) in model
            .components()
            .iter()
            .zip(model.mixing_weights())
            .enumerate()
        {
            let prior = if tau > 0.0 {
                tau.ln()
            } else {
                f64::NEG_INFINITY
            };
            scores[q] = prior + component.log_likelihood(series)?;
        }
        total += log_sum_exp(&scores);
    }
    Ok(total)
}

/// Mixture update from fixed responsibilities: closed-form mixing weights
/// `τ_ν = (1/n) Σ_l R_{ν,l}` and responsibility-weighted coefficient fits.
pub fn m_step(
    responsibilities: &Responsibilities,
    data: &[EventSeries],
    basis: &BasisSpec,
    config: &FitConfig,
) -> Result<MixtureModel> {
    m_step_warm(responsibilities, data, basis, config, None)
}

fn m_step_warm(
    responsibilities: &Responsibilities,
    data: &[EventSeries],
    basis: &BasisSpec,
    config: &FitConfig,
    warm: Option<&MixtureModel>,
) -> Result<MixtureModel> {
    let n = data.len();
    if responsibilities.observation_count() != n {
        return Err(Error::InvalidArgument(format!(
            "responsibility rows {} do not match observation count {n}",
            responsibilities.observation_count()
        )));
    }
    let k = responsibilities.component_count();
    let mut mixing_weights = Vec::with_capacity(k);
    for component in 0..k {
        let total: f64 = (0..n).map(|l| responsibilities.get(l, component)).sum();
        if total < COLLAPSE_THRESHOLD {
            return Err(Error::ComponentCollapse { component, total });
        }
        mixing_weights.push(total / n as f64);
    }
    let components: Vec<RateModel> = (0..k)
        .into_par_iter()
        .map(|component| {
            let weighted: Vec<(&EventSeries, f64)> = data
                .iter()
                .enumerate()
                .map(|(l, s)| (s, responsibilities.get(l, component)))
                .collect();
            let mut fit_config = config.clone();
            if let Some(previous) = warm {
                fit_config.initial_coefficients =
                    Some(previous.components()[component].coeffs().to_vec());
            }
            let report = fit_mle(&weighted, basis, &fit_config)?;
            RateModel::new(basis.clone(), report.coefficients)
        })
        .collect::<Result<_>>()?;
    MixtureModel::new(components, mixing_weights)
}

/// Random labels with every class represented; falls back to a shuffled
/// round-robin if rejection sampling runs long (tiny n with large k).
fn random_full_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    for _ in 0..100 {
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        if (0..k).all(|class| labels.contains(&class)) {
            return labels;
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

struct RestartOutcome {
    model: MixtureModel,
    responsibilities: Responsibilities,
    trace: Vec<f64>,
    initial_labels: Vec<usize>,
    iterations: usize,
    converged: bool,
}

fn run_restart(
    data: &[EventSeries],
    basis: &BasisSpec,
    config: &EmConfig,
    seed: u64,
) -> Result<RestartOutcome> {
    let k = config.component_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial_labels = random_full_labels(data.len(), k, &mut rng);

    let labeled = LabeledDataset::new(data.to_vec(), initial_labels.clone(), k)?;
    let classifier = ClassifierModel::train(&labeled, basis, &config.fit)?;
    let mut model = MixtureModel::new(
        classifier.class_rates().to_vec(),
        vec![1.0 / k as f64; k],
    )?;

    let (mut responsibilities, mut ll) = e_step_with_log_likelihood(&model, data)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=config.max_em_iterations {
        model = m_step_warm(&responsibilities, data, basis, &config.fit, Some(&model))?;
        let (next_responsibilities, next_ll) = e_step_with_log_likelihood(&model, data)?;
        trace.push(next_ll);
        responsibilities = next_responsibilities;
        iterations = iter;
        if (next_ll - ll).abs() < config.convergence_threshold {
            converged = true;
            break;
        }
        ll = next_ll;
    }
    Ok(RestartOutcome {
        model,
        responsibilities,
        trace,
        initial_labels,
        iterations,
        converged,
    })
}

/// Fits a `k`-component NHPP mixture by EM with random restarts.
///
/// Each restart initializes coefficients from pooled fits of a random label
/// assignment and mixing weights at `1/k`, then alternates E and M steps
/// until the incomplete-data log-likelihood changes by less than the
/// threshold. Restarts whose components collapse are discarded; the restart
/// with the highest final log-likelihood wins (earlier index on ties).
pub fn fit_em(data: &[EventSeries], basis: &BasisSpec, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    if data.len() < config.component_count {
        return Err(Error::InvalidArgument(format!(
            "{} observations cannot support {} mixture components",
            data.len(),
            config.component_count
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let seeds: Vec<u64> = (0..config.restarts).map(|_| master.next_u64()).collect();

    let outcomes: Vec<Result<RestartOutcome>> = seeds
        .par_iter()
        .map(|&seed| run_restart(data, basis, config, seed))
        .collect();

    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut last_error = String::from("no restarts ran");
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(candidate) => {
                let candidate_ll = *candidate.trace.last().unwrap();
                let improves = match &best {
                    Some((_, current)) => candidate_ll > *current.trace.last().unwrap(),
                    None => true,
                };
                if improves {
                    best = Some((index, candidate));
                }
            }
            Err(err) => last_error = err.to_string(),
        }
    }
    match best {
        Some((restart_index, outcome)) => Ok(EmFit {
            model: outcome.model,
            responsibilities: outcome.responsibilities,
            log_likelihood_trace: outcome.trace,
            restart_index,
            initial_labels: outcome.initial_labels,
            iterations: outcome.iterations,
            converged: outcome.converged,
        }),
        None => Err(Error::AllRestartsFailed {
            restarts: config.restarts,
            last: last_error,
        }),
    }
}
