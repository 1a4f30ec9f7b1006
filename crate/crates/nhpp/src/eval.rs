//! Evaluation harness: repeated stratified cross-validation for the
//! classifier and permutation-aligned accuracy for clusterings.

use crate::basis::BasisSpec;
use crate::classify::{ClassifierModel, LabeledDataset};
use crate::error::{Error, Result};
use crate::numeric::mean_and_std;
use crate::optimizer::FitConfig;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Cross-validation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub rng_seed: u64,
    /// Shuffle within classes so every fold keeps the class balance; also
    /// guarantees no training fold loses a class entirely.
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            repeats: 100,
            rng_seed: 0,
            stratified: true,
        }
    }
}

/// Metrics of one held-out fold. TPR entries are `None` for classes absent
/// from the fold's test set (only possible without stratification).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub repeat: usize,
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub per_class_tpr: Vec<Option<f64>>,
}

/// Aggregate cross-validation metrics.
///
/// `accuracy` and `per_class_tpr` come from the pooled confusion matrix
/// (rows = true class, columns = predicted), so they are exactly
/// recomputable from it; `accuracy_mean`/`accuracy_std` summarize the
/// distribution of per-fold accuracies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_count: usize,
    pub accuracy: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub per_class_tpr: Vec<f64>,
    pub confusion_matrix: Vec<Vec<usize>>,
    pub per_fold: Vec<FoldOutcome>,
}

/// Confusion counts with rows indexed by true class, columns by prediction.
pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    class_count: usize,
) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} truth labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut matrix = vec![vec![0usize; class_count]; class_count];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= class_count || p >= class_count {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) out of range for {class_count} classes"
            )));
        }
        matrix[t][p] += 1;
    }
    Ok(matrix)
}

/// Per-class true positive rates `diagonal / row sum`; `None` for empty rows.
pub fn true_positive_rates(confusion: &[Vec<usize>]) -> Vec<Option<f64>> {
    confusion
        .iter()
        .enumerate()
        .map(|(class, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[class] as f64 / total as f64)
        })
        .collect()
}

fn accuracy_of(confusion: &[Vec<usize>]) -> f64 {
    let correct: usize = confusion
        .iter()
        .enumerate()
        .map(|(class, row)| row[class])
        .sum();
    let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Indices grouped into folds, stratified by class when requested.
fn partition(
    labels: &[usize],
    class_count: usize,
    folds: usize,
    stratified: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut fold_members = vec![Vec::new(); folds];
    if stratified {
        for class in 0..class_count {
            let mut members: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &g)| g == class)
                .map(|(i, _)| i)
                .collect();
            shuffle(&mut members, rng);
            for (position, index) in members.into_iter().enumerate() {
                fold_members[position % folds].push(index);
            }
        }
    } else {
        let mut indices: Vec<usize> = (0..labels.len()).collect();
        shuffle(&mut indices, rng);
        for (position, index) in indices.into_iter().enumerate() {
            fold_members[position % folds].push(index);
        }
    }
    for members in &mut fold_members {
        members.sort_unstable();
    }
    fold_members
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Repeated k-fold cross-validation of the classifier.
///
/// Each repeat redraws the fold partition from the seeded generator; each
/// fold trains on the remainder and scores the held-out observations.
pub fn cross_validate(
    data: &LabeledDataset,
    basis: &BasisSpec,
    fit_config: &FitConfig,
    cv: &CvConfig,
) -> Result<MetricsReport> {
    if cv.folds < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    if cv.repeats == 0 {
        return Err(Error::InvalidArgument("need at least one repeat".into()));
    }
    let k = data.class_count();
    if cv.stratified {
        for class in 0..k {
            let size = data.labels().iter().filter(|&&g| g == class).count();
            if size < cv.folds {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has {size} observations, fewer than {} folds",
                    cv.folds
                )));
            }
        }
    } else if data.len() < cv.folds {
        return Err(Error::InvalidArgument(format!(
            "{} observations cannot fill {} folds",
            data.len(),
            cv.folds
        )));
    }

    let mut master = ChaCha8Rng::seed_from_u64(cv.rng_seed);
    let repeat_seeds: Vec<u64> = (0..cv.repeats).map(|_| master.next_u64()).collect();

    type RepeatResult = Result<(Vec<FoldOutcome>, Vec<Vec<usize>>)>;
    let repeat_results: Vec<RepeatResult> = repeat_seeds
        .par_iter()
        .enumerate()
        .map(|(repeat, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fold_members = partition(data.labels(), k, cv.folds, cv.stratified, &mut rng);
            let mut outcomes = Vec::with_capacity(cv.folds);
            let mut confusion = vec![vec![0usize; k]; k];
            for (fold, test_indices) in fold_members.iter().enumerate() {
                let train_indices: Vec<usize> = (0..data.len())
                    .filter(|i| !test_indices.contains(i))
                    .collect();
                let train = data.subset(&train_indices)?;
                let model = ClassifierModel::train(&train, basis, fit_config)?;
                let mut truth = Vec::with_capacity(test_indices.len());
                let mut predicted = Vec::with_capacity(test_indices.len());
                for &i in test_indices {
                    truth.push(data.labels()[i]);
                    predicted.push(model.assign(&data.observations()[i])?);
                }
                let fold_confusion = confusion_matrix(&truth, &predicted, k)?;
                for (total_row, fold_row) in confusion.iter_mut().zip(&fold_confusion) {
                    for (total, add) in total_row.iter_mut().zip(fold_row) {
                        *total += add;
                    }
                }
                outcomes.push(FoldOutcome {
                    repeat,
                    fold,
                    test_size: test_indices.len(),
                    accuracy: accuracy_of(&fold_confusion),
                    per_class_tpr: true_positive_rates(&fold_confusion),
                });
            }
            Ok((outcomes, confusion))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(cv.repeats * cv.folds);
    let mut confusion = vec![vec![0usize; k]; k];
    for result in repeat_results {
        let (outcomes, repeat_confusion) = result?;
        per_fold.extend(outcomes);
        for (total_row, add_row) in confusion.iter_mut().zip(&repeat_confusion) {
            for (total, add) in total_row.iter_mut().zip(add_row) {
                *total += add;
            }
        }
    }

    let fold_accuracies: Vec<f64> = per_fold.iter().map(|f| f.accuracy).collect();
    let (accuracy_mean, accuracy_std) = mean_and_std(&fold_accuracies);
    let per_class_tpr = true_positive_rates(&confusion)
        .into_iter()
        .map(|tpr| tpr.expect("every class appears in some test fold"))
        .collect();
    Ok(MetricsReport {
        class_count: k,
        accuracy: accuracy_of(&confusion),
        accuracy_mean,
        accuracy_std,
        per_class_tpr,
        confusion_matrix: confusion,
        per_fold,
    })
}

/// Clustering accuracy maximized over injective cluster-to-class relabelings.
///
/// Exhaustive search, exact for the small label counts used here; more than
/// 8 distinct labels on either side is an error.
pub fn clustering_accuracy(assignments: &[usize], truth: &[usize]) -> Result<f64> {
    if assignments.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments but {} truth labels",
            assignments.len(),
            truth.len()
        )));
    }
    if assignments.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty assignment".into(),
        ));
    }
    let mut cluster_ids: Vec<usize> = assignments.to_vec();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    let mut class_ids: Vec<usize> = truth.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    if cluster_ids.len() > 8 || class_ids.len() > 8 {
        return Err(Error::InvalidArgument(
            "permutation alignment supports at most 8 distinct labels".into(),
        ));
    }

    let cluster_index = |id: usize| cluster_ids.iter().position(|&c| c == id).unwrap();
    let class_index = |id: usize| class_ids.iter().position(|&c| c == id).unwrap();
    let mut contingency = vec![vec![0usize; class_ids.len()]; cluster_ids.len()];
    for (&a, &t) in assignments.iter().zip(truth) {
        contingency[cluster_index(a)][class_index(t)] += 1;
    }

    // Map the smaller side injectively into the larger; the matched count is
    // symmetric, so orient the contingency accordingly.
    let oriented: Vec<Vec<usize>> = if cluster_ids.len() <= class_ids.len() {
        contingency
    } else {
        (0..class_ids.len())
            .map(|j| (0..cluster_ids.len()).map(|i| contingency[i][j]).collect())
            .collect()
    };
    let targets = oriented.first().map_or(0, Vec::len);
    let mut used = vec![false; targets];
    let best = best_injective_match(&oriented, 0, &mut used);
    Ok(best as f64 / assignments.len() as f64)
}

fn best_injective_match(contingency: &[Vec<usize>], row: usize, used: &mut [bool]) -> usize {
    if row == contingency.len() {
        return 0;
    }
    let mut best = 0;
    for target in 0..used.len() {
        if used[target] {
            continue;
        }
        used[target] = true;
        let score = contingency[row][target] + best_injective_match(contingency, row + 1, used);
        used[target] = false;
        best = best.max(score);
    }
    best
}
