//! File formats: the event/label CSV tables, the metadata sidecar, model
//! files, and report emission.
//!
//! All JSON documents carry a `schema_version` and serialize with a fixed
//! field order, so write → read → write round-trips byte-exactly.

use crate::error::{CliError, CliResult};
use nhpp::basis::BasisSpec;
use nhpp::classify::ClassifierModel;
use nhpp::cluster::{EmFit, Responsibilities};
use nhpp::eval::MetricsReport;
use nhpp::likelihood::{EventSeries, RateModel};
use nhpp::optimizer::FitReport;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip decimal form, matching the JSON float encoding.
pub fn fmt_float(value: f64) -> String {
    ryu::Buffer::new().format(value).to_string()
}

/// Sidecar carrying the observation window; the window is experiment design,
/// never inferred from the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub window_end: f64,
}

pub fn read_metadata(path: &Path) -> CliResult<Metadata> {
    let text = fs::read_to_string(path)?;
    let meta: Metadata = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid metadata: {e}", path.display())))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "{}: schema version {} not supported (expected {SCHEMA_VERSION})",
            path.display(),
            meta.schema_version
        )));
    }
    if !(meta.window_end.is_finite() && meta.window_end > 0.0) {
        return Err(CliError::Usage(format!(
            "{}: window_end must be finite and positive",
            path.display()
        )));
    }
    Ok(meta)
}

pub fn write_metadata(path: &Path, window_end: f64) -> CliResult<()> {
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        window_end,
    };
    let mut text = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::Io(format!("serializing metadata: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads the event table, groups rows into series by observation id (order
/// of first appearance), and validates every time against the window.
///
/// With `jitter` enabled, runs of exactly duplicated times within an
/// observation are spread by at most `1e-9 * window_end`; the second value
/// of the pair is the number of perturbed events. Without it, a duplicate is
/// a row-numbered error.
pub fn read_events(
    path: &Path,
    window_end: f64,
    jitter: bool,
) -> CliResult<(Vec<EventSeries>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.len() < 2 || &headers[0] != "observation_id" || &headers[1] != "event_time" {
            return Err(CliError::Usage(format!(
                "{}: expected header `observation_id,event_time`",
                path.display()
            )));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(f64, u64)>> = HashMap::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let row = index as u64 + 2; // 1-based, after the header
        let id = record
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                CliError::Usage(format!("{}: row {row}: empty observation id", path.display()))
            })?
            .to_string();
        let raw_time = record.get(1).unwrap_or("");
        let time: f64 = raw_time.parse().map_err(|_| {
            CliError::Usage(format!(
                "{}: row {row}: `{raw_time}` is not a number",
                path.display()
            ))
        })?;
        if !time.is_finite() || time <= 0.0 || time > window_end {
            return Err(CliError::Usage(format!(
                "{}: row {row}: event time {time} outside (0, {window_end}]",
                path.display()
            )));
        }
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        by_id.entry(id).or_default().push((time, row));
    }

    let mut jittered = 0usize;
    let mut observations = Vec::with_capacity(order.len());
    for id in order {
        let mut events = by_id.remove(&id).expect("id recorded on first sight");
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        if jitter {
            jittered += spread_duplicates(&mut events, window_end);
        } else if let Some(pair) = events.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CliError::Usage(format!(
                "{}: row {}: duplicate event time {} in observation `{id}` \
                 (use --jitter to perturb exact duplicates)",
                path.display(),
                pair[1].1,
                pair[1].0
            )));
        }
        let times: Vec<f64> = events.iter().map(|(t, _)| *t).collect();
        let series = EventSeries::new(id, times, window_end)?;
        observations.push(series);
    }
    Ok((observations, jittered))
}

/// Spreads each run of identical times over at most `1e-9 * window` upward,
/// or downward when the run sits at the window end. Returns the number of
/// perturbed events.
fn spread_duplicates(events: &mut [(f64, u64)], window_end: f64) -> usize {
    let budget = 1e-9 * window_end;
    let mut perturbed = 0;
    let mut start = 0;
    while start < events.len() {
        let mut end = start + 1;
        while end < events.len() && events[end].0 == events[start].0 {
            end += 1;
        }
        let run = end - start;
        if run > 1 {
            let base = events[start].0;
            let step = budget / run as f64;
            if base + budget <= window_end {
                for (k, event) in events[start..end].iter_mut().enumerate() {
                    event.0 = base + step * k as f64;
                }
            } else {
                for (k, event) in events[start..end].iter_mut().enumerate() {
                    event.0 = base - step * (run - 1 - k) as f64;
                }
            }
            perturbed += run - 1;
        }
        start = end;
    }
    perturbed
}

pub fn write_events(path: &Path, observations: &[EventSeries]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["observation_id", "event_time"])?;
    for series in observations {
        for &t in series.times() {
            writer.write_record([series.id(), &fmt_float(t)])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Label rows in file order.
pub fn read_labels(path: &Path) -> CliResult<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.len() < 2 || &headers[0] != "observation_id" || &headers[1] != "label" {
            return Err(CliError::Usage(format!(
                "{}: expected header `observation_id,label`",
                path.display()
            )));
        }
    }
    let mut labels = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let row = index + 2;
        let id = record.get(0).unwrap_or("").to_string();
        let label = record.get(1).unwrap_or("").to_string();
        if id.is_empty() || label.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: row {row}: empty observation id or label",
                path.display()
            )));
        }
        labels.push((id, label));
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, rows: &[(String, String)]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["observation_id", "label"])?;
    for (id, label) in rows {
        writer.write_record([id, label])?;
    }
    writer.flush()?;
    Ok(())
}

/// Distinct label strings in presentation order: numeric sort when every
/// label parses as an integer, lexicographic otherwise.
pub fn class_label_order(labels: &[(String, String)]) -> Vec<String> {
    let mut distinct: Vec<String> = Vec::new();
    for (_, label) in labels {
        if !distinct.contains(label) {
            distinct.push(label.clone());
        }
    }
    if distinct.iter().all(|l| l.parse::<i64>().is_ok()) {
        distinct.sort_by_key(|l| l.parse::<i64>().expect("checked numeric"));
    } else {
        distinct.sort();
    }
    distinct
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rate,
    Classifier,
    Mixture,
}

/// Per-fit solver diagnostics stored alongside the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    pub final_objective: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

/// On-disk model document: one basis, one coefficient vector per component,
/// and the kind-specific extras (priors / mixing weights / label names).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub basis: BasisSpec,
    pub components: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
    pub diagnostics: FitDiagnostics,
}

impl ModelFile {
    pub fn rate(basis: BasisSpec, report: &FitReport) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            kind: ModelKind::Rate,
            basis,
            components: vec![report.coefficients.clone()],
            priors: None,
            mixing_weights: None,
            class_labels: None,
            diagnostics: FitDiagnostics {
                converged: vec![report.converged],
                iterations: vec![report.iterations],
                final_objective: vec![report.final_objective],
                log_likelihood: None,
            },
        }
    }

    pub fn classifier(
        model: &ClassifierModel,
        reports: &[FitReport],
        class_labels: Vec<String>,
    ) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            kind: ModelKind::Classifier,
            basis: model.class_rates()[0].basis().clone(),
            components: model
                .class_rates()
                .iter()
                .map(|r| r.coeffs().to_vec())
                .collect(),
            priors: Some(model.priors().to_vec()),
            mixing_weights: None,
            class_labels: Some(class_labels),
            diagnostics: FitDiagnostics {
                converged: reports.iter().map(|r| r.converged).collect(),
                iterations: reports.iter().map(|r| r.iterations).collect(),
                final_objective: reports.iter().map(|r| r.final_objective).collect(),
                log_likelihood: None,
            },
        }
    }

    pub fn mixture(fit: &EmFit) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            kind: ModelKind::Mixture,
            basis: fit.model.components()[0].basis().clone(),
            components: fit
                .model
                .components()
                .iter()
                .map(|r| r.coeffs().to_vec())
                .collect(),
            priors: None,
            mixing_weights: Some(fit.model.mixing_weights().to_vec()),
            class_labels: None,
            diagnostics: FitDiagnostics {
                converged: vec![fit.converged],
                iterations: vec![fit.iterations],
                final_objective: vec![-fit.log_likelihood_trace.last().copied().unwrap_or(0.0)],
                log_likelihood: fit.log_likelihood_trace.last().copied(),
            },
        }
    }

    /// The component rate models (shared basis, one per coefficient vector).
    pub fn rate_models(&self) -> CliResult<Vec<RateModel>> {
        self.components
            .iter()
            .map(|coeffs| {
                RateModel::new(self.basis.clone(), coeffs.clone()).map_err(CliError::from)
            })
            .collect()
    }

    pub fn to_classifier(&self) -> CliResult<ClassifierModel> {
        if self.kind != ModelKind::Classifier {
            return Err(CliError::Usage(format!(
                "model file holds a {:?} model, not a classifier",
                self.kind
            )));
        }
        let mut model = ClassifierModel::from_rates(self.rate_models()?)?;
        if let Some(priors) = &self.priors {
            model = model.with_priors(priors.clone())?;
        }
        Ok(model)
    }

}

pub fn read_model(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path)?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid model file: {e}", path.display())))?;
    if model.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "{}: schema version {} not supported (expected {SCHEMA_VERSION})",
            path.display(),
            model.schema_version
        )));
    }
    for (i, coeffs) in model.components.iter().enumerate() {
        if coeffs.len() != model.basis.basis_count() {
            return Err(CliError::Usage(format!(
                "{}: component {i} has {} coefficients, basis expects {}",
                path.display(),
                coeffs.len(),
                model.basis.basis_count()
            )));
        }
    }
    Ok(model)
}

pub fn write_model(path: &Path, model: &ModelFile) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(model)
        .map_err(|e| CliError::Io(format!("serializing model: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Io(format!("serializing metrics: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Flat per-fold CSV: `repeat,fold,test_size,accuracy,tpr_<label>...`; TPR
/// cells are empty for classes absent from a fold's test set.
pub fn write_fold_csv(
    path: &Path,
    report: &MetricsReport,
    class_labels: &[String],
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![
        "repeat".to_string(),
        "fold".to_string(),
        "test_size".to_string(),
        "accuracy".to_string(),
    ];
    for label in class_labels {
        header.push(format!("tpr_{label}"));
    }
    writer.write_record(&header)?;
    for fold in &report.per_fold {
        let mut row = vec![
            fold.repeat.to_string(),
            fold.fold.to_string(),
            fold.test_size.to_string(),
            fmt_float(fold.accuracy),
        ];
        for tpr in &fold.per_class_tpr {
            row.push(tpr.map_or(String::new(), fmt_float));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Responsibilities matrix CSV: `observation_id,r_1..r_k`.
pub fn write_responsibilities(
    path: &Path,
    observations: &[EventSeries],
    responsibilities: &Responsibilities,
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let k = responsibilities.component_count();
    let mut header = vec!["observation_id".to_string()];
    for q in 1..=k {
        header.push(format!("r_{q}"));
    }
    writer.write_record(&header)?;
    for (l, series) in observations.iter().enumerate() {
        let mut row = vec![series.id().to_string()];
        for &r in responsibilities.row(l) {
            row.push(fmt_float(r));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
