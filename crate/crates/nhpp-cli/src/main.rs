//! `nhpp`: simulate, fit, classify, cluster, and cross-validate event-time
//! data under spline-rate NHPP models.

mod error;
mod files;

use clap::{Args, Parser, Subcommand};
use error::{CliError, CliResult};
use files::ModelFile;
use nhpp::basis::BasisSpec;
use nhpp::classify::{ClassifierModel, LabeledDataset};
use nhpp::cluster::{fit_em, EmConfig};
use nhpp::eval::{cross_validate, CvConfig};
use nhpp::likelihood::EventSeries;
use nhpp::optimizer::{fit_mle, FitConfig};
use nhpp::simulate::{make_synthetic_dataset_in_window, DEFAULT_SYNTHETIC_WINDOW};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "nhpp",
    about = "Event-time modeling with non-homogeneous Poisson processes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that fits or reads models.
#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Number of spline basis functions.
    #[arg(long, default_value_t = 100)]
    n_basis: usize,
    /// Spline order (degree + 1; 4 = cubic).
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Random restarts for EM clustering.
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// RNG seed for anything randomized.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// EM convergence threshold on the log-likelihood change.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Perturb exact duplicate event times by at most 1e-9 of the window.
    #[arg(long)]
    jitter: bool,
    /// Exit with code 3 when a fit fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark data set by thinning.
    Simulate {
        /// Benchmark set: 1 (sinusoids), 2 (steps), or 3 (all four rates).
        #[arg(long)]
        set: u8,
        /// Observations generated per class.
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Observation window end.
        #[arg(long, default_value_t = DEFAULT_SYNTHETIC_WINDOW)]
        window: f64,
        /// Output directory for events.csv, labels.csv, meta.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit one pooled rate function to all observations.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train a classifier (--labels) or predict posteriors (--model).
    Classify {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// Training labels; mutually exclusive with --model.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Trained model for prediction; mutually exclusive with --labels.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Model file (training) or posterior CSV (prediction).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cluster observations with an EM-fitted NHPP mixture.
    Cluster {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// Number of mixture components.
        #[arg(long)]
        k: usize,
        /// Output directory for model.json, responsibilities.csv,
        /// assignments.csv.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Repeated stratified cross-validation of the classifier.
    Crossval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Output directory for metrics.json and folds.csv.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit rate-curve samples from a model file as CSV.
    Plotdata {
        #[arg(long)]
        model: PathBuf,
        /// Number of uniform grid points on [0, T].
        #[arg(long, default_value_t = 201)]
        grid_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("NHPP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
        }
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate {
            set,
            per_class,
            window,
            out_dir,
            common,
        } => cmd_simulate(set, per_class, window, &out_dir, &common),
        Command::Fit {
            events,
            meta,
            out,
            common,
        } => cmd_fit(&events, &meta, &out, &common),
        Command::Classify {
            events,
            meta,
            labels,
            model,
            out,
            common,
        } => match (labels, model) {
            (Some(labels), None) => cmd_classify_train(&events, &meta, &labels, &out, &common),
            (None, Some(model)) => cmd_classify_predict(&events, &meta, &model, &out, &common),
            _ => Err(CliError::Usage(
                "classify needs exactly one of --labels (train) or --model (predict)".into(),
            )),
        },
        Command::Cluster {
            events,
            meta,
            k,
            out_dir,
            common,
        } => cmd_cluster(&events, &meta, k, &out_dir, &common),
        Command::Crossval {
            events,
            meta,
            labels,
            folds,
            repeats,
            out_dir,
            common,
        } => cmd_crossval(&events, &meta, &labels, folds, repeats, &out_dir, &common),
        Command::Plotdata {
            model,
            grid_size,
            out,
            ..
        } => cmd_plotdata(&model, grid_size, &out),
    }
}

fn basis_for(common: &CommonOpts, window_end: f64) -> CliResult<BasisSpec> {
    Ok(BasisSpec::uniform(common.order, common.n_basis, window_end)?)
}

fn load_events(
    events: &Path,
    meta: &Path,
    common: &CommonOpts,
) -> CliResult<(Vec<EventSeries>, f64)> {
    let metadata = files::read_metadata(meta)?;
    let (observations, jittered) = files::read_events(events, metadata.window_end, common.jitter)?;
    if common.jitter && jittered > 0 {
        eprintln!("jitter: perturbed {jittered} duplicate event times");
    }
    Ok((observations, metadata.window_end))
}

fn check_convergence(strict: bool, converged: bool, what: &str) -> CliResult<()> {
    if !converged {
        if strict {
            return Err(CliError::Numeric(format!(
                "{what} did not converge within the iteration budget"
            )));
        }
        eprintln!("warning: {what} did not converge within the iteration budget");
    }
    Ok(())
}

fn cmd_simulate(
    set: u8,
    per_class: usize,
    window: f64,
    out_dir: &Path,
    common: &CommonOpts,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let events_path = out_dir.join("events.csv");
    let labels_path = out_dir.join("labels.csv");
    let meta_path = out_dir.join("meta.json");

    if per_class == 0 {
        // Valid empty tables; there is no dataset to build.
        nhpp::simulate::class_generators(set, window)?;
        files::write_events(&events_path, &[])?;
        files::write_labels(&labels_path, &[])?;
        files::write_metadata(&meta_path, window)?;
        println!("wrote 0 observations to {}", out_dir.display());
        return Ok(());
    }

    let data = make_synthetic_dataset_in_window(set, per_class, window, common.seed)?;
    files::write_events(&events_path, data.observations())?;
    let label_rows: Vec<(String, String)> = data
        .observations()
        .iter()
        .zip(data.labels())
        .map(|(series, &g)| (series.id().to_string(), (g + 1).to_string()))
        .collect();
    files::write_labels(&labels_path, &label_rows)?;
    files::write_metadata(&meta_path, window)?;
    let total_events: usize = data.observations().iter().map(|s| s.len()).sum();
    println!(
        "wrote {} observations ({} classes, {total_events} events) to {}",
        data.len(),
        data.class_count(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_fit(events: &Path, meta: &Path, out: &Path, common: &CommonOpts) -> CliResult<()> {
    let (observations, window_end) = load_events(events, meta, common)?;
    if observations.is_empty() {
        return Err(CliError::Usage("no observations in the event table".into()));
    }
    let basis = basis_for(common, window_end)?;
    let weighted: Vec<(&EventSeries, f64)> = observations.iter().map(|s| (s, 1.0)).collect();
    let report = fit_mle(&weighted, &basis, &FitConfig::default())?;
    check_convergence(common.strict, report.converged, "rate fit")?;
    files::write_model(out, &ModelFile::rate(basis, &report))?;
    println!(
        "fitted pooled rate over {} observations (objective {:.6}, {} iterations) -> {}",
        observations.len(),
        report.final_objective,
        report.iterations,
        out.display()
    );
    Ok(())
}

/// Builds the labeled dataset for training: label ids must reference event
/// ids; unlabeled observations are skipped with a note.
fn assemble_labeled(
    observations: Vec<EventSeries>,
    label_rows: &[(String, String)],
) -> CliResult<(LabeledDataset, Vec<String>)> {
    let mut label_of: std::collections::HashMap<&str, &str> = std::collections::HashMap::new();
    for (id, label) in label_rows {
        if label_of.insert(id, label).is_some() {
            return Err(CliError::Usage(format!(
                "observation `{id}` is labeled more than once"
            )));
        }
    }
    let known: std::collections::HashSet<&str> =
        observations.iter().map(|s| s.id()).collect();
    if let Some((id, _)) = label_rows.iter().find(|(id, _)| !known.contains(id.as_str())) {
        return Err(CliError::Usage(format!(
            "label file references observation `{id}` absent from the event table"
        )));
    }
    let class_labels = files::class_label_order(label_rows);
    let class_index: std::collections::HashMap<&str, usize> = class_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0usize;
    for series in observations {
        match label_of.get(series.id()) {
            Some(label) => {
                labels.push(class_index[label]);
                kept.push(series);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("note: {skipped} unlabeled observations skipped");
    }
    let dataset = LabeledDataset::new(kept, labels, class_labels.len())?;
    Ok((dataset, class_labels))
}

fn cmd_classify_train(
    events: &Path,
    meta: &Path,
    labels: &Path,
    out: &Path,
    common: &CommonOpts,
) -> CliResult<()> {
    let (observations, window_end) = load_events(events, meta, common)?;
    let label_rows = files::read_labels(labels)?;
    let (dataset, class_labels) = assemble_labeled(observations, &label_rows)?;
    let basis = basis_for(common, window_end)?;
    let (model, reports) =
        ClassifierModel::train_with_reports(&dataset, &basis, &FitConfig::default())?;
    for (label, report) in class_labels.iter().zip(&reports) {
        check_convergence(
            common.strict,
            report.converged,
            &format!("class `{label}` fit"),
        )?;
    }
    files::write_model(out, &ModelFile::classifier(&model, &reports, class_labels))?;
    println!(
        "trained {}-class model on {} observations -> {}",
        model.class_count(),
        dataset.len(),
        out.display()
    );
    Ok(())
}

fn cmd_classify_predict(
    events: &Path,
    meta: &Path,
    model_path: &Path,
    out: &Path,
    common: &CommonOpts,
) -> CliResult<()> {
    let (observations, window_end) = load_events(events, meta, common)?;
    let model_file = files::read_model(model_path)?;
    if model_file.basis.domain_end() != window_end {
        return Err(CliError::Usage(format!(
            "model window {} does not match data window {window_end}",
            model_file.basis.domain_end()
        )));
    }
    let classifier = model_file.to_classifier()?;
    let class_labels = model_file.class_labels.clone().unwrap_or_else(|| {
        (1..=classifier.class_count()).map(|q| q.to_string()).collect()
    });

    let mut writer = csv::Writer::from_path(out)?;
    let mut header = vec!["observation_id".to_string()];
    for label in &class_labels {
        header.push(format!("p_{label}"));
    }
    header.push("assigned_label".to_string());
    header.push("degenerate".to_string());
    writer.write_record(&header)?;
    let mut degenerate_count = 0usize;
    for series in &observations {
        let posterior = classifier.posterior(series)?;
        let assigned = posterior.argmax();
        if posterior.degenerate {
            degenerate_count += 1;
        }
        let mut row = vec![series.id().to_string()];
        for &p in &posterior.probabilities {
            row.push(files::fmt_float(p));
        }
        row.push(class_labels[assigned].clone());
        row.push(posterior.degenerate.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    if degenerate_count > 0 {
        eprintln!("warning: {degenerate_count} observations had degenerate posteriors");
    }
    println!(
        "classified {} observations -> {}",
        observations.len(),
        out.display()
    );
    Ok(())
}

fn cmd_cluster(
    events: &Path,
    meta: &Path,
    k: usize,
    out_dir: &Path,
    common: &CommonOpts,
) -> CliResult<()> {
    let (observations, window_end) = load_events(events, meta, common)?;
    let basis = basis_for(common, window_end)?;
    let config = EmConfig {
        component_count: k,
        restarts: common.restarts,
        convergence_threshold: common.threshold,
        max_em_iterations: 100,
        rng_seed: common.seed,
        fit: FitConfig::default(),
    };
    let fit = fit_em(&observations, &basis, &config)?;
    check_convergence(common.strict, fit.converged, "EM")?;

    std::fs::create_dir_all(out_dir)?;
    files::write_model(&out_dir.join("model.json"), &ModelFile::mixture(&fit))?;
    files::write_responsibilities(
        &out_dir.join("responsibilities.csv"),
        &observations,
        &fit.responsibilities,
    )?;
    let assignments = fit.responsibilities.hard_assignments();
    let assignment_rows: Vec<(String, String)> = observations
        .iter()
        .zip(&assignments)
        .map(|(series, &cluster)| (series.id().to_string(), (cluster + 1).to_string()))
        .collect();
    let mut writer = csv::Writer::from_path(out_dir.join("assignments.csv"))?;
    writer.write_record(["observation_id", "cluster"])?;
    for (id, cluster) in &assignment_rows {
        writer.write_record([id, cluster])?;
    }
    writer.flush()?;
    println!(
        "clustered {} observations into {k} components \
         (log-likelihood {:.4}, restart {}, {} iterations) -> {}",
        observations.len(),
        fit.log_likelihood_trace.last().unwrap_or(&f64::NAN),
        fit.restart_index,
        fit.iterations,
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_crossval(
    events: &Path,
    meta: &Path,
    labels: &Path,
    folds: usize,
    repeats: usize,
    out_dir: &Path,
    common: &CommonOpts,
) -> CliResult<()> {
    let (observations, window_end) = load_events(events, meta, common)?;
    let label_rows = files::read_labels(labels)?;
    let (dataset, class_labels) = assemble_labeled(observations, &label_rows)?;
    let basis = basis_for(common, window_end)?;
    let cv = CvConfig {
        folds,
        repeats,
        rng_seed: common.seed,
        stratified: true,
    };
    let report = cross_validate(&dataset, &basis, &FitConfig::default(), &cv)?;
    std::fs::create_dir_all(out_dir)?;
    files::write_metrics_json(&out_dir.join("metrics.json"), &report)?;
    files::write_fold_csv(&out_dir.join("folds.csv"), &report, &class_labels)?;
    let tpr: Vec<String> = class_labels
        .iter()
        .zip(&report.per_class_tpr)
        .map(|(label, tpr)| format!("{label}: {tpr:.4}"))
        .collect();
    println!(
        "cross-validated {} observations over {folds} folds x {repeats} repeats: \
         accuracy {:.4} (mean {:.4} +/- {:.4}); TPR {}",
        dataset.len(),
        report.accuracy,
        report.accuracy_mean,
        report.accuracy_std,
        tpr.join(", ")
    );
    println!("wrote metrics to {}", out_dir.display());
    Ok(())
}

fn cmd_plotdata(model_path: &Path, grid_size: usize, out: &Path) -> CliResult<()> {
    if grid_size < 2 {
        return Err(CliError::Usage("grid size must be at least 2".into()));
    }
    let model_file = files::read_model(model_path)?;
    let rates = model_file.rate_models()?;
    let window = model_file.basis.domain_end();
    let mut writer = csv::Writer::from_path(out)?;
    let mut header = vec!["t".to_string()];
    for q in 1..=rates.len() {
        header.push(format!("lambda_{q}"));
    }
    writer.write_record(&header)?;
    for g in 0..grid_size {
        let t = window * g as f64 / (grid_size - 1) as f64;
        let mut row = vec![files::fmt_float(t)];
        for rate in &rates {
            row.push(files::fmt_float(rate.rate_at(t)?));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    println!(
        "wrote {} rate curves on a {grid_size}-point grid -> {}",
        rates.len(),
        out.display()
    );
    Ok(())
}
