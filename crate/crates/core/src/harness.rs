//! Trial orchestration: shared 60/20/20 folds per trial, hyperparameter
//! selection on validation objectives, one test-fold scoring per (trial,
//! method), aggregate tables, and the front/back censor probe.

use crate::baseline::{assign_and_align, kmeans_loss_fit, BaselineError};
use crate::data::{AlignmentGrid, DataError, Dataset, RegType, SubLignConfig};
use crate::ident::{identify, IdentError};
use crate::metrics::{
    adjusted_rand_index, benjamini_hochberg, mean_std, paired_ttest, pearson, swaps_metric,
    TrialScores,
};
use crate::sublign::{
    elbo_value_with_eps, grid_search_delta, infer, subnolign_train, train, DeltaPosterior,
    ModelError, SubLignModel, TrainingLog,
};
use crate::synth::{apply_missingness, censor_window, generate, CensorCut, GeneratorSpec, SynthError};
use crate::util::mix_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("generation failure: {0}")]
    Synth(#[from] SynthError),
    #[error("configuration error: {0}")]
    Config(#[from] DataError),
    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadSplit([f64; 3]),
    #[error("n_trials must be >= 1")]
    NoTrials,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error("probe requires an alignment-aware model")]
    ProbeNeedsAlignment,
}

/// Methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sublign")]
    SubLign,
    #[serde(rename = "subnolign")]
    SubNoLign,
    #[serde(rename = "kmeans-loss")]
    KMeansLoss,
    #[serde(rename = "identify")]
    Identify,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SubLign => "sublign",
            Method::SubNoLign => "subnolign",
            Method::KMeansLoss => "kmeans-loss",
            Method::Identify => "identify",
        }
    }
}

/// Cartesian hyperparameter lists over the trainable model's knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub latent_dim: Vec<usize>,
    pub rnn_hidden: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub kl_weight: Vec<f64>,
    pub reg_type: Vec<RegType>,
    pub reg_strength: Vec<f64>,
}

impl HyperGrid {
    /// The full published sweep (reg type crossed with nonzero strengths).
    pub fn full() -> Self {
        HyperGrid {
            latent_dim: vec![2, 5, 10],
            rnn_hidden: vec![50, 100, 200],
            mlp_hidden: vec![50, 100, 200],
            learning_rate: vec![0.001, 0.01, 0.1, 1.0],
            epochs: vec![1000],
            kl_weight: vec![1.0, 0.1, 0.01, 0.001],
            reg_type: vec![RegType::None, RegType::L1, RegType::L2],
            reg_strength: vec![0.0, 0.1, 1.0],
        }
    }

    /// Single point: the known-good sigmoid optimum, desk-scale epochs.
    pub fn fast() -> Self {
        HyperGrid {
            latent_dim: vec![5],
            rnn_hidden: vec![100],
            mlp_hidden: vec![50],
            learning_rate: vec![0.01],
            epochs: vec![300],
            kl_weight: vec![0.1],
            reg_type: vec![RegType::None],
            reg_strength: vec![0.0],
        }
    }

    /// Enumerate configs in deterministic order. Regularization `None` is
    /// paired only with strength 0; L1/L2 only with nonzero strengths.
    pub fn enumerate(&self, grid: AlignmentGrid, k: usize, seed: u64) -> Vec<SubLignConfig> {
        let mut out = Vec::new();
        for &latent_dim in &self.latent_dim {
            for &rnn_hidden in &self.rnn_hidden {
                for &mlp_hidden in &self.mlp_hidden {
                    for &learning_rate in &self.learning_rate {
                        for &epochs in &self.epochs {
                            for &kl_weight in &self.kl_weight {
                                for &reg_type in &self.reg_type {
                                    for &reg_strength in &self.reg_strength {
                                        let trivial = reg_strength == 0.0;
                                        match reg_type {
                                            RegType::None if !trivial => continue,
                                            RegType::L1 | RegType::L2 if trivial => continue,
                                            _ => {}
                                        }
                                        out.push(SubLignConfig {
                                            latent_dim,
                                            rnn_hidden,
                                            mlp_hidden,
                                            learning_rate,
                                            epochs,
                                            kl_weight,
                                            reg_type,
                                            reg_strength,
                                            grid,
                                            k_clusters: k,
                                            seed,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    /// Applied after generation when positive.
    #[serde(default)]
    pub missing_rate: f64,
    pub methods: Vec<Method>,
    pub n_trials: usize,
    pub split: [f64; 3],
    pub hyper: HyperGrid,
    pub k_clusters: usize,
    pub grid: AlignmentGrid,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_trials == 0 {
            return Err(HarnessError::NoTrials);
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(HarnessError::BadSplit(self.split));
        }
        AlignmentGrid::new(self.grid.delta_max, self.grid.step)?;
        Ok(())
    }
}

/// Id-level fold assignment for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Folds {
    pub trial: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// One (trial, method) outcome; the trained model is kept in memory for
/// follow-up probes but never serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub scores: Option<TrialScores>,
    pub error: Option<String>,
    pub best_config: Option<SubLignConfig>,
    /// Per-test-series `(id, label, delta_hat)`.
    pub predictions: Vec<(String, usize, Option<f64>)>,
    #[serde(skip)]
    pub model: Option<SubLignModel>,
    #[serde(skip)]
    pub training_log: Option<TrainingLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub folds: Folds,
    pub methods: BTreeMap<String, MethodOutcome>,
}

/// Aggregated mean/std per method and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub trials_scored: usize,
    pub ari: Option<(f64, f64)>,
    pub swaps: Option<(f64, f64)>,
    pub pearson: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub metric: String,
    pub method_a: String,
    pub method_b: String,
    pub t: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub significance: Vec<SignificanceRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub trials: Vec<TrialOutcome>,
    pub report: Report,
}

impl ExperimentOutcome {
    /// Methods that failed in every trial (drives the CLI exit code).
    pub fn methods_failed_everywhere(&self) -> Vec<String> {
        let mut out = Vec::new();
        for method in &self.config.methods {
            let name = method.name();
            let all_failed = self
                .trials
                .iter()
                .all(|t| t.methods.get(name).map(|m| m.error.is_some()).unwrap_or(true));
            if all_failed {
                out.push(name.to_string());
            }
        }
        out
    }
}

/// Deterministic 60/20/20-style split of trajectory indices.
pub fn split_indices(n: usize, split: [f64; 3], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_train = (split[0] * n as f64).floor() as usize;
    let n_val = (split[1] * n as f64).floor() as usize;
    let train = idx[..n_train].to_vec();
    let val = idx[n_train..n_train + n_val].to_vec();
    let test = idx[n_train + n_val..].to_vec();
    (train, val, test)
}

/// Validation objective for the trainable model: summed single-draw ELBO
/// over validation series, delays re-selected by grid search (or pinned at
/// 0 without alignment). Deterministic via the derived seed.
fn validation_elbo(model: &SubLignModel, val: &Dataset, seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x76616c));
    let mut total = 0.0;
    for traj in &val.trajectories {
        let q = if model.align {
            grid_search_delta(model, traj)
        } else {
            DeltaPosterior::zero(&model.config.grid)
        };
        let eps: Vec<Vec<f64>> = vec![(0..model.config.latent_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect()];
        total += elbo_value_with_eps(model, traj, &q, model.config.kl_weight, &eps)?;
    }
    Ok(total)
}

fn score_predictions(
    test: &Dataset,
    labels: &[usize],
    deltas: &Option<Vec<f64>>,
) -> TrialScores {
    let truth_labels: Option<Vec<usize>> = test
        .trajectories
        .iter()
        .map(|t| t.true_subtype)
        .collect();
    let truth_deltas: Option<Vec<f64>> = test.trajectories.iter().map(|t| t.true_delta).collect();
    let ari = truth_labels
        .as_ref()
        .and_then(|t| adjusted_rand_index(t, labels).ok());
    let (swaps, pear) = match (&truth_deltas, deltas) {
        (Some(truth), Some(pred)) => (
            swaps_metric(truth, pred).ok(),
            pearson(truth, pred).ok(),
        ),
        _ => (None, None),
    };
    TrialScores {
        ari,
        swaps,
        pearson: pear,
    }
}

fn run_trainable(
    method: Method,
    train_ds: &Dataset,
    val_ds: &Dataset,
    test_ds: &Dataset,
    config: &ExperimentConfig,
    trial: usize,
) -> MethodOutcome {
    let base_seed = mix_seed(config.seed, 7919 * (trial as u64 + 1));
    let candidates = config
        .hyper
        .enumerate(config.grid, config.k_clusters, base_seed);
    let mut best: Option<(f64, SubLignModel, TrainingLog, SubLignConfig)> = None;
    let mut last_err: Option<String> = None;
    for (h, mut cand) in candidates.into_iter().enumerate() {
        cand.seed = mix_seed(base_seed, h as u64);
        let trained = match method {
            Method::SubLign => train(train_ds, &cand),
            Method::SubNoLign => subnolign_train(train_ds, &cand),
            _ => unreachable!("run_trainable only handles the variational methods"),
        };
        match trained.and_then(|(model, log)| {
            validation_elbo(&model, val_ds, mix_seed(base_seed, 100_000 + h as u64))
                .map(|v| (v, model, log))
        }) {
            Ok((v, model, log)) => {
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, model, log, cand));
                }
            }
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    let Some((_, model, log, best_config)) = best else {
        return MethodOutcome {
            scores: None,
            error: Some(last_err.unwrap_or_else(|| "no hyperparameter point succeeded".into())),
            best_config: None,
            predictions: Vec::new(),
            model: None,
            training_log: None,
        };
    };
    match infer(&model, test_ds, config.k_clusters, Some(&log)) {
        Ok(fit) => {
            let labels: Vec<usize> = fit.per_trajectory.iter().map(|e| e.label).collect();
            let deltas: Option<Vec<f64>> = fit
                .per_trajectory
                .iter()
                .map(|e| e.delta_hat)
                .collect();
            let scores = score_predictions(test_ds, &labels, &deltas);
            MethodOutcome {
                scores: Some(scores),
                error: None,
                best_config: Some(best_config),
                predictions: fit
                    .per_trajectory
                    .iter()
                    .map(|e| (e.id.clone(), e.label, e.delta_hat))
                    .collect(),
                model: Some(model),
                training_log: Some(log),
            }
        }
        Err(e) => MethodOutcome {
            scores: None,
            error: Some(e.to_string()),
            best_config: Some(best_config),
            predictions: Vec::new(),
            model: Some(model),
            training_log: Some(log),
        },
    }
}

fn run_baseline_method(
    train_ds: &Dataset,
    test_ds: &Dataset,
    config: &ExperimentConfig,
    trial: usize,
) -> MethodOutcome {
    let seed = mix_seed(config.seed, 104729 * (trial as u64 + 1));
    let fitted = kmeans_loss_fit(train_ds, config.k_clusters, config.grid, seed);
    match fitted {
        Ok(fit) => {
            let mut labels = Vec::new();
            let mut deltas = Vec::new();
            let mut predictions = Vec::new();
            for traj in &test_ds.trajectories {
                let (label, delta, _) = assign_and_align(&fit, traj, test_ds.dim);
                labels.push(label);
                deltas.push(delta);
                predictions.push((traj.id.clone(), label, Some(delta)));
            }
            let scores = score_predictions(test_ds, &labels, &Some(deltas));
            MethodOutcome {
                scores: Some(scores),
                error: None,
                best_config: None,
                predictions,
                model: None,
                training_log: None,
            }
        }
        Err(e @ BaselineError::InvalidData(_))
        | Err(e @ BaselineError::EmptyDataset)
        | Err(e @ BaselineError::Cluster(_)) => MethodOutcome {
            scores: None,
            error: Some(e.to_string()),
            best_config: None,
            predictions: Vec::new(),
            model: None,
            training_log: None,
        },
    }
}

fn run_identify_method(test_ds: &Dataset, config: &ExperimentConfig) -> MethodOutcome {
    match identify(test_ds, test_ds.link, config.k_clusters, 0) {
        Ok(result) => {
            let deltas = Some(result.deltas.clone());
            let scores = score_predictions(test_ds, &result.labels, &deltas);
            MethodOutcome {
                scores: Some(scores),
                error: None,
                best_config: None,
                predictions: test_ds
                    .trajectories
                    .iter()
                    .zip(result.labels.iter().zip(&result.deltas))
                    .map(|(t, (&l, &d))| (t.id.clone(), l, Some(d)))
                    .collect(),
                model: None,
                training_log: None,
            }
        }
        Err(e @ IdentError::SigmoidDomain { .. })
        | Err(e @ IdentError::InsufficientObservations { .. })
        | Err(e) => MethodOutcome {
            scores: None,
            error: Some(e.to_string()),
            best_config: None,
            predictions: Vec::new(),
            model: None,
            training_log: None,
        },
    }
}

/// Run the full protocol: one generated dataset, `n_trials` shared splits,
/// per-method hyperparameter selection on the validation fold, one test
/// scoring per (trial, method), aggregation, and pairwise significance.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let mut dataset = generate(&config.generator)?;
    if config.missing_rate > 0.0 {
        dataset = apply_missingness(&dataset, config.missing_rate, mix_seed(config.seed, 0x6d72))?;
    }
    let mut trials = Vec::with_capacity(config.n_trials);
    for trial in 0..config.n_trials {
        let (tr, va, te) = split_indices(
            dataset.len(),
            config.split,
            mix_seed(config.seed, 0x666f6c64 + trial as u64),
        );
        let folds = Folds {
            trial,
            train: tr.iter().map(|&i| dataset.trajectories[i].id.clone()).collect(),
            val: va.iter().map(|&i| dataset.trajectories[i].id.clone()).collect(),
            test: te.iter().map(|&i| dataset.trajectories[i].id.clone()).collect(),
        };
        let train_ds = dataset.subset(&tr);
        let val_ds = dataset.subset(&va);
        let test_ds = dataset.subset(&te);
        let mut methods = BTreeMap::new();
        for method in &config.methods {
            let outcome = match method {
                Method::SubLign | Method::SubNoLign => {
                    run_trainable(*method, &train_ds, &val_ds, &test_ds, config, trial)
                }
                Method::KMeansLoss => run_baseline_method(&train_ds, &test_ds, config, trial),
                Method::Identify => run_identify_method(&test_ds, config),
            };
            methods.insert(method.name().to_string(), outcome);
        }
        trials.push(TrialOutcome { folds, methods });
    }
    let report = build_report(config, &trials);
    Ok(ExperimentOutcome {
        config: config.clone(),
        dataset,
        trials,
        report,
    })
}

fn collect_metric(
    trials: &[TrialOutcome],
    method: &str,
    pick: impl Fn(&TrialScores) -> Option<f64>,
) -> Vec<f64> {
    trials
        .iter()
        .filter_map(|t| t.methods.get(method))
        .filter_map(|m| m.scores.as_ref())
        .filter_map(|s| pick(s))
        .collect()
}

fn build_report(config: &ExperimentConfig, trials: &[TrialOutcome]) -> Report {
    let mut rows = Vec::new();
    for method in &config.methods {
        let name = method.name();
        let scored = trials
            .iter()
            .filter(|t| t.methods.get(name).map(|m| m.scores.is_some()).unwrap_or(false))
            .count();
        let agg = |pick: &dyn Fn(&TrialScores) -> Option<f64>| {
            let vals = collect_metric(trials, name, pick);
            if vals.is_empty() {
                None
            } else {
                Some(mean_std(&vals))
            }
        };
        rows.push(ReportRow {
            method: name.to_string(),
            trials_scored: scored,
            ari: agg(&|s| s.ari),
            swaps: agg(&|s| s.swaps),
            pearson: agg(&|s| s.pearson),
        });
    }

    // Pairwise paired t-tests wherever both methods scored the same metric
    // in every trial; BH-adjusted jointly across metric families.
    let mut significance = Vec::new();
    let metrics: [(&str, fn(&TrialScores) -> Option<f64>); 3] = [
        ("ari", |s| s.ari),
        ("swaps", |s| s.swaps),
        ("pearson", |s| s.pearson),
    ];
    for (mi, (metric, pick)) in metrics.iter().enumerate() {
        let _ = mi;
        for (ai, a) in config.methods.iter().enumerate() {
            for b in config.methods.iter().skip(ai + 1) {
                let va = collect_metric(trials, a.name(), pick);
                let vb = collect_metric(trials, b.name(), pick);
                if va.len() != trials.len() || vb.len() != trials.len() || trials.len() < 2 {
                    continue;
                }
                if let Ok(t) = paired_ttest(&va, &vb) {
                    significance.push(SignificanceRow {
                        metric: metric.to_string(),
                        method_a: a.name().to_string(),
                        method_b: b.name().to_string(),
                        t: t.t,
                        p: t.p,
                        p_adjusted: t.p,
                        degenerate: t.degenerate,
                    });
                }
            }
        }
    }
    let adjusted = benjamini_hochberg(&significance.iter().map(|s| s.p).collect::<Vec<_>>());
    for (row, adj) in significance.iter_mut().zip(adjusted) {
        row.p_adjusted = adj;
    }
    Report { rows, significance }
}

fn fmt_opt(pair: Option<(f64, f64)>) -> (String, String) {
    match pair {
        Some((m, s)) => (format!("{m:.6}"), format!("{s:.6}")),
        None => (String::new(), String::new()),
    }
}

/// Comma-separated aggregate table, six decimals, blank cells for absent
/// metrics.
pub fn render_csv(report: &Report) -> String {
    let mut out = String::from(
        "method,ari_mean,ari_std,swaps_mean,swaps_std,pearson_mean,pearson_std\n",
    );
    for row in &report.rows {
        let (am, asd) = fmt_opt(row.ari);
        let (sm, ssd) = fmt_opt(row.swaps);
        let (pm, psd) = fmt_opt(row.pearson);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.method, am, asd, sm, ssd, pm, psd
        ));
    }
    out
}

/// Aligned text table plus the significance section.
pub fn render_text(report: &Report) -> String {
    let cell = |pair: Option<(f64, f64)>| match pair {
        Some((m, s)) => format!("{m:.3} \u{b1} {s:.3}"),
        None => "--".to_string(),
    };
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14}{:>16}{:>16}{:>16}\n",
        "METHOD", "ARI", "SWAPS", "PEARSON"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<14}{:>16}{:>16}{:>16}\n",
            row.method,
            cell(row.ari),
            cell(row.swaps),
            cell(row.pearson)
        ));
    }
    if !report.significance.is_empty() {
        out.push_str("\npairwise paired t-tests (Benjamini-Hochberg adjusted):\n");
        for s in &report.significance {
            out.push_str(&format!(
                "{:<8} {} vs {}: t = {:.4}, p = {:.4}, p_adj = {:.4}{}\n",
                s.metric,
                s.method_a,
                s.method_b,
                s.t,
                s.p,
                s.p_adjusted,
                if s.degenerate { " (degenerate)" } else { "" }
            ));
        }
    }
    out
}

/// Parse the CSV back into (method, six floats-or-None) rows.
pub fn parse_csv(text: &str) -> Vec<(String, Vec<Option<f64>>)> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut parts = line.split(',');
            let method = parts.next().unwrap_or_default().to_string();
            let vals = parts
                .map(|p| {
                    if p.is_empty() {
                        None
                    } else {
                        p.parse::<f64>().ok()
                    }
                })
                .collect();
            (method, vals)
        })
        .collect()
}

/// Write `report.csv`, `report.txt`, `raw/trial-{t}-{method}.json`, and
/// `folds/trial-{t}.json` under `out_dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir.join("raw"))?;
    std::fs::create_dir_all(out_dir.join("folds"))?;
    let mut csv = std::fs::File::create(out_dir.join("report.csv"))?;
    csv.write_all(render_csv(&outcome.report).as_bytes())?;
    let mut txt = std::fs::File::create(out_dir.join("report.txt"))?;
    txt.write_all(render_text(&outcome.report).as_bytes())?;
    for trial in &outcome.trials {
        let folds_path = out_dir.join(format!("folds/trial-{}.json", trial.folds.trial));
        serde_json::to_writer(std::fs::File::create(folds_path)?, &trial.folds)?;
        for (name, method) in &trial.methods {
            let raw_path = out_dir.join(format!("raw/trial-{}-{}.json", trial.folds.trial, name));
            serde_json::to_writer(std::fs::File::create(raw_path)?, method)?;
        }
    }
    Ok(())
}

/// Censor-probe outcome: how often the front-censored copy of a series is
/// inferred to have strictly more delay than the back-censored copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub fraction: f64,
    pub compared: usize,
    pub excluded: usize,
}

/// Remove a window `w` from the front (re-zeroed) and separately from the
/// back of every test series, trim both cuts to the same visit count,
/// infer a delay for each side with the frozen model, and report the
/// fraction with `delta_front > delta_back` (strict).
pub fn run_censor_probe(
    model: &SubLignModel,
    test: &Dataset,
    w: f64,
) -> Result<ProbeResult, HarnessError> {
    if !model.align {
        return Err(HarnessError::ProbeNeedsAlignment);
    }
    let (front, _) = censor_window(test, CensorCut::FrontYears(w))?;
    let (back, _) = censor_window(test, CensorCut::BackYears(w))?;
    let front_by_id: BTreeMap<&str, usize> = front
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let back_by_id: BTreeMap<&str, usize> = back
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let mut compared = 0usize;
    let mut hits = 0usize;
    let mut excluded = 0usize;
    for traj in &test.trajectories {
        let (Some(&fi), Some(&bi)) = (
            front_by_id.get(traj.id.as_str()),
            back_by_id.get(traj.id.as_str()),
        ) else {
            excluded += 1;
            continue;
        };
        let mut f = front.trajectories[fi].clone();
        let mut b = back.trajectories[bi].clone();
        let keep = f.n_visits().min(b.n_visits());
        f.times.truncate(keep);
        f.values.truncate(keep);
        b.times.truncate(keep);
        b.values.truncate(keep);
        if f.n_present() == 0 || b.n_present() == 0 {
            excluded += 1;
            continue;
        }
        let delta_front = grid_search_delta(model, &f).delta;
        let delta_back = grid_search_delta(model, &b).delta;
        compared += 1;
        if delta_front > delta_back {
            hits += 1;
        }
    }
    Ok(ProbeResult {
        fraction: if compared > 0 {
            hits as f64 / compared as f64
        } else {
            0.0
        },
        compared,
        excluded,
    })
}
