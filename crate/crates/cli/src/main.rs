//! `censalign`: generate synthetic benchmarks, train and apply the
//! alignment-aware subtype model, run the exact noiseless identification,
//! fit the greedy baseline, score fits, and orchestrate full experiments.

use anyhow::{bail, Context, Result};
use censalign_core::data::{load_dataset, save_dataset, LinkFamily, LinkSpec, SubLignConfig};
use censalign_core::harness::{run_experiment, write_outputs, ExperimentConfig};
use censalign_core::ident::identify;
use censalign_core::metrics::{adjusted_rand_index, pearson, swaps_metric};
use censalign_core::sublign::{infer, model_io, subnolign_train, train, FitResult};
use censalign_core::synth::{apply_missingness, generate, GeneratorFamily, GeneratorSpec};
use censalign_core::AlignmentGrid;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "censalign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset as JSON Lines.
    Generate {
        /// sigmoid | quad1..quad6 | spline-incr | spline-any
        #[arg(long)]
        family: String,
        /// Number of series.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Visits per series.
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 0.25)]
        noise_var: f64,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long, default_value_t = 0.5)]
        subtype_prob: f64,
        /// Fraction of present cells to blank after generation.
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the variational model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON file holding the training configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pin every delay to zero (the no-alignment ablation).
        #[arg(long, default_value_t = false)]
        no_align: bool,
    },
    /// Infer latents, delays, and clusters under a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact noiseless identification of subtypes and delays.
    Identify {
        #[arg(long)]
        data: PathBuf,
        /// identity | sigmoid (defaults to the dataset header's link)
        #[arg(long)]
        link: Option<String>,
        /// Polynomial degree (defaults to the link's convention).
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        k: usize,
        /// Biomarker used for delay recovery.
        #[arg(long, default_value_t = 0)]
        canonical_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference baselines.
    Baseline {
        #[command(subcommand)]
        which: BaselineCommand,
    },
    /// Score a fit against a dataset's ground truth.
    Evaluate {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the multi-trial experiment protocol from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// Cluster raw values, then jointly fit coefficients and delays.
    KmeansLoss {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        delta_max: f64,
        #[arg(long, default_value_t = 0.2)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_family(s: &str) -> Result<GeneratorFamily> {
    Ok(match s {
        "sigmoid" => GeneratorFamily::Sigmoid3D,
        "spline-incr" => GeneratorFamily::Spline { monotone: true },
        "spline-any" => GeneratorFamily::Spline { monotone: false },
        _ => {
            if let Some(case) = s.strip_prefix("quad") {
                let case: usize = case
                    .parse()
                    .with_context(|| format!("bad quadratic case in family `{s}`"))?;
                GeneratorFamily::QuadraticCase(case)
            } else {
                bail!("unknown family `{s}` (expected sigmoid, quad1..quad6, spline-incr, spline-any)");
            }
        }
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            family,
            n,
            m,
            noise_var,
            tmax,
            subtype_prob,
            missing_rate,
            seed,
            out,
        } => {
            let spec = GeneratorSpec {
                family: parse_family(&family)?,
                n_patients: n,
                n_visits: m,
                noise_var,
                t_max: tmax,
                subtype_prob,
                seed,
            };
            let mut dataset = generate(&spec)?;
            if missing_rate > 0.0 {
                dataset = apply_missingness(&dataset, missing_rate, seed)?;
            }
            save_dataset(&dataset, &out)?;
            eprintln!("wrote {} series to {}", dataset.len(), out.display());
        }
        Command::Train {
            data,
            config,
            out,
            no_align,
        } => {
            let dataset = load_dataset(&data)?;
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config: SubLignConfig = serde_json::from_str(&text)?;
            let (model, log) = if no_align {
                subnolign_train(&dataset, &config)?
            } else {
                train(&dataset, &config)?
            };
            model_io::save_model(&model, &log, &out)?;
            eprintln!(
                "trained {} epochs (best objective {:.4} at epoch {}), wrote {}",
                config.epochs,
                log.best_elbo,
                log.best_epoch,
                out.display()
            );
        }
        Command::Infer {
            model,
            data,
            k,
            out,
        } => {
            let (model, log) = model_io::load_model(&model)?;
            let dataset = load_dataset(&data)?;
            let fit = infer(&model, &dataset, k, Some(&log))?;
            serde_json::to_writer(std::fs::File::create(&out)?, &fit)?;
            eprintln!("wrote fit for {} series to {}", dataset.len(), out.display());
        }
        Command::Identify {
            data,
            link,
            degree,
            k,
            canonical_dim,
            out,
        } => {
            let dataset = load_dataset(&data)?;
            let family = match link.as_deref() {
                None => dataset.link.family,
                Some("identity") => LinkFamily::Identity,
                Some("sigmoid") => LinkFamily::Sigmoid,
                Some(other) => bail!("unknown link `{other}`"),
            };
            let spec = LinkSpec::with_degree(family, degree.unwrap_or(family.default_degree()));
            let result = identify(&dataset, spec, k, canonical_dim)?;
            serde_json::to_writer(std::fs::File::create(&out)?, &result)?;
            for note in &result.diagnostics {
                eprintln!("note: {note}");
            }
            eprintln!("identified {} series, wrote {}", dataset.len(), out.display());
        }
        Command::Baseline { which } => match which {
            BaselineCommand::KmeansLoss {
                data,
                k,
                delta_max,
                step,
                seed,
                out,
            } => {
                let dataset = load_dataset(&data)?;
                let grid = AlignmentGrid::new(delta_max, step)?;
                let fit = censalign_core::baseline::kmeans_loss_fit(&dataset, k, grid, seed)?;
                if fit.result.line_search_warning {
                    eprintln!("warning: a line search stalled; result is best-so-far");
                }
                serde_json::to_writer(std::fs::File::create(&out)?, &fit)?;
                eprintln!(
                    "objective {:.6}, wrote {}",
                    fit.result.objective,
                    out.display()
                );
            }
        },
        Command::Evaluate { fit, data, out } => {
            let fit: FitResult = serde_json::from_reader(std::fs::File::open(&fit)?)?;
            let dataset = load_dataset(&data)?;
            let scores = evaluate_fit(&fit, &dataset)?;
            serde_json::to_writer(std::fs::File::create(&out)?, &scores)?;
            eprintln!("wrote scores to {}", out.display());
        }
        Command::Experiment { config, out_dir } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config: ExperimentConfig = serde_json::from_str(&text)?;
            let outcome = run_experiment(&config)?;
            write_outputs(&outcome, &out_dir)?;
            print!("{}", censalign_core::harness::render_text(&outcome.report));
            let failed = outcome.methods_failed_everywhere();
            if !failed.is_empty() {
                bail!("methods failed in every trial: {}", failed.join(", "));
            }
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Scores {
    n: usize,
    ari: Option<f64>,
    swaps: Option<f64>,
    pearson: Option<f64>,
}

fn evaluate_fit(fit: &FitResult, dataset: &censalign_core::Dataset) -> Result<Scores> {
    let by_id: std::collections::BTreeMap<&str, &censalign_core::Trajectory> = dataset
        .trajectories
        .iter()
        .map(|t| (t.id.as_str(), t))
        .collect();
    let mut truth_labels = Vec::new();
    let mut pred_labels = Vec::new();
    let mut truth_deltas = Vec::new();
    let mut pred_deltas = Vec::new();
    let mut have_labels = true;
    let mut have_deltas = true;
    for entry in &fit.per_trajectory {
        let traj = by_id
            .get(entry.id.as_str())
            .with_context(|| format!("fit names unknown trajectory `{}`", entry.id))?;
        match traj.true_subtype {
            Some(s) => {
                truth_labels.push(s);
                pred_labels.push(entry.label);
            }
            None => have_labels = false,
        }
        match (traj.true_delta, entry.delta_hat) {
            (Some(t), Some(p)) => {
                truth_deltas.push(t);
                pred_deltas.push(p);
            }
            _ => have_deltas = false,
        }
    }
    Ok(Scores {
        n: fit.per_trajectory.len(),
        ari: (have_labels && truth_labels.len() >= 2)
            .then(|| adjusted_rand_index(&truth_labels, &pred_labels))
            .transpose()?,
        swaps: (have_deltas && truth_deltas.len() >= 2)
            .then(|| swaps_metric(&truth_deltas, &pred_deltas))
            .transpose()?,
        pearson: (have_deltas && truth_deltas.len() >= 2)
            .then(|| pearson(&truth_deltas, &pred_deltas))
            .map(|r| r.ok())
            .flatten(),
    })
}
