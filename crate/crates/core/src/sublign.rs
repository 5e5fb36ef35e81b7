//! The variational subtype-and-align model.
//!
//! One latent `z` per series feeds a decoder MLP that emits per-dimension
//! polynomial coefficients; a discrete delay chosen from a uniform grid
//! shifts the observation clock before the link is applied. Learning
//! alternates a per-series grid search for the best one-hot delay with a
//! full-batch Adam pass on the evidence lower bound; inference clusters the
//! posterior means with k-means and decodes the centers into subtype
//! trajectories.
//!
//! Missing cells never enter the likelihood graph (rows are built from
//! present cells only); they are linearly interpolated *only* to form the
//! encoder's per-visit input vectors.

use crate::data::{
    validate, AlignmentGrid, DataError, Dataset, LinkFamily, LinkSpec, SubLignConfig, Trajectory,
    Violation,
};
use crate::diff::{
    read_into_store, store_to_json, AdamState, DiffError, GradBuf, Mlp, ParamRecord, ParamStore,
    Rnn, RnnKind, Tape, Var,
};
use crate::ident::{kmeans, IdentError};
use crate::util::{content_seed, lerp_at, mix_seed};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

const LN_2PI: f64 = 1.8378770664093453;
/// Patients per gradient chunk; fixed so the reduction order (and thus the
/// bit pattern of results) does not depend on thread count.
const CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset failed validation ({} violations, first: {})",
            .0.len(), .0.first().map(|v| format!("{}: {}", v.id, v.rule)).unwrap_or_default())]
    InvalidData(Vec<Violation>),
    #[error("bad configuration: {0}")]
    Config(#[from] DataError),
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: DiffError },
    #[error("differentiation failure: {0}")]
    Diff(#[from] DiffError),
    #[error("clustering failure: {0}")]
    Cluster(#[from] IdentError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("k = {k} clusters requested from {n} series")]
    KTooLarge { k: usize, n: usize },
    #[error("model expects {expected} dims, dataset has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("model i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Decoder side: `z -> Theta`, a flat `D * (P+1)` coefficient vector.
#[derive(Debug, Clone, Copy)]
pub struct GenerativeParams {
    pub decoder: Mlp,
}

/// Encoder side: recurrent body plus mean / log-variance heads of the
/// diagonal Gaussian posterior.
#[derive(Debug, Clone, Copy)]
pub struct InferenceParams {
    pub rnn: Rnn,
    pub mu_head: Mlp,
    pub logvar_head: Mlp,
}

/// One-hot delay selection over an [`AlignmentGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPosterior {
    pub index: usize,
    pub delta: f64,
}

impl DeltaPosterior {
    pub fn at(grid: &AlignmentGrid, index: usize) -> Self {
        DeltaPosterior {
            index,
            delta: grid.point(index),
        }
    }

    pub fn zero(grid: &AlignmentGrid) -> Self {
        DeltaPosterior::at(grid, 0)
    }
}

/// A trained model: parameter store plus layer handles and the pieces of
/// configuration needed to rebuild graphs.
#[derive(Debug, Clone)]
pub struct SubLignModel {
    pub store: ParamStore,
    pub generative: GenerativeParams,
    pub inference: InferenceParams,
    pub config: SubLignConfig,
    pub link: LinkSpec,
    pub data_dim: usize,
    /// False for the no-alignment ablation: delays pinned to 0 everywhere.
    pub align: bool,
}

/// Per-epoch objective values plus the checkpointed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingLog {
    pub elbo_per_epoch: Vec<f64>,
    pub best_epoch: usize,
    pub best_elbo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub id: String,
    pub z: Vec<f64>,
    /// Absent for the no-alignment ablation.
    pub delta_hat: Option<f64>,
    pub label: usize,
}

/// Inference output: per-series latents, delays, labels, plus the decoded
/// subtype trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub per_trajectory: Vec<FitEntry>,
    pub centers: Vec<Vec<f64>>,
    /// `K x D x (P+1)` decoded coefficient matrices, one per cluster.
    pub tau: Vec<Vec<Vec<f64>>>,
    pub elbo_curve: Vec<f64>,
}

impl SubLignModel {
    /// Fresh model with uniform(-1/sqrt(fan_in), ..) init, seeded from the
    /// config.
    pub fn init(config: &SubLignConfig, link: LinkSpec, data_dim: usize, align: bool) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(config.seed, 0x696e6974));
        let mut store = ParamStore::new();
        let in_dim = 1 + data_dim;
        let rnn = Rnn::new(
            &mut store,
            "encoder.rnn",
            RnnKind::Gated,
            in_dim,
            config.rnn_hidden,
            &mut rng,
        );
        let mu_head = Mlp::new(
            &mut store,
            "encoder.mu",
            config.rnn_hidden,
            config.mlp_hidden,
            config.latent_dim,
            &mut rng,
        );
        let logvar_head = Mlp::new(
            &mut store,
            "encoder.logvar",
            config.rnn_hidden,
            config.mlp_hidden,
            config.latent_dim,
            &mut rng,
        );
        let decoder = Mlp::new(
            &mut store,
            "decoder",
            config.latent_dim,
            config.mlp_hidden,
            data_dim * link.n_coeffs(),
            &mut rng,
        );
        SubLignModel {
            store,
            generative: GenerativeParams { decoder },
            inference: InferenceParams {
                rnn,
                mu_head,
                logvar_head,
            },
            config: config.clone(),
            link,
            data_dim,
            align,
        }
    }

    fn weight_ids(&self) -> Vec<crate::diff::ParamId> {
        let mut ids = self.inference.rnn.weight_ids();
        ids.extend(self.inference.mu_head.weight_ids());
        ids.extend(self.inference.logvar_head.weight_ids());
        ids.extend(self.generative.decoder.weight_ids());
        ids
    }
}

/// Per-visit encoder inputs `[x_m, y~_m[0], ..., y~_m[D-1]]` with missing
/// cells linearly interpolated per dimension (nearest observed value past
/// the ends; 0.5 for a dimension with no observations at all).
pub fn encoder_inputs(traj: &Trajectory, dim: usize) -> Vec<Vec<f64>> {
    let mut per_dim: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(dim);
    for d in 0..dim {
        let obs = traj.observed_dim(d);
        per_dim.push((
            obs.iter().map(|p| p.0).collect(),
            obs.iter().map(|p| p.1).collect(),
        ));
    }
    traj.times
        .iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(1 + dim);
            row.push(x);
            for (xs, ys) in &per_dim {
                row.push(if xs.is_empty() {
                    0.5
                } else {
                    lerp_at(xs, ys, x)
                });
            }
            row
        })
        .collect()
}

/// Predicted mean grid `M x D` for one series at a given latent and delay:
/// `f(kappa(x + delta; Theta[d]))` with `Theta = g(z)`.
pub fn decode_trajectory(
    model: &SubLignModel,
    z: &[f64],
    times: &[f64],
    delta: f64,
    link: LinkSpec,
) -> Vec<Vec<f64>> {
    let theta = decode_theta(model, z);
    times
        .iter()
        .map(|&x| {
            (0..model.data_dim)
                .map(|d| link.eval(&theta[d], x + delta))
                .collect()
        })
        .collect()
}

/// Run the decoder on a latent and reshape to `D x (P+1)`.
pub fn decode_theta(model: &SubLignModel, z: &[f64]) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.len(), 1, z);
    let theta = model.generative.decoder.apply(&mut tape, &model.store, zv);
    let flat = tape.value(theta);
    let p1 = model.link.n_coeffs();
    (0..model.data_dim)
        .map(|d| flat[d * p1..(d + 1) * p1].to_vec())
        .collect()
}

/// Posterior mean and log-variance for one series (values only).
pub fn encode_posterior(model: &SubLignModel, traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let inputs = encoder_inputs(traj, model.data_dim);
    let mut tape = Tape::new();
    let h = model.inference.rnn.encode(&mut tape, &model.store, &inputs);
    let mu = model.inference.mu_head.apply(&mut tape, &model.store, h);
    let lv = model
        .inference
        .logvar_head
        .apply(&mut tape, &model.store, h);
    (tape.value(mu).to_vec(), tape.value(lv).to_vec())
}

/// Build the single-series ELBO graph on a tape and return its root.
///
/// `eps` holds `n_mc` standard-normal draws of width `latent_dim`; the
/// reconstruction term is averaged over them and the KL is closed form.
fn elbo_graph(
    tape: &mut Tape,
    model: &SubLignModel,
    traj: &Trajectory,
    delta: f64,
    beta: f64,
    eps: &[Vec<f64>],
) -> Var {
    let store = &model.store;
    let inputs = encoder_inputs(traj, model.data_dim);
    let h = model.inference.rnn.encode(tape, store, &inputs);
    let mu = model.inference.mu_head.apply(tape, store, h);
    let lv = model.inference.logvar_head.apply(tape, store, h);

    // Design rows for present cells only.
    let p1 = model.link.n_coeffs();
    let width = model.data_dim * p1;
    let mut design = Vec::new();
    let mut targets = Vec::new();
    for (m, row) in traj.values.iter().enumerate() {
        let x = traj.times[m] + delta;
        for (d, cell) in row.iter().enumerate() {
            if let Some(y) = cell {
                let mut arow = vec![0.0; width];
                let mut pw = 1.0;
                for p in 0..p1 {
                    arow[d * p1 + p] = pw;
                    pw *= x;
                }
                design.extend_from_slice(&arow);
                targets.push(*y);
            }
        }
    }
    let n_present = targets.len();
    let a = tape.constant(n_present, width, &design);
    let y = tape.constant(n_present, 1, &targets);

    // Reconstruction averaged over the eps draws.
    let half_lv = tape.affine(lv, 0.5, 0.0);
    let sigma = tape.exp(half_lv);
    let mut recon_acc: Option<Var> = None;
    for draw in eps {
        let e = tape.constant(draw.len(), 1, draw);
        let noise = tape.mul(sigma, e);
        let z = tape.add(mu, noise);
        let theta = model.generative.decoder.apply(tape, store, z);
        let raw = tape.matmul(a, theta);
        let mean = match model.link.family {
            LinkFamily::Sigmoid => tape.sigmoid(raw),
            LinkFamily::Identity => raw,
        };
        let resid = tape.sub(y, mean);
        let sq = tape.mul(resid, resid);
        let sse = tape.sum(sq);
        recon_acc = Some(match recon_acc {
            None => sse,
            Some(acc) => tape.add(acc, sse),
        });
    }
    let n_mc = eps.len() as f64;
    let s = model.config.grid.len() as f64;
    // -0.5 * mean(sse) - 0.5 ln(2pi) * n_present + log p(delta)/q(delta)
    let recon = tape.affine(
        recon_acc.expect("n_mc >= 1"),
        -0.5 / n_mc,
        -0.5 * LN_2PI * n_present as f64 - s.ln(),
    );

    // KL(q || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - logvar - 1)
    let mu2 = tape.mul(mu, mu);
    let var = tape.exp(lv);
    let t1 = tape.add(mu2, var);
    let t2 = tape.sub(t1, lv);
    let ksum = tape.sum(t2);
    let kl = tape.affine(ksum, 0.5, -0.5 * model.config.latent_dim as f64);
    let weighted = tape.affine(kl, beta, 0.0);
    tape.sub(recon, weighted)
}

/// Single-series ELBO with explicit standard-normal draws; returns the
/// scalar value and the parameter gradient map.
pub fn elbo_with_eps(
    model: &SubLignModel,
    traj: &Trajectory,
    q_delta: &DeltaPosterior,
    beta: f64,
    eps: &[Vec<f64>],
) -> Result<(f64, GradBuf), ModelError> {
    let mut tape = Tape::new();
    let root = elbo_graph(&mut tape, model, traj, q_delta.delta, beta, eps);
    let mut grads = GradBuf::zeros_like(&model.store);
    tape.backward(root, &mut grads)?;
    Ok((tape.scalar(root), grads))
}

/// As [`elbo_with_eps`] but without the backward pass.
pub fn elbo_value_with_eps(
    model: &SubLignModel,
    traj: &Trajectory,
    q_delta: &DeltaPosterior,
    beta: f64,
    eps: &[Vec<f64>],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let root = elbo_graph(&mut tape, model, traj, q_delta.delta, beta, eps);
    if !tape.scalar(root).is_finite() {
        // Trigger the tape's diagnostic path.
        let mut grads = GradBuf::zeros_like(&model.store);
        tape.backward(root, &mut grads)?;
    }
    Ok(tape.scalar(root))
}

/// Single-series ELBO with `n_mc` fresh reparameterization draws.
pub fn elbo(
    model: &SubLignModel,
    traj: &Trajectory,
    q_delta: &DeltaPosterior,
    beta: f64,
    n_mc: usize,
    rng: &mut impl Rng,
) -> Result<(f64, GradBuf), ModelError> {
    let eps: Vec<Vec<f64>> = (0..n_mc.max(1))
        .map(|_| standard_normal_vec(rng, model.config.latent_dim))
        .collect();
    elbo_with_eps(model, traj, q_delta, beta, &eps)
}

fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    use rand_distr::StandardNormal;
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Reconstruction score of a series at a fixed coefficient matrix and
/// delay: the delta-dependent part of the ELBO (z held at the posterior
/// mean, so the KL term is constant and omitted).
fn recon_score(
    theta: &[Vec<f64>],
    traj: &Trajectory,
    delta: f64,
    link: LinkSpec,
    grid_len: usize,
) -> f64 {
    let mut sse = 0.0;
    let mut n_present = 0usize;
    for (m, row) in traj.values.iter().enumerate() {
        let x = traj.times[m] + delta;
        for (d, cell) in row.iter().enumerate() {
            if let Some(y) = cell {
                let mean = link.eval(&theta[d], x);
                sse += (y - mean) * (y - mean);
                n_present += 1;
            }
        }
    }
    -0.5 * sse - 0.5 * LN_2PI * n_present as f64 - (grid_len as f64).ln()
}

/// Exhaustive delay scoring at `z = mu(h)`; ties break toward smaller
/// delta. Returns the winning one-hot.
pub fn grid_search_delta(model: &SubLignModel, traj: &Trajectory) -> DeltaPosterior {
    let (mu, _) = encode_posterior(model, traj);
    grid_search_delta_with_z(model, traj, &mu)
}

/// Delay scoring with an explicit latent (used by tests and probes).
pub fn grid_search_delta_with_z(
    model: &SubLignModel,
    traj: &Trajectory,
    z: &[f64],
) -> DeltaPosterior {
    let theta = decode_theta(model, z);
    let grid = &model.config.grid;
    let mut best = DeltaPosterior::zero(grid);
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        let delta = grid.point(i);
        let score = recon_score(&theta, traj, delta, model.link, grid.len());
        if score > best_score {
            best_score = score;
            best = DeltaPosterior { index: i, delta };
        }
    }
    best
}

fn check_dataset(dataset: &Dataset) -> Result<(), ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let violations = validate(dataset);
    if !violations.is_empty() {
        return Err(ModelError::InvalidData(violations));
    }
    Ok(())
}

/// Train with alternating per-series grid search and full-batch gradient
/// ascent; returns the parameters from the best-objective epoch.
pub fn train(dataset: &Dataset, config: &SubLignConfig) -> Result<(SubLignModel, TrainingLog), ModelError> {
    train_inner(dataset, config, true)
}

/// Ablation: identical training with the delay posterior pinned at 0.
pub fn subnolign_train(
    dataset: &Dataset,
    config: &SubLignConfig,
) -> Result<(SubLignModel, TrainingLog), ModelError> {
    train_inner(dataset, config, false)
}

fn train_inner(
    dataset: &Dataset,
    config: &SubLignConfig,
    align: bool,
) -> Result<(SubLignModel, TrainingLog), ModelError> {
    config.validate()?;
    check_dataset(dataset)?;
    let mut model = SubLignModel::init(config, dataset.link, dataset.dim, align);
    let mut adam = AdamState::new(&model.store, config.learning_rate);
    let mut eps_rng = ChaCha20Rng::seed_from_u64(mix_seed(config.seed, 0x7265706172));
    let n = dataset.len();
    let mut deltas = vec![DeltaPosterior::zero(&config.grid); n];
    let mut log = TrainingLog {
        best_elbo: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best_params = model.store.snapshot();

    for epoch in 0..config.epochs {
        if align {
            batch_grid_search(&model, dataset, &mut deltas);
        }
        // One standard-normal draw per series per epoch, taken sequentially
        // so parallel chunking cannot perturb the stream.
        let eps: Vec<Vec<f64>> = (0..n)
            .map(|_| standard_normal_vec(&mut eps_rng, config.latent_dim))
            .collect();
        let (total, mut grads) = batch_elbo_grads(&model, dataset, &deltas, &eps)
            .map_err(|source| match source {
                ModelError::Diff(source) => ModelError::Diverged { epoch, source },
                other => other,
            })?;
        log.elbo_per_epoch.push(total);
        if total > log.best_elbo {
            log.best_elbo = total;
            log.best_epoch = epoch;
            best_params = model.store.snapshot();
        }
        // Descend on -ELBO plus the weight penalty.
        grads.scale(-1.0);
        apply_reg_gradient(&model, &mut grads);
        adam.step(&mut model.store, &grads);
    }
    model.store.restore(&best_params);
    Ok((model, log))
}

fn apply_reg_gradient(model: &SubLignModel, grads: &mut GradBuf) {
    use crate::data::RegType;
    let strength = model.config.reg_strength;
    if strength == 0.0 || model.config.reg_type == RegType::None {
        return;
    }
    for id in model.weight_ids() {
        let w = model.store.value(id);
        let g = grads.get_mut(id);
        match model.config.reg_type {
            RegType::L1 => {
                for (gi, wi) in g.iter_mut().zip(w) {
                    if *wi != 0.0 {
                        *gi += strength * wi.signum();
                    }
                }
            }
            RegType::L2 => {
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += 2.0 * strength * wi;
                }
            }
            RegType::None => {}
        }
    }
}

/// Recompute every series' best delay under frozen parameters. Chunked in
/// fixed order so results are reproducible under any thread count.
fn batch_grid_search(model: &SubLignModel, dataset: &Dataset, deltas: &mut [DeltaPosterior]) {
    let updated: Vec<DeltaPosterior> = dataset
        .trajectories
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|traj| grid_search_delta(model, traj))
                .collect::<Vec<_>>()
        })
        .collect();
    deltas.copy_from_slice(&updated);
}

/// Full-batch objective and gradient, summed over series. Each fixed-size
/// chunk builds one tape; chunk results reduce in index order.
fn batch_elbo_grads(
    model: &SubLignModel,
    dataset: &Dataset,
    deltas: &[DeltaPosterior],
    eps: &[Vec<f64>],
) -> Result<(f64, GradBuf), ModelError> {
    let beta = model.config.kl_weight;
    let jobs: Vec<(usize, &[Trajectory])> = dataset
        .trajectories
        .chunks(CHUNK)
        .enumerate()
        .map(|(i, c)| (i * CHUNK, c))
        .collect();
    let partials: Vec<Result<(f64, GradBuf), ModelError>> = jobs
        .into_par_iter()
        .map(|(start, chunk)| {
            let mut tape = Tape::new();
            let mut root: Option<Var> = None;
            for (j, traj) in chunk.iter().enumerate() {
                let i = start + j;
                let e = std::slice::from_ref(&eps[i]);
                let one = elbo_graph(&mut tape, model, traj, deltas[i].delta, beta, e);
                root = Some(match root {
                    None => one,
                    Some(acc) => tape.add(acc, one),
                });
            }
            let root = root.expect("non-empty chunk");
            let mut grads = GradBuf::zeros_like(&model.store);
            tape.backward(root, &mut grads)?;
            Ok((tape.scalar(root), grads))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = GradBuf::zeros_like(&model.store);
    for part in partials {
        let (value, g) = part?;
        total += value;
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Posterior means, delays, k-means labels, and decoded subtype curves for
/// a dataset under a trained model.
pub fn infer(
    model: &SubLignModel,
    dataset: &Dataset,
    k: usize,
    log: Option<&TrainingLog>,
) -> Result<FitResult, ModelError> {
    check_dataset(dataset)?;
    if dataset.dim != model.data_dim {
        return Err(ModelError::DimMismatch {
            expected: model.data_dim,
            got: dataset.dim,
        });
    }
    let n = dataset.len();
    if k > n {
        return Err(ModelError::KTooLarge { k, n });
    }
    let encoded: Vec<(Vec<f64>, Option<f64>)> = dataset
        .trajectories
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|traj| {
                    let (mu, _) = encode_posterior(model, traj);
                    let delta = if model.align {
                        Some(grid_search_delta_with_z(model, traj, &mu).delta)
                    } else {
                        None
                    };
                    (mu, delta)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let zs: Vec<Vec<f64>> = encoded.iter().map(|(z, _)| z.clone()).collect();
    let fit = kmeans(&zs, k, content_seed(&zs))?;
    let per_trajectory: Vec<FitEntry> = dataset
        .trajectories
        .iter()
        .zip(&encoded)
        .zip(&fit.labels)
        .map(|((traj, (z, delta)), &label)| FitEntry {
            id: traj.id.clone(),
            z: z.clone(),
            delta_hat: *delta,
            label,
        })
        .collect();
    let tau: Vec<Vec<Vec<f64>>> = fit
        .centers
        .iter()
        .map(|c| decode_theta(model, c))
        .collect();
    Ok(FitResult {
        per_trajectory,
        centers: fit.centers,
        tau,
        elbo_curve: log.map(|l| l.elbo_per_epoch.clone()).unwrap_or_default(),
    })
}

// ---------------------------------------------------------------------------
// Model persistence: architecture + link + curve + named parameters.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: SubLignConfig,
    link: LinkSpec,
    data_dim: usize,
    align: bool,
    log: TrainingLog,
    params: BTreeMap<String, ParamRecord>,
}

/// Serialization glue; re-exported through `diff` for the checkpoint type.
pub mod model_io {
    use super::*;

    pub fn save_model(
        model: &SubLignModel,
        log: &TrainingLog,
        path: &Path,
    ) -> Result<(), ModelError> {
        let file = ModelFile {
            config: model.config.clone(),
            link: model.link,
            data_dim: model.data_dim,
            align: model.align,
            log: log.clone(),
            params: store_to_json(&model.store),
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load_model(path: &Path) -> Result<(SubLignModel, TrainingLog), ModelError> {
        let input = std::fs::File::open(path)?;
        let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(input))?;
        let mut model = SubLignModel::init(&file.config, file.link, file.data_dim, file.align);
        read_into_store(&file.params, &mut model.store)?;
        Ok((model, file.log))
    }
}
