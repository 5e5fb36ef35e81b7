//! The greedy cluster-then-align baseline.
//!
//! Stage 1 clusters fixed-width embeddings of the raw observed values
//! with k-means: each dimension linearly interpolated (constant beyond the
//! series' span) onto 10 equally spaced points of the shared observation
//! clock, so misalignment contaminates the features exactly as it would
//! for naive clustering. Stage 2 freezes those labels and minimizes the
//! summed squared residual
//! `sum_i sum_{m,d} (y - f(kappa(x_m + delta_i; theta_{s_i,d})))^2`
//! jointly over per-cluster coefficients and per-series delays with BFGS
//! (dense inverse-Hessian updates, backtracking Armijo line search), the
//! delays projected back into `[0, delta_max]` after every step.

use crate::data::{eval_poly, validate, AlignmentGrid, Dataset, LinkFamily, LinkSpec, Trajectory, Violation};
use crate::ident::{kmeans, polyfit, IdentError};
use crate::util::{lerp_at, mix_seed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points per dimension in the stage-1 embedding.
const FEATURE_POINTS: usize = 10;
const MAX_BFGS_ITERS: usize = 300;
const MAX_HALVINGS: usize = 50;
const ARMIJO_C1: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("dataset failed validation ({0:?})")]
    InvalidData(Vec<Violation>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("clustering failure: {0}")]
    Cluster(#[from] IdentError),
}

/// Stage-2 solution of the greedy objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansLossResult {
    pub labels: Vec<usize>,
    /// `K x D x (P+1)` per-cluster coefficients.
    pub theta: Vec<Vec<Vec<f64>>>,
    /// Per-series delay inside `[0, delta_max]`.
    pub deltas: Vec<f64>,
    pub objective: f64,
    /// Set when any line search exhausted its halvings.
    pub line_search_warning: bool,
}

/// Fitted baseline plus what out-of-sample scoring needs: the stage-1
/// feature centers and sampling clock for assignment, and the link/grid
/// for delay search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansLossFit {
    pub result: KMeansLossResult,
    pub feature_centers: Vec<Vec<f64>>,
    /// Shared observation-clock times the features sample.
    pub feature_times: Vec<f64>,
    pub link: LinkSpec,
    pub grid: AlignmentGrid,
}

/// Sampling clock for the embedding: `FEATURE_POINTS` equally spaced
/// times from 0 to the latest visit seen in the training data.
pub fn feature_times(dataset: &Dataset) -> Vec<f64> {
    let t_max = dataset
        .trajectories
        .iter()
        .filter_map(|t| t.times.last().copied())
        .fold(0.0f64, f64::max);
    (0..FEATURE_POINTS)
        .map(|j| t_max * j as f64 / (FEATURE_POINTS - 1) as f64)
        .collect()
}

/// Values-at-shared-clock embedding: each dimension interpolated at the
/// given times (constant beyond the observed span), blocks concatenated.
pub fn feature_vector(traj: &Trajectory, dim: usize, times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len() * dim);
    for d in 0..dim {
        let obs = traj.observed_dim(d);
        let xs: Vec<f64> = obs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = obs.iter().map(|p| p.1).collect();
        for &t in times {
            out.push(if xs.is_empty() { 0.5 } else { lerp_at(&xs, &ys, t) });
        }
    }
    out
}

struct Objective<'a> {
    dataset: &'a Dataset,
    labels: &'a [usize],
    k: usize,
    p1: usize,
    grid: AlignmentGrid,
}

impl Objective<'_> {
    fn n_theta(&self) -> usize {
        self.k * self.dataset.dim * self.p1
    }

    fn n_vars(&self) -> usize {
        self.n_theta() + self.dataset.len()
    }

    fn theta_at<'b>(&self, x: &'b [f64], cluster: usize, dim: usize) -> &'b [f64] {
        let base = (cluster * self.dataset.dim + dim) * self.p1;
        &x[base..base + self.p1]
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut obj = 0.0;
        for (i, traj) in self.dataset.trajectories.iter().enumerate() {
            let delta = x[self.n_theta() + i];
            obj += series_sse(traj, delta, self.labels[i], self, x);
        }
        obj
    }

    fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let link = self.dataset.link.family;
        let mut obj = 0.0;
        let mut grad = vec![0.0; self.n_vars()];
        for (i, traj) in self.dataset.trajectories.iter().enumerate() {
            let delta = x[self.n_theta() + i];
            let cluster = self.labels[i];
            for (m, row) in traj.values.iter().enumerate() {
                let t = traj.times[m] + delta;
                for (d, cell) in row.iter().enumerate() {
                    let Some(y) = cell else { continue };
                    let theta = self.theta_at(x, cluster, d);
                    let u = eval_poly(theta, t);
                    let (mean, fprime) = match link {
                        LinkFamily::Sigmoid => {
                            let s = 1.0 / (1.0 + (-u).exp());
                            (s, s * (1.0 - s))
                        }
                        LinkFamily::Identity => (u, 1.0),
                    };
                    let r = y - mean;
                    obj += r * r;
                    let base = (cluster * self.dataset.dim + d) * self.p1;
                    let mut pw = 1.0;
                    let mut kprime = 0.0;
                    for p in 0..self.p1 {
                        grad[base + p] += -2.0 * r * fprime * pw;
                        if p + 1 < self.p1 {
                            kprime += theta[p + 1] * (p + 1) as f64 * pw;
                        }
                        pw *= t;
                    }
                    grad[self.n_theta() + i] += -2.0 * r * fprime * kprime;
                }
            }
        }
        (obj, grad)
    }

    /// Clamp the delay block into the grid's box.
    fn project(&self, x: &mut [f64]) {
        let nt = self.n_theta();
        for v in &mut x[nt..] {
            *v = v.clamp(0.0, self.grid.delta_max);
        }
    }
}

fn series_sse(traj: &Trajectory, delta: f64, cluster: usize, obj: &Objective, x: &[f64]) -> f64 {
    let link = obj.dataset.link;
    let mut sse = 0.0;
    for (m, row) in traj.values.iter().enumerate() {
        let t = traj.times[m] + delta;
        for (d, cell) in row.iter().enumerate() {
            if let Some(y) = cell {
                let mean = link.eval(obj.theta_at(x, cluster, d), t);
                sse += (y - mean) * (y - mean);
            }
        }
    }
    sse
}

/// Dense BFGS with projected backtracking line search. Accepted iterates
/// never increase the objective (the Armijo test is applied to the
/// projected candidate). Returns the best point seen and whether any line
/// search ran out of halvings.
fn bfgs_minimize(obj: &Objective, x0: Vec<f64>) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut x = x0;
    obj.project(&mut x);
    let (mut fx, mut g) = obj.eval_grad(&x);
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut warned = false;
    for _ in 0..MAX_BFGS_ITERS {
        // p = -H g
        let mut p = vec![0.0; n];
        for i in 0..n {
            let row = &h[i * n..(i + 1) * n];
            p[i] = -row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        }
        let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // Direction lost descent (projection side effects); reset to
            // steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for i in 0..n {
                p[i] = -g[i];
            }
        }
        let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut candidate = None;
        for _ in 0..=MAX_HALVINGS {
            let mut xn: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + step * pi).collect();
            obj.project(&mut xn);
            let fn_ = obj.eval(&xn);
            if fn_ <= fx + ARMIJO_C1 * step * slope && fn_ <= fx {
                candidate = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = candidate else {
            warned = true;
            break;
        };
        let (_, gn) = obj.eval_grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let converged = (fx - fxn).abs() <= 1e-14 * (1.0 + fx.abs())
            || gn.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10;
        x = xn;
        fx = fxn;
        g = gn;
        if converged {
            break;
        }
        if sy > 1e-12 {
            // H <- H + ((sy + yHy)/sy^2) s s^T - (H y s^T + s (H y)^T)/sy
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let row = &h[i * n..(i + 1) * n];
                hy[i] = row.iter().zip(&yv).map(|(a, b)| a * b).sum();
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let c1 = (sy + yhy) / (sy * sy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += c1 * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
    }
    (x, fx, warned)
}

/// Fit the greedy baseline. Stage-1 label inference and both delay
/// multi-starts are deterministic given `seed`.
pub fn kmeans_loss_fit(
    dataset: &Dataset,
    k: usize,
    grid: AlignmentGrid,
    seed: u64,
) -> Result<KMeansLossFit, BaselineError> {
    if dataset.is_empty() {
        return Err(BaselineError::EmptyDataset);
    }
    let violations = validate(dataset);
    if !violations.is_empty() {
        return Err(BaselineError::InvalidData(violations));
    }
    let clock = feature_times(dataset);
    let features: Vec<Vec<f64>> = dataset
        .trajectories
        .iter()
        .map(|t| feature_vector(t, dataset.dim, &clock))
        .collect();
    let stage1 = kmeans(&features, k, mix_seed(seed, 0x66656174))?;
    let labels = stage1.labels;

    let p1 = dataset.link.n_coeffs();
    let obj = Objective {
        dataset,
        labels: &labels,
        k,
        p1,
        grid,
    };
    let theta0 = init_theta(dataset, &labels, k, p1);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for delta0 in [0.0, grid.delta_max / 2.0] {
        let mut x0 = theta0.clone();
        x0.extend(std::iter::repeat(delta0).take(dataset.len()));
        let (x, fx, warned) = bfgs_minimize(&obj, x0);
        if best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx, warned));
        }
    }
    let (x, objective, line_search_warning) = best.unwrap();
    let nt = obj.n_theta();
    let theta: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|c| {
            (0..dataset.dim)
                .map(|d| obj.theta_at(&x, c, d).to_vec())
                .collect()
        })
        .collect();
    Ok(KMeansLossFit {
        result: KMeansLossResult {
            labels,
            theta,
            deltas: x[nt..].to_vec(),
            objective,
            line_search_warning,
        },
        feature_centers: stage1.centers,
        feature_times: clock,
        link: dataset.link,
        grid,
    })
}

/// The stage-2 objective and its analytic gradient at a packed point
/// `[theta (K*D*(P+1)) || delta (N)]`, with the given frozen labels.
/// Exposed so oracles can difference it directly.
pub fn stage2_objective_grad(
    dataset: &Dataset,
    labels: &[usize],
    k: usize,
    grid: AlignmentGrid,
    x: &[f64],
) -> (f64, Vec<f64>) {
    let obj = Objective {
        dataset,
        labels,
        k,
        p1: dataset.link.n_coeffs(),
        grid,
    };
    assert_eq!(x.len(), obj.n_vars(), "packed point has wrong width");
    obj.eval_grad(x)
}

/// Initial coefficients: pooled per-cluster polynomial fits of the raw
/// values (through the inverse link where it applies, clamped into its
/// domain). Falls back to zeros when a pool is rank deficient.
fn init_theta(dataset: &Dataset, labels: &[usize], k: usize, p1: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * dataset.dim * p1];
    for c in 0..k {
        for d in 0..dataset.dim {
            let mut pts = Vec::new();
            for (traj, &label) in dataset.trajectories.iter().zip(labels) {
                if label != c {
                    continue;
                }
                for (x, y) in traj.observed_dim(d) {
                    let target = match dataset.link.family {
                        LinkFamily::Identity => y,
                        LinkFamily::Sigmoid => {
                            let v = y.clamp(0.01, 0.99);
                            (v / (1.0 - v)).ln()
                        }
                    };
                    pts.push((x, target));
                }
            }
            if let Ok(theta) = polyfit(&pts, p1 - 1, "baseline init") {
                let base = (c * dataset.dim + d) * p1;
                out[base..base + p1].copy_from_slice(&theta);
            }
        }
    }
    out
}

/// Out-of-sample scoring: assign by nearest stage-1 feature center (the
/// same greedy rule the fit used), then re-optimize the delay with the
/// cluster's coefficients frozen. Returns (label, delta, sse).
pub fn assign_and_align(fit: &KMeansLossFit, traj: &Trajectory, dim: usize) -> (usize, f64, f64) {
    let f = feature_vector(traj, dim, &fit.feature_times);
    let mut label = 0;
    let mut best = f64::INFINITY;
    for (c, center) in fit.feature_centers.iter().enumerate() {
        let d: f64 = f.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best {
            best = d;
            label = c;
        }
    }
    let (delta, sse) = align_delta(fit, traj, label);
    (label, delta, sse)
}

/// Grid scan plus golden-section refinement of the per-series delay.
fn align_delta(fit: &KMeansLossFit, traj: &Trajectory, label: usize) -> (f64, f64) {
    let sse_at = |delta: f64| -> f64 {
        let mut sse = 0.0;
        for (m, row) in traj.values.iter().enumerate() {
            let t = traj.times[m] + delta;
            for (d, cell) in row.iter().enumerate() {
                if let Some(y) = cell {
                    let mean = fit.link.eval(&fit.result.theta[label][d], t);
                    sse += (y - mean) * (y - mean);
                }
            }
        }
        sse
    };
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..fit.grid.len() {
        let v = sse_at(fit.grid.point(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = fit.grid.point(best_i.saturating_sub(1));
    let mut hi = fit.grid.point((best_i + 1).min(fit.grid.len() - 1));
    // Golden-section shrink inside the bracketing neighbors.
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    let mut a = lo + phi * (hi - lo);
    let mut b = hi - phi * (hi - lo);
    let (mut fa, mut fb) = (sse_at(a), sse_at(b));
    for _ in 0..40 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = lo + phi * (hi - lo);
            fa = sse_at(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = hi - phi * (hi - lo);
            fb = sse_at(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = sse_at(mid);
    if fm <= best {
        (mid, fm)
    } else {
        (fit.grid.point(best_i), best)
    }
}

/// Summed out-of-sample objective (labels assigned greedily, delays
/// re-optimized per series); the validation criterion for this method.
pub fn objective_on(fit: &KMeansLossFit, dataset: &Dataset) -> f64 {
    dataset
        .trajectories
        .iter()
        .map(|t| assign_and_align(fit, t, dataset.dim).2)
        .sum()
}
