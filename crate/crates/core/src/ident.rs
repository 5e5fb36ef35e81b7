//! Exact recovery of subtype polynomials, delays, and labels from noiseless
//! data, plus the k-means implementation shared with the variational model.
//!
//! The pipeline: undo the link, fit each series' canonical-dimension
//! polynomial, locate its smallest-real-part root, refit in canonical
//! position (root translated to 0), cluster the de-biased coefficients,
//! then read each delay off the spread of root locations within its
//! cluster and refit every dimension at the corrected stages.
//!
//! A series with delay `delta` observes `q(x) = kappa(x + delta)`, so its
//! roots sit `delta` *below* the subtype polynomial's roots: within a
//! cluster the zero-delay reference member attains the largest root
//! location `xi`, and `delta_i = max_cluster(xi) - xi_i`.

use crate::data::{eval_poly, Dataset, LinkFamily, LinkSpec, Trajectory};
use crate::util::{content_seed, mix_seed};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdentError {
    #[error("sigmoid inverse undefined for value {value} (trajectory `{id}`, visit {visit}, dim {dim})")]
    SigmoidDomain {
        id: String,
        visit: usize,
        dim: usize,
        value: f64,
    },
    #[error("trajectory `{id}` has {got} distinct observations on dim {dim}, needs {needed}")]
    InsufficientObservations {
        id: String,
        dim: usize,
        needed: usize,
        got: usize,
    },
    #[error("polynomial fit for `{context}` is rank deficient ({got} distinct abscissae for degree {degree})")]
    RankDeficient {
        context: String,
        degree: usize,
        got: usize,
    },
    #[error("polynomial fit for `{context}` is ill-conditioned (cond ~ {cond:.3e} > 1e12)")]
    IllConditioned { context: String, cond: f64 },
    #[error("cannot take roots of the zero polynomial")]
    ZeroPolynomial,
    #[error("polynomial is constant after degree reduction; no roots exist")]
    ConstantPolynomial,
    #[error("k-means asked for {k} clusters from {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("root iteration failed to converge (residual {residual:.3e})")]
    RootsDiverged { residual: f64 },
    #[error("canonical dim {dim} out of range for dataset with {dims} dims")]
    BadCanonicalDim { dim: usize, dims: usize },
}

/// Per-subtype polynomial coefficients, `K x D x (P+1)` ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeParams {
    pub theta: Vec<Vec<Vec<f64>>>,
    pub link: LinkSpec,
}

/// Output of [`identify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentResult {
    pub theta_hat: SubtypeParams,
    /// Recovered per-series delay, >= 0, with a zero minimum per cluster.
    pub deltas: Vec<f64>,
    /// Cluster label per series (valid up to permutation).
    pub labels: Vec<usize>,
    /// Smallest-real-part root location per series; `None` when the fitted
    /// canonical polynomial degenerated to a constant.
    pub xi: Vec<Option<f64>>,
    /// Per-cluster reference root location (largest xi among members).
    pub eta: Vec<Option<f64>>,
    /// Non-fatal assumption violations, one message each.
    pub diagnostics: Vec<String>,
}

/// Elementwise inverse of the link; missing cells stay missing. The sigmoid
/// inverse requires every present value strictly inside (0, 1).
pub fn inverse_link(dataset: &Dataset, link: LinkFamily) -> Result<Dataset, IdentError> {
    if link == LinkFamily::Identity {
        return Ok(dataset.clone());
    }
    let mut out = dataset.clone();
    for traj in &mut out.trajectories {
        for (visit, row) in traj.values.iter_mut().enumerate() {
            for (dim, cell) in row.iter_mut().enumerate() {
                if let Some(v) = *cell {
                    if v <= 0.0 || v >= 1.0 {
                        return Err(IdentError::SigmoidDomain {
                            id: traj.id.clone(),
                            visit,
                            dim,
                            value: v,
                        });
                    }
                    *cell = Some((v / (1.0 - v)).ln());
                }
            }
        }
    }
    Ok(out)
}

/// Least-squares polynomial fit via Householder QR on the Vandermonde
/// system; exact interpolation when the point count equals degree+1.
pub fn polyfit(points: &[(f64, f64)], degree: usize, context: &str) -> Result<Vec<f64>, IdentError> {
    let n = degree + 1;
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    if xs.len() < n {
        return Err(IdentError::RankDeficient {
            context: context.to_string(),
            degree,
            got: xs.len(),
        });
    }
    let m = points.len();
    // Row-major Vandermonde, ascending powers.
    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    for (i, &(x, y)) in points.iter().enumerate() {
        let mut pw = 1.0;
        for j in 0..n {
            a[i * n + j] = pw;
            pw *= x;
        }
        b[i] = y;
    }
    // Householder QR applied in place; b accumulates Q^T b.
    for j in 0..n {
        let mut norm = 0.0;
        for i in j..m {
            norm += a[i * n + j] * a[i * n + j];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return Err(IdentError::RankDeficient {
                context: context.to_string(),
                degree,
                got: j,
            });
        }
        let alpha = if a[j * n + j] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - j];
        v[0] = a[j * n + j] - alpha;
        for i in j + 1..m {
            v[i - j] = a[i * n + j];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        a[j * n + j] = alpha;
        for i in j + 1..m {
            a[i * n + j] = 0.0;
        }
        if vnorm2 > 0.0 {
            for col in j + 1..n {
                let dot: f64 = (j..m).map(|i| v[i - j] * a[i * n + col]).sum();
                let c = 2.0 * dot / vnorm2;
                for i in j..m {
                    a[i * n + col] -= c * v[i - j];
                }
            }
            let dot: f64 = (j..m).map(|i| v[i - j] * b[i]).sum();
            let c = 2.0 * dot / vnorm2;
            for i in j..m {
                b[i] -= c * v[i - j];
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|j| a[j * n + j].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if dmin == 0.0 {
        return Err(IdentError::RankDeficient {
            context: context.to_string(),
            degree,
            got: xs.len(),
        });
    }
    let cond = dmax / dmin;
    if cond > 1e12 {
        return Err(IdentError::IllConditioned {
            context: context.to_string(),
            cond,
        });
    }
    // Back substitution on the upper-triangular system.
    let mut theta = vec![0.0; n];
    for j in (0..n).rev() {
        let mut acc = b[j];
        for col in j + 1..n {
            acc -= a[j * n + col] * theta[col];
        }
        theta[j] = acc / a[j * n + j];
    }
    Ok(theta)
}

/// All complex roots of a polynomial given ascending coefficients. Trailing
/// coefficients below `1e-12 * ||theta||` are treated as zero, reducing the
/// effective degree; a constant (or zero) polynomial is an error the caller
/// is expected to handle.
pub fn poly_roots(theta: &[f64]) -> Result<Vec<Complex64>, IdentError> {
    let norm: f64 = theta.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(IdentError::ZeroPolynomial);
    }
    let mut deg = theta.len() - 1;
    while deg > 0 && theta[deg].abs() < 1e-12 * norm {
        deg -= 1;
    }
    match deg {
        0 => Err(IdentError::ConstantPolynomial),
        1 => Ok(vec![Complex64::new(-theta[0] / theta[1], 0.0)]),
        2 => {
            let (c, b, a) = (theta[0], theta[1], theta[2]);
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                // Sign-matched form avoids cancellation between -b and the root.
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                let (r1, r2) = if q == 0.0 {
                    (0.0, 0.0)
                } else {
                    (q / a, c / q)
                };
                Ok(vec![Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)])
            } else {
                let re = -b / (2.0 * a);
                let im = (-disc).sqrt() / (2.0 * a);
                Ok(vec![Complex64::new(re, im), Complex64::new(re, -im)])
            }
        }
        _ => durand_kerner(&theta[..=deg]),
    }
}

/// Simultaneous root iteration on the monic-normalized polynomial.
fn durand_kerner(theta: &[f64]) -> Result<Vec<Complex64>, IdentError> {
    let deg = theta.len() - 1;
    let lead = theta[deg];
    let monic: Vec<f64> = theta.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in monic.iter().rev() {
            acc = acc * z + c;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|i| seed.powu(i as u32 + 1)).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        residual = roots.iter().map(|&r| eval(r).norm()).fold(0.0, f64::max);
        if residual < 1e-12 && moved < 1e-13 {
            return Ok(roots);
        }
    }
    if residual < 1e-10 {
        return Ok(roots);
    }
    Err(IdentError::RootsDiverged { residual })
}

/// Pick the root that defines `xi`: smallest real part, ties broken by
/// smaller imaginary magnitude, then smaller imaginary part.
pub fn smallest_root(roots: &[Complex64]) -> Complex64 {
    let mut best = roots[0];
    for &r in &roots[1..] {
        let key = (r.re, r.im.abs(), r.im);
        let bkey = (best.re, best.im.abs(), best.im);
        if key.0 < bkey.0
            || (key.0 == bkey.0 && (key.1 < bkey.1 || (key.1 == bkey.1 && key.2 < bkey.2)))
        {
            best = r;
        }
    }
    best
}

/// Refit with abscissae shifted by `-xi`, putting the selected root at 0.
pub fn canonical_refit(
    points: &[(f64, f64)],
    xi: f64,
    degree: usize,
    context: &str,
) -> Result<Vec<f64>, IdentError> {
    let shifted: Vec<(f64, f64)> = points.iter().map(|&(x, q)| (x - xi, q)).collect();
    polyfit(&shifted, degree, context)
}

/// k-means fit output.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

/// Lloyd's algorithm with k-means++ seeding, 10 restarts of at most 100
/// iterations, keeping the best inertia. Empty clusters are repaired by
/// promoting the point farthest from its center. Deterministic given seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansFit, IdentError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(IdentError::KTooLarge { k, n });
    }
    let mut best: Option<KmeansFit> = None;
    for restart in 0..10 {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, restart));
        let fit = lloyd_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> KmeansFit {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        // Assignment (ties to the lowest index).
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best_c = 0;
            let mut best_d = dist2(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }
        // Update.
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Repair: promote the point farthest from its own center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centers[labels[a]])
                            .total_cmp(&dist2(&points[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| dist2(p, &centers[l]))
        .sum();
    KmeansFit {
        labels,
        centers,
        inertia,
    }
}

/// Run the full identification pipeline on (noiseless) data.
///
/// `canonical_dim` is the biomarker used for delay recovery (0 by default
/// in the CLI). Flat canonical polynomials are flagged in `diagnostics`
/// and given delta = 0 rather than failing the run.
pub fn identify(
    dataset: &Dataset,
    link: LinkSpec,
    k: usize,
    canonical_dim: usize,
) -> Result<IdentResult, IdentError> {
    if canonical_dim >= dataset.dim {
        return Err(IdentError::BadCanonicalDim {
            dim: canonical_dim,
            dims: dataset.dim,
        });
    }
    let degree = link.degree;
    let q = inverse_link(dataset, link.family)?;
    let n = q.len();

    // Steps 2a-2b: per-series canonical fit and root location.
    let mut canon_points: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
    let mut xi: Vec<Option<f64>> = Vec::with_capacity(n);
    let mut diagnostics = Vec::new();
    for traj in &q.trajectories {
        let pts = observed_points(traj, canonical_dim);
        let distinct = count_distinct(&pts);
        if distinct < degree + 1 {
            return Err(IdentError::InsufficientObservations {
                id: traj.id.clone(),
                dim: canonical_dim,
                needed: degree + 1,
                got: distinct,
            });
        }
        let theta = polyfit(&pts, degree, &traj.id)?;
        match poly_roots(&theta) {
            Ok(roots) => xi.push(Some(smallest_root(&roots).re)),
            Err(IdentError::ConstantPolynomial) | Err(IdentError::ZeroPolynomial) => {
                diagnostics.push(format!(
                    "trajectory `{}`: constant canonical polynomial; alignment unidentifiable, delta set to 0",
                    traj.id
                ));
                xi.push(None);
            }
            Err(e) => return Err(e),
        }
        canon_points.push(pts);
    }

    // Step 2c: refit in canonical position.
    let mut theta_tilde: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (traj, (pts, x)) in q.trajectories.iter().zip(canon_points.iter().zip(&xi)) {
        theta_tilde.push(canonical_refit(pts, x.unwrap_or(0.0), degree, &traj.id)?);
    }

    // Step 2d: cluster de-biased coefficients. Points are sorted into a
    // canonical order first (and the seed comes from a content hash), so
    // the outcome depends only on the multiset of coefficients.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        theta_tilde[a]
            .iter()
            .zip(&theta_tilde[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted_points: Vec<Vec<f64>> = order.iter().map(|&i| theta_tilde[i].clone()).collect();
    let fit = kmeans(&sorted_points, k, content_seed(&sorted_points))?;
    let mut labels = vec![0usize; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = fit.labels[pos];
    }

    // Step 2e (orientation corrected, see module docs): the zero-delay
    // member has the largest root location in its cluster.
    let mut eta: Vec<Option<f64>> = vec![None; k];
    for i in 0..n {
        if let Some(x) = xi[i] {
            let slot = &mut eta[labels[i]];
            *slot = Some(slot.map_or(x, |e: f64| e.max(x)));
        }
    }
    let deltas: Vec<f64> = (0..n)
        .map(|i| match (xi[i], eta[labels[i]]) {
            (Some(x), Some(e)) => (e - x).max(0.0),
            _ => 0.0,
        })
        .collect();

    // Step 3: pooled per-(cluster, dim) refit at corrected stages.
    let mut theta = vec![vec![Vec::new(); dataset.dim]; k];
    for c in 0..k {
        for d in 0..dataset.dim {
            let mut pooled: Vec<(f64, f64)> = Vec::new();
            for (i, traj) in q.trajectories.iter().enumerate() {
                if labels[i] != c {
                    continue;
                }
                for (x, qv) in observed_points(traj, d) {
                    pooled.push((x + deltas[i], qv));
                }
            }
            theta[c][d] = polyfit(&pooled, degree, &format!("cluster {c} dim {d}"))?;
        }
    }

    Ok(IdentResult {
        theta_hat: SubtypeParams {
            theta,
            link,
        },
        deltas,
        labels,
        xi,
        eta,
        diagnostics,
    })
}

fn observed_points(traj: &Trajectory, dim: usize) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.values)
        .filter_map(|(&t, row)| row[dim].map(|v| (t, v)))
        .collect()
}

fn count_distinct(pts: &[(f64, f64)]) -> usize {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    xs.len()
}

/// Evaluate a fitted subtype's mean curve at a stage (through the link).
pub fn subtype_mean(params: &SubtypeParams, subtype: usize, dim: usize, stage: f64) -> f64 {
    params
        .link
        .family
        .apply(eval_poly(&params.theta[subtype][dim], stage))
}
