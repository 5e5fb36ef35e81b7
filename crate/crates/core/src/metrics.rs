//! Evaluation metrics: adjusted Rand index, the discordant-pair swaps
//! metric (quadratic and mergesort paths), Pearson correlation, brute-force
//! permutation matching for recovered subtype tensors, and the paired
//! t-test with Benjamini-Hochberg adjustment across families.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero variance makes the statistic undefined")]
    ZeroVariance,
    #[error("permutation matching supports K <= {max}, got {k}")]
    KTooLarge { k: usize, max: usize },
    #[error("tensor row count {got} differs from K = {k}")]
    BadTensor { k: usize, got: usize },
}

/// Scores for one (trial, method) cell; alignment metrics are absent for
/// methods that do not produce delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TrialScores {
    pub ari: Option<f64>,
    pub swaps: Option<f64>,
    pub pearson: Option<f64>,
}

fn check_paired(a_len: usize, b_len: usize, min: usize) -> Result<(), MetricError> {
    if a_len != b_len {
        return Err(MetricError::LengthMismatch { a: a_len, b: b_len });
    }
    if a_len < min {
        return Err(MetricError::TooShort {
            needed: min,
            got: a_len,
        });
    }
    Ok(())
}

/// Adjusted Rand index from the pair-counting contingency formula.
/// Invariant to relabeling of either side.
pub fn adjusted_rand_index(truth: &[usize], pred: &[usize]) -> Result<f64, MetricError> {
    check_paired(truth.len(), pred.len(), 2)?;
    let n = truth.len();
    let k_t = truth.iter().max().unwrap() + 1;
    let k_p = pred.iter().max().unwrap() + 1;
    let mut table = vec![0u64; k_t * k_p];
    let mut rows = vec![0u64; k_t];
    let mut cols = vec![0u64; k_p];
    for (&t, &p) in truth.iter().zip(pred) {
        table[t * k_p + p] += 1;
        rows[t] += 1;
        cols[p] += 1;
    }
    let choose2 = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let row_sum: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let col_sum: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    let expected = row_sum * col_sum / total;
    let max = 0.5 * (row_sum + col_sum);
    if (max - expected).abs() < 1e-12 {
        // Both partitions trivial; they either agree exactly or not at all.
        return Ok(if same_partition(truth, pred) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    // Same partition iff co-membership matches for all pairs.
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                return false;
            }
        }
    }
    true
}

/// Fraction of discordant pairs between two sequences: pairs ordered one
/// way by `a` and the other way by `b`. Ties on either side contribute 0.
/// This is the O(N^2) reference path.
pub fn swaps_metric_quadratic(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_paired(a.len(), b.len(), 2)?;
    let n = a.len();
    let mut discordant = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] - a[j]) * (b[i] - b[j]) < 0.0 {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (n as f64 * (n as f64 - 1.0) / 2.0))
}

/// Same statistic in O(N log N): sort by `(a, b)` ascending, then count
/// strict inversions of the `b` sequence by mergesort. Within an `a`-tie
/// block `b` is ascending so tied pairs contribute nothing, and `b`-ties
/// are not strict inversions.
pub fn swaps_metric(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_paired(a.len(), b.len(), 2)?;
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let mut seq: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let inv = merge_count(&mut seq, &mut buf);
    Ok(inv as f64 / (n as f64 * (n as f64 - 1.0) / 2.0))
}

fn merge_count(seq: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = seq.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut seq[..mid], &mut buf[..mid])
        + merge_count(&mut seq[mid..], &mut buf[mid..]);
    let (left, right) = seq.split_at(mid);
    let (mut i, mut j) = (0, 0);
    for slot in buf[..n].iter_mut() {
        if i < left.len() && (j >= right.len() || left[i] <= right[j]) {
            *slot = left[i];
            i += 1;
        } else {
            // right[j] < left[i]: it jumps ahead of every remaining left
            // element, each a strict inversion.
            count += (left.len() - i) as u64;
            *slot = right[j];
            j += 1;
        }
    }
    seq.copy_from_slice(&buf[..n]);
    count
}

/// Sample Pearson correlation; errors when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_paired(a.len(), b.len(), 2)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Best row permutation aligning a recovered `K x D x (P+1)` tensor with
/// the reference, minimizing the worst row-wise Frobenius distance.
/// Brute force over K! (K <= 6).
pub fn match_permutation(
    theta_true: &[Vec<Vec<f64>>],
    theta_hat: &[Vec<Vec<f64>>],
    k: usize,
) -> Result<(Vec<usize>, f64), MetricError> {
    const MAX_K: usize = 6;
    if k > MAX_K {
        return Err(MetricError::KTooLarge { k, max: MAX_K });
    }
    if theta_true.len() != k || theta_hat.len() != k {
        return Err(MetricError::BadTensor {
            k,
            got: theta_true.len().max(theta_hat.len()),
        });
    }
    let row_dist = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
        let mut acc = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                acc += (x - y) * (x - y);
            }
        }
        acc.sqrt()
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best_perm = perm.clone();
    let mut best_err = f64::INFINITY;
    permute_visit(&mut perm, 0, &mut |p: &[usize]| {
        let err = (0..k)
            .map(|i| row_dist(&theta_true[i], &theta_hat[p[i]]))
            .fold(0.0f64, f64::max);
        if err < best_err {
            best_err = err;
            best_perm = p.to_vec();
        }
    });
    Ok((best_perm, best_err))
}

fn permute_visit(perm: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
    if at == perm.len() {
        f(perm);
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        permute_visit(perm, at + 1, f);
        perm.swap(at, i);
    }
}

/// Paired t-test outcome. `degenerate` marks zero-variance differences,
/// where the t statistic is not well defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtestResult {
    pub t: f64,
    pub p: f64,
    pub degenerate: bool,
}

/// Two-sided paired t-test on per-trial differences.
pub fn paired_ttest(scores_a: &[f64], scores_b: &[f64]) -> Result<TtestResult, MetricError> {
    check_paired(scores_a.len(), scores_b.len(), 2)?;
    let n = scores_a.len();
    let d: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TtestResult {
                t: 0.0,
                p: 1.0,
                degenerate: true,
            }
        } else {
            TtestResult {
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TtestResult {
        t,
        p: p.clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Benjamini-Hochberg step-up adjustment; returns adjusted p-values in the
/// input order.
pub fn benjamini_hochberg(pvals: &[f64]) -> Vec<f64> {
    let m = pvals.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = pvals[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

/// Mean and sample (N-1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
