//! Canonical data model for censored multivariate time-series.
//!
//! A [`Trajectory`] holds one series: strictly increasing observation times
//! (already censored, so the first visit sits at 0), an `M x D` grid of
//! optional values (missing cells are first-class, never sentinel numbers),
//! and optional generator ground truth. A [`Dataset`] bundles trajectories
//! with the shared dimensionality and link family.
//!
//! Trajectories and datasets are immutable after construction; operations
//! that "modify" data return new values.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("dataset file is empty (missing header line)")]
    MissingHeader,
    #[error("dataset failed validation: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("alignment grid must have positive extent and step, got delta_max={delta_max}, step={step}")]
    BadGrid { delta_max: f64, step: f64 },
    #[error("alignment grid step {step} does not divide extent {delta_max}")]
    GridStepMismatch { delta_max: f64, step: f64 },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Link function family applied on top of the stage polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFamily {
    /// Logistic squashing to (0, 1); conventional polynomial degree 1.
    Sigmoid,
    /// No squashing; conventional polynomial degree 2.
    Identity,
}

impl LinkFamily {
    pub fn default_degree(self) -> usize {
        match self {
            LinkFamily::Sigmoid => 1,
            LinkFamily::Identity => 2,
        }
    }

    /// Apply the link to a raw polynomial value.
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            LinkFamily::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            LinkFamily::Identity => v,
        }
    }
}

/// The `(f, P)` pair: link family plus polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub family: LinkFamily,
    pub degree: usize,
}

impl LinkSpec {
    pub fn sigmoid() -> Self {
        LinkSpec {
            family: LinkFamily::Sigmoid,
            degree: 1,
        }
    }

    pub fn identity() -> Self {
        LinkSpec {
            family: LinkFamily::Identity,
            degree: 2,
        }
    }

    pub fn with_degree(family: LinkFamily, degree: usize) -> Self {
        LinkSpec { family, degree }
    }

    /// Number of polynomial coefficients per dimension.
    pub fn n_coeffs(&self) -> usize {
        self.degree + 1
    }

    /// Evaluate `f(kappa(x; theta))` for one dimension's coefficient row
    /// (ascending powers).
    #[inline]
    pub fn eval(&self, theta: &[f64], x: f64) -> f64 {
        self.family.apply(eval_poly(theta, x))
    }
}

/// Horner evaluation of a polynomial in ascending-coefficient order.
#[inline]
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// One observed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    /// Strictly increasing observation clock; first entry 0 after censoring.
    pub times: Vec<f64>,
    /// `times.len()` rows of width D; `None` marks a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_subtype: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_delta: Option<f64>,
}

impl Trajectory {
    pub fn n_visits(&self) -> usize {
        self.times.len()
    }

    /// Count of present cells across all visits and dimensions.
    pub fn n_present(&self) -> usize {
        self.values
            .iter()
            .map(|row| row.iter().filter(|v| v.is_some()).count())
            .sum()
    }

    /// Present `(time, value)` pairs for one dimension.
    pub fn observed_dim(&self, dim: usize) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.values)
            .filter_map(|(&t, row)| row[dim].map(|v| (t, v)))
            .collect()
    }
}

/// A concrete rule violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending trajectory id ("<dataset>" for dataset-level rules).
    pub id: String,
    pub rule: String,
}

impl Violation {
    fn new(id: &str, rule: impl Into<String>) -> Self {
        Violation {
            id: id.to_string(),
            rule: rule.into(),
        }
    }
}

/// A collection of trajectories with shared dimensionality and link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub dim: usize,
    pub link: LinkSpec,
    /// Free-text generation record (seed, generator name, parameters).
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Subset by trajectory index, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trajectories: indices
                .iter()
                .map(|&i| self.trajectories[i].clone())
                .collect(),
            dim: self.dim,
            link: self.link,
            provenance: self.provenance.clone(),
        }
    }
}

/// Check every structural invariant; returns an empty list iff all hold.
pub fn validate(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for traj in &dataset.trajectories {
        if !seen.insert(traj.id.as_str()) {
            out.push(Violation::new(&traj.id, "duplicate trajectory id"));
        }
        if traj.times.is_empty() {
            out.push(Violation::new(&traj.id, "empty time list"));
            continue;
        }
        if traj.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            out.push(Violation::new(&traj.id, "times must be finite and >= 0"));
        }
        if traj.times.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation::new(&traj.id, "non-increasing times"));
        }
        if traj.values.len() != traj.times.len() {
            out.push(Violation::new(&traj.id, "value rows do not match times"));
        }
        if traj.values.iter().any(|row| row.len() != dataset.dim) {
            out.push(Violation::new(&traj.id, "value row width differs from dataset dim"));
        }
        if traj
            .values
            .iter()
            .flatten()
            .any(|v| v.is_some_and(|x| !x.is_finite()))
        {
            out.push(Violation::new(&traj.id, "non-finite observed value"));
        }
        if traj.n_present() == 0 {
            out.push(Violation::new(&traj.id, "no observed values"));
        }
        if traj.true_delta.is_some_and(|d| !d.is_finite() || d < 0.0) {
            out.push(Violation::new(&traj.id, "true_delta must be finite and >= 0"));
        }
    }
    out
}

/// Reverse every trajectory's clock: times `(x_1..x_M)` become
/// `(0, ..., x_M - x_1)` and value rows are reversed. Involution.
pub fn reverse_time(dataset: &Dataset) -> Dataset {
    let trajectories = dataset
        .trajectories
        .iter()
        .map(|traj| {
            let last = *traj.times.last().expect("validated trajectory");
            let times: Vec<f64> = traj.times.iter().rev().map(|&t| last - t).collect();
            let values: Vec<_> = traj.values.iter().rev().cloned().collect();
            Trajectory {
                id: traj.id.clone(),
                times,
                values,
                true_subtype: traj.true_subtype,
                true_delta: traj.true_delta,
            }
        })
        .collect();
    Dataset {
        trajectories,
        dim: dataset.dim,
        link: dataset.link,
        provenance: dataset.provenance.clone(),
    }
}

/// Discretized alignment support `{0, eps, 2*eps, ..., delta_max}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentGrid {
    pub delta_max: f64,
    pub step: f64,
}

impl AlignmentGrid {
    pub fn new(delta_max: f64, step: f64) -> Result<Self, DataError> {
        if !(delta_max > 0.0) || !(step > 0.0) {
            return Err(DataError::BadGrid { delta_max, step });
        }
        let ratio = delta_max / step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(DataError::GridStepMismatch { delta_max, step });
        }
        Ok(AlignmentGrid { delta_max, step })
    }

    /// Number of grid points, endpoints included.
    pub fn len(&self) -> usize {
        (self.delta_max / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// i-th grid point; 0 and `delta_max` are hit exactly.
    pub fn point(&self, i: usize) -> f64 {
        let n = self.len() - 1;
        self.delta_max * (i as f64) / (n as f64)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

impl Default for AlignmentGrid {
    /// `delta_max = 10`, `step = 0.2` (51 points).
    fn default() -> Self {
        AlignmentGrid {
            delta_max: 10.0,
            step: 0.2,
        }
    }
}

/// Weight-penalty flavor applied during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegType {
    None,
    L1,
    L2,
}

/// Full training configuration for the variational model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubLignConfig {
    pub latent_dim: usize,
    pub rnn_hidden: usize,
    pub mlp_hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight on the KL term (beta).
    pub kl_weight: f64,
    pub reg_type: RegType,
    pub reg_strength: f64,
    pub grid: AlignmentGrid,
    pub k_clusters: usize,
    pub seed: u64,
}

impl SubLignConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: &str| Err(DataError::BadConfig(msg.to_string()));
        if self.latent_dim == 0 || self.rnn_hidden == 0 || self.mlp_hidden == 0 {
            return fail("network widths must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if !(self.kl_weight >= 0.0) {
            return fail("kl_weight must be >= 0");
        }
        if !(self.reg_strength >= 0.0) {
            return fail("reg_strength must be >= 0");
        }
        if self.k_clusters == 0 {
            return fail("k_clusters must be >= 1");
        }
        AlignmentGrid::new(self.grid.delta_max, self.grid.step)?;
        Ok(())
    }

    /// The tuned preset for the sigmoid family benchmarks: latent 5,
    /// RNN 100, MLP 50, lr 0.01, no regularization, KL weight 0.1.
    pub fn fast_preset(seed: u64) -> Self {
        SubLignConfig {
            latent_dim: 5,
            rnn_hidden: 100,
            mlp_hidden: 50,
            learning_rate: 0.01,
            epochs: 300,
            kl_weight: 0.1,
            reg_type: RegType::None,
            reg_strength: 0.0,
            grid: AlignmentGrid::default(),
            k_clusters: 2,
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// JSON Lines persistence.
//
// First line: `{"dim": D, "link": "sigmoid", "degree": 1, "provenance": ...}`.
// Then one trajectory object per line; missing cells are JSON null.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    link: LinkFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    provenance: String,
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut w: W) -> Result<(), DataError> {
    let header = Header {
        dim: dataset.dim,
        link: dataset.link.family,
        degree: Some(dataset.link.degree),
        provenance: dataset.provenance.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|source| DataError::Json { line: 1, source })?;
    w.write_all(b"\n")?;
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        serde_json::to_writer(&mut w, traj).map_err(|source| DataError::Json {
            line: i + 2,
            source,
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset, DataError> {
    let mut lines = r.lines();
    let header_line = lines.next().ok_or(DataError::MissingHeader)??;
    let header: Header =
        serde_json::from_str(&header_line).map_err(|source| DataError::Json { line: 1, source })?;
    let link = LinkSpec {
        family: header.link,
        degree: header.degree.unwrap_or(header.link.default_degree()),
    };
    let mut trajectories = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory = serde_json::from_str(&line).map_err(|source| DataError::Json {
            line: i + 2,
            source,
        })?;
        trajectories.push(traj);
    }
    Ok(Dataset {
        trajectories,
        dim: header.dim,
        link,
        provenance: header.provenance,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_jsonl(dataset, std::io::BufWriter::new(file))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset {
            trajectories: vec![
                Trajectory {
                    id: "a".into(),
                    times: vec![0.0, 2.0, 5.0],
                    values: vec![
                        vec![Some(0.1), None],
                        vec![Some(0.2), Some(0.3)],
                        vec![None, Some(0.4)],
                    ],
                    true_subtype: Some(0),
                    true_delta: Some(1.5),
                },
                Trajectory {
                    id: "b".into(),
                    times: vec![0.0],
                    values: vec![vec![Some(0.9), Some(0.8)]],
                    true_subtype: None,
                    true_delta: None,
                },
            ],
            dim: 2,
            link: LinkSpec::sigmoid(),
            provenance: "toy".into(),
        }
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(validate(&toy()).is_empty());
    }

    #[test]
    fn validate_flags_non_increasing_times() {
        let mut d = toy();
        d.trajectories[0].times = vec![1.0, 1.0, 5.0];
        let v = validate(&d);
        assert!(v.iter().any(|v| v.rule.contains("non-increasing")));
        assert_eq!(v[0].id, "a");
    }

    #[test]
    fn validate_flags_all_missing() {
        let mut d = toy();
        for row in &mut d.trajectories[1].values {
            for cell in row.iter_mut() {
                *cell = None;
            }
        }
        let v = validate(&d);
        assert!(v.iter().any(|v| v.rule == "no observed values" && v.id == "b"));
    }

    #[test]
    fn validate_flags_each_single_rule_corruption() {
        // Mutation battery: each corruption trips at least one violation.
        let corruptions: Vec<Box<dyn Fn(&mut Dataset)>> = vec![
            Box::new(|d| d.trajectories[0].times[1] = d.trajectories[0].times[0]),
            Box::new(|d| d.trajectories[0].times[0] = -1.0),
            Box::new(|d| d.trajectories[0].times[0] = f64::NAN),
            Box::new(|d| {
                d.trajectories[0].values.pop();
            }),
            Box::new(|d| {
                d.trajectories[0].values[0].push(Some(0.0));
            }),
            Box::new(|d| d.trajectories[0].values[1][0] = Some(f64::INFINITY)),
            Box::new(|d| {
                let id = d.trajectories[0].id.clone();
                d.trajectories[1].id = id;
            }),
            Box::new(|d| d.trajectories[0].true_delta = Some(-0.5)),
            Box::new(|d| {
                for row in &mut d.trajectories[0].values {
                    row.iter_mut().for_each(|c| *c = None);
                }
            }),
        ];
        for (i, corrupt) in corruptions.iter().enumerate() {
            let mut d = toy();
            corrupt(&mut d);
            assert!(!validate(&d).is_empty(), "corruption {i} slipped through");
        }
    }

    #[test]
    fn reverse_time_matches_definition() {
        let d = toy();
        let r = reverse_time(&d);
        assert_eq!(r.trajectories[0].times, vec![0.0, 3.0, 5.0]);
        assert_eq!(r.trajectories[0].values[0], vec![None, Some(0.4)]);
        assert_eq!(r.trajectories[0].values[2], vec![Some(0.1), None]);
        // Single-visit trajectory is a fixed point.
        assert_eq!(r.trajectories[1], d.trajectories[1]);
    }

    #[test]
    fn reverse_time_is_involution() {
        let d = toy();
        assert_eq!(reverse_time(&reverse_time(&d)), d);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = AlignmentGrid::default();
        assert_eq!(g.len(), 51);
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(50), 10.0);
        assert!(AlignmentGrid::new(10.0, 0.3).is_err());
        assert!(AlignmentGrid::new(10.0, -0.1).is_err());
        let g2 = AlignmentGrid::new(10.0, 0.1).unwrap();
        assert_eq!(g2.len(), 101);
    }

    #[test]
    fn jsonl_round_trip_identity() {
        let d = toy();
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        let back = read_jsonl(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, d);
        // Byte-determinism of the writer itself.
        let mut buf2 = Vec::new();
        write_jsonl(&d, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn poly_eval_ascending_order() {
        // 5 - 2.2 t + 0.25 t^2 at t = 2: 5 - 4.4 + 1.0 = 1.6
        let c = [5.0, -2.2, 0.25];
        assert!((eval_poly(&c, 2.0) - 1.6).abs() < 1e-12);
    }
}
