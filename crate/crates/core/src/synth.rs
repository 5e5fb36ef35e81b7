//! Synthetic benchmark generators plus missingness injection and window
//! censoring.
//!
//! All generators share one sampling protocol per series: draw a subtype
//! `s ~ Bern(p)`, draw visit stages `t_m ~ Unif(0, T+)` i.i.d. and sort
//! them (collisions are resampled), draw values `y ~ N(f_s(t), noise_var)`
//! per dimension, then censor the clock so the first visit sits at 0. The
//! removed offset `zeta = min t_m` is stored as `true_delta`.

use crate::data::{Dataset, LinkSpec, Trajectory};
use crate::util::mix_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("noise_var must be >= 0, got {0}")]
    BadNoise(f64),
    #[error("t_max must be > 0, got {0}")]
    BadTmax(f64),
    #[error("n_visits must be >= 1")]
    BadVisits,
    #[error("n_patients must be >= 1")]
    BadPatients,
    #[error("subtype_prob must be in [0, 1], got {0}")]
    BadSubtypeProb(f64),
    #[error("unknown quadratic case {0}; expected 1..=6")]
    UnknownCase(usize),
    #[error("missingness rate must be in [0, 1], got {0}")]
    BadRate(f64),
    #[error("censor window must be > 0, got {0}")]
    BadWindow(f64),
}

/// Which benchmark family to synthesize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg")]
pub enum GeneratorFamily {
    /// Two sigmoid subtypes over three dimensions.
    #[serde(rename = "sigmoid")]
    Sigmoid3D,
    /// One of the six one-dimensional quadratic pairs (1-based index).
    #[serde(rename = "quadratic")]
    QuadraticCase(usize),
    /// Two subtypes of natural cubic splines through 5 random control
    /// points per dimension; `true` sorts ordinates ascending.
    #[serde(rename = "spline")]
    Spline { monotone: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: GeneratorFamily,
    pub n_patients: usize,
    pub n_visits: usize,
    pub noise_var: f64,
    pub t_max: f64,
    pub subtype_prob: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.noise_var >= 0.0) {
            return Err(SynthError::BadNoise(self.noise_var));
        }
        if !(self.t_max > 0.0) {
            return Err(SynthError::BadTmax(self.t_max));
        }
        if self.n_visits < 1 {
            return Err(SynthError::BadVisits);
        }
        if self.n_patients < 1 {
            return Err(SynthError::BadPatients);
        }
        if !(0.0..=1.0).contains(&self.subtype_prob) {
            return Err(SynthError::BadSubtypeProb(self.subtype_prob));
        }
        if let GeneratorFamily::QuadraticCase(c) = self.family {
            if !(1..=6).contains(&c) {
                return Err(SynthError::UnknownCase(c));
            }
        }
        Ok(())
    }
}

/// Sigmoid benchmark subtype functions: per-dimension inner-polynomial
/// coefficients (ascending powers) under the logistic link.
pub const SIGMOID_SUBTYPES: [[[f64; 2]; 3]; 2] = [
    [[-4.0, 1.0], [-1.0, 1.0], [-8.0, 8.0]],
    [[-1.0, 1.0], [-8.0, 8.0], [-25.0, 3.5]],
];

/// The six quadratic subtype pairs, ascending coefficients `(c0, c1, c2)`.
pub const QUADRATIC_CASES: [[[f64; 3]; 2]; 6] = [
    [[5.0, -2.2, 0.25], [2.0, 0.0, 0.0]],
    [[5.0, -2.2, 0.25], [-2.0, 0.0, 0.0]],
    [[5.0, -2.2, 0.25], [0.0, 0.4, 0.0]],
    [[5.0, -2.2, 0.25], [-5.0, 0.4, 0.0]],
    [[3.0, -2.2, 0.25], [-5.0, 2.2, -0.25]],
    [[7.0, -2.2, 0.25], [-5.0, 2.2, -0.25]],
];

/// Generate whichever family the spec names.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    match spec.family {
        GeneratorFamily::Sigmoid3D => gen_sigmoid(spec),
        GeneratorFamily::QuadraticCase(_) => gen_quadratic(spec),
        GeneratorFamily::Spline { .. } => gen_spline(spec),
    }
}

/// K=2, D=3 sigmoid benchmark.
pub fn gen_sigmoid(spec: &GeneratorSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let fs = |s: usize, d: usize, t: f64| {
        let c = &SIGMOID_SUBTYPES[s][d];
        sigmoid(c[0] + c[1] * t)
    };
    sample_dataset(spec, 3, fs, LinkSpec::sigmoid(), "sigmoid")
}

/// K=2, D=1 quadratic benchmark, case index from the spec.
pub fn gen_quadratic(spec: &GeneratorSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let case = match spec.family {
        GeneratorFamily::QuadraticCase(c) => c,
        _ => return Err(SynthError::UnknownCase(0)),
    };
    let coeffs = QUADRATIC_CASES[case - 1];
    let fs = move |s: usize, _d: usize, t: f64| {
        let c = &coeffs[s];
        c[0] + t * (c[1] + t * c[2])
    };
    sample_dataset(
        spec,
        1,
        fs,
        LinkSpec::identity(),
        &format!("quadratic-case-{case}"),
    )
}

/// K=2, D=3 spline benchmark: three independent natural cubic splines per
/// subtype, each through 5 control points with equally spaced abscissae on
/// `[0, T+]` and Unif(0,1) ordinates (sorted ascending when monotone).
pub fn gen_spline(spec: &GeneratorSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let monotone = match spec.family {
        GeneratorFamily::Spline { monotone } => monotone,
        _ => false,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(spec.seed, 0x73706c6e));
    let xs: Vec<f64> = (0..5).map(|i| spec.t_max * i as f64 / 4.0).collect();
    let mut splines = Vec::new();
    for _subtype in 0..2 {
        let mut per_dim = Vec::new();
        for _d in 0..3 {
            let mut ys: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            if monotone {
                ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            per_dim.push(CubicSpline::natural(xs.clone(), ys));
        }
        splines.push(per_dim);
    }
    let fs = move |s: usize, d: usize, t: f64| splines[s][d].eval(t);
    let link = if monotone {
        LinkSpec::sigmoid()
    } else {
        LinkSpec::identity()
    };
    let label = if monotone { "spline-incr" } else { "spline-any" };
    sample_dataset(spec, 3, fs, link, label)
}

fn sample_dataset(
    spec: &GeneratorSpec,
    dim: usize,
    f: impl Fn(usize, usize, f64) -> f64,
    link: LinkSpec,
    label: &str,
) -> Result<Dataset, SynthError> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let sigma = spec.noise_var.sqrt();
    let noise = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).expect("validated sigma"))
    } else {
        None
    };
    let mut trajectories = Vec::with_capacity(spec.n_patients);
    for i in 0..spec.n_patients {
        let s = usize::from(rng.gen_bool(spec.subtype_prob));
        let stages = sample_sorted_times(&mut rng, spec.n_visits, spec.t_max);
        let zeta = stages[0];
        let times: Vec<f64> = stages.iter().map(|t| t - zeta).collect();
        let values: Vec<Vec<Option<f64>>> = stages
            .iter()
            .map(|&t| {
                (0..dim)
                    .map(|d| {
                        let mean = f(s, d, t);
                        let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                        Some(mean + eps)
                    })
                    .collect()
            })
            .collect();
        trajectories.push(Trajectory {
            id: format!("p{i:05}"),
            times,
            values,
            true_subtype: Some(s),
            true_delta: Some(zeta),
        });
    }
    Ok(Dataset {
        trajectories,
        dim,
        link,
        provenance: format!(
            "generator={label} n={} m={} noise_var={} tmax={} subtype_prob={} seed={}",
            spec.n_patients, spec.n_visits, spec.noise_var, spec.t_max, spec.subtype_prob, spec.seed
        ),
    })
}

/// Uniform stage draws, sorted ascending; exact float collisions (possible,
/// if vanishingly rare) are resampled so strict ordering holds.
fn sample_sorted_times(rng: &mut ChaCha20Rng, m: usize, t_max: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..t_max)).collect();
    loop {
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let dup = t.windows(2).position(|w| w[0] == w[1]);
        match dup {
            None => return t,
            Some(i) => t[i + 1] = rng.gen_range(0.0..t_max),
        }
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Independently blank each present cell with the given probability; series
/// left with no present cells are dropped (count recorded in provenance).
pub fn apply_missingness(dataset: &Dataset, rate: f64, seed: u64) -> Result<Dataset, SynthError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(SynthError::BadRate(rate));
    }
    if rate == 0.0 {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x6d697373));
    let mut dropped = 0usize;
    let mut trajectories = Vec::with_capacity(dataset.len());
    for traj in &dataset.trajectories {
        let mut t = traj.clone();
        for row in &mut t.values {
            for cell in row.iter_mut() {
                if cell.is_some() && rng.gen_bool(rate) {
                    *cell = None;
                }
            }
        }
        if t.n_present() == 0 {
            dropped += 1;
        } else {
            trajectories.push(t);
        }
    }
    Ok(Dataset {
        trajectories,
        dim: dataset.dim,
        link: dataset.link,
        provenance: format!(
            "{}; missingness rate={rate} seed={seed} dropped={dropped}",
            dataset.provenance
        ),
    })
}

/// Which end of the observation window to cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CensorCut {
    /// Remove visits earlier than `w`, then re-zero the clock.
    FrontYears(f64),
    /// Remove visits later than `max(time) - w`.
    BackYears(f64),
}

/// Per-trajectory record of what a censor cut did; the front cut's re-zero
/// shift is what separates "delta grew" from "delta unchanged" in probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensorShift {
    pub id: String,
    pub shift: f64,
    pub dropped_visits: usize,
}

/// Apply a window cut. Emptied trajectories are dropped (their shift record
/// remains, with all visits counted as dropped). For front cuts, any stored
/// `true_delta` is advanced by the re-zero shift so ground truth stays
/// consistent with the new clock.
pub fn censor_window(
    dataset: &Dataset,
    cut: CensorCut,
) -> Result<(Dataset, Vec<CensorShift>), SynthError> {
    let w = match cut {
        CensorCut::FrontYears(w) | CensorCut::BackYears(w) => w,
    };
    if !(w > 0.0) {
        return Err(SynthError::BadWindow(w));
    }
    let mut shifts = Vec::with_capacity(dataset.len());
    let mut trajectories = Vec::with_capacity(dataset.len());
    for traj in &dataset.trajectories {
        let keep: Vec<usize> = match cut {
            CensorCut::FrontYears(w) => (0..traj.times.len())
                .filter(|&i| traj.times[i] >= w)
                .collect(),
            CensorCut::BackYears(w) => {
                let cutoff = traj.times.last().unwrap() - w;
                (0..traj.times.len())
                    .filter(|&i| traj.times[i] <= cutoff)
                    .collect()
            }
        };
        let dropped_visits = traj.times.len() - keep.len();
        if keep.is_empty() {
            shifts.push(CensorShift {
                id: traj.id.clone(),
                shift: 0.0,
                dropped_visits,
            });
            continue;
        }
        let shift = match cut {
            CensorCut::FrontYears(_) => traj.times[keep[0]],
            CensorCut::BackYears(_) => 0.0,
        };
        let times: Vec<f64> = keep.iter().map(|&i| traj.times[i] - shift).collect();
        let values: Vec<_> = keep.iter().map(|&i| traj.values[i].clone()).collect();
        shifts.push(CensorShift {
            id: traj.id.clone(),
            shift,
            dropped_visits,
        });
        let t = Trajectory {
            id: traj.id.clone(),
            times,
            values,
            true_subtype: traj.true_subtype,
            true_delta: traj.true_delta.map(|d| d + shift),
        };
        if t.n_present() == 0 {
            continue;
        }
        trajectories.push(t);
    }
    let label = match cut {
        CensorCut::FrontYears(w) => format!("front={w}"),
        CensorCut::BackYears(w) => format!("back={w}"),
    };
    Ok((
        Dataset {
            trajectories,
            dim: dataset.dim,
            link: dataset.link,
            provenance: format!("{}; censor {label}", dataset.provenance),
        },
        shifts,
    ))
}

/// Natural cubic spline through given knots (second derivative zero at the
/// ends), solved with the Thomas tridiagonal algorithm.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 3, "spline needs at least 3 knots");
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        // Interior system: sub/diag/sup and rhs for M_1..M_{n-2}.
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut sub = vec![0.0; m];
        let mut sup = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let k = i + 1;
            sub[i] = h[k - 1] / 6.0;
            diag[i] = (h[k - 1] + h[k]) / 3.0;
            sup[i] = h[k] / 6.0;
            rhs[i] = (ys[k + 1] - ys[k]) / h[k] - (ys[k] - ys[k - 1]) / h[k - 1];
        }
        // Thomas forward elimination, back substitution.
        for i in 1..m {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        if m > 0 {
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (1..m).rev() {
                second[i] = (rhs[i - 1] - sup[i - 1] * second[i]) / diag[i - 1];
            }
        }
        CubicSpline { xs, ys, second }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = if x <= self.xs[0] {
            0
        } else if x >= self.xs[n - 1] {
            n - 2
        } else {
            self.xs.partition_point(|&v| v <= x) - 1
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate;

    fn sigmoid_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            family: GeneratorFamily::Sigmoid3D,
            n_patients: 50,
            n_visits: 4,
            noise_var: 0.25,
            t_max: 10.0,
            subtype_prob: 0.5,
            seed,
        }
    }

    #[test]
    fn sigmoid_noiseless_matches_generating_functions() {
        // Subtype-1 (index 0) at stage t = 4: dims sigma(0), sigma(3), sigma(24).
        let c = &SIGMOID_SUBTYPES[0];
        let at = |d: usize, t: f64| sigmoid(c[d][0] + c[d][1] * t);
        assert!((at(0, 4.0) - 0.5).abs() < 1e-15);
        assert!((at(1, 4.0) - 0.9525741268224334).abs() < 1e-12);
        assert!(at(2, 4.0) > 1.0 - 1e-10);

        let mut spec = sigmoid_spec(3);
        spec.noise_var = 0.0;
        let ds = gen_sigmoid(&spec).unwrap();
        for traj in &ds.trajectories {
            let s = traj.true_subtype.unwrap();
            let zeta = traj.true_delta.unwrap();
            for (x, row) in traj.times.iter().zip(&traj.values) {
                for (d, cell) in row.iter().enumerate() {
                    let t = x + zeta;
                    let expect = sigmoid(SIGMOID_SUBTYPES[s][d][0] + SIGMOID_SUBTYPES[s][d][1] * t);
                    assert!((cell.unwrap() - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn generated_times_start_at_zero() {
        let ds = gen_sigmoid(&sigmoid_spec(11)).unwrap();
        for traj in &ds.trajectories {
            assert_eq!(traj.times[0], 0.0);
            assert!(traj.true_delta.unwrap() >= 0.0);
        }
        assert!(validate(&ds).is_empty());
    }

    #[test]
    fn generators_deterministic_per_seed() {
        let a = gen_sigmoid(&sigmoid_spec(7)).unwrap();
        let b = gen_sigmoid(&sigmoid_spec(7)).unwrap();
        assert_eq!(a, b);
        let c = gen_sigmoid(&sigmoid_spec(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn quadratic_case_values() {
        let mk = |case| GeneratorSpec {
            family: GeneratorFamily::QuadraticCase(case),
            n_patients: 10,
            n_visits: 4,
            noise_var: 0.0,
            t_max: 10.0,
            subtype_prob: 0.5,
            seed: 5,
        };
        // Case 1 subtype-1 at t=0 -> 5; subtype-2 anywhere -> 2.
        let c = QUADRATIC_CASES[0];
        assert_eq!(c[0][0], 5.0);
        assert_eq!(c[1], [2.0, 0.0, 0.0]);
        // Case 5 subtype-2 at t=0 -> -5.
        assert_eq!(QUADRATIC_CASES[4][1][0], -5.0);
        let ds = gen_quadratic(&mk(1)).unwrap();
        assert_eq!(ds.dim, 1);
        for traj in &ds.trajectories {
            if traj.true_subtype == Some(1) {
                for row in &traj.values {
                    assert!((row[0].unwrap() - 2.0).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(
            gen_quadratic(&mk(7)),
            Err(SynthError::UnknownCase(7))
        ));
    }

    #[test]
    fn spline_interpolates_control_points() {
        let xs = vec![0.0, 2.5, 5.0, 7.5, 10.0];
        let ys = vec![0.1, 0.4, 0.2, 0.9, 0.95];
        let sp = CubicSpline::natural(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((sp.eval(*x) - y).abs() < 1e-12, "knot ({x}, {y})");
        }
        // Second derivative boundary conditions: natural spline is linear
        // near the ends, so a three-point second difference is ~0.
        let dd = |x: f64| (sp.eval(x + 1e-4) - 2.0 * sp.eval(x) + sp.eval(x - 1e-4)) / 1e-8;
        assert!(dd(1e-3).abs() < 1e-2);
        assert!(dd(10.0 - 1e-3).abs() < 1e-2);
    }

    #[test]
    fn spline_dataset_monotone_controls_and_determinism() {
        let spec = GeneratorSpec {
            family: GeneratorFamily::Spline { monotone: true },
            n_patients: 20,
            n_visits: 4,
            noise_var: 0.25,
            t_max: 10.0,
            subtype_prob: 0.5,
            seed: 21,
        };
        let a = gen_spline(&spec).unwrap();
        let b = gen_spline(&spec).unwrap();
        assert_eq!(a, b);
        assert!(validate(&a).is_empty());
        assert_eq!(a.dim, 3);
    }

    #[test]
    fn missingness_rates() {
        let ds = gen_sigmoid(&GeneratorSpec {
            n_patients: 1000,
            n_visits: 17,
            ..sigmoid_spec(13)
        })
        .unwrap();
        assert_eq!(apply_missingness(&ds, 0.0, 9).unwrap(), ds);
        let gone = apply_missingness(&ds, 1.0, 9).unwrap();
        assert!(gone.trajectories.is_empty());
        let half = apply_missingness(&ds, 0.5, 9).unwrap();
        let total: usize = half.trajectories.iter().map(|t| t.n_visits() * 3).sum();
        let present: usize = half.trajectories.iter().map(|t| t.n_present()).sum();
        let frac_missing = 1.0 - present as f64 / total as f64;
        assert!(
            (frac_missing - 0.5).abs() < 0.02,
            "empirical missing fraction {frac_missing}"
        );
        assert!(apply_missingness(&ds, 1.5, 0).is_err());
    }

    #[test]
    fn censor_window_examples() {
        let base = Dataset {
            trajectories: vec![Trajectory {
                id: "t".into(),
                times: vec![0.0, 0.5, 2.0, 3.0],
                values: vec![
                    vec![Some(1.0)],
                    vec![Some(2.0)],
                    vec![Some(3.0)],
                    vec![Some(4.0)],
                ],
                true_subtype: None,
                true_delta: Some(1.0),
            }],
            dim: 1,
            link: LinkSpec::identity(),
            provenance: "test".into(),
        };
        let (front, shifts) = censor_window(&base, CensorCut::FrontYears(1.0)).unwrap();
        assert_eq!(front.trajectories[0].times, vec![0.0, 1.0]);
        assert_eq!(front.trajectories[0].values[0], vec![Some(3.0)]);
        assert_eq!(shifts[0].shift, 2.0);
        assert_eq!(shifts[0].dropped_visits, 2);
        assert_eq!(front.trajectories[0].true_delta, Some(3.0));

        let (back, shifts) = censor_window(&base, CensorCut::BackYears(1.0)).unwrap();
        assert_eq!(back.trajectories[0].times, vec![0.0, 0.5, 2.0]);
        assert_eq!(shifts[0].shift, 0.0);
        assert_eq!(back.trajectories[0].true_delta, Some(1.0));

        // A second, vanishingly small back cut (below one ulp of the last
        // time) after the front cut changes nothing.
        let (double, _) = censor_window(&front, CensorCut::BackYears(1e-18)).unwrap();
        assert_eq!(double.trajectories, front.trajectories);
    }
}
