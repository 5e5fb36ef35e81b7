//! Exact-recovery properties of the noiseless identification pipeline on
//! randomly drawn quadratic instances.

use censalign_core::data::{eval_poly, Dataset, LinkSpec, Trajectory};
use censalign_core::ident::identify;
use censalign_core::metrics::match_permutation;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Instance {
    dataset: Dataset,
    theta: Vec<Vec<Vec<f64>>>,
    deltas: Vec<f64>,
    subtypes: Vec<usize>,
}

/// K=2 genuinely-quadratic instance: distinct rows with bounded-away
/// leading coefficients, M = 3 distinct visit times per series, one
/// zero-delay member per subtype.
fn random_instance(seed: u64, per_subtype: usize, extra_offset: [f64; 2]) -> Instance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draw_row = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        let mut lead: f64 = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            lead = -lead;
        }
        vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), lead]
    };
    let row0 = draw_row(&mut rng);
    let mut row1 = draw_row(&mut rng);
    while row0
        .iter()
        .zip(&row1)
        .all(|(a, b)| (a - b).abs() < 0.5)
    {
        row1 = draw_row(&mut rng);
    }
    let theta = vec![vec![row0], vec![row1]];
    let mut trajectories = Vec::new();
    let mut deltas = Vec::new();
    let mut subtypes = Vec::new();
    for s in 0..2 {
        for j in 0..per_subtype {
            // First member per subtype gets delta 0 (before any offset).
            let delta = if j == 0 {
                0.0
            } else {
                rng.gen_range(0.0..4.0)
            } + extra_offset[s];
            let mut times: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..8.0)).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            while times.windows(2).any(|w| w[1] - w[0] < 0.05) {
                times = (0..3).map(|_| rng.gen_range(0.0..8.0)).collect();
                times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            let values: Vec<Vec<Option<f64>>> = times
                .iter()
                .map(|&x| vec![Some(eval_poly(&theta[s][0], x + delta))])
                .collect();
            trajectories.push(Trajectory {
                id: format!("s{s}j{j}"),
                times,
                values,
                true_subtype: Some(s),
                true_delta: Some(delta),
            });
            deltas.push(delta);
            subtypes.push(s);
        }
    }
    Instance {
        dataset: Dataset {
            trajectories,
            dim: 1,
            link: LinkSpec::identity(),
            provenance: "identify-test".into(),
        },
        theta,
        deltas,
        subtypes,
    }
}

fn labels_match_up_to_permutation(truth: &[usize], got: &[usize]) -> bool {
    let direct = truth.iter().zip(got).all(|(a, b)| a == b);
    let flipped = truth.iter().zip(got).all(|(a, b)| *a == 1 - *b);
    direct || flipped
}

#[test]
fn exact_recovery_on_random_noiseless_quadratics() {
    for seed in 0..30 {
        let inst = random_instance(1000 + seed, 5, [0.0, 0.0]);
        let result = identify(&inst.dataset, LinkSpec::identity(), 2, 0).unwrap();
        assert!(
            labels_match_up_to_permutation(&inst.subtypes, &result.labels),
            "seed {seed}: labels {:?} vs {:?}",
            result.labels,
            inst.subtypes
        );
        for (i, (&truth, got)) in inst.deltas.iter().zip(&result.deltas).enumerate() {
            assert!(
                (truth - got).abs() < 1e-6,
                "seed {seed} series {i}: delta {got} vs {truth}"
            );
        }
        let (_, err) = match_permutation(&inst.theta, &result.theta_hat.theta, 2).unwrap();
        assert!(err < 1e-6, "seed {seed}: theta error {err}");
    }
}

#[test]
fn all_zero_delays_recovered_as_zero() {
    let mut inst = random_instance(7, 4, [0.0, 0.0]);
    for traj in &mut inst.dataset.trajectories {
        // Regenerate every series at delta 0.
        let s = traj.true_subtype.unwrap();
        let theta = &inst.theta[s][0];
        for (x, row) in traj.times.iter().zip(traj.values.iter_mut()) {
            row[0] = Some(eval_poly(theta, *x));
        }
        traj.true_delta = Some(0.0);
    }
    let result = identify(&inst.dataset, LinkSpec::identity(), 2, 0).unwrap();
    for d in &result.deltas {
        assert!(d.abs() < 1e-9, "expected zero delta, got {d}");
    }
}

#[test]
fn single_cluster_delays_relative_to_reference() {
    // K = 1: every series belongs to one subtype; delays recovered
    // relative to the cluster's zero-delay member.
    let inst = random_instance(11, 6, [0.0, 0.0]);
    let only: Vec<usize> = (0..6).collect(); // the subtype-0 block
    let ds = inst.dataset.subset(&only);
    let result = identify(&ds, LinkSpec::identity(), 1, 0).unwrap();
    assert!(result.labels.iter().all(|&l| l == 0));
    for (i, d) in result.deltas.iter().enumerate() {
        assert!(
            (d - inst.deltas[i]).abs() < 1e-6,
            "series {i}: {d} vs {}",
            inst.deltas[i]
        );
    }
    let min = result
        .deltas
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(min.abs() < 1e-9);
}

#[test]
fn without_reference_member_delays_shift_by_subtype_constant() {
    // Violating the zero-delay-member assumption by a per-subtype offset
    // translates recovered delays within that subtype by the same amount.
    let offset = [1.25, 0.0];
    let inst = random_instance(13, 5, offset);
    let result = identify(&inst.dataset, LinkSpec::identity(), 2, 0).unwrap();
    assert!(labels_match_up_to_permutation(&inst.subtypes, &result.labels));
    for (i, got) in result.deltas.iter().enumerate() {
        let expect = inst.deltas[i] - offset[inst.subtypes[i]];
        assert!(
            (got - expect).abs() < 1e-6,
            "series {i}: {got} vs {expect} (true {})",
            inst.deltas[i]
        );
    }
    // Minimum per recovered cluster is still exactly zero.
    for cluster in 0..2 {
        let min = result
            .deltas
            .iter()
            .zip(&result.labels)
            .filter(|(_, &l)| l == cluster)
            .map(|(d, _)| *d)
            .fold(f64::INFINITY, f64::min);
        assert!(min.abs() < 1e-9, "cluster {cluster} min {min}");
    }
}

#[test]
fn order_invariant_up_to_label_permutation() {
    let inst = random_instance(17, 5, [0.0, 0.0]);
    let result = identify(&inst.dataset, LinkSpec::identity(), 2, 0).unwrap();
    // Reverse the trajectory order and identify again.
    let mut reversed = inst.dataset.clone();
    reversed.trajectories.reverse();
    let result_rev = identify(&reversed, LinkSpec::identity(), 2, 0).unwrap();
    let n = inst.dataset.len();
    for i in 0..n {
        let j = n - 1 - i;
        assert!(
            (result.deltas[i] - result_rev.deltas[j]).abs() < 1e-12,
            "delta mismatch after reorder"
        );
    }
    // Same partition (co-membership) regardless of order.
    for i in 0..n {
        for j in i + 1..n {
            let same_a = result.labels[i] == result.labels[j];
            let same_b = result_rev.labels[n - 1 - i] == result_rev.labels[n - 1 - j];
            assert_eq!(same_a, same_b);
        }
    }
}

#[test]
fn flat_subtype_flagged_and_aligned_to_zero() {
    // One genuinely quadratic subtype, one constant subtype: the constant
    // one has no roots, gets delta 0 and a diagnostic, and clustering
    // still separates the two.
    let theta_quad = vec![5.0, -2.2, 0.25];
    let mut trajectories = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    for j in 0..5 {
        let delta = if j == 0 { 0.0 } else { rng.gen_range(0.0..3.0) };
        let times: Vec<f64> = vec![0.0, 1.0 + 0.1 * j as f64, 3.0 + 0.2 * j as f64];
        let values = times
            .iter()
            .map(|&x| vec![Some(eval_poly(&theta_quad, x + delta))])
            .collect();
        trajectories.push(Trajectory {
            id: format!("q{j}"),
            times,
            values,
            true_subtype: Some(0),
            true_delta: Some(delta),
        });
    }
    for j in 0..5 {
        let times: Vec<f64> = vec![0.5, 2.0 + 0.3 * j as f64, 4.0 + 0.1 * j as f64];
        let values = times.iter().map(|_| vec![Some(2.0)]).collect();
        trajectories.push(Trajectory {
            id: format!("f{j}"),
            times,
            values,
            true_subtype: Some(1),
            true_delta: Some(0.0),
        });
    }
    let ds = Dataset {
        trajectories,
        dim: 1,
        link: LinkSpec::identity(),
        provenance: "flat-subtype".into(),
    };
    let result = identify(&ds, LinkSpec::identity(), 2, 0).unwrap();
    assert_eq!(result.diagnostics.len(), 5);
    let truth: Vec<usize> = ds.trajectories.iter().map(|t| t.true_subtype.unwrap()).collect();
    assert!(labels_match_up_to_permutation(&truth, &result.labels));
    for (traj, d) in ds.trajectories.iter().zip(&result.deltas) {
        if traj.true_subtype == Some(1) {
            assert_eq!(*d, 0.0);
        } else {
            assert!((d - traj.true_delta.unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn insufficient_observations_is_a_named_error() {
    let ds = Dataset {
        trajectories: vec![Trajectory {
            id: "short".into(),
            times: vec![0.0, 1.0],
            values: vec![vec![Some(1.0)], vec![Some(2.0)]],
            true_subtype: None,
            true_delta: None,
        }],
        dim: 1,
        link: LinkSpec::identity(),
        provenance: String::new(),
    };
    let err = identify(&ds, LinkSpec::identity(), 1, 0).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("short") && msg.contains("3"), "got: {msg}");
}
