mod support;

use ats_core::learner::svm::{pairwise_sq_dist, solve_dual, train_gsvm_with, SmoParams};
use ats_core::learner::train_gsvm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{gaussian_kernel, oracle_decision, svm_dual_ipm};

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum::<f64>() + rng.random_range(-0.8..0.8);
                if s > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        if y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0) {
            return (rows, y);
        }
    }
}

#[test]
fn two_point_problem_matches_closed_form_and_oracle() {
    let rows = vec![vec![-1.0], vec![1.0]];
    let y = [-1.0, 1.0];
    let model = train_gsvm(&rows, &y, 10.0, 0.5).unwrap();
    let oracle = svm_dual_ipm(&gaussian_kernel(&rows, 0.5), &y, 10.0);
    assert_eq!(model.alphas.len(), 2);
    for (a, o) in model.alphas.iter().zip(&oracle.alpha) {
        assert!((a - o).abs() < 1e-6, "{a} vs {o}");
    }
    assert!(model.decision(&[0.0]).unwrap().abs() < 1e-6);
    assert!(model.decision(&[-2.0]).unwrap() < 0.0);
    assert!(oracle_decision(&rows, &y, &oracle, 0.5, &[-2.0]) < 0.0);
}

#[test]
fn smo_objective_matches_interior_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..30 {
        let n = rng.random_range(4..=12);
        let (rows, y) = random_set(&mut rng, n, 3);
        let c = [0.5, 2.0, 16.0][trial % 3];
        let gamma = [0.1, 0.5, 2.0][(trial / 3) % 3];
        let kernel: Vec<f64> = pairwise_sq_dist(&rows)
            .iter()
            .map(|d| (-gamma * d).exp())
            .collect();
        let smo = solve_dual(&kernel, &y, c, &SmoParams::default());
        let oracle = svm_dual_ipm(&gaussian_kernel(&rows, gamma), &y, c);
        let rel = (smo.objective - oracle.objective).abs() / oracle.objective.abs().max(1e-12);
        assert!(
            rel < 1e-4,
            "trial {trial}: smo {} oracle {}",
            smo.objective,
            oracle.objective
        );
        let eq: f64 = smo.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-6);
        assert!(smo.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
    }
}

#[test]
fn free_support_vectors_sit_on_the_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (rows, y) = random_set(&mut rng, 40, 2);
    let model = train_gsvm(&rows, &y, 4.0, 0.5).unwrap();
    for ((sv, &a), &label) in model
        .support_vectors
        .iter()
        .zip(&model.alphas)
        .zip(&model.sv_labels)
    {
        if a < model.c * (1.0 - 1e-9) {
            let f = model.decision_prepared(sv);
            assert_eq!(f.signum(), label, "free SV on the wrong side");
            assert!((f.abs() - 1.0).abs() < 0.05, "|f| = {}", f.abs());
        }
    }
}

/// With every row duplicated, the dual is the original one with `2C`, so
/// the decision function must match both SMO and the oracle run at `2C`.
#[test]
fn duplicated_rows_equal_doubled_box() {
    let tight = SmoParams {
        tol: 1e-7,
        ..SmoParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..10 {
        let n = rng.random_range(4..=6);
        let (rows, y) = random_set(&mut rng, n, 2);
        let (c, gamma) = (1.0, 0.5);
        let mut dup_rows = rows.clone();
        dup_rows.extend(rows.iter().cloned());
        let mut dup_y = y.clone();
        dup_y.extend(y.iter().copied());

        let dup = train_gsvm_with(&dup_rows, &dup_y, c, gamma, &tight).unwrap();
        let doubled = train_gsvm_with(&rows, &y, 2.0 * c, gamma, &tight).unwrap();
        let oracle = svm_dual_ipm(&gaussian_kernel(&rows, gamma), &y, 2.0 * c);
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
            let f_dup = dup.decision_prepared(&x);
            let f_doubled = doubled.decision_prepared(&x);
            let f_oracle = oracle_decision(&rows, &y, &oracle, gamma, &x);
            assert!(
                (f_dup - f_doubled).abs() < 1e-4,
                "trial {trial}: {f_dup} vs {f_doubled}"
            );
            assert!(
                (f_dup - f_oracle).abs() < 1e-4,
                "trial {trial}: {f_dup} vs oracle {f_oracle}"
            );
        }
    }
}
