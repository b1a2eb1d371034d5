mod common;

use common::*;
use faer::Mat;
use nnrw::solver::{one_hot_targets, pinv_solve, ridge_solve, train, HiddenMatrix, TargetMatrix};
use nnrw::{DesignSpec, Distribution, ModelConfig, Normalization, SolveMethod, SolverSpec};
use rand::Rng;

fn hidden(a: &Dense) -> HiddenMatrix {
    HiddenMatrix { values: to_mat(a) }
}

fn targets(a: &Dense) -> TargetMatrix {
    TargetMatrix { values: to_mat(a) }
}

fn random_instance(seed: u64) -> (Dense, Dense, f64) {
    let mut r = rng(seed);
    let l = r.random_range(1..=30);
    let m = r.random_range(1..=20);
    let q = r.random_range(1..=5);
    let lambda = 10f64.powf(r.random_range(-4.0..1.0));
    (random_dense(&mut r, l, m), random_dense(&mut r, l, q), lambda)
}

/// `‖Hᵀ(Hβ − T) + λβ‖ / ‖HᵀT‖`
fn stationarity(h: &Dense, t: &Dense, beta: &Dense, lambda: f64) -> f64 {
    let ht = transpose(h);
    let grad = matmul(&ht, &sub(&matmul(h, beta), t));
    let g: Dense = grad
        .iter()
        .zip(beta)
        .map(|(g, b)| g.iter().zip(b).map(|(x, y)| x + lambda * y).collect())
        .collect();
    frobenius(&g) / frobenius(&matmul(&ht, t))
}

fn ridge_objective(h: &Dense, t: &Dense, beta: &Dense, lambda: f64) -> f64 {
    frobenius(&sub(&matmul(h, beta), t)).powi(2) + lambda * frobenius(beta).powi(2)
}

#[test]
fn ridge_matches_normal_equation_oracle() {
    for seed in 0..200 {
        let (h, t, lambda) = random_instance(seed);
        let beta = from_mat(&ridge_solve(&hidden(&h), &targets(&t), lambda).unwrap().values);
        let oracle = ridge_oracle(&h, &t, lambda);
        let err = relative_error(&beta, &oracle);
        assert!(err <= 1e-8, "seed {seed}: relative error {err:e}");
        let res = stationarity(&h, &t, &beta, lambda);
        assert!(res < 1e-8, "seed {seed}: stationarity {res:e}");
    }
}

#[test]
fn pinv_matches_full_rank_oracle() {
    let mut checked = 0;
    for seed in 0..150 {
        let mut r = rng(1000 + seed);
        let m = r.random_range(1..=15);
        let l = m + r.random_range(0..=15);
        let q = r.random_range(1..=4);
        let (h, t) = (random_dense(&mut r, l, m), random_dense(&mut r, l, q));
        let beta = from_mat(&pinv_solve(&hidden(&h), &targets(&t)).unwrap().values);
        let ht = transpose(&h);
        let oracle = gauss_solve(&matmul(&ht, &h), &matmul(&ht, &t));
        let err = relative_error(&beta, &oracle);
        assert!(err <= 1e-8, "seed {seed}: relative error {err:e}");
        assert!(stationarity(&h, &t, &beta, 0.0) < 1e-8);
        checked += 1;
    }
    assert!(checked >= 100);
}

#[test]
fn pinv_matches_minimum_norm_oracle_when_rank_deficient() {
    for seed in 0..100 {
        let mut r = rng(5000 + seed);
        let l = r.random_range(2..=25);
        let m = r.random_range(2..=20);
        let rank = r.random_range(1..=l.min(m));
        let h = low_rank(&mut r, l, m, rank);
        let t = random_dense(&mut r, l, 3);
        let out = pinv_solve(&hidden(&h), &targets(&t)).unwrap();
        assert_eq!(out.diagnostics.rank, Some(rank), "seed {seed}");
        let beta = from_mat(&out.values);
        let err = relative_error(&beta, &pinv_oracle(&h, &t));
        assert!(err <= 1e-8, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn identity_hidden_matrix_has_closed_form() {
    let lambda = 0.01;
    let h: Dense = (0..6).map(|i| (0..6).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut r = rng(8);
    let t = random_dense(&mut r, 6, 3);
    let beta = from_mat(&ridge_solve(&hidden(&h), &targets(&t), lambda).unwrap().values);
    for (row, trow) in beta.iter().zip(&t) {
        for (b, v) in row.iter().zip(trow) {
            assert!((b - v / (1.0 + lambda)).abs() <= 1e-12);
        }
    }
}

#[test]
fn ridge_solution_is_a_minimum() {
    for seed in 0..20 {
        let (h, t, lambda) = random_instance(300 + seed);
        let beta = from_mat(&ridge_solve(&hidden(&h), &targets(&t), lambda).unwrap().values);
        let best = ridge_objective(&h, &t, &beta, lambda);
        let mut r = rng(seed);
        for _ in 0..10 {
            let nudged: Dense = beta
                .iter()
                .map(|row| row.iter().map(|b| b + 1e-3 * r.random_range(-1.0..1.0)).collect())
                .collect();
            assert!(ridge_objective(&h, &t, &nudged, lambda) >= best - 1e-12 * best.max(1.0));
        }
    }
}

#[test]
fn larger_penalty_shrinks_weights() {
    let (h, t, _) = random_instance(77);
    let norms: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0, 10.0]
        .iter()
        .map(|&l| frobenius(&from_mat(&ridge_solve(&hidden(&h), &targets(&t), l).unwrap().values)))
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
}

#[test]
fn scaling_targets_scales_weights() {
    let (h, t, lambda) = random_instance(78);
    let base = from_mat(&ridge_solve(&hidden(&h), &targets(&t), lambda).unwrap().values);
    let t3: Dense = t.iter().map(|r| r.iter().map(|v| 3.0 * v).collect()).collect();
    let scaled = from_mat(&ridge_solve(&hidden(&h), &targets(&t3), lambda).unwrap().values);
    let expected: Dense = base.iter().map(|r| r.iter().map(|v| 3.0 * v).collect()).collect();
    assert!(relative_error(&scaled, &expected) < 1e-12);
}

#[test]
fn tiny_penalty_approaches_pseudoinverse() {
    let mut r = rng(79);
    let (h, t) = (random_dense(&mut r, 20, 8), random_dense(&mut r, 20, 3));
    let ridge = from_mat(&ridge_solve(&hidden(&h), &targets(&t), 1e-10).unwrap().values);
    let pinv = from_mat(&pinv_solve(&hidden(&h), &targets(&t)).unwrap().values);
    assert!(relative_error(&ridge, &pinv) < 1e-6);
}

#[test]
fn single_sample_is_interpolated_by_pinv() {
    let mut r = rng(80);
    let (h, t) = (random_dense(&mut r, 1, 5), random_dense(&mut r, 1, 2));
    let beta = from_mat(&pinv_solve(&hidden(&h), &targets(&t)).unwrap().values);
    let fit = matmul(&h, &beta);
    assert!(relative_error(&fit, &t) < 1e-12);
}

#[test]
fn square_full_rank_hidden_layer_fits_training_set() {
    // L = M with pinv reproduces every training label
    let data = blobs(9, 10, 3, 4);
    let config = ModelConfig {
        seed: 1,
        normalization: Normalization::ZScore,
        design: DesignSpec::Baseline { m: data.n_samples() },
        distribution: Distribution::Uniform { half_width: 1.0 },
        solver: SolverSpec {
            method: SolveMethod::Pseudoinverse,
            lambda: 0.0,
        },
    };
    let net = train(&config, &data).unwrap();
    assert_eq!(net.accuracy(data.features(), data.labels()).unwrap(), 100.0);
}

#[test]
fn one_hot_rows_sum_to_one() {
    let t = one_hot_targets(&[3, 1, 2, 3], &[1, 2, 3]).unwrap();
    let expected = Mat::from_fn(4, 3, |i, j| f64::from(u8::from([2, 0, 1, 2][i] == j)));
    assert_eq!(t.values, expected);
}
