//! Oracles and checks shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::PathBuf;

use faer::Mat;
use nnrw::model::{init_primary_layer, primary_outputs, secondary_outputs, sigmoid};
use nnrw::pairing::build_pairing_plan;
use nnrw::{Activation, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_mat(a: &Dense) -> Mat<f64> {
    let cols = a.first().map_or(0, Vec::len);
    Mat::from_fn(a.len(), cols, |i, j| a[i][j])
}

pub fn from_mat(a: &Mat<f64>) -> Dense {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

pub fn transpose(a: &Dense) -> Dense {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
        .collect()
}

pub fn frobenius(a: &Dense) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_error(actual: &Dense, expected: &Dense) -> f64 {
    frobenius(&sub(actual, expected)) / frobenius(expected).max(f64::MIN_POSITIVE)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let q = b[0].len();
    let mut aug: Dense = a.iter().zip(b).map(|(r, s)| r.iter().chain(s).copied().collect()).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        assert!(aug[pivot][col].abs() > 1e-300, "singular system");
        aug.swap(col, pivot);
        let (top, rest) = aug.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                row.iter_mut().zip(pivot_row).skip(col).for_each(|(a, p)| *a -= f * p);
            }
        }
    }
    let mut x = vec![vec![0.0; q]; n];
    for row in (0..n).rev() {
        for j in 0..q {
            let s: f64 = (row + 1..n).map(|k| aug[row][k] * x[k][j]).sum();
            x[row][j] = (aug[row][n + j] - s) / aug[row][row];
        }
    }
    x
}

/// `(HᵀH + λI)⁻¹ HᵀT` from explicit normal equations.
pub fn ridge_oracle(h: &Dense, t: &Dense, lambda: f64) -> Dense {
    let ht = transpose(h);
    let mut gram = matmul(&ht, h);
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += lambda;
    }
    gauss_solve(&gram, &matmul(&ht, t))
}

/// Orthonormal basis of the span of `vectors` by modified Gram–Schmidt,
/// dropping vectors whose remainder is below `tol` times their norm.
pub fn gram_schmidt(vectors: &Dense, tol: f64) -> Dense {
    let mut basis: Dense = Vec::new();
    for v in vectors {
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &basis {
                let d: f64 = w.iter().zip(e).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(e).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol * norm0.max(f64::MIN_POSITIVE) {
            basis.push(w.iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Minimum-norm least-squares solution: `β = R c`, where `R` spans the row
/// space of `H` and `c` solves the full-rank problem `min ‖H R c − T‖`.
pub fn pinv_oracle(h: &Dense, t: &Dense) -> Dense {
    let r = transpose(&gram_schmidt(h, 1e-9));
    let hr = matmul(h, &r);
    let hrt = transpose(&hr);
    let c = gauss_solve(&matmul(&hrt, &hr), &matmul(&hrt, t));
    matmul(&r, &c)
}

/// Builds an `rows × cols` matrix of the given rank.
pub fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Dense {
    matmul(&random_dense(rng, rows, rank), &random_dense(rng, rank, cols))
}

/// Largest error over all units of the merged-weight identity
/// `p_i + p_j = (a_i + a_j)·x + (b_i + b_j)`, relative to the magnitude of
/// the summed terms. Also checks `s_k = g(p_i + p_j)` exactly.
pub fn merged_identity_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=64);
    let p = r.random_range(2..=40);
    let tau = r.random_range(1..p);
    let dist = if r.random_bool(0.5) {
        Distribution::Uniform {
            half_width: r.random_range(0.1..3.0),
        }
    } else {
        Distribution::Normal {
            mean: r.random_range(-1.0..1.0),
            std: r.random_range(0.1..2.0),
        }
    };
    let layer = init_primary_layer(n, p, dist, r.random()).unwrap();
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
    let plan = build_pairing_plan(p, tau).unwrap();
    let prim = primary_outputs(&layer, &x).unwrap();
    let sec = secondary_outputs(&prim, plan.pairs(), Activation::Sigmoid).unwrap();
    let mut worst = 0.0f64;
    for (k, &(i, j)) in plan.pairs().iter().enumerate() {
        let (ai, aj) = (layer.weight_row(i), layer.weight_row(j));
        let (bi, bj) = (layer.biases()[i], layer.biases()[j]);
        let mut merged = bi + bj;
        let mut scale = merged.abs();
        for f in 0..n {
            let term = (ai[f] + aj[f]) * x[f];
            merged += term;
            scale += term.abs();
        }
        let err = ((prim[i] + prim[j]) - merged).abs() / scale.max(f64::MIN_POSITIVE);
        worst = worst.max(err);
        assert_eq!(sec[k], sigmoid(prim[i] + prim[j]));
    }
    worst
}

/// Merged weights `a_i + a_j` over 1000 disjoint pairs of a 2000-unit layer
/// with 100 inputs (`10⁵` samples).
pub fn merged_weight_samples(dist: Distribution, seed: u64) -> Vec<f64> {
    let layer = init_primary_layer(100, 2000, dist, seed).unwrap();
    let plan = build_pairing_plan(2000, 1000).unwrap();
    assert_eq!(plan.len(), 1000);
    plan.pairs()
        .iter()
        .flat_map(|&(i, j)| {
            let (a, b) = (layer.weight_row(i), layer.weight_row(j));
            a.iter().zip(b).map(|(u, v)| u + v).collect::<Vec<_>>()
        })
        .collect()
}

pub struct MomentCheck {
    pub mean: f64,
    pub var: f64,
    pub mean_z: f64,
    pub var_z: f64,
}

/// Sample mean and variance against expected values, in standard errors.
/// The variance standard error assumes a normal population.
pub fn moment_check(samples: &[f64], mean: f64, var: f64) -> MomentCheck {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    MomentCheck {
        mean: m,
        var: v,
        mean_z: (m - mean).abs() / (var / n).sqrt(),
        var_z: (v - var).abs() / (var * (2.0 / (n - 1.0)).sqrt()),
    }
}

/// Pearson χ² of `samples` against the triangular density on `[-2h, 2h]`
/// (the sum of two independent uniforms on `[-h, h]`), over `bins` equal bins.
pub fn triangular_chi_square(samples: &[f64], h: f64, bins: usize) -> f64 {
    let width = 4.0 * h / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        assert!(s.abs() <= 2.0 * h, "sample {s} outside the support");
        let b = (((s + 2.0 * h) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let cdf = |z: f64| {
        if z <= 0.0 {
            (z + 2.0 * h).powi(2) / (8.0 * h * h)
        } else {
            1.0 - (2.0 * h - z).powi(2) / (8.0 * h * h)
        }
    };
    let n = samples.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let lo = -2.0 * h + b as f64 * width;
            let expected = n * (cdf(lo + width) - cdf(lo));
            (c as f64 - expected).powi(2) / expected
        })
        .sum()
}

/// χ² critical value for 19 degrees of freedom at the 0.001 level.
pub const CHI2_19_P001: f64 = 43.82;

/// Gaussian-ish clusters around random centres; labels are `10, 20, ...`.
pub fn blobs(seed: u64, per_class: usize, n_features: usize, classes: usize) -> nnrw::Dataset {
    let mut r = rng(seed);
    let centres = random_dense(&mut r, classes, n_features);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * classes {
        let c = i % classes;
        rows.push(
            centres[c]
                .iter()
                .map(|m| 3.0 * m + r.random_range(-0.8..0.8))
                .collect::<Vec<f64>>(),
        );
        labels.push(10 * (c as i64 + 1));
    }
    nnrw::Dataset::from_rows("blobs", &rows, labels).unwrap()
}

/// Secondary-unit count by direct enumeration of `i < j` with `τ | (j − i)`.
pub fn brute_pair_count(p: usize, tau: usize) -> usize {
    (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|(i, j)| (j - i) % tau == 0).count()
}
