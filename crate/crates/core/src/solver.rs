//! Closed-form output-weight training.
//!
//! The hidden-output matrix `H` (`L×M`) and one-hot targets `T` (`L×Q`) give
//! the output weights `β` (`M×Q`) either by ridge regression,
//! `β = (HᵀH + λI)⁻¹ HᵀT`, or by the Moore–Penrose pseudoinverse `β = H†T`.
//! The ridge system is factored with Cholesky; if that fails the solve falls
//! back to a thresholded SVD and the fallback is recorded in the diagnostics.

use std::fmt;
use std::str::FromStr;

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureScaler, Normalization};
use crate::error::{Error, Result};
use crate::model::{init_primary_layer, Activation, Distribution, ModelDesign, Network};
use crate::pairing::build_pairing_plan;

/// Ridge penalty used by every experiment unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// `H`: one row per sample, one column per hidden unit.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMatrix {
    pub values: Mat<f64>,
}

impl HiddenMatrix {
    pub fn sample_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn hidden_width(&self) -> usize {
        self.values.ncols()
    }
}

/// `T`: 0/1 one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub values: Mat<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Ridge,
    #[serde(rename = "pinv")]
    Pseudoinverse,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Ridge => "ridge",
            SolveMethod::Pseudoinverse => "pinv",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(SolveMethod::Ridge),
            "pinv" => Ok(SolveMethod::Pseudoinverse),
            other => Err(Error::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveDiagnostics {
    /// Cholesky failed and the SVD route produced the weights.
    pub fallback: bool,
    /// Squared ratio of extreme Cholesky diagonal entries (ridge), or the
    /// ratio of extreme retained singular values (SVD routes).
    pub condition_estimate: f64,
    /// Numerical rank, when an SVD was computed.
    pub rank: Option<usize>,
}

impl SolveDiagnostics {
    /// `key=value` lines for the diagnostics stream.
    pub fn key_values(&self) -> Vec<String> {
        let mut lines = vec![
            format!("fallback={}", self.fallback),
            format!("condition_estimate={:e}", self.condition_estimate),
        ];
        if let Some(rank) = self.rank {
            lines.push(format!("rank={rank}"));
        }
        lines
    }
}

/// `β` with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeights {
    pub values: Mat<f64>,
    pub lambda_used: f64,
    pub method: SolveMethod,
    pub diagnostics: SolveDiagnostics,
}

impl OutputWeights {
    pub fn new(values: Mat<f64>, lambda_used: f64, method: SolveMethod) -> Self {
        OutputWeights {
            values,
            lambda_used,
            method,
            diagnostics: SolveDiagnostics::default(),
        }
    }
}

pub fn build_hidden_matrix(network: &Network, dataset: &Dataset) -> Result<HiddenMatrix> {
    if dataset.n_samples() == 0 {
        return Err(Error::invalid("dataset has no samples"));
    }
    let m = network.hidden_width();
    let rows = network.hidden_rows(dataset.features())?;
    Ok(HiddenMatrix {
        values: Mat::from_fn(dataset.n_samples(), m, |i, j| rows[i * m + j]),
    })
}

pub fn one_hot_targets(labels: &[i64], class_labels: &[i64]) -> Result<TargetMatrix> {
    let mut values = Mat::zeros(labels.len(), class_labels.len());
    for (row, label) in labels.iter().enumerate() {
        let col = class_labels
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::data(None, format!("label {label} is not a known class")))?;
        values[(row, col)] = 1.0;
    }
    Ok(TargetMatrix { values })
}

fn check_system(h: MatRef<'_, f64>, t: MatRef<'_, f64>) -> Result<()> {
    if h.nrows() == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if t.nrows() != h.nrows() {
        return Err(Error::Shape {
            what: "target rows",
            expected: h.nrows(),
            actual: t.nrows(),
        });
    }
    let finite = |m: MatRef<'_, f64>| (0..m.ncols()).all(|j| m.col(j).iter().all(|v| v.is_finite()));
    if !finite(h) || !finite(t) {
        return Err(Error::Numeric("non-finite entry in H or T".into()));
    }
    Ok(())
}

fn check_finite(values: &Mat<f64>) -> Result<()> {
    if (0..values.ncols()).all(|j| values.col(j).iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(Error::Numeric("solve produced non-finite output weights".into()))
    }
}

/// Solves `A X = B` in the least-squares, minimum-norm sense through a thin
/// SVD of `A`, zeroing singular values below `ε · σ_max · max(rows, cols)`.
fn svd_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(Mat<f64>, SolveDiagnostics)> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = s.iter().copied().fold(0.0_f64, f64::max);
    let threshold = f64::EPSILON * s_max * a.nrows().max(a.ncols()) as f64;
    let mut ut_b = svd.U().transpose() * b;
    let mut rank = 0;
    let mut s_min = f64::INFINITY;
    for (i, &sv) in s.iter().enumerate() {
        let inv = if sv > threshold {
            rank += 1;
            s_min = s_min.min(sv);
            1.0 / sv
        } else {
            0.0
        };
        for j in 0..ut_b.ncols() {
            ut_b[(i, j)] *= inv;
        }
    }
    let x = svd.V() * &ut_b;
    let condition_estimate = if rank > 0 { s_max / s_min } else { f64::INFINITY };
    Ok((
        x,
        SolveDiagnostics {
            fallback: false,
            condition_estimate,
            rank: Some(rank),
        },
    ))
}

/// Minimizes `‖Hβ − T‖²_F + λ‖β‖²_F` via the `M×M` normal equations.
pub fn ridge_solve(h: &HiddenMatrix, t: &TargetMatrix, lambda: f64) -> Result<OutputWeights> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "ridge penalty must be positive and finite, got {lambda}; use the pseudoinverse for λ = 0"
        )));
    }
    let hm = h.values.as_ref();
    check_system(hm, t.values.as_ref())?;
    let m = hm.ncols();
    let par = faer::get_global_parallelism();

    let mut gram = Mat::<f64>::zeros(m, m);
    triangular::matmul(
        gram.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        hm.transpose(),
        BlockStructure::Rectangular,
        hm,
        BlockStructure::Rectangular,
        1.0,
        par,
    );
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    let rhs = hm.transpose() * t.values.as_ref();

    let (values, diagnostics) = match gram.llt(Side::Lower) {
        Ok(llt) => {
            let diag = llt.L().diagonal().column_vector();
            let (lo, hi) = diag
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let values = llt.solve(&rhs);
            (
                values,
                SolveDiagnostics {
                    fallback: false,
                    condition_estimate: (hi / lo).powi(2),
                    rank: None,
                },
            )
        }
        Err(_) => {
            for j in 0..m {
                for i in 0..j {
                    gram[(i, j)] = gram[(j, i)];
                }
            }
            let (values, mut diagnostics) = svd_solve(gram.as_ref(), rhs.as_ref())?;
            diagnostics.fallback = true;
            (values, diagnostics)
        }
    };
    check_finite(&values)?;
    Ok(OutputWeights {
        values,
        lambda_used: lambda,
        method: SolveMethod::Ridge,
        diagnostics,
    })
}

/// `β = H†T`, the minimum-norm least-squares solution.
pub fn pinv_solve(h: &HiddenMatrix, t: &TargetMatrix) -> Result<OutputWeights> {
    check_system(h.values.as_ref(), t.values.as_ref())?;
    let (values, diagnostics) = svd_solve(h.values.as_ref(), t.values.as_ref())?;
    check_finite(&values)?;
    Ok(OutputWeights {
        values,
        lambda_used: 0.0,
        method: SolveMethod::Pseudoinverse,
        diagnostics,
    })
}

/// Hidden-layer layout of a model to be trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DesignSpec {
    /// `m` hidden units, each with its own random weights.
    Baseline { m: usize },
    /// `p` primary units paired at stride `tau`.
    Efficient { p: usize, tau: usize },
}

impl DesignSpec {
    pub fn primary_units(&self) -> usize {
        match *self {
            DesignSpec::Baseline { m } => m,
            DesignSpec::Efficient { p, .. } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: SolveMethod,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            method: SolveMethod::Ridge,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Everything needed to train one network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub seed: u64,
    pub normalization: Normalization,
    pub design: DesignSpec,
    pub distribution: Distribution,
    pub solver: SolverSpec,
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Fits the scaler, draws the primary layer, builds `H` and `T`, and solves
/// for `β`.
pub fn train(config: &ModelConfig, train_set: &Dataset) -> Result<Network> {
    if train_set.n_classes() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 classes, found {}",
            train_set.n_classes()
        )));
    }
    let scaler = FeatureScaler::fit(config.normalization, train_set.features());
    let layer = init_primary_layer(
        train_set.n_features(),
        config.design.primary_units(),
        config.distribution,
        config.seed,
    )?;
    let design = match config.design {
        DesignSpec::Baseline { .. } => ModelDesign::Baseline,
        DesignSpec::Efficient { p, tau } => ModelDesign::Efficient(build_pairing_plan(p, tau)?),
    };
    let network = Network::new(
        scaler,
        layer,
        design,
        Activation::Sigmoid,
        train_set.class_labels().to_vec(),
    )?;
    let h = build_hidden_matrix(&network, train_set)?;
    let t = one_hot_targets(train_set.labels(), train_set.class_labels())?;
    let output = match config.solver.method {
        SolveMethod::Ridge => ridge_solve(&h, &t, config.solver.lambda)?,
        SolveMethod::Pseudoinverse => pinv_solve(&h, &t)?,
    };
    network.with_output(output)
}
