//! Model files (schema `nnrw/1`).
//!
//! A model is one JSON document. Matrices are flattened row-major and every
//! array entry is written with 17 significant digits, which round-trips any
//! 64-bit float exactly. The pairing plan is not stored: it is regenerated
//! from `p_units` and `tau`, and `hidden_width` is kept as a check. Unit
//! indices are 0-based (`index_base`).

use std::path::Path;

use faer::Mat;
use serde::ser::{Error as _, SerializeSeq};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::data::{FeatureScaler, Normalization};
use crate::error::{Error, Result};
use crate::model::{Activation, DesignTag, Distribution, ModelDesign, Network, PrimaryLayer};
use crate::pairing::build_pairing_plan;
use crate::solver::{OutputWeights, SolveMethod};

pub const SCHEMA: &str = "nnrw/1";

fn serialize_f17<S: Serializer>(values: &[f64], serializer: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = serializer.serialize_seq(Some(values.len()))?;
    for v in values {
        if !v.is_finite() {
            return Err(S::Error::custom(format!("non-finite value {v}")));
        }
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(S::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverRecord {
    method: SolveMethod,
    lambda: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizationRecord {
    kind: Normalization,
    #[serde(serialize_with = "serialize_f17")]
    shift: Vec<f64>,
    #[serde(serialize_with = "serialize_f17")]
    scale: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    index_base: u8,
    design: DesignTag,
    n_features: usize,
    p_units: usize,
    n_classes: usize,
    tau: Option<usize>,
    hidden_width: usize,
    activation: Activation,
    distribution: Distribution,
    seed: u64,
    solver: SolverRecord,
    class_labels: Vec<i64>,
    normalization: NormalizationRecord,
    #[serde(serialize_with = "serialize_f17")]
    weights: Vec<f64>,
    #[serde(serialize_with = "serialize_f17")]
    biases: Vec<f64>,
    #[serde(serialize_with = "serialize_f17")]
    beta: Vec<f64>,
}

pub fn to_json(network: &Network) -> Result<String> {
    let output = network.output().ok_or(Error::Untrained)?;
    let beta = &output.values;
    let layer = network.layer();
    let scaler = network.scaler();
    let file = ModelFile {
        schema: SCHEMA.to_string(),
        index_base: 0,
        design: network.design().tag(),
        n_features: network.n_features(),
        p_units: network.p_units(),
        n_classes: network.n_classes(),
        tau: network.design().tau(),
        hidden_width: network.hidden_width(),
        activation: network.activation(),
        distribution: layer.distribution(),
        seed: layer.seed(),
        solver: SolverRecord {
            method: output.method,
            lambda: output.lambda_used,
        },
        class_labels: network.class_labels().to_vec(),
        normalization: NormalizationRecord {
            kind: scaler.kind,
            shift: scaler.shift.clone(),
            scale: scaler.scale.clone(),
        },
        weights: layer.weights().to_vec(),
        biases: layer.biases().to_vec(),
        beta: (0..beta.nrows())
            .flat_map(|i| (0..beta.ncols()).map(move |j| beta[(i, j)]))
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

fn expect_len(what: &str, actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::Format(format!(
            "{what} has {actual} entries, expected {expected}"
        )));
    }
    Ok(())
}

pub fn from_json(text: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.schema != SCHEMA {
        return Err(Error::Format(format!(
            "unsupported schema `{}`, expected `{SCHEMA}`",
            file.schema
        )));
    }
    if file.index_base != 0 {
        return Err(Error::Format("only 0-based unit indices are supported".into()));
    }
    let (n, p, m, q) = (file.n_features, file.p_units, file.hidden_width, file.n_classes);
    expect_len("weights", file.weights.len(), p * n)?;
    expect_len("biases", file.biases.len(), p)?;
    expect_len("beta", file.beta.len(), m * q)?;
    expect_len("class_labels", file.class_labels.len(), q)?;
    expect_len("normalization.shift", file.normalization.shift.len(), n)?;
    expect_len("normalization.scale", file.normalization.scale.len(), n)?;
    file.distribution.validate().map_err(|e| Error::Format(e.to_string()))?;

    let design = match (file.design, file.tau) {
        (DesignTag::Baseline, None) => ModelDesign::Baseline,
        (DesignTag::Efficient, Some(tau)) => {
            ModelDesign::Efficient(build_pairing_plan(p, tau).map_err(|e| Error::Format(e.to_string()))?)
        }
        (DesignTag::Baseline, Some(_)) => return Err(Error::Format("baseline model must not set tau".into())),
        (DesignTag::Efficient, None) => return Err(Error::Format("efficient model needs tau".into())),
    };
    let layer = PrimaryLayer::from_parts(file.weights, file.biases, n, file.distribution, file.seed)?;
    let scaler = FeatureScaler {
        kind: file.normalization.kind,
        shift: file.normalization.shift,
        scale: file.normalization.scale,
    };
    let network = Network::new(scaler, layer, design, file.activation, file.class_labels)?;
    if network.hidden_width() != m {
        return Err(Error::Format(format!(
            "pairing plan regenerated {} secondary units, file records {m}",
            network.hidden_width()
        )));
    }
    let beta = Mat::from_fn(m, q, |i, j| file.beta[i * q + j]);
    network.with_output(OutputWeights::new(beta, file.solver.lambda, file.solver.method))
}

pub fn save_model(network: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(network)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
