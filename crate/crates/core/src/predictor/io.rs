//! Predictor JSON files.
//!
//! Schema: `{kind, P, F, dt_hint, activation, layers: [{rows, cols, weights, bias}]}`
//! with `weights` stored row-major. Constant-velocity predictors carry no
//! layers. Floats are written in their shortest round-trip decimal form, so
//! a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Mlp, PredictorKind, PredictorSpec};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictorFile {
    kind: String,
    #[serde(rename = "P")]
    past: usize,
    #[serde(rename = "F")]
    future: usize,
    #[serde(default)]
    dt_hint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    layers: Vec<Dense>,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

pub fn predictor_to_json(spec: &PredictorSpec) -> String {
    let (kind, activation, layers) = match spec.kind() {
        PredictorKind::ConstantVelocity => ("constant_velocity", None, Vec::new()),
        PredictorKind::Mlp(net) => ("mlp", Some("tanh".to_string()), net.layers.clone()),
    };
    let file = PredictorFile {
        kind: kind.into(),
        past: spec.past_horizon(),
        future: spec.future_horizon(),
        dt_hint: spec.dt_hint(),
        activation,
        layers,
    };
    serde_json::to_string_pretty(&file).expect("predictor serializes")
}

pub fn predictor_from_json(text: &str) -> Result<PredictorSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: PredictorFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;

    if file.past == 0 {
        return Err(schema("P", "must be at least 1"));
    }
    if file.future == 0 {
        return Err(schema("F", "must be at least 1"));
    }
    if let Some(dt) = file.dt_hint {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(schema("dt_hint", format!("must be positive, got {dt}")));
        }
    }

    let spec = match file.kind.as_str() {
        "constant_velocity" => {
            if !file.layers.is_empty() {
                return Err(schema("layers", "constant_velocity predictors take no layers"));
            }
            PredictorSpec::constant_velocity(file.past, file.future)?
        }
        "mlp" => {
            match file.activation.as_deref() {
                None | Some("tanh") => {}
                Some(other) => return Err(schema("activation", format!("unsupported activation `{other}`"))),
            }
            validate_layers(&file.layers, file.past, file.future)?;
            PredictorSpec::mlp(file.past, file.future, Mlp { layers: file.layers })?
        }
        other => return Err(schema("kind", format!("unknown predictor kind `{other}`"))),
    };
    Ok(match file.dt_hint {
        Some(dt) => spec.with_dt_hint(dt),
        None => spec,
    })
}

fn validate_layers(layers: &[Dense], past: usize, future: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(schema("layers", "an mlp needs at least one layer"));
    }
    let mut expected_cols = 2 * past;
    for (i, l) in layers.iter().enumerate() {
        if l.cols != expected_cols {
            let why = if i == 0 {
                format!("expected {expected_cols} (= 2P), got {}", l.cols)
            } else {
                format!("expected {expected_cols} (rows of layers[{}]), got {}", i - 1, l.cols)
            };
            return Err(schema(format!("layers[{i}].cols"), why));
        }
        if l.rows == 0 {
            return Err(schema(format!("layers[{i}].rows"), "must be positive"));
        }
        if l.weights.len() != l.rows * l.cols {
            return Err(schema(
                format!("layers[{i}].weights"),
                format!("expected {} entries, got {}", l.rows * l.cols, l.weights.len()),
            ));
        }
        if l.bias.len() != l.rows {
            return Err(schema(
                format!("layers[{i}].bias"),
                format!("expected {} entries, got {}", l.rows, l.bias.len()),
            ));
        }
        if let Some(j) = l.weights.iter().position(|w| !w.is_finite()) {
            return Err(schema(format!("layers[{i}].weights[{j}]"), "not finite"));
        }
        expected_cols = l.rows;
    }
    let last = layers.len() - 1;
    if layers[last].rows != 2 * future {
        return Err(schema(
            format!("layers[{last}].rows"),
            format!("expected {} (= 2F), got {}", 2 * future, layers[last].rows),
        ));
    }
    Ok(())
}

pub fn save_predictor(spec: &PredictorSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, predictor_to_json(spec) + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_predictor(path: impl AsRef<Path>) -> Result<PredictorSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    predictor_from_json(&text)
}
