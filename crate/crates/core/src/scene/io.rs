use std::path::Path;

use serde_json::Value;

use super::{validate, SceneLayout};
use crate::error::{Error, Result};

/// Read and validate a layout JSON file.
pub fn load_layout(path: impl AsRef<Path>) -> Result<SceneLayout> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout(&text)
}

pub fn parse_layout(text: &str) -> Result<SceneLayout> {
    let layout: SceneLayout =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    validate(&layout)?;
    Ok(layout)
}

/// Pretty JSON with every float rounded to 9 significant digits.
pub fn to_json(layout: &SceneLayout) -> String {
    let value = serde_json::to_value(layout).expect("layout is always serializable");
    let mut out = serde_json::to_string_pretty(&round_floats(value)).expect("json value");
    out.push('\n');
    out
}

pub fn save_layout(layout: &SceneLayout, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(layout)).map_err(|e| Error::io(path, e))
}

pub(crate) fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

/// Recursively round every non-integer number in a JSON tree.
pub(crate) fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}
