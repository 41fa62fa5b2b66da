//! Text checkpoints: a JSON document with the spec and the parameter arrays,
//! every number written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::{Gradients, Layer, MlpSpec, ModelError, ModelParameters};

const FORMAT: &str = "logicloss-mlp/1";

fn num(out: &mut String, x: f64) {
    write!(out, "{:.16e}", x).unwrap();
}

fn nums(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        num(out, x);
    }
    out.push(']');
}

pub fn write_checkpoint(p: &ModelParameters) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    writeln!(s, "  \"format\": \"{}\",", FORMAT).unwrap();
    writeln!(s, "  \"spec\": {},", serde_json::to_string(&p.spec).unwrap()).unwrap();
    s.push_str("  \"layers\": [\n");
    for (l, layer) in p.layers.iter().enumerate() {
        s.push_str("    {\"w\": [");
        for o in 0..layer.n_out {
            if o > 0 {
                s.push_str(", ");
            }
            nums(&mut s, &layer.w[o * layer.n_in..(o + 1) * layer.n_in]);
        }
        s.push_str("], \"b\": ");
        nums(&mut s, &layer.b);
        s.push('}');
        if l + 1 < p.layers.len() {
            s.push(',');
        }
        s.push('\n');
    }
    s.push_str("  ]\n}\n");
    s
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn floats(v: &Value) -> Result<Vec<f64>, ModelError> {
    v.as_array()
        .ok_or_else(|| bad("expected an array"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| bad("expected a number")))
        .collect()
}

pub fn read_checkpoint(text: &str) -> Result<ModelParameters, ModelError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if doc.get("format").and_then(Value::as_str) != Some(FORMAT) {
        return Err(bad("unknown format"));
    }
    let spec: MlpSpec = serde_json::from_value(doc["spec"].clone()).map_err(|e| bad(e.to_string()))?;
    spec.validate()?;
    let raw = doc["layers"].as_array().ok_or_else(|| bad("missing layers"))?;
    if raw.len() + 1 != spec.layer_widths.len() {
        return Err(bad("layer count does not match spec"));
    }
    let mut layers = Vec::with_capacity(raw.len());
    for (l, entry) in raw.iter().enumerate() {
        let (n_in, n_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let rows = entry["w"].as_array().ok_or_else(|| bad("missing weights"))?;
        if rows.len() != n_out {
            return Err(bad(format!("layer {} has {} rows, expected {}", l, rows.len(), n_out)));
        }
        let mut w = Vec::with_capacity(n_in * n_out);
        for row in rows {
            let r = floats(row)?;
            if r.len() != n_in {
                return Err(bad(format!("layer {} row width {} vs {}", l, r.len(), n_in)));
            }
            w.extend(r);
        }
        let b = floats(&entry["b"])?;
        if b.len() != n_out {
            return Err(bad(format!("layer {} bias width {} vs {}", l, b.len(), n_out)));
        }
        layers.push(Layer { n_in, n_out, w, b });
    }
    let grads = Gradients::zeros_like(&layers);
    Ok(ModelParameters {
        spec,
        layers,
        grads,
        version: 0,
    })
}

pub fn save_checkpoint(p: &ModelParameters, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, write_checkpoint(p))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters, ModelError> {
    read_checkpoint(&std::fs::read_to_string(path)?)
}
