#![allow(dead_code)]

use std::path::Path;

use fracstokes::solver::{ConstantSpec, DuhamelRule, InitialCondition, SolveConfig};
use fracstokes::spectral::{Backend, ModelSpec, NoiseOperator};
use serde_json::Value;

/// The d=2, p=4, q=1.5, H=0.75, K=16 configuration used by the solver checks.
pub fn reference_config(seed: u64) -> SolveConfig {
    SolveConfig {
        model: ModelSpec { dim: 2, backend: Backend::FourierPeriodic { max_wavenumber: 16 }, viscosity: 1.0 },
        noise: NoiseOperator::new(1.5),
        hurst: 0.75,
        p_exponent: 4.0,
        t_final: 1.0,
        n_steps: 256,
        seed,
        m_constant: ConstantSpec::Value(1.0),
        max_picard_iters: 60,
        picard_tol: 1e-12,
        duhamel_rule: DuhamelRule::ExpTrapezoid,
        quadrature_order: 4,
        min_local_steps: 64,
        initial_condition: InitialCondition::Random { seed: 11, l2_norm: 1.0, decay: 4.0 },
    }
}

/// Small data and weak noise: `τ ≈ 0.1`, resolved by a few hundred steps.
pub fn small_data_config(seed: u64) -> SolveConfig {
    SolveConfig {
        noise: NoiseOperator::new(1.5).with_amplitude(0.02),
        initial_condition: InitialCondition::Random { seed: 5, l2_norm: 0.1, decay: 4.0 },
        ..reference_config(seed)
    }
}

pub fn load_schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Checks the subset of JSON Schema the shipped schemas use: `type`, `enum`,
/// `oneOf`, `required`, `properties`, `additionalProperties`, `items`,
/// `minimum`, `maximum` and the hex-digest `pattern`.
pub fn validate(schema: &Value, value: &Value, at: &str) -> Result<(), String> {
    let obj = schema.as_object().ok_or(format!("{at}: schema is not an object"))?;
    if let Some(t) = obj.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|x| x.as_str()).collect(),
            _ => return Err(format!("{at}: bad type keyword")),
        };
        if !types.iter().any(|t| type_matches(t, value)) {
            return Err(format!("{at}: expected {types:?}, got {value}"));
        }
    }
    if let Some(Value::Array(options)) = obj.get("enum") {
        if !options.contains(value) {
            return Err(format!("{at}: {value} not in {options:?}"));
        }
    }
    if let Some(Value::Array(options)) = obj.get("oneOf") {
        let hits = options.iter().filter(|s| validate(s, value, at).is_ok()).count();
        if hits != 1 {
            return Err(format!("{at}: {hits} oneOf branches match {value}"));
        }
    }
    if let Some(x) = value.as_f64() {
        if obj.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m) {
            return Err(format!("{at}: {x} below minimum"));
        }
        if obj.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m) {
            return Err(format!("{at}: {x} above maximum"));
        }
    }
    if let (Some(Value::String(p)), Some(s)) = (obj.get("pattern"), value.as_str()) {
        assert_eq!(p, "^[0-9a-f]{64}$", "validator only knows the digest pattern");
        if s.len() != 64 || !s.chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)) {
            return Err(format!("{at}: {s} is not a sha256 digest"));
        }
    }
    if let Some(map) = value.as_object() {
        if let Some(Value::Array(req)) = obj.get("required") {
            for r in req {
                let key = r.as_str().unwrap();
                if !map.contains_key(key) {
                    return Err(format!("{at}: missing {key}"));
                }
            }
        }
        let props = obj.get("properties").and_then(Value::as_object);
        for (k, v) in map {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, v, &format!("{at}.{k}"))?,
                None => match obj.get("additionalProperties") {
                    Some(Value::Bool(false)) => return Err(format!("{at}: unexpected key {k}")),
                    Some(s @ Value::Object(_)) => validate(s, v, &format!("{at}.{k}"))?,
                    _ => {}
                },
            }
        }
    }
    if let (Some(items), Some(arr)) = (obj.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate(items, v, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        "string" => v.is_string(),
        "array" => v.is_array(),
        "object" => v.is_object(),
        _ => false,
    }
}
