//! Canonical serialization: floats rounded to 12 significant digits, so
//! reruns produce byte-identical documents.

use serde::Serialize;
use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in `value` in place. Non-finite numbers are already
/// `null` in a [`Value`].
pub fn canonicalize(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_significant).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize),
        Value::Object(map) => map.values_mut().for_each(canonicalize),
        _ => {}
    }
}

pub fn to_canonical_value<T: Serialize>(v: &T) -> serde_json::Result<Value> {
    let mut value = serde_json::to_value(v)?;
    canonicalize(&mut value);
    Ok(value)
}

pub fn to_canonical_string<T: Serialize>(v: &T) -> serde_json::Result<String> {
    serde_json::to_string_pretty(&to_canonical_value(v)?)
}

/// Formats a float for CSV output with 12 significant digits.
pub fn csv_float(x: f64) -> String {
    format!("{}", round_significant(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_significant(-10.497_900_000_000_1), -10.4979);
        assert_eq!(round_significant(0.0), 0.0);
        assert!(round_significant(f64::NAN).is_nan());
        assert_eq!(csv_float(2.0), "2");
    }

    #[test]
    fn canonical_json_rounds_nested_floats() {
        let v = serde_json::json!({"a": [0.1 + 0.2, 1], "b": {"c": 1.0 / 7.0}});
        let s = to_canonical_string(&v).unwrap();
        assert!(s.contains("0.3"));
        assert!(!s.contains("0.30000000000000004"));
        assert!(s.contains("0.142857142857"));
    }
}
