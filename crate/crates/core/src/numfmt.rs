//! Fixed-width float output: 17 significant digits, so every `f64` round-trips.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// `x` as `d.dddddddddddddddde±x`, or `null` when not finite.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn raw(text: String) -> Box<RawValue> {
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn serialize_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(format_f64(*x)).serialize(s)
}

pub fn serialize_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    x.map(|v| raw(format_f64(v))).serialize(s)
}

pub fn serialize_vec_f64<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    xs.iter().map(|&v| raw(format_f64(v))).collect::<Vec<_>>().serialize(s)
}

pub fn serialize_matrix<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    rows.iter()
        .map(|row| row.iter().map(|&v| raw(format_f64(v))).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .serialize(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Wrap {
        #[serde(serialize_with = "serialize_f64")]
        x: f64,
        #[serde(serialize_with = "serialize_vec_f64")]
        v: Vec<f64>,
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let text = format_f64(x);
            let mantissa = text.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
            assert_eq!(text.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_f64(f64::NAN), "null");
    }

    #[test]
    fn json_output_parses() {
        let json = serde_json::to_string(&Wrap {
            x: 0.1,
            v: vec![1.0, -3.0],
        })
        .unwrap();
        assert_eq!(
            json,
            r#"{"x":1.0000000000000001e-1,"v":[1.0000000000000000e0,-3.0000000000000000e0]}"#
        );
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }
}
