//! Text serialization shared by all emitters.

use std::fmt::Write as _;

/// 17 significant digits, round-trip exact. Infinities print as `inf`/`-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Parses what [`fmt_f64`] writes.
pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "-inf" => Some(f64::NEG_INFINITY),
        "inf" => Some(f64::INFINITY),
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

/// Minimal CSV builder; every field written here is numeric or a plain token.
#[derive(Debug, Default, Clone)]
pub struct CsvBuilder {
    buf: String,
}

impl CsvBuilder {
    pub fn with_header<S: AsRef<str>>(cols: &[S]) -> Self {
        let mut b = CsvBuilder::default();
        b.row_str(cols);
        b
    }

    pub fn row_str<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(f.as_ref());
        }
        self.buf.push('\n');
    }

    /// Integer key columns followed by float columns.
    pub fn row(&mut self, keys: &[i64], values: &[f64]) {
        let mut first = true;
        for k in keys {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{k}");
        }
        for v in values {
            if !first {
                self.buf.push(',');
            }
            first = false;
            self.buf.push_str(&fmt_f64(*v));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sentinels() {
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(parse_f64("-inf"), Some(f64::NEG_INFINITY));
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    proptest! {
        #[test]
        fn round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }
}
