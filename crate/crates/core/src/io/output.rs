//! CSV and JSON renderings of experiment results.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// 17 significant digits, so every `f64` survives a text round trip.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn to_csv<R: CsvRecord>(rows: &[R]) -> String {
    let mut out = R::HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.fields().join(","));
        out.push('\n');
    }
    out
}

pub fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(fs::write(dir.join(name), text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Row(usize, f64);

    impl CsvRecord for Row {
        const HEADER: &'static [&'static str] = &["n", "x"];
        fn fields(&self) -> Vec<String> {
            vec![self.0.to_string(), fmt_float(self.1)]
        }
    }

    #[test]
    fn csv_layout_and_precision() {
        let csv = to_csv(&[Row(3, 0.1), Row(4, 1.0 / 3.0)]);
        assert_eq!(csv, "n,x\n3,1.0000000000000001e-1\n4,3.3333333333333331e-1\n");
        let back: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
