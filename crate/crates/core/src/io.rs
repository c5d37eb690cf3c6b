//! CSV and JSON output with 17 significant digits, so files round-trip
//! bit-exactly and are byte-identical across runs.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::flow::FlowSample;
use crate::heat::KernelSample;
use crate::hinged::TaylorTable;

/// `v` in scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Digits<F>(F);

impl<F: Formatter> Formatter for Digits<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            w.write_all(fmt17(v).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn to_json_with<T: Serialize, F: Formatter>(v: &T, f: F) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits(f));
    v.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// Pretty-printed JSON with 17-digit floats; non-finite floats become null.
pub fn to_json<T: Serialize>(v: &T) -> String {
    to_json_with(v, PrettyFormatter::new())
}

/// Single-line JSON with 17-digit floats.
pub fn to_json_line<T: Serialize>(v: &T) -> String {
    to_json_with(v, CompactFormatter)
}

/// Trajectory CSV: `t,q1..qn,p1..pn,h`.
pub fn trajectory_csv(samples: &[FlowSample]) -> String {
    let n = samples.first().map_or(0, |s| s.q.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",q{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",p{i}"));
    }
    out.push_str(",h\n");
    for s in samples {
        out.push_str(&fmt17(s.t));
        for v in s.q.iter().chain(&s.p) {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push(',');
        out.push_str(&fmt17(s.h));
        out.push('\n');
    }
    out
}

/// Kernel sample CSV: `t,value,log_value,method,est_error`.
pub fn kernel_csv(samples: &[KernelSample]) -> String {
    let mut out = String::from("t,value,log_value,method,est_error\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt17(s.t),
            fmt17(s.value),
            fmt17(s.log_value),
            s.method.as_str(),
            fmt17(s.est_error)
        ));
    }
    out
}

/// Taylor table CSV: `monomial,coefficient,uncertainty`.
pub fn taylor_csv(table: &TaylorTable) -> String {
    let mut out = String::from("monomial,coefficient,uncertainty\n");
    for t in &table.terms {
        out.push_str(&format!("{},{},{}\n", t.label(), fmt17(t.coefficient), fmt17(t.uncertainty)));
    }
    out
}

/// Parse kernel CSV rows back into `(t, log_value)` pairs.
pub fn read_log_samples(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty sample file")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let ti = cols.iter().position(|c| *c == "t").ok_or("no t column")?;
    let li = cols.iter().position(|c| *c == "log_value").ok_or("no log_value column")?;
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let parse = |i: usize| -> Result<f64, String> {
                f.get(i)
                    .ok_or(format!("row {} is short", k + 2))?
                    .trim()
                    .parse()
                    .map_err(|e| format!("row {}: {e}", k + 2))
            };
            Ok((parse(ti)?, parse(li)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, std::f64::consts::PI, -1e-300, 12345.678] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 17);
        }
    }

    #[test]
    fn json_uses_fixed_digits() {
        #[derive(Serialize)]
        struct R {
            d: f64,
            n: usize,
        }
        let s = to_json_line(&R { d: 0.5, n: 3 });
        assert_eq!(s, r#"{"d":5.0000000000000000e-1,"n":3}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["d"].as_f64(), Some(0.5));
    }

    #[test]
    fn csv_round_trip() {
        let text = "t,value,log_value,method,est_error\n1e-1,2,0.5,closed_form,0\n";
        assert_eq!(read_log_samples(text).unwrap(), vec![(0.1, 0.5)]);
    }
}
