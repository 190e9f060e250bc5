//! Report emission. JSON floats use 17 significant digits (lossless for `f64`,
//! fixed width so identical runs give identical bytes); non-finite values are `null`.

use std::io::{self, Write};
use std::str::FromStr;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::suite::Bundle;
use crate::CliError;

pub const SCHEMA: &str = include_str!("../schema/report.schema.json");
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Table => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            _ => Err(format!("unknown format {s}; use json, csv or table")),
        }
    }
}

/// Writes floats as `{:.16e}` and indents nested values by two spaces.
struct Sig17 {
    depth: usize,
    has_value: bool,
}

impl Sig17 {
    fn indent<W: ?Sized + Write>(&self, w: &mut W) -> io::Result<()> {
        for _ in 0..self.depth {
            w.write_all(b"  ")?;
        }
        Ok(())
    }

    fn float<W: ?Sized + Write>(w: &mut W, x: f64) -> io::Result<()> {
        if x.is_finite() {
            write!(w, "{x:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
}

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, x: f64) -> io::Result<()> {
        Self::float(w, x)
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, x: f32) -> io::Result<()> {
        Self::float(w, f64::from(x))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth -= 1;
        if self.has_value {
            w.write_all(b"\n")?;
            self.indent(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        w.write_all(if first { b"\n" } else { b",\n" })?;
        self.indent(w)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth -= 1;
        if self.has_value {
            w.write_all(b"\n")?;
            self.indent(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        w.write_all(if first { b"\n" } else { b",\n" })?;
        self.indent(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    #[serde(flatten)]
    bundle: &'a Bundle,
}

/// Serialises the bundle; identical bundles give identical bytes.
pub fn to_json(bundle: &Bundle) -> Result<String, CliError> {
    write_json(&Document { schema_version: SCHEMA_VERSION, bundle })
}

/// Serialises any value with the report float format, plus a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17 { depth: 0, has_value: false });
    value.serialize(&mut ser).map_err(|e| CliError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// The per-row fields shared by CSV and table output, read from a JSON bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub surface: String,
    pub theorem: String,
    pub resolution: u64,
    pub verdict: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub tol: Option<f64>,
    pub failed_hypotheses: Vec<String>,
}

pub fn summaries(doc: &Value) -> Result<Vec<Summary>, CliError> {
    let bad = |what: &str| CliError::Io(format!("malformed report bundle: {what}"));
    let rows = doc.get("rows").and_then(Value::as_array).ok_or_else(|| bad("missing rows"))?;
    rows.iter()
        .map(|row| {
            let rep = row.get("report").ok_or_else(|| bad("row without report"))?;
            let s =
                |v: Option<&Value>, what: &str| v.and_then(Value::as_str).map(String::from).ok_or_else(|| bad(what));
            let num = |k: &str| rep.get(k).and_then(Value::as_f64);
            let failed = rep
                .get("hypotheses")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("hypotheses"))?
                .iter()
                .filter(|h| h.get("satisfied").and_then(Value::as_bool) == Some(false))
                .filter_map(|h| h.get("name").and_then(Value::as_str).map(String::from))
                .collect();
            Ok(Summary {
                surface: s(row.get("surface"), "surface")?,
                theorem: s(row.get("theorem"), "theorem")?,
                resolution: row.get("resolution").and_then(Value::as_u64).ok_or_else(|| bad("resolution"))?,
                verdict: s(rep.get("verdict"), "verdict")?,
                lhs: num("lhs"),
                rhs: num("rhs"),
                margin: num("margin"),
                tol: num("tol"),
                failed_hypotheses: failed,
            })
        })
        .collect()
}

fn sig17(x: Option<f64>) -> String {
    x.map_or_else(String::new, |x| format!("{x:.16e}"))
}

pub fn to_csv(rows: &[Summary]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["surface", "theorem", "resolution", "verdict", "lhs", "rhs", "margin", "tol", "failed_hypotheses"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.surface.clone(),
            r.theorem.clone(),
            r.resolution.to_string(),
            r.verdict.clone(),
            sig17(r.lhs),
            sig17(r.rhs),
            sig17(r.margin),
            sig17(r.tol),
            r.failed_hypotheses.join("; "),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

pub fn to_table(rows: &[Summary]) -> String {
    let sci = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |x| format!("{x:.3e}"));
    let header = ["surface", "theorem", "n", "verdict", "lhs", "rhs", "margin", "tol"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.surface.clone(),
                r.theorem.clone(),
                r.resolution.to_string(),
                r.verdict.clone(),
                sci(r.lhs),
                sci(r.rhs),
                sci(r.margin),
                sci(r.tol),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header.map(String::from), &mut out);
    line(&width.map(|w| "-".repeat(w)), &mut out);
    for row in &body {
        line(row, &mut out);
    }
    out
}

/// Renders a JSON bundle (as written by [`to_json`]) in `format`.
pub fn render(json: &str, format: Format) -> Result<String, CliError> {
    let doc: Value = serde_json::from_str(json).map_err(|e| CliError::Io(format!("malformed report bundle: {e}")))?;
    let rows = summaries(&doc)?;
    if rows.is_empty() {
        return Err(CliError::Io("report bundle is empty".into()));
    }
    Ok(match format {
        Format::Json => json.to_string(),
        Format::Csv => to_csv(&rows)?,
        Format::Table => to_table(&rows),
    })
}
