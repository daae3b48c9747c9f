//! Tables and number formatting shared by the CSV and JSON writers.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Formats with at least ten significant digits; exact zeros and integers
/// print without exponent noise.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..15).contains(&magnitude) {
        let decimals = (9 - magnitude).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.9e}", x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// A rectangular table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// RFC 4180 CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// One `{x, point, se, n}` entry of a JSON summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointEstimate {
    pub x: Value,
    pub point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    pub n: usize,
}

/// The JSON summary written next to each CSV table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub params: Value,
    pub estimates: Vec<PointEstimate>,
    pub fitted: Value,
    pub manifest: Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1.5), "1.5");
        assert_eq!(fmt_float(11.69987532345823), "11.69987532");
        assert_eq!(fmt_float(-2.263383013451), "-2.263383013");
        assert_eq!(fmt_float(1.234567891234e-7), "1.234567891e-7");
        assert_eq!(fmt_float(148.4131591025766), "148.4131591");
    }

    #[test]
    fn csv_quoting_and_missing_cells() {
        let mut t = Table::new(&["label", "value", "se"]);
        t.push(vec!["a,b".into(), 0.5.into(), None.into()]);
        t.push(vec!["say \"hi\"".into(), 2usize.into(), Some(0.25).into()]);
        let text = t.to_csv_string().unwrap();
        assert_eq!(text, "label,value,se\n\"a,b\",0.5,\n\"say \"\"hi\"\"\",2,0.25\n");
    }
}
