use std::fmt;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Real(x) => write!(f, "{x:.9e}"),
            Cell::Int(n) => write!(f, "{n}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Flag(b) => write!(f, "{b}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Flag(b)
    }
}

/// Rows of typed cells plus `key: value` provenance lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> CliResult<()> {
        if row.len() != self.columns.len() {
            return Err(CliError::Numerical(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.provenance.push((key.to_string(), value.into()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn real(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            Cell::Real(x) => Some(*x),
            Cell::Int(n) => Some(*n as f64),
            _ => None,
        }
    }

    pub fn text(&self, row: usize, name: &str) -> Option<String> {
        Some(self.rows.get(row)?.get(self.column(name)?)?.to_string())
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut out = String::new();
        for (k, v) in &self.provenance {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        writer.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            writer
                .write_record(row.iter().map(|c| c.to_string()))
                .map_err(csv_err)?;
        }
        let body = writer.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
        out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        Ok(out)
    }

    pub fn emit_csv(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// A CSV file read back as text cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedTable {
    pub provenance: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedTable {
    pub fn provenance_value(&self, key: &str) -> Option<&str> {
        self.provenance.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn parse_csv(text: &str) -> CliResult<ParsedTable> {
    let bad = |msg: String| CliError::Schema(format!("malformed CSV: {msg}"));
    let mut provenance = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim_start();
        let (k, v) = body.split_once(": ").ok_or_else(|| bad(format!("comment line `{line}`")))?;
        provenance.push((k.to_string(), v.to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(ParsedTable { provenance, columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new(&["eps", "mode", "n", "ok"]);
        t.note("seed", "7");
        t.push(vec![0.005.into(), "lab".into(), 3usize.into(), true.into()]).unwrap();
        t.push(vec![(-0.279_309_522_6).into(), "tuned".into(), 4usize.into(), false.into()])
            .unwrap();
        t
    }

    #[test]
    fn reals_use_ten_significant_digits() {
        assert_eq!(Cell::Real(-0.2793095226112).to_string(), "-2.793095226e-1");
        assert_eq!(Cell::Real(1.0).to_string(), "1.000000000e0");
    }

    #[test]
    fn round_trip_reproduces_cells() {
        let t = sample();
        let parsed = parse_csv(&t.to_csv().unwrap()).unwrap();
        assert_eq!(parsed.columns, t.columns);
        assert_eq!(parsed.provenance, t.provenance);
        for (got, want) in parsed.rows.iter().zip(&t.rows) {
            let want: Vec<String> = want.iter().map(|c| c.to_string()).collect();
            assert_eq!(got, &want);
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut t = ResultTable::new(&["a", "b"]);
        assert!(t.push(vec![1.0.into()]).is_err());
    }
}
