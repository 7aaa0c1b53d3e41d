use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, serde_json::Value::Number),
            Cell::Int(i) => (*i).into(),
            Cell::Text(s) => s.clone().into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Ordered `key value` pairs written ahead of the data.
pub type Provenance = Vec<(&'static str, String)>;

pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn render(table: &Table, prov: &Provenance, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut out = Vec::new();
            for (k, v) in prov {
                writeln!(out, "# {k}: {v}").expect("write to memory");
            }
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&table.columns).expect("write to memory");
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv)).expect("write to memory");
            }
            w.into_inner().expect("flush to memory")
        }
        Format::Json => {
            let prov: serde_json::Map<_, _> = prov.iter().map(|(k, v)| (k.to_string(), v.clone().into())).collect();
            let points: Vec<serde_json::Value> = table
                .rows
                .iter()
                .map(|r| {
                    let obj: serde_json::Map<_, _> =
                        table.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                    obj.into()
                })
                .collect();
            let doc = serde_json::json!({ "provenance": prov, "points": points });
            let mut out = serde_json::to_vec_pretty(&doc).expect("serialise json");
            out.push(b'\n');
            out
        }
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn partial_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    s.into()
}
