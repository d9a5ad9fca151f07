use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::fmt_real;

/// A table cell. Integers are written in decimal, reals with 17 significant digits.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(u64),
    Real(f64),
}

impl Cell {
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Int(v) => v as f64,
            Cell::Real(v) => v,
        }
    }

    fn render(self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => fmt_real(v),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if let Ok(v) = s.parse::<u64>() {
            return Ok(Cell::Int(v));
        }
        s.parse::<f64>()
            .map(Cell::Real)
            .map_err(|_| Error::Config(format!("cannot parse table cell `{s}`")))
    }
}

/// Bitwise equality, so `NaN` cells compare equal to themselves.
impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Real(a), Cell::Real(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                what: "row length vs table columns",
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }
}

pub fn write_csv<W: Write>(table: &Table, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    out.write_record(&table.columns)?;
    for row in &table.rows {
        out.write_record(row.iter().map(|c| c.render()))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `table` to `path` as RFC 4180 CSV (CRLF line endings, header row).
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(path)?;
    write_csv(table, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(r: R) -> Result<Table> {
    let mut reader = csv::Reader::from_reader(r);
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut table = Table::new(columns);
    for record in reader.records() {
        let record = record?;
        let row = record.iter().map(Cell::parse).collect::<Result<Vec<_>>>()?;
        table.push(row)?;
    }
    Ok(table)
}
