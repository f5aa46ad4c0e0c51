use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// One CSV field. Floats are written with 17 significant digits so they
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Float(v) if v.is_finite() => write!(f, "{v:.16e}"),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s}"),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn write_csv<W: Write>(table: &Table, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", table.header.join(","))?;
    for row in &table.rows {
        let line: Vec<String> = row.iter().map(Cell::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

/// Header plus one line per row, LF endings.
pub fn emit_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_csv(table, BufWriter::new(file)).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only() {
        let mut buf = Vec::new();
        write_csv(&Table::new(["a", "b"]), &mut buf).unwrap();
        assert_eq!(buf, b"a,b\n");
    }

    #[test]
    fn float_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 0.98, 123456.789] {
            let s = Cell::Float(v).to_string();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(Cell::Float(0.5).to_string(), "5.0000000000000000e-1");
        assert_eq!(Cell::Empty.to_string(), "");
    }
}
