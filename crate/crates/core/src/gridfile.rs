//! `EMBERGRID v1` text raster format.
//!
//! ```text
//! EMBERGRID v1
//! rows <R> cols <C> dtype <f32|i32>
//! <C whitespace-separated values>   (R lines, northern row first)
//! ```
//!
//! Writers emit single spaces between values and `\n` line endings, with
//! `f32` values in Rust's shortest round-trip notation, so equal grids always
//! serialize to identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::Grid;

pub const MAGIC: &str = "EMBERGRID v1";

#[derive(Debug, Error)]
pub enum GridFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed grid file: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: non-finite value at row {row}, col {col}")]
    NonFinite { path: PathBuf, row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    I32,
}

impl DType {
    fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::I32 => "i32",
        }
    }
}

/// A grid as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum RasterGrid {
    F32(Grid<f32>),
    I32(Grid<i32>),
}

impl RasterGrid {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            RasterGrid::F32(g) => g.dims(),
            RasterGrid::I32(g) => g.dims(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            RasterGrid::F32(_) => DType::F32,
            RasterGrid::I32(_) => DType::I32,
        }
    }

    pub fn to_f64(&self) -> Grid<f64> {
        match self {
            RasterGrid::F32(g) => g.map(|&v| f64::from(v)),
            RasterGrid::I32(g) => g.map(|&v| f64::from(v)),
        }
    }
}

pub fn encode_f32(grid: &Grid<f32>) -> String {
    encode(grid, DType::F32)
}

pub fn encode_i32(grid: &Grid<i32>) -> String {
    encode(grid, DType::I32)
}

fn encode<T: std::fmt::Display>(grid: &Grid<T>, dtype: DType) -> String {
    let mut out = String::with_capacity(32 + grid.len() * 4);
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "rows {} cols {} dtype {}", grid.rows(), grid.cols(), dtype.as_str());
    for r in 0..grid.rows() {
        for (i, v) in grid.row(r).iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_f32(path: &Path, grid: &Grid<f32>) -> std::io::Result<()> {
    fs::write(path, encode_f32(grid))
}

pub fn write_i32(path: &Path, grid: &Grid<i32>) -> std::io::Result<()> {
    fs::write(path, encode_i32(grid))
}

pub fn read(path: &Path) -> Result<RasterGrid, GridFileError> {
    let text = fs::read_to_string(path).map_err(|source| GridFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text).map_err(|e| match e {
        ParseError::Malformed(reason) => GridFileError::Malformed {
            path: path.to_path_buf(),
            reason,
        },
        ParseError::NonFinite(row, col) => GridFileError::NonFinite {
            path: path.to_path_buf(),
            row,
            col,
        },
    })
}

#[derive(Debug, PartialEq)]
pub enum ParseError {
    Malformed(String),
    NonFinite(usize, usize),
}

fn malformed(reason: impl Into<String>) -> ParseError {
    ParseError::Malformed(reason.into())
}

pub fn parse(text: &str) -> Result<RasterGrid, ParseError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim_end() == MAGIC => {}
        _ => return Err(malformed(format!("first line must be `{MAGIC}`"))),
    }
    let header = lines.next().ok_or_else(|| malformed("missing dimension header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols, dtype) = match fields.as_slice() {
        ["rows", r, "cols", c, "dtype", d] => {
            let rows: usize = r.parse().map_err(|_| malformed(format!("bad row count `{r}`")))?;
            let cols: usize = c.parse().map_err(|_| malformed(format!("bad col count `{c}`")))?;
            let dtype = match *d {
                "f32" => DType::F32,
                "i32" => DType::I32,
                other => return Err(malformed(format!("unsupported dtype `{other}`"))),
            };
            (rows, cols, dtype)
        }
        _ => return Err(malformed("header must read `rows <R> cols <C> dtype <f32|i32>`")),
    };
    if rows == 0 || cols == 0 {
        return Err(malformed("grid dimensions must be positive"));
    }

    let data_lines: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if data_lines.len() != rows {
        return Err(malformed(format!(
            "header declares {rows} rows but {} data rows follow",
            data_lines.len()
        )));
    }

    let mut f32s = Vec::new();
    let mut i32s = Vec::new();
    for (r, line) in data_lines.iter().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != cols {
            return Err(malformed(format!(
                "row {r} has {} values, expected {cols}",
                tokens.len()
            )));
        }
        for (c, tok) in tokens.iter().enumerate() {
            match dtype {
                DType::F32 => {
                    let v: f32 = tok
                        .parse()
                        .map_err(|_| malformed(format!("bad f32 `{tok}` at row {r}, col {c}")))?;
                    if !v.is_finite() {
                        return Err(ParseError::NonFinite(r, c));
                    }
                    f32s.push(v);
                }
                DType::I32 => {
                    let v: i32 = tok
                        .parse()
                        .map_err(|_| malformed(format!("bad i32 `{tok}` at row {r}, col {c}")))?;
                    i32s.push(v);
                }
            }
        }
    }
    Ok(match dtype {
        DType::F32 => RasterGrid::F32(Grid::from_vec(rows, cols, f32s).expect("sized")),
        DType::I32 => RasterGrid::I32(Grid::from_vec(rows, cols, i32s).expect("sized")),
    })
}
