//! Plain-text storage for matrices and signal sets.
//!
//! A matrix file is a header line `rows cols` followed by `rows` lines of
//! whitespace-separated values in row-major order. Values are written with
//! Rust's shortest round-trip formatting, so a save/load cycle reproduces
//! every `f64` bit for bit.
//!
//! A signal-set directory holds one matrix file per grid point
//! (`k00001.mat`, `k00002.mat`, ...) and a `grid.mat` row vector with the
//! grid times. A set can also be stored as a single CSV archive with columns
//! `k,row,col,value` (1-based indices, uniform grid implied). Grayscale PGM
//! (P2) images load as one ensemble each, with image rows as matrix rows.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::signal::{SignalSet, TimeGrid};

pub const GRID_FILE: &str = "grid.mat";

pub fn format_matrix(a: &Matrix) -> String {
    let mut out = String::with_capacity(a.len() * 20 + 16);
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for row in a.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix<W: Write>(w: &mut W, a: &Matrix) -> std::io::Result<()> {
    w.write_all(format_matrix(a).as_bytes())
}

/// Line source that remembers line numbers for error messages.
pub(crate) struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        Lines {
            path,
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank line, with its 1-based number.
    pub(crate) fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.inner
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty())
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_line().ok_or_else(|| {
            Error::parse(
                self.path,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    pub(crate) fn error(&self, line: usize, message: impl std::fmt::Display) -> Error {
        Error::parse(self.path, format!("line {line}: {message}"))
    }

    pub(crate) fn read_matrix(&mut self) -> Result<Matrix> {
        let (ln, header) = self.expect_line("a matrix header")?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.error(ln, format!("bad matrix header `{header}`")))?;
        let [rows, cols] = dims[..] else {
            return Err(self.error(
                ln,
                format!("matrix header needs `rows cols`, got `{header}`"),
            ));
        };
        if rows == 0 || cols == 0 {
            return Err(self.error(ln, "matrix dimensions must be positive"));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = self.expect_line("a matrix row")?;
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.error(ln, format!("bad number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(self.error(ln, format!("non-finite value `{tok}`")));
                }
                values.push(v);
            }
            if values.len() - before != cols {
                return Err(self.error(
                    ln,
                    format!("expected {cols} values, found {}", values.len() - before),
                ));
            }
        }
        Ok(Matrix::from_row_slice(rows, cols, &values))
    }
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = Lines::new(path, text);
    let m = lines.read_matrix()?;
    if let Some((ln, _)) = lines.next_line() {
        return Err(lines.error(ln, "trailing content after matrix"));
    }
    Ok(m)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    parse_matrix(&read_text(path)?, path)
}

pub fn save_matrix(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    write_text(path.as_ref(), &format_matrix(a))
}

/// File name of the ensemble at 0-based grid index `k`.
pub fn ensemble_file_name(k: usize) -> String {
    format!("k{:05}.mat", k + 1)
}

pub fn write_set_dir(dir: impl AsRef<Path>, set: &SignalSet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = Matrix::from_row_slice(1, set.len(), set.grid().taus());
    save_matrix(dir.join(GRID_FILE), &grid)?;
    for (k, e) in set.ensembles().iter().enumerate() {
        save_matrix(dir.join(ensemble_file_name(k)), e)?;
    }
    Ok(())
}

fn sorted_files(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_str().is_some_and(&keep) {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_set_dir(dir: impl AsRef<Path>) -> Result<SignalSet> {
    let dir = dir.as_ref();
    let files = sorted_files(dir, |n| n.starts_with('k') && n.ends_with(".mat"))?;
    if files.is_empty() {
        return Err(Error::parse(dir, "no ensemble files (k*.mat) found"));
    }
    let ensembles = files.iter().map(read_matrix).collect::<Result<Vec<_>>>()?;
    let grid_path = dir.join(GRID_FILE);
    let grid = if grid_path.exists() {
        let g = read_matrix(&grid_path)?;
        if g.nrows() != 1 {
            return Err(Error::parse(&grid_path, "grid must be a single row"));
        }
        TimeGrid::new(g.iter().copied().collect())?
    } else {
        TimeGrid::uniform(ensembles.len())?
    };
    SignalSet::new(grid, ensembles)
}

pub fn write_set_csv(path: impl AsRef<Path>, set: &SignalSet) -> Result<()> {
    let mut out = String::from("k,row,col,value\n");
    for (k, e) in set.ensembles().iter().enumerate() {
        for r in 0..e.nrows() {
            for c in 0..e.ncols() {
                let _ = writeln!(out, "{},{},{},{}", k + 1, r + 1, c + 1, e[(r, c)]);
            }
        }
    }
    write_text(path.as_ref(), &out)
}

pub fn read_set_csv(path: impl AsRef<Path>) -> Result<SignalSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut records: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('k')) {
            continue;
        }
        let bad = || Error::parse(path, format!("line {}: bad record `{line}`", i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [k, r, c, v] = fields[..] else {
            return Err(bad());
        };
        let idx = |s: &str| s.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        let value: f64 = v.parse().map_err(|_| bad())?;
        if !value.is_finite() {
            return Err(bad());
        }
        records.push((idx(k)? - 1, idx(r)? - 1, idx(c)? - 1, value));
    }
    let n = records.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let rows = records.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let cols = records.iter().map(|r| r.2 + 1).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::parse(path, "archive holds no records"));
    }
    if records.len() != n * rows * cols {
        return Err(Error::parse(
            path,
            format!(
                "expected {} records for {n} ensembles of {rows}x{cols}, found {}",
                n * rows * cols,
                records.len()
            ),
        ));
    }
    let mut ensembles = vec![Matrix::from_element(rows, cols, f64::NAN); n];
    for (k, r, c, v) in records {
        ensembles[k][(r, c)] = v;
    }
    if ensembles.iter().any(|e| e.iter().any(|v| v.is_nan())) {
        return Err(Error::parse(
            path,
            "archive has duplicate or missing entries",
        ));
    }
    SignalSet::on_uniform_grid(ensembles)
}

/// Reads an ASCII (P2) PGM image as a `height x width` matrix of gray levels.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(Error::parse(path, "not an ASCII PGM (missing P2 magic)"));
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        *slot = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::parse(path, format!("bad PGM {name}")))?;
    }
    let [width, height, maxval] = header;
    let values = tokens
        .map(|t| match t.parse::<usize>() {
            Ok(v) if v <= maxval => Ok(v as f64),
            _ => Err(Error::parse(path, format!("bad pixel value `{t}`"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != width * height {
        return Err(Error::parse(
            path,
            format!("expected {} pixels, found {}", width * height, values.len()),
        ));
    }
    Ok(Matrix::from_row_slice(height, width, &values))
}

/// Every `*.pgm` file in `dir`, in file-name order, as one signal set.
pub fn read_pgm_dir(dir: impl AsRef<Path>) -> Result<SignalSet> {
    let dir = dir.as_ref();
    let files = sorted_files(dir, |n| n.ends_with(".pgm"))?;
    if files.len() < 2 {
        return Err(Error::parse(dir, "need at least two .pgm images"));
    }
    let ensembles = files.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
    SignalSet::on_uniform_grid(ensembles)
}
