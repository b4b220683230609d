//! Matrix Market coordinate files (`real general` and `real symmetric`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sparse::CrsMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Parser {
    path: Option<PathBuf>,
}

impl Parser {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn header(&self, line: &str) -> Result<Symmetry> {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
        if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
            return Err(self.err(1, "missing %%MatrixMarket banner"));
        }
        let [_, object, format, field, symmetry] = tokens.as_slice() else {
            return Err(self.err(1, format!("banner needs 5 fields, found {}", tokens.len())));
        };
        if object != "matrix" {
            return Err(self.err(1, format!("unsupported object {object:?}")));
        }
        if format != "coordinate" {
            return Err(self.err(1, format!("unsupported format {format:?}, only coordinate is read")));
        }
        if field != "real" {
            return Err(self.err(1, format!("unsupported field {field:?}, only real is read")));
        }
        match symmetry.as_str() {
            "general" => Ok(Symmetry::General),
            "symmetric" => Ok(Symmetry::Symmetric),
            other => Err(self.err(1, format!("unsupported symmetry {other:?}"))),
        }
    }
}

fn field<T: std::str::FromStr>(p: &Parser, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| p.err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| p.err(line, format!("invalid {what} {tok:?}")))
}

/// Parses Matrix Market text. `path` only labels errors.
pub fn parse_matrix_market<R: BufRead>(reader: R, path: Option<&Path>) -> Result<CrsMatrix> {
    let p = Parser {
        path: path.map(Path::to_path_buf),
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let symmetry = match lines.next() {
        Some((_, line)) => p.header(&line?)?,
        None => return Err(p.err(1, "empty file")),
    };

    let mut content = lines.filter_map(|(n, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('%') => None,
        other => Some((n, other)),
    });

    let (size_line, size) = content.next().ok_or_else(|| p.err(2, "missing size line"))?;
    let size = size?;
    let mut toks = size.split_whitespace();
    let n_rows: usize = field(&p, size_line, toks.next(), "row count")?;
    let n_cols: usize = field(&p, size_line, toks.next(), "column count")?;
    let nnz: usize = field(&p, size_line, toks.next(), "entry count")?;
    if toks.next().is_some() {
        return Err(p.err(size_line, "size line has extra fields"));
    }
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(p.err(size_line, format!("symmetric matrix must be square, got {n_rows}x{n_cols}")));
    }

    let mut entries = Vec::with_capacity(if symmetry == Symmetry::Symmetric { 2 * nnz } else { nnz });
    let mut last_line = size_line;
    for k in 0..nnz {
        let Some((line, text)) = content.next() else {
            return Err(p.err(last_line + 1, format!("expected {nnz} entries, file ends after {k}")));
        };
        let text = text?;
        last_line = line;
        let mut toks = text.split_whitespace();
        let i: usize = field(&p, line, toks.next(), "row index")?;
        let j: usize = field(&p, line, toks.next(), "column index")?;
        let v: f64 = field(&p, line, toks.next(), "value")?;
        if toks.next().is_some() {
            return Err(p.err(line, "entry has extra fields"));
        }
        if i == 0 || i > n_rows || j == 0 || j > n_cols {
            return Err(p.err(line, format!("index ({i}, {j}) outside 1..={n_rows} x 1..={n_cols}")));
        }
        entries.push((i - 1, j - 1, v));
        if symmetry == Symmetry::Symmetric && i != j {
            entries.push((j - 1, i - 1, v));
        }
    }
    if let Some((line, _)) = content.next() {
        return Err(p.err(line, format!("data after the declared {nnz} entries")));
    }
    CrsMatrix::from_triplets(n_rows, n_cols, &entries)
}

/// Reads a Matrix Market file. Symmetric files are expanded to general
/// storage; duplicate entries are kept.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CrsMatrix> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file), Some(path))
}

/// Writes `a` as `real general` with 1-based indices, row by row.
pub fn write_matrix_market_to<W: Write>(a: &CrsMatrix, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&c, v) in cols.iter().zip(vals) {
            writeln!(out, "{} {} {:e}", i + 1, c as usize + 1, v)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix_market(a: &CrsMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market_to(a, BufWriter::new(File::create(path)?))
}
