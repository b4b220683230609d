use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `key: value` lines.
    Text,
    Csv,
    Json,
}

/// Version tag written above every CSV table.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Where and how results are written.
#[derive(Clone, Debug)]
pub struct Sink {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>, format: Option<Format>) -> Self {
        Self { dir, format }
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    /// File `name` inside the output directory, or stdout without one.
    pub fn open(&self, name: &str) -> Result<Box<dyn Write>> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                Ok(Box::new(BufWriter::new(file)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }
}

/// Writes `rows` as CSV below a `# spmv-bench <table> v<N>` line.
pub fn write_csv<T: Serialize>(mut w: impl Write, table: &str, rows: &[T]) -> Result<()> {
    writeln!(w, "# spmv-bench {table} v{CSV_SCHEMA_VERSION}")?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// One `key: value` line per field of a flat record, in declaration order.
pub fn write_text<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    let serde_json::Value::Object(map) = serde_json::to_value(value)? else {
        anyhow::bail!("text output needs a flat record");
    };
    for (k, v) in map {
        writeln!(w, "{k}: {v}")?;
    }
    Ok(())
}

/// Writes a single-record result in the requested format.
pub fn write_record<T: Serialize>(w: impl Write, table: &str, format: Format, value: &T) -> Result<()> {
    match format {
        Format::Text => write_text(w, value),
        Format::Csv => write_csv(w, table, std::slice::from_ref(value)),
        Format::Json => write_json(w, value),
    }
}

/// Writes a table in the requested format (text falls back to CSV).
pub fn write_table<T: Serialize>(w: impl Write, table: &str, format: Format, rows: &[T]) -> Result<()> {
    match format {
        Format::Text | Format::Csv => write_csv(w, table, rows),
        Format::Json => write_json(w, &rows),
    }
}
