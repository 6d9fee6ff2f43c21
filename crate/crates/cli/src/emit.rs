//! CSV and JSON emission with lossless float formatting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

/// 17-significant-digit scientific notation: round-trips through
/// `f64::from_str` without loss.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    writer: BufWriter<File>,
    path: String,
}

impl Csv {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        let mut csv = Self {
            writer: BufWriter::new(file),
            path: path.display().to_string(),
        };
        csv.raw_row(header.iter().map(|s| s.to_string()))?;
        Ok(csv)
    }

    pub fn raw_row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<()> {
        let line = fields.into_iter().collect::<Vec<_>>().join(",");
        writeln!(self.writer, "{line}").with_context(|| format!("writing {}", self.path))
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.raw_row(values.iter().map(|v| fmt(*v)))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer
            .flush()
            .with_context(|| format!("flushing {}", self.path))
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON serializes");
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
