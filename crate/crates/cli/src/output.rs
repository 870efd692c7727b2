use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Encoding of tabular outputs. Reports and models are always JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// The `--out` directory.
pub struct OutDir {
    dir: PathBuf,
    format: Format,
}

impl OutDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::from(e).at(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::from(e).at(&path))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes `<stem>.csv` or `<stem>.json` depending on `--format`.
    /// CSV rows must be flat records; `header` is written on its own when
    /// there are no rows.
    pub fn write_table<T: Serialize>(
        &self,
        stem: &str,
        header: &[&str],
        rows: &[T],
    ) -> Result<PathBuf> {
        let name = format!("{stem}.{}", self.format.ext());
        match self.format {
            Format::Json => self.write_json(&name, rows),
            Format::Csv => {
                let path = self.path(&name);
                let mut w =
                    csv::Writer::from_path(&path).map_err(|e| CliError::from(e).at(&path))?;
                if rows.is_empty() {
                    w.write_record(header)
                        .map_err(|e| CliError::from(e).at(&path))?;
                }
                for r in rows {
                    w.serialize(r).map_err(|e| CliError::from(e).at(&path))?;
                }
                w.flush().map_err(|e| CliError::from(e).at(&path))?;
                Ok(path)
            }
        }
    }
}

impl OutDir {
    /// Like [`OutDir::write_table`] but with a caller-supplied CSV writer.
    pub fn write_custom<T, F>(&self, stem: &str, json: &T, csv: F) -> Result<PathBuf>
    where
        T: Serialize + ?Sized,
        F: FnOnce(fs::File) -> Result<()>,
    {
        let name = format!("{stem}.{}", self.format.ext());
        match self.format {
            Format::Json => self.write_json(&name, json),
            Format::Csv => {
                let path = self.path(&name);
                let file = fs::File::create(&path).map_err(|e| CliError::from(e).at(&path))?;
                csv(file).map_err(|e| e.at(&path))?;
                Ok(path)
            }
        }
    }
}

pub fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}
