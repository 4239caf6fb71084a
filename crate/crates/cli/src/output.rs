//! CSV and summary files with the run configuration in their header.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use blowfly::scenario::ScenarioConfig;

use crate::error::CliError;

/// Comment block written at the top of every output file: the exact
/// configuration as `# ` lines followed by `#! key = value` metadata.
pub struct Header {
    text: String,
}

impl Header {
    pub fn new(config: &ScenarioConfig) -> Result<Self, CliError> {
        let body = toml::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
        let mut text = String::new();
        for line in body.lines() {
            text.push_str("# ");
            text.push_str(line);
            text.push('\n');
        }
        text.push_str(&format!("#! generator = \"blowfly {}\"\n", env!("CARGO_PKG_VERSION")));
        Ok(Self { text })
    }

    pub fn meta(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.text.push_str(&format!("#! {key} = {value}\n"));
        self
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub struct CsvOutput {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOutput {
    pub fn create(path: PathBuf, header: &Header, columns: &[&str]) -> Result<Self, CliError> {
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut buf = BufWriter::new(file);
        buf.write_all(header.as_str().as_bytes()).map_err(|e| CliError::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(columns).map_err(|e| csv_error(&path, e))?;
        Ok(Self { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn numbers(&mut self, values: &[f64]) -> Result<(), CliError> {
        self.row(values.iter().map(|v| v.to_string()))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// Flat `key = value` summary, prefixed by the header.
pub fn write_summary(path: PathBuf, header: &Header, entries: &[(String, String)]) -> Result<PathBuf, CliError> {
    let mut text = header.as_str().to_string();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
