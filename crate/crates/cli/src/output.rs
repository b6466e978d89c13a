//! CSV emission. Every file starts with one `#` comment line carrying the
//! tool version and the full parameter set, followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{CliError, RunConfig};

pub fn provenance(cfg: &RunConfig) -> String {
    format!("# opo-cli {} {}", env!("CARGO_PKG_VERSION"), cfg.describe())
}

pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(dir: &Path, name: &str, cfg: &RunConfig, header: &[String]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "{}", provenance(cfg))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<(), CliError> {
        self.writer.write_record(values.iter().map(|v| v.to_string()))?;
        Ok(())
    }

    pub fn text_row<S: AsRef<[u8]>>(&mut self, values: &[S]) -> Result<(), CliError> {
        self.writer.write_record(values)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Value with `sig` significant figures, in fixed notation.
pub fn significant(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}
