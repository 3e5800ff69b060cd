//! Run directories: manifest, logs, checkpoints and reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use factprobe::metrics::{self, EvalReport, ReportFormat};
use serde::Serialize;

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<PathBuf> {
        let mut text = String::new();
        for item in items {
            text.push_str(&serde_json::to_string(item)?);
            text.push('\n');
        }
        self.write(name, text)
    }

    /// Writes `report.jsonl` and `report.txt`, and returns the rendering for
    /// the requested format.
    pub fn write_reports(&self, reports: &[EvalReport], format: ReportFormat) -> Result<String> {
        let records = metrics::report(reports, ReportFormat::Records);
        let text = metrics::report(reports, ReportFormat::Text);
        self.write("report.jsonl", &records)?;
        self.write("report.txt", &text)?;
        Ok(match format {
            ReportFormat::Records => records,
            ReportFormat::Text => text,
        })
    }
}
