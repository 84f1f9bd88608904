//! Deterministic text output: number formatting and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// 15 significant digits in scientific notation, `.` as decimal separator.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v == 0.0 {
        // Normalizes -0.0 so identical trajectories print identically.
        "0.00000000000000e0".to_string()
    } else {
        format!("{v:.14e}")
    }
}

/// Builds a CSV document in memory.
#[derive(Debug, Default, Clone)]
pub struct CsvTable {
    buf: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row_nums(&mut self, values: &[f64]) {
        let line: Vec<String> = values.iter().map(|v| fmt_num(*v)).collect();
        self.buf.push_str(&line.join(","));
        self.buf.push('\n');
    }

    /// Row with leading text cells followed by numbers.
    pub fn row_mixed(&mut self, text: &[&str], values: &[f64]) {
        let mut cells: Vec<String> = text.iter().map(|s| s.to_string()).collect();
        cells.extend(values.iter().map(|v| fmt_num(*v)));
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

/// Creates `dir` if needed and checks it accepts files.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    let unwritable = |reason: String| Error::OutputDirUnwritable {
        path: dir.display().to_string(),
        reason,
    };
    fs::create_dir_all(dir).map_err(|e| unwritable(e.to_string()))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| unwritable(e.to_string()))?;
    fs::remove_file(&probe).map_err(|e| unwritable(e.to_string()))?;
    Ok(())
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<PathBuf> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(path.to_path_buf())
}
