use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Writes files into one directory, each through a temp file and a rename.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    fn put(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io(e)
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.put(name, bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &Csv) -> Result<(), CliError> {
        self.write(name, table.text.as_bytes())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// The manifest is not listed in itself.
    pub fn manifest(&self, m: &RunManifest) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(m).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.put("manifest.json", text.as_bytes())
    }
}

/// Round-trip float formatting: 17 significant digits, `.` decimal.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    text: String,
}

pub enum Cell {
    F(f64),
    U(u64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::U(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let line: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::F(x) => num(x),
                Cell::U(x) => x.to_string(),
                Cell::I(x) => x.to_string(),
                Cell::S(s) => s,
            })
            .collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub version: &'static str,
    pub subcommand: String,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 288.15, 6.02e23, -1e-300, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(vec![1.0.into(), "x".into()]);
        assert_eq!(c.text, "a,b\n1.0000000000000000e0,x\n");
    }

    #[test]
    fn no_temp_left_behind() {
        let dir = std::env::temp_dir().join(format!("tlebm-out-{}", std::process::id()));
        let mut o = OutputDir::create(&dir).unwrap();
        o.write("a.txt", b"hi").unwrap();
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
