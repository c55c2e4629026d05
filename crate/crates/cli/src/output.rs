use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

/// Output files collected in a scratch directory next to the target and moved
/// into place only by [`Staging::commit`].
pub struct Staging {
    dir: TempDir,
    out: PathBuf,
    files: Vec<String>,
    provenance: Value,
}

impl Staging {
    pub fn new(out: &Path, provenance: Value) -> io::Result<Self> {
        let parent = out
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let dir = tempfile::Builder::new().prefix(".novelty-staging-").tempdir_in(parent)?;
        Ok(Self {
            dir,
            out: out.to_path_buf(),
            files: Vec::new(),
            provenance,
        })
    }

    fn write(&mut self, name: &str, body: &str) -> io::Result<()> {
        fs::write(self.dir.path().join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Text body prefixed by a `# config:` line holding the resolved run.
    pub fn csv(&mut self, name: &str, body: &str) -> io::Result<()> {
        let text = format!("# config: {}\n{body}", self.provenance);
        self.write(name, &text)
    }

    /// JSON object with a `provenance` member added.
    pub fn json(&mut self, name: &str, mut value: Value) -> io::Result<()> {
        if let Value::Object(map) = &mut value {
            map.insert("provenance".into(), self.provenance.clone());
        }
        let mut text = serde_json::to_string_pretty(&value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn commit(self) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out)?;
        let mut written = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let target = self.out.join(name);
            fs::rename(self.dir.path().join(name), &target)?;
            written.push(target);
        }
        Ok(written)
    }
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// One row per column of `samples`, led by its abscissa.
pub fn series_csv(index_name: &str, index: impl Iterator<Item = String>, samples: &DMatrix<f64>, prefix: &str) -> String {
    let mut out = String::new();
    let mut header = vec![index_name.to_string()];
    header.extend((1..=samples.nrows()).map(|k| format!("{prefix}_{k}")));
    let _ = writeln!(out, "{}", header.join(","));
    for (t, col) in index.zip(samples.column_iter()) {
        let mut row = vec![t];
        row.extend(col.iter().map(|x| x.to_string()));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
