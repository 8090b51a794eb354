//! Artifact emission into the output directory, with an inventory of
//! everything written.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct Emitter {
    dir: PathBuf,
    written: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline; struct fields keep declaration
/// order, so equal values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Emitter> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.retain(|a| a.file != name);
        self.written.push(Artifact {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = to_json(value)?;
        self.write(name, &text)
    }

    pub fn inventory(&self) -> Vec<Artifact> {
        let mut v = self.written.clone();
        v.sort_by(|a, b| a.file.cmp(&b.file));
        v
    }
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Full-precision float formatting for tables.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Gnuplot script plotting columns of a CSV file.
pub fn gnuplot(title: &str, csv_file: &str, xlabel: &str, ylabel: &str, log: &str, series: &[(usize, usize, &str)]) -> String {
    let mut s = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"
    );
    if !log.is_empty() {
        s.push_str(&format!("set logscale {log}\n"));
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(x, y, style)| format!("'{csv_file}' using {x}:{y} with {style}"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emitter_tracks_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = Emitter::new(&dir.path().join("a/b")).unwrap();
        e.write("z.csv", "x\n1\n").unwrap();
        e.json("a.json", &serde_json::json!({"k": 1.5})).unwrap();
        e.write("z.csv", "x\n2\n").unwrap();
        let inv = e.inventory();
        assert_eq!(inv.len(), 2);
        assert_eq!(inv[0].file, "a.json");
        assert_eq!(inv[1].sha256, sha256_hex(b"x\n2\n"));
        let text = std::fs::read_to_string(dir.path().join("a/b/a.json")).unwrap();
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn csv_and_gnuplot() {
        let t = csv(&["a", "b"], vec![vec![num(1.0), num(0.25)]]);
        assert_eq!(t, "a,b\n1e0,2.5e-1\n");
        let g = gnuplot("t", "d.csv", "x", "y", "xy", &[(1, 2, "lines"), (1, 3, "points")]);
        assert!(g.contains("set logscale xy"));
        assert!(g.contains("'d.csv' using 1:3 with points"));
    }
}
