//! Output directory handling: an exclusive lockfile, atomic writes, and
//! removal of everything written when a command fails.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nsgmrf::io::{ModelFile, Raster};

pub const LOCK_NAME: &str = ".nsgmrf.lock";

pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let lock = dir.join(LOCK_NAME);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                anyhow!(
                    "output directory {} is in use (remove {} if no other run is active)",
                    dir.display(),
                    lock.display()
                )
            } else {
                anyhow!("cannot create lockfile {}: {e}", lock.display())
            }
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self { dir: dir.to_path_buf(), lock, written: Vec::new(), committed: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes through a temporary file renamed into place.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
        fs::rename(&tmp, &target).with_context(|| format!("cannot move {} into place", target.display()))?;
        self.written.push(target.clone());
        Ok(target)
    }

    pub fn write_raster(&mut self, name: &str, raster: &Raster) -> Result<PathBuf> {
        self.write(name, raster.to_ascii().as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))?;
        self.write(name, &bytes)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Re-reads every written file with the matching reader.
    pub fn validate(&self) -> Result<()> {
        for p in &self.written {
            match p.extension().and_then(|e| e.to_str()) {
                Some("asc") => {
                    Raster::read(p).with_context(|| format!("validating {}", p.display()))?;
                }
                Some("csv") => {
                    let mut r = csv::Reader::from_path(p)?;
                    for rec in r.records() {
                        rec.with_context(|| format!("validating {}", p.display()))?;
                    }
                }
                Some("json") if p.file_name().is_some_and(|n| n == "model.json") => {
                    ModelFile::load(p).with_context(|| format!("validating {}", p.display()))?;
                }
                Some("json") => {
                    let text = fs::read_to_string(p)?;
                    serde_json::from_str::<serde_json::Value>(&text)
                        .with_context(|| format!("validating {}", p.display()))?;
                }
                _ => bail!("unexpected output {}", p.display()),
            }
        }
        Ok(())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
        let _ = fs::remove_file(&self.lock);
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let tmp = dir.path().join("out");
        let a = OutputDir::open(&tmp).unwrap();
        assert!(OutputDir::open(&tmp).is_err());
        drop(a);
        let b = OutputDir::open(&tmp).unwrap();
        drop(b);
        assert!(!tmp.join(LOCK_NAME).exists());
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let tmp = dir.path().to_path_buf();
        let mut out = OutputDir::open(&tmp).unwrap();
        let p = out.write_csv("t.csv", &["a"], &[vec!["1".into()]]).unwrap();
        assert!(p.exists());
        out.validate().unwrap();
        drop(out);
        assert!(!p.exists());
        let mut out = OutputDir::open(&tmp).unwrap();
        let p = out.write("x.json", b"{}").unwrap();
        out.commit();
        assert!(p.exists());
    }
}
