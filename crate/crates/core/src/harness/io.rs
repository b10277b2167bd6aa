//! Output bundles. Every file lands via write-to-temp then rename.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same `f64` (Rust `Display`, `serde_json`), so reruns with the same config
//! and seed give byte-identical files. Non-finite values print as `NaN`/`inf`
//! in CSV and `null` in JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `Display` form of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Named files written under one directory, finished by a JSON metadata file.
#[derive(Debug)]
pub struct Bundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn add(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.files.contains(&p) {
            self.files.push(p.clone());
        }
        p
    }

    /// Rows of a serializable type, header from field names.
    pub fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let p = self.add(name);
        write_atomic(&p, &bytes)
    }

    /// Rows of preformatted cells.
    pub fn table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let p = self.add(name);
        write_atomic(&p, &bytes)
    }

    /// Columns `t, sigma2, p_0 .. p_{L-1}`.
    pub fn trajectory(&mut self, name: &str, traj: &Trajectory, time_label: &str) -> Result<()> {
        let mut header = vec![time_label.to_string(), "sigma2".to_string()];
        header.extend((0..traj.sites()).map(|n| format!("p_{n}")));
        let rows: Vec<Vec<String>> = traj
            .times
            .iter()
            .zip(&traj.second_moment)
            .zip(&traj.distributions)
            .map(|((t, s), p)| std::iter::once(*t).chain(std::iter::once(*s)).chain(p.iter().copied()).map(num).collect())
            .collect();
        self.table(name, &header, &rows)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.add(name);
        write_json(&p, value)
    }

    /// Write `<name>.json` with the resolved config, summary and file list.
    pub fn finish<S: Serialize>(mut self, name: &str, config: &ExperimentConfig, summary: &S) -> Result<Self> {
        let files: Vec<String> = self
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let meta = serde_json::json!({
            "name": name,
            "version": env!("CARGO_PKG_VERSION"),
            "float_format": "shortest round-trip decimal",
            "config": config,
            "files": files,
            "summary": summary,
        });
        self.json(&format!("{name}.json"), &meta)?;
        Ok(self)
    }
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct Manifest {
    params: serde_json::Value,
    completed: Vec<String>,
}

/// Per-point results of a grid run, with an on-disk manifest of finished keys.
#[derive(Debug)]
pub struct PointStore {
    dir: PathBuf,
    manifest: Mutex<Manifest>,
}

impl PointStore {
    /// Open or start the store in `dir`. An existing manifest written for
    /// different parameters is an error.
    pub fn open<P: Serialize>(dir: &Path, params: &P) -> Result<Self> {
        let params = serde_json::to_value(params)?;
        fs::create_dir_all(dir.join("points"))?;
        let path = dir.join("manifest.json");
        let manifest = if path.exists() {
            let m: Manifest = serde_json::from_slice(&fs::read(&path)?)?;
            if m.params != params {
                return Err(Error::Config(format!(
                    "{} was written for different sweep parameters; use another output directory",
                    path.display()
                )));
            }
            m
        } else {
            let m = Manifest { params, completed: Vec::new() };
            write_json(&path, &m)?;
            m
        };
        Ok(Self { dir: dir.to_path_buf(), manifest: Mutex::new(manifest) })
    }

    fn point_path(&self, key: &str) -> PathBuf {
        self.dir.join("points").join(format!("{key}.json"))
    }

    pub fn completed(&self) -> Vec<String> {
        self.manifest.lock().unwrap().completed.clone()
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        if !self.manifest.lock().unwrap().completed.iter().any(|k| k == key) {
            return None;
        }
        fs::read(self.point_path(key)).ok().and_then(|b| serde_json::from_slice(&b).ok())
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        write_json(&self.point_path(key), value)?;
        let mut m = self.manifest.lock().unwrap();
        if !m.completed.iter().any(|k| k == key) {
            m.completed.push(key.to_string());
            m.completed.sort();
        }
        write_json(&self.dir.join("manifest.json"), &*m)
    }
}
