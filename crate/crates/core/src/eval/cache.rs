//! Content-addressed curve cache with an append-only backing file.
//!
//! One JSON record per line. A truncated or corrupt final record (an
//! interrupted write) is dropped and cut from the file on load; corruption
//! anywhere earlier is an error.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::graph::GraphKey;

use super::{CostCurve, CurveSample, EvalError};

#[derive(Serialize, Deserialize)]
struct Record {
    key: GraphKey,
    targets: Vec<f64>,
    samples: Vec<[f64; 3]>,
}

type Entry = (GraphKey, String);

fn targets_id(targets: &[f64]) -> String {
    serde_json::to_string(targets).expect("finite targets serialize")
}

#[derive(Debug, Default)]
pub struct CurveCache {
    path: Option<PathBuf>,
    map: RwLock<HashMap<Entry, CostCurve>>,
    file: Mutex<Option<File>>,
}

impl CurveCache {
    pub fn in_memory() -> Self {
        CurveCache::default()
    }

    /// Opens (or creates) the cache file and loads every complete record.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref().to_path_buf();
        let mut map = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let mut keep = 0usize;
            let mut offset = 0usize;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            for (i, line) in lines.iter().enumerate() {
                let last = i + 1 == lines.len();
                offset += line.len();
                if line.trim().is_empty() {
                    keep = offset;
                    continue;
                }
                let parsed = serde_json::from_str::<Record>(line.trim_end())
                    .map_err(|e| e.to_string())
                    .and_then(|r| decode(r).map_err(|e| e.to_string()));
                match parsed {
                    Ok((entry, curve)) if line.ends_with('\n') => {
                        map.insert(entry, curve);
                        keep = offset;
                    }
                    Ok(_) | Err(_) if last => {
                        log::warn!("dropping truncated trailing cache record in {}", path.display());
                    }
                    Ok(_) => unreachable!("only the final line can lack a newline"),
                    Err(e) => {
                        return Err(EvalError::Cache(format!("{}: record {}: {e}", path.display(), i + 1)))
                    }
                }
            }
            if keep < text.len() {
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(keep as u64)?;
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CurveCache { path: Some(path), map: RwLock::new(map), file: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &GraphKey, targets: &[f64]) -> Option<CostCurve> {
        let entry = (key.clone(), targets_id(targets));
        self.map.read().expect("cache lock").get(&entry).cloned()
    }

    /// Stores the curve and appends it to the backing file, if any.
    pub fn insert(&self, key: &GraphKey, targets: &[f64], curve: &CostCurve) -> Result<(), EvalError> {
        let entry = (key.clone(), targets_id(targets));
        {
            let mut map = self.map.write().expect("cache lock");
            if map.contains_key(&entry) {
                return Ok(());
            }
            map.insert(entry, curve.clone());
        }
        let mut guard = self.file.lock().expect("cache file lock");
        if let Some(f) = guard.as_mut() {
            let record = Record {
                key: key.clone(),
                targets: targets.to_vec(),
                samples: curve.samples().iter().map(|s| [s.target, s.area, s.delay]).collect(),
            };
            let mut line = serde_json::to_string(&record).map_err(|e| EvalError::Cache(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

fn decode(r: Record) -> Result<(Entry, CostCurve), EvalError> {
    let samples = r
        .samples
        .iter()
        .map(|&[target, area, delay]| CurveSample { target, area, delay })
        .collect();
    Ok(((r.key, targets_id(&r.targets)), CostCurve::new(samples)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> CostCurve {
        CostCurve::new(vec![
            CurveSample { target: 0.3, area: 120.0, delay: 0.31 },
            CurveSample { target: 0.5, area: 90.0, delay: 0.48 },
        ])
        .unwrap()
    }

    #[test]
    fn reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let key = GraphKey("abc".into());
        {
            let c = CurveCache::open(&path).unwrap();
            c.insert(&key, &[0.3, 0.5], &curve()).unwrap();
        }
        let c = CurveCache::open(&path).unwrap();
        assert_eq!(c.get(&key, &[0.3, 0.5]), Some(curve()));
        assert_eq!(c.get(&key, &[0.3]), None);
    }

    #[test]
    fn truncated_tail_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let key = GraphKey("k1".into());
        {
            let c = CurveCache::open(&path).unwrap();
            c.insert(&key, &[0.3, 0.5], &curve()).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"key":"k2","targets":[0.3"#).unwrap();
        drop(f);

        let c = CurveCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        c.insert(&GraphKey("k3".into()), &[0.3, 0.5], &curve()).unwrap();
        drop(c);
        let c = CurveCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn corrupt_middle_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "garbage\n{\"key\":\"a\",\"targets\":[1.0],\"samples\":[[1.0,2.0,3.0]]}\n").unwrap();
        assert!(matches!(CurveCache::open(&path), Err(EvalError::Cache(_))));
    }
}
