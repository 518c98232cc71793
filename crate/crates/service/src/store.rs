//! Content-addressed filesystem store for scenarios, plans and job records.
//!
//! ```text
//! <root>/scenarios/<id>.scenario   id = first 16 hex digits of the scenario digest
//! <root>/plans/<id>.json           id = first 16 hex digits of SHA-256 of the plan file
//! <root>/jobs/<job_id>.json
//! ```
//!
//! Scenarios are stored fully resolved (series inlined), so a stored file
//! never depends on side files. Writes go through a temporary file and a
//! rename, so readers never observe partial content.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use basin_alloc::io::{parse_scenario, save_scenario, LoadOptions};
use basin_alloc::Scenario;
use sha2::{Digest, Sha256};

use crate::jobs::JobRecord;

const ID_LEN: usize = 16;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
}

/// Ids come from URLs; only accept the shapes the store hands out.
fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn read_optional(path: &Path) -> io::Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

fn invalid(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

pub fn plan_id(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))[..ID_LEN].to_owned()
}

pub fn scenario_id(s: &Scenario) -> String {
    s.digest()[..ID_LEN].to_owned()
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for sub in ["scenarios", "plans", "jobs"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn scenario_path(&self, id: &str) -> PathBuf {
        self.root.join("scenarios").join(format!("{id}.scenario"))
    }

    fn plan_path(&self, id: &str) -> PathBuf {
        self.root.join("plans").join(format!("{id}.json"))
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.json"))
    }

    /// Stores a validated scenario and returns its id. Storing the same
    /// content twice is a no-op.
    pub fn put_scenario(&self, s: &Scenario) -> io::Result<String> {
        let id = scenario_id(s);
        let path = self.scenario_path(&id);
        if !path.is_file() {
            write_atomic(&path, save_scenario(s).as_bytes())?;
        }
        Ok(id)
    }

    pub fn scenario(&self, id: &str) -> io::Result<Option<Scenario>> {
        if !is_safe_id(id) {
            return Ok(None);
        }
        match read_optional(&self.scenario_path(id))? {
            None => Ok(None),
            Some(text) => parse_scenario(&text, None, LoadOptions::default())
                .map(|l| Some(l.scenario))
                .map_err(invalid),
        }
    }

    fn ids(&self, sub: &str, ext: &str) -> io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join(sub))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == ext) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_owned());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn scenario_ids(&self) -> io::Result<Vec<String>> {
        self.ids("scenarios", "scenario")
    }

    /// Stores a serialized plan file and returns its content id.
    pub fn put_plan(&self, text: &str) -> io::Result<String> {
        let id = plan_id(text);
        let path = self.plan_path(&id);
        if !path.is_file() {
            write_atomic(&path, text.as_bytes())?;
        }
        Ok(id)
    }

    pub fn plan_text(&self, id: &str) -> io::Result<Option<String>> {
        if !is_safe_id(id) {
            return Ok(None);
        }
        read_optional(&self.plan_path(id))
    }

    pub fn put_job(&self, job: &JobRecord) -> io::Result<()> {
        let text = serde_json::to_vec_pretty(job).map_err(invalid)?;
        write_atomic(&self.job_path(&job.job_id), &text)
    }

    pub fn jobs(&self) -> io::Result<Vec<JobRecord>> {
        let mut out = Vec::new();
        for id in self.ids("jobs", "json")? {
            let text = fs::read_to_string(self.job_path(&id))?;
            out.push(serde_json::from_str(&text).map_err(invalid)?);
        }
        Ok(out)
    }
}
