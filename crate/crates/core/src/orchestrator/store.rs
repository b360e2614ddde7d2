//! On-disk campaign store.
//!
//! ```text
//! <root>/campaign.json                       layout version + config snapshot
//! <root>/problems/<id>/problem.json          problem as loaded at campaign start
//! <root>/problems/<id>/samples.jsonl         committed samples, dense by index
//! <root>/problems/<id>/overshoot.jsonl       speculative samples past an early stop
//! <root>/problems/<id>/failed/<index>/       retained scratch (keep_failed)
//! ```
//!
//! Sample logs are append-only. Each record is one `write_all` of a full line,
//! so a crash leaves at most one partial trailing line, which readers ignore
//! and writers truncate before appending.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::CampaignConfig;
use crate::dispersion::analysis::file_stem;
use crate::types::{Problem, Sample, StopMode};

pub const LAYOUT_VERSION: u32 = 1;
pub const CAMPAIGN_FILE: &str = "campaign.json";
const SAMPLES_FILE: &str = "samples.jsonl";
const OVERSHOOT_FILE: &str = "overshoot.jsonl";
const PROBLEM_FILE: &str = "problem.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSnapshot {
    pub layout_version: u32,
    pub config: CampaignConfig,
    pub problem_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemProgress {
    pub problem_id: String,
    pub samples_done: u32,
    /// 1-based attempt number of the first committed pass.
    pub first_pass_index: Option<u32>,
    pub terminal: bool,
}

impl ProblemProgress {
    pub fn from_samples(problem_id: &str, samples: &[Sample], stop_mode: StopMode, max_samples: u32) -> Self {
        let samples_done = samples.len() as u32;
        let first_pass_index = samples.iter().position(|s| s.is_pass()).map(|i| i as u32 + 1);
        let terminal =
            samples_done >= max_samples || (stop_mode == StopMode::EarlyStop && first_pass_index.is_some());
        Self { problem_id: problem_id.to_string(), samples_done, first_pass_index, terminal }
    }
}

pub fn problem_dir(root: &Path, problem_id: &str) -> PathBuf {
    root.join("problems").join(file_stem(problem_id))
}

pub fn failed_dir(root: &Path, problem_id: &str, index: u32) -> PathBuf {
    problem_dir(root, problem_id).join("failed").join(index.to_string())
}

pub fn read_snapshot(root: &Path) -> Result<CampaignSnapshot, StoreError> {
    let path = root.join(CAMPAIGN_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(StoreError::ConfigMismatch(format!("{} has no {CAMPAIGN_FILE}", root.display())))
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| StoreError::ConfigMismatch(format!("{}: {e}", path.display())))?;
    let version = value.get("layout_version").and_then(|v| v.as_u64());
    if version != Some(LAYOUT_VERSION as u64) {
        return Err(StoreError::ConfigMismatch(format!(
            "{} has layout version {version:?}, expected {LAYOUT_VERSION}",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| StoreError::ConfigMismatch(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, body: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Complete lines of a JSONL log and the byte length they cover.
fn read_log(path: &Path) -> Result<(Vec<Sample>, u64), StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
    if complete < bytes.len() {
        log::warn!("{}: ignoring {} byte partial trailing record", path.display(), bytes.len() - complete);
    }
    let mut samples = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        samples.push(s);
    }
    Ok((samples, complete as u64))
}

/// Read-only view of a campaign directory.
#[derive(Debug, Clone)]
pub struct CampaignStore {
    root: PathBuf,
    snapshot: CampaignSnapshot,
    problems: Vec<Problem>,
    samples: BTreeMap<String, Vec<Sample>>,
    overshoot: BTreeMap<String, Vec<Sample>>,
}

impl CampaignStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let snapshot = read_snapshot(root)?;
        let mut problems = Vec::new();
        let mut samples = BTreeMap::new();
        let mut overshoot = BTreeMap::new();
        for id in &snapshot.problem_ids {
            let dir = problem_dir(root, id);
            let ppath = dir.join(PROBLEM_FILE);
            let text = fs::read_to_string(&ppath).map_err(io_err(&ppath))?;
            let problem: Problem = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: ppath.clone(),
                line: 1,
                message: e.to_string(),
            })?;
            if &problem.id != id {
                return Err(StoreError::ConfigMismatch(format!(
                    "{} holds problem {:?}, expected {id:?}",
                    ppath.display(),
                    problem.id
                )));
            }
            let spath = dir.join(SAMPLES_FILE);
            let (s, _) = read_log(&spath)?;
            for (i, sample) in s.iter().enumerate() {
                if sample.index as usize != i || &sample.problem_id != id {
                    return Err(StoreError::Corrupt {
                        path: spath,
                        line: i + 1,
                        message: format!("expected {id}#{i}, found {}#{}", sample.problem_id, sample.index),
                    });
                }
            }
            let (o, _) = read_log(&dir.join(OVERSHOOT_FILE))?;
            problems.push(problem);
            samples.insert(id.clone(), s);
            overshoot.insert(id.clone(), o);
        }
        Ok(Self { root: root.to_path_buf(), snapshot, problems, samples, overshoot })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshot(&self) -> &CampaignSnapshot {
        &self.snapshot
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.snapshot.config
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    /// Committed samples of one problem, ordered by index.
    pub fn samples(&self, problem_id: &str) -> &[Sample] {
        self.samples.get(problem_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_samples(&self) -> &BTreeMap<String, Vec<Sample>> {
        &self.samples
    }

    /// Speculative samples issued before an early stop was known.
    pub fn overshoot(&self, problem_id: &str) -> &[Sample] {
        self.overshoot.get(problem_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_samples(&self) -> usize {
        self.samples.values().map(Vec::len).sum()
    }

    pub fn progress(&self) -> Vec<ProblemProgress> {
        let c = self.config();
        self.problems
            .iter()
            .map(|p| ProblemProgress::from_samples(&p.id, self.samples(&p.id), c.stop_mode(), c.max_samples()))
            .collect()
    }

    pub fn first_pass_map(&self) -> BTreeMap<String, Option<u32>> {
        self.progress().into_iter().map(|p| (p.problem_id, p.first_pass_index)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.progress().iter().all(|p| p.terminal)
    }
}

/// Append handle used only by the coordinator.
pub(crate) struct StoreWriter {
    root: PathBuf,
    samples: BTreeMap<String, File>,
    overshoot: BTreeMap<String, File>,
}

fn open_append(path: &Path, keep: u64) -> Result<File, StoreError> {
    let f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let len = f.metadata().map_err(io_err(path))?.len();
    if len > keep {
        f.set_len(keep).map_err(io_err(path))?;
    }
    Ok(f)
}

impl StoreWriter {
    /// Creates a fresh store or reopens an existing one with a matching
    /// snapshot, truncating any partial trailing records.
    pub fn open_or_create(root: &Path, snapshot: &CampaignSnapshot, problems: &[Problem]) -> Result<Self, StoreError> {
        let mut stems = BTreeMap::new();
        for p in problems {
            if let Some(other) = stems.insert(file_stem(&p.id), &p.id) {
                return Err(StoreError::ConfigMismatch(format!(
                    "problem ids {other:?} and {:?} map to the same directory",
                    p.id
                )));
            }
        }
        fs::create_dir_all(root).map_err(io_err(root))?;
        let campaign = root.join(CAMPAIGN_FILE);
        if campaign.exists() {
            let existing = read_snapshot(root)?;
            if existing.problem_ids != snapshot.problem_ids {
                return Err(StoreError::ConfigMismatch(format!(
                    "{} was created for a different problem set",
                    root.display()
                )));
            }
            if existing.config != snapshot.config {
                return Err(StoreError::ConfigMismatch(format!(
                    "{} was created with a different configuration",
                    root.display()
                )));
            }
        } else {
            let body = serde_json::to_vec_pretty(snapshot).expect("snapshot serializes");
            write_atomic(&campaign, &body)?;
        }

        let mut writer = Self { root: root.to_path_buf(), samples: BTreeMap::new(), overshoot: BTreeMap::new() };
        for p in problems {
            let dir = problem_dir(root, &p.id);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let ppath = dir.join(PROBLEM_FILE);
            if !ppath.exists() {
                write_atomic(&ppath, &serde_json::to_vec_pretty(p).expect("problem serializes"))?;
            }
            for (name, map) in [(SAMPLES_FILE, &mut writer.samples), (OVERSHOOT_FILE, &mut writer.overshoot)] {
                let path = dir.join(name);
                let (_, keep) = read_log(&path)?;
                map.insert(p.id.clone(), open_append(&path, keep)?);
            }
        }
        Ok(writer)
    }

    fn append(file: &mut File, path: PathBuf, sample: &Sample) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(sample).expect("sample serializes");
        line.push(b'\n');
        file.write_all(&line).map_err(|source| StoreError::Io { path, source })
    }

    pub fn append_sample(&mut self, sample: &Sample) -> Result<(), StoreError> {
        let path = problem_dir(&self.root, &sample.problem_id).join(SAMPLES_FILE);
        let f = self.samples.get_mut(&sample.problem_id).expect("writer opened for every problem");
        Self::append(f, path, sample)
    }

    pub fn append_overshoot(&mut self, sample: &Sample) -> Result<(), StoreError> {
        let path = problem_dir(&self.root, &sample.problem_id).join(OVERSHOOT_FILE);
        let f = self.overshoot.get_mut(&sample.problem_id).expect("writer opened for every problem");
        Self::append(f, path, sample)
    }
}
