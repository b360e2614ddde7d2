//! Benchmark suite loading.
//!
//! Two on-disk forms are accepted:
//!
//! * a directory with one subdirectory per problem holding `spec.md`,
//!   `testbench.v`, and optionally `ref.v` and `meta.json`;
//! * a JSONL file with one problem object per line carrying the same meta
//!   fields plus inline `spec_text` / `testbench_source`.
//!
//! Both loaders return problems sorted by id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Problem;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite path {0} does not exist")]
    NotFound(PathBuf),
    #[error("problem {0}: missing or empty specification")]
    MissingSpec(String),
    #[error("problem {0}: missing or empty testbench")]
    MissingTestbench(String),
    #[error("duplicate problem id `{0}`")]
    DuplicateId(String),
    #[error("problem {location}: declares external module dependencies {modules:?}; only self-contained problems are supported")]
    ExternalDependency {
        location: String,
        modules: Vec<String>,
    },
    #[error("problem {location}: invalid metadata: {message}")]
    InvalidMeta { location: String, message: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pass_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fail_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    external_modules: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct JsonlRecord {
    id: Option<String>,
    #[serde(default)]
    spec_text: Option<String>,
    #[serde(default)]
    testbench_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_code: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pass_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fail_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    external_modules: Vec<String>,
}

/// Loads every problem of a suite directory or JSONL file, sorted by id.
pub fn load_suite(path: &Path) -> Result<Vec<Problem>, SuiteError> {
    if !path.exists() {
        return Err(SuiteError::NotFound(path.to_path_buf()));
    }
    let problems = if path.is_dir() {
        load_dir(path)?
    } else {
        load_jsonl(path)?
    };
    let mut by_id = BTreeMap::new();
    for p in problems {
        if by_id.contains_key(&p.id) {
            return Err(SuiteError::DuplicateId(p.id));
        }
        by_id.insert(p.id.clone(), p);
    }
    Ok(by_id.into_values().collect())
}

fn suite_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_optional(path: &Path) -> Result<Option<String>, SuiteError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn check_regex(location: &str, re: &Option<String>) -> Result<(), SuiteError> {
    if let Some(re) = re {
        regex::Regex::new(re).map_err(|e| SuiteError::InvalidMeta {
            location: location.to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

fn load_dir(root: &Path) -> Result<Vec<Problem>, SuiteError> {
    let suite = suite_name(root);
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut out = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let location = dir.display().to_string();
        let meta: Meta = match read_optional(&dir.join("meta.json"))? {
            Some(text) => serde_json::from_str(&text).map_err(|e| SuiteError::InvalidMeta {
                location: location.clone(),
                message: e.to_string(),
            })?,
            None => Meta::default(),
        };
        if !meta.external_modules.is_empty() {
            return Err(SuiteError::ExternalDependency {
                location,
                modules: meta.external_modules,
            });
        }
        let spec_text = read_optional(&dir.join("spec.md"))?
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| SuiteError::MissingSpec(location.clone()))?;
        let testbench_source = read_optional(&dir.join("testbench.v"))?
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| SuiteError::MissingTestbench(location.clone()))?;
        let ref_code = read_optional(&dir.join("ref.v"))?;
        check_regex(&location, &meta.pass_regex)?;
        check_regex(&location, &meta.fail_regex)?;

        let id = match meta.id {
            Some(id) if !id.trim().is_empty() => id,
            Some(_) => {
                return Err(SuiteError::InvalidMeta {
                    location,
                    message: "empty id".into(),
                })
            }
            None => dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        out.push(Problem {
            id,
            spec_text,
            testbench_source,
            ref_code,
            tags: meta.tags,
            suite: suite.clone(),
            pass_regex: meta.pass_regex,
            fail_regex: meta.fail_regex,
        });
    }
    Ok(out)
}

fn load_jsonl(path: &Path) -> Result<Vec<Problem>, SuiteError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let suite = suite_name(path);
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), lineno + 1);
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| SuiteError::InvalidMeta {
            location: location.clone(),
            message: e.to_string(),
        })?;
        let id = rec
            .id
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| SuiteError::InvalidMeta {
                location: location.clone(),
                message: "missing id".into(),
            })?;
        let location = format!("{location} ({id})");
        if !rec.external_modules.is_empty() {
            return Err(SuiteError::ExternalDependency {
                location,
                modules: rec.external_modules,
            });
        }
        let spec_text = rec
            .spec_text
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| SuiteError::MissingSpec(location.clone()))?;
        let testbench_source = rec
            .testbench_source
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| SuiteError::MissingTestbench(location.clone()))?;
        check_regex(&location, &rec.pass_regex)?;
        check_regex(&location, &rec.fail_regex)?;
        out.push(Problem {
            id,
            spec_text,
            testbench_source,
            ref_code: rec.ref_code,
            tags: rec.tags,
            suite: rec.suite.unwrap_or_else(|| suite.clone()),
            pass_regex: rec.pass_regex,
            fail_regex: rec.fail_regex,
        });
    }
    Ok(out)
}

/// Writes problems in the directory layout understood by [`load_suite`].
pub fn save_suite_dir(problems: &[Problem], root: &Path) -> Result<(), SuiteError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    for p in problems {
        let dir = root.join(&p.id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let write = |name: &str, body: &str| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))
        };
        write("spec.md", &p.spec_text)?;
        write("testbench.v", &p.testbench_source)?;
        if let Some(r) = &p.ref_code {
            write("ref.v", r)?;
        }
        let meta = Meta {
            id: Some(p.id.clone()),
            tags: p.tags.clone(),
            pass_regex: p.pass_regex.clone(),
            fail_regex: p.fail_regex.clone(),
            external_modules: Vec::new(),
        };
        let body = serde_json::to_string_pretty(&meta).expect("meta serializes");
        write("meta.json", &body)?;
    }
    Ok(())
}

/// Writes problems as one JSON object per line.
pub fn save_suite_jsonl(problems: &[Problem], path: &Path) -> Result<(), SuiteError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    for p in problems {
        let rec = JsonlRecord {
            id: Some(p.id.clone()),
            spec_text: Some(p.spec_text.clone()),
            testbench_source: Some(p.testbench_source.clone()),
            ref_code: p.ref_code.clone(),
            tags: p.tags.clone(),
            suite: Some(p.suite.clone()),
            pass_regex: p.pass_regex.clone(),
            fail_regex: p.fail_regex.clone(),
            external_modules: Vec::new(),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}
