use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use tokio::io::{AsyncRead, AsyncReadExt};
use tokio::process::Command;

use super::{classify, SimError, SimProfile, Simulator, StepOutcome};
use crate::types::{Problem, Verdict, VerdictKind};

/// Per-stream capture limit; output beyond it is drained and discarded.
pub const OUTPUT_CAP_BYTES: usize = 64 * 1024;

const CODE_FILE: &str = "design.v";
const TB_FILE: &str = "tb.v";
const OUT_FILE: &str = "sim.out";

/// Simulator driven by external commands built from a [`SimProfile`].
pub struct CommandSimulator {
    profile: SimProfile,
    pass_re: Regex,
    fail_re: Regex,
    scratch_root: Option<PathBuf>,
}

fn check_template(profile: &str, argv: &[String], allowed: &[&str]) -> Result<(), SimError> {
    let placeholder = Regex::new(r"\{[^{}]*\}").unwrap();
    for arg in argv {
        for m in placeholder.find_iter(arg) {
            if !allowed.contains(&m.as_str()) {
                return Err(SimError::InvalidProfile {
                    profile: profile.to_string(),
                    message: format!("undeclared placeholder {} in `{arg}`", m.as_str()),
                });
            }
        }
    }
    Ok(())
}

fn compile_regex(profile: &str, re: &str) -> Result<Regex, SimError> {
    Regex::new(re).map_err(|e| SimError::InvalidProfile {
        profile: profile.to_string(),
        message: e.to_string(),
    })
}

impl CommandSimulator {
    pub fn new(profile: SimProfile) -> Result<Self, SimError> {
        if profile.run_cmd.is_empty() {
            return Err(SimError::InvalidProfile {
                profile: profile.name.clone(),
                message: "run_cmd is empty".into(),
            });
        }
        if profile.timeout_s == 0 {
            return Err(SimError::InvalidProfile {
                profile: profile.name.clone(),
                message: "timeout_s must be positive".into(),
            });
        }
        check_template(&profile.name, &profile.compile_cmd, &["{code}", "{tb}", "{out}"])?;
        check_template(&profile.name, &profile.run_cmd, &["{out}"])?;
        Ok(Self {
            pass_re: compile_regex(&profile.name, &profile.default_pass_regex)?,
            fail_re: compile_regex(&profile.name, &profile.default_fail_regex)?,
            profile,
            scratch_root: None,
        })
    }

    /// Creates scratch directories under `root` instead of the system temp dir.
    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.profile.timeout_s)
    }

    fn regexes(&self, problem: &Problem) -> Result<(Regex, Regex), SimError> {
        let pass = match &problem.pass_regex {
            Some(re) => compile_regex(&problem.id, re)?,
            None => self.pass_re.clone(),
        };
        let fail = match &problem.fail_regex {
            Some(re) => compile_regex(&problem.id, re)?,
            None => self.fail_re.clone(),
        };
        Ok((pass, fail))
    }
}

fn substitute(argv: &[String], dir: &Path) -> Vec<String> {
    let code = dir.join(CODE_FILE);
    let tb = dir.join(TB_FILE);
    let out = dir.join(OUT_FILE);
    argv.iter()
        .map(|a| {
            a.replace("{code}", &code.to_string_lossy())
                .replace("{tb}", &tb.to_string_lossy())
                .replace("{out}", &out.to_string_lossy())
        })
        .collect()
}

async fn read_capped<R: AsyncRead + Unpin>(mut reader: R) -> String {
    let mut kept = Vec::new();
    let mut dropped = 0usize;
    let mut buf = [0u8; 8192];
    loop {
        match reader.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = OUTPUT_CAP_BYTES.saturating_sub(kept.len());
                let take = room.min(n);
                kept.extend_from_slice(&buf[..take]);
                dropped += n - take;
            }
        }
    }
    let mut s = String::from_utf8_lossy(&kept).into_owned();
    if dropped > 0 {
        s.push_str(&format!("\n[... {dropped} bytes truncated]"));
    }
    s
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; ESRCH when the group is already gone is fine.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

/// Runs `argv` in its own process group; on timeout the whole group is killed.
pub(crate) async fn run_step(argv: &[String], dir: &Path, timeout: Duration) -> Result<StepOutcome, SimError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .kill_on_drop(true);
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SimError::ToolNotFound(argv[0].clone()),
        _ => SimError::Io(format!("spawning `{}`: {e}", argv[0])),
    })?;
    let pid = child.id().unwrap_or(0);
    let stdout = tokio::spawn(read_capped(child.stdout.take().expect("piped stdout")));
    let stderr = tokio::spawn(read_capped(child.stderr.take().expect("piped stderr")));

    let (exit_code, timed_out) = match tokio::time::timeout(timeout, child.wait()).await {
        Ok(status) => {
            let status = status.map_err(|e| SimError::Io(e.to_string()))?;
            (status.code(), false)
        }
        Err(_) => {
            kill_group(pid);
            let _ = child.wait().await;
            (None, true)
        }
    };
    // Helpers left behind by the tool would keep the pipes open.
    kill_group(pid);
    Ok(StepOutcome {
        exit_code,
        timed_out,
        stdout: stdout.await.unwrap_or_default(),
        stderr: stderr.await.unwrap_or_default(),
    })
}

fn retain_scratch(scratch: &Path, dest: &Path, log: &str) {
    let copy = || -> std::io::Result<()> {
        std::fs::create_dir_all(dest)?;
        for entry in std::fs::read_dir(scratch)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                std::fs::copy(entry.path(), dest.join(entry.file_name()))?;
            }
        }
        std::fs::write(dest.join("output.log"), log)
    };
    if let Err(e) = copy() {
        log::warn!("could not retain scratch dir at {}: {e}", dest.display());
    }
}

#[async_trait]
impl Simulator for CommandSimulator {
    fn name(&self) -> &str {
        &self.profile.name
    }

    async fn simulate(&self, code: &str, problem: &Problem, retain: Option<&Path>) -> Result<Verdict, SimError> {
        let (pass_re, fail_re) = self.regexes(problem)?;
        let mut builder = tempfile::Builder::new();
        builder.prefix("hdlscale-sim-");
        let scratch = match &self.scratch_root {
            Some(root) => builder.tempdir_in(root),
            None => builder.tempdir(),
        }
        .map_err(|e| SimError::Io(format!("creating scratch dir: {e}")))?;
        let dir = scratch.path();
        tokio::fs::write(dir.join(CODE_FILE), code)
            .await
            .map_err(|e| SimError::Io(e.to_string()))?;
        tokio::fs::write(dir.join(TB_FILE), &problem.testbench_source)
            .await
            .map_err(|e| SimError::Io(e.to_string()))?;

        let compile = if self.profile.compile_cmd.is_empty() {
            None
        } else {
            Some(run_step(&substitute(&self.profile.compile_cmd, dir), dir, self.timeout()).await?)
        };
        let compiled = compile
            .as_ref()
            .map(|c| !c.timed_out && c.exit_code == Some(0))
            .unwrap_or(true);
        let run = if compiled {
            Some(run_step(&substitute(&self.profile.run_cmd, dir), dir, self.timeout()).await?)
        } else {
            None
        };

        let kind = classify(compile.as_ref(), run.as_ref(), &pass_re, &fail_re);
        let detail = match (&run, &compile) {
            (Some(r), _) => r.combined(),
            (None, Some(c)) => c.combined(),
            (None, None) => String::new(),
        };
        if kind != VerdictKind::Pass {
            if let Some(dest) = retain {
                retain_scratch(dir, dest, &detail);
            }
        }
        Ok(Verdict::new(kind, detail))
    }
}
