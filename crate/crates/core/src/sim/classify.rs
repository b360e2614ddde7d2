use regex::Regex;

use crate::types::VerdictKind;

/// Result of one external command.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// `None` when the process was killed by a signal.
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

impl StepOutcome {
    pub fn combined(&self) -> String {
        if self.stderr.is_empty() {
            self.stdout.clone()
        } else {
            format!("{}\n{}", self.stdout, self.stderr)
        }
    }
}

/// Maps compile/run outcomes to exactly one verdict kind.
///
/// `compile` is `None` for profiles without a compile step; `run` is `None`
/// when the run step never happened.
pub fn classify(
    compile: Option<&StepOutcome>,
    run: Option<&StepOutcome>,
    pass_re: &Regex,
    fail_re: &Regex,
) -> VerdictKind {
    if let Some(c) = compile {
        if c.timed_out {
            return VerdictKind::SimTimeout;
        }
        if c.exit_code != Some(0) {
            return VerdictKind::CompileError;
        }
    }
    let Some(run) = run else {
        return VerdictKind::SimFail;
    };
    if run.timed_out {
        return VerdictKind::SimTimeout;
    }
    let output = run.combined();
    if fail_re.is_match(&output) {
        return VerdictKind::SimFail;
    }
    if run.exit_code == Some(0) && pass_re.is_match(&output) {
        return VerdictKind::Pass;
    }
    VerdictKind::SimFail
}
