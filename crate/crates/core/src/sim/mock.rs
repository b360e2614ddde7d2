//! In-process oracle simulator: passes iff the candidate carries the
//! problem's pass marker, fails to "compile" on unbalanced structure.

use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;

use super::{SimError, Simulator};
use crate::dispersion::tokenize;
use crate::types::{Problem, Verdict, VerdictKind};

/// Marker text that makes the mock testbench accept a candidate.
pub fn pass_marker(problem_id: &str) -> String {
    format!("pass:{problem_id}")
}

/// Cheap structural check standing in for a compiler.
pub fn mock_compiles(code: &str) -> bool {
    let tokens = tokenize(code).tokens;
    let count = |t: &str| tokens.iter().filter(|x| x.as_str() == t).count();
    let modules = count("module");
    modules >= 1
        && modules == count("endmodule")
        && count("(") == count(")")
        && count("[") == count("]")
        && count("{") == count("}")
        && count("begin") == count("end")
}

pub struct MockSimulator {
    delay: Duration,
}

impl MockSimulator {
    pub fn new(delay: Duration) -> Self {
        Self { delay }
    }
}

#[async_trait]
impl Simulator for MockSimulator {
    fn name(&self) -> &str {
        "mock"
    }

    async fn simulate(&self, code: &str, problem: &Problem, retain: Option<&Path>) -> Result<Verdict, SimError> {
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let verdict = if !mock_compiles(code) {
            Verdict::new(VerdictKind::CompileError, "mock compiler: unbalanced module structure")
        } else if code.contains(&pass_marker(&problem.id)) {
            Verdict::new(VerdictKind::Pass, "mock testbench: all tests passed")
        } else {
            Verdict::new(VerdictKind::SimFail, "mock testbench: output mismatch")
        };
        if !verdict.is_pass() {
            if let Some(dest) = retain {
                let write = || -> std::io::Result<()> {
                    std::fs::create_dir_all(dest)?;
                    std::fs::write(dest.join("design.v"), code)?;
                    std::fs::write(dest.join("output.log"), &verdict.detail)
                };
                if let Err(e) = write() {
                    log::warn!("could not retain mock scratch at {}: {e}", dest.display());
                }
            }
        }
        Ok(verdict)
    }
}
