//! Zero-shot prompt construction: a fixed formatting preamble followed by the
//! problem's specification, verbatim. No examples, testbench or reference code.

use crate::types::Problem;

const PREAMBLE_V1: &str = "You are an expert digital hardware designer.\n\
Implement the Verilog module described by the specification below.\n\
Reply with exactly one fenced code block that starts with ```verilog and ends with ```.\n\
The block must contain a single, complete, self-contained module: declare every port, \
do not instantiate modules you do not define, and finish with endmodule.\n\
Do not write a testbench.\n\
\n\
Specification:\n";

/// Preamble text for a pinned prompt revision.
pub fn preamble(version: &str) -> Option<&'static str> {
    match version {
        "v1" => Some(PREAMBLE_V1),
        _ => None,
    }
}

pub fn build_prompt(problem: &Problem) -> String {
    build_prompt_versioned(problem, crate::config::DEFAULT_PROMPT_VERSION)
        .expect("default prompt version exists")
}

pub fn build_prompt_versioned(problem: &Problem, version: &str) -> Option<String> {
    preamble(version).map(|p| format!("{p}{}", problem.spec_text))
}
