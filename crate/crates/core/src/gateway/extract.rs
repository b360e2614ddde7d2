//! Verilog extraction from free-form model responses.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

static MODULE_KW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bmodule\b").unwrap());
static ENDMODULE_KW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bendmodule\b").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no module ... endmodule pair found in response")]
pub struct ExtractError;

struct Block<'a> {
    info: String,
    lines: Vec<&'a str>,
}

fn fence_len(line: &str) -> usize {
    line.trim_start().bytes().take_while(|&b| b == b'`').count()
}

fn fenced_blocks(text: &str) -> Vec<Block<'_>> {
    let mut blocks = Vec::new();
    let mut current: Option<(usize, Block)> = None;
    for line in text.lines() {
        let ticks = fence_len(line);
        match current.as_mut() {
            Some((open, block)) => {
                let rest = &line.trim_start()[ticks.min(line.trim_start().len())..];
                if ticks >= *open && rest.trim().is_empty() {
                    blocks.push(current.take().unwrap().1);
                } else {
                    block.lines.push(line);
                }
            }
            None if ticks >= 3 => {
                let info = line.trim_start()[ticks..]
                    .split_whitespace()
                    .next()
                    .unwrap_or("")
                    .to_ascii_lowercase();
                current = Some((ticks, Block { info, lines: Vec::new() }));
            }
            None => {}
        }
    }
    // An unterminated fence (truncated output) runs to the end of the text.
    if let Some((_, block)) = current {
        blocks.push(block);
    }
    blocks
}

/// True when some `module` keyword precedes some `endmodule` keyword.
pub fn has_module_pair(code: &str) -> bool {
    match MODULE_KW.find(code) {
        Some(m) => ENDMODULE_KW.find_at(code, m.end()).is_some(),
        None => false,
    }
}

/// Returns the last Verilog fenced block (info string empty, `verilog` or
/// `systemverilog`) that holds a module; otherwise the span from the first
/// `module` through the last `endmodule`.
pub fn extract_code(raw_response: &str) -> Result<String, ExtractError> {
    let from_fence = fenced_blocks(raw_response)
        .into_iter()
        .rev()
        .filter(|b| matches!(b.info.as_str(), "" | "verilog" | "systemverilog"))
        .map(|b| b.lines.join("\n"))
        .find(|code| has_module_pair(code));
    if let Some(code) = from_fence {
        return Ok(code);
    }

    let start = MODULE_KW.find(raw_response).ok_or(ExtractError)?.start();
    let end = ENDMODULE_KW
        .find_iter(raw_response)
        .last()
        .map(|m| m.end())
        .ok_or(ExtractError)?;
    if end <= start {
        return Err(ExtractError);
    }
    Ok(raw_response[start..end].to_string())
}
