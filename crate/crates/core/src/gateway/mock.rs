//! Deterministic in-process provider for pipeline tests and dry runs.
//!
//! Every response is a pure function of `(seed, problem id, attempt index,
//! temperature)`. The uniform draws deciding pass/fail and which code variant
//! is emitted do not depend on temperature, so raising the temperature can only
//! turn failing attempts into passing ones and only widens the set of variants.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Completion, GenerationRequest, Provider, ProviderFailure};
use crate::digest;
use crate::sim::mock::pass_marker;
use crate::types::UsageRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    /// Artificial latency per generation request.
    pub gen_delay_ms: u64,
    /// Artificial latency per mock simulation.
    pub sim_delay_ms: u64,
    /// Passing attempts (1-based) per problem. Problems listed here ignore the
    /// probabilistic model; an empty list means the problem never passes.
    pub script: BTreeMap<String, Vec<u32>>,
    /// Pass probability at temperature 0.
    pub pass_prob: f64,
    /// Increase of the pass probability per unit of temperature.
    pub pass_prob_per_temp: f64,
    /// Distinct code variants added per unit of temperature (1 variant at T = 0).
    pub variants_per_temp: f64,
    pub malformed_prob: f64,
    pub compile_error_prob: f64,
    pub provider_error_prob: f64,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            gen_delay_ms: 0,
            sim_delay_ms: 0,
            script: BTreeMap::new(),
            pass_prob: 0.3,
            pass_prob_per_temp: 0.1,
            variants_per_temp: 8.0,
            malformed_prob: 0.0,
            compile_error_prob: 0.0,
            provider_error_prob: 0.0,
        }
    }
}

impl MockSettings {
    pub fn pass_probability(&self, temperature: f64) -> f64 {
        (self.pass_prob + self.pass_prob_per_temp * temperature).clamp(0.0, 1.0)
    }

    pub fn variant_count(&self, temperature: f64) -> u32 {
        1 + (temperature.max(0.0) * self.variants_per_temp).floor() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Pass,
    Fail,
    Broken,
    Malformed,
    ProviderError,
}

pub struct MockProvider {
    settings: MockSettings,
    seed: u64,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    calls: AtomicU64,
}

impl MockProvider {
    pub fn new(settings: MockSettings, seed: u64) -> Self {
        Self {
            settings,
            seed,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            calls: AtomicU64::new(0),
        }
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn draw(&self, problem_id: &str, index: u32, salt: &str) -> f64 {
        digest::unit(&[
            &self.seed.to_le_bytes(),
            problem_id.as_bytes(),
            &index.to_le_bytes(),
            salt.as_bytes(),
        ])
    }

    fn outcome(&self, problem_id: &str, index: u32, temperature: f64) -> Outcome {
        let s = &self.settings;
        if self.draw(problem_id, index, "provider-error") < s.provider_error_prob {
            return Outcome::ProviderError;
        }
        let pass = match s.script.get(problem_id) {
            Some(attempts) => attempts.contains(&(index + 1)),
            None => self.draw(problem_id, index, "pass") < s.pass_probability(temperature),
        };
        if pass {
            return Outcome::Pass;
        }
        if self.draw(problem_id, index, "malformed") < s.malformed_prob {
            Outcome::Malformed
        } else if self.draw(problem_id, index, "broken") < s.compile_error_prob {
            Outcome::Broken
        } else {
            Outcome::Fail
        }
    }

    /// The full response text for one attempt, or `None` for an injected provider error.
    pub fn response(&self, problem_id: &str, index: u32, temperature: f64) -> Option<String> {
        let outcome = self.outcome(problem_id, index, temperature);
        let variants = self.settings.variant_count(temperature);
        let variant = ((self.draw(problem_id, index, "variant") * variants as f64) as u32).min(variants - 1);
        let text = match outcome {
            Outcome::ProviderError => return None,
            Outcome::Malformed => {
                "I'm sorry, but the specification is ambiguous; please clarify the expected behaviour."
                    .to_string()
            }
            Outcome::Pass => wrap(&variant_code(problem_id, variant, Some(problem_id), false)),
            Outcome::Fail => wrap(&variant_code(problem_id, variant, None, false)),
            Outcome::Broken => wrap(&variant_code(problem_id, variant, None, true)),
        };
        Some(text)
    }
}

fn wrap(code: &str) -> String {
    format!("Here is the implementation.\n\n```verilog\n{code}\n```\n")
}

const PORT_NAMES: [(&str, &str, &str); 4] = [
    ("a", "b", "y"),
    ("in0", "in1", "out"),
    ("x", "z", "q"),
    ("din_a", "din_b", "dout"),
];
const OPS: [&str; 5] = ["&", "|", "^", "+", "-"];
const WIDTHS: [u32; 4] = [1, 4, 8, 16];
const TEMPS: [&str; 4] = ["tmp", "t0", "acc", "stage"];

/// Deterministic module text for one variant of a problem's answer.
pub fn variant_code(problem_id: &str, variant: u32, passes_for: Option<&str>, broken: bool) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(digest::seed(&[
        b"variant",
        problem_id.as_bytes(),
        &variant.to_le_bytes(),
    ]));
    let (a, b, y) = *PORT_NAMES.choose(&mut rng).unwrap();
    let w = *WIDTHS.choose(&mut rng).unwrap();
    let range = if w == 1 { String::new() } else { format!("[{}:0] ", w - 1) };
    let op1 = OPS.choose(&mut rng).unwrap();
    let op2 = OPS.choose(&mut rng).unwrap();
    let style = rng.random_range(0..4u32);
    let out_kind = if style == 1 { "reg" } else { "wire" };

    let mut body = Vec::new();
    match style {
        0 => body.push(format!("    assign {y} = {a} {op1} {b};")),
        1 => {
            body.push("    always @(*) begin".to_string());
            body.push(format!("        {y} = {a} {op1} {b};"));
            body.push("    end".to_string());
        }
        2 => {
            let t = TEMPS.choose(&mut rng).unwrap();
            body.push(format!("    wire {range}{t};"));
            body.push(format!("    assign {t} = {a} {op1} {b};"));
            body.push(format!("    assign {y} = {t} {op2} {a};"));
        }
        _ => body.push(format!("    assign {y} = ({a} {op1} {b}) ? {a} : {b};")),
    }
    for k in 0..rng.random_range(0..3u32) {
        body.push(format!("    wire unused_{k} = ^{a};"));
    }
    if let Some(id) = passes_for {
        body.push(format!("    // {}", pass_marker(id)));
    }
    let close = if broken { "" } else { ")" };
    format!(
        "module top_module (\n    input  wire {range}{a},\n    input  wire {range}{b},\n    output {out_kind} {range}{y}\n{close};\n{}\nendmodule",
        body.join("\n")
    )
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

#[async_trait]
impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &GenerationRequest) -> Result<Completion, ProviderFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if self.settings.gen_delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.settings.gen_delay_ms)).await;
        }
        let text = self.response(&request.problem_id, request.index, request.params.temperature);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match text {
            Some(text) => Ok(Completion {
                usage: UsageRecord::new(word_count(&request.prompt), word_count(&text)),
                text,
            }),
            None => Err(ProviderFailure::permanent("mock provider: injected failure")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::extract_code;

    #[test]
    fn scripted_attempts() {
        let mut s = MockSettings::default();
        s.script.insert("p".into(), vec![3]);
        let m = MockProvider::new(s, 0);
        for i in 0..5 {
            let code = extract_code(&m.response("p", i, 1.0).unwrap()).unwrap();
            assert_eq!(code.contains(&pass_marker("p")), i == 2, "attempt {}", i + 1);
        }
    }

    #[test]
    fn deterministic_and_extractable() {
        let m = MockProvider::new(MockSettings::default(), 42);
        for i in 0..20 {
            let r = m.response("q", i, 0.7).unwrap();
            assert_eq!(Some(r.clone()), m.response("q", i, 0.7));
            assert!(extract_code(&r).is_ok());
        }
    }

    #[test]
    fn zero_temperature_emits_one_variant() {
        let s = MockSettings { pass_prob: 0.0, pass_prob_per_temp: 0.0, ..Default::default() };
        let m = MockProvider::new(s, 1);
        let first = m.response("z", 0, 0.0).unwrap();
        for i in 1..30 {
            assert_eq!(m.response("z", i, 0.0).unwrap(), first);
        }
    }

    #[test]
    fn higher_temperature_never_loses_passes() {
        let m = MockProvider::new(MockSettings::default(), 9);
        for i in 0..200 {
            let lo = m.response("t", i, 0.2).unwrap().contains("pass:");
            let hi = m.response("t", i, 1.5).unwrap().contains("pass:");
            assert!(!lo || hi);
        }
    }

    #[test]
    fn broken_variant_unbalanced() {
        let code = variant_code("p", 3, None, true);
        let open = code.matches('(').count();
        let close = code.matches(')').count();
        assert_ne!(open, close);
    }
}
