//! Two-stage campaign pipeline: bounded generation feeding a bounded
//! simulation queue, with a single coordinator that owns all state and is
//! the only writer of the store.
//!
//! Sample indices are assigned at issue time and results are committed to
//! `samples.jsonl` strictly in index order, so the committed log of every
//! problem is a dense prefix that does not depend on completion order. In
//! early-stop mode, requests issued speculatively past the first pass are
//! written to `overshoot.jsonl` instead; they count toward cost only.

pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use tokio::sync::{mpsc, watch, Semaphore};
use tokio::task::JoinSet;

pub use store::{CampaignSnapshot, CampaignStore, ProblemProgress, StoreError, LAYOUT_VERSION};

use crate::config::{validate_config, CampaignConfig, ConfigError};
use crate::gateway::prompt::build_prompt_versioned;
use crate::gateway::{extract_code, Gateway, GatewayError, GenerationRequest, Provider, ProviderRegistry};
use crate::sim::{run_pool, SimError, SimJob, SimResult, Simulator, SimulatorRegistry};
use crate::types::{Problem, Sample, StopMode, Verdict, VerdictKind, SAMPLE_SCHEMA_VERSION};
use store::{failed_dir, StoreWriter};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortCause {
    ToolNotFound(String),
    OutputDirNotWritable(String),
    Simulator(String),
    TaskPanicked(String),
}

impl std::fmt::Display for AbortCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortCause::ToolNotFound(t) => write!(f, "simulator tool not found: {t}"),
            AbortCause::OutputDirNotWritable(m) => write!(f, "output directory not writable: {m}"),
            AbortCause::Simulator(m) => write!(f, "simulator failure: {m}"),
            AbortCause::TaskPanicked(m) => write!(f, "generation task panicked: {m}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("campaign aborted: {0}")]
    CampaignAborted(AbortCause),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("simulator setup: {0}")]
    SimSetup(SimError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for OrchestratorError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::ConfigMismatch(m) => OrchestratorError::ConfigMismatch(m),
            StoreError::Io { .. } => OrchestratorError::CampaignAborted(AbortCause::OutputDirNotWritable(e.to_string())),
            other => OrchestratorError::Store(other),
        }
    }
}

impl From<SimError> for AbortCause {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ToolNotFound(t) => AbortCause::ToolNotFound(t),
            other => AbortCause::Simulator(other.to_string()),
        }
    }
}

/// Live counters published while a campaign runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignProgress {
    pub problems_total: usize,
    pub problems_terminal: usize,
    /// Requests issued by this run.
    pub samples_issued: u64,
    /// Committed samples across the whole store.
    pub samples_committed: u64,
    /// Speculative samples written to overshoot logs by this run.
    pub overshoot: u64,
    /// Problems with a committed pass.
    pub passes: usize,
    /// Most generated-but-unsimulated samples held at once.
    pub peak_pending: usize,
    pub done: bool,
}

/// Provider and simulator a campaign runs against.
#[derive(Clone)]
pub struct Engines {
    pub provider: Arc<dyn Provider>,
    pub simulator: Arc<dyn Simulator>,
}

impl Engines {
    pub fn from_registries(
        config: &CampaignConfig,
        providers: &ProviderRegistry,
        simulators: &SimulatorRegistry,
    ) -> Result<Self, OrchestratorError> {
        Ok(Self {
            provider: providers.create(config)?,
            simulator: simulators.create(config).map_err(OrchestratorError::SimSetup)?,
        })
    }

    pub fn builtin(config: &CampaignConfig) -> Result<Self, OrchestratorError> {
        Self::from_registries(config, &ProviderRegistry::builtin(), &SimulatorRegistry::builtin())
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub store: CampaignStore,
    pub stats: CampaignProgress,
    pub elapsed: Duration,
}

/// Runs a campaign to completion with the built-in provider and simulator
/// registries. An existing store at the output directory is continued if its
/// snapshot matches.
pub async fn run_campaign(suite: Vec<Problem>, config: CampaignConfig) -> Result<CampaignStore, OrchestratorError> {
    let config = validate_config(&config, &config.pricing)?;
    let engines = Engines::builtin(&config)?;
    Ok(Campaign::new(suite, config, engines).run().await?.store)
}

/// Continues every non-terminal problem of the store at `root`.
pub async fn resume_campaign(root: &Path) -> Result<CampaignStore, OrchestratorError> {
    let campaign = Campaign::resume(root, Engines::builtin)?;
    Ok(campaign.run().await?.store)
}

/// A configured campaign, ready to run.
pub struct Campaign {
    problems: Vec<Problem>,
    config: CampaignConfig,
    root: PathBuf,
    engines: Engines,
    progress: Option<watch::Sender<CampaignProgress>>,
}

impl Campaign {
    pub fn new(problems: Vec<Problem>, config: CampaignConfig, engines: Engines) -> Self {
        let root = config.output_dir.clone();
        Self { problems, config, root, engines, progress: None }
    }

    /// Rebuilds a campaign from the snapshot stored at `root`.
    pub fn resume(
        root: &Path,
        engines: impl FnOnce(&CampaignConfig) -> Result<Engines, OrchestratorError>,
    ) -> Result<Self, OrchestratorError> {
        let store = CampaignStore::open(root)?;
        let config = store.config().clone();
        let engines = engines(&config)?;
        Ok(Self {
            problems: store.problems().to_vec(),
            config,
            root: root.to_path_buf(),
            engines,
            progress: None,
        })
    }

    pub fn with_progress(mut self, tx: watch::Sender<CampaignProgress>) -> Self {
        self.progress = Some(tx);
        self
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub async fn run(self) -> Result<CampaignOutcome, OrchestratorError> {
        let started = Instant::now();
        let config = validate_config(&self.config, &self.config.pricing)?;
        let mut seen = BTreeSet::new();
        for p in &self.problems {
            if !seen.insert(p.id.as_str()) {
                return Err(OrchestratorError::InvalidSuite(format!("duplicate problem id {:?}", p.id)));
            }
        }
        let snapshot = CampaignSnapshot {
            layout_version: LAYOUT_VERSION,
            config: config.clone(),
            problem_ids: self.problems.iter().map(|p| p.id.clone()).collect(),
        };
        let writer = StoreWriter::open_or_create(&self.root, &snapshot, &self.problems)?;
        let existing = CampaignStore::open(&self.root)?;
        let stats = Coordinator::new(&config, &self.root, &self.problems, &existing, writer, self.engines, self.progress)?
            .run()
            .await?;
        Ok(CampaignOutcome { store: CampaignStore::open(&self.root)?, stats, elapsed: started.elapsed() })
    }
}

/// Counts generated samples that have not finished simulation.
#[derive(Default)]
struct PendingGauge {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl PendingGauge {
    fn inc(&self) {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn dec(&self) {
        self.current.fetch_sub(1, Ordering::SeqCst);
    }
}

struct GaugedSimulator {
    inner: Arc<dyn Simulator>,
    gauge: Arc<PendingGauge>,
}

#[async_trait]
impl Simulator for GaugedSimulator {
    fn name(&self) -> &str {
        self.inner.name()
    }

    async fn simulate(&self, code: &str, problem: &Problem, retain: Option<&Path>) -> Result<Verdict, SimError> {
        let v = self.inner.simulate(code, problem, retain).await;
        self.gauge.dec();
        v
    }
}

type Tag = (usize, Sample);

enum Event {
    /// Sample finished without simulation (provider or extraction failure).
    Resolved(usize, Sample),
    Simulated(SimResult<Tag>),
}

struct ProblemState {
    problem: Arc<Problem>,
    prompt: Arc<str>,
    next_index: u32,
    committed: u32,
    passed: bool,
    /// A pass has completed but is not yet committed.
    pass_in_buffer: bool,
    buffer: BTreeMap<u32, Sample>,
    terminal: bool,
}

struct Coordinator {
    states: Vec<ProblemState>,
    max_samples: u32,
    stop_mode: StopMode,
    gen_concurrency: usize,
    queue_capacity: usize,
    sim_workers: usize,
    keep_failed: bool,
    root: PathBuf,
    params: crate::types::GenerationParams,
    gateway: Arc<Gateway>,
    simulator: Arc<dyn Simulator>,
    writer: StoreWriter,
    progress_tx: Option<watch::Sender<CampaignProgress>>,
    progress: CampaignProgress,
}

impl Coordinator {
    fn new(
        config: &CampaignConfig,
        root: &Path,
        problems: &[Problem],
        existing: &CampaignStore,
        writer: StoreWriter,
        engines: Engines,
        progress_tx: Option<watch::Sender<CampaignProgress>>,
    ) -> Result<Self, OrchestratorError> {
        let max_samples = config.max_samples();
        let stop_mode = config.stop_mode();
        let mut progress = CampaignProgress { problems_total: problems.len(), ..Default::default() };
        let mut states = Vec::with_capacity(problems.len());
        for p in problems {
            let prompt = build_prompt_versioned(p, &config.prompt_version).ok_or_else(|| ConfigError::InvalidValue {
                field: "prompt_version",
                message: format!("unknown prompt version {:?}", config.prompt_version),
            })?;
            let prog = ProblemProgress::from_samples(&p.id, existing.samples(&p.id), stop_mode, max_samples);
            progress.samples_committed += prog.samples_done as u64;
            progress.passes += prog.first_pass_index.is_some() as usize;
            progress.problems_terminal += prog.terminal as usize;
            states.push(ProblemState {
                problem: Arc::new(p.clone()),
                prompt: prompt.into(),
                next_index: prog.samples_done,
                committed: prog.samples_done,
                passed: prog.first_pass_index.is_some(),
                pass_in_buffer: false,
                buffer: BTreeMap::new(),
                terminal: prog.terminal,
            });
        }
        if progress.samples_committed > 0 {
            log::info!(
                "continuing store {}: {} samples committed, {}/{} problems terminal",
                root.display(),
                progress.samples_committed,
                progress.problems_terminal,
                progress.problems_total
            );
        }
        let gen_concurrency = config.gen_concurrency();
        let retry = config.provider_profile()?.retry_policy();
        Ok(Self {
            states,
            max_samples,
            stop_mode,
            gen_concurrency,
            queue_capacity: config.queue_capacity(),
            sim_workers: config.sim_workers(),
            keep_failed: config.keep_failed,
            root: root.to_path_buf(),
            params: config.params.clone(),
            gateway: Arc::new(Gateway::new(engines.provider, retry, gen_concurrency)),
            simulator: engines.simulator,
            writer,
            progress_tx,
            progress,
        })
    }

    fn issuable(&self, p: usize) -> bool {
        let s = &self.states[p];
        !s.terminal
            && s.next_index < self.max_samples
            && !(self.stop_mode == StopMode::EarlyStop && (s.passed || s.pass_in_buffer))
    }

    fn publish(&self) {
        if let Some(tx) = &self.progress_tx {
            tx.send_replace(self.progress.clone());
        }
    }

    fn write_overshoot(&mut self, sample: &Sample) -> Result<(), OrchestratorError> {
        self.writer.append_overshoot(sample)?;
        self.progress.overshoot += 1;
        Ok(())
    }

    /// Buffers a finished sample and commits the dense prefix that is ready.
    fn accept(&mut self, p: usize, sample: Sample) -> Result<(), OrchestratorError> {
        if self.states[p].terminal {
            return self.write_overshoot(&sample);
        }
        let st = &mut self.states[p];
        if sample.is_pass() {
            st.pass_in_buffer = true;
        }
        st.buffer.insert(sample.index, sample);
        loop {
            let st = &mut self.states[p];
            if st.terminal {
                break;
            }
            let Some(s) = st.buffer.remove(&st.committed) else { break };
            self.writer.append_sample(&s)?;
            let st = &mut self.states[p];
            st.committed += 1;
            self.progress.samples_committed += 1;
            if s.is_pass() && !st.passed {
                st.passed = true;
                self.progress.passes += 1;
            }
            st.terminal =
                st.committed >= self.max_samples || (self.stop_mode == StopMode::EarlyStop && st.passed);
            if st.terminal {
                self.progress.problems_terminal += 1;
            }
        }
        if self.states[p].terminal {
            let rest = std::mem::take(&mut self.states[p].buffer);
            for s in rest.into_values() {
                self.write_overshoot(&s)?;
            }
        }
        Ok(())
    }

    async fn run(mut self) -> Result<CampaignProgress, OrchestratorError> {
        let gauge = Arc::new(PendingGauge::default());
        let gen_slots = Arc::new(Semaphore::new(self.gen_concurrency));
        let (queue_tx, queue_rx) = mpsc::channel::<SimJob<Tag>>(self.queue_capacity);
        let simulator: Arc<dyn Simulator> =
            Arc::new(GaugedSimulator { inner: Arc::clone(&self.simulator), gauge: Arc::clone(&gauge) });
        let mut sim_rx = run_pool(queue_rx, simulator, self.sim_workers);
        let (ev_tx, mut ev_rx) = mpsc::unbounded_channel::<Event>();
        let forward_tx = ev_tx.clone();
        let forwarder = tokio::spawn(async move {
            while let Some(r) = sim_rx.recv().await {
                if forward_tx.send(Event::Simulated(r)).is_err() {
                    break;
                }
            }
        });

        let max_outstanding = self.gen_concurrency + self.queue_capacity + self.sim_workers;
        let n = self.states.len();
        let mut outstanding = 0usize;
        let mut rr = 0usize;
        let mut tasks = JoinSet::new();
        let mut abort: Option<AbortCause> = None;
        self.publish();

        loop {
            while abort.is_none() && outstanding < max_outstanding {
                let Some(p) = (0..n).map(|off| (rr + off) % n).find(|&p| self.issuable(p)) else {
                    break;
                };
                rr = (p + 1) % n;
                let st = &mut self.states[p];
                let index = st.next_index;
                st.next_index += 1;
                outstanding += 1;
                self.progress.samples_issued += 1;
                let retain = self.keep_failed.then(|| failed_dir(&self.root, &st.problem.id, index));
                tasks.spawn(generate_one(GenTask {
                    slot: p,
                    problem: Arc::clone(&st.problem),
                    prompt: Arc::clone(&st.prompt),
                    index,
                    params: self.params.clone(),
                    retain,
                    gateway: Arc::clone(&self.gateway),
                    gen_slots: Arc::clone(&gen_slots),
                    queue_tx: queue_tx.clone(),
                    ev_tx: ev_tx.clone(),
                    gauge: Arc::clone(&gauge),
                }));
            }
            self.progress.peak_pending = gauge.peak.load(Ordering::SeqCst);
            self.publish();
            if outstanding == 0 || abort.is_some() {
                break;
            }

            let event = tokio::select! {
                ev = ev_rx.recv() => ev.expect("coordinator keeps a sender alive"),
                Some(joined) = tasks.join_next(), if !tasks.is_empty() => {
                    if let Err(e) = joined {
                        if e.is_panic() {
                            abort = Some(AbortCause::TaskPanicked(e.to_string()));
                        }
                    }
                    continue;
                }
            };
            outstanding -= 1;
            let result = match event {
                Event::Resolved(p, sample) => self.accept(p, sample),
                Event::Simulated(SimResult { tag: (p, mut sample), verdict }) => match verdict {
                    Ok(v) => {
                        sample.verdict = v;
                        self.accept(p, sample)
                    }
                    Err(SimError::Aborted) => Ok(()),
                    Err(e) => {
                        log::error!("{}#{}: {e}", sample.problem_id, sample.index);
                        abort.get_or_insert(AbortCause::from(e));
                        Ok(())
                    }
                },
            };
            if let Err(e) = result {
                match e {
                    OrchestratorError::CampaignAborted(cause) => {
                        abort.get_or_insert(cause);
                    }
                    other => {
                        tasks.abort_all();
                        forwarder.abort();
                        return Err(other);
                    }
                }
            }
        }

        tasks.abort_all();
        forwarder.abort();
        self.progress.peak_pending = gauge.peak.load(Ordering::SeqCst);
        if let Some(cause) = abort {
            self.publish();
            return Err(OrchestratorError::CampaignAborted(cause));
        }
        self.progress.done = true;
        self.publish();
        Ok(self.progress)
    }
}

struct GenTask {
    slot: usize,
    problem: Arc<Problem>,
    prompt: Arc<str>,
    index: u32,
    params: crate::types::GenerationParams,
    retain: Option<PathBuf>,
    gateway: Arc<Gateway>,
    gen_slots: Arc<Semaphore>,
    queue_tx: mpsc::Sender<SimJob<Tag>>,
    ev_tx: mpsc::UnboundedSender<Event>,
    gauge: Arc<PendingGauge>,
}

/// Generates one sample and hands it to the simulation queue. The
/// generation slot is held until the queue accepts the job, so a full queue
/// stalls generation.
async fn generate_one(t: GenTask) {
    let Ok(_slot) = t.gen_slots.acquire_owned().await else { return };
    let request = GenerationRequest::new(&t.problem.id, t.index, t.prompt.to_string(), t.params.clone());
    let result = t.gateway.generate(&request).await;
    let mut sample = Sample {
        schema_version: SAMPLE_SCHEMA_VERSION,
        problem_id: t.problem.id.clone(),
        index: t.index,
        raw_response: String::new(),
        extracted_code: None,
        verdict: Verdict::new(VerdictKind::SimFail, ""),
        usage: result.usage,
        latency_ms: result.latency_ms,
        params: t.params,
        created_at: chrono::Utc::now(),
    };
    let text = match result.outcome {
        Ok(text) => text,
        Err(e) => {
            sample.verdict = Verdict::new(VerdictKind::ProviderError, e.to_string());
            let _ = t.ev_tx.send(Event::Resolved(t.slot, sample));
            return;
        }
    };
    sample.raw_response = text;
    match extract_code(&sample.raw_response) {
        Err(e) => {
            sample.verdict = Verdict::new(VerdictKind::ExtractError, e.to_string());
            let _ = t.ev_tx.send(Event::Resolved(t.slot, sample));
        }
        Ok(code) => {
            sample.extracted_code = Some(code.clone());
            t.gauge.inc();
            let job = SimJob { tag: (t.slot, sample), code, problem: t.problem, retain: t.retain };
            if t.queue_tx.send(job).await.is_err() {
                t.gauge.dec();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::MockProvider;
    use crate::sim::MockSimulator;

    fn problem(id: &str) -> Problem {
        Problem {
            id: id.into(),
            spec_text: format!("Implement {id}."),
            testbench_source: "tb".into(),
            ref_code: None,
            tags: Default::default(),
            suite: "t".into(),
            pass_regex: None,
            fail_regex: None,
        }
    }

    fn config(out: &Path, max: u32, mode: StopMode) -> CampaignConfig {
        let mut c = CampaignConfig::mock("unused", out);
        c.max_samples = Some(max);
        c.stop_mode = Some(mode);
        c.gen_concurrency = Some(4);
        c.sim_workers = Some(2);
        c.queue_capacity = Some(2);
        c.mock.script.insert("a".into(), vec![3]);
        c.mock.script.insert("b".into(), vec![1]);
        c.mock.script.insert("c".into(), vec![]);
        c
    }

    fn engines(c: &CampaignConfig) -> Engines {
        Engines {
            provider: Arc::new(MockProvider::new(c.mock.clone(), c.seed)),
            simulator: Arc::new(MockSimulator::new(Duration::ZERO)),
        }
    }

    fn counts(store: &CampaignStore) -> Vec<u32> {
        store.progress().iter().map(|p| p.samples_done).collect()
    }

    #[tokio::test]
    async fn early_stop_counts() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), 5, StopMode::EarlyStop);
        let problems = vec![problem("a"), problem("b"), problem("c")];
        let out = Campaign::new(problems, c.clone(), engines(&c)).run().await.unwrap();
        assert_eq!(counts(&out.store), vec![3, 1, 5]);
        let fp: Vec<_> = out.store.progress().iter().map(|p| p.first_pass_index).collect();
        assert_eq!(fp, vec![Some(3), Some(1), None]);
        assert!(out.stats.done);
        assert!(out.store.is_complete());
    }

    #[tokio::test]
    async fn fixed_n_counts() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), 5, StopMode::FixedN);
        let problems = vec![problem("a"), problem("b"), problem("c")];
        let out = Campaign::new(problems, c.clone(), engines(&c)).run().await.unwrap();
        assert_eq!(counts(&out.store), vec![5, 5, 5]);
        assert_eq!(out.stats.overshoot, 0);
    }

    #[tokio::test]
    async fn rerun_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), 4, StopMode::EarlyStop);
        let problems = vec![problem("a"), problem("c")];
        Campaign::new(problems.clone(), c.clone(), engines(&c)).run().await.unwrap();
        let again = Campaign::resume(dir.path(), |c| Ok(engines(c))).unwrap().run().await.unwrap();
        assert_eq!(again.stats.samples_issued, 0);
        assert_eq!(counts(&again.store), vec![3, 4]);
    }

    #[tokio::test]
    async fn resume_from_empty_dir_is_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Campaign::resume(dir.path(), |c| Ok(engines(c))),
            Err(OrchestratorError::ConfigMismatch(_))
        ));
    }

    #[tokio::test]
    async fn missing_tool_aborts_with_valid_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), 3, StopMode::FixedN);
        c.sim_profile = "nope".into();
        c.simulators.insert(
            "nope".into(),
            crate::sim::SimProfile {
                name: "nope".into(),
                compile_cmd: vec![],
                run_cmd: vec!["hdlscale-no-such-tool".into()],
                default_pass_regex: "x".into(),
                default_fail_regex: "y".into(),
                timeout_s: 5,
            },
        );
        let e = Engines::from_registries(&c, &ProviderRegistry::builtin(), &SimulatorRegistry::builtin()).unwrap();
        let err = Campaign::new(vec![problem("a")], c, e).run().await.unwrap_err();
        assert!(matches!(err, OrchestratorError::CampaignAborted(AbortCause::ToolNotFound(_))), "{err}");
        assert!(CampaignStore::open(dir.path()).is_ok());
    }

    #[tokio::test]
    async fn provider_and_extract_errors_count_against_budget() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), 6, StopMode::FixedN);
        c.mock.provider_error_prob = 0.5;
        c.mock.malformed_prob = 0.5;
        let out = Campaign::new(vec![problem("c")], c.clone(), engines(&c)).run().await.unwrap();
        let s = out.store.samples("c");
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|s| s.verdict.kind != VerdictKind::Pass));
        assert!(s.iter().all(|s| s.extracted_code.is_some() || !s.verdict.is_pass()));
    }
}
