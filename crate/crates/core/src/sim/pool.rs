use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tokio::sync::{mpsc, Mutex};

use super::{SimError, Simulator};
use crate::types::{Problem, Verdict};

/// One candidate waiting for simulation. `tag` travels through untouched.
#[derive(Debug)]
pub struct SimJob<T> {
    pub tag: T,
    pub code: String,
    pub problem: Arc<Problem>,
    pub retain: Option<PathBuf>,
}

#[derive(Debug)]
pub struct SimResult<T> {
    pub tag: T,
    pub verdict: Result<Verdict, SimError>,
}

/// Drains `jobs` with `workers` concurrent simulations.
///
/// Each worker runs one job at a time, so no more than `workers` simulator
/// processes exist at once. Every job produces exactly one result. After the
/// first simulator error the pool stops simulating and answers the remaining
/// jobs with [`SimError::Aborted`].
pub fn run_pool<T: Send + 'static>(
    jobs: mpsc::Receiver<SimJob<T>>,
    simulator: Arc<dyn Simulator>,
    workers: usize,
) -> mpsc::UnboundedReceiver<SimResult<T>> {
    assert!(workers >= 1, "sim pool needs at least one worker");
    let (tx, rx) = mpsc::unbounded_channel();
    let jobs = Arc::new(Mutex::new(jobs));
    let aborted = Arc::new(AtomicBool::new(false));
    for _ in 0..workers {
        let jobs = Arc::clone(&jobs);
        let tx = tx.clone();
        let simulator = Arc::clone(&simulator);
        let aborted = Arc::clone(&aborted);
        tokio::spawn(async move {
            loop {
                let job = { jobs.lock().await.recv().await };
                let Some(job) = job else { break };
                let verdict = if aborted.load(Ordering::SeqCst) {
                    Err(SimError::Aborted)
                } else {
                    let v = simulator
                        .simulate(&job.code, &job.problem, job.retain.as_deref())
                        .await;
                    if v.is_err() {
                        aborted.store(true, Ordering::SeqCst);
                    }
                    v
                };
                if tx.send(SimResult { tag: job.tag, verdict }).is_err() {
                    break;
                }
            }
        });
    }
    rx
}
