use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intra::{MessageQueue, Notify};

pub type CallbackError = Box<dyn std::error::Error + Send + Sync>;
pub type CallbackResult = Result<(), CallbackError>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("callback {entity} of node {node} failed: {message}")]
    CallbackFailed {
        node: String,
        entity: String,
        message: String,
    },
    #[error("callback {entity} of node {node} panicked: {message}")]
    CallbackPanicked {
        node: String,
        entity: String,
        message: String,
    },
    #[error("background task of node {node} failed: {message}")]
    TaskFailed { node: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "threads", rename_all = "kebab-case")]
pub enum ExecutorKind {
    SingleThreaded,
    MultiThreaded(usize),
}

impl ExecutorKind {
    /// Multi-threaded with one worker per logical CPU, capped at 4.
    pub fn default_multi() -> Self {
        ExecutorKind::MultiThreaded(default_thread_count())
    }

    pub fn threads(self) -> usize {
        match self {
            ExecutorKind::SingleThreaded => 1,
            ExecutorKind::MultiThreaded(n) => n.max(1),
        }
    }
}

pub fn default_thread_count() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(4)
}

/// Generation counter the executor sleeps on; bumped whenever work may have appeared.
#[derive(Debug, Default)]
pub struct WaitSet {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl WaitSet {
    pub fn generation(&self) -> u64 {
        *self.generation.lock().unwrap()
    }

    pub fn bump(&self) {
        *self.generation.lock().unwrap() += 1;
        self.cv.notify_all();
    }

    /// Sleeps until the generation moves past `seen` or `deadline` passes.
    pub fn wait(&self, seen: u64, deadline: Option<Instant>) {
        let mut g = self.generation.lock().unwrap();
        while *g == seen {
            match deadline {
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return;
                    }
                    g = self.cv.wait_timeout(g, d - now).unwrap().0;
                }
                None => g = self.cv.wait(g).unwrap(),
            }
        }
    }
}

impl Notify for WaitSet {
    fn notify(&self) {
        self.bump();
    }
}

struct ShutdownInner {
    requested: AtomicBool,
    waitset: Arc<WaitSet>,
    error: Mutex<Option<ExecError>>,
}

/// Idempotent shutdown signal shared by everything in one container.
#[derive(Clone)]
pub struct ShutdownHandle {
    inner: Arc<ShutdownInner>,
}

impl ShutdownHandle {
    pub fn new(waitset: Arc<WaitSet>) -> Self {
        Self {
            inner: Arc::new(ShutdownInner {
                requested: AtomicBool::new(false),
                waitset,
                error: Mutex::new(None),
            }),
        }
    }

    pub fn request(&self) {
        self.inner.requested.store(true, Ordering::Release);
        self.inner.waitset.bump();
    }

    pub fn is_requested(&self) -> bool {
        self.inner.requested.load(Ordering::Acquire)
    }

    /// Records the first failure and shuts down.
    pub fn fail(&self, err: ExecError) {
        let mut slot = self.inner.error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        drop(slot);
        self.request();
    }

    pub fn error(&self) -> Option<ExecError> {
        self.inner.error.lock().unwrap().clone()
    }

    pub fn waitset(&self) -> &Arc<WaitSet> {
        &self.inner.waitset
    }
}

pub(crate) trait Executable: Send + Sync {
    fn ready(&self, now: Instant) -> bool;
    /// Next time this becomes ready on its own (timers only).
    fn deadline(&self) -> Option<Instant>;
    fn execute(&self, now: Instant) -> CallbackResult;
}

pub(crate) struct TimerExec {
    period: Duration,
    next_due: Mutex<Instant>,
    callback: Mutex<Box<dyn FnMut() -> CallbackResult + Send>>,
}

impl TimerExec {
    pub(crate) fn new(period: Duration, callback: Box<dyn FnMut() -> CallbackResult + Send>) -> Self {
        Self {
            period,
            next_due: Mutex::new(Instant::now() + period),
            callback: Mutex::new(callback),
        }
    }
}

impl Executable for TimerExec {
    fn ready(&self, now: Instant) -> bool {
        now >= *self.next_due.lock().unwrap()
    }

    fn deadline(&self) -> Option<Instant> {
        Some(*self.next_due.lock().unwrap())
    }

    fn execute(&self, now: Instant) -> CallbackResult {
        {
            let mut due = self.next_due.lock().unwrap();
            // Skip ticks that were missed entirely rather than bursting.
            while *due <= now {
                *due += self.period;
            }
        }
        (self.callback.lock().unwrap())()
    }
}

pub(crate) struct SubscriptionExec<M> {
    queue: Arc<MessageQueue<M>>,
    // Holds the channel registration alive.
    _keepalive: Box<dyn Any + Send + Sync>,
    callback: Mutex<Box<dyn FnMut(Arc<M>) -> CallbackResult + Send>>,
}

impl<M> SubscriptionExec<M> {
    pub(crate) fn new(
        queue: Arc<MessageQueue<M>>,
        keepalive: Box<dyn Any + Send + Sync>,
        callback: Box<dyn FnMut(Arc<M>) -> CallbackResult + Send>,
    ) -> Self {
        Self {
            queue,
            _keepalive: keepalive,
            callback: Mutex::new(callback),
        }
    }
}

impl<M: Send + Sync + 'static> Executable for SubscriptionExec<M> {
    fn ready(&self, _now: Instant) -> bool {
        !self.queue.is_empty()
    }

    fn deadline(&self) -> Option<Instant> {
        None
    }

    fn execute(&self, _now: Instant) -> CallbackResult {
        match self.queue.take() {
            Some(msg) => (self.callback.lock().unwrap())(msg),
            None => Ok(()),
        }
    }
}

/// One schedulable unit (timer or subscription) plus its bookkeeping.
pub struct Entity {
    node: String,
    label: String,
    exec: Box<dyn Executable>,
    busy: AtomicBool,
    active: AtomicUsize,
    served: AtomicU64,
}

impl Entity {
    pub(crate) fn new(node: &str, label: String, exec: Box<dyn Executable>) -> Self {
        Self {
            node: node.to_string(),
            label,
            exec,
            busy: AtomicBool::new(false),
            active: AtomicUsize::new(0),
            served: AtomicU64::new(0),
        }
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }

    fn try_claim(&self) -> bool {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
    }

    fn release(&self) {
        self.busy.store(false, Ordering::Release);
    }
}

#[derive(Debug, Default)]
pub struct ExecStats {
    pub callbacks: AtomicU64,
    pub reentrancy_violations: AtomicU64,
}

fn panic_message(p: Box<dyn Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic".to_string()
    }
}

/// Runs one callback of a claimed entity. Returns false if the container must stop.
fn run_claimed(e: &Entity, shutdown: &ShutdownHandle, stats: &ExecStats) -> bool {
    if e.active.fetch_add(1, Ordering::AcqRel) != 0 {
        stats.reentrancy_violations.fetch_add(1, Ordering::Relaxed);
    }
    let outcome = catch_unwind(AssertUnwindSafe(|| e.exec.execute(Instant::now())));
    e.active.fetch_sub(1, Ordering::AcqRel);
    e.served.fetch_add(1, Ordering::Relaxed);
    stats.callbacks.fetch_add(1, Ordering::Relaxed);
    let err = match outcome {
        Ok(Ok(())) => return true,
        Ok(Err(err)) => ExecError::CallbackFailed {
            node: e.node.clone(),
            entity: e.label.clone(),
            message: err.to_string(),
        },
        Err(p) => ExecError::CallbackPanicked {
            node: e.node.clone(),
            entity: e.label.clone(),
            message: panic_message(p),
        },
    };
    log::error!("{err}");
    shutdown.fail(err);
    false
}

fn next_deadline(entities: &[Arc<Entity>]) -> Option<Instant> {
    entities
        .iter()
        .filter(|e| !e.busy.load(Ordering::Acquire))
        .filter_map(|e| e.exec.deadline())
        .min()
}

// Wakes periodically even with nothing scheduled, so a lost wakeup can never hang a container.
const MAX_IDLE: Duration = Duration::from_millis(200);

fn idle_wait(ws: &WaitSet, seen: u64, entities: &[Arc<Entity>]) {
    let cap = Instant::now() + MAX_IDLE;
    let deadline = next_deadline(entities).map_or(cap, |d| d.min(cap));
    ws.wait(seen, Some(deadline));
}

/// Serves entities until shutdown is requested.
pub fn spin_entities(
    entities: &[Arc<Entity>],
    kind: ExecutorKind,
    shutdown: &ShutdownHandle,
    stats: &ExecStats,
) -> Result<(), ExecError> {
    match kind {
        ExecutorKind::SingleThreaded => spin_single(entities, shutdown, stats),
        ExecutorKind::MultiThreaded(n) => {
            let cursor = AtomicUsize::new(0);
            std::thread::scope(|s| {
                for i in 1..n.max(1) {
                    let cursor = &cursor;
                    std::thread::Builder::new()
                        .name(format!("executor-{i}"))
                        .spawn_scoped(s, move || worker(entities, cursor, shutdown, stats))
                        .expect("spawn executor worker");
                }
                worker(entities, &cursor, shutdown, stats);
            });
        }
    }
    match shutdown.error() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Round-robin: every ready entity is served at most once per round, so
/// between two servings of one entity every other ready entity gets a turn.
fn spin_single(entities: &[Arc<Entity>], shutdown: &ShutdownHandle, stats: &ExecStats) {
    let ws = shutdown.waitset().clone();
    while !shutdown.is_requested() {
        let seen = ws.generation();
        let mut served = false;
        for e in entities {
            if shutdown.is_requested() {
                return;
            }
            if e.exec.ready(Instant::now()) {
                e.try_claim();
                let ok = run_claimed(e, shutdown, stats);
                e.release();
                served = true;
                if !ok {
                    return;
                }
            }
        }
        if !served {
            idle_wait(&ws, seen, entities);
        }
    }
}

fn worker(
    entities: &[Arc<Entity>],
    cursor: &AtomicUsize,
    shutdown: &ShutdownHandle,
    stats: &ExecStats,
) {
    let ws = shutdown.waitset().clone();
    let n = entities.len();
    while !shutdown.is_requested() {
        let seen = ws.generation();
        let mut ran = false;
        if n > 0 {
            let start = cursor.fetch_add(1, Ordering::Relaxed) % n;
            for i in 0..n {
                let e = &entities[(start + i) % n];
                if !e.exec.ready(Instant::now()) || !e.try_claim() {
                    continue;
                }
                // Re-check under the claim: another worker may have drained it.
                let ok = if e.exec.ready(Instant::now()) {
                    ran = true;
                    run_claimed(e, shutdown, stats)
                } else {
                    true
                };
                e.release();
                ws.bump();
                if !ok {
                    return;
                }
                if ran {
                    break;
                }
            }
        }
        if !ran {
            idle_wait(&ws, seen, entities);
        }
    }
}
