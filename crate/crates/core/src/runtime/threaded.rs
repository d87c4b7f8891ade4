use super::*;
use crate::envsim::Transition;
use crate::learners::DemoSample;
use parking_lot::{Condvar, Mutex, RwLock};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, RecvTimeoutError, TryRecvError, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

const STALL_TIMEOUT: Duration = Duration::from_secs(60);
const QUEUE_DEPTH: usize = 1024;
const DEMO_QUEUE_DEPTH: usize = 4;

/// Latest-wins, versioned, read-only snapshots.
#[derive(Debug)]
pub struct SnapshotChannel<T> {
    inner: RwLock<(u64, Arc<T>)>,
}

impl<T> SnapshotChannel<T> {
    pub fn new(initial: T) -> Self {
        Self { inner: RwLock::new((0, Arc::new(initial))) }
    }

    /// Publishes a new snapshot and returns its version.
    pub fn publish(&self, value: T) -> u64 {
        let value = Arc::new(value);
        let mut guard = self.inner.write();
        guard.0 += 1;
        guard.1 = value;
        guard.0
    }

    pub fn latest(&self) -> (u64, Arc<T>) {
        let guard = self.inner.read();
        (guard.0, Arc::clone(&guard.1))
    }
}

/// Caps the total number of transitions workers may produce.
struct Credit {
    state: Mutex<(u64, u64, bool)>,
    cv: Condvar,
}

impl Credit {
    fn new(allowed: u64) -> Self {
        Self { state: Mutex::new((allowed, 0, false)), cv: Condvar::new() }
    }

    fn acquire(&self) -> bool {
        let mut s = self.state.lock();
        while s.1 >= s.0 && !s.2 {
            self.cv.wait(&mut s);
        }
        if s.2 {
            return false;
        }
        s.1 += 1;
        true
    }

    fn raise(&self, allowed: u64) {
        let mut s = self.state.lock();
        if allowed > s.0 {
            s.0 = allowed;
            self.cv.notify_all();
        }
    }

    fn stop(&self) {
        self.state.lock().2 = true;
        self.cv.notify_all();
    }
}

enum Msg {
    Transition(Transition, bool),
    Failed(usize, String),
}

struct Shared {
    credit: Credit,
    stop: AtomicBool,
}

pub(super) fn run_threaded(
    config: &RunConfig,
    scenarios: &[Arc<PreparedScenario>],
    demos: &Arc<DemoDataset>,
) -> Result<RunOutput, RuntimeError> {
    config.validate()?;
    if scenarios.is_empty() {
        return Err(RuntimeError::Config("empty training bucket".into()));
    }
    let bcsac = config.method == Method::BcSac;
    if bcsac && demos.usable_len() == 0 {
        return Err(RuntimeError::Config("no usable demonstrations".into()));
    }
    let train = &config.train;
    let mut learner = ContinuousLearner::new(train.clone(), OBS_DIM, config.seed);
    let mut replay = ReplayBuffer::new(train.replay_capacity, train.warmup);
    let mut counters = RunCounters::default();
    let mut progress = Vec::new();
    let unit = (train.rl_per_il * train.rl_batch_size) as u64;
    let slack = (unit as f64 / train.sample_to_insert).ceil() as u64 * config.workers as u64;
    let allowance = |sampled: u64| (train.warmup as u64).max(((sampled + unit) as f64 / train.sample_to_insert).ceil() as u64) + slack;

    let shared = Arc::new(Shared { credit: Credit::new(allowance(0)), stop: AtomicBool::new(false) });
    let snapshots = Arc::new(SnapshotChannel::new(learner.actor.clone()));
    let scenarios: Arc<Vec<Arc<PreparedScenario>>> = Arc::new(scenarios.to_vec());
    let (tx, rx) = sync_channel::<Msg>(QUEUE_DEPTH);
    let (demo_tx, demo_rx) = sync_channel::<Vec<DemoSample>>(DEMO_QUEUE_DEPTH);

    let mut handles = Vec::new();
    for i in 0..config.workers {
        let (tx, shared, snapshots, scenarios) = (tx.clone(), Arc::clone(&shared), Arc::clone(&snapshots), Arc::clone(&scenarios));
        let (seed, reward) = (config.seed, config.reward);
        handles.push(thread::spawn(move || {
            let mut worker = Worker::new(seed, i);
            let (mut version, mut policy) = snapshots.latest();
            let mut sent = 0u64;
            while shared.credit.acquire() {
                let (v, p) = snapshots.latest();
                if v != version {
                    version = v;
                    policy = p;
                }
                match worker.step(&policy, &scenarios, &reward) {
                    Ok((t, started)) => {
                        if tx.send(Msg::Transition(t, started)).is_err() {
                            break;
                        }
                        sent += 1;
                    }
                    Err(e) => {
                        let _ = tx.send(Msg::Failed(i, e.to_string()));
                        break;
                    }
                }
            }
            sent
        }));
    }
    drop(tx);

    let mut demo_handles = Vec::new();
    if bcsac {
        for i in 0..config.demo_workers {
            let (demo_tx, shared, demos) = (demo_tx.clone(), Arc::clone(&shared), Arc::clone(demos));
            let (seed, batch) = (config.seed, train.bc_batch_size);
            demo_handles.push(thread::spawn(move || {
                let mut rng = stream_rng(seed, DEMO_WORKER_STREAM + i as u64);
                'outer: while !shared.stop.load(Ordering::Acquire) {
                    let Ok(b) = demos.sample(batch, &mut rng) else { break };
                    let mut item: Vec<DemoSample> = b.into_iter().cloned().collect();
                    loop {
                        match demo_tx.try_send(item) {
                            Ok(()) => break,
                            Err(TrySendError::Full(back)) => {
                                if shared.stop.load(Ordering::Acquire) {
                                    break 'outer;
                                }
                                item = back;
                                thread::sleep(Duration::from_micros(200));
                            }
                            Err(TrySendError::Disconnected(_)) => break 'outer,
                        }
                    }
                }
            }));
        }
    }
    drop(demo_tx);

    let handle = |msg: Msg, replay: &mut ReplayBuffer, counters: &mut RunCounters| -> Result<(), RuntimeError> {
        match msg {
            Msg::Transition(t, started) => {
                counters.enqueued += 1;
                counters.env_steps += 1;
                counters.episodes += started as u64;
                replay.insert(t);
                counters.inserted += 1;
                Ok(())
            }
            Msg::Failed(i, e) => Err(RuntimeError::Worker(format!("rollout worker {i}: {e}"))),
        }
    };

    let mut run = || -> Result<(), RuntimeError> {
        while learner.rl_steps < config.step_budget {
            loop {
                match rx.try_recv() {
                    Ok(msg) => handle(msg, &mut replay, &mut counters)?,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return Err(RuntimeError::Worker("all rollout workers exited".into())),
                }
            }
            let ready = replay.is_warm() && (replay.sampled() + unit) as f64 <= train.sample_to_insert * replay.inserted() as f64;
            if !ready {
                match rx.recv_timeout(STALL_TIMEOUT) {
                    Ok(msg) => handle(msg, &mut replay, &mut counters)?,
                    Err(RecvTimeoutError::Timeout) => return Err(RuntimeError::Worker("rollout workers stalled".into())),
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(RuntimeError::Worker("all rollout workers exited".into()))
                    }
                }
                continue;
            }
            for _ in 0..train.rl_per_il {
                learner.rl_update(&mut replay)?;
            }
            if bcsac {
                let batch = demo_rx
                    .recv_timeout(STALL_TIMEOUT)
                    .map_err(|_| RuntimeError::Worker("demo workers stopped delivering".into()))?;
                let refs: Vec<&DemoSample> = batch.iter().collect();
                learner.il_update_on(&refs)?;
            }
            counters.units += 1;
            counters.rl_steps = learner.rl_steps;
            counters.il_steps = learner.il_steps;
            counters.sampled = replay.sampled();
            shared.credit.raise(allowance(replay.sampled()));
            if counters.units % config.snapshot_interval == 0 {
                snapshots.publish(learner.actor.clone());
                counters.snapshots += 1;
            }
            if counters.units % config.log_interval == 0 {
                progress.push(progress_record(learner.rl_steps, &learner.stats, replay.sample_to_insert_ratio()));
            }
        }
        Ok(())
    };
    let result = run();

    shared.stop.store(true, Ordering::Release);
    shared.credit.stop();
    drop(demo_rx);
    // Drain in-flight transitions so every enqueued item is accounted for.
    let mut drain_error = None;
    while let Ok(msg) = rx.recv() {
        if let Err(e) = handle(msg, &mut replay, &mut counters) {
            drain_error.get_or_insert(e);
        }
    }
    let mut sent = 0;
    let mut panicked = None;
    for (i, h) in handles.into_iter().enumerate() {
        match h.join() {
            Ok(n) => sent += n,
            Err(_) => {
                panicked.get_or_insert(i);
            }
        }
    }
    for h in demo_handles {
        if h.join().is_err() {
            panicked.get_or_insert(usize::MAX);
        }
    }
    result?;
    if let Some(i) = panicked {
        return Err(RuntimeError::Worker(format!("worker {i} panicked")));
    }
    if let Some(e) = drain_error {
        return Err(e);
    }
    if sent != counters.enqueued || counters.enqueued != counters.inserted {
        return Err(RuntimeError::Reconcile { sent, received: counters.inserted });
    }
    counters.sampled = replay.sampled();
    Ok(RunOutput { bundle: learner.bundle(), progress, counters })
}

/// Transitions per second produced by `workers` threads acting with a fixed policy.
pub fn rollout_throughput(
    policy: &GaussianPolicy,
    scenarios: &[Arc<PreparedScenario>],
    reward: &RewardConfig,
    workers: usize,
    duration: Duration,
    seed: u64,
) -> Result<f64, RuntimeError> {
    let total = AtomicU64::new(0);
    let start = Instant::now();
    let failure: Mutex<Option<String>> = Mutex::new(None);
    thread::scope(|s| {
        for i in 0..workers {
            let (total, failure) = (&total, &failure);
            s.spawn(move || {
                let mut w = Worker::new(seed, i);
                let mut n = 0u64;
                while start.elapsed() < duration {
                    if let Err(e) = w.step(policy, scenarios, reward) {
                        failure.lock().get_or_insert(e.to_string());
                        break;
                    }
                    n += 1;
                }
                total.fetch_add(n, Ordering::Relaxed);
            });
        }
    });
    if let Some(e) = failure.into_inner() {
        return Err(RuntimeError::Worker(e));
    }
    Ok(total.load(Ordering::Relaxed) as f64 / start.elapsed().as_secs_f64())
}

