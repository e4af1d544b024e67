use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NetworkSpec, SimError, SimParams, ThinkKind};

const THINK_STREAM: u64 = 1;
const MAP_STREAM: u64 = 2;
const REDUCE_STREAM: u64 = 3;

/// Clock resolution: one tick is a nanosecond, so sums of durations are
/// exact and deterministic schedules reproduce to the last digit.
const TICKS_PER_MS: f64 = 1e6;

fn to_ticks(ms: f64) -> u64 {
    (ms * TICKS_PER_MS).round() as u64
}

fn to_ms(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_MS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Map,
    Reduce,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Map => "map",
            TaskKind::Reduce => "reduce",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// A user submitted a job; its map tasks joined the admission queue.
    Submit,
    /// All maps of a job finished; its reduce tasks joined the queue.
    Fork,
    /// A task entered the capacity region and took a container.
    Admit,
    /// A task finished and gave its container back.
    Release,
    /// The job's last task finished.
    Complete,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Submit => "submit",
            TraceKind::Fork => "fork",
            TraceKind::Admit => "admit",
            TraceKind::Release => "release",
            TraceKind::Complete => "complete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    pub job_id: u64,
    pub task: Option<TaskKind>,
    /// Busy containers right after the event.
    pub busy: u32,
}

impl TraceRecord {
    /// `time_ms  event_kind  job_id  task_kind  busy_containers`, tab separated.
    pub fn to_tsv(&self) -> String {
        let task = self.task.map_or_else(|| "-".to_string(), |t| t.to_string());
        format!("{:.3}\t{}\t{}\t{}\t{}", self.time, self.kind, self.job_id, task, self.busy)
    }
}

pub fn write_trace_tsv<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "time_ms\tevent_kind\tjob_id\ttask_kind\tbusy_containers")?;
    for r in records {
        writeln!(out, "{}", r.to_tsv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub job_id: u64,
    pub user: usize,
    submitted: u64,
    finished: u64,
}

impl Completion {
    pub fn submitted_ms(&self) -> f64 {
        to_ms(self.submitted)
    }

    pub fn finished_ms(&self) -> f64 {
        to_ms(self.finished)
    }

    pub fn response_time(&self) -> f64 {
        to_ms(self.finished - self.submitted)
    }
}

/// Population and occupancy at the current instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub thinking: u32,
    pub active_jobs: u32,
    pub busy: u32,
    pub waiting_map: usize,
    pub waiting_reduce: usize,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    ThinkEnd { user: usize },
    TaskDone { user: usize, task: TaskKind },
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest
    // (time, seq) on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Job {
    id: u64,
    submitted: u64,
    maps_left: u32,
    reduces_left: u32,
}

/// One replication of the closed network.
///
/// Each user owns at most one job, so queued tasks are stored as the index
/// of the owning user.
pub struct Simulator<'a> {
    spec: &'a NetworkSpec,
    now: u64,
    seq: u64,
    agenda: BinaryHeap<Scheduled>,
    think_rng: ChaCha8Rng,
    map_rng: ChaCha8Rng,
    reduce_rng: ChaCha8Rng,
    jobs: Vec<Option<Job>>,
    map_queue: VecDeque<usize>,
    reduce_queue: VecDeque<usize>,
    busy: u32,
    thinking: u32,
    next_job_id: u64,
    events: u64,
    trace: Option<Vec<TraceRecord>>,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a NetworkSpec, seed: u64) -> Result<Self, SimError> {
        spec.check()?;
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        let users = spec.h_users as usize;
        let mut sim = Simulator {
            spec,
            now: 0,
            seq: 0,
            agenda: BinaryHeap::new(),
            think_rng: stream(THINK_STREAM),
            map_rng: stream(MAP_STREAM),
            reduce_rng: stream(REDUCE_STREAM),
            jobs: vec![None; users],
            map_queue: VecDeque::new(),
            reduce_queue: VecDeque::new(),
            busy: 0,
            thinking: spec.h_users,
            next_job_id: 0,
            events: 0,
            trace: None,
        };
        for user in 0..users {
            let delay = sim.think_delay();
            sim.schedule(delay, EventKind::ThinkEnd { user });
        }
        Ok(sim)
    }

    /// Records every state change from now on.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn now(&self) -> f64 {
        to_ms(self.now)
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    pub fn snapshot(&self) -> Snapshot {
        let active_jobs = self.jobs.iter().filter(|j| j.is_some()).count() as u32;
        Snapshot {
            time: to_ms(self.now),
            thinking: self.thinking,
            active_jobs,
            busy: self.busy,
            waiting_map: self.map_queue.len(),
            waiting_reduce: self.reduce_queue.len(),
        }
    }

    /// Processes the next event. Returns the finished job if the event
    /// completed one.
    pub fn step(&mut self) -> Option<Completion> {
        // A closed network always has a pending event: every user is either
        // thinking or owns a job with at least one running task.
        let event = self.agenda.pop()?;
        self.events += 1;
        self.now = event.time;
        let completion = match event.kind {
            EventKind::ThinkEnd { user } => {
                self.submit(user);
                None
            }
            EventKind::TaskDone { user, task } => self.finish_task(user, task),
        };
        self.admit();
        completion
    }

    /// Runs until the next job completes or `max_events` total events have
    /// been processed.
    pub fn next_completion(&mut self, max_events: u64) -> Result<Completion, SimError> {
        loop {
            if self.events >= max_events {
                return Err(SimError::EventCapExceeded {
                    events: self.events,
                    completions: 0,
                    partial: Vec::new(),
                });
            }
            if let Some(done) = self.step() {
                return Ok(done);
            }
        }
    }

    fn schedule(&mut self, delay: f64, kind: EventKind) {
        self.seq += 1;
        self.agenda.push(Scheduled {
            time: self.now + to_ticks(delay),
            seq: self.seq,
            kind,
        });
    }

    fn record(&mut self, kind: TraceKind, job_id: u64, task: Option<TaskKind>) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time: to_ms(self.now),
                kind,
                job_id,
                task,
                busy: self.busy,
            });
        }
    }

    fn think_delay(&mut self) -> f64 {
        let z = self.spec.think_time;
        match self.spec.think_kind {
            ThinkKind::Deterministic => z,
            ThinkKind::Exponential => {
                let u: f64 = self.think_rng.random();
                -z * (1.0 - u).ln()
            }
        }
    }

    fn submit(&mut self, user: usize) {
        let id = self.next_job_id;
        self.next_job_id += 1;
        self.thinking -= 1;
        self.jobs[user] = Some(Job {
            id,
            submitted: self.now,
            maps_left: self.spec.n_map,
            reduces_left: self.spec.n_reduce,
        });
        self.map_queue
            .extend(std::iter::repeat_n(user, self.spec.n_map as usize));
        self.record(TraceKind::Submit, id, Some(TaskKind::Map));
    }

    fn finish_task(&mut self, user: usize, task: TaskKind) -> Option<Completion> {
        self.busy -= 1;
        let job = self.jobs[user].as_mut().expect("finished task belongs to a live job");
        let id = job.id;
        let job_done = match task {
            TaskKind::Map => {
                job.maps_left -= 1;
                job.maps_left == 0 && job.reduces_left == 0
            }
            TaskKind::Reduce => {
                job.reduces_left -= 1;
                job.reduces_left == 0
            }
        };
        let forks_reduces = task == TaskKind::Map && job.maps_left == 0 && job.reduces_left > 0;
        self.record(TraceKind::Release, id, Some(task));

        if forks_reduces {
            self.reduce_queue
                .extend(std::iter::repeat_n(user, self.spec.n_reduce as usize));
            self.record(TraceKind::Fork, id, Some(TaskKind::Reduce));
            return None;
        }
        if !job_done {
            return None;
        }
        let job = self.jobs[user].take().expect("job present");
        self.thinking += 1;
        self.record(TraceKind::Complete, id, None);
        let delay = self.think_delay();
        self.schedule(delay, EventKind::ThinkEnd { user });
        Some(Completion {
            job_id: job.id,
            user,
            submitted: job.submitted,
            finished: self.now,
        })
    }

    /// Fills free containers; every waiting reduce task goes before any map.
    fn admit(&mut self) {
        while self.busy < self.spec.capacity {
            let (user, task) = if let Some(user) = self.reduce_queue.pop_front() {
                (user, TaskKind::Reduce)
            } else if let Some(user) = self.map_queue.pop_front() {
                (user, TaskKind::Map)
            } else {
                break;
            };
            let duration = match task {
                TaskKind::Map => self.spec.map_service.sample(&mut self.map_rng),
                TaskKind::Reduce => self
                    .spec
                    .reduce_service
                    .as_ref()
                    .expect("reduce tasks imply a reduce service")
                    .sample(&mut self.reduce_rng),
            };
            self.busy += 1;
            let id = self.jobs[user].as_ref().map_or(0, |j| j.id);
            self.record(TraceKind::Admit, id, Some(task));
            self.schedule(duration, EventKind::TaskDone { user, task });
        }
    }
}

/// Simulates `params.total_jobs()` completions and returns their response
/// times in completion order (warmup included).
pub fn run_replication(spec: &NetworkSpec, params: &SimParams) -> Result<Vec<f64>, SimError> {
    params.check()?;
    let mut sim = Simulator::new(spec, params.seed)?;
    let total = params.total_jobs();
    let mut times = Vec::with_capacity(total);
    while times.len() < total {
        match sim.next_completion(params.max_events) {
            Ok(done) => times.push(done.response_time()),
            Err(SimError::EventCapExceeded { events, .. }) => {
                return Err(SimError::EventCapExceeded {
                    events,
                    completions: times.len(),
                    partial: times,
                })
            }
            Err(other) => return Err(other),
        }
    }
    Ok(times)
}
