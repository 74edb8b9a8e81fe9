use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::analytic::SystemModel;
use crate::dist::ServiceDistribution;
use crate::rng::Stream;

use super::{JobRecord, PolicyConfig, RunConfig, RunSummary, TraceInput, WithinClassOrder};

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Completion { server: usize, token: u64 },
    Arrival { class: usize },
    Scripted { index: usize },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival { .. } | EventKind::Scripted { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.rank(), self.seq)
    }
}

// Reversed so that `BinaryHeap` pops the earliest event.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (t1, r1, s1) = self.key();
        let (t2, r2, s2) = other.key();
        t2.total_cmp(&t1).then(r2.cmp(&r1)).then(s2.cmp(&s1))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

#[derive(Debug)]
struct Job {
    class: usize,
    arrival: f64,
    service: f64,
    remaining: f64,
    first_start: Option<f64>,
    suspended_at: Option<f64>,
    interruptions: Vec<f64>,
    counted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Busy {
    job: usize,
    completion: f64,
    token: u64,
}

/// Waiting-pool entry; the greatest entry is served next.
#[derive(Debug)]
struct Waiting {
    /// arrival time under LIFO, negated arrival time under FIFO
    key: f64,
    seq: u64,
    job: usize,
}

impl Ord for Waiting {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Waiting {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Waiting {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Waiting {}

enum Source<'a> {
    Stochastic {
        cfg: RunConfig,
        rates: Vec<f64>,
        services: Vec<ServiceDistribution>,
        arrival_streams: Vec<Stream>,
        service_streams: Vec<Stream>,
    },
    Trace(&'a TraceInput),
}

pub(super) struct Engine<'a> {
    policy: PolicyConfig,
    source: Source<'a>,
    now: f64,
    calendar: BinaryHeap<Event>,
    event_seq: u64,
    servers: Vec<Option<Busy>>,
    next_token: u64,
    /// one heap per class
    pool: Vec<BinaryHeap<Waiting>>,
    pool_len: usize,
    pool_seq: u64,
    jobs: Vec<Option<Job>>,
    free_slots: Vec<usize>,
}

impl<'a> Engine<'a> {
    fn new(model: &SystemModel, policy: PolicyConfig, source: Source<'a>) -> Self {
        Self {
            policy,
            source,
            now: 0.0,
            calendar: BinaryHeap::new(),
            event_seq: 0,
            servers: vec![None; model.servers()],
            next_token: 0,
            pool: (0..model.num_classes()).map(|_| BinaryHeap::new()).collect(),
            pool_len: 0,
            pool_seq: 0,
            jobs: Vec::new(),
            free_slots: Vec::new(),
        }
    }

    pub(super) fn stochastic(model: &SystemModel, policy: PolicyConfig, cfg: &RunConfig) -> Self {
        let n = model.num_classes();
        let source = Source::Stochastic {
            cfg: *cfg,
            rates: model.classes().iter().map(|c| c.lambda).collect(),
            services: model.classes().iter().map(|c| c.service.clone()).collect(),
            arrival_streams: (0..n).map(|k| Stream::arrivals(cfg.seed, k)).collect(),
            service_streams: (0..n).map(|k| Stream::services(cfg.seed, k)).collect(),
        };
        let mut engine = Self::new(model, policy, source);
        for class in 0..n {
            engine.schedule_next_arrival(class);
        }
        engine
    }

    pub(super) fn trace(model: &SystemModel, policy: PolicyConfig, trace: &'a TraceInput) -> Self {
        let mut engine = Self::new(model, policy, Source::Trace(trace));
        for (index, a) in trace.arrivals.iter().enumerate() {
            engine.schedule(a.time, EventKind::Scripted { index });
        }
        engine
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.event_seq;
        self.event_seq += 1;
        self.calendar.push(Event { time, seq, kind });
    }

    fn schedule_next_arrival(&mut self, class: usize) {
        let Source::Stochastic {
            rates,
            arrival_streams,
            ..
        } = &mut self.source
        else {
            return;
        };
        let u: f64 = rand::Rng::random(&mut arrival_streams[class]);
        let gap = -(1.0 - u).ln() / rates[class];
        let time = self.now + gap;
        self.schedule(time, EventKind::Arrival { class });
    }

    pub(super) fn run<F: FnMut(JobRecord)>(mut self, mut sink: F) -> RunSummary {
        let (target, cap) = match &self.source {
            Source::Stochastic { cfg, .. } => (cfg.target_completions, cfg.max_simulated_time),
            Source::Trace(t) => (t.arrivals.len(), f64::INFINITY),
        };
        let mut completed = 0usize;
        let mut truncated = false;

        while completed < target {
            let Some(event) = self.calendar.pop() else {
                break;
            };
            if event.time > cap {
                truncated = true;
                self.now = cap;
                break;
            }
            self.now = event.time;
            match event.kind {
                EventKind::Completion { server, token } => {
                    if self.servers[server].is_some_and(|b| b.token == token) {
                        if let Some(record) = self.complete(server) {
                            completed += 1;
                            sink(record);
                        }
                    }
                }
                EventKind::Arrival { class } => {
                    let job = self.new_stochastic_job(class);
                    self.schedule_next_arrival(class);
                    self.arrive(job);
                }
                EventKind::Scripted { index } => {
                    let Source::Trace(trace) = &self.source else {
                        unreachable!("scripted event in a stochastic run");
                    };
                    let a = trace.arrivals[index];
                    let job = self.insert_job(a.class, a.service, true);
                    self.arrive(job);
                }
            }
            debug_assert!(
                self.pool_len == 0 || self.servers.iter().all(Option::is_some),
                "idle server while jobs wait"
            );
        }

        RunSummary {
            completed,
            truncated,
            end_time: self.now,
        }
    }

    fn new_stochastic_job(&mut self, class: usize) -> usize {
        let Source::Stochastic {
            cfg,
            services,
            service_streams,
            ..
        } = &mut self.source
        else {
            unreachable!("stochastic arrival in a trace run");
        };
        let service = services[class].sample(&mut service_streams[class]);
        let counted = self.now >= cfg.warmup_time;
        self.insert_job(class, service, counted)
    }

    fn insert_job(&mut self, class: usize, service: f64, counted: bool) -> usize {
        let job = Job {
            class,
            arrival: self.now,
            service,
            remaining: service,
            first_start: None,
            suspended_at: None,
            interruptions: Vec::new(),
            counted,
        };
        match self.free_slots.pop() {
            Some(slot) => {
                self.jobs[slot] = Some(job);
                slot
            }
            None => {
                self.jobs.push(Some(job));
                self.jobs.len() - 1
            }
        }
    }

    fn job(&self, id: usize) -> &Job {
        self.jobs[id].as_ref().expect("live job")
    }

    fn job_mut(&mut self, id: usize) -> &mut Job {
        self.jobs[id].as_mut().expect("live job")
    }

    fn arrive(&mut self, id: usize) {
        if let Some(server) = self.servers.iter().position(Option::is_none) {
            self.start(id, server);
            return;
        }
        let class = self.job(id).class;
        match self.pick_victim(class) {
            Some(server) => {
                self.suspend(server);
                self.start(id, server);
            }
            None => self.enqueue(id),
        }
    }

    /// Lowest-priority in-service job the arrival may displace, earliest
    /// arrival first among equals, then lowest server index.
    fn pick_victim(&self, arriving_class: usize) -> Option<usize> {
        let eligible = |class: usize| {
            if self.policy.equal_class_preemption {
                class >= arriving_class
            } else {
                class > arriving_class
            }
        };
        let mut best: Option<(usize, usize, f64)> = None;
        for (server, slot) in self.servers.iter().enumerate() {
            let busy = slot.expect("all servers busy");
            let job = self.job(busy.job);
            if !eligible(job.class) {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, class, arrival)) => {
                    job.class > class || (job.class == class && job.arrival < arrival)
                }
            };
            if better {
                best = Some((server, job.class, job.arrival));
            }
        }
        best.map(|(server, _, _)| server)
    }

    fn start(&mut self, id: usize, server: usize) {
        let now = self.now;
        let token = self.next_token;
        self.next_token += 1;
        let job = self.job_mut(id);
        if job.first_start.is_none() {
            job.first_start = Some(now);
        }
        if let Some(since) = job.suspended_at.take() {
            job.interruptions.push(now - since);
        }
        let completion = now + job.remaining;
        self.servers[server] = Some(Busy {
            job: id,
            completion,
            token,
        });
        self.schedule(completion, EventKind::Completion { server, token });
    }

    fn suspend(&mut self, server: usize) {
        let busy = self.servers[server].take().expect("busy server");
        let now = self.now;
        let job = self.job_mut(busy.job);
        job.remaining = busy.completion - now;
        job.suspended_at = Some(now);
        self.enqueue(busy.job);
    }

    fn enqueue(&mut self, id: usize) {
        let (class, arrival) = {
            let j = self.job(id);
            (j.class, j.arrival)
        };
        let key = match self.policy.within_class_order {
            WithinClassOrder::Lifo => arrival,
            WithinClassOrder::Fifo => -arrival,
        };
        let seq = self.pool_seq;
        self.pool_seq += 1;
        self.pool[class].push(Waiting { key, seq, job: id });
        self.pool_len += 1;
    }

    fn dequeue(&mut self) -> Option<usize> {
        let next = self.pool.iter_mut().find_map(BinaryHeap::pop)?;
        self.pool_len -= 1;
        Some(next.job)
    }

    /// Finishes the job on `server`, refills the server and returns the
    /// record if the job was counted.
    fn complete(&mut self, server: usize) -> Option<JobRecord> {
        let busy = self.servers[server].take().expect("busy server");
        let job = self.jobs[busy.job].take().expect("live job");
        self.free_slots.push(busy.job);
        if let Some(next) = self.dequeue() {
            self.start(next, server);
        }
        job.counted.then(|| JobRecord {
            class: job.class,
            arrival_time: job.arrival,
            service_requirement: job.service,
            first_start_time: job.first_start.expect("served job has a start time"),
            completion_time: self.now,
            interruption_intervals: job.interruptions,
        })
    }
}
