//! Deterministic discrete-event load simulator.
//!
//! Requests arrive (Poisson or two-state bursty), probe the score cache, wait
//! in a FIFO queue for one of `servers` identical workers and are served in
//! `alpha · flop_units + beta` milliseconds. Time is in milliseconds; rates in
//! requests per second.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};
use serde::{Deserialize, Serialize};

use super::cache::ScoreCache;
use super::pid::{PidConfig, PidState};
use super::retry::{retry_decision, RetryDecision, RetryPolicy};
use super::MidtierError;
use crate::scoring::{flops, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson {
        rate: f64,
    },
    /// Alternates between an off-peak and a peak rate; phase lengths are
    /// exponential with the given means.
    Bursty {
        low_rate: f64,
        high_rate: f64,
        mean_low_s: f64,
        mean_high_s: f64,
    },
}

impl ArrivalProcess {
    fn rate(&self, peak: bool) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate } => rate,
            ArrivalProcess::Bursty { low_rate, high_rate, .. } => {
                if peak {
                    high_rate
                } else {
                    low_rate
                }
            }
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match *self {
            ArrivalProcess::Poisson { rate } => ArrivalProcess::Poisson { rate: rate * factor },
            ArrivalProcess::Bursty { low_rate, high_rate, mean_low_s, mean_high_s } => ArrivalProcess::Bursty {
                low_rate: low_rate * factor,
                high_rate: high_rate * factor,
                mean_low_s,
                mean_high_s,
            },
        }
    }
}

/// Inclusive uniform token-length range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LenRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub alpha_ms_per_unit: f64,
    pub beta_ms: f64,
    pub servers: usize,
    /// Latency of a request answered from cache.
    pub cache_hit_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheModel {
    pub capacity: usize,
    pub n_keys: usize,
    pub zipf_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub arrival: ArrivalProcess,
    pub latency_sensitive_fraction: f64,
    pub prefix_len: LenRange,
    pub item_len: LenRange,
    /// Candidates available per request; depth never exceeds it.
    pub base_depth: usize,
    pub mode: ScoreMode,
    pub service: ServiceModel,
    pub cache: CacheModel,
    pub pid: PidConfig,
    pub target_latency_ms: f64,
    pub control_interval_ms: f64,
    pub retry: RetryPolicy,
    /// Chance that an attempt stalls until its timeout.
    pub failure_prob: f64,
    pub shaping_threshold: f64,
    pub report_interval_ms: f64,
    pub shadow_fraction: f64,
}

impl Default for SimConfig {
    /// The standard bursty workload.
    fn default() -> Self {
        Self {
            seed: 7,
            duration_s: 600.0,
            arrival: ArrivalProcess::Bursty { low_rate: 30.0, high_rate: 90.0, mean_low_s: 60.0, mean_high_s: 30.0 },
            latency_sensitive_fraction: 0.5,
            prefix_len: LenRange { min: 80, max: 120 },
            item_len: LenRange { min: 40, max: 60 },
            base_depth: 250,
            mode: ScoreMode::Ibpc,
            service: ServiceModel { alpha_ms_per_unit: 2.0e-5, beta_ms: 5.0, servers: 4, cache_hit_ms: 1.0 },
            cache: CacheModel { capacity: 50, n_keys: 1000, zipf_exponent: 1.0 },
            pid: PidConfig::default(),
            target_latency_ms: 100.0,
            control_interval_ms: 1000.0,
            retry: RetryPolicy { per_attempt_timeout_ms: 400.0, budget_ms: 1000.0, max_attempts: 3 },
            failure_prob: 0.01,
            shaping_threshold: 0.75,
            report_interval_ms: 10_000.0,
            shadow_fraction: 0.01,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, MidtierError> {
        let cfg: Self = toml::from_str(text).map_err(|e| MidtierError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Same workload with every arrival rate multiplied by `factor`.
    pub fn with_load(&self, factor: f64) -> Self {
        Self { arrival: self.arrival.scaled(factor), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), MidtierError> {
        let bad = |m: &str| Err(MidtierError::Config(m.to_string()));
        let rates_ok = match self.arrival {
            ArrivalProcess::Poisson { rate } => rate >= 0.0 && rate.is_finite(),
            ArrivalProcess::Bursty { low_rate, high_rate, mean_low_s, mean_high_s } => {
                low_rate >= 0.0 && high_rate >= 0.0 && mean_low_s > 0.0 && mean_high_s > 0.0
            }
        };
        if !rates_ok {
            return bad("arrival rates must be non-negative and phase means positive");
        }
        if !(self.duration_s >= 0.0) {
            return bad("duration must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.latency_sensitive_fraction)
            || !(0.0..=1.0).contains(&self.failure_prob)
            || !(0.0..=1.0).contains(&self.shadow_fraction)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if self.prefix_len.min > self.prefix_len.max || self.item_len.min == 0 || self.item_len.min > self.item_len.max
        {
            return bad("length ranges must be non-empty");
        }
        let s = &self.service;
        if !(s.alpha_ms_per_unit >= 0.0 && s.beta_ms >= 0.0 && s.cache_hit_ms >= 0.0) || s.servers == 0 {
            return bad("service model needs alpha, beta >= 0 and at least one server");
        }
        if self.cache.n_keys == 0 || !(self.cache.zipf_exponent >= 0.0) {
            return bad("cache key space must be non-empty");
        }
        if !(self.target_latency_ms > 0.0 && self.control_interval_ms > 0.0 && self.report_interval_ms > 0.0) {
            return bad("target latency and intervals must be positive");
        }
        if !(self.shaping_threshold > 0.0 && self.shaping_threshold <= 1.0) {
            return bad("shaping threshold must lie in (0, 1]");
        }
        if self.base_depth == 0 {
            return bad("base depth must be at least 1");
        }
        self.pid.validate()?;
        self.retry.validate()
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimToggles {
    pub cache: bool,
    pub pid: bool,
    pub retry: bool,
    pub shaping: bool,
}

impl SimToggles {
    pub const ALL: Self = Self { cache: true, pid: true, retry: true, shaping: true };
    pub const NONE: Self = Self { cache: false, pid: false, retry: false, shaping: false };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ClassStats {
    pub count: usize,
    pub p50: Option<f64>,
    pub p99: Option<f64>,
    pub max: Option<f64>,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

impl ClassStats {
    fn from_latencies(mut lat: Vec<f64>) -> Self {
        lat.sort_by(f64::total_cmp);
        Self { count: lat.len(), p50: percentile(&lat, 0.5), p99: percentile(&lat, 0.99), max: lat.last().copied() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimMetrics {
    pub requests: usize,
    pub sensitive: ClassStats,
    pub insensitive: ClassStats,
    pub cache_hits: u64,
    pub cache_lookups: u64,
    pub hit_rate: f64,
    /// Mean depth over dispatched requests.
    pub mean_depth: f64,
    pub mean_depth_peak: Option<f64>,
    pub mean_depth_offpeak: Option<f64>,
    pub deferred: usize,
    pub retries: usize,
    pub gave_up: usize,
    pub total_flops: u64,
    pub shadow_checks: usize,
    pub shadow_deviations: usize,
}

/// One JSON-lines record per class per reporting interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub t: f64,
    pub class: String,
    pub p50: Option<f64>,
    pub p99: Option<f64>,
    pub hit_rate: f64,
    pub mean_depth: Option<f64>,
    pub deferred: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: SimMetrics,
    pub records: Vec<IntervalRecord>,
    /// Cache keys in arrival order.
    pub key_trace: Vec<u64>,
    /// `(time, depth)` after every controller step.
    pub depth_trace: Vec<(f64, usize)>,
    /// End-to-end latency per request, indexed by arrival order.
    pub end_to_end_ms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Arrival {
        generation: u64,
    },
    PhaseSwitch,
    Finish {
        request: usize,
        failed: bool,
    },
    /// The retry budget of a request still waiting in a queue has run out.
    Deadline {
        request: usize,
    },
    ControlTick,
    Report,
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
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
    // Reversed so the max-heap pops the earliest event, then the lowest seq.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Request {
    arrival: f64,
    sensitive: bool,
    key: u64,
    prefix_len: usize,
    item_len: usize,
    depth: usize,
    attempt: u32,
    started: bool,
}

/// Stand-in for the engine's output on a cache key: a pure function of it.
fn synthetic_scores(key: u64) -> u64 {
    key.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17) ^ 0x5bd1_e995
}

#[derive(Default)]
struct IntervalAcc {
    latencies: [Vec<f64>; 2],
    lookups: u64,
    hits: u64,
    depth_sum: usize,
    dispatched: usize,
    deferred: usize,
    flops: u64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    toggles: SimToggles,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Scheduled>,
    arrivals_rng: ChaCha8Rng,
    request_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    peak: bool,
    generation: u64,
    requests: Vec<Request>,
    queue: VecDeque<usize>,
    deferred_queue: VecDeque<usize>,
    busy: usize,
    cache: ScoreCache<u64, u64>,
    pid: PidState,
    control_latencies: Vec<f64>,
    latencies: [Vec<f64>; 2],
    end_to_end: Vec<f64>,
    depth_sum: [usize; 2],
    dispatched: [usize; 2],
    acc: IntervalAcc,
    m: SimMetrics,
    out_records: Vec<IntervalRecord>,
    key_trace: Vec<u64>,
    depth_trace: Vec<(f64, usize)>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, toggles: SimToggles) -> Result<Self, MidtierError> {
        let zipf = Zipf::new(cfg.cache.n_keys as f64, cfg.cache.zipf_exponent)
            .map_err(|e| MidtierError::Config(format!("zipf: {e}")))?;
        Ok(Self {
            cfg,
            toggles,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            arrivals_rng: stream(cfg.seed, 1),
            request_rng: stream(cfg.seed, 2),
            fault_rng: stream(cfg.seed, 3),
            zipf,
            peak: false,
            generation: 0,
            requests: Vec::new(),
            queue: VecDeque::new(),
            deferred_queue: VecDeque::new(),
            busy: 0,
            cache: ScoreCache::new(cfg.cache.capacity),
            pid: PidState::new(cfg.pid)?,
            control_latencies: Vec::new(),
            latencies: [Vec::new(), Vec::new()],
            end_to_end: Vec::new(),
            depth_sum: [0; 2],
            dispatched: [0; 2],
            acc: IntervalAcc::default(),
            m: SimMetrics::default(),
            out_records: Vec::new(),
            key_trace: Vec::new(),
            depth_trace: Vec::new(),
        })
    }

    fn horizon(&self) -> f64 {
        self.cfg.duration_s * 1000.0
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, event });
    }

    fn schedule_arrival(&mut self) {
        let rate = self.cfg.arrival.rate(self.peak);
        self.generation += 1;
        if rate > 0.0 {
            let gap_ms = Exp::new(rate).expect("positive rate").sample(&mut self.arrivals_rng) * 1000.0;
            if self.now + gap_ms < self.horizon() {
                self.schedule(self.now + gap_ms, Event::Arrival { generation: self.generation });
            }
        }
    }

    fn schedule_phase_switch(&mut self) {
        if let ArrivalProcess::Bursty { mean_low_s, mean_high_s, .. } = self.cfg.arrival {
            let mean = if self.peak { mean_high_s } else { mean_low_s };
            let len_ms = Exp::new(1.0 / mean).expect("positive mean").sample(&mut self.arrivals_rng) * 1000.0;
            if self.now + len_ms < self.horizon() {
                self.schedule(self.now + len_ms, Event::PhaseSwitch);
            }
        }
    }

    fn utilization(&self) -> f64 {
        self.busy as f64 / self.cfg.service.servers as f64
    }

    fn current_depth(&self) -> usize {
        let d = if self.toggles.pid { self.pid.depth } else { self.cfg.pid.d_max };
        d.min(self.cfg.base_depth)
    }

    fn service_ms(&self, r: &Request) -> (f64, u64) {
        let units = flops(self.cfg.mode, r.prefix_len, r.item_len, r.depth).total_units();
        (self.cfg.service.alpha_ms_per_unit * units as f64 + self.cfg.service.beta_ms, units)
    }

    fn record_completion(&mut self, id: usize, cache_hit: bool) {
        let r = &self.requests[id];
        let latency = if cache_hit { self.cfg.service.cache_hit_ms } else { self.now - r.arrival };
        let class = usize::from(!r.sensitive);
        self.latencies[class].push(latency);
        self.acc.latencies[class].push(latency);
        self.end_to_end[id] = latency;
        if !cache_hit {
            self.control_latencies.push(latency);
        }
    }

    fn on_arrival(&mut self) -> Result<(), MidtierError> {
        let sensitive = self.request_rng.random::<f64>() < self.cfg.latency_sensitive_fraction;
        let key = self.zipf.sample(&mut self.request_rng) as u64 - 1;
        let prefix_len = self.request_rng.random_range(self.cfg.prefix_len.min..=self.cfg.prefix_len.max);
        let item_len = self.request_rng.random_range(self.cfg.item_len.min..=self.cfg.item_len.max);
        let id = self.requests.len();
        self.requests.push(Request {
            arrival: self.now,
            sensitive,
            key,
            prefix_len,
            item_len,
            depth: 0,
            attempt: 0,
            started: false,
        });
        self.end_to_end.push(f64::NAN);
        self.key_trace.push(key);
        self.m.requests += 1;
        self.schedule_arrival();

        if self.toggles.cache {
            self.acc.lookups += 1;
            if let Some(cached) = self.cache.get(&key) {
                self.acc.hits += 1;
                if self.request_rng.random::<f64>() < self.cfg.shadow_fraction {
                    self.m.shadow_checks += 1;
                    if cached != synthetic_scores(key) {
                        self.m.shadow_deviations += 1;
                    }
                }
                self.record_completion(id, true);
                return Ok(());
            }
        }
        if self.toggles.retry {
            self.schedule(self.now + self.cfg.retry.budget_ms, Event::Deadline { request: id });
        }
        if self.toggles.shaping && !sensitive && self.utilization() >= self.cfg.shaping_threshold {
            self.deferred_queue.push_back(id);
            self.m.deferred += 1;
            self.acc.deferred += 1;
        } else {
            self.queue.push_back(id);
        }
        self.dispatch()
    }

    /// Fills idle servers: main queue first, then deferred work while
    /// utilization is under the shaping threshold.
    fn dispatch(&mut self) -> Result<(), MidtierError> {
        while self.busy < self.cfg.service.servers {
            let next = match self.queue.pop_front() {
                Some(id) => id,
                None if self.utilization() < self.cfg.shaping_threshold => match self.deferred_queue.pop_front() {
                    Some(id) => id,
                    None => break,
                },
                None => break,
            };
            self.start_attempt(next);
        }
        Ok(())
    }

    fn start_attempt(&mut self, id: usize) {
        let elapsed = self.now - self.requests[id].arrival;
        let attempt = self.requests[id].attempt;
        self.requests[id].started = true;
        if self.toggles.retry && attempt == 0 && retry_decision(elapsed, 0, &self.cfg.retry) == RetryDecision::GiveUp {
            self.m.gave_up += 1;
            self.record_completion(id, false);
            return;
        }
        if attempt == 0 {
            let depth = self.current_depth();
            self.requests[id].depth = depth;
            let phase = usize::from(self.peak);
            self.depth_sum[phase] += depth;
            self.dispatched[phase] += 1;
            self.acc.depth_sum += depth;
            self.acc.dispatched += 1;
        }
        let (service, units) = self.service_ms(&self.requests[id]);
        self.m.total_flops += units;
        self.acc.flops += units;
        let timeout = self.cfg.retry.per_attempt_timeout_ms;
        let stalled = self.fault_rng.random::<f64>() < self.cfg.failure_prob;
        let (duration, failed) =
            if stalled || (self.toggles.retry && service > timeout) { (timeout, true) } else { (service, false) };
        self.busy += 1;
        self.schedule(self.now + duration, Event::Finish { request: id, failed });
    }

    fn on_finish(&mut self, id: usize, failed: bool) -> Result<(), MidtierError> {
        self.busy -= 1;
        if failed {
            let next = self.requests[id].attempt + 1;
            let elapsed = self.now - self.requests[id].arrival;
            if self.toggles.retry && retry_decision(elapsed, next, &self.cfg.retry) == RetryDecision::Retry {
                self.requests[id].attempt = next;
                self.m.retries += 1;
                self.start_attempt(id);
            } else {
                self.m.gave_up += 1;
                self.record_completion(id, false);
            }
        } else {
            if self.toggles.cache {
                let key = self.requests[id].key;
                self.cache.put(key, synthetic_scores(key))?;
            }
            self.record_completion(id, false);
        }
        self.dispatch()
    }

    fn on_deadline(&mut self, id: usize) {
        if self.requests[id].started {
            return;
        }
        self.queue.retain(|&r| r != id);
        self.deferred_queue.retain(|&r| r != id);
        self.requests[id].started = true;
        self.m.gave_up += 1;
        self.record_completion(id, false);
    }

    fn on_control_tick(&mut self) -> Result<(), MidtierError> {
        if self.toggles.pid && !self.control_latencies.is_empty() {
            let observed = self.control_latencies.iter().sum::<f64>() / self.control_latencies.len() as f64;
            let depth = self.pid.update(observed, self.cfg.target_latency_ms, 1.0)?;
            self.depth_trace.push((self.now, depth));
        }
        self.control_latencies.clear();
        if self.now + self.cfg.control_interval_ms < self.horizon() {
            self.schedule(self.now + self.cfg.control_interval_ms, Event::ControlTick);
        }
        Ok(())
    }

    fn flush_report(&mut self) {
        let acc = std::mem::take(&mut self.acc);
        let hit_rate = if acc.lookups == 0 { 0.0 } else { acc.hits as f64 / acc.lookups as f64 };
        let mean_depth = (acc.dispatched > 0).then(|| acc.depth_sum as f64 / acc.dispatched as f64);
        for (class, lat) in ["latency_sensitive", "latency_insensitive"].into_iter().zip(acc.latencies) {
            let stats = ClassStats::from_latencies(lat);
            self.out_records.push(IntervalRecord {
                t: self.now,
                class: class.to_string(),
                p50: stats.p50,
                p99: stats.p99,
                hit_rate,
                mean_depth,
                deferred: acc.deferred,
                flops: acc.flops,
            });
        }
    }

    fn run(mut self) -> Result<SimOutput, MidtierError> {
        self.schedule_arrival();
        self.schedule_phase_switch();
        if self.horizon() > 0.0 {
            self.schedule(0.0, Event::ControlTick);
            self.schedule(self.cfg.report_interval_ms.min(self.horizon()), Event::Report);
        }
        while let Some(Scheduled { time, event, .. }) = self.heap.pop() {
            self.now = time;
            match event {
                Event::Arrival { generation } if generation == self.generation => self.on_arrival()?,
                Event::Arrival { .. } => {}
                Event::PhaseSwitch => {
                    self.peak = !self.peak;
                    self.schedule_arrival();
                    self.schedule_phase_switch();
                }
                Event::Finish { request, failed } => self.on_finish(request, failed)?,
                Event::Deadline { request } => self.on_deadline(request),
                Event::ControlTick => self.on_control_tick()?,
                Event::Report => {
                    self.flush_report();
                    let next = self.now + self.cfg.report_interval_ms;
                    if next < self.horizon() {
                        self.schedule(next, Event::Report);
                    }
                }
            }
        }
        if self.acc.lookups > 0 || self.acc.dispatched > 0 || self.acc.latencies.iter().any(|l| !l.is_empty()) {
            self.flush_report();
        }
        let stats = self.cache.stats();
        let mean = |s: usize, n: usize| (n > 0).then(|| s as f64 / n as f64);
        let total_dispatched = self.dispatched[0] + self.dispatched[1];
        let [sens, insens] = self.latencies;
        let metrics = SimMetrics {
            sensitive: ClassStats::from_latencies(sens),
            insensitive: ClassStats::from_latencies(insens),
            cache_hits: stats.hits,
            cache_lookups: stats.lookups,
            hit_rate: stats.hit_rate(),
            mean_depth: mean(self.depth_sum[0] + self.depth_sum[1], total_dispatched).unwrap_or(0.0),
            mean_depth_peak: mean(self.depth_sum[1], self.dispatched[1]),
            mean_depth_offpeak: mean(self.depth_sum[0], self.dispatched[0]),
            ..self.m
        };
        Ok(SimOutput {
            metrics,
            records: self.out_records,
            key_trace: self.key_trace,
            depth_trace: self.depth_trace,
            end_to_end_ms: self.end_to_end,
        })
    }
}

pub fn run_simulation(config: &SimConfig, toggles: SimToggles) -> Result<SimOutput, MidtierError> {
    config.validate()?;
    Sim::new(config, toggles)?.run()
}

/// Least-squares `(alpha, beta)` for `ms = alpha · units + beta`, clamped at zero.
pub fn fit_cost_model(samples: &[(u64, f64)]) -> Result<(f64, f64), MidtierError> {
    if samples.len() < 2 {
        return Err(MidtierError::Config("need at least two timing samples".into()));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0 as f64).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 as f64 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 as f64 - mx) * (s.1 - my)).sum();
    if sxx == 0.0 {
        return Err(MidtierError::Config("timing samples need distinct flop counts".into()));
    }
    let alpha = (sxy / sxx).max(0.0);
    Ok((alpha, (my - alpha * mx).max(0.0)))
}
