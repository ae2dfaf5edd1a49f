//! FCFS multi-server queue with exponential service and patience clocks.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `arrival_rate_mean` / `arrival_rate_var` describe the daily rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// Mean and variance of the lognormal rate itself.
    LognormalMoments,
    /// Mean and variance of the underlying normal `log λ`.
    LognormalLogScale,
    /// Constant rate `arrival_rate_mean`; the variance is ignored.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallCenterConfig {
    pub arrival_rate_mean: f64,
    pub arrival_rate_var: f64,
    pub rate_model: RateModel,
    pub service_mean: f64,
    /// Mean patience; `None` disables abandonment.
    pub abandon_mean: Option<f64>,
    pub horizon: f64,
    pub warmup: f64,
    /// Waiting-time cut points; bins are `[0, b₁), [b₁, b₂), …, [b_last, ∞)`.
    pub bins: Vec<f64>,
    pub servers: usize,
    /// Count abandoning customers with their time until abandonment.
    pub include_abandoned: bool,
}

impl Default for CallCenterConfig {
    fn default() -> Self {
        Self {
            arrival_rate_mean: 1.8,
            arrival_rate_var: 0.4,
            rate_model: RateModel::LognormalMoments,
            service_mean: 3.5,
            abandon_mean: Some(5.0),
            horizon: 60.0,
            warmup: 60.0,
            bins: vec![1.0, 2.0, 3.0],
            servers: 7,
            include_abandoned: false,
        }
    }
}

impl CallCenterConfig {
    pub fn outcomes(&self) -> usize {
        self.bins.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive and finite")))
            }
        };
        positive(self.arrival_rate_mean, "arrival_rate_mean")?;
        if self.rate_model != RateModel::Fixed {
            positive(self.arrival_rate_var, "arrival_rate_var")?;
        }
        positive(self.service_mean, "service_mean")?;
        if let Some(a) = self.abandon_mean {
            positive(a, "abandon_mean")?;
        }
        positive(self.horizon, "horizon")?;
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return Err(Error::Config("warmup must be nonnegative".into()));
        }
        if self.servers == 0 {
            return Err(Error::Config("servers must be at least 1".into()));
        }
        if self.bins.is_empty() || self.bins[0] <= 0.0 || self.bins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("bins must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Parameters `(μ, σ)` of `log λ`.
    pub fn log_rate_params(&self) -> (f64, f64) {
        match self.rate_model {
            RateModel::LognormalMoments => {
                let (mean, var) = (self.arrival_rate_mean, self.arrival_rate_var);
                let mu = (mean * mean / (var + mean * mean).sqrt()).ln();
                let sigma2 = (1.0 + var / (mean * mean)).ln();
                (mu, sigma2.sqrt())
            }
            RateModel::LognormalLogScale => (self.arrival_rate_mean, self.arrival_rate_var.sqrt()),
            RateModel::Fixed => (self.arrival_rate_mean.ln(), 0.0),
        }
    }

    /// Index of the bin containing `wait`.
    pub fn bin_of(&self, wait: f64) -> usize {
        self.bins.iter().take_while(|b| wait >= **b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueModelConfig {
    #[serde(flatten)]
    pub base: CallCenterConfig,
    pub break_interarrival_mean: f64,
    pub break_duration_mean: f64,
    pub break_trigger_idle: usize,
    pub stop_trigger_idle: usize,
}

impl Default for TrueModelConfig {
    fn default() -> Self {
        Self {
            base: CallCenterConfig::default(),
            break_interarrival_mean: 5.0,
            break_duration_mean: 30.0,
            break_trigger_idle: 5,
            stop_trigger_idle: 7,
        }
    }
}

impl TrueModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.break_interarrival_mean > 0.0 && self.break_duration_mean > 0.0) {
            return Err(Error::Config("break means must be positive".into()));
        }
        if self.break_trigger_idle == 0 || self.stop_trigger_idle <= self.break_trigger_idle {
            return Err(Error::Config("need 0 < break_trigger_idle < stop_trigger_idle".into()));
        }
        Ok(())
    }
}

/// Waiting-time summary of one replication's observation window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub total_wait: f64,
    pub customers: u64,
}

impl WindowStats {
    /// Average wait, 0 for an empty window.
    pub fn average(&self) -> f64 {
        if self.customers == 0 {
            0.0
        } else {
            self.total_wait / self.customers as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Arrival,
    Departure,
    Return,
    BreakCheck,
    HourEnd,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Breaks<'a> {
    cfg: &'a TrueModelConfig,
    rng: ChaCha8Rng,
}

struct Queue<'a> {
    cfg: &'a CallCenterConfig,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    idle: usize,
    /// Servers stopped until the next hour boundary.
    stopped: usize,
    waiting: VecDeque<(f64, f64)>,
    stats: WindowStats,
}

impl<'a> Queue<'a> {
    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.events.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.cfg.warmup && t < self.cfg.warmup + self.cfg.horizon
    }

    fn serve_waiting(&mut self, rng: &mut ChaCha8Rng, service: &Exp<f64>) {
        while self.idle > 0 {
            let Some((arrived, deadline)) = self.waiting.pop_front() else {
                break;
            };
            if deadline < self.now {
                if self.cfg.include_abandoned && self.in_window(deadline) {
                    self.stats.total_wait += deadline - arrived;
                    self.stats.customers += 1;
                }
                continue;
            }
            if self.in_window(self.now) {
                self.stats.total_wait += self.now - arrived;
                self.stats.customers += 1;
            }
            self.idle -= 1;
            let done = self.now + service.sample(rng);
            self.push(done, Kind::Departure);
        }
    }
}

fn run(cfg: &CallCenterConfig, breaks: Option<&mut Breaks>, rng: &mut ChaCha8Rng) -> WindowStats {
    let (mu, sigma) = cfg.log_rate_params();
    let rate = if sigma > 0.0 {
        LogNormal::new(mu, sigma).expect("validated").sample(rng)
    } else {
        mu.exp()
    };
    let end = cfg.warmup + cfg.horizon;
    let inter = Exp::new(rate).expect("positive rate");
    let service = Exp::new(1.0 / cfg.service_mean).expect("validated");
    let patience = cfg.abandon_mean.map(|a| Exp::new(1.0 / a).expect("validated"));

    let mut q = Queue {
        cfg,
        events: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        idle: cfg.servers,
        stopped: 0,
        waiting: VecDeque::new(),
        stats: WindowStats::default(),
    };
    let first = inter.sample(rng);
    q.push(first, Kind::Arrival);
    let mut breaks = breaks;
    if let Some(b) = breaks.as_deref_mut() {
        let gap = Exp::new(1.0 / b.cfg.break_interarrival_mean).expect("validated");
        let t = gap.sample(&mut b.rng);
        q.push(t, Kind::BreakCheck);
    }

    while let Some(ev) = q.events.pop() {
        if ev.time >= end {
            break;
        }
        debug_assert!(ev.time >= q.now, "event clock went backwards");
        q.now = ev.time;
        match ev.kind {
            Kind::Arrival => {
                let deadline = match &patience {
                    Some(p) => q.now + p.sample(rng),
                    None => f64::INFINITY,
                };
                q.waiting.push_back((q.now, deadline));
                q.serve_waiting(rng, &service);
                let next = q.now + inter.sample(rng);
                q.push(next, Kind::Arrival);
            }
            Kind::Departure | Kind::Return => {
                q.idle += 1;
                q.serve_waiting(rng, &service);
            }
            Kind::HourEnd => {
                q.idle += q.stopped;
                q.stopped = 0;
                q.serve_waiting(rng, &service);
            }
            Kind::BreakCheck => {
                let b = breaks.as_deref_mut().expect("break events only with a break process");
                let bc = b.cfg;
                if q.idle > bc.stop_trigger_idle {
                    let excess = q.idle - bc.stop_trigger_idle;
                    if q.stopped == 0 {
                        let boundary = ((q.now / 60.0).floor() + 1.0) * 60.0;
                        q.push(boundary, Kind::HourEnd);
                    }
                    q.idle -= excess;
                    q.stopped += excess;
                }
                if q.idle >= bc.break_trigger_idle {
                    let dur = Exp::new(1.0 / bc.break_duration_mean).expect("validated");
                    for _ in 0..q.idle {
                        let back = q.now + dur.sample(&mut b.rng);
                        q.push(back, Kind::Return);
                    }
                    q.idle = 0;
                }
                let gap = Exp::new(1.0 / bc.break_interarrival_mean).expect("validated");
                let next = q.now + gap.sample(&mut b.rng);
                q.push(next, Kind::BreakCheck);
            }
        }
    }
    q.stats
}

fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn break_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    rng.set_stream(rep);
    rng
}

/// Window statistics of replication `rep` of the base model.
pub fn call_center_replication(cfg: &CallCenterConfig, seed: u64, rep: u64) -> WindowStats {
    run(cfg, None, &mut replication_rng(seed, rep))
}

/// Window statistics of replication `rep` with the break process.
pub fn true_system_replication(cfg: &TrueModelConfig, seed: u64, rep: u64) -> WindowStats {
    let mut breaks = Breaks {
        cfg,
        rng: break_rng(seed, rep),
    };
    run(&cfg.base, Some(&mut breaks), &mut replication_rng(seed, rep))
}

/// Binned average waits over `reps` replications of the base model.
pub fn simulate_call_center(cfg: &CallCenterConfig, reps: u64, seed: u64) -> Result<Vec<u64>> {
    cfg.validate()?;
    let mut counts = vec![0; cfg.outcomes()];
    for rep in 0..reps {
        counts[cfg.bin_of(call_center_replication(cfg, seed, rep).average())] += 1;
    }
    Ok(counts)
}

/// As [`simulate_call_center`] with servers taking breaks.
pub fn simulate_true_system(cfg: &TrueModelConfig, reps: u64, seed: u64) -> Result<Vec<u64>> {
    cfg.validate()?;
    let mut counts = vec![0; cfg.base.outcomes()];
    for rep in 0..reps {
        counts[cfg.base.bin_of(true_system_replication(cfg, seed, rep).average())] += 1;
    }
    Ok(counts)
}

/// Customer-weighted mean wait pooled over replications.
pub fn pooled_mean_wait(cfg: &CallCenterConfig, reps: u64, seed: u64) -> Result<WindowStats> {
    cfg.validate()?;
    let mut pooled = WindowStats::default();
    for rep in 0..reps {
        let s = call_center_replication(cfg, seed, rep);
        pooled.total_wait += s.total_wait;
        pooled.customers += s.customers;
    }
    Ok(pooled)
}

/// Random draw helper exposed for tests of the rate model.
pub fn sample_daily_rate(cfg: &CallCenterConfig, rng: &mut impl Rng) -> f64 {
    let (mu, sigma) = cfg.log_rate_params();
    if sigma > 0.0 {
        LogNormal::new(mu, sigma).expect("validated").sample(rng)
    } else {
        mu.exp()
    }
}
