//! Event-detection WSN simulator.
//!
//! Events arrive as a Poisson process at uniform positions. Nodes sense on a
//! fixed period, buffer one data packet per detected event and push their
//! buffers one hop along a relay chain toward the nearest sink every
//! transmission interval. Relays store forwarded packets in their own buffer.
//! Every joule spent is booked against one constituent.

mod engine;
mod topology;
mod world;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

pub use engine::{LogRecord, Outcome, Phase, Simulation, Task, Timing};
pub use topology::{build_topology, sink_anchor, Link, NodeGeometry, Point, Shape, Topology};
pub use world::{Radio, WorldConfig};

use crate::catalog::{ensure_valid, ConfigError, ConfigSpace, Constituent, ExperimentConfig, Param};

pub(crate) const TOPOLOGY_STREAM: u64 = 1;
const EVENT_STREAM: u64 = 2;
const PHASE_STREAM: u64 = 3;

/// Seeds used to estimate the performance band when none are supplied.
pub const CALIBRATION_SEEDS: std::ops::Range<u64> = 1_000_000..1_001_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid world config: {0}")]
    World(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("performance calibration needs at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyByConstituent {
    pub individual: f64,
    pub local: f64,
    pub global: f64,
    pub environment: f64,
    pub sink: f64,
}

impl EnergyByConstituent {
    pub fn add(&mut self, c: Constituent, joules: f64) {
        *self.get_mut(c) += joules;
    }

    pub fn get(&self, c: Constituent) -> f64 {
        match c {
            Constituent::Individual => self.individual,
            Constituent::Local => self.local,
            Constituent::Global => self.global,
            Constituent::Environment => self.environment,
            Constituent::Sink => self.sink,
        }
    }

    fn get_mut(&mut self, c: Constituent) -> &mut f64 {
        match c {
            Constituent::Individual => &mut self.individual,
            Constituent::Local => &mut self.local,
            Constituent::Global => &mut self.global,
            Constituent::Environment => &mut self.environment,
            Constituent::Sink => &mut self.sink,
        }
    }

    pub fn total(&self) -> f64 {
        Constituent::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Energy per constituent plus the packet counters of the parameter tables.
/// Counters without a mechanism here (OS, security, collision avoidance,
/// harvesting, sink management) stay at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskCounters {
    pub energy: EnergyByConstituent,
    pub b_sense: u64,
    pub b_store: u64,
    pub b_mon: u64,
    #[serde(rename = "b_reTx")]
    pub b_retx: u64,
    pub b_ohear: u64,
    pub b_topo: u64,
    pub b_rout: u64,
    pub b_pktls: u64,
    #[serde(rename = "b_Os")]
    pub b_os: u64,
    pub b_sec: u64,
    pub b_local: u64,
    pub b_global: u64,
    pub b_ohead: u64,
    pub b_ph: u64,
    /// H_i, joules.
    pub harvested: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvEvent {
    pub time: f64,
    pub position: Point,
}

/// Poisson arrivals with mean gap T on (0, Δt], uniform over the field.
pub fn generate_events(world: &WorldConfig, seed: u64) -> Vec<EnvEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVENT_STREAM);
    let gap = Exp::new(1.0 / world.event_interval_mean).expect("positive event interval");
    let side = world.area_side;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t > world.delta_t {
            return out;
        }
        let position = Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        out.push(EnvEvent { time: t, position });
    }
}

/// First firing of each periodic task, uniform in (0, period].
pub fn random_phases(n: usize, timing: Timing, world: &WorldConfig, seed: u64) -> Vec<Phase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PHASE_STREAM);
    let mut offset = |period: f64| period * (1.0 - rng.random::<f64>());
    (0..n)
        .map(|_| Phase {
            sense: offset(timing.sense_interval),
            tx: offset(timing.tx_interval),
            monitor: offset(world.monitor_period),
        })
        .collect()
}

/// Mean and sample variance of the number of events generated in Δt.
pub fn calibrate_performance(world: &WorldConfig, seeds: &[u64]) -> Result<(f64, f64), SimError> {
    if seeds.len() < 2 {
        return Err(SimError::TooFewSeeds(seeds.len()));
    }
    let counts: Vec<f64> = seeds.iter().map(|&s| generate_events(world, s).len() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// A run performs well when its detected-event count is within
/// `sigma_mult · √v` of the mean event count N̄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBound {
    pub mean_events: f64,
    pub variance: f64,
    pub sigma_mult: f64,
}

impl PerformanceBound {
    pub fn accepts(&self, detected: u64) -> bool {
        (detected as f64 - self.mean_events).abs() <= self.sigma_mult * self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Mean residual energy over all nodes, stopped ones included.
    pub avg_residual_energy: f64,
    pub received_data_packets: u64,
    pub generated_events: u64,
    pub detected_events: u64,
    pub dropped_packets: u64,
    pub in_flight_packets: u64,
    pub performance_ok: bool,
    pub stopped_nodes: usize,
    pub realized_hops_mean: f64,
    pub realized_neighbors_mean: f64,
    pub counters: TaskCounters,
    pub node_residuals: Vec<f64>,
}

impl ExperimentResult {
    /// initial·N − Σ residual.
    pub fn energy_spent(&self, world: &WorldConfig) -> f64 {
        world.initial_energy * self.node_residuals.len() as f64 - self.node_residuals.iter().sum::<f64>()
    }
}

/// Runs experiments for one config space and world.
#[derive(Debug, Clone)]
pub struct Simulator {
    space: ConfigSpace,
    world: WorldConfig,
    bound: PerformanceBound,
}

impl Simulator {
    /// Calibrates the performance band on [`CALIBRATION_SEEDS`] with a 1σ width.
    pub fn new(space: ConfigSpace, world: WorldConfig) -> Result<Self, SimError> {
        space.check()?;
        world.validate()?;
        let seeds: Vec<u64> = CALIBRATION_SEEDS.collect();
        let (mean_events, variance) = calibrate_performance(&world, &seeds)?;
        Ok(Simulator {
            space,
            world,
            bound: PerformanceBound {
                mean_events,
                variance,
                sigma_mult: 1.0,
            },
        })
    }

    pub fn with_sigma_mult(mut self, sigma_mult: f64) -> Self {
        self.bound.sigma_mult = sigma_mult;
        self
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn bound(&self) -> PerformanceBound {
        self.bound
    }

    pub fn run(&self, config: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
        self.run_inner(config, false).map(|(r, _)| r)
    }

    /// Like [`Simulator::run`], also returning the per-charge audit log.
    pub fn run_logged(&self, config: &ExperimentConfig) -> Result<(ExperimentResult, Vec<LogRecord>), SimError> {
        self.run_inner(config, true)
            .map(|(r, log)| (r, log.expect("log requested")))
    }

    fn run_inner(
        &self,
        config: &ExperimentConfig,
        log: bool,
    ) -> Result<(ExperimentResult, Option<Vec<LogRecord>>), SimError> {
        ensure_valid(config, &self.space)?;
        let world = &self.world;
        let seed = config.seed;
        let topology = build_topology(config, world, seed)?;
        let timing = Timing {
            tx_interval: config.get(Param::TransmissionInterval),
            sense_interval: config.get(Param::SensorInterval),
            sense_radius: config.get(Param::SenseRadius),
        };
        let events = generate_events(world, seed);
        let phases = random_phases(topology.len(), timing, world, seed);
        let mut sim = Simulation::new(world, &topology, timing, events, &phases);
        if log {
            sim = sim.with_log();
        }
        let out = sim.run();
        let n = out.residuals.len() as f64;
        let result = ExperimentResult {
            seed,
            config: config.clone(),
            avg_residual_energy: out.residuals.iter().sum::<f64>() / n,
            received_data_packets: out.received_data_packets,
            generated_events: out.generated_events,
            detected_events: out.detected_events,
            dropped_packets: out.counters.b_pktls,
            in_flight_packets: out.in_flight_packets,
            performance_ok: self.bound.accepts(out.detected_events),
            stopped_nodes: out.residuals.iter().filter(|&&r| r < world.stop_threshold).count(),
            realized_hops_mean: topology.mean_realized_hops(),
            realized_neighbors_mean: topology.mean_monitored(),
            counters: out.counters,
            node_residuals: out.residuals,
        };
        Ok((result, out.log))
    }
}

/// One-shot convenience over [`Simulator`].
pub fn run_experiment(
    config: &ExperimentConfig,
    space: &ConfigSpace,
    world: &WorldConfig,
) -> Result<ExperimentResult, SimError> {
    Simulator::new(space.clone(), world.clone())?.run(config)
}
