//! Fixed-increment simulation of one observation window.
//!
//! Within a tick the phases run in a fixed order (event arrivals, sensing,
//! buffer flushes, neighbor monitoring, idle drain) and within a phase nodes
//! act in id order, so a run is a pure function of its inputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::topology::{Point, Topology};
use super::{EnvEvent, TaskCounters, WorldConfig};
use crate::catalog::Constituent;

/// Slack when comparing scheduled times against the tick clock.
const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sense,
    Idle,
    MonitorTx,
    MonitorRx,
    ControlTx,
    ControlRx,
    DataTx,
    DataRx,
    Overhear,
    Stop,
}

/// One line of the optional energy audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time: f64,
    pub node: usize,
    pub task: Task,
    pub constituent: Constituent,
    pub joules: f64,
}

/// Intervals and the sensing radius that drive node behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub tx_interval: f64,
    pub sense_interval: f64,
    pub sense_radius: f64,
}

/// Time of each node's first sensing, flush and monitor operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub sense: f64,
    pub tx: f64,
    pub monitor: f64,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    origin: usize,
    /// Index into the origin's relay chain of the next relay to try.
    next: usize,
}

#[derive(Debug)]
struct NodeState {
    residual: f64,
    buffer: VecDeque<Packet>,
    next_sense: f64,
    next_tx: f64,
    next_monitor: f64,
    active: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub residuals: Vec<f64>,
    pub counters: TaskCounters,
    pub generated_events: u64,
    pub detected_events: u64,
    pub received_data_packets: u64,
    pub in_flight_packets: u64,
    pub log: Option<Vec<LogRecord>>,
}

pub struct Simulation<'a> {
    world: &'a WorldConfig,
    topology: &'a Topology,
    timing: Timing,
    events: Vec<EnvEvent>,
    nodes: Vec<NodeState>,
    counters: TaskCounters,
    detected: u64,
    received: u64,
    log: Option<Vec<LogRecord>>,
    now: f64,
}

impl<'a> Simulation<'a> {
    /// `phases` must hold one entry per node. Intervals shorter than the
    /// tick fire at most once per tick.
    pub fn new(
        world: &'a WorldConfig,
        topology: &'a Topology,
        timing: Timing,
        events: Vec<EnvEvent>,
        phases: &[Phase],
    ) -> Self {
        assert_eq!(phases.len(), topology.len(), "one phase per node");
        let nodes = phases
            .iter()
            .map(|p| NodeState {
                residual: world.initial_energy,
                buffer: VecDeque::with_capacity(world.buffer_capacity),
                next_sense: p.sense,
                next_tx: p.tx,
                next_monitor: p.monitor,
                active: world.initial_energy >= world.stop_threshold,
            })
            .collect();
        Simulation {
            world,
            topology,
            timing,
            events,
            nodes,
            counters: TaskCounters::default(),
            detected: 0,
            received: 0,
            log: None,
            now: 0.0,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn run(mut self) -> Outcome {
        let world = self.world;
        let ticks = world.num_ticks();
        let sense_every = self.timing.sense_interval.max(world.tick);
        let tx_every = self.timing.tx_interval.max(world.tick);
        let monitor_every = world.monitor_period.max(world.tick);
        let mut pending: Vec<Point> = Vec::new();
        let mut next_event = 0;
        let mut sensors: Vec<usize> = Vec::new();

        for k in 1..=ticks {
            let t = k as f64 * world.tick;
            self.now = t;

            while next_event < self.events.len() && self.events[next_event].time <= t + CLOCK_EPS {
                pending.push(self.events[next_event].position);
                next_event += 1;
            }

            sensors.clear();
            for i in 0..self.nodes.len() {
                if !self.nodes[i].active || self.nodes[i].next_sense > t + CLOCK_EPS {
                    continue;
                }
                while self.nodes[i].next_sense <= t + CLOCK_EPS {
                    self.nodes[i].next_sense += sense_every;
                }
                if self.charge(i, world.sense_energy, Task::Sense, Constituent::Individual) {
                    sensors.push(i);
                }
            }
            if !sensors.is_empty() && !pending.is_empty() {
                self.detect(&sensors, &mut pending);
            }

            for i in 0..self.nodes.len() {
                if !self.nodes[i].active || self.nodes[i].next_tx > t + CLOCK_EPS {
                    continue;
                }
                while self.nodes[i].next_tx <= t + CLOCK_EPS {
                    self.nodes[i].next_tx += tx_every;
                }
                self.flush(i);
            }

            for i in 0..self.nodes.len() {
                if !self.nodes[i].active || self.nodes[i].next_monitor > t + CLOCK_EPS {
                    continue;
                }
                while self.nodes[i].next_monitor <= t + CLOCK_EPS {
                    self.nodes[i].next_monitor += monitor_every;
                }
                self.monitor(i);
            }

            let idle = world.idle_power * world.tick;
            for i in 0..self.nodes.len() {
                if self.nodes[i].active {
                    self.charge(i, idle, Task::Idle, Constituent::Local);
                }
            }
        }

        let in_flight = self.nodes.iter().map(|n| n.buffer.len() as u64).sum();
        Outcome {
            residuals: self.nodes.iter().map(|n| n.residual).collect(),
            counters: self.counters,
            generated_events: next_event as u64,
            detected_events: self.detected,
            received_data_packets: self.received,
            in_flight_packets: in_flight,
            log: self.log,
        }
    }

    /// Pays up to `joules` from the node's battery. Returns false when the
    /// battery could not cover the full amount; the node is stopped then, and
    /// also whenever its residual falls below the stop threshold.
    fn charge(&mut self, node: usize, joules: f64, task: Task, constituent: Constituent) -> bool {
        let state = &mut self.nodes[node];
        debug_assert!(state.active, "stopped node {node} charged for {task:?}");
        let full = joules <= state.residual;
        let paid = if full { joules } else { state.residual };
        state.residual -= paid;
        self.counters.energy.add(constituent, paid);
        let stop = !full || state.residual < self.world.stop_threshold;
        if stop {
            state.active = false;
        }
        if let Some(log) = self.log.as_mut() {
            log.push(LogRecord {
                time: self.now,
                node,
                task,
                constituent,
                joules: paid,
            });
            if stop {
                log.push(LogRecord {
                    time: self.now,
                    node,
                    task: Task::Stop,
                    constituent,
                    joules: 0.0,
                });
            }
        }
        full
    }

    /// Each pending event inside some sensing disc is owned by the nearest
    /// sensor that sensed this tick and yields exactly one data packet.
    fn detect(&mut self, sensors: &[usize], pending: &mut Vec<Point>) {
        let radius = self.timing.sense_radius;
        let positions = &self.topology.nodes;
        let mut still_pending = Vec::with_capacity(pending.len());
        for &event in pending.iter() {
            let owner = sensors
                .iter()
                .filter(|&&s| self.nodes[s].active)
                .map(|&s| (s, positions[s].distance(event)))
                .filter(|&(_, d)| d <= radius)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match owner {
                Some((s, _)) => {
                    self.detected += 1;
                    self.counters.b_sense += 1;
                    self.enqueue(s, Packet { origin: s, next: 0 });
                }
                None => still_pending.push(event),
            }
        }
        *pending = still_pending;
    }

    fn enqueue(&mut self, node: usize, packet: Packet) {
        let cap = self.world.buffer_capacity;
        let buffer = &mut self.nodes[node].buffer;
        if buffer.len() >= cap {
            buffer.pop_front();
            self.counters.b_pktls += 1;
        }
        buffer.push_back(packet);
        self.counters.b_store += 1;
    }

    fn next_active_relay(&self, origin: usize, from: usize) -> Option<(usize, usize)> {
        self.topology.geometry[origin].relays[from..]
            .iter()
            .enumerate()
            .find(|(_, &r)| self.nodes[r].active)
            .map(|(k, &r)| (from + k, r))
    }

    fn flush(&mut self, node: usize) {
        self.refresh_route(node);
        let radio = self.world.radio();
        let bits = self.world.data_packet_bits;
        let here = self.topology.nodes[node];

        let queued = self.nodes[node].buffer.len();
        for _ in 0..queued {
            if !self.nodes[node].active {
                return;
            }
            let packet = *self.nodes[node].buffer.front().expect("queued packet");
            let hop = self.next_active_relay(packet.origin, packet.next);
            let target_pos = match hop {
                Some((_, r)) => self.topology.nodes[r],
                None => self.topology.sinks[self.topology.geometry[packet.origin].nearest_sink],
            };
            if !self.charge(
                node,
                radio.tx_energy(bits, here.distance(target_pos)),
                Task::DataTx,
                Constituent::Global,
            ) {
                return;
            }
            self.nodes[node].buffer.pop_front();
            if self.world.overhearing {
                self.overhear(node, hop.map(|(_, r)| r));
            }
            match hop {
                None => self.received += 1,
                Some((k, r)) => {
                    if self.charge(r, radio.rx_energy(bits), Task::DataRx, Constituent::Global) {
                        self.enqueue(
                            r,
                            Packet {
                                origin: packet.origin,
                                next: k + 1,
                            },
                        );
                    } else {
                        self.counters.b_pktls += 1;
                    }
                }
            }
        }
    }

    /// Route maintenance: control packets along the node's whole chain.
    fn refresh_route(&mut self, node: usize) {
        let radio = self.world.radio();
        let bits = self.world.control_packet_bits;
        let geometry = &self.topology.geometry[node];
        let path: Vec<usize> = geometry
            .relays
            .iter()
            .copied()
            .filter(|&r| self.nodes[r].active)
            .collect();
        let sink = self.topology.sinks[geometry.nearest_sink];
        for _ in 0..self.world.control_packets_per_hop {
            let mut cursor = node;
            for hop in path.iter().map(Some).chain(std::iter::once(None)) {
                if !self.nodes[cursor].active {
                    break;
                }
                let target = hop.map_or(sink, |&r| self.topology.nodes[r]);
                let d = self.topology.nodes[cursor].distance(target);
                if cursor == node {
                    self.counters.b_topo += 1;
                } else {
                    self.counters.b_rout += 1;
                }
                if !self.charge(cursor, radio.tx_energy(bits, d), Task::ControlTx, Constituent::Global) {
                    break;
                }
                let Some(&r) = hop else { break };
                if !self.nodes[r].active || !self.charge(r, radio.rx_energy(bits), Task::ControlRx, Constituent::Global)
                {
                    break;
                }
                cursor = r;
            }
        }
    }

    fn monitor(&mut self, node: usize) {
        let radio = self.world.radio();
        let bits = self.world.control_packet_bits;
        let geometry = &self.topology.geometry[node];
        for link in &geometry.neighbors[..geometry.monitored] {
            if !self.nodes[node].active {
                return;
            }
            if !self.nodes[link.node].active {
                continue;
            }
            self.counters.b_mon += 1;
            if !self.charge(
                node,
                radio.tx_energy(bits, link.distance),
                Task::MonitorTx,
                Constituent::Local,
            ) {
                return;
            }
            self.charge(link.node, radio.rx_energy(bits), Task::MonitorRx, Constituent::Local);
        }
    }

    fn overhear(&mut self, sender: usize, receiver: Option<usize>) {
        let rx = self.world.radio().rx_energy(self.world.data_packet_bits);
        for link in &self.topology.geometry[sender].neighbors {
            if Some(link.node) == receiver || !self.nodes[link.node].active {
                continue;
            }
            self.counters.b_ohear += 1;
            self.charge(link.node, rx, Task::Overhear, Constituent::Local);
        }
    }
}
