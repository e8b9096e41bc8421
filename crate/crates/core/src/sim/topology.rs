use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, WorldConfig, TOPOLOGY_STREAM};
use crate::catalog::{ExperimentConfig, Param};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub node: usize,
    pub distance: f64,
}

/// Per-node geometry derived once at placement time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    pub nearest_sink: usize,
    /// d_i
    pub sink_distance: f64,
    /// Nodes within r_Tx, nearest first (d_ij).
    pub neighbors: Vec<Link>,
    /// How many of `neighbors` (from the front) are monitored.
    pub monitored: usize,
    /// Nodes within r_sense (a_i, d_iA).
    pub covered: Vec<Link>,
    /// Relay node ids toward the nearest sink.
    pub relays: Vec<usize>,
    /// Distances of each hop of the full chain, the last one ending at the sink.
    pub hop_distances: Vec<f64>,
}

/// Radii and counts that shape a topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub hops: usize,
    pub transmission_radius: f64,
    pub sense_radius: f64,
    pub neighbors: usize,
}

impl Shape {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Shape {
            hops: config.count(Param::NumHops),
            transmission_radius: config.get(Param::TransmissionRadius),
            sense_radius: config.get(Param::SenseRadius),
            neighbors: config.count(Param::NumNeighbors),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Point>,
    pub sinks: Vec<Point>,
    pub geometry: Vec<NodeGeometry>,
    /// Configured h_iD; realized chains may be shorter.
    pub configured_hops: usize,
}

/// Anchor of the sink group: middle of the field's lower edge.
pub fn sink_anchor(world: &WorldConfig) -> Point {
    Point::new(world.area_side / 2.0, 0.0)
}

/// Places `net_dens` nodes uniformly and `Snk` sinks around the anchor, then
/// derives neighbor sets and relay chains.
pub fn build_topology(config: &ExperimentConfig, world: &WorldConfig, seed: u64) -> Result<Topology, SimError> {
    let dens = config.get(Param::NetDensity);
    if dens.is_nan() || dens < 2.0 {
        return Err(SimError::InvalidConfig(format!("net_dens must be >= 2, got {dens}")));
    }
    let sinks_wanted = config.count(Param::NumSinks);
    if sinks_wanted == 0 {
        return Err(SimError::InvalidConfig("at least one sink is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOPOLOGY_STREAM);
    let side = world.area_side;
    let nodes: Vec<Point> = (0..config.count(Param::NetDensity))
        .map(|_| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
        .collect();
    let anchor = sink_anchor(world);
    let radius = side / 20.0;
    let sinks: Vec<Point> = (0..sinks_wanted)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            Point::new(anchor.x + r * theta.cos(), anchor.y + r * theta.sin())
        })
        .collect();
    Ok(Topology::assemble(nodes, sinks, Shape::from_config(config)))
}

fn links_within(nodes: &[Point], from: usize, radius: f64) -> Vec<Link> {
    let origin = nodes[from];
    let mut out: Vec<Link> = nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != from)
        .map(|(j, &p)| Link {
            node: j,
            distance: origin.distance(p),
        })
        .filter(|l| l.distance <= radius)
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.node.cmp(&b.node)));
    out
}

impl Topology {
    /// Derives all per-node geometry from explicit positions.
    pub fn assemble(nodes: Vec<Point>, sinks: Vec<Point>, shape: Shape) -> Topology {
        assert!(!sinks.is_empty(), "topology needs at least one sink");
        let geometry = (0..nodes.len())
            .map(|i| {
                let here = nodes[i];
                let (nearest_sink, sink_distance) = sinks
                    .iter()
                    .enumerate()
                    .map(|(s, &p)| (s, here.distance(p)))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .expect("non-empty sinks");
                let neighbors = links_within(&nodes, i, shape.transmission_radius);
                let monitored = neighbors.len().min(shape.neighbors);
                let covered = links_within(&nodes, i, shape.sense_radius);
                let relays = relay_chain(&nodes, i, sinks[nearest_sink], shape);
                let mut hop_distances = Vec::with_capacity(relays.len() + 1);
                let mut cursor = here;
                for &r in &relays {
                    hop_distances.push(cursor.distance(nodes[r]));
                    cursor = nodes[r];
                }
                hop_distances.push(cursor.distance(sinks[nearest_sink]));
                NodeGeometry {
                    nearest_sink,
                    sink_distance,
                    neighbors,
                    monitored,
                    covered,
                    relays,
                    hop_distances,
                }
            })
            .collect();
        Topology {
            nodes,
            sinks,
            geometry,
            configured_hops: shape.hops,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mean_realized_hops(&self) -> f64 {
        mean(self.geometry.iter().map(|g| g.relays.len() as f64))
    }

    pub fn mean_monitored(&self) -> f64 {
        mean(self.geometry.iter().map(|g| g.monitored as f64))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Equally spaced waypoints on the segment to the sink, each snapped to the
/// nearest unused node within r_Tx of the waypoint. Waypoints with no
/// candidate are skipped, shortening the chain.
fn relay_chain(nodes: &[Point], source: usize, sink: Point, shape: Shape) -> Vec<usize> {
    let start = nodes[source];
    let mut chain: Vec<usize> = Vec::with_capacity(shape.hops);
    for k in 1..=shape.hops {
        let waypoint = start.lerp(sink, k as f64 / (shape.hops + 1) as f64);
        let pick = nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != source && !chain.contains(&j))
            .map(|(j, &p)| (j, waypoint.distance(p)))
            .filter(|&(_, d)| d <= shape.transmission_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((j, _)) = pick {
            chain.push(j);
        }
    }
    chain
}
