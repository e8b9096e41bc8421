//! Small hand-built worlds whose energy bill can be worked out by hand.

use approx::assert_relative_eq;
use wsn_energy::catalog::Constituent;
use wsn_energy::sim::{EnvEvent, Phase, Point, Shape, Simulation, Task, Timing, Topology, WorldConfig};

fn shape(hops: usize) -> Shape {
    Shape {
        hops,
        transmission_radius: 20.0,
        sense_radius: 10.0,
        neighbors: 5,
    }
}

fn timing() -> Timing {
    Timing {
        tx_interval: 2.0,
        sense_interval: 1.0,
        sense_radius: 10.0,
    }
}

fn phase() -> Phase {
    Phase {
        sense: 1.0,
        tx: 2.0,
        monitor: 5.0,
    }
}

// Single node at the origin, sink 30 m away, defaults otherwise:
// 100 senses at 1e-5 J, 50 flushes each carrying one control packet of
// 256 bits over 30 m (1.28e-5 + 2.304e-5 J), 1000 idle ticks at 1e-7 J.
const SENSE: f64 = 100.0 * 1e-5;
const CONTROL: f64 = 50.0 * 3.584e-5;
const IDLE: f64 = 1e-4;
// One 2000-bit data packet over 30 m: 1e-4 + 1.8e-4 J.
const DATA: f64 = 2.8e-4;

fn lone_node() -> Topology {
    Topology::assemble(vec![Point::new(0.0, 0.0)], vec![Point::new(30.0, 0.0)], shape(0))
}

#[test]
fn lone_node_without_events() {
    let world = WorldConfig::default();
    let topo = lone_node();
    let out = Simulation::new(&world, &topo, timing(), vec![], &[phase()]).run();
    let spent = world.initial_energy - out.residuals[0];
    assert_relative_eq!(spent, SENSE + CONTROL + IDLE, max_relative = 1e-9);
    assert_relative_eq!(out.counters.energy.individual, SENSE, max_relative = 1e-9);
    assert_relative_eq!(out.counters.energy.global, CONTROL, max_relative = 1e-9);
    assert_relative_eq!(out.counters.energy.local, IDLE, max_relative = 1e-9);
    assert_eq!(out.counters.energy.environment, 0.0);
    assert_eq!(out.counters.energy.sink, 0.0);
    assert_eq!(out.counters.b_topo, 50);
    assert_eq!(out.received_data_packets, 0);
}

#[test]
fn lone_node_with_two_events() {
    let world = WorldConfig::default();
    let topo = lone_node();
    let events = vec![
        EnvEvent {
            time: 0.55,
            position: Point::new(1.0, 0.0),
        },
        EnvEvent {
            time: 3.2,
            position: Point::new(2.0, 0.0),
        },
        // outside the sensing disc: never detected
        EnvEvent {
            time: 7.0,
            position: Point::new(50.0, 50.0),
        },
    ];
    let out = Simulation::new(&world, &topo, timing(), events, &[phase()])
        .with_log()
        .run();
    let spent = world.initial_energy - out.residuals[0];
    assert_relative_eq!(spent, SENSE + CONTROL + IDLE + 2.0 * DATA, max_relative = 1e-9);
    assert_eq!(out.generated_events, 3);
    assert_eq!(out.detected_events, 2);
    assert_eq!(out.received_data_packets, 2);
    assert_eq!(out.in_flight_packets, 0);

    let log = out.log.unwrap();
    let sends: Vec<f64> = log.iter().filter(|r| r.task == Task::DataTx).map(|r| r.time).collect();
    // detected at t = 1 and t = 4, flushed at t = 2 and t = 4
    assert_eq!(sends.len(), 2);
    assert_relative_eq!(sends[0], 2.0, epsilon = 1e-9);
    assert_relative_eq!(sends[1], 4.0, epsilon = 1e-9);
    let logged: f64 = log.iter().map(|r| r.joules).sum();
    assert_relative_eq!(logged, spent, max_relative = 1e-12);
}

#[test]
fn relay_pays_receive_and_forward() {
    let world = WorldConfig::default();
    let topo = Topology::assemble(
        vec![Point::new(0.0, 0.0), Point::new(15.0, 0.0)],
        vec![Point::new(30.0, 0.0)],
        shape(1),
    );
    assert_eq!(topo.geometry[0].relays, vec![1]);
    let events = vec![EnvEvent {
        time: 0.5,
        position: Point::new(-3.0, 0.0),
    }];
    let late = Phase { tx: 3.0, ..phase() };
    let out = Simulation::new(&world, &topo, timing(), events, &[phase(), late])
        .with_log()
        .run();
    assert_eq!(out.received_data_packets, 1);
    let log = out.log.unwrap();
    let rx: Vec<_> = log.iter().filter(|r| r.task == Task::DataRx).collect();
    assert_eq!(rx.len(), 1);
    assert_eq!(rx[0].node, 1);
    // receive electronics only: 5e-8 J/bit × 2000 bits
    assert_relative_eq!(rx[0].joules, 1e-4, max_relative = 1e-12);
    assert_eq!(rx[0].constituent, Constituent::Global);
    let tx: Vec<_> = log.iter().filter(|r| r.task == Task::DataTx).collect();
    assert_eq!(tx.iter().map(|r| r.node).collect::<Vec<_>>(), vec![0, 1]);
    // both hops are 15 m: 1e-4 + 1e-10 × 2000 × 225
    for r in tx {
        assert_relative_eq!(r.joules, 1.45e-4, max_relative = 1e-12);
    }
    assert!(out.counters.b_rout > 0);
}

#[test]
fn exhausted_node_stops_and_never_goes_negative() {
    let world = WorldConfig {
        initial_energy: 5e-4,
        ..WorldConfig::default()
    };
    let topo = lone_node();
    let out = Simulation::new(&world, &topo, timing(), vec![], &[phase()])
        .with_log()
        .run();
    assert!(out.residuals[0] >= 0.0);
    assert!(out.residuals[0] < world.stop_threshold);
    let log = out.log.unwrap();
    let stop = log.iter().position(|r| r.task == Task::Stop).expect("node stops");
    assert_eq!(stop, log.len() - 1, "no charges after the stop");
    let logged: f64 = log.iter().map(|r| r.joules).sum();
    assert_relative_eq!(logged, world.initial_energy - out.residuals[0], max_relative = 1e-12);
}
