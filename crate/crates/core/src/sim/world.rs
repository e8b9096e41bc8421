use serde::{Deserialize, Serialize};

use super::SimError;

/// Scenario constants shared by every run of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Side of the square deployment field, meters.
    pub area_side: f64,
    /// Observation window Δt, time units.
    pub delta_t: f64,
    /// Battery at t = 0, joules per node.
    pub initial_energy: f64,
    /// Mean inter-arrival time T of environment events.
    pub event_interval_mean: f64,
    /// Data-packet buffer capacity n_buf.
    pub buffer_capacity: usize,
    pub data_packet_bits: f64,
    pub control_packet_bits: f64,
    /// J/bit spent by transmitter or receiver electronics.
    pub radio_e_elec: f64,
    /// J/bit/m² spent by the transmit amplifier.
    pub radio_e_amp: f64,
    /// e_c(idle), joules per time unit.
    pub idle_power: f64,
    pub stop_threshold: f64,
    /// Joules per sensing operation.
    pub sense_energy: f64,
    /// Time between neighbor-monitor exchanges.
    pub monitor_period: f64,
    /// Route-maintenance control packets per hop per flush.
    pub control_packets_per_hop: u32,
    /// Fixed simulation clock increment.
    pub tick: f64,
    /// Charge overhearing neighbors for data transmissions (off by default).
    pub overhearing: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            area_side: 100.0,
            delta_t: 100.0,
            initial_energy: 0.03,
            event_interval_mean: 1.0,
            buffer_capacity: 10,
            data_packet_bits: 2000.0,
            control_packet_bits: 256.0,
            radio_e_elec: 5e-8,
            radio_e_amp: 1e-10,
            idle_power: 1e-6,
            stop_threshold: 1e-4,
            sense_energy: 1e-5,
            monitor_period: 5.0,
            control_packets_per_hop: 1,
            tick: 0.1,
            overhearing: false,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("area_side", self.area_side),
            ("delta_t", self.delta_t),
            ("initial_energy", self.initial_energy),
            ("event_interval_mean", self.event_interval_mean),
            ("buffer_capacity", self.buffer_capacity as f64),
            ("data_packet_bits", self.data_packet_bits),
            ("control_packet_bits", self.control_packet_bits),
            ("radio_e_elec", self.radio_e_elec),
            ("radio_e_amp", self.radio_e_amp),
            ("idle_power", self.idle_power),
            ("sense_energy", self.sense_energy),
            ("monitor_period", self.monitor_period),
            ("tick", self.tick),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::World(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.stop_threshold.is_finite() && self.stop_threshold >= 0.0) {
            return Err(SimError::World("stop_threshold must be >= 0".into()));
        }
        let horizon = self.buffer_capacity as f64 * self.event_interval_mean;
        if horizon > self.delta_t / 10.0 {
            return Err(SimError::World(format!(
                "buffer_capacity * event_interval_mean = {horizon} must be <= delta_t / 10 = {}",
                self.delta_t / 10.0
            )));
        }
        Ok(())
    }

    pub fn radio(&self) -> Radio {
        Radio {
            e_elec: self.radio_e_elec,
            e_amp: self.radio_e_amp,
        }
    }

    /// n_buf · T, the largest transmission interval that keeps up with event arrivals.
    pub fn buffer_horizon(&self) -> f64 {
        self.buffer_capacity as f64 * self.event_interval_mean
    }

    pub fn num_ticks(&self) -> u64 {
        (self.delta_t / self.tick + 1e-9).floor() as u64
    }
}

/// First-order radio model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radio {
    pub e_elec: f64,
    pub e_amp: f64,
}

impl Radio {
    pub fn tx_energy(&self, bits: f64, distance: f64) -> f64 {
        self.e_elec * bits + self.e_amp * bits * distance * distance
    }

    pub fn rx_energy(&self, bits: f64) -> f64 {
        self.e_elec * bits
    }
}
