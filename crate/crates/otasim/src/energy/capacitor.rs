//! Capacitor energy storage with a brown-out / turn-on voltage window.
//!
//! Usable energy is everything stored above the brown-out threshold:
//! `E = ½·C·(v² − v_off²)`. The device browns out when `v` reaches `v_off`
//! and, once off, reboots only after recharging past `v_on` (the hysteresis
//! keeps it from flapping at the threshold).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapacitorError {
    #[error("capacitance must be positive")]
    NonPositiveCapacitance,
    #[error("voltage window must satisfy 0 <= v_off <= v_on <= v_max")]
    InvalidWindow,
    #[error("initial voltage outside [v_off, v_max]")]
    InitialVoltageOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacitorConfig {
    pub capacitance_f: f64,
    pub v_max: f64,
    /// Turn-on threshold after a cold start or brown-out.
    pub v_on: f64,
    /// Brown-out threshold; stored energy below this is unusable.
    pub v_off: f64,
    /// Voltage at simulation start. The default starts discharged, so an
    /// update begins by harvesting up to `v_on`.
    pub initial_v: f64,
}

impl Default for CapacitorConfig {
    fn default() -> Self {
        Self {
            capacitance_f: 0.400,
            v_max: 3.6,
            v_on: 3.0,
            v_off: 1.8,
            initial_v: 1.8,
        }
    }
}

/// Outcome of advancing the capacitor over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    /// Energy that arrived from the harvester over the interval.
    pub harvested_j: f64,
    /// Harvested energy that could not be stored because the capacitor was
    /// full.
    pub overflow_j: f64,
    /// Load energy that could not be served because the capacitor emptied.
    pub deficit_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorState {
    cfg: CapacitorConfig,
    v_now: f64,
}

impl CapacitorState {
    pub fn new(cfg: CapacitorConfig) -> Result<Self, CapacitorError> {
        if !cfg.capacitance_f.is_finite() || cfg.capacitance_f <= 0.0 {
            return Err(CapacitorError::NonPositiveCapacitance);
        }
        let window_ok = 0.0 <= cfg.v_off && cfg.v_off <= cfg.v_on && cfg.v_on <= cfg.v_max;
        if !window_ok {
            return Err(CapacitorError::InvalidWindow);
        }
        let initial_ok = cfg.v_off <= cfg.initial_v && cfg.initial_v <= cfg.v_max;
        if !initial_ok {
            return Err(CapacitorError::InitialVoltageOutOfRange);
        }
        Ok(Self {
            v_now: cfg.initial_v,
            cfg,
        })
    }

    pub fn config(&self) -> &CapacitorConfig {
        &self.cfg
    }

    pub fn voltage(&self) -> f64 {
        self.v_now
    }

    /// Stored energy above the brown-out threshold, in joules.
    pub fn usable_energy_j(&self) -> f64 {
        let c = &self.cfg;
        (0.5 * c.capacitance_f * (self.v_now * self.v_now - c.v_off * c.v_off)).max(0.0)
    }

    /// Usable energy when charged to `v_max`.
    pub fn max_usable_energy_j(&self) -> f64 {
        let c = &self.cfg;
        0.5 * c.capacitance_f * (c.v_max * c.v_max - c.v_off * c.v_off)
    }

    /// Usable energy at the turn-on threshold.
    pub fn turn_on_energy_j(&self) -> f64 {
        let c = &self.cfg;
        0.5 * c.capacitance_f * (c.v_on * c.v_on - c.v_off * c.v_off)
    }

    pub fn is_on_threshold(&self) -> bool {
        self.v_now >= self.cfg.v_on
    }

    /// Sets the stored usable energy directly, clamped to the physical range,
    /// and recomputes the voltage.
    pub fn set_usable_energy_j(&mut self, energy_j: f64) {
        let e = energy_j.clamp(0.0, self.max_usable_energy_j());
        let c = &self.cfg;
        self.v_now = (2.0 * e / c.capacitance_f + c.v_off * c.v_off).sqrt();
    }

    /// Removes `energy_j` of usable energy. Callers check admission first;
    /// the draw saturates at empty and reports how much was actually taken.
    pub fn draw_j(&mut self, energy_j: f64) -> f64 {
        let available = self.usable_energy_j();
        let taken = energy_j.min(available);
        self.set_usable_energy_j(available - taken);
        taken
    }

    /// Advances the capacitor by `dt_s` with constant harvest and load power:
    /// the stored energy moves by `(harvest − load)·dt`, clamped to the
    /// physical range, and the voltage is recomputed. Clamping is reported so
    /// callers can keep exact energy books.
    pub fn step(&mut self, harvest_uw: f64, load_uw: f64, dt_s: f64) -> StepOutcome {
        debug_assert!(dt_s >= 0.0);
        let net_w = (harvest_uw - load_uw) * 1e-6;
        let unclamped = self.usable_energy_j() + net_w * dt_s;
        let max = self.max_usable_energy_j();
        let overflow = (unclamped - max).max(0.0);
        let deficit = (-unclamped).max(0.0);
        self.set_usable_energy_j(unclamped);
        StepOutcome {
            harvested_j: harvest_uw * 1e-6 * dt_s,
            overflow_j: overflow,
            deficit_j: deficit,
        }
    }

    /// Time in seconds until the usable energy reaches `target_j` under a
    /// constant net power of `net_w` watts, or `None` when it never will.
    pub fn time_to_reach_j(&self, target_j: f64, net_w: f64) -> Option<f64> {
        let now = self.usable_energy_j();
        if now >= target_j {
            return Some(0.0);
        }
        if net_w <= 0.0 {
            return None;
        }
        Some((target_j - now) / net_w)
    }

    /// Time in seconds until the usable energy is exhausted under a constant
    /// net drain of `net_w` watts (negative net), or `None` if not draining.
    pub fn time_to_empty_j(&self, net_w: f64) -> Option<f64> {
        if net_w >= 0.0 {
            return None;
        }
        Some(self.usable_energy_j() / -net_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cap_at(initial_v: f64) -> CapacitorState {
        CapacitorState::new(CapacitorConfig {
            initial_v,
            ..CapacitorConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn usable_window_is_1944_millijoules() {
        let cap = cap_at(3.6);
        assert_relative_eq!(cap.usable_energy_j(), 1.944, epsilon = 1e-12);
        assert_relative_eq!(cap.max_usable_energy_j(), 1.944, epsilon = 1e-12);
        assert_relative_eq!(cap_at(1.8).usable_energy_j(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_leaves_state_unchanged() {
        let mut cap = cap_at(3.0);
        let before = cap.voltage();
        let out = cap.step(500.0, 500.0, 10.0);
        assert_relative_eq!(cap.voltage(), before, epsilon = 1e-12);
        assert_relative_eq!(out.harvested_j, 5e-3, epsilon = 1e-15);
        assert_eq!(out.overflow_j, 0.0);
    }

    #[test]
    fn empty_to_full_at_one_milliwatt_takes_1944_seconds() {
        let mut cap = cap_at(1.8);
        let t = cap.time_to_reach_j(cap.max_usable_energy_j(), 1e-3).unwrap();
        assert_relative_eq!(t, 1944.0, epsilon = 1e-9);
        cap.step(1000.0, 0.0, t);
        assert_relative_eq!(cap.voltage(), 3.6, epsilon = 1e-9);
    }

    #[test]
    fn drain_with_zero_harvest_reaches_brownout() {
        let mut cap = cap_at(3.0);
        let usable = cap.usable_energy_j();
        let net_w = -(89.0 * 1e-6);
        let t = cap.time_to_empty_j(net_w).unwrap();
        assert_relative_eq!(t, usable / 89.0e-6, epsilon = 1e-9);
        let out = cap.step(0.0, 89.0, t);
        assert_relative_eq!(cap.voltage(), 1.8, epsilon = 1e-9);
        assert!(out.deficit_j.abs() < 1e-12);
    }

    #[test]
    fn overflow_is_reported_when_full() {
        let mut cap = cap_at(3.6);
        let out = cap.step(1000.0, 0.0, 10.0);
        assert_relative_eq!(out.overflow_j, 1e-2, epsilon = 1e-12);
        assert_relative_eq!(cap.voltage(), 3.6, epsilon = 1e-12);
    }

    #[test]
    fn draw_saturates_at_empty() {
        let mut cap = cap_at(1.9);
        let available = cap.usable_energy_j();
        let taken = cap.draw_j(available + 1.0);
        assert_relative_eq!(taken, available, epsilon = 1e-15);
        assert_relative_eq!(cap.voltage(), 1.8, epsilon = 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_window = CapacitorConfig {
            v_on: 1.0,
            ..CapacitorConfig::default()
        };
        assert_eq!(
            CapacitorState::new(bad_window),
            Err(CapacitorError::InvalidWindow)
        );
        let bad_initial = CapacitorConfig {
            initial_v: 0.5,
            ..CapacitorConfig::default()
        };
        assert_eq!(
            CapacitorState::new(bad_initial),
            Err(CapacitorError::InitialVoltageOutOfRange)
        );
        let bad_capacitance = CapacitorConfig {
            capacitance_f: 0.0,
            ..CapacitorConfig::default()
        };
        assert_eq!(
            CapacitorState::new(bad_capacitance),
            Err(CapacitorError::NonPositiveCapacitance)
        );
    }
}
