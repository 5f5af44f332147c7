//! The quantitative cost model: energy and time per protocol operation.
//!
//! The defaults are measured constants for a flash-based sensor node with a
//! BLE radio: per-byte transmission cost, segment erase/write/read costs,
//! and the low-power floor. Communication is charged with a single per-byte
//! constant covering both directions; receive energy is folded into it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("operation size must be positive")]
    ZeroSize,
    #[error("cost model constant {name} must be positive")]
    NonPositiveConstant { name: &'static str },
}

/// Energy/time constants. Field suffixes carry the unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Average energy per transmitted byte.
    pub e_byte_tx_uj: f64,
    /// Erase one flash segment.
    pub e_erase_uj: f64,
    /// Write one (erased) flash segment.
    pub e_write_uj: f64,
    /// Read and reconstruct one segment in SRAM.
    pub e_read_uj: f64,
    /// Average time per transmitted byte.
    pub t_byte_tx_us: f64,
    /// Segment erase time.
    pub t_erase_ms: f64,
    /// Segment write time.
    pub t_write_ms: f64,
    /// Power draw while parked in low-power mode.
    pub p_lowpower_uw: f64,
    /// Low-energy provisional segment write (whole-image baseline only).
    pub e_light_write_uj: f64,
    /// Duration of a light write.
    pub t_light_write_ms: f64,
    /// Deferred full-strength programming that backs a light write. Charged
    /// once per written segment, energy only.
    pub e_reinforce_uj: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            e_byte_tx_uj: 0.251,
            e_erase_uj: 137.2,
            e_write_uj: 78.80,
            e_read_uj: 0.500,
            t_byte_tx_us: 9.361,
            t_erase_ms: 27.00,
            t_write_ms: 16.00,
            p_lowpower_uw: 89.00,
            e_light_write_uj: 7.88,
            t_light_write_ms: 1.6,
            e_reinforce_uj: 216.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), CostError> {
        let fields = [
            ("e_byte_tx_uj", self.e_byte_tx_uj),
            ("e_erase_uj", self.e_erase_uj),
            ("e_write_uj", self.e_write_uj),
            ("e_read_uj", self.e_read_uj),
            ("t_byte_tx_us", self.t_byte_tx_us),
            ("t_erase_ms", self.t_erase_ms),
            ("t_write_ms", self.t_write_ms),
            ("p_lowpower_uw", self.p_lowpower_uw),
            ("e_light_write_uj", self.e_light_write_uj),
            ("t_light_write_ms", self.t_light_write_ms),
            ("e_reinforce_uj", self.e_reinforce_uj),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(CostError::NonPositiveConstant { name });
            }
        }
        Ok(())
    }

    /// Energy for a full erase-then-write segment commit.
    pub fn segment_commit_uj(&self) -> f64 {
        self.e_erase_uj + self.e_write_uj
    }
}

/// A chargeable primitive operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    /// Radio transfer of `bytes` (either direction).
    Tx { bytes: usize },
    Erase,
    Write,
    ReadReconstruct,
    LightWrite,
    Reinforce,
}

/// Energy (µJ) and duration (s) of one operation.
pub fn op_cost(kind: OpKind, model: &CostModel) -> Result<(f64, f64), CostError> {
    Ok(match kind {
        OpKind::Tx { bytes } => {
            if bytes == 0 {
                return Err(CostError::ZeroSize);
            }
            let n = bytes as f64;
            (n * model.e_byte_tx_uj, n * model.t_byte_tx_us * 1e-6)
        }
        OpKind::Erase => (model.e_erase_uj, model.t_erase_ms * 1e-3),
        OpKind::Write => (model.e_write_uj, model.t_write_ms * 1e-3),
        OpKind::ReadReconstruct => (model.e_read_uj, 0.0),
        OpKind::LightWrite => (model.e_light_write_uj, model.t_light_write_ms * 1e-3),
        // Reinforcement happens outside the update's critical path; its time
        // is excluded from update totals.
        OpKind::Reinforce => (model.e_reinforce_uj, 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn segment_commit_costs_216_microjoules() {
        let m = CostModel::default();
        let (e_erase, t_erase) = op_cost(OpKind::Erase, &m).unwrap();
        let (e_write, t_write) = op_cost(OpKind::Write, &m).unwrap();
        assert_relative_eq!(e_erase + e_write, 216.0, epsilon = 1e-9);
        assert_relative_eq!(m.segment_commit_uj(), 216.0, epsilon = 1e-9);
        assert_relative_eq!(t_erase, 0.027, epsilon = 1e-12);
        assert_relative_eq!(t_write, 0.016, epsilon = 1e-12);
    }

    #[test]
    fn full_frame_transmission_cost() {
        let m = CostModel::default();
        let (e, t) = op_cost(OpKind::Tx { bytes: 261 }, &m).unwrap();
        assert_relative_eq!(e, 65.511, epsilon = 1e-9);
        assert_relative_eq!(t, 2.443221e-3, epsilon = 1e-12);
    }

    #[test]
    fn zero_byte_transfer_rejected() {
        assert_eq!(
            op_cost(OpKind::Tx { bytes: 0 }, &CostModel::default()),
            Err(CostError::ZeroSize)
        );
    }

    #[test]
    fn read_and_reinforce_take_no_modeled_time() {
        let m = CostModel::default();
        assert_eq!(op_cost(OpKind::ReadReconstruct, &m).unwrap(), (0.5, 0.0));
        let (e, t) = op_cost(OpKind::Reinforce, &m).unwrap();
        assert_relative_eq!(e, 216.0, epsilon = 1e-9);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn validation_rejects_non_positive_constants() {
        let mut m = CostModel::default();
        assert!(m.validate().is_ok());
        m.e_erase_uj = 0.0;
        assert!(matches!(
            m.validate(),
            Err(CostError::NonPositiveConstant {
                name: "e_erase_uj"
            })
        ));
    }
}
