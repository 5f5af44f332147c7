//! Energy accounting: the per-operation cost model, capacitor storage,
//! harvested-power traces, and the intermittent discrete-event executor.

pub mod capacitor;
pub mod cost;
pub mod sim;
pub mod trace;

pub use capacitor::{CapacitorConfig, CapacitorState};
pub use cost::{op_cost, CostModel, OpKind};
pub use sim::{simulate, SimConfig, SimError, SimOutcome};
pub use trace::{generate_trace, PowerTrace, TraceParams};

use serde::{Deserialize, Serialize};

/// Where a unit of spent energy is booked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCategory {
    Communication,
    FlashErase,
    FlashWrite,
    FlashRead,
    LightFlashWrite,
    Reinforcement,
    LowpowerIdle,
    Wasted,
}

impl EnergyCategory {
    pub const ALL: [EnergyCategory; 8] = [
        EnergyCategory::Communication,
        EnergyCategory::FlashErase,
        EnergyCategory::FlashWrite,
        EnergyCategory::FlashRead,
        EnergyCategory::LightFlashWrite,
        EnergyCategory::Reinforcement,
        EnergyCategory::LowpowerIdle,
        EnergyCategory::Wasted,
    ];
}

/// Per-category accumulated energy (µJ) and time (s).
///
/// `wasted` holds the full cost of operations that a power failure cut short;
/// they are non-interruptible, so their energy is lost rather than split.
/// Reinforcement time is always zero: it is booked as energy only and kept
/// out of update-time totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub communication_uj: f64,
    pub flash_erase_uj: f64,
    pub flash_write_uj: f64,
    pub flash_read_uj: f64,
    pub light_flash_write_uj: f64,
    pub reinforcement_uj: f64,
    pub lowpower_idle_uj: f64,
    pub wasted_uj: f64,
    pub communication_s: f64,
    pub flash_erase_s: f64,
    pub flash_write_s: f64,
    pub flash_read_s: f64,
    pub light_flash_write_s: f64,
    pub reinforcement_s: f64,
    pub lowpower_idle_s: f64,
    pub wasted_s: f64,
}

impl EnergyLedger {
    pub fn charge(&mut self, category: EnergyCategory, energy_uj: f64, time_s: f64) {
        let (e, t) = self.slot_mut(category);
        *e += energy_uj;
        *t += time_s;
    }

    pub fn energy_uj(&self, category: EnergyCategory) -> f64 {
        match category {
            EnergyCategory::Communication => self.communication_uj,
            EnergyCategory::FlashErase => self.flash_erase_uj,
            EnergyCategory::FlashWrite => self.flash_write_uj,
            EnergyCategory::FlashRead => self.flash_read_uj,
            EnergyCategory::LightFlashWrite => self.light_flash_write_uj,
            EnergyCategory::Reinforcement => self.reinforcement_uj,
            EnergyCategory::LowpowerIdle => self.lowpower_idle_uj,
            EnergyCategory::Wasted => self.wasted_uj,
        }
    }

    pub fn total_uj(&self) -> f64 {
        EnergyCategory::ALL
            .iter()
            .map(|&c| self.energy_uj(c))
            .sum()
    }

    /// Summed per-category time. Reinforcement contributes zero by design.
    pub fn total_s(&self) -> f64 {
        self.communication_s
            + self.flash_erase_s
            + self.flash_write_s
            + self.flash_read_s
            + self.light_flash_write_s
            + self.reinforcement_s
            + self.lowpower_idle_s
            + self.wasted_s
    }

    fn slot_mut(&mut self, category: EnergyCategory) -> (&mut f64, &mut f64) {
        match category {
            EnergyCategory::Communication => (&mut self.communication_uj, &mut self.communication_s),
            EnergyCategory::FlashErase => (&mut self.flash_erase_uj, &mut self.flash_erase_s),
            EnergyCategory::FlashWrite => (&mut self.flash_write_uj, &mut self.flash_write_s),
            EnergyCategory::FlashRead => (&mut self.flash_read_uj, &mut self.flash_read_s),
            EnergyCategory::LightFlashWrite => {
                (&mut self.light_flash_write_uj, &mut self.light_flash_write_s)
            }
            EnergyCategory::Reinforcement => (&mut self.reinforcement_uj, &mut self.reinforcement_s),
            EnergyCategory::LowpowerIdle => (&mut self.lowpower_idle_uj, &mut self.lowpower_idle_s),
            EnergyCategory::Wasted => (&mut self.wasted_uj, &mut self.wasted_s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_totals_sum_categories() {
        let mut ledger = EnergyLedger::default();
        ledger.charge(EnergyCategory::Communication, 10.0, 0.5);
        ledger.charge(EnergyCategory::FlashErase, 137.2, 0.027);
        ledger.charge(EnergyCategory::Wasted, 2.0, 0.0);
        assert!((ledger.total_uj() - 149.2).abs() < 1e-9);
        assert!((ledger.total_s() - 0.527).abs() < 1e-12);
        assert_eq!(ledger.energy_uj(EnergyCategory::FlashErase), 137.2);
    }
}
