//! The per-run metrics record shared by the pure executor, the intermittent
//! simulator, and the benchmark suite.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyLedger;
use crate::protocol::driver::{DriveStats, SinkCore};
use crate::protocol::plan::PacketPlan;
use crate::protocol::Approach;

/// Everything measured about one update run.
///
/// `total_update_bytes` and `n_packets` describe the planned data packets;
/// retransmissions forced by power failures are reported separately so the
/// planned wire size stays comparable across runs. `n_writes` counts segment
/// programming operations (light writes for the whole-image baseline, which
/// books its flash work as light-write plus reinforcement and therefore
/// reports zero erases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub approach: Approach,
    pub benchmark: String,
    pub total_update_bytes: u64,
    pub n_packets: u64,
    pub n_writes: u64,
    pub n_erases: u64,
    pub energy: EnergyLedger,
    pub total_time_s: f64,
    pub n_power_failures: u64,
    pub n_retransmitted_packets: u64,
}

impl Metrics {
    pub(crate) fn assemble(
        approach: Approach,
        plan: &PacketPlan,
        stats: &DriveStats,
        core: &SinkCore,
    ) -> Self {
        Self {
            approach,
            benchmark: String::new(),
            total_update_bytes: plan.total_data_bytes,
            n_packets: plan.packets.len() as u64,
            n_writes: core.counters.writes + core.counters.light_writes,
            n_erases: core.counters.erases,
            energy: core.ledger.clone(),
            total_time_s: core.time_s,
            n_power_failures: stats.power_failures,
            n_retransmitted_packets: stats.retransmitted_packets,
        }
    }

    pub fn total_energy_uj(&self) -> f64 {
        self.energy.total_uj()
    }
}
