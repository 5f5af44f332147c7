//! Update protocol: three approaches over one stop-and-wait exchange.
//!
//! * **EA** — segment-scoped packets with deferred flash commits: the device
//!   buffers a segment's packets in SRAM and spends exactly one erase/write
//!   pair per dirty segment.
//! * **IN** — incremental baseline: packets pack blocks back to back across
//!   segment boundaries and the device commits every touched segment on
//!   every packet.
//! * **LW** — whole-image baseline: the complete new image is staged in SRAM
//!   and written out in one pass, which caps the update size at the SRAM
//!   capacity unless the hypothetical-SRAM switch lifts it.
//!
//! Recovery is checkpoint-free: the distributor counts committed units from
//! the acks it has seen, and a rebooted device only has to say hello to get
//! the stream rewound to the first unfinished unit.

pub mod device;
pub mod distributor;
pub mod driver;
pub mod plan;

pub use device::{DeviceError, DeviceEvent, DevicePhase, DeviceState};
pub use distributor::{DistributorSession, SessionError, SessionOutput};
pub use driver::{
    drive, transcript_to_jsonl, ActionSink, Actor, DriveError, DriveStats, PureSink,
    TranscriptEvent,
};
pub use plan::{build_plan, PacketPlan, PlanError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::cost::{CostError, CostModel};
use crate::flash::{FlashError, FlashMemory, ERASED_BYTE};
use crate::metrics::Metrics;

/// The three update approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "EA")]
    Ea,
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "LW")]
    Lw,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Ea, Approach::In, Approach::Lw];

    pub fn to_byte(self) -> u8 {
        match self {
            Approach::Ea => 0,
            Approach::In => 1,
            Approach::Lw => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Approach::Ea),
            1 => Some(Approach::In),
            2 => Some(Approach::Lw),
            _ => None,
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Approach::Ea => "EA",
            Approach::In => "IN",
            Approach::Lw => "LW",
        })
    }
}

impl std::str::FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ea" => Ok(Approach::Ea),
            "in" => Ok(Approach::In),
            "lw" => Ok(Approach::Lw),
            other => Err(format!("unknown approach `{other}` (expected ea, in or lw)")),
        }
    }
}

/// Geometry and protocol knobs shared by planner, device and simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub flash_total_size: usize,
    pub segment_size: usize,
    /// Gap-merge threshold for the delta engine.
    pub merge_gap: usize,
    /// Frame budget per packet, header and CRC included.
    pub max_packet: usize,
    pub sram_capacity: usize,
    /// Lifts the SRAM staging limit for the whole-image baseline so it can
    /// be compared on updates it could not physically perform.
    pub hypothetical_sram: bool,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            flash_total_size: crate::flash::DEFAULT_FLASH_SIZE,
            segment_size: crate::flash::DEFAULT_SEGMENT_SIZE,
            merge_gap: 4,
            max_packet: crate::packet::MAX_FRAME,
            sram_capacity: crate::flash::DEFAULT_SRAM_CAPACITY,
            hypothetical_sram: false,
        }
    }
}

impl UpdateConfig {
    pub fn diff_config(&self) -> crate::delta::DiffConfig {
        crate::delta::DiffConfig {
            segment_size: self.segment_size,
            merge_gap: self.merge_gap,
            flash_capacity: self.flash_total_size,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error("flash: {0}")]
    Flash(#[from] FlashError),
    #[error("cost model: {0}")]
    Cost(#[from] CostError),
    #[error("final flash content diverges from the new image at segment {segment}")]
    Verification { segment: usize },
}

/// Configuration for a lossless-channel run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunConfig {
    pub update: UpdateConfig,
    pub cost: CostModel,
}

/// Result of a completed exchange.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub device: DeviceState,
    pub metrics: Metrics,
    pub transcript: Vec<TranscriptEvent>,
    pub stats: DriveStats,
}

/// Runs a full update end to end over a lossless channel with unconstrained
/// energy, verifying that the device's flash ends up holding the new image.
pub fn run_update(
    approach: Approach,
    old: &[u8],
    new: &[u8],
    cfg: &RunConfig,
) -> Result<UpdateOutcome, ProtocolError> {
    cfg.cost.validate()?;
    let mut session = DistributorSession::new(1, approach, old, new, &cfg.update)?;
    let mut device = DeviceState::new(1, &cfg.update, old)?;
    let mut sink = PureSink::new(cfg.cost);
    let stats = drive(&mut session, &mut device, &mut sink)?;
    verify_final_flash(&device.flash, new)
        .map_err(|segment| ProtocolError::Verification { segment })?;
    let metrics = Metrics::assemble(approach, session.plan(), &stats, &sink.core);
    Ok(UpdateOutcome {
        device,
        metrics,
        transcript: sink.core.transcript,
        stats,
    })
}

/// Checks that the flash holds exactly `new`, padded with the erased byte.
/// Returns the first diverging segment on failure.
pub fn verify_final_flash(flash: &FlashMemory, new: &[u8]) -> Result<(), usize> {
    for (i, &actual) in flash.contents().iter().enumerate() {
        let expected = new.get(i).copied().unwrap_or(ERASED_BYTE);
        if actual != expected {
            return Err(i / flash.segment_size());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{MsgType, UpdatePacket};

    fn cfg() -> RunConfig {
        RunConfig::default()
    }

    /// Old/new pair: five segments with one-byte edits, segment 5 fully
    /// rewritten (needs three packets).
    fn staircase_pair() -> (Vec<u8>, Vec<u8>) {
        let old = vec![0u8; 6 * 512];
        let mut new = old.clone();
        for s in 0..5 {
            new[s * 512 + 7] = 0xA0 + s as u8;
        }
        for b in &mut new[5 * 512..] {
            *b = 0x5C;
        }
        (old, new)
    }

    #[test]
    fn identical_images_send_no_data_packets() {
        let img = vec![3u8; 2048];
        let out = run_update(Approach::Ea, &img, &img, &cfg()).unwrap();
        assert_eq!(out.metrics.n_packets, 0);
        assert_eq!(out.metrics.n_erases, 0);
        assert_eq!(out.device.flash.total_erases(), 0);
        assert_eq!(&out.device.flash.contents()[..2048], img.as_slice());
    }

    #[test]
    fn ea_single_packet_segment_does_one_erase_one_write() {
        let old = vec![0u8; 1024];
        let mut new = old.clone();
        new[100] = 0xEE;
        let out = run_update(Approach::Ea, &old, &new, &cfg()).unwrap();
        assert_eq!(out.metrics.n_packets, 1);
        assert_eq!(out.metrics.n_erases, 1);
        assert_eq!(out.metrics.n_writes, 1);
        let names: Vec<&str> = out
            .transcript
            .iter()
            .filter(|e| e.segment == Some(0) || e.event == "sram_store")
            .map(|e| e.event.as_str())
            .collect();
        assert_eq!(
            names,
            vec![
                "sram_store",
                "flash_read",
                "reconstruct",
                "flash_erase",
                "flash_write"
            ]
        );
    }

    #[test]
    fn ea_three_packet_segment_commits_once() {
        let (old, new) = staircase_pair();
        let out = run_update(Approach::Ea, &old, &new, &cfg()).unwrap();
        // 5 single-packet segments + one 3-packet segment.
        assert_eq!(out.metrics.n_packets, 8);
        assert_eq!(out.metrics.n_erases, 6);
        assert_eq!(out.device.flash.erase_count(5).unwrap(), 1);
        assert_eq!(verify_final_flash(&out.device.flash, &new), Ok(()));
    }

    #[test]
    fn in_packet_spanning_two_segments_commits_both() {
        // One contiguous 200-byte change straddling the segment boundary at
        // 512: a single IN packet commits two segments.
        let old = vec![0u8; 1024];
        let mut new = old.clone();
        for b in &mut new[400..600] {
            *b = 0x77;
        }
        let out = run_update(Approach::In, &old, &new, &cfg()).unwrap();
        assert_eq!(out.metrics.n_packets, 1);
        assert_eq!(out.metrics.n_erases, 2);
        assert_eq!(out.metrics.n_writes, 2);
        assert_eq!(verify_final_flash(&out.device.flash, &new), Ok(()));
    }

    #[test]
    fn in_erases_at_least_ea_erases() {
        let (old, new) = staircase_pair();
        let ea = run_update(Approach::Ea, &old, &new, &cfg()).unwrap();
        let incr = run_update(Approach::In, &old, &new, &cfg()).unwrap();
        assert!(incr.metrics.n_erases >= ea.metrics.n_erases);
        assert_eq!(verify_final_flash(&incr.device.flash, &new), Ok(()));
    }

    #[test]
    fn lw_respects_the_sram_staging_limit() {
        let old = vec![1u8; 30 * 1024];
        let mut new = old.clone();
        new[5] = 2;
        let err = run_update(Approach::Lw, &old, &new, &cfg()).unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Plan(PlanError::UpdateImpossible { .. })
        ));

        let mut hypo = cfg();
        hypo.update.hypothetical_sram = true;
        let out = run_update(Approach::Lw, &old, &new, &hypo).unwrap();
        assert_eq!(out.metrics.n_writes, (30 * 1024usize).div_ceil(512) as u64);
        assert_eq!(out.metrics.n_erases, 0);
        assert_eq!(verify_final_flash(&out.device.flash, &new), Ok(()));
    }

    #[test]
    fn lw_transmits_everything_even_when_nothing_changed() {
        let img = vec![9u8; 2000];
        let out = run_update(Approach::Lw, &img, &img, &cfg()).unwrap();
        assert_eq!(out.metrics.n_packets, 2000u64.div_ceil(251));
        assert_eq!(out.metrics.n_writes, 4);
    }

    #[test]
    fn plan_sequence_numbers_strictly_increase() {
        let (old, new) = staircase_pair();
        for approach in Approach::ALL {
            let plan = build_plan(approach, &old, &new, &UpdateConfig::default()).unwrap();
            for (i, p) in plan.packets.iter().enumerate() {
                assert_eq!(p.header.packet_seq as usize, i);
                assert!(p.header.msg_type.is_data());
            }
            if let Some(last) = plan.packets.last() {
                assert!(last.header.flags.final_update);
            }
        }
    }

    #[test]
    fn resume_mid_segment_retransmits_only_that_segment() {
        let (old, new) = staircase_pair();
        let mut session =
            DistributorSession::new(1, Approach::Ea, &old, &new, &UpdateConfig::default())
                .unwrap();
        let _notify = session.start();
        let request = UpdatePacket::control(MsgType::RequestNext, 0);
        let mut out = session.handle(&request).unwrap();
        // Ack packets 0..=5: five full segments, then the first two packets
        // of segment 5 (plan indices 5 and 6).
        for seq in 0..=5u16 {
            let SessionOutput::Send { packet, .. } = out;
            assert_eq!(packet.header.packet_seq, seq);
            out = session
                .handle(&UpdatePacket::control(MsgType::Ack, seq))
                .unwrap();
        }
        assert_eq!(session.units_acked(), 5);
        assert_eq!(session.cursor(), 7); // packet 6 (second defer) handed out

        // Power failure now: hello rewinds to segment 5's first packet.
        let hello = UpdatePacket::new(
            MsgType::Hello,
            Default::default(),
            0,
            0,
            1u16.to_le_bytes().to_vec(),
        )
        .unwrap();
        let resumed = session.handle(&hello).unwrap();
        let SessionOutput::Send { packet, .. } = resumed;
        assert_eq!(packet.header.msg_type, MsgType::Notify);
        assert_eq!(session.cursor(), 5);
        assert_eq!(session.take_resume_burst(), Some(2));
        assert_eq!(session.units_acked(), 5);
    }

    #[test]
    fn resume_on_unit_boundary_retransmits_nothing() {
        let (old, new) = staircase_pair();
        let mut session =
            DistributorSession::new(1, Approach::Ea, &old, &new, &UpdateConfig::default())
                .unwrap();
        session.start();
        let mut out = session
            .handle(&UpdatePacket::control(MsgType::RequestNext, 0))
            .unwrap();
        for seq in 0..=4u16 {
            let SessionOutput::Send { packet, .. } = out;
            assert_eq!(packet.header.packet_seq, seq);
            out = session
                .handle(&UpdatePacket::control(MsgType::Ack, seq))
                .unwrap();
        }
        // Segments 0..=4 acked; packet 5 was handed out but counts as not
        // yet sent... it was handed out, so the failure re-sends exactly it.
        assert_eq!(session.cursor(), 6);
        session.resume();
        assert_eq!(session.cursor(), 5);
        assert_eq!(session.take_resume_burst(), Some(1));
    }

    #[test]
    fn hello_for_unknown_device_is_rejected_then_restart_replans() {
        let (old, new) = staircase_pair();
        let mut session =
            DistributorSession::new(1, Approach::Ea, &old, &new, &UpdateConfig::default())
                .unwrap();
        session.start();
        let stranger = UpdatePacket::new(
            MsgType::Hello,
            Default::default(),
            0,
            0,
            9u16.to_le_bytes().to_vec(),
        )
        .unwrap();
        assert!(matches!(
            session.handle(&stranger),
            Err(SessionError::UnknownSession { device_id: 9 })
        ));
        session.restart();
        assert_eq!(session.cursor(), 0);
        assert_eq!(session.units_acked(), 0);
    }

    #[test]
    fn lw_resume_restarts_unless_complete() {
        let img_old = vec![0u8; 600];
        let img_new = vec![1u8; 600];
        let cfg_lw = UpdateConfig {
            hypothetical_sram: true,
            ..UpdateConfig::default()
        };
        let mut session =
            DistributorSession::new(1, Approach::Lw, &img_old, &img_new, &cfg_lw).unwrap();
        session.start();
        let mut out = session
            .handle(&UpdatePacket::control(MsgType::RequestNext, 0))
            .unwrap();
        let SessionOutput::Send { packet, .. } = out;
        assert_eq!(packet.header.packet_seq, 0);
        out = session
            .handle(&UpdatePacket::control(MsgType::Ack, 0))
            .unwrap();
        let SessionOutput::Send { packet, .. } = out;
        assert_eq!(packet.header.packet_seq, 1);
        // The staged chunk died with SRAM: restart from the top.
        assert_eq!(session.resume(), 0);
        assert_eq!(session.take_resume_burst(), Some(2));
    }

    #[test]
    fn run_update_rejects_invalid_images() {
        assert!(matches!(
            run_update(Approach::Ea, &[], &[1], &cfg()),
            Err(ProtocolError::Plan(PlanError::EmptyImage))
        ));
        let huge = vec![0u8; 200 * 1024];
        assert!(matches!(
            run_update(Approach::Ea, &huge, &huge, &cfg()),
            Err(ProtocolError::Plan(PlanError::ImageTooLarge { .. }))
        ));
    }
}
