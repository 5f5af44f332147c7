//! Packet planning: turn an (old, new) image pair into the full ordered
//! packet list for one update session.

use thiserror::Error;

use crate::delta::{compute_deltas, DeltaError};
use crate::packet::{
    packetize_image_lw, packetize_segment_ea, packetize_stream_in, CodecError, UpdatePacket,
};
use crate::protocol::{Approach, UpdateConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("images must be non-empty")]
    EmptyImage,
    #[error("image of {len} bytes exceeds flash capacity {capacity}")]
    ImageTooLarge { len: usize, capacity: usize },
    #[error(
        "whole-image update impossible: image of {image_len} bytes exceeds \
         the {sram_capacity}-byte SRAM staging limit"
    )]
    UpdateImpossible {
        image_len: usize,
        sram_capacity: usize,
    },
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("delta: {0}")]
    Delta(#[from] DeltaError),
    #[error("plan of {count} packets exceeds the sequence space")]
    TooManyPackets { count: usize },
}

/// The ordered data packets of one update, with unit boundaries for
/// resumption. A unit is a flash segment for EA and a single packet for the
/// IN/LW baselines; `unit_starts[u]` is the plan index of unit `u`'s first
/// packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketPlan {
    pub approach: Approach,
    pub packets: Vec<UpdatePacket>,
    pub unit_starts: Vec<usize>,
    /// Segments where old and new differ, straight from the delta engine.
    pub dirty_segments: usize,
    /// Sum of encoded data-frame sizes: the update's planned wire size.
    pub total_data_bytes: u64,
}

impl PacketPlan {
    pub fn n_units(&self) -> usize {
        self.unit_starts.len()
    }
}

/// Builds the packet plan for one approach.
pub fn build_plan(
    approach: Approach,
    old: &[u8],
    new: &[u8],
    cfg: &UpdateConfig,
) -> Result<PacketPlan, PlanError> {
    if old.is_empty() || new.is_empty() {
        return Err(PlanError::EmptyImage);
    }
    for img in [old, new] {
        if img.len() > cfg.flash_total_size {
            return Err(PlanError::ImageTooLarge {
                len: img.len(),
                capacity: cfg.flash_total_size,
            });
        }
    }
    let deltas = compute_deltas(old, new, &cfg.diff_config())?;
    let dirty_segments = deltas.len();

    let (mut packets, unit_starts) = match approach {
        Approach::Ea => {
            let mut packets = Vec::new();
            let mut unit_starts = Vec::with_capacity(deltas.len());
            for delta in &deltas {
                unit_starts.push(packets.len());
                packets.extend(packetize_segment_ea(delta, cfg.max_packet)?);
            }
            (packets, unit_starts)
        }
        Approach::In => {
            let packets = packetize_stream_in(&deltas, cfg.segment_size, cfg.max_packet)?;
            let unit_starts = (0..packets.len()).collect();
            (packets, unit_starts)
        }
        Approach::Lw => {
            if !cfg.hypothetical_sram && new.len() > cfg.sram_capacity {
                return Err(PlanError::UpdateImpossible {
                    image_len: new.len(),
                    sram_capacity: cfg.sram_capacity,
                });
            }
            let packets = packetize_image_lw(new, cfg.max_packet)?;
            let unit_starts = (0..packets.len()).collect();
            (packets, unit_starts)
        }
    };

    if packets.len() > usize::from(u16::MAX) {
        return Err(PlanError::TooManyPackets {
            count: packets.len(),
        });
    }
    for (i, pkt) in packets.iter_mut().enumerate() {
        pkt.header.packet_seq = i as u16;
    }
    if let Some(last) = packets.last_mut() {
        last.header.flags.final_update = true;
    }
    let total_data_bytes = packets.iter().map(|p| p.encoded_len() as u64).sum();

    Ok(PacketPlan {
        approach,
        packets,
        unit_starts,
        dirty_segments,
        total_data_bytes,
    })
}
