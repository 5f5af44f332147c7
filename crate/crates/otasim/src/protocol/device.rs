//! Device-side update state machine.
//!
//! The device is a passive responder: it receives frames, buffers or commits
//! segment data, and acknowledges. A deferred packet (defer flag set) is
//! parked in SRAM; the segment is reconstructed and committed — read,
//! reconstruct, erase, write — only when the segment's final packet arrives,
//! so each dirty segment costs exactly one erase/write pair no matter how
//! many packets it spans.
//!
//! A power failure wipes SRAM: buffered packets, the reconstruction area and
//! the session parameters are all gone. The device's only durable facts are
//! its identity and the flash contents, which is why resumption leans on the
//! distributor's bookkeeping instead of local checkpoints.

use std::collections::BTreeMap;
use std::mem;

use thiserror::Error;

use crate::delta::{apply_delta, DeltaError, SegmentDelta, UpdateBlock};
use crate::flash::{FlashError, FlashMemory, SramBuffer, SramError, ERASED_BYTE};
use crate::packet::{
    decode, decode_ea_blocks, decode_in_blocks, CodecError, MsgType, PacketFlags, UpdatePacket,
    FRAME_OVERHEAD,
};
use crate::protocol::driver::{Action, ActionSink, Actor, SinkFault};
use crate::protocol::{Approach, UpdateConfig};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Fault(#[from] SinkFault),
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("flash: {0}")]
    Flash(#[from] FlashError),
    #[error("sram: {0}")]
    Sram(#[from] SramError),
    #[error("delta: {0}")]
    Delta(#[from] DeltaError),
    #[error("unexpected message: {reason}")]
    Unexpected { reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DevicePhase {
    Idle,
    Receiving,
    Done,
}

/// What can happen to a device.
pub enum DeviceEvent<'a> {
    /// Power restored after a failure; volatile state is gone.
    PowerOn,
    /// A frame arrived on the radio.
    Frame(&'a [u8]),
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    device_id: u16,
    pub flash: FlashMemory,
    pub sram: SramBuffer,
    phase: DevicePhase,
    approach: Option<Approach>,
    /// Blocks buffered for the segment currently being deferred.
    pending_blocks: Vec<UpdateBlock>,
    pending_segment: Option<usize>,
    pending_frame_bytes: usize,
    /// Accumulated image for whole-image (LW) transfers.
    lw_buf: Vec<u8>,
}

impl DeviceState {
    /// A device preloaded with `old_image`. With `hypothetical_sram` the SRAM
    /// budget is extended far enough to stage any image that fits in flash.
    pub fn new(
        device_id: u16,
        cfg: &UpdateConfig,
        old_image: &[u8],
    ) -> Result<Self, FlashError> {
        let flash = FlashMemory::with_image(old_image, cfg.flash_total_size, cfg.segment_size)?;
        let capacity = if cfg.hypothetical_sram {
            cfg.sram_capacity + cfg.flash_total_size
        } else {
            cfg.sram_capacity
        };
        Ok(Self {
            device_id,
            flash,
            sram: SramBuffer::new(capacity),
            phase: DevicePhase::Idle,
            approach: None,
            pending_blocks: Vec::new(),
            pending_segment: None,
            pending_frame_bytes: 0,
            lw_buf: Vec::new(),
        })
    }

    pub fn device_id(&self) -> u16 {
        self.device_id
    }

    pub fn phase(&self) -> DevicePhase {
        self.phase
    }

    /// Drops everything volatile, as a brown-out would. Flash and identity
    /// survive.
    pub fn reset_volatile(&mut self) {
        self.sram.reset();
        self.pending_blocks.clear();
        self.pending_segment = None;
        self.pending_frame_bytes = 0;
        self.lw_buf.clear();
        self.approach = None;
        self.phase = DevicePhase::Idle;
    }

    fn hello_packet(&self) -> UpdatePacket {
        UpdatePacket::new(
            MsgType::Hello,
            PacketFlags::default(),
            0,
            0,
            self.device_id.to_le_bytes().to_vec(),
        )
        .expect("hello payload fits")
    }

    /// Handles one event, charging every radio/flash operation through the
    /// sink, and returns the reply frame if any.
    pub fn step(
        &mut self,
        event: DeviceEvent<'_>,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        match event {
            DeviceEvent::PowerOn => {
                self.reset_volatile();
                let hello = self.hello_packet();
                self.reply(hello, sink)
            }
            DeviceEvent::Frame(bytes) => {
                sink.perform(Actor::Device, Action::RxFrame { bytes: bytes.len() })?;
                let pkt = decode(bytes)?;
                match pkt.header.msg_type {
                    MsgType::Notify => self.on_notify(&pkt, sink),
                    MsgType::EaData => self.on_ea_data(&pkt, sink),
                    MsgType::InData => self.on_in_data(&pkt, sink),
                    MsgType::LwData => self.on_lw_data(&pkt, sink),
                    MsgType::Done => self.on_done(&pkt),
                    _ => Err(DeviceError::Unexpected {
                        reason: "device received a device-originated message type",
                    }),
                }
            }
        }
    }

    fn reply(
        &mut self,
        pkt: UpdatePacket,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        sink.perform(
            Actor::Device,
            Action::TxFrame {
                bytes: pkt.encoded_len(),
            },
        )?;
        Ok(Some(pkt))
    }

    fn ack(
        &mut self,
        seq: u16,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        self.reply(UpdatePacket::control(MsgType::Ack, seq), sink)
    }

    fn on_notify(
        &mut self,
        pkt: &UpdatePacket,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        if self.phase != DevicePhase::Idle {
            return Err(DeviceError::Unexpected {
                reason: "notify outside idle phase",
            });
        }
        let p = &pkt.payload;
        if p.len() != 9 {
            return Err(DeviceError::Unexpected {
                reason: "notify payload must be 9 bytes",
            });
        }
        let target = u16::from_le_bytes([p[0], p[1]]);
        if target != self.device_id {
            return Err(DeviceError::Unexpected {
                reason: "notify for a different device",
            });
        }
        self.approach = Some(Approach::from_byte(p[2]).ok_or(DeviceError::Unexpected {
            reason: "unknown approach in notify",
        })?);
        self.phase = DevicePhase::Receiving;
        self.reply(UpdatePacket::control(MsgType::RequestNext, 0), sink)
    }

    fn expect_data_phase(&self, approach: Approach) -> Result<(), DeviceError> {
        if self.phase != DevicePhase::Receiving {
            return Err(DeviceError::Unexpected {
                reason: "data packet outside receiving phase",
            });
        }
        if self.approach != Some(approach) {
            return Err(DeviceError::Unexpected {
                reason: "data packet type does not match the announced approach",
            });
        }
        Ok(())
    }

    fn on_ea_data(
        &mut self,
        pkt: &UpdatePacket,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        self.expect_data_phase(Approach::Ea)?;
        let segment = pkt.header.segment_index as usize;
        if let Some(pending) = self.pending_segment {
            if pending != segment {
                return Err(DeviceError::Unexpected {
                    reason: "packet for a different segment while deferring",
                });
            }
        }
        let frame_bytes = pkt.encoded_len();
        self.sram.alloc(frame_bytes)?;
        sink.perform(Actor::Device, Action::SramStore { bytes: frame_bytes })?;
        let blocks = decode_ea_blocks(&pkt.payload)?;

        if pkt.header.flags.defer {
            self.pending_segment = Some(segment);
            self.pending_blocks.extend(blocks);
            self.pending_frame_bytes += frame_bytes;
        } else {
            let mut all = mem::take(&mut self.pending_blocks);
            all.extend(blocks);
            self.commit_segment(segment, all, sink)?;
            self.sram.free(self.pending_frame_bytes + frame_bytes);
            self.pending_frame_bytes = 0;
            self.pending_segment = None;
        }
        self.ack(pkt.header.packet_seq, sink)
    }

    fn on_in_data(
        &mut self,
        pkt: &UpdatePacket,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        self.expect_data_phase(Approach::In)?;
        let frame_bytes = pkt.encoded_len();
        self.sram.alloc(frame_bytes)?;
        sink.perform(Actor::Device, Action::SramStore { bytes: frame_bytes })?;

        // Split absolute spans on segment boundaries, then commit every
        // touched segment right away: this baseline never defers.
        let segment_size = self.flash.segment_size();
        let mut per_segment: BTreeMap<usize, Vec<UpdateBlock>> = BTreeMap::new();
        for (abs_start, data) in decode_in_blocks(&pkt.payload)? {
            let mut abs = abs_start;
            let mut rest = &data[..];
            while !rest.is_empty() {
                let segment = abs / segment_size;
                let offset = abs % segment_size;
                let take = rest.len().min(segment_size - offset);
                per_segment.entry(segment).or_default().push(UpdateBlock {
                    offset,
                    data: rest[..take].to_vec(),
                });
                abs += take;
                rest = &rest[take..];
            }
        }
        for (segment, blocks) in per_segment {
            self.commit_segment(segment, blocks, sink)?;
        }
        self.sram.free(frame_bytes);
        self.ack(pkt.header.packet_seq, sink)
    }

    fn on_lw_data(
        &mut self,
        pkt: &UpdatePacket,
        sink: &mut dyn ActionSink,
    ) -> Result<Option<UpdatePacket>, DeviceError> {
        self.expect_data_phase(Approach::Lw)?;
        let frame_bytes = pkt.encoded_len();
        self.sram.alloc(frame_bytes)?;
        sink.perform(Actor::Device, Action::SramStore { bytes: frame_bytes })?;
        self.lw_buf.extend_from_slice(&pkt.payload);
        // The frame is decoded; only the image bytes stay resident.
        self.sram.free(FRAME_OVERHEAD);

        if pkt.header.flags.final_update {
            self.commit_whole_image(sink)?;
            self.sram.free(self.lw_buf.len());
            self.lw_buf.clear();
        }
        self.ack(pkt.header.packet_seq, sink)
    }

    fn on_done(&mut self, _pkt: &UpdatePacket) -> Result<Option<UpdatePacket>, DeviceError> {
        if self.phase != DevicePhase::Receiving {
            return Err(DeviceError::Unexpected {
                reason: "done outside receiving phase",
            });
        }
        if !self.pending_blocks.is_empty() {
            return Err(DeviceError::Unexpected {
                reason: "done while a segment commit is still deferred",
            });
        }
        self.phase = DevicePhase::Done;
        Ok(None)
    }

    /// Read–reconstruct–erase–write for one segment. Flash content is only
    /// mutated after both flash operations were charged successfully, so an
    /// interrupted commit leaves the old segment intact for the retry.
    fn commit_segment(
        &mut self,
        segment: usize,
        blocks: Vec<UpdateBlock>,
        sink: &mut dyn ActionSink,
    ) -> Result<(), DeviceError> {
        sink.perform(Actor::Device, Action::FlashRead { segment })?;
        let old_segment = self.flash.read_segment(segment)?;
        self.sram.alloc(self.flash.segment_size())?;
        sink.perform(Actor::Device, Action::Reconstruct { segment })?;
        let delta = SegmentDelta {
            segment_index: segment,
            blocks,
            grows_image: false,
        };
        let new_segment = apply_delta(&old_segment, &delta)?;
        let committed = (|| -> Result<(), SinkFault> {
            sink.perform(Actor::Device, Action::FlashErase { segment })?;
            sink.perform(Actor::Device, Action::FlashWrite { segment })
        })();
        match committed {
            Ok(()) => {
                self.flash.erase_segment(segment)?;
                self.flash.write_segment(segment, &new_segment)?;
                self.sram.free(self.flash.segment_size());
                Ok(())
            }
            Err(fault) => Err(fault.into()),
        }
    }

    /// Whole-image commit for the LW baseline: one provisional light write
    /// plus its reinforcement per segment, straight from the SRAM-resident
    /// image.
    fn commit_whole_image(&mut self, sink: &mut dyn ActionSink) -> Result<(), DeviceError> {
        let segment_size = self.flash.segment_size();
        let segments = self.lw_buf.len().div_ceil(segment_size);
        for segment in 0..segments {
            sink.perform(Actor::Device, Action::LightFlashWrite { segment })?;
            sink.perform(Actor::Device, Action::Reinforce { segment })?;
            let start = segment * segment_size;
            let end = (start + segment_size).min(self.lw_buf.len());
            let mut content = self.lw_buf[start..end].to_vec();
            content.resize(segment_size, ERASED_BYTE);
            self.flash.erase_segment(segment)?;
            self.flash.write_segment(segment, &content)?;
        }
        Ok(())
    }
}
