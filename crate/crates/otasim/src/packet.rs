//! Bit-exact framing for update and control packets.
//!
//! Every frame has the same little-endian layout:
//!
//! ```text
//! [version:1][msg_type:1][flags:1][segment_index:2][packet_seq:2][payload_len:1]
//! [payload: payload_len][crc16: 2]
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over header plus
//! payload. A frame is at most [`MAX_FRAME`] = 261 bytes, so the payload is
//! capped at 251 bytes. Flags: bit 0 is the defer flag (device buffers the
//! packet and postpones the flash commit), bit 1 marks the final packet of
//! the whole update.
//!
//! Payload contents depend on the message type:
//!
//! * `EA_DATA` — update blocks for exactly one segment, each encoded as
//!   `[offset:2][length:1][data]` with offsets relative to the segment.
//! * `IN_DATA` — update blocks addressed absolutely in flash, encoded as
//!   `[abs_offset:3][length:1][data]`, freely crossing segment boundaries.
//! * `LW_DATA` — a raw chunk of the full image, no structure.
//! * Control frames (`NOTIFY`, `HELLO`, `REQUEST_NEXT`, `ACK`, `DONE`) carry
//!   small fixed payloads defined by the protocol layer.

use thiserror::Error;

use crate::delta::{SegmentDelta, UpdateBlock, MAX_BLOCK_LEN};

pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const CRC_LEN: usize = 2;
/// Header plus CRC trailer.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + CRC_LEN;
/// Largest frame on the wire.
pub const MAX_FRAME: usize = 261;
/// Largest payload a frame can carry.
pub const MAX_PAYLOAD: usize = MAX_FRAME - FRAME_OVERHEAD;
/// Per-block wire overhead for segment-relative (EA) blocks.
pub const EA_BLOCK_OVERHEAD: usize = 3;
/// Per-block wire overhead for absolutely addressed (IN) blocks.
pub const IN_BLOCK_OVERHEAD: usize = 4;
/// Smallest useful EA packet: overhead plus one minimal block.
pub const MIN_EA_PACKET: usize = FRAME_OVERHEAD + EA_BLOCK_OVERHEAD + 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed header: {reason}")]
    MalformedHeader { reason: &'static str },
    #[error("crc mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    CrcMismatch { stored: u16, computed: u16 },
    #[error("length mismatch: header says {declared} payload bytes, frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload of {len} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge { len: usize },
    #[error("max packet {max_packet} below minimum {min}")]
    PacketTooSmall { max_packet: usize, min: usize },
    #[error("max packet {max_packet} above frame limit {MAX_FRAME}")]
    PacketTooLarge { max_packet: usize },
    #[error("delta carries no blocks")]
    EmptyDelta,
    #[error("image is empty")]
    EmptyImage,
    #[error("absolute offset {offset} does not fit in 24 bits")]
    OffsetOverflow { offset: usize },
    #[error("truncated block structure in payload")]
    TruncatedBlock,
    #[error("packet sequence space exhausted ({count} packets)")]
    TooManyPackets { count: usize },
}

/// Message discriminator, one byte on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    EaData = 0,
    InData = 1,
    LwData = 2,
    Notify = 3,
    Hello = 4,
    RequestNext = 5,
    Ack = 6,
    Done = 7,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Result<Self, CodecError> {
        Ok(match b {
            0 => MsgType::EaData,
            1 => MsgType::InData,
            2 => MsgType::LwData,
            3 => MsgType::Notify,
            4 => MsgType::Hello,
            5 => MsgType::RequestNext,
            6 => MsgType::Ack,
            7 => MsgType::Done,
            _ => {
                return Err(CodecError::MalformedHeader {
                    reason: "unknown message type",
                })
            }
        })
    }

    pub fn is_data(self) -> bool {
        matches!(self, MsgType::EaData | MsgType::InData | MsgType::LwData)
    }
}

/// Header flag bits. Only the two defined bits may be set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PacketFlags {
    /// Buffer this packet in SRAM; more packets for the same segment follow.
    pub defer: bool,
    /// Final data packet of the whole update.
    pub final_update: bool,
}

impl PacketFlags {
    const DEFER: u8 = 0b0000_0001;
    const FINAL: u8 = 0b0000_0010;

    pub fn to_byte(self) -> u8 {
        (if self.defer { Self::DEFER } else { 0 }) | (if self.final_update { Self::FINAL } else { 0 })
    }

    pub fn from_byte(b: u8) -> Result<Self, CodecError> {
        if b & !(Self::DEFER | Self::FINAL) != 0 {
            return Err(CodecError::MalformedHeader {
                reason: "unknown flag bits",
            });
        }
        Ok(Self {
            defer: b & Self::DEFER != 0,
            final_update: b & Self::FINAL != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketHeader {
    pub version: u8,
    pub msg_type: MsgType,
    pub flags: PacketFlags,
    /// Target flash segment; meaningful only for `EA_DATA`, zero elsewhere.
    pub segment_index: u16,
    /// Monotonically increasing per session for data packets; acks echo the
    /// sequence they acknowledge.
    pub packet_seq: u16,
    pub payload_len: u8,
}

/// A framed message: header plus payload. The CRC is computed at encode time
/// and checked at decode time, so an in-memory packet is always consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdatePacket {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

impl UpdatePacket {
    pub fn new(
        msg_type: MsgType,
        flags: PacketFlags,
        segment_index: u16,
        packet_seq: u16,
        payload: Vec<u8>,
    ) -> Result<Self, CodecError> {
        if payload.len() > MAX_PAYLOAD {
            return Err(CodecError::PayloadTooLarge { len: payload.len() });
        }
        Ok(Self {
            header: PacketHeader {
                version: PROTOCOL_VERSION,
                msg_type,
                flags,
                segment_index,
                packet_seq,
                payload_len: payload.len() as u8,
            },
            payload,
        })
    }

    /// Control frame without payload.
    pub fn control(msg_type: MsgType, packet_seq: u16) -> Self {
        Self::new(msg_type, PacketFlags::default(), 0, packet_seq, Vec::new())
            .expect("empty payload always fits")
    }

    /// Size of the encoded frame.
    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }
}

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no
/// final xor. Check value for `"123456789"` is 0x29B1.
pub fn crc16_ccitt_false(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= u16::from(b) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

/// Serializes a packet to its wire frame.
pub fn encode(packet: &UpdatePacket) -> Vec<u8> {
    let h = &packet.header;
    debug_assert_eq!(h.payload_len as usize, packet.payload.len());
    let mut out = Vec::with_capacity(packet.encoded_len());
    out.push(h.version);
    out.push(h.msg_type as u8);
    out.push(h.flags.to_byte());
    out.extend_from_slice(&h.segment_index.to_le_bytes());
    out.extend_from_slice(&h.packet_seq.to_le_bytes());
    out.push(h.payload_len);
    out.extend_from_slice(&packet.payload);
    let crc = crc16_ccitt_false(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    debug_assert!(out.len() <= MAX_FRAME, "frame exceeds wire limit");
    out
}

/// Parses and validates a wire frame.
///
/// Integrity is checked before structure: any corruption of a valid frame
/// surfaces as [`CodecError::CrcMismatch`]. [`CodecError::LengthMismatch`]
/// and [`CodecError::MalformedHeader`] are reserved for frames that are
/// internally consistent but structurally wrong.
pub fn decode(bytes: &[u8]) -> Result<UpdatePacket, CodecError> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(CodecError::MalformedHeader {
            reason: "frame below minimum length",
        });
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u16::from_le_bytes([crc_bytes[0], crc_bytes[1]]);
    let computed = crc16_ccitt_false(body);
    if stored != computed {
        return Err(CodecError::CrcMismatch { stored, computed });
    }
    if bytes.len() > MAX_FRAME {
        return Err(CodecError::MalformedHeader {
            reason: "frame above maximum length",
        });
    }
    let declared = body[7] as usize;
    let actual = body.len() - HEADER_LEN;
    if declared != actual {
        return Err(CodecError::LengthMismatch { declared, actual });
    }
    let msg_type = MsgType::from_byte(body[1])?;
    let flags = PacketFlags::from_byte(body[2])?;
    Ok(UpdatePacket {
        header: PacketHeader {
            version: body[0],
            msg_type,
            flags,
            segment_index: u16::from_le_bytes([body[3], body[4]]),
            packet_seq: u16::from_le_bytes([body[5], body[6]]),
            payload_len: body[7],
        },
        payload: body[HEADER_LEN..].to_vec(),
    })
}

/// Contiguous patched spans of a delta, used for wire chunking. Adjacent
/// blocks produced by the length-capped diff are rejoined first so packet
/// boundaries, not block history, decide the framing.
fn coalesce_runs(blocks: &[UpdateBlock]) -> Vec<(usize, Vec<u8>)> {
    let mut runs: Vec<(usize, Vec<u8>)> = Vec::new();
    for block in blocks {
        match runs.last_mut() {
            Some((start, data)) if *start + data.len() == block.offset => {
                data.extend_from_slice(&block.data)
            }
            _ => runs.push((block.offset, block.data.clone())),
        }
    }
    runs
}

fn check_max_packet(max_packet: usize, min: usize) -> Result<(), CodecError> {
    if max_packet < min {
        return Err(CodecError::PacketTooSmall { max_packet, min });
    }
    if max_packet > MAX_FRAME {
        return Err(CodecError::PacketTooLarge { max_packet });
    }
    Ok(())
}

/// Packs one segment's delta into segment-scoped packets.
///
/// Every packet carries blocks for exactly this segment. The defer flag is
/// set on all packets except the last, telling the device to keep buffering;
/// the commit happens when the defer-clear packet arrives. Sequence numbers
/// start at zero; the session planner renumbers across segments.
pub fn packetize_segment_ea(
    delta: &SegmentDelta,
    max_packet: usize,
) -> Result<Vec<UpdatePacket>, CodecError> {
    check_max_packet(max_packet, MIN_EA_PACKET)?;
    if delta.blocks.is_empty() {
        return Err(CodecError::EmptyDelta);
    }
    let max_payload = max_packet - FRAME_OVERHEAD;
    let mut payloads: Vec<Vec<u8>> = vec![Vec::new()];
    for (offset, data) in coalesce_runs(&delta.blocks) {
        let mut pos = 0usize;
        while pos < data.len() {
            let space = max_payload - payloads.last().unwrap().len();
            if space < EA_BLOCK_OVERHEAD + 1 {
                payloads.push(Vec::new());
                continue;
            }
            let take = (data.len() - pos).min(space - EA_BLOCK_OVERHEAD).min(MAX_BLOCK_LEN);
            let cur = payloads.last_mut().unwrap();
            cur.extend_from_slice(&((offset + pos) as u16).to_le_bytes());
            cur.push(take as u8);
            cur.extend_from_slice(&data[pos..pos + take]);
            pos += take;
        }
    }
    let n = payloads.len();
    let segment = u16::try_from(delta.segment_index).map_err(|_| CodecError::OffsetOverflow {
        offset: delta.segment_index,
    })?;
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| {
            UpdatePacket::new(
                MsgType::EaData,
                PacketFlags {
                    defer: i + 1 < n,
                    final_update: false,
                },
                segment,
                i as u16,
                payload,
            )
        })
        .collect()
}

/// Packs a whole delta list into stream packets with absolute addressing.
///
/// Blocks are re-addressed as 24-bit flash offsets and greedily packed,
/// splitting at packet boundaries and freely crossing segment boundaries.
pub fn packetize_stream_in(
    deltas: &[SegmentDelta],
    segment_size: usize,
    max_packet: usize,
) -> Result<Vec<UpdatePacket>, CodecError> {
    check_max_packet(max_packet, FRAME_OVERHEAD + IN_BLOCK_OVERHEAD + 1)?;
    let max_payload = max_packet - FRAME_OVERHEAD;

    // Absolute runs, coalescing across segment boundaries.
    let mut runs: Vec<(usize, Vec<u8>)> = Vec::new();
    for delta in deltas {
        let base = delta.segment_index * segment_size;
        for block in &delta.blocks {
            let abs = base + block.offset;
            match runs.last_mut() {
                Some((start, data)) if *start + data.len() == abs => {
                    data.extend_from_slice(&block.data)
                }
                _ => runs.push((abs, block.data.clone())),
            }
        }
    }

    let mut payloads: Vec<Vec<u8>> = vec![Vec::new()];
    for (offset, data) in runs {
        let mut pos = 0usize;
        while pos < data.len() {
            let space = max_payload - payloads.last().unwrap().len();
            if space < IN_BLOCK_OVERHEAD + 1 {
                payloads.push(Vec::new());
                continue;
            }
            let abs = offset + pos;
            if abs >= 1 << 24 {
                return Err(CodecError::OffsetOverflow { offset: abs });
            }
            let take = (data.len() - pos).min(space - IN_BLOCK_OVERHEAD).min(MAX_BLOCK_LEN);
            let cur = payloads.last_mut().unwrap();
            cur.extend_from_slice(&(abs as u32).to_le_bytes()[..3]);
            cur.push(take as u8);
            cur.extend_from_slice(&data[pos..pos + take]);
            pos += take;
        }
    }
    if payloads.last().is_some_and(Vec::is_empty) && payloads.len() == 1 {
        // No dirty segments at all: no data packets.
        return Ok(Vec::new());
    }
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| {
            UpdatePacket::new(MsgType::InData, PacketFlags::default(), 0, i as u16, payload)
        })
        .collect()
}

/// Chops the full new image into raw sequential chunks. Change-oblivious by
/// definition: unchanged bytes ship too.
pub fn packetize_image_lw(
    new_image: &[u8],
    max_packet: usize,
) -> Result<Vec<UpdatePacket>, CodecError> {
    check_max_packet(max_packet, FRAME_OVERHEAD + 1)?;
    if new_image.is_empty() {
        return Err(CodecError::EmptyImage);
    }
    let chunk = max_packet - FRAME_OVERHEAD;
    new_image
        .chunks(chunk)
        .enumerate()
        .map(|(i, c)| {
            UpdatePacket::new(
                MsgType::LwData,
                PacketFlags::default(),
                0,
                i as u16,
                c.to_vec(),
            )
        })
        .collect()
}

/// Decodes an `EA_DATA` payload back into segment-relative blocks.
pub fn decode_ea_blocks(payload: &[u8]) -> Result<Vec<UpdateBlock>, CodecError> {
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < payload.len() {
        if payload.len() - pos < EA_BLOCK_OVERHEAD {
            return Err(CodecError::TruncatedBlock);
        }
        let offset = u16::from_le_bytes([payload[pos], payload[pos + 1]]) as usize;
        let len = payload[pos + 2] as usize;
        pos += EA_BLOCK_OVERHEAD;
        if len == 0 || payload.len() - pos < len {
            return Err(CodecError::TruncatedBlock);
        }
        blocks.push(UpdateBlock {
            offset,
            data: payload[pos..pos + len].to_vec(),
        });
        pos += len;
    }
    Ok(blocks)
}

/// Decodes an `IN_DATA` payload into absolutely addressed spans.
pub fn decode_in_blocks(payload: &[u8]) -> Result<Vec<(usize, Vec<u8>)>, CodecError> {
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < payload.len() {
        if payload.len() - pos < IN_BLOCK_OVERHEAD {
            return Err(CodecError::TruncatedBlock);
        }
        let abs =
            u32::from_le_bytes([payload[pos], payload[pos + 1], payload[pos + 2], 0]) as usize;
        let len = payload[pos + 3] as usize;
        pos += IN_BLOCK_OVERHEAD;
        if len == 0 || payload.len() - pos < len {
            return Err(CodecError::TruncatedBlock);
        }
        blocks.push((abs, payload[pos..pos + len].to_vec()));
        pos += len;
    }
    Ok(blocks)
}

/// Appends a frame to a capture buffer as `[len: u16 LE][frame]`.
pub fn capture_append(capture: &mut Vec<u8>, frame: &[u8]) {
    capture.extend_from_slice(&(frame.len() as u16).to_le_bytes());
    capture.extend_from_slice(frame);
}

/// Splits a capture buffer back into frames.
pub fn capture_frames(capture: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let mut frames = Vec::new();
    let mut pos = 0usize;
    while pos < capture.len() {
        if capture.len() - pos < 2 {
            return Err(CodecError::MalformedHeader {
                reason: "truncated capture length prefix",
            });
        }
        let len = u16::from_le_bytes([capture[pos], capture[pos + 1]]) as usize;
        pos += 2;
        if capture.len() - pos < len {
            return Err(CodecError::MalformedHeader {
                reason: "truncated capture frame",
            });
        }
        frames.push(capture[pos..pos + len].to_vec());
        pos += len;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta::{compute_deltas, DiffConfig};
    use proptest::prelude::*;

    #[test]
    fn crc_check_value() {
        // Standard CRC-16/CCITT-FALSE check value.
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
        assert_eq!(crc16_ccitt_false(b""), 0xFFFF);
    }

    #[test]
    fn round_trip_preserves_all_fields() {
        let pkt = UpdatePacket::new(
            MsgType::EaData,
            PacketFlags {
                defer: true,
                final_update: false,
            },
            20,
            7,
            vec![1, 2, 3, 4, 5],
        )
        .unwrap();
        let frame = encode(&pkt);
        assert_eq!(frame.len(), FRAME_OVERHEAD + 5);
        assert_eq!(decode(&frame).unwrap(), pkt);
    }

    #[test]
    fn every_single_bit_flip_is_a_crc_mismatch() {
        let pkt = UpdatePacket::new(
            MsgType::EaData,
            PacketFlags {
                defer: true,
                final_update: false,
            },
            3,
            12,
            (0..40u8).collect(),
        )
        .unwrap();
        let frame = encode(&pkt);
        for byte in 0..frame.len() {
            for bit in 0..8 {
                let mut corrupted = frame.clone();
                corrupted[byte] ^= 1 << bit;
                assert!(
                    matches!(decode(&corrupted), Err(CodecError::CrcMismatch { .. })),
                    "flip of byte {byte} bit {bit} not rejected as CRC mismatch"
                );
            }
        }
    }

    #[test]
    fn truncated_frame_is_malformed() {
        assert_eq!(
            decode(&[0u8; 9]),
            Err(CodecError::MalformedHeader {
                reason: "frame below minimum length"
            })
        );
    }

    #[test]
    fn length_mismatch_is_distinct() {
        // Craft a frame whose declared payload length disagrees with the
        // actual frame size but whose CRC is valid.
        let mut body = vec![PROTOCOL_VERSION, 0, 0, 0, 0, 0, 0, 9];
        body.extend_from_slice(&[0u8; 4]);
        let crc = crc16_ccitt_false(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(
            decode(&body),
            Err(CodecError::LengthMismatch {
                declared: 9,
                actual: 4
            })
        );
    }

    #[test]
    fn unknown_msg_type_is_malformed() {
        let mut body = vec![PROTOCOL_VERSION, 99, 0, 0, 0, 0, 0, 0];
        let crc = crc16_ccitt_false(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(
            decode(&body),
            Err(CodecError::MalformedHeader {
                reason: "unknown message type"
            })
        );
    }

    fn full_segment_delta() -> SegmentDelta {
        let old = vec![0u8; 512 * 21];
        let mut new = old.clone();
        for b in &mut new[512 * 20..512 * 21] {
            *b = 0x5A;
        }
        compute_deltas(&old, &new, &DiffConfig::default())
            .unwrap()
            .pop()
            .unwrap()
    }

    #[test]
    fn fully_changed_segment_needs_three_packets() {
        // Usable data per 261-byte packet: 261 - 8 - 2 - 3 = 248, so a whole
        // 512-byte segment splits 248 + 248 + 16 across three packets.
        let delta = full_segment_delta();
        assert_eq!(delta.segment_index, 20);
        let packets = packetize_segment_ea(&delta, MAX_FRAME).unwrap();
        assert_eq!(packets.len(), 3);
        let defers: Vec<bool> = packets.iter().map(|p| p.header.flags.defer).collect();
        assert_eq!(defers, vec![true, true, false]);
        let data_bytes: Vec<usize> = packets
            .iter()
            .map(|p| {
                decode_ea_blocks(&p.payload)
                    .unwrap()
                    .iter()
                    .map(|b| b.data.len())
                    .sum()
            })
            .collect();
        assert_eq!(data_bytes, vec![248, 248, 16]);
        assert!(packets.iter().all(|p| p.header.segment_index == 20));
        assert_eq!(packets[0].encoded_len(), 261);
    }

    #[test]
    fn single_small_block_never_defers() {
        let delta = SegmentDelta {
            segment_index: 4,
            blocks: vec![UpdateBlock::new(100, vec![7u8; 10]).unwrap()],
            grows_image: false,
        };
        let packets = packetize_segment_ea(&delta, MAX_FRAME).unwrap();
        assert_eq!(packets.len(), 1);
        assert!(!packets[0].header.flags.defer);
    }

    #[test]
    fn ea_packetizer_validates_inputs() {
        let delta = SegmentDelta {
            segment_index: 0,
            blocks: vec![],
            grows_image: false,
        };
        assert_eq!(
            packetize_segment_ea(&delta, MAX_FRAME),
            Err(CodecError::EmptyDelta)
        );
        let delta = SegmentDelta {
            segment_index: 0,
            blocks: vec![UpdateBlock::new(0, vec![1]).unwrap()],
            grows_image: false,
        };
        assert!(matches!(
            packetize_segment_ea(&delta, 13),
            Err(CodecError::PacketTooSmall { .. })
        ));
        assert!(matches!(
            packetize_segment_ea(&delta, 300),
            Err(CodecError::PacketTooLarge { .. })
        ));
    }

    #[test]
    fn in_packing_crosses_segments() {
        let deltas = vec![
            SegmentDelta {
                segment_index: 3,
                blocks: vec![UpdateBlock::new(0, vec![1u8; 200]).unwrap()],
                grows_image: false,
            },
            SegmentDelta {
                segment_index: 4,
                blocks: vec![UpdateBlock::new(50, vec![2u8; 200]).unwrap()],
                grows_image: false,
            },
        ];
        // 200 + 4 + 200 + 4 = 408 > 251 usable: two packets.
        let packets = packetize_stream_in(&deltas, 512, MAX_FRAME).unwrap();
        assert_eq!(packets.len(), 2);
        // First packet is filled to the brim by splitting the second run.
        assert_eq!(packets[0].payload.len(), MAX_PAYLOAD);
        let single = packetize_stream_in(&deltas[..1], 512, MAX_FRAME).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn in_blocks_are_absolutely_addressed() {
        let deltas = vec![SegmentDelta {
            segment_index: 2,
            blocks: vec![UpdateBlock::new(10, vec![9, 9]).unwrap()],
            grows_image: false,
        }];
        let packets = packetize_stream_in(&deltas, 512, MAX_FRAME).unwrap();
        let blocks = decode_in_blocks(&packets[0].payload).unwrap();
        assert_eq!(blocks, vec![(2 * 512 + 10, vec![9, 9])]);
    }

    #[test]
    fn lw_chunking_is_ceiling_division() {
        let image = vec![0xABu8; 3400];
        let packets = packetize_image_lw(&image, MAX_FRAME).unwrap();
        assert_eq!(packets.len(), 14); // 13 * 251 + 137
        assert_eq!(packets[13].payload.len(), 137);
        let exact = packetize_image_lw(&[0u8; 251], MAX_FRAME).unwrap();
        assert_eq!(exact.len(), 1);
        // Reassemble.
        let mut rebuilt = Vec::new();
        for p in &packets {
            rebuilt.extend_from_slice(&p.payload);
        }
        assert_eq!(rebuilt, image);
    }

    #[test]
    fn capture_round_trip() {
        let mut cap = Vec::new();
        let f1 = encode(&UpdatePacket::control(MsgType::Hello, 0));
        let f2 = encode(&UpdatePacket::control(MsgType::Done, 3));
        capture_append(&mut cap, &f1);
        capture_append(&mut cap, &f2);
        assert_eq!(capture_frames(&cap).unwrap(), vec![f1, f2]);
        assert!(capture_frames(&cap[..cap.len() - 1]).is_err());
    }

    fn arb_packet() -> impl Strategy<Value = UpdatePacket> {
        (
            0u8..8,
            any::<bool>(),
            any::<bool>(),
            any::<u16>(),
            any::<u16>(),
            proptest::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD),
        )
            .prop_map(|(ty, defer, fin, seg, seq, payload)| {
                UpdatePacket::new(
                    MsgType::from_byte(ty).unwrap(),
                    PacketFlags {
                        defer,
                        final_update: fin,
                    },
                    seg,
                    seq,
                    payload,
                )
                .unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn decode_encode_identity(pkt in arb_packet()) {
            let frame = encode(&pkt);
            prop_assert!(frame.len() <= MAX_FRAME);
            prop_assert_eq!(frame.len(), FRAME_OVERHEAD + pkt.payload.len());
            prop_assert_eq!(decode(&frame).unwrap(), pkt);
        }

        #[test]
        fn encode_decode_identity_on_valid_frames(pkt in arb_packet()) {
            let frame = encode(&pkt);
            let reencoded = encode(&decode(&frame).unwrap());
            prop_assert_eq!(reencoded, frame);
        }

        #[test]
        fn ea_partition_property(image in proptest::collection::vec(any::<u8>(), 512..4096), seed in any::<u64>()) {
            // Random edits, then every packet must reference exactly one
            // segment and defer flags must form the pattern 1..1,0.
            let mut new = image.clone();
            let mut s = seed | 1;
            for _ in 0..(seed % 200) {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                let pos = (s as usize) % new.len();
                new[pos] ^= 0x55;
            }
            let cfg = DiffConfig { segment_size: 512, merge_gap: 4, flash_capacity: 1 << 20 };
            for delta in compute_deltas(&image, &new, &cfg).unwrap() {
                let packets = packetize_segment_ea(&delta, MAX_FRAME).unwrap();
                let n = packets.len();
                for (i, p) in packets.iter().enumerate() {
                    prop_assert_eq!(p.header.segment_index as usize, delta.segment_index);
                    prop_assert_eq!(p.header.flags.defer, i + 1 < n);
                    // Blocks stay within the segment.
                    for b in decode_ea_blocks(&p.payload).unwrap() {
                        prop_assert!(b.end() <= 512);
                    }
                }
                // Re-chunking preserves the delta's bytes exactly.
                let mut total = 0usize;
                for p in &packets {
                    total += decode_ea_blocks(&p.payload).unwrap().iter().map(|b| b.data.len()).sum::<usize>();
                }
                prop_assert_eq!(total, delta.data_bytes());
            }
        }
    }
}
