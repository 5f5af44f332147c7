//! Distributor-side session: owns the packet plan, streams it stop-and-wait,
//! and tracks progress well enough to resume after a device power failure
//! without any device-side checkpoint.
//!
//! Progress is tracked per commit unit: a flash segment for EA, a packet for
//! the IN and LW baselines. A unit counts as done when the ack for its final
//! (defer-clear) packet arrives. On a hello after a power failure the cursor
//! rewinds to the first packet of the first unfinished unit — except for LW,
//! where the staged image died with the device's SRAM, so unless every chunk
//! was already acked (meaning the bulk commit finished) the transfer restarts
//! from the first chunk.

use thiserror::Error;

use crate::packet::{MsgType, PacketFlags, UpdatePacket};
use crate::protocol::plan::{build_plan, PacketPlan, PlanError};
use crate::protocol::{Approach, UpdateConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("hello from unknown device {device_id}")]
    UnknownSession { device_id: u16 },
    #[error("message type {msg:?} invalid for the session state")]
    UnexpectedMessage { msg: MsgType },
    #[error("ack for sequence {got} does not match the outstanding packet")]
    UnexpectedAck { got: u16 },
    #[error("malformed control payload")]
    MalformedControl,
}

/// What the distributor wants transmitted next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutput {
    Send {
        packet: UpdatePacket,
        /// True when this data packet was already on the wire before a
        /// failure rewound the cursor.
        retransmission: bool,
    },
}

#[derive(Debug, Clone)]
pub struct DistributorSession {
    device_id: u16,
    approach: Approach,
    plan: PacketPlan,
    /// Index of the next packet to send.
    cursor: usize,
    /// Furthest the cursor has ever been; everything below has been sent at
    /// least once.
    high_water: usize,
    /// Per-unit completion; monotone, acks never un-complete a unit.
    acked_units: Vec<bool>,
    units_acked: usize,
    unit_of_packet: Vec<usize>,
    resume_burst: Option<u64>,
    new_image_len: u32,
}

impl DistributorSession {
    /// Plans the update and opens a session for `device_id`.
    pub fn new(
        device_id: u16,
        approach: Approach,
        old: &[u8],
        new: &[u8],
        cfg: &UpdateConfig,
    ) -> Result<Self, PlanError> {
        let plan = build_plan(approach, old, new, cfg)?;
        let mut unit_of_packet = vec![0usize; plan.packets.len()];
        for (unit, &start) in plan.unit_starts.iter().enumerate() {
            let end = plan
                .unit_starts
                .get(unit + 1)
                .copied()
                .unwrap_or(plan.packets.len());
            for slot in &mut unit_of_packet[start..end] {
                *slot = unit;
            }
        }
        Ok(Self {
            device_id,
            approach,
            acked_units: vec![false; plan.unit_starts.len()],
            units_acked: 0,
            unit_of_packet,
            new_image_len: new.len() as u32,
            plan,
            cursor: 0,
            high_water: 0,
            resume_burst: None,
        })
    }

    pub fn plan(&self) -> &PacketPlan {
        &self.plan
    }

    pub fn approach(&self) -> Approach {
        self.approach
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Fully committed units (segments for EA, packets for IN/LW).
    pub fn units_acked(&self) -> usize {
        self.units_acked
    }

    pub fn is_complete(&self) -> bool {
        self.units_acked == self.acked_units.len()
    }

    /// Opening notification, also re-sent when a rebooted device says hello.
    pub fn start(&mut self) -> UpdatePacket {
        let mut payload = Vec::with_capacity(9);
        payload.extend_from_slice(&self.device_id.to_le_bytes());
        payload.push(self.approach.to_byte());
        payload.extend_from_slice(&(self.plan.packets.len() as u16).to_le_bytes());
        payload.extend_from_slice(&self.new_image_len.to_le_bytes());
        UpdatePacket::new(MsgType::Notify, PacketFlags::default(), 0, 0, payload)
            .expect("notify payload fits")
    }

    /// Feeds one device message through the session state machine.
    pub fn handle(&mut self, pkt: &UpdatePacket) -> Result<SessionOutput, SessionError> {
        match pkt.header.msg_type {
            MsgType::RequestNext => Ok(self.emit_next()),
            MsgType::Ack => {
                let seq = pkt.header.packet_seq as usize;
                if self.cursor == 0 || seq != self.cursor - 1 {
                    return Err(SessionError::UnexpectedAck {
                        got: pkt.header.packet_seq,
                    });
                }
                if !self.plan.packets[seq].header.flags.defer {
                    let unit = self.unit_of_packet[seq];
                    if !self.acked_units[unit] {
                        self.acked_units[unit] = true;
                        self.units_acked += 1;
                    }
                }
                Ok(self.emit_next())
            }
            MsgType::Hello => {
                if pkt.payload.len() != 2 {
                    return Err(SessionError::MalformedControl);
                }
                let device_id = u16::from_le_bytes([pkt.payload[0], pkt.payload[1]]);
                if device_id != self.device_id {
                    return Err(SessionError::UnknownSession { device_id });
                }
                self.resume();
                Ok(SessionOutput::Send {
                    packet: self.start(),
                    retransmission: false,
                })
            }
            msg => Err(SessionError::UnexpectedMessage { msg }),
        }
    }

    /// Rewinds the cursor after a power failure and returns the new position.
    pub fn resume(&mut self) -> usize {
        let target = match self.approach {
            // The staged image is lost with SRAM; only a fully acked
            // transfer (bulk commit done) survives a failure.
            Approach::Lw => {
                if self.is_complete() {
                    self.plan.packets.len()
                } else {
                    0
                }
            }
            Approach::Ea | Approach::In => match self.acked_units.iter().position(|&a| !a) {
                Some(unit) => self.plan.unit_starts[unit],
                None => self.plan.packets.len(),
            },
        };
        self.resume_burst = Some((self.high_water - target) as u64);
        self.cursor = target;
        target
    }

    /// How many already-sent packets the last resume put back on the wire.
    pub fn take_resume_burst(&mut self) -> Option<u64> {
        self.resume_burst.take()
    }

    /// Full re-plan for a hello that matches no live session: progress is
    /// discarded and the deterministic plan streams from the top.
    pub fn restart(&mut self) {
        self.cursor = 0;
        self.high_water = 0;
        self.acked_units.fill(false);
        self.units_acked = 0;
        self.resume_burst = None;
    }

    fn emit_next(&mut self) -> SessionOutput {
        if self.is_complete() {
            return SessionOutput::Send {
                packet: UpdatePacket::control(MsgType::Done, 0),
                retransmission: false,
            };
        }
        let packet = self.plan.packets[self.cursor].clone();
        let retransmission = self.cursor < self.high_water;
        self.cursor += 1;
        self.high_water = self.high_water.max(self.cursor);
        SessionOutput::Send {
            packet,
            retransmission,
        }
    }
}
