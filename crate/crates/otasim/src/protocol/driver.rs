//! The exchange driver: runs a distributor session against a device state,
//! pushing every chargeable action through an [`ActionSink`].
//!
//! The same loop serves two executors. The pure sink has infinite energy and
//! simply accumulates cost-model time — that is the lossless-channel run used
//! for size/energy accounting. The intermittent sink in [`crate::energy::sim`]
//! meters every action against a capacitor fed by a harvest trace and may
//! fail an action with a power failure, which lands here as the recovery
//! path: reboot the device, let it say hello, and let the session rewind.

use serde::Serialize;
use thiserror::Error;

use crate::energy::cost::{op_cost, CostModel, OpKind};
use crate::energy::{EnergyCategory, EnergyLedger};
use crate::packet::encode;
use crate::protocol::device::{DeviceError, DeviceEvent, DeviceState};
use crate::protocol::distributor::{DistributorSession, SessionError, SessionOutput};

/// Which endpoint an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Distributor,
    Device,
}

/// An atomic, individually charged operation.
///
/// Radio and flash actions are non-interruptible: under the intermittent
/// executor each either completes (cost booked to its category) or fails
/// (full cost booked as wasted). `Reconstruct` and `SramStore` are free
/// bookkeeping actions that only show up in transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Inbound frame at the device radio.
    RxFrame { bytes: usize },
    /// Outbound frame from the device radio.
    TxFrame { bytes: usize },
    FlashRead { segment: usize },
    Reconstruct { segment: usize },
    FlashErase { segment: usize },
    FlashWrite { segment: usize },
    LightFlashWrite { segment: usize },
    Reinforce { segment: usize },
    SramStore { bytes: usize },
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::RxFrame { .. } => "rx_frame",
            Action::TxFrame { .. } => "tx_frame",
            Action::FlashRead { .. } => "flash_read",
            Action::Reconstruct { .. } => "reconstruct",
            Action::FlashErase { .. } => "flash_erase",
            Action::FlashWrite { .. } => "flash_write",
            Action::LightFlashWrite { .. } => "light_flash_write",
            Action::Reinforce { .. } => "reinforce",
            Action::SramStore { .. } => "sram_store",
        }
    }

    pub fn segment(self) -> Option<usize> {
        match self {
            Action::FlashRead { segment }
            | Action::Reconstruct { segment }
            | Action::FlashErase { segment }
            | Action::FlashWrite { segment }
            | Action::LightFlashWrite { segment }
            | Action::Reinforce { segment } => Some(segment),
            _ => None,
        }
    }

    pub fn bytes(self) -> Option<usize> {
        match self {
            Action::RxFrame { bytes } | Action::TxFrame { bytes } | Action::SramStore { bytes } => {
                Some(bytes)
            }
            _ => None,
        }
    }

    /// Cost-model mapping; `None` for free bookkeeping actions.
    pub fn op_kind(self) -> Option<(OpKind, EnergyCategory)> {
        match self {
            Action::RxFrame { bytes } | Action::TxFrame { bytes } => {
                Some((OpKind::Tx { bytes }, EnergyCategory::Communication))
            }
            Action::FlashRead { .. } => {
                Some((OpKind::ReadReconstruct, EnergyCategory::FlashRead))
            }
            Action::FlashErase { .. } => Some((OpKind::Erase, EnergyCategory::FlashErase)),
            Action::FlashWrite { .. } => Some((OpKind::Write, EnergyCategory::FlashWrite)),
            Action::LightFlashWrite { .. } => {
                Some((OpKind::LightWrite, EnergyCategory::LightFlashWrite))
            }
            Action::Reinforce { .. } => Some((OpKind::Reinforce, EnergyCategory::Reinforcement)),
            Action::Reconstruct { .. } | Action::SramStore { .. } => None,
        }
    }
}

/// Why a sink refused to complete an action.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SinkFault {
    /// The device browned out (or a stochastic failure was injected); all
    /// volatile state is gone and the device must reboot.
    #[error("power failure")]
    PowerFailure,
    /// The harvest can never deliver the required energy; the simulation hit
    /// its time cap while waiting.
    #[error("update cannot make progress (simulated {simulated_s} s)")]
    NonTerminating { simulated_s: f64 },
}

/// One transcript line: an action or a lifecycle event, with its charge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptEvent {
    pub time_s: f64,
    pub actor: Actor,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes: Option<usize>,
    pub energy_uj: f64,
    pub duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<EnergyCategory>,
}

/// Line-oriented JSON export: one event per line.
pub fn transcript_to_jsonl(events: &[TranscriptEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("transcript events serialize"));
        out.push('\n');
    }
    out
}

/// Counts of completed (non-wasted) actions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActionCounters {
    pub erases: u64,
    pub writes: u64,
    pub light_writes: u64,
    pub reinforces: u64,
    pub reads: u64,
    pub rx_frames: u64,
    pub tx_frames: u64,
    pub comm_bytes: u64,
}

impl ActionCounters {
    fn record(&mut self, action: Action) {
        match action {
            Action::RxFrame { bytes } => {
                self.rx_frames += 1;
                self.comm_bytes += bytes as u64;
            }
            Action::TxFrame { bytes } => {
                self.tx_frames += 1;
                self.comm_bytes += bytes as u64;
            }
            Action::FlashRead { .. } => self.reads += 1,
            Action::FlashErase { .. } => self.erases += 1,
            Action::FlashWrite { .. } => self.writes += 1,
            Action::LightFlashWrite { .. } => self.light_writes += 1,
            Action::Reinforce { .. } => self.reinforces += 1,
            Action::Reconstruct { .. } | Action::SramStore { .. } => {}
        }
    }
}

/// Shared accounting state for sinks: clock, ledger, transcript, counters.
#[derive(Debug, Clone)]
pub struct SinkCore {
    pub cost: CostModel,
    pub time_s: f64,
    pub ledger: EnergyLedger,
    pub transcript: Vec<TranscriptEvent>,
    pub counters: ActionCounters,
}

impl SinkCore {
    pub fn new(cost: CostModel) -> Self {
        Self {
            cost,
            time_s: 0.0,
            ledger: EnergyLedger::default(),
            transcript: Vec::new(),
            counters: ActionCounters::default(),
        }
    }

    /// Cost of an action under this sink's model; free actions are (0, 0).
    pub fn action_cost(&self, action: Action) -> (f64, f64, Option<EnergyCategory>) {
        match action.op_kind() {
            Some((kind, category)) => {
                let (e, d) = op_cost(kind, &self.cost).expect("protocol actions have positive size");
                (e, d, Some(category))
            }
            None => (0.0, 0.0, None),
        }
    }

    /// Books a completed or wasted action into the ledger and transcript.
    /// Does not advance the clock; sinks own time.
    pub fn book(&mut self, actor: Actor, action: Action, wasted: bool) {
        let (e, d, category) = self.action_cost(action);
        let booked_category = if wasted {
            Some(EnergyCategory::Wasted)
        } else {
            category
        };
        if let Some(cat) = booked_category {
            if e != 0.0 || d != 0.0 {
                self.ledger.charge(cat, e, d);
            }
        }
        if !wasted {
            self.counters.record(action);
        }
        self.transcript.push(TranscriptEvent {
            time_s: self.time_s,
            actor,
            event: action.name().to_string(),
            segment: action.segment(),
            bytes: action.bytes(),
            energy_uj: e,
            duration_s: d,
            category: booked_category,
        });
    }

    pub fn note(&mut self, actor: Actor, event: &'static str) {
        self.transcript.push(TranscriptEvent {
            time_s: self.time_s,
            actor,
            event: event.to_string(),
            segment: None,
            bytes: None,
            energy_uj: 0.0,
            duration_s: 0.0,
            category: None,
        });
    }
}

/// Where protocol actions get charged. Implementations decide whether energy
/// is infinite (pure runs) or metered from a capacitor (intermittent runs).
pub trait ActionSink {
    fn now(&self) -> f64;
    /// Charges one action. A `PowerFailure` means the device lost its
    /// volatile state; the driver runs recovery.
    fn perform(&mut self, actor: Actor, action: Action) -> Result<(), SinkFault>;
    /// Called once before the exchange starts; brings the device to a
    /// runnable state (charging first if it starts below the turn-on
    /// threshold).
    fn boot(&mut self) -> Result<(), SinkFault>;
    /// Called after a power failure; the device is off until re-charged.
    fn recover(&mut self) -> Result<(), SinkFault>;
    fn note(&mut self, actor: Actor, event: &'static str);
}

/// Infinite-energy sink for lossless-channel runs: time is the sum of action
/// durations, nothing ever fails.
#[derive(Debug, Clone)]
pub struct PureSink {
    pub core: SinkCore,
}

impl PureSink {
    pub fn new(cost: CostModel) -> Self {
        Self {
            core: SinkCore::new(cost),
        }
    }
}

impl ActionSink for PureSink {
    fn now(&self) -> f64 {
        self.core.time_s
    }

    fn perform(&mut self, actor: Actor, action: Action) -> Result<(), SinkFault> {
        let (_, d, _) = self.core.action_cost(action);
        self.core.book(actor, action, false);
        self.core.time_s += d;
        Ok(())
    }

    fn boot(&mut self) -> Result<(), SinkFault> {
        Ok(())
    }

    fn recover(&mut self) -> Result<(), SinkFault> {
        Ok(())
    }

    fn note(&mut self, actor: Actor, event: &'static str) {
        self.core.note(actor, event);
    }
}

/// Tally of a completed exchange.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DriveStats {
    /// Data packets handed to the channel, retransmissions included.
    pub data_packets_sent: u64,
    /// Data packets sent more than once because of power failures.
    pub retransmitted_packets: u64,
    /// Largest number of packets any single failure forced back onto the
    /// wire.
    pub max_retransmit_burst: u64,
    pub power_failures: u64,
}

#[derive(Debug, Error)]
pub enum DriveError {
    #[error("update cannot make progress (simulated {simulated_s} s)")]
    NonTerminating { simulated_s: f64 },
    #[error("device error: {0}")]
    Device(DeviceError),
    #[error("session error: {0}")]
    Session(#[from] SessionError),
}

/// Runs the full stop-and-wait exchange to completion.
pub fn drive(
    session: &mut DistributorSession,
    device: &mut DeviceState,
    sink: &mut dyn ActionSink,
) -> Result<DriveStats, DriveError> {
    let mut stats = DriveStats::default();
    sink.boot().map_err(fault_to_drive)?;
    let mut outbound = session.start();
    loop {
        let frame = encode(&outbound);
        match device.step(DeviceEvent::Frame(&frame), sink) {
            Ok(Some(reply)) => match session.handle(&reply)? {
                SessionOutput::Send {
                    packet,
                    retransmission,
                } => {
                    if packet.header.msg_type.is_data() {
                        stats.data_packets_sent += 1;
                        if retransmission {
                            stats.retransmitted_packets += 1;
                        }
                    }
                    outbound = packet;
                }
            },
            Ok(None) => break,
            Err(DeviceError::Fault(SinkFault::PowerFailure)) => {
                stats.power_failures += 1;
                outbound = recovery(session, device, sink, &mut stats)?;
            }
            Err(DeviceError::Fault(SinkFault::NonTerminating { simulated_s })) => {
                return Err(DriveError::NonTerminating { simulated_s })
            }
            Err(e) => return Err(DriveError::Device(e)),
        }
    }
    sink.note(Actor::Distributor, "session_complete");
    Ok(stats)
}

/// Reboot-and-rewind loop after a power failure. Loops because the hello
/// itself can fail under the injector.
fn recovery(
    session: &mut DistributorSession,
    device: &mut DeviceState,
    sink: &mut dyn ActionSink,
    stats: &mut DriveStats,
) -> Result<crate::packet::UpdatePacket, DriveError> {
    loop {
        sink.note(Actor::Device, "power_failure");
        sink.recover().map_err(fault_to_drive)?;
        sink.note(Actor::Device, "reboot");
        let hello = match device.step(DeviceEvent::PowerOn, sink) {
            Ok(Some(hello)) => hello,
            Ok(None) => unreachable!("power-on always produces a hello"),
            Err(DeviceError::Fault(SinkFault::PowerFailure)) => {
                stats.power_failures += 1;
                continue;
            }
            Err(DeviceError::Fault(fault)) => return Err(fault_to_drive(fault)),
            Err(e) => return Err(DriveError::Device(e)),
        };
        let out = session.handle(&hello)?;
        if let Some(burst) = session.take_resume_burst() {
            stats.max_retransmit_burst = stats.max_retransmit_burst.max(burst);
        }
        sink.note(Actor::Distributor, "resume");
        let SessionOutput::Send { packet, .. } = out;
        return Ok(packet);
    }
}

fn fault_to_drive(fault: SinkFault) -> DriveError {
    match fault {
        SinkFault::NonTerminating { simulated_s } => DriveError::NonTerminating { simulated_s },
        SinkFault::PowerFailure => DriveError::Device(DeviceError::Fault(SinkFault::PowerFailure)),
    }
}
