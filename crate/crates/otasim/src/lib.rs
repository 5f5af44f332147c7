//! Segment-aware incremental OTA updates for flash-based batteryless IoT
//! devices, plus the machinery to measure them.
//!
//! The crate models the full pipeline of an over-the-air firmware update on a
//! device that runs off harvested energy buffered in a capacitor:
//!
//! * [`flash`] — a behavioral model of segmented NOR flash (erase sets bits,
//!   writes only clear them) and the device's SRAM budget.
//! * [`delta`] — per-segment byte deltas between two firmware images, and the
//!   patch path that reconstructs segments from them.
//! * [`packet`] — the bit-exact wire format: framing, CRC-16, and the three
//!   packetizers (segment-scoped `EA`, stream-packed `IN`, whole-image `LW`).
//! * [`protocol`] — distributor- and device-side state machines, deferred
//!   segment commits, and checkpoint-free resumption after power failures.
//! * [`energy`] — the per-operation cost model, capacitor state, harvested
//!   power traces, and the discrete-event intermittent executor.
//! * [`bench`](mod@bench) — synthetic firmware benchmarks and the suite
//!   runner that produces comparison tables and reports.
//!
//! The `otasim` binary exposes the same functionality as a CLI (`diff`,
//! `encode`, `simulate`, `bench`, `trace-gen`, `pktdump`). The mdBook guide
//! under `book/` walks through each concept with runnable snippets; its code
//! blocks compile and run as doctests of this crate.

pub mod bench;
pub mod delta;
pub mod energy;
pub mod flash;
pub mod metrics;
pub mod packet;
pub mod protocol;

mod book;
