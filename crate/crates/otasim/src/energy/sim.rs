//! Discrete-event intermittent executor.
//!
//! Drives the same protocol exchange as the pure runner, but every chargeable
//! action is admitted against the capacitor first: the device only starts a
//! radio or flash operation when the stored usable energy covers its full
//! cost (plus a configurable margin), because these operations cannot be
//! paused and resumed — energy spent on an interrupted one is simply lost.
//!
//! When admission fails the device parks in low-power mode, draining the
//! low-power floor while the harvest recharges the capacitor. If the harvest
//! cannot even cover that floor the capacitor drains to the brown-out
//! threshold: a power failure. The device then sits dark until the capacitor
//! recovers past the turn-on threshold, reboots, and the distributor rewinds
//! via the checkpoint-free resumption path. An optional stochastic injector
//! fails actions mid-flight to exercise the same machinery; the failed
//! action's full cost is booked as wasted energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::capacitor::{CapacitorConfig, CapacitorError, CapacitorState};
use crate::energy::cost::{CostError, CostModel};
use crate::energy::trace::PowerTrace;
use crate::energy::EnergyCategory;
use crate::flash::FlashError;
use crate::metrics::Metrics;
use crate::protocol::driver::{
    drive, Action, ActionSink, Actor, DriveError, DriveStats, SinkCore, SinkFault,
    TranscriptEvent,
};
use crate::protocol::{
    verify_final_flash, Approach, DeviceState, DistributorSession, UpdateConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub cost: CostModel,
    pub capacitor: CapacitorConfig,
    /// Extra usable energy required beyond an action's cost at admission.
    pub admission_margin_uj: f64,
    /// Per-action probability of an injected mid-action power failure
    /// (radio/flash actions only). Zero disables the injector.
    pub failure_prob: f64,
    pub failure_seed: u64,
    /// Simulated-time cap; exceeding it means the harvest cannot sustain the
    /// update.
    pub time_cap_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cost: CostModel::default(),
            capacitor: CapacitorConfig::default(),
            admission_margin_uj: 0.0,
            failure_prob: 0.0,
            failure_seed: 0,
            time_cap_s: 1e6,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Capacitor(#[from] CapacitorError),
    #[error(transparent)]
    Plan(#[from] crate::protocol::PlanError),
    #[error("flash: {0}")]
    Flash(#[from] FlashError),
    #[error("update cannot make progress: simulated {simulated_s} s without completing")]
    NonTerminating { simulated_s: f64 },
    #[error("exchange failed: {0}")]
    Exchange(DriveError),
    #[error("final flash content diverges from the new image at segment {segment}")]
    Verification { segment: usize },
    #[error("energy ledger conservation violated: relative residual {residual:e}")]
    Conservation { residual: f64 },
}

/// Energy bookkeeping closing statement for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationReport {
    pub initial_j: f64,
    pub final_j: f64,
    pub harvested_j: f64,
    /// Harvest that arrived while the capacitor was full.
    pub overflow_j: f64,
    /// Everything the ledger charged, converted to joules.
    pub drawn_j: f64,
    /// |(harvested + initial − final) − (drawn + overflow)| / scale.
    pub residual_rel: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub device: DeviceState,
    pub transcript: Vec<TranscriptEvent>,
    pub stats: DriveStats,
    pub conservation: ConservationReport,
    pub final_voltage: f64,
}

struct EnergySink<'a> {
    core: SinkCore,
    cap: CapacitorState,
    trace: &'a PowerTrace,
    rng: ChaCha8Rng,
    failure_prob: f64,
    admission_margin_uj: f64,
    time_cap_s: f64,
    harvested_j: f64,
    overflow_j: f64,
}

impl<'a> EnergySink<'a> {
    fn new(cfg: &SimConfig, trace: &'a PowerTrace) -> Result<Self, CapacitorError> {
        Ok(Self {
            core: SinkCore::new(cfg.cost),
            cap: CapacitorState::new(cfg.capacitor)?,
            trace,
            rng: ChaCha8Rng::seed_from_u64(cfg.failure_seed),
            failure_prob: cfg.failure_prob,
            admission_margin_uj: cfg.admission_margin_uj,
            time_cap_s: cfg.time_cap_s,
            harvested_j: 0.0,
            overflow_j: 0.0,
        })
    }

    /// Advances the clock by `dt` with the harvest flowing in and no load
    /// (action energy is drawn as a lump at the start of the action).
    fn advance_harvesting(&mut self, mut dt: f64) {
        while dt > 0.0 {
            let (power_uw, slot_end) = self.trace.slot_at(self.core.time_s);
            let step = (slot_end - self.core.time_s).min(dt);
            let out = self.cap.step(power_uw, 0.0, step);
            self.harvested_j += out.harvested_j;
            self.overflow_j += out.overflow_j;
            self.core.time_s += step;
            dt -= step;
        }
    }

    /// Waits until the usable energy reaches `target_j`, draining `load_uw`
    /// (the low-power floor while on, zero while off after a brown-out).
    ///
    /// With `can_brownout` the wait fails with a power failure the moment the
    /// capacitor empties. Returns `NonTerminating` when a full trace period
    /// passes without net gain or the simulated-time cap is exceeded — the
    /// harvest will never deliver the target.
    fn charge_until(
        &mut self,
        target_j: f64,
        load_uw: f64,
        can_brownout: bool,
    ) -> Result<(), SinkFault> {
        if target_j > self.cap.max_usable_energy_j() + 1e-18 {
            return Err(SinkFault::NonTerminating {
                simulated_s: self.core.time_s,
            });
        }
        let mut next_progress_check = self.core.time_s + self.trace.period_s();
        let mut energy_at_check = self.cap.usable_energy_j();
        loop {
            let usable = self.cap.usable_energy_j();
            if usable >= target_j - 1e-18 {
                return Ok(());
            }
            if self.core.time_s > self.time_cap_s {
                return Err(SinkFault::NonTerminating {
                    simulated_s: self.core.time_s,
                });
            }
            if self.core.time_s >= next_progress_check {
                // The trace is cyclic, so a whole period with a flat energy
                // balance can never reach the target. A net drain still
                // progresses — toward the brown-out event.
                if (usable - energy_at_check).abs() <= 1e-18 {
                    return Err(SinkFault::NonTerminating {
                        simulated_s: self.core.time_s,
                    });
                }
                energy_at_check = usable;
                next_progress_check += self.trace.period_s();
            }

            let (power_uw, slot_end) = self.trace.slot_at(self.core.time_s);
            let mut step = slot_end - self.core.time_s;
            let net_w = (power_uw - load_uw) * 1e-6;
            if net_w > 0.0 {
                let to_target = (target_j - usable) / net_w;
                step = step.min(to_target);
            } else if net_w < 0.0 && can_brownout {
                let to_empty = usable / -net_w;
                step = step.min(to_empty);
            }
            let out = self.cap.step(power_uw, load_uw, step);
            self.harvested_j += out.harvested_j;
            self.overflow_j += out.overflow_j;
            self.core.time_s += step;
            if load_uw > 0.0 {
                // µW times seconds is µJ.
                self.core
                    .ledger
                    .charge(EnergyCategory::LowpowerIdle, load_uw * step, step);
            }
            if can_brownout && self.cap.usable_energy_j() <= 1e-15 && net_w < 0.0 {
                return Err(SinkFault::PowerFailure);
            }
        }
    }

    fn wait_event(&mut self, event: &'static str, started_s: f64, energy_uj: f64) {
        let duration = self.core.time_s - started_s;
        self.core.transcript.push(TranscriptEvent {
            time_s: started_s,
            actor: Actor::Device,
            event: event.to_string(),
            segment: None,
            bytes: None,
            energy_uj,
            duration_s: duration,
            category: if energy_uj > 0.0 {
                Some(EnergyCategory::LowpowerIdle)
            } else {
                None
            },
        });
    }

    fn conservation(&self) -> ConservationReport {
        let initial_j = {
            let fresh = CapacitorState::new(*self.cap.config()).expect("validated at start");
            fresh.usable_energy_j()
        };
        let final_j = self.cap.usable_energy_j();
        let drawn_j = self.core.ledger.total_uj() * 1e-6;
        let lhs = self.harvested_j + initial_j - final_j;
        let rhs = drawn_j + self.overflow_j;
        let scale = lhs.abs().max(rhs.abs()).max(1e-9);
        ConservationReport {
            initial_j,
            final_j,
            harvested_j: self.harvested_j,
            overflow_j: self.overflow_j,
            drawn_j,
            residual_rel: (lhs - rhs).abs() / scale,
        }
    }
}

impl ActionSink for EnergySink<'_> {
    fn now(&self) -> f64 {
        self.core.time_s
    }

    fn perform(&mut self, actor: Actor, action: Action) -> Result<(), SinkFault> {
        if self.core.time_s > self.time_cap_s {
            return Err(SinkFault::NonTerminating {
                simulated_s: self.core.time_s,
            });
        }
        let (e_uj, d_s, _) = self.core.action_cost(action);
        if e_uj > 0.0 {
            let target_j = (e_uj + self.admission_margin_uj) * 1e-6;
            if self.cap.usable_energy_j() < target_j {
                let started = self.core.time_s;
                let lowpower_uw = self.core.cost.p_lowpower_uw;
                let result = self.charge_until(target_j, lowpower_uw, true);
                let drained_uj = lowpower_uw * (self.core.time_s - started);
                self.wait_event("low_power_wait", started, drained_uj);
                result?;
            }
            self.cap.draw_j(e_uj * 1e-6);
        }
        let injected = self.failure_prob > 0.0
            && action.op_kind().is_some()
            && self.rng.gen_bool(self.failure_prob);
        self.core.book(actor, action, injected);
        self.advance_harvesting(d_s);
        if injected {
            Err(SinkFault::PowerFailure)
        } else {
            Ok(())
        }
    }

    fn boot(&mut self) -> Result<(), SinkFault> {
        if self.cap.is_on_threshold() {
            return Ok(());
        }
        let started = self.core.time_s;
        let result = self.charge_until(self.cap.turn_on_energy_j(), 0.0, false);
        self.wait_event("boot_charge", started, 0.0);
        result
    }

    fn recover(&mut self) -> Result<(), SinkFault> {
        // Off after a brown-out: no load at all until the turn-on threshold.
        let started = self.core.time_s;
        let result = self.charge_until(self.cap.turn_on_energy_j(), 0.0, false);
        self.wait_event("off_charge", started, 0.0);
        result
    }

    fn note(&mut self, actor: Actor, event: &'static str) {
        self.core.note(actor, event);
    }
}

/// Runs one update under a harvest trace and returns the full measurement.
///
/// The returned ledger always balances: harvested energy plus the initial
/// charge equals the final charge plus everything drawn plus overflow, to
/// within 1e-6 relative. Identical inputs and seeds produce identical
/// outcomes.
pub fn simulate(
    approach: Approach,
    old: &[u8],
    new: &[u8],
    trace: &PowerTrace,
    update_cfg: &UpdateConfig,
    sim_cfg: &SimConfig,
) -> Result<SimOutcome, SimError> {
    sim_cfg.cost.validate()?;
    if !(0.0..=1.0).contains(&sim_cfg.failure_prob) {
        return Err(SimError::InvalidConfig(
            "failure_prob must be within [0, 1]".into(),
        ));
    }
    if !sim_cfg.admission_margin_uj.is_finite() || sim_cfg.admission_margin_uj < 0.0 {
        return Err(SimError::InvalidConfig(
            "admission_margin_uj must be non-negative".into(),
        ));
    }
    if !sim_cfg.time_cap_s.is_finite() || sim_cfg.time_cap_s <= 0.0 {
        return Err(SimError::InvalidConfig(
            "time_cap_s must be positive".into(),
        ));
    }
    let mut session = DistributorSession::new(1, approach, old, new, update_cfg)?;
    let mut device = DeviceState::new(1, update_cfg, old)?;
    let mut sink = EnergySink::new(sim_cfg, trace)?;

    let stats = drive(&mut session, &mut device, &mut sink).map_err(|e| match e {
        DriveError::NonTerminating { simulated_s } => SimError::NonTerminating { simulated_s },
        other => SimError::Exchange(other),
    })?;

    verify_final_flash(&device.flash, new).map_err(|segment| SimError::Verification { segment })?;

    let conservation = sink.conservation();
    if conservation.residual_rel > 1e-6 {
        return Err(SimError::Conservation {
            residual: conservation.residual_rel,
        });
    }

    let metrics = Metrics::assemble(approach, session.plan(), &stats, &sink.core);
    Ok(SimOutcome {
        metrics,
        device,
        transcript: sink.core.transcript,
        stats,
        conservation,
        final_voltage: sink.cap.voltage(),
    })
}
