//! Harvested-power traces: piecewise-constant time series of harvest power.
//!
//! Traces repeat cyclically when a simulation outlives them. The synthetic
//! generator produces a base power level with random bursts on top, which is
//! a reasonable stand-in for RF harvesting: somewhat random, consistently
//! patterned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace must contain at least one sample")]
    Empty,
    #[error("sample times must start at 0 and strictly increase (sample {index})")]
    NonMonotonicTime { index: usize },
    #[error("power must be non-negative (sample {index})")]
    NegativePower { index: usize },
    #[error("period {period_s} must exceed the last sample time {last_s}")]
    PeriodTooShort { period_s: f64, last_s: f64 },
    #[error("trace parameter {name} invalid")]
    BadParam { name: &'static str },
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time_s: f64,
    pub power_uw: f64,
}

/// Piecewise-constant harvested power. Sample `i` holds from its timestamp
/// until the next sample (or the period end); the whole trace then repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    points: Vec<TracePoint>,
    period_s: f64,
}

impl PowerTrace {
    pub fn new(points: Vec<TracePoint>, period_s: f64) -> Result<Self, TraceError> {
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        if points[0].time_s != 0.0 {
            return Err(TraceError::NonMonotonicTime { index: 0 });
        }
        for i in 0..points.len() {
            if points[i].power_uw < 0.0 || !points[i].power_uw.is_finite() {
                return Err(TraceError::NegativePower { index: i });
            }
            if i > 0 && points[i].time_s <= points[i - 1].time_s {
                return Err(TraceError::NonMonotonicTime { index: i });
            }
        }
        let last = points.last().unwrap().time_s;
        if !period_s.is_finite() || period_s <= last {
            return Err(TraceError::PeriodTooShort {
                period_s,
                last_s: last,
            });
        }
        Ok(Self { points, period_s })
    }

    /// Constant-power trace, mostly for tests and closed-form checks.
    pub fn constant(power_uw: f64, period_s: f64) -> Result<Self, TraceError> {
        Self::new(
            vec![TracePoint {
                time_s: 0.0,
                power_uw,
            }],
            period_s,
        )
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    /// Harvest power at absolute time `t` (cyclic).
    pub fn power_at(&self, t: f64) -> f64 {
        self.slot_at(t).0
    }

    /// Power at `t` and the absolute time at which it next changes. The
    /// returned boundary is always strictly after `t`, so integration loops
    /// make progress.
    pub fn slot_at(&self, t: f64) -> (f64, f64) {
        debug_assert!(t >= 0.0);
        let mut cycle = (t / self.period_s).floor();
        let mut local = t - cycle * self.period_s;
        if local >= self.period_s {
            cycle += 1.0;
            local -= self.period_s;
        }
        if local < 0.0 {
            local = 0.0;
        }
        let idx = self
            .points
            .partition_point(|p| p.time_s <= local)
            .saturating_sub(1);
        let end_local = self
            .points
            .get(idx + 1)
            .map_or(self.period_s, |p| p.time_s);
        let mut end = cycle * self.period_s + end_local;
        if end <= t {
            end = t + 1e-9;
        }
        (self.points[idx].power_uw, end)
    }

    /// Mean power over one period.
    pub fn average_power_uw(&self) -> f64 {
        let mut sum = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            let end = self
                .points
                .get(i + 1)
                .map_or(self.period_s, |n| n.time_s);
            sum += p.power_uw * (end - p.time_s);
        }
        sum / self.period_s
    }

    /// Serializes as CSV with the `time_s,power_uW` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,power_uW\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.time_s, p.power_uw));
        }
        out
    }

    /// Parses the CSV form. The period extends one sample spacing past the
    /// last sample (one slot for a single-sample trace).
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "time_s,power_uW" => {}
            Some((line, _)) => {
                return Err(TraceError::Csv {
                    line: line + 1,
                    reason: "expected header `time_s,power_uW`".into(),
                })
            }
            None => return Err(TraceError::Empty),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>, what: &str| -> Result<f64, TraceError> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| TraceError::Csv {
                        line: i + 1,
                        reason: format!("bad {what} field"),
                    })
            };
            let time_s = parse(fields.next(), "time")?;
            let power_uw = parse(fields.next(), "power")?;
            points.push(TracePoint { time_s, power_uw });
        }
        let period = match points.len() {
            0 => return Err(TraceError::Empty),
            1 => points[0].time_s + 1.0,
            n => {
                let last = points[n - 1].time_s;
                let gap = last - points[n - 2].time_s;
                last + gap
            }
        };
        Self::new(points, period)
    }
}

/// Parameters for the synthetic trace generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceParams {
    /// Always-present harvest floor.
    pub base_uw: f64,
    /// Extra power during a burst slot.
    pub burst_uw: f64,
    /// Probability that any given slot bursts.
    pub burst_prob: f64,
    /// Slot width.
    pub slot_s: f64,
    /// Total trace length; also the cyclic period.
    pub duration_s: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            base_uw: 100.0,
            burst_uw: 900.0,
            burst_prob: 0.3,
            slot_s: 0.5,
            duration_s: 60.0,
        }
    }
}

/// Generates a seeded burst trace: per slot, power is `base_uw`, plus
/// `burst_uw` with probability `burst_prob`. Same seed, same trace.
pub fn generate_trace(seed: u64, params: &TraceParams) -> Result<PowerTrace, TraceError> {
    if !params.base_uw.is_finite() || params.base_uw < 0.0 {
        return Err(TraceError::BadParam { name: "base_uw" });
    }
    if !params.burst_uw.is_finite() || params.burst_uw < 0.0 {
        return Err(TraceError::BadParam { name: "burst_uw" });
    }
    if !(0.0..=1.0).contains(&params.burst_prob) {
        return Err(TraceError::BadParam { name: "burst_prob" });
    }
    if !params.slot_s.is_finite() || params.slot_s <= 0.0 {
        return Err(TraceError::BadParam { name: "slot_s" });
    }
    if !params.duration_s.is_finite() || params.duration_s < params.slot_s {
        return Err(TraceError::BadParam { name: "duration_s" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = (params.duration_s / params.slot_s).floor() as usize;
    let points = (0..slots)
        .map(|i| {
            let burst = rng.gen_bool(params.burst_prob);
            TracePoint {
                time_s: i as f64 * params.slot_s,
                power_uw: params.base_uw + if burst { params.burst_uw } else { 0.0 },
            }
        })
        .collect();
    PowerTrace::new(points, slots as f64 * params.slot_s)
}
