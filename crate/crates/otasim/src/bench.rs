//! Synthetic benchmark generation and the full comparison suite.
//!
//! Real firmware pairs are replaced by seeded synthetic images shaped like
//! common update workloads: scattered small code edits, one rewritten region,
//! a dense block of changed model weights, or an appended tail. The suite
//! runs every (approach × benchmark) cell once over a lossless channel for
//! the size/write/energy table, then across a batch of generated harvest
//! traces for timing statistics, and emits JSON and CSV reports that embed
//! the full configuration so any row can be re-derived.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delta::{dirty_segment_count, DeltaError};
use crate::energy::sim::{simulate, SimConfig, SimError};
use crate::energy::trace::{generate_trace, TraceError, TraceParams};
use crate::flash::ERASED_BYTE;
use crate::metrics::Metrics;
use crate::packet::FRAME_OVERHEAD;
use crate::protocol::{run_update, Approach, PlanError, ProtocolError, RunConfig, UpdateConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("invalid suite config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Delta(#[from] DeltaError),
}

/// How the new image differs from the old one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangePattern {
    /// Many 1–8-byte edits sprinkled across the whole image.
    ScatteredSmall,
    /// One contiguous rewritten region.
    LocalizedBlock,
    /// A dense window of changed bytes, like a model-weights refresh.
    WeightsRegion,
    /// An appended tail; the old image is a strict prefix of the new one.
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProfile {
    pub name: String,
    pub old_size: usize,
    pub new_size: usize,
    pub change_pattern: ChangePattern,
    /// Requested fraction of differing bytes (over the padded comparison
    /// length). For growth profiles this is fixed by the size delta.
    pub change_fraction: f64,
    pub seed: u64,
}

impl BenchmarkProfile {
    fn err(&self, reason: impl Into<String>) -> BenchError {
        BenchError::InvalidProfile {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }
}

/// Profiles shaped like a small embedded benchmark set: sizes span 3 KB to
/// 57 KB and the patterns cover code edits, a large growth update, a sort
/// workload, a small cipher upgrade, and a weights refresh.
pub fn default_profiles() -> Vec<BenchmarkProfile> {
    vec![
        BenchmarkProfile {
            name: "MTH".into(),
            old_size: 30814,
            new_size: 30814,
            change_pattern: ChangePattern::ScatteredSmall,
            change_fraction: 0.030,
            seed: 0xA001,
        },
        BenchmarkProfile {
            name: "STR".into(),
            old_size: 8254,
            new_size: 31024,
            change_pattern: ChangePattern::Growth,
            change_fraction: (31024.0 - 8254.0) / 31024.0,
            seed: 0xA002,
        },
        BenchmarkProfile {
            name: "SRT".into(),
            old_size: 57324,
            new_size: 57324,
            change_pattern: ChangePattern::ScatteredSmall,
            change_fraction: 0.020,
            seed: 0xA003,
        },
        BenchmarkProfile {
            name: "AES".into(),
            old_size: 3355,
            new_size: 3532,
            change_pattern: ChangePattern::Growth,
            change_fraction: (3532.0 - 3355.0) / 3532.0,
            seed: 0xA004,
        },
        BenchmarkProfile {
            name: "OKG".into(),
            old_size: 56210,
            new_size: 56210,
            change_pattern: ChangePattern::WeightsRegion,
            change_fraction: 0.15,
            seed: 0xA005,
        },
    ]
}

fn random_image(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}

fn flip(rng: &mut ChaCha8Rng, byte: u8) -> u8 {
    byte ^ rng.gen_range(1..=255u8)
}

/// Deterministically generates the (old, new) image pair for a profile.
///
/// Non-growth patterns hit the requested differing-byte count exactly;
/// growth appends `new_size - old_size` bytes, all of which differ from the
/// erased-flash padding they are compared against.
pub fn gen_benchmark(profile: &BenchmarkProfile) -> Result<(Vec<u8>, Vec<u8>), BenchError> {
    if profile.old_size == 0 || profile.new_size == 0 {
        return Err(profile.err("sizes must be positive"));
    }
    if profile.new_size < profile.old_size {
        return Err(profile.err("shrinking updates are not modeled; new_size >= old_size"));
    }
    if !(profile.change_fraction > 0.0 && profile.change_fraction <= 1.0) {
        return Err(profile.err("change_fraction must be in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    if profile.change_pattern == ChangePattern::Growth {
        if profile.new_size == profile.old_size {
            return Err(profile.err("growth requires new_size > old_size"));
        }
        let old = random_image(&mut rng, profile.old_size);
        let mut new = old.clone();
        while new.len() < profile.new_size {
            let b: u8 = rng.gen();
            if b != ERASED_BYTE {
                new.push(b);
            }
        }
        return Ok((old, new));
    }

    if profile.new_size != profile.old_size {
        return Err(profile.err(
            "scattered/localized/weights patterns need equal sizes; use growth for size changes",
        ));
    }
    let len = profile.old_size;
    let target = ((profile.change_fraction * len as f64).round() as usize).clamp(1, len);
    let old = random_image(&mut rng, len);
    let mut new = old.clone();

    match profile.change_pattern {
        ChangePattern::ScatteredSmall => {
            let mut changed = vec![false; len];
            let mut remaining = target;
            while remaining > 0 {
                let start = rng.gen_range(0..len);
                let run = rng.gen_range(1..=8usize);
                for pos in start..(start + run).min(len) {
                    if remaining == 0 {
                        break;
                    }
                    if !changed[pos] {
                        changed[pos] = true;
                        new[pos] = flip(&mut rng, old[pos]);
                        remaining -= 1;
                    }
                }
            }
        }
        ChangePattern::LocalizedBlock => {
            let start = rng.gen_range(0..=len - target);
            for pos in start..start + target {
                new[pos] = flip(&mut rng, old[pos]);
            }
        }
        ChangePattern::WeightsRegion => {
            // A dense window: roughly 85% of its bytes change.
            let window = (target as f64 / 0.85).ceil().min(len as f64) as usize;
            let start = rng.gen_range(0..=len - window);
            let mut positions: Vec<usize> = (start..start + window).collect();
            positions.shuffle(&mut rng);
            for &pos in positions.iter().take(target) {
                new[pos] = flip(&mut rng, old[pos]);
            }
        }
        ChangePattern::Growth => unreachable!("handled above"),
    }
    Ok((old, new))
}

/// Full configuration of a suite run; embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub master_seed: u64,
    pub n_traces: usize,
    pub approaches: Vec<Approach>,
    pub profiles: Vec<BenchmarkProfile>,
    pub update: UpdateConfig,
    pub sim: SimConfig,
    pub trace: TraceParams,
    /// Include per-trace samples in the report and the long-format CSV.
    pub emit_per_trace: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            n_traces: 100,
            approaches: Approach::ALL.to_vec(),
            profiles: default_profiles(),
            update: UpdateConfig {
                hypothetical_sram: true,
                ..UpdateConfig::default()
            },
            sim: SimConfig::default(),
            trace: TraceParams::default(),
            emit_per_trace: false,
        }
    }
}

impl SuiteConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("suite config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::InvalidConfig(e.to_string()))
    }
}

/// Sample mean / standard deviation over per-trace results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Stat {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
                n,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean,
            std,
            min,
            max,
            n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// The approach cannot perform this update at all (SRAM staging limit).
    UpdateImpossible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub trace_index: usize,
    pub trace_seed: u64,
    pub total_time_s: f64,
    pub total_energy_uj: f64,
    pub power_failures: u64,
    pub retransmitted_packets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub approach: Approach,
    pub benchmark: String,
    pub status: RowStatus,
    pub old_size: usize,
    pub new_size: usize,
    pub dirty_segments: u64,
    /// Lossless-channel metrics (sizes, counts, energy, ideal time).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_stats: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_stats: Option<Stat>,
    pub failures_mean: f64,
    pub retransmit_mean: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_trace: Vec<TraceSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    /// Header-plus-CRC bytes per frame, so trend readers can normalize away
    /// this implementation's framing overhead.
    pub frame_overhead_bytes: usize,
    pub config: SuiteConfig,
    pub rows: Vec<SuiteRow>,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn row(&self, approach: Approach, benchmark: &str) -> Option<&SuiteRow> {
        self.rows
            .iter()
            .find(|r| r.approach == approach && r.benchmark == benchmark)
    }

    /// Wide CSV mirror of the report rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "approach,benchmark,status,old_size,new_size,dirty_segments,\
             total_update_bytes,n_packets,n_writes,n_erases,\
             communication_uj,flash_erase_uj,flash_write_uj,flash_read_uj,\
             light_flash_write_uj,reinforcement_uj,lowpower_idle_uj,wasted_uj,\
             total_energy_uj,ideal_time_s,mean_time_s,std_time_s,\
             mean_energy_uj,std_energy_uj,failures_mean,retransmit_mean\n",
        );
        for r in &self.rows {
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::UpdateImpossible => "update_impossible",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.approach, r.benchmark, status, r.old_size, r.new_size, r.dirty_segments
            ));
            match &r.metrics {
                Some(m) => {
                    let e = &m.energy;
                    out.push_str(&format!(
                        ",{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        m.total_update_bytes,
                        m.n_packets,
                        m.n_writes,
                        m.n_erases,
                        e.communication_uj,
                        e.flash_erase_uj,
                        e.flash_write_uj,
                        e.flash_read_uj,
                        e.light_flash_write_uj,
                        e.reinforcement_uj,
                        e.lowpower_idle_uj,
                        e.wasted_uj,
                        m.total_energy_uj(),
                        m.total_time_s
                    ));
                }
                None => out.push_str(&",".repeat(14)),
            }
            match (&r.time_stats, &r.energy_stats) {
                (Some(t), Some(e)) => out.push_str(&format!(
                    ",{},{},{},{}",
                    t.mean, t.std, e.mean, e.std
                )),
                _ => out.push_str(",,,,"),
            }
            out.push_str(&format!(",{},{}\n", r.failures_mean, r.retransmit_mean));
        }
        out
    }

    /// Long-format per-trace CSV (one line per simulation).
    pub fn per_trace_csv(&self) -> String {
        let mut out = String::from(
            "approach,benchmark,trace_index,trace_seed,total_time_s,\
             total_energy_uj,power_failures,retransmitted_packets\n",
        );
        for r in &self.rows {
            for s in &r.per_trace {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.approach,
                    r.benchmark,
                    s.trace_index,
                    s.trace_seed,
                    s.total_time_s,
                    s.total_energy_uj,
                    s.power_failures,
                    s.retransmitted_packets
                ));
            }
        }
        out
    }
}

/// Runs the whole suite: one pure run per cell for the comparison table,
/// then `n_traces` intermittent simulations per feasible cell for timing.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport, BenchError> {
    if cfg.profiles.is_empty() || cfg.approaches.is_empty() {
        return Err(BenchError::InvalidConfig(
            "need at least one profile and one approach".into(),
        ));
    }
    if cfg.n_traces == 0 {
        return Err(BenchError::InvalidConfig("n_traces must be >= 1".into()));
    }

    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let trace_seeds: Vec<u64> = (0..cfg.n_traces).map(|_| seed_rng.gen()).collect();
    let traces = trace_seeds
        .iter()
        .map(|&s| generate_trace(s, &cfg.trace))
        .collect::<Result<Vec<_>, _>>()?;

    let run_cfg = RunConfig {
        update: cfg.update,
        cost: cfg.sim.cost,
    };
    let mut rows = Vec::new();
    let mut checks = Vec::new();

    for profile in &cfg.profiles {
        let (old, new) = gen_benchmark(profile)?;
        let dirty = dirty_segment_count(&old, &new, &cfg.update.diff_config())? as u64;

        for &approach in &cfg.approaches {
            let pure = match run_update(approach, &old, &new, &run_cfg) {
                Ok(outcome) => outcome,
                Err(ProtocolError::Plan(PlanError::UpdateImpossible { .. })) => {
                    rows.push(SuiteRow {
                        approach,
                        benchmark: profile.name.clone(),
                        status: RowStatus::UpdateImpossible,
                        old_size: profile.old_size,
                        new_size: profile.new_size,
                        dirty_segments: dirty,
                        metrics: None,
                        time_stats: None,
                        energy_stats: None,
                        failures_mean: 0.0,
                        retransmit_mean: 0.0,
                        per_trace: Vec::new(),
                    });
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let mut metrics = pure.metrics;
            metrics.benchmark = profile.name.clone();
            row_checks(&mut checks, profile, approach, &metrics, dirty, &cfg.update);

            let mut times = Vec::with_capacity(cfg.n_traces);
            let mut energies = Vec::with_capacity(cfg.n_traces);
            let mut failures = 0u64;
            let mut retransmits = 0u64;
            let mut per_trace = Vec::new();
            for (i, trace) in traces.iter().enumerate() {
                let mut sim_cfg = cfg.sim;
                sim_cfg.failure_seed = cfg.sim.failure_seed ^ trace_seeds[i];
                let out = simulate(approach, &old, &new, trace, &cfg.update, &sim_cfg)?;
                times.push(out.metrics.total_time_s);
                energies.push(out.metrics.total_energy_uj());
                failures += out.stats.power_failures;
                retransmits += out.stats.retransmitted_packets;
                if cfg.emit_per_trace {
                    per_trace.push(TraceSample {
                        trace_index: i,
                        trace_seed: trace_seeds[i],
                        total_time_s: out.metrics.total_time_s,
                        total_energy_uj: out.metrics.total_energy_uj(),
                        power_failures: out.stats.power_failures,
                        retransmitted_packets: out.stats.retransmitted_packets,
                    });
                }
            }
            rows.push(SuiteRow {
                approach,
                benchmark: profile.name.clone(),
                status: RowStatus::Ok,
                old_size: profile.old_size,
                new_size: profile.new_size,
                dirty_segments: dirty,
                metrics: Some(metrics),
                time_stats: Some(Stat::from_samples(&times)),
                energy_stats: Some(Stat::from_samples(&energies)),
                failures_mean: failures as f64 / cfg.n_traces as f64,
                retransmit_mean: retransmits as f64 / cfg.n_traces as f64,
                per_trace,
            });
        }

        cross_checks(&mut checks, profile, &rows);
    }

    Ok(SuiteReport {
        frame_overhead_bytes: FRAME_OVERHEAD,
        config: cfg.clone(),
        rows,
        checks,
    })
}

/// Structural invariants every row must satisfy, regardless of profile.
fn row_checks(
    checks: &mut Vec<CheckResult>,
    profile: &BenchmarkProfile,
    approach: Approach,
    metrics: &Metrics,
    dirty: u64,
    update: &UpdateConfig,
) {
    let name = format!("{}/{}", profile.name, approach);
    match approach {
        Approach::Ea => {
            checks.push(CheckResult {
                name: format!("{name}: erase count equals dirty segments"),
                passed: metrics.n_erases == dirty,
                detail: format!("erases={}, dirty={}", metrics.n_erases, dirty),
            });
        }
        Approach::Lw => {
            let expected = profile.new_size.div_ceil(update.segment_size) as u64;
            checks.push(CheckResult {
                name: format!("{name}: write count equals image segments"),
                passed: metrics.n_writes == expected,
                detail: format!("writes={}, expected={}", metrics.n_writes, expected),
            });
        }
        Approach::In => {}
    }
    if approach != Approach::Lw {
        checks.push(CheckResult {
            name: format!("{name}: every erase pairs with a write"),
            passed: metrics.n_erases == metrics.n_writes,
            detail: format!("erases={}, writes={}", metrics.n_erases, metrics.n_writes),
        });
    }
}

/// Invariants across approaches of one benchmark, where both rows exist.
fn cross_checks(checks: &mut Vec<CheckResult>, profile: &BenchmarkProfile, rows: &[SuiteRow]) {
    let find = |a: Approach| {
        rows.iter()
            .find(|r| r.benchmark == profile.name && r.approach == a)
            .and_then(|r| r.metrics.as_ref())
    };
    if let (Some(ea), Some(incr)) = (find(Approach::Ea), find(Approach::In)) {
        checks.push(CheckResult {
            name: format!("{}: IN never erases less than EA", profile.name),
            passed: incr.n_erases >= ea.n_erases,
            detail: format!("in={}, ea={}", incr.n_erases, ea.n_erases),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_diffs(old: &[u8], new: &[u8]) -> usize {
        let len = old.len().max(new.len());
        (0..len)
            .filter(|&i| {
                old.get(i).copied().unwrap_or(ERASED_BYTE)
                    != new.get(i).copied().unwrap_or(ERASED_BYTE)
            })
            .count()
    }

    fn profile(pattern: ChangePattern, old: usize, new: usize, f: f64) -> BenchmarkProfile {
        BenchmarkProfile {
            name: "T".into(),
            old_size: old,
            new_size: new,
            change_pattern: pattern,
            change_fraction: f,
            seed: 7,
        }
    }

    #[test]
    fn change_fraction_is_hit_within_two_percent() {
        for (pattern, f) in [
            (ChangePattern::ScatteredSmall, 0.05),
            (ChangePattern::LocalizedBlock, 0.2),
            (ChangePattern::WeightsRegion, 0.15),
        ] {
            let p = profile(pattern, 16384, 16384, f);
            let (old, new) = gen_benchmark(&p).unwrap();
            let measured = count_diffs(&old, &new) as f64 / 16384.0;
            assert!(
                (measured - f).abs() / f <= 0.02,
                "{pattern:?}: measured {measured}, requested {f}"
            );
        }
        // Growth: every appended byte differs from the 0xFF padding.
        let p = profile(ChangePattern::Growth, 8000, 10000, 0.2);
        let (old, new) = gen_benchmark(&p).unwrap();
        assert_eq!(count_diffs(&old, &new), 2000);
        let requested = p.change_fraction * 10000.0;
        assert!((2000.0 - requested).abs() / requested <= 0.02);
    }

    #[test]
    fn same_seed_same_images() {
        let p = profile(ChangePattern::ScatteredSmall, 4096, 4096, 0.1);
        assert_eq!(gen_benchmark(&p).unwrap(), gen_benchmark(&p).unwrap());
        let mut p2 = p.clone();
        p2.seed = 8;
        assert_ne!(gen_benchmark(&p).unwrap(), gen_benchmark(&p2).unwrap());
    }

    #[test]
    fn growth_keeps_old_as_strict_prefix() {
        let p = profile(ChangePattern::Growth, 3355, 3532, 177.0 / 3532.0);
        let (old, new) = gen_benchmark(&p).unwrap();
        assert_eq!(&new[..old.len()], old.as_slice());
        assert!(new.len() == 3532);
        assert!(new[old.len()..].iter().all(|&b| b != ERASED_BYTE));
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(gen_benchmark(&profile(ChangePattern::ScatteredSmall, 100, 50, 0.1)).is_err());
        assert!(gen_benchmark(&profile(ChangePattern::ScatteredSmall, 100, 200, 0.1)).is_err());
        assert!(gen_benchmark(&profile(ChangePattern::Growth, 100, 100, 0.1)).is_err());
        assert!(gen_benchmark(&profile(ChangePattern::ScatteredSmall, 100, 100, 0.0)).is_err());
    }

    fn tiny_suite() -> SuiteConfig {
        SuiteConfig {
            master_seed: 1,
            n_traces: 2,
            approaches: Approach::ALL.to_vec(),
            profiles: vec![
                BenchmarkProfile {
                    name: "small".into(),
                    old_size: 3000,
                    new_size: 3000,
                    change_pattern: ChangePattern::ScatteredSmall,
                    change_fraction: 0.05,
                    seed: 3,
                },
                BenchmarkProfile {
                    name: "grow".into(),
                    old_size: 2000,
                    new_size: 2600,
                    change_pattern: ChangePattern::Growth,
                    change_fraction: 600.0 / 2600.0,
                    seed: 4,
                },
            ],
            update: UpdateConfig {
                hypothetical_sram: true,
                ..UpdateConfig::default()
            },
            sim: SimConfig::default(),
            trace: TraceParams {
                duration_s: 10.0,
                ..TraceParams::default()
            },
            emit_per_trace: true,
        }
    }

    #[test]
    fn suite_has_one_row_per_cell_and_passes_checks() {
        let report = run_suite(&tiny_suite()).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.all_checks_passed(), "{:#?}", report.checks);
        assert_eq!(report.frame_overhead_bytes, 10);
        for row in &report.rows {
            assert_eq!(row.status, RowStatus::Ok);
            assert_eq!(row.per_trace.len(), 2);
            let m = row.metrics.as_ref().unwrap();
            assert_eq!(m.benchmark, row.benchmark);
        }
    }

    #[test]
    fn suite_reports_are_byte_identical_for_the_same_seed() {
        let cfg = tiny_suite();
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.per_trace_csv(), b.per_trace_csv());
    }

    #[test]
    fn sram_limit_produces_impossible_rows() {
        let mut cfg = tiny_suite();
        cfg.update.hypothetical_sram = false;
        cfg.profiles[0].old_size = 12000;
        cfg.profiles[0].new_size = 12000;
        let report = run_suite(&cfg).unwrap();
        let lw = report.row(Approach::Lw, "small").unwrap();
        assert_eq!(lw.status, RowStatus::UpdateImpossible);
        assert!(lw.metrics.is_none());
        // The other approaches still run.
        assert_eq!(
            report.row(Approach::Ea, "small").unwrap().status,
            RowStatus::Ok
        );
    }

    #[test]
    fn suite_config_toml_round_trip() {
        let cfg = SuiteConfig::default();
        let text = cfg.to_toml();
        let parsed = SuiteConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, cfg);
        // Partial configs fill in defaults.
        let partial = SuiteConfig::from_toml("master_seed = 7\n").unwrap();
        assert_eq!(partial.master_seed, 7);
        assert_eq!(partial.n_traces, SuiteConfig::default().n_traces);
    }
}
