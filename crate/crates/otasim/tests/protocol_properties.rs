//! Cross-module properties exercised through the public API on
//! benchmark-shaped inputs.

use proptest::prelude::*;

use otasim::bench::{gen_benchmark, BenchmarkProfile, ChangePattern};
use otasim::energy::capacitor::CapacitorConfig;
use otasim::energy::sim::{simulate, SimConfig, SimError};
use otasim::energy::trace::{generate_trace, TraceParams};
use otasim::protocol::{build_plan, run_update, Approach, RunConfig, UpdateConfig};

fn arb_profile() -> impl Strategy<Value = BenchmarkProfile> {
    (
        prop_oneof![
            Just(ChangePattern::ScatteredSmall),
            Just(ChangePattern::LocalizedBlock),
            Just(ChangePattern::WeightsRegion),
            Just(ChangePattern::Growth),
        ],
        1024usize..12_288,
        1usize..4096,
        0.01f64..0.4,
        any::<u64>(),
    )
        .prop_map(|(pattern, old_size, grow, fraction, seed)| {
            let (new_size, change_fraction) = match pattern {
                ChangePattern::Growth => {
                    let new_size = old_size + grow;
                    (new_size, grow as f64 / new_size as f64)
                }
                _ => (old_size, fraction),
            };
            BenchmarkProfile {
                name: format!("{pattern:?}"),
                old_size,
                new_size,
                change_pattern: pattern,
                change_fraction,
                seed,
            }
        })
}

fn hypothetical() -> UpdateConfig {
    UpdateConfig {
        hypothetical_sram: true,
        ..UpdateConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// A lossless run delivers exactly the planned packets, once each.
    #[test]
    fn pure_channel_liveness(profile in arb_profile()) {
        let (old, new) = gen_benchmark(&profile).unwrap();
        let cfg = RunConfig { update: hypothetical(), ..RunConfig::default() };
        for approach in Approach::ALL {
            let out = run_update(approach, &old, &new, &cfg).unwrap();
            prop_assert_eq!(out.stats.data_packets_sent, out.metrics.n_packets);
            prop_assert_eq!(out.stats.retransmitted_packets, 0);
            prop_assert_eq!(out.stats.power_failures, 0);
        }
    }

    /// Stream packing never needs more packets than segment-scoped packing
    /// on benchmark-shaped deltas.
    #[test]
    fn in_packs_no_more_packets_than_ea(profile in arb_profile()) {
        let (old, new) = gen_benchmark(&profile).unwrap();
        let cfg = hypothetical();
        let ea = build_plan(Approach::Ea, &old, &new, &cfg).unwrap();
        let stream = build_plan(Approach::In, &old, &new, &cfg).unwrap();
        prop_assert!(stream.packets.len() <= ea.packets.len(),
            "IN {} > EA {} packets", stream.packets.len(), ea.packets.len());
    }

    /// Erase accounting: EA spends exactly one erase per dirty segment, the
    /// packet-by-packet baseline never fewer, the whole-image baseline one
    /// light write per image segment.
    #[test]
    fn write_count_accounting(profile in arb_profile()) {
        let (old, new) = gen_benchmark(&profile).unwrap();
        let cfg = RunConfig { update: hypothetical(), ..RunConfig::default() };
        let ea = run_update(Approach::Ea, &old, &new, &cfg).unwrap();
        let dirty = otasim::delta::dirty_segment_count(&old, &new, &cfg.update.diff_config())
            .unwrap() as u64;
        prop_assert_eq!(ea.metrics.n_erases, dirty);
        prop_assert_eq!(ea.device.flash.total_erases(), dirty);
        let incr = run_update(Approach::In, &old, &new, &cfg).unwrap();
        prop_assert!(incr.metrics.n_erases >= dirty);
        let lw = run_update(Approach::Lw, &old, &new, &cfg).unwrap();
        prop_assert_eq!(lw.metrics.n_writes, new.len().div_ceil(512) as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Under arbitrary capacitors, harvests and failure injection the
    /// simulator either finishes with verified flash (checked inside
    /// `simulate`) or reports that the update cannot make progress; it never
    /// corrupts and never resends more than one segment's packets per
    /// failure.
    #[test]
    fn intermittent_execution_is_safe(
        seed in any::<u64>(),
        capacitance_exp in -4.0f64..-0.3,
        initial_frac in 0.0f64..1.0,
        base_uw in 20.0f64..2000.0,
        failure_prob in 0.0f64..0.25,
    ) {
        let profile = BenchmarkProfile {
            name: "prop".into(),
            old_size: 4096,
            new_size: 4096,
            change_pattern: ChangePattern::ScatteredSmall,
            change_fraction: 0.04,
            seed,
        };
        let (old, new) = gen_benchmark(&profile).unwrap();
        let trace = generate_trace(seed ^ 0xA5, &TraceParams {
            base_uw,
            burst_uw: base_uw * 3.0,
            ..TraceParams::default()
        }).unwrap();
        let sim_cfg = SimConfig {
            capacitor: CapacitorConfig {
                capacitance_f: 10f64.powf(capacitance_exp),
                initial_v: 1.8 + initial_frac * (3.6 - 1.8),
                ..CapacitorConfig::default()
            },
            failure_prob,
            failure_seed: seed,
            time_cap_s: 2e5,
            ..SimConfig::default()
        };
        match simulate(Approach::Ea, &old, &new, &trace, &UpdateConfig::default(), &sim_cfg) {
            Ok(out) => {
                prop_assert!(out.stats.max_retransmit_burst <= 3);
                prop_assert!(out.conservation.residual_rel <= 1e-6);
                // Event times never run backwards.
                let mut t = 0.0;
                for e in &out.transcript {
                    prop_assert!(e.time_s >= t);
                    t = e.time_s;
                }
            }
            Err(SimError::NonTerminating { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error: {e}"))),
        }
    }
}
