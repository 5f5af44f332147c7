use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use otasim::bench::{run_suite, RowStatus, SuiteConfig};
use otasim::delta::compute_deltas;
use otasim::energy::sim::{simulate, SimConfig};
use otasim::energy::trace::{generate_trace, PowerTrace, TraceParams};
use otasim::flash::hexdump;
use otasim::packet::{capture_append, capture_frames, decode, encode};
use otasim::protocol::{build_plan, transcript_to_jsonl, Approach, UpdateConfig};

#[derive(Parser)]
#[command(
    name = "otasim",
    version,
    about = "Segment-aware incremental OTA update toolkit with an energy-harvesting simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct GeometryArgs {
    /// Flash segment (erase unit) size in bytes.
    #[arg(long, default_value_t = 512)]
    segment_size: usize,
    /// Merge changed runs separated by at most this many unchanged bytes.
    #[arg(long, default_value_t = 4)]
    merge_gap: usize,
    /// Maximum frame size, header and CRC included.
    #[arg(long, default_value_t = 261)]
    max_packet: usize,
}

impl GeometryArgs {
    fn update_config(&self, hypothetical_sram: bool) -> UpdateConfig {
        UpdateConfig {
            segment_size: self.segment_size,
            merge_gap: self.merge_gap,
            max_packet: self.max_packet,
            hypothetical_sram,
            ..UpdateConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-segment deltas between two firmware images.
    Diff {
        old: PathBuf,
        new: PathBuf,
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Emit the deltas as JSON (block data hex-encoded).
        #[arg(long)]
        json: bool,
    },
    /// Plan an update and write its data packets as a capture file
    /// (length-prefixed frames, readable by `pktdump`).
    Encode {
        old: PathBuf,
        new: PathBuf,
        /// Update approach: ea, in or lw.
        #[arg(long)]
        approach: Approach,
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Lift the SRAM staging limit for the whole-image approach.
        #[arg(long)]
        hypothetical_sram: bool,
        /// Output capture file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Pretty-print the frames of a capture file.
    Pktdump {
        capture: PathBuf,
        /// Also hex-dump each payload.
        #[arg(long)]
        payload: bool,
    },
    /// Generate a synthetic harvested-power trace as CSV.
    TraceGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Harvest floor in µW.
        #[arg(long, default_value_t = 100.0)]
        base_uw: f64,
        /// Extra power during burst slots, in µW.
        #[arg(long, default_value_t = 900.0)]
        burst_uw: f64,
        /// Probability that a slot bursts.
        #[arg(long, default_value_t = 0.3)]
        burst_prob: f64,
        /// Slot width in seconds.
        #[arg(long, default_value_t = 0.5)]
        slot_s: f64,
        /// Trace length (and cyclic period) in seconds.
        #[arg(long, default_value_t = 60.0)]
        duration_s: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Simulate one update under a harvested-power trace.
    Simulate {
        old: PathBuf,
        new: PathBuf,
        /// Update approach: ea, in or lw.
        #[arg(long)]
        approach: Approach,
        /// Power trace CSV (`time_s,power_uW`).
        #[arg(long)]
        trace: PathBuf,
        /// TOML config with `[update]` and `[sim]` tables; defaults apply to
        /// anything omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Lift the SRAM staging limit for the whole-image approach.
        #[arg(long)]
        hypothetical_sram: bool,
        /// Write the event transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Write the device's final flash contents as a raw binary image.
        #[arg(long)]
        dump_flash: Option<PathBuf>,
    },
    /// Run the benchmark suite and write JSON/CSV reports.
    Bench {
        /// Suite config TOML; omit for the built-in default suite.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        /// Also emit a long-format per-trace CSV.
        #[arg(long)]
        per_trace: bool,
        /// Print the default suite config as TOML and exit.
        #[arg(long)]
        print_default_config: bool,
    },
}

/// On-disk configuration for `simulate`: update geometry plus simulator
/// parameters, both optional.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SimFileConfig {
    update: UpdateConfig,
    sim: SimConfig,
}

fn read_image(path: &Path) -> Result<Vec<u8>> {
    let data = fs::read(path).with_context(|| format!("reading image {}", path.display()))?;
    if data.is_empty() {
        bail!("image {} is empty", path.display());
    }
    Ok(data)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Diff {
            old,
            new,
            geometry,
            json,
        } => {
            let old = read_image(&old)?;
            let new = read_image(&new)?;
            let cfg = geometry.update_config(false).diff_config();
            let deltas = compute_deltas(&old, &new, &cfg)?;
            if json {
                let value = serde_json::json!({
                    "segment_size": cfg.segment_size,
                    "merge_gap": cfg.merge_gap,
                    "dirty_segments": deltas.len(),
                    "segments": deltas.iter().map(|d| serde_json::json!({
                        "segment_index": d.segment_index,
                        "grows_image": d.grows_image,
                        "blocks": d.blocks.iter().map(|b| serde_json::json!({
                            "offset": b.offset,
                            "length": b.len(),
                            "data": b.data.iter().map(|x| format!("{x:02x}")).collect::<String>(),
                        })).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                });
                println!("{}", serde_json::to_string_pretty(&value)?);
            } else {
                let mut total_bytes = 0usize;
                let mut total_blocks = 0usize;
                for d in &deltas {
                    let bytes = d.data_bytes();
                    total_bytes += bytes;
                    total_blocks += d.blocks.len();
                    println!(
                        "segment {:>4}: {:>3} block(s), {:>4} bytes{}",
                        d.segment_index,
                        d.blocks.len(),
                        bytes,
                        if d.grows_image { "  (grows image)" } else { "" }
                    );
                }
                println!(
                    "total: {} dirty segment(s), {} block(s), {} delta byte(s)",
                    deltas.len(),
                    total_blocks,
                    total_bytes
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Encode {
            old,
            new,
            approach,
            geometry,
            hypothetical_sram,
            out,
        } => {
            let old = read_image(&old)?;
            let new = read_image(&new)?;
            let cfg = geometry.update_config(hypothetical_sram);
            let plan = build_plan(approach, &old, &new, &cfg)?;
            let mut capture = Vec::new();
            for pkt in &plan.packets {
                capture_append(&mut capture, &encode(pkt));
            }
            fs::write(&out, &capture)
                .with_context(|| format!("writing capture {}", out.display()))?;
            println!(
                "{}: {} packet(s), {} data byte(s) on the wire, {} dirty segment(s)",
                approach,
                plan.packets.len(),
                plan.total_data_bytes,
                plan.dirty_segments
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Pktdump { capture, payload } => {
            let data = fs::read(&capture)
                .with_context(|| format!("reading capture {}", capture.display()))?;
            for (i, frame) in capture_frames(&data)?.iter().enumerate() {
                match decode(frame) {
                    Ok(pkt) => {
                        let h = &pkt.header;
                        let mut flags = Vec::new();
                        if h.flags.defer {
                            flags.push("defer");
                        }
                        if h.flags.final_update {
                            flags.push("final");
                        }
                        println!(
                            "#{i:04} {:>12} seq={:<5} seg={:<4} len={:<3} flags=[{}] frame={}B",
                            format!("{:?}", h.msg_type),
                            h.packet_seq,
                            h.segment_index,
                            h.payload_len,
                            flags.join(","),
                            frame.len()
                        );
                        if payload && !pkt.payload.is_empty() {
                            print!("{}", hexdump(&pkt.payload));
                        }
                    }
                    Err(e) => println!("#{i:04} invalid frame ({} bytes): {e}", frame.len()),
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::TraceGen {
            seed,
            base_uw,
            burst_uw,
            burst_prob,
            slot_s,
            duration_s,
            out,
        } => {
            let params = TraceParams {
                base_uw,
                burst_uw,
                burst_prob,
                slot_s,
                duration_s,
            };
            let trace = generate_trace(seed, &params)?;
            fs::write(&out, trace.to_csv())
                .with_context(|| format!("writing trace {}", out.display()))?;
            println!(
                "wrote {} slot(s), period {} s, average {:.1} µW",
                trace.points().len(),
                trace.period_s(),
                trace.average_power_uw()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate {
            old,
            new,
            approach,
            trace,
            config,
            hypothetical_sram,
            transcript,
            dump_flash,
        } => {
            let old = read_image(&old)?;
            let new = read_image(&new)?;
            let trace_text = fs::read_to_string(&trace)
                .with_context(|| format!("reading trace {}", trace.display()))?;
            let power = PowerTrace::from_csv(&trace_text)?;
            let mut cfg: SimFileConfig = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading config {}", path.display()))?;
                    toml::from_str(&text)
                        .with_context(|| format!("parsing config {}", path.display()))?
                }
                None => SimFileConfig::default(),
            };
            if hypothetical_sram {
                cfg.update.hypothetical_sram = true;
            }
            let outcome = simulate(approach, &old, &new, &power, &cfg.update, &cfg.sim)?;
            if let Some(path) = transcript {
                fs::write(&path, transcript_to_jsonl(&outcome.transcript))
                    .with_context(|| format!("writing transcript {}", path.display()))?;
            }
            if let Some(path) = dump_flash {
                fs::write(&path, outcome.device.flash.contents())
                    .with_context(|| format!("writing flash image {}", path.display()))?;
            }
            eprintln!(
                "{}: {:.3} s simulated, {:.1} µJ total, {} power failure(s), \
                 {} retransmitted packet(s), final {:.2} V",
                approach,
                outcome.metrics.total_time_s,
                outcome.metrics.total_energy_uj(),
                outcome.stats.power_failures,
                outcome.stats.retransmitted_packets,
                outcome.final_voltage
            );
            println!("{}", serde_json::to_string_pretty(&outcome.metrics)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Bench {
            config,
            out_dir,
            per_trace,
            print_default_config,
        } => {
            if print_default_config {
                print!("{}", SuiteConfig::default().to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            let mut cfg = match &config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading config {}", path.display()))?;
                    SuiteConfig::from_toml(&text)?
                }
                None => SuiteConfig::default(),
            };
            if per_trace {
                cfg.emit_per_trace = true;
            }
            let report = run_suite(&cfg)?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            fs::write(out_dir.join("report.json"), report.to_json())?;
            fs::write(out_dir.join("report.csv"), report.to_csv())?;
            if cfg.emit_per_trace {
                fs::write(out_dir.join("per_trace.csv"), report.per_trace_csv())?;
            }

            println!(
                "{:<10} {:<10} {:<18} {:>9} {:>8} {:>7} {:>7} {:>12} {:>12}",
                "approach",
                "benchmark",
                "status",
                "bytes",
                "packets",
                "writes",
                "erases",
                "energy_mJ",
                "mean_time_s"
            );
            for row in &report.rows {
                match (&row.metrics, &row.time_stats) {
                    (Some(m), Some(t)) => println!(
                        "{:<10} {:<10} {:<18} {:>9} {:>8} {:>7} {:>7} {:>12.3} {:>12.3}",
                        row.approach.to_string(),
                        row.benchmark,
                        "ok",
                        m.total_update_bytes,
                        m.n_packets,
                        m.n_writes,
                        m.n_erases,
                        m.total_energy_uj() / 1000.0,
                        t.mean
                    ),
                    _ => println!(
                        "{:<10} {:<10} {:<18} {:>9} {:>8} {:>7} {:>7} {:>12} {:>12}",
                        row.approach.to_string(),
                        row.benchmark,
                        "update_impossible",
                        "-",
                        "-",
                        "-",
                        "-",
                        "-",
                        "-"
                    ),
                }
            }
            let impossible = report
                .rows
                .iter()
                .filter(|r| r.status == RowStatus::UpdateImpossible)
                .count();
            if impossible > 0 {
                println!("({impossible} cell(s) infeasible under the SRAM staging limit)");
            }
            for check in &report.checks {
                println!(
                    "check {:<55} {} ({})",
                    check.name,
                    if check.passed { "PASS" } else { "FAIL" },
                    check.detail
                );
            }
            println!("reports written to {}", out_dir.display());
            if report.all_checks_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: embedded invariant checks failed");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
