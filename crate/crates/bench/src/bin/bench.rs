//! Latency benchmark CLI: run scenarios, compare modes, summarize samples.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ngb_core::bench::compare::render_table;
use ngb_core::bench::emit::{read_latencies_csv, read_reports_dir};
use ngb_core::bench::{compare, compute_stats, run_case, BenchReport, CaseConfig, Runner};
use ngb_core::gamecontroller::DEFAULT_GC_PORT;
use ngb_core::model::Reliability;
use ngb_core::runtime::launch::Launcher;
use ngb_core::runtime::Mode;

const EXIT_ASSERTION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Environment variable naming the node executable; defaults to `ngb-node`
/// next to this binary.
const NODE_BIN_ENV: &str = "NGB_NODE_BIN";

#[derive(Parser, Debug)]
#[command(name = "bench", version, about = "Stand-alone vs composed latency benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Standalone,
    ComposedNoipc,
    ComposedIpc,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Standalone => Mode::Standalone,
            ModeArg::ComposedNoipc => Mode::ComposedNoipc,
            ModeArg::ComposedIpc => Mode::ComposedIpc,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QosArg {
    Reliable,
    BestEffort,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one case in one mode and write report.json, samples.csv and plotdata.txt.
    Run {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        case: u8,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, value_enum, default_value = "reliable")]
        image_qos: QosArg,
        /// Executor threads (default: logical CPUs, at most 4).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Domain id; selects the block of loopback ports used.
        #[arg(long, default_value_t = 0)]
        domain: u32,
        /// GameController listen port for Case 2.
        #[arg(long, default_value_t = DEFAULT_GC_PORT)]
        gc_port: u16,
        /// Samples discarded at the start of the run.
        #[arg(long, default_value_t = 100)]
        warmup: u64,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Fail with status 2 unless the ipc median is lowest among the runs in --out.
        #[arg(long)]
        assert_ordering: bool,
    },
    /// Compare the reports found in DIR and its subdirectories.
    Compare {
        dir: PathBuf,
        #[arg(long)]
        assert_ordering: bool,
        /// Print the comparison as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Summarize a samples.csv or raw_samples.csv file.
    Stats { file: PathBuf },
}

fn node_launcher() -> Result<Launcher, String> {
    if let Some(p) = std::env::var_os(NODE_BIN_ENV) {
        return Ok(Launcher::new(p));
    }
    let exe = std::env::current_exe().map_err(|e| format!("locating bench executable: {e}"))?;
    let node = exe.with_file_name(format!("ngb-node{}", std::env::consts::EXE_SUFFIX));
    if !node.is_file() {
        return Err(format!("node executable not found at {} (set {NODE_BIN_ENV})", node.display()));
    }
    Ok(Launcher::new(node))
}

fn fmt_ms(ns: i64) -> String {
    format!("{:.3} ms", ns as f64 / 1e6)
}

fn summary(r: &BenchReport) -> String {
    format!(
        "{} {}: n={} median {} iqr {} p99 {} copies/image {}..{} (anomalies {})",
        r.scenario,
        r.mode.as_str(),
        r.sample_count,
        fmt_ms(r.stats.median),
        fmt_ms(r.iqr),
        fmt_ms(r.stats.p99),
        r.image_copies.min_per_image,
        r.image_copies.max_per_image,
        r.anomalies,
    )
}

fn assert_ordering(reports: &[BenchReport]) -> Result<bool, String> {
    let c = compare(reports).map_err(|e| e.to_string())?;
    print!("{}", render_table(&c));
    Ok(c.ordering_holds)
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run {
            case,
            mode,
            samples,
            width,
            height,
            fps,
            image_qos,
            threads,
            seed,
            domain,
            gc_port,
            warmup,
            out,
            assert_ordering: assert,
        } => {
            let cfg = CaseConfig {
                case,
                mode: mode.into(),
                samples,
                width,
                height,
                fps,
                image_qos: match image_qos {
                    QosArg::Reliable => Reliability::Reliable,
                    QosArg::BestEffort => Reliability::BestEffort,
                },
                threads,
                seed,
                domain,
                gc_port,
                warmup,
                ..CaseConfig::default()
            };
            let runner = Runner::Processes(node_launcher()?);
            let outcome = run_case(&cfg, &out, &runner).map_err(|e| e.to_string())?;
            println!("{}", summary(&outcome.report));
            println!("wrote {}", outcome.run_dir.display());
            if assert {
                let reports: Vec<BenchReport> = read_reports_dir(&out)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .filter(|r| r.scenario == outcome.report.scenario)
                    .collect();
                if reports.len() < 2 {
                    eprintln!("--assert-ordering needs runs of at least two modes in {}", out.display());
                    return Ok(false);
                }
                return assert_ordering(&reports);
            }
            Ok(true)
        }
        Command::Compare {
            dir,
            assert_ordering: assert,
            json,
        } => {
            let reports = read_reports_dir(&dir).map_err(|e| e.to_string())?;
            let c = compare(&reports).map_err(|e| e.to_string())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&c).map_err(|e| e.to_string())?);
            } else {
                print!("{}", render_table(&c));
            }
            Ok(!assert || c.ordering_holds)
        }
        Command::Stats { file } => {
            stats(&file)?;
            Ok(true)
        }
    }
}

fn stats(file: &Path) -> Result<(), String> {
    let lat = read_latencies_csv(file).map_err(|e| e.to_string())?;
    let s = compute_stats(&lat).map_err(|e| format!("{}: {e}", file.display()))?;
    println!("samples {}", lat.len());
    for (k, v) in [
        ("min", s.min),
        ("p5", s.p5),
        ("p25", s.p25),
        ("median", s.median),
        ("p75", s.p75),
        ("p95", s.p95),
        ("p99", s.p99),
        ("max", s.max),
    ] {
        println!("{k:<7}{v} ns");
    }
    println!("mean   {:.1} ns", s.mean);
    println!("stddev {:.1} ns", s.stddev);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_RUNTIME),
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
