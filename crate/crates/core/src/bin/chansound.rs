use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chansound::analysis::{Pooling, ReportOptions, DEFAULT_GAMMA_DB, DEFAULT_MERGE_WIDTH_M};
use chansound::clustering::DEFAULT_K_MAX;
use chansound::pipeline::{self, ClusterOptions, SimulationConfig, TargetMode};
use chansound::subspace::MusicConfig;
use chansound::Result;

#[derive(Parser)]
#[command(name = "chansound", version, about = "Multi-band channel sounding and multipath analysis")]
struct Cli {
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pool {
    CarrierTarget,
    Dataset,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets, ground truth and the resolved config.
    Simulate {
        /// JSON simulation config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "both")]
        target: Target,
    },
    /// Received frames to per-antenna frame sets.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MUSIC delay spectrum, order, peaks and gains per dataset.
    Music {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Subarray length, default ceil(n_on/2).
        #[arg(long)]
        nsub: Option<usize>,
        #[arg(long, default_value_t = 10)]
        lmax: usize,
        #[arg(long, default_value_t = 16)]
        grid_oversample: usize,
        /// Fixed model order instead of the elbow estimate.
        #[arg(long)]
        order: Option<usize>,
        /// Leading frames that also get single-frame peaks for clustering.
        #[arg(long, default_value_t = 20)]
        frame_peaks: usize,
    },
    /// K-means on per-frame relative delays.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory, default the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        kmax: usize,
        #[arg(long, value_enum, default_value = "carrier-target")]
        pooling: Pool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// JSON and CSV bundle of histograms, PDPs, regions and clusters.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAMMA_DB)]
        gamma: f64,
        #[arg(long, default_value_t = DEFAULT_MERGE_WIDTH_M)]
        merge_width: f64,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        kmax: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn pooling(p: Pool) -> Pooling {
    match p {
        Pool::CarrierTarget => Pooling::CarrierTarget,
        Pool::Dataset => Pooling::Dataset,
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out,
            seed,
            target,
        } => {
            let cfg = match config {
                Some(p) => SimulationConfig::load(&p)?,
                None => SimulationConfig::default(),
            };
            let mode = match target {
                Target::On => TargetMode::On,
                Target::Off => TargetMode::Off,
                Target::Both => TargetMode::Both,
            };
            let paths = pipeline::simulate(&cfg, &out, seed, mode)?;
            println!("{} datasets in {}", paths.len(), out.display());
        }
        Command::Estimate { input, out } => {
            let est = pipeline::estimator_config_in(&input)?;
            let sums = pipeline::estimate(&input, &out, &est)?;
            for s in &sums {
                println!(
                    "{}: shift {}, leakage {:.2e}{}",
                    s.source,
                    s.shift,
                    s.mean_leakage,
                    if s.leakage_warning { " (warning)" } else { "" }
                );
            }
        }
        Command::Music {
            input,
            out,
            nsub,
            lmax,
            grid_oversample,
            order,
            frame_peaks,
        } => {
            let mc = MusicConfig {
                subarray_len: nsub,
                l_max: lmax,
                grid_oversample,
                order,
                frame_peaks,
                ..MusicConfig::default()
            };
            for r in pipeline::music(&input, &out, &mc)? {
                let peaks: Vec<String> = r
                    .peaks_s
                    .iter()
                    .map(|t| format!("{:.3}", t * chansound::SPEED_OF_LIGHT))
                    .collect();
                println!("{}: order {}, peaks [{}] m", r.label.id(), r.order, peaks.join(", "));
            }
        }
        Command::Cluster {
            input,
            out,
            kmax,
            pooling: pool,
            seed,
        } => {
            let out = out.unwrap_or_else(|| input.clone());
            let opts = ClusterOptions {
                k_max: kmax,
                pooling: pooling(pool),
                seed,
            };
            for r in pipeline::cluster(&input, &out, &opts)? {
                let cents: Vec<String> = r.centroids_m().iter().map(|c| format!("{c:.3}")).collect();
                println!(
                    "{:.0} MHz target={} {}: {} samples, centroids [{}] m",
                    r.carrier_hz / 1e6,
                    r.target,
                    r.dataset.as_deref().unwrap_or("pooled"),
                    r.samples_s.len(),
                    cents.join(", ")
                );
            }
        }
        Command::Report {
            input,
            out,
            gamma,
            merge_width,
            kmax,
            seed,
        } => {
            let opts = ReportOptions {
                gamma_db: gamma,
                merge_width_m: merge_width,
                k_max: kmax,
                seed,
                ..ReportOptions::default()
            };
            let b = pipeline::report(&input, &out, &opts)?;
            println!(
                "{} histograms, {} PDP pairs, {} region reports in {}",
                b.histograms.len(),
                b.pdp_pairs.len(),
                b.regions.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors count as input errors; help and version succeed
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
