//! Full workflow on both carriers and two placements: received frames,
//! estimation, MUSIC, clustering and the report bundle.
//!
//! `cargo run --release --example multiband_pipeline [out_dir]`

use std::path::PathBuf;

use chansound::analysis::ReportOptions;
use chansound::pipeline::{self, OutputKind, ScenarioSpec, SimulationConfig, TargetMode};
use chansound::sequence::SoundingConfig;
use chansound::subspace::MusicConfig;

fn main() -> chansound::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("chansound-multiband"));
    let cfg = SimulationConfig {
        sounding: SoundingConfig {
            frames: 40,
            hw_averages: 20,
            ..SoundingConfig::default()
        },
        scenarios: vec![
            ScenarioSpec {
                placement: "A".into(),
                orientation: "alpha".into(),
            },
            ScenarioSpec {
                placement: "D".into(),
                orientation: "beta".into(),
            },
        ],
        output: OutputKind::RxFrames,
        ..SimulationConfig::default()
    };
    let mc = MusicConfig {
        frame_peaks: 5,
        ..MusicConfig::default()
    };
    let bundle = pipeline::run(&cfg, 2024, TargetMode::Both, &mc, &ReportOptions::default(), &out)?;

    for h in &bundle.histograms {
        println!(
            "{:.2} GHz {:<6} target={:<5} orders {:?} mode {}",
            h.carrier_hz / 1e9,
            h.orientation,
            h.target,
            h.counts,
            h.mode
        );
    }
    for r in &bundle.regions {
        println!(
            "{:.2} GHz antenna {} {}/{}: {} P, {} N regions",
            r.carrier_hz / 1e9,
            r.antenna.label(),
            r.placement,
            r.orientation,
            r.p_regions.len(),
            r.n_regions.len()
        );
    }
    for c in &bundle.clusters {
        let cents: Vec<String> = c.centroids_m().iter().map(|m| format!("{m:.2}")).collect();
        println!("{:.2} GHz target={}: tracks at [{}] m", c.carrier_hz / 1e9, c.target, cents.join(", "));
    }
    println!("bundle written to {}", out.join("report").display());
    Ok(())
}
