//! Per-frame MUSIC peaks relative to the first arrival, clustered into
//! path tracks with the silhouette-selected K.

use num_complex::Complex64;

use chansound::clustering::{relative_delays, select_k};
use chansound::estimator::DatasetLabel;
use chansound::sequence::SoundingConfig;
use chansound::simulator::{synthesize_frameset, Antenna, MultipathChannel, Tap};
use chansound::subspace::{run_music, MusicConfig};
use chansound::SPEED_OF_LIGHT;

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames: 30,
        hw_averages: 1,
        snr_db: Some(25.0),
        ..SoundingConfig::default()
    };
    let taps = [(0.4, 1.0), (5.0, 0.8), (12.5, 0.6)]
        .iter()
        .enumerate()
        .map(|(i, &(d, a))| Tap {
            delay_s: d / cfg.sample_rate_hz,
            gains: vec![Complex64::from_polar(a, i as f64)],
        })
        .collect();
    let ch = MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps);
    let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 11)?;
    let res = run_music(
        &fs,
        &cfg,
        &MusicConfig {
            frame_peaks: 30,
            ..MusicConfig::default()
        },
    )?;

    let rel = relative_delays(&res.frame_peaks_s);
    println!("{} relative delays from {} frames", rel.samples.len(), res.frame_peaks_s.len());
    let sel = select_k(&rel.samples, 6, 0)?;
    for s in &sel.scores {
        println!("K = {}: silhouette {:.3}, WCSS {:.3e}", s.k, s.mean_silhouette, s.wcss);
    }
    let cents: Vec<String> = sel
        .best
        .centroids
        .iter()
        .map(|c| format!("{:.3}", c * SPEED_OF_LIGHT))
        .collect();
    println!("chosen K = {}, centroids [{}] m", sel.best.k, cents.join(", "));
    Ok(())
}
