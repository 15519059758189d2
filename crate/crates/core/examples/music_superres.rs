//! Two paths half a sample apart: one blob in the CIR, two MUSIC peaks.

use num_complex::Complex64;

use chansound::analysis::{cir_pdp, music_pdp};
use chansound::estimator::{cir_from_response, DatasetLabel};
use chansound::sequence::SoundingConfig;
use chansound::simulator::{synthesize_frameset, Antenna, MultipathChannel, Tap};
use chansound::subspace::{run_music, MusicConfig};
use chansound::SPEED_OF_LIGHT;

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames: 100,
        hw_averages: 1,
        snr_db: Some(30.0),
        ..SoundingConfig::default()
    };
    let (t1, t2) = (10.2, 10.7);
    let taps = vec![
        Tap {
            delay_s: t1 / cfg.sample_rate_hz,
            gains: vec![Complex64::new(1.0, 0.0)],
        },
        Tap {
            delay_s: t2 / cfg.sample_rate_hz,
            gains: vec![Complex64::new(0.0, 1.0)],
        },
    ];
    let ch = MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps);
    let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 3)?;
    let res = run_music(
        &fs,
        &cfg,
        &MusicConfig {
            order: Some(2),
            ..MusicConfig::default()
        },
    )?;

    let bin_m = SPEED_OF_LIGHT / cfg.sample_rate_hz;
    println!("true paths at {:.3} m and {:.3} m", t1 * bin_m, t2 * bin_m);
    for p in &res.peaks_s {
        println!("MUSIC peak at {:.3} m", p * SPEED_OF_LIGHT);
    }

    let cir = cir_pdp(&cir_from_response(&fs.mean_row(), &cfg, 6.5e9), cfg.sample_rate_hz)?;
    let music = music_pdp(&res);
    println!("\n{:>8} {:>9}", "d (m)", "CIR dB");
    for n in 8..14 {
        println!("{:>8.3} {:>9.2}", cir.distance_m[n], cir.value_db[n]);
    }
    println!("\n{:>8} {:>9}", "d (m)", "MUSIC dB");
    let q = res.grid.len / cfg.window_len();
    for i in (9 * q..12 * q).step_by(q / 4) {
        println!("{:>8.3} {:>9.2}", music.distance_m[i], music.value_db[i]);
    }
    Ok(())
}
