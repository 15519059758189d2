//! A target adds a reflection at 4.7 m and blocks one path; comparing the
//! MUSIC spectra with and without it yields P- and N-regions.

use num_complex::Complex64;

use chansound::analysis::{pn_regions, DEFAULT_GAMMA_DB, DEFAULT_MERGE_WIDTH_M};
use chansound::estimator::DatasetLabel;
use chansound::sequence::SoundingConfig;
use chansound::simulator::{
    apply_target, synthesize_frameset, AddedPath, Antenna, AntennaOverlay, Blockage, MultipathChannel, Tap,
    TargetOverlay,
};
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
    let sample_m = SPEED_OF_LIGHT / cfg.sample_rate_hz;
    let taps = [(0.3, 1.0, 0.0), (6.5, 0.7, 1.0), (11.3, 0.6, 2.0), (24.6, 0.5, 3.0)]
        .iter()
        .map(|&(d, a, ph)| Tap {
            delay_s: d / cfg.sample_rate_hz,
            gains: vec![Complex64::from_polar(a, ph)],
        })
        .collect();
    let ch = MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps);
    let overlay = TargetOverlay::on(
        Antenna::A,
        AntennaOverlay {
            added: vec![AddedPath {
                delay_s: 0.3 / cfg.sample_rate_hz + 4.7 / SPEED_OF_LIGHT,
                gains: vec![Complex64::from_polar(0.6, 0.5)],
            }],
            blocked: vec![Blockage {
                tap: 2,
                attenuation: vec![0.0],
            }],
        },
    );
    let with_ch = apply_target(&ch, &overlay)?;

    let mc = MusicConfig::default();
    let label = |target| DatasetLabel {
        carrier_hz: 6.5e9,
        target,
        ..DatasetLabel::default()
    };
    let without = run_music(&synthesize_frameset(&ch, Antenna::A, 0, &cfg, label(false), 1)?, &cfg, &mc)?;
    let with = run_music(&synthesize_frameset(&with_ch, Antenna::A, 0, &cfg, label(true), 2)?, &cfg, &mc)?;
    println!("order without target {}, with target {}", without.order, with.order);

    let rep = pn_regions(&with, &without, DEFAULT_GAMMA_DB, DEFAULT_MERGE_WIDTH_M)?;
    println!("blocked path at {:.2} m, new path at 4.70 m", 11.0 * sample_m);
    for (kind, list) in [("P", &rep.p_regions), ("N", &rep.n_regions)] {
        for g in list {
            println!("{kind}: {:.2} .. {:.2} m, {:+.1} dB", g.start_m, g.end_m, g.delta_db);
        }
    }
    Ok(())
}
