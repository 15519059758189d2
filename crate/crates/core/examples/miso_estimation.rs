//! Simulates received frames from both antennas and separates them again,
//! comparing plain time windowing with the projection separator.

use num_complex::Complex64;

use chansound::estimator::{build_frameset, DatasetLabel, EstimatorConfig, Separation, Separator};
use chansound::sequence::{SoundingConfig, SoundingPair};
use chansound::simulator::{synthesize_averaged_rx, Antenna, MultipathChannel, Tap};

fn tap(cfg: &SoundingConfig, samples: f64, re: f64, im: f64) -> Tap {
    Tap {
        delay_s: samples / cfg.sample_rate_hz,
        gains: vec![Complex64::new(re, im)],
    }
}

fn rel_err(est: &[Complex64], truth: &[Complex64]) -> f64 {
    let e: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let n: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    (e / n).sqrt()
}

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames: 20,
        hw_averages: 10,
        snr_db: Some(20.0),
        ..SoundingConfig::default()
    };
    let ch = MultipathChannel::new(
        cfg.carriers_hz.clone(),
        vec![tap(&cfg, 3.0, 1.0, 0.0), tap(&cfg, 8.4, -0.3, 0.5)],
        vec![tap(&cfg, 3.6, 0.0, 0.7), tap(&cfg, 21.0, 0.2, 0.2)],
    );
    let pair = SoundingPair::new(1, &cfg)?;
    let frames = synthesize_averaged_rx(&ch, &pair, &cfg, 99)?;

    for (name, method) in [
        ("window", Separation::Window),
        ("projection", Separation::default()),
    ] {
        let est = EstimatorConfig {
            separation: method,
            ..EstimatorConfig::default()
        };
        let sep = Separator::new(&cfg, method)?;
        let e = build_frameset(&frames, &pair.x_a, &cfg, &est, &sep, &DatasetLabel::default())?;
        // the estimate is aligned: compare against the truth moved by the same shift
        let shift_s = e.shift as f64 / cfg.sample_rate_hz;
        let moved = |ant: Antenna| {
            let taps: Vec<Tap> = ch
                .taps(ant)
                .iter()
                .map(|t| Tap {
                    delay_s: t.delay_s - shift_s,
                    gains: t.gains.clone(),
                })
                .collect();
            chansound::simulator::taps_response(&taps, 0, &cfg)
        };
        println!(
            "{name:>10}: shift {} bins, error a {:.2e}, b {:.2e}, leakage {:.2e}{}",
            e.shift,
            rel_err(&e.a.mean_row(), &moved(Antenna::A)),
            rel_err(&e.b.mean_row(), &moved(Antenna::B)),
            e.mean_leakage,
            if e.leakage_warning { " (warning)" } else { "" }
        );
    }
    Ok(())
}
