//! Builds the two-antenna QPSK sounding pair and checks the properties the
//! estimator relies on.

use chansound::sequence::{SoundingConfig, SoundingPair};

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig::default();
    let pair = SoundingPair::new(7, &cfg)?;
    println!(
        "N = {}, n_on = {}, B = {:.2} MHz, occupied {:.2} MHz",
        cfg.fft_size,
        cfg.allocated,
        cfg.sample_rate_hz / 1e6,
        cfg.occupied_bandwidth_hz() / 1e6
    );

    for k in -3..=3 {
        let a = pair.x_a.get(k).unwrap();
        let b = pair.x_b.get(k).unwrap();
        println!("k = {k:+}  X_a = {a:+.3}  X_b = {b:+.3}");
    }

    let ta = pair.x_a.to_time(cfg.fft_size)?;
    let tb = pair.x_b.to_time(cfg.fft_size)?;
    // X_b is X_a shifted by N/2 in time
    let shifted = ta.circular_shift(cfg.fft_size / 2);
    let diff: f64 = shifted
        .samples
        .iter()
        .zip(&tb.samples)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    println!("time energy {:.6}, normalized {:.6}", ta.energy(), ta.normalized().energy());
    println!("|x_a[n - N/2] - x_b[n]|^2 summed: {diff:.3e}");
    Ok(())
}
