//! Coherent multipath collapses the covariance to rank one; frequency
//! smoothing brings back one eigenvalue per path.

use num_complex::Complex64;

use chansound::estimator::{DatasetLabel, FrameSet};
use chansound::sequence::SoundingConfig;
use chansound::simulator::{Antenna, MultipathChannel, Tap};
use chansound::subspace::{default_subarray_len, freq_smooth, hermitian_eigenvalues, sample_covariance};

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig {
        carriers_hz: vec![8.75e9],
        ..SoundingConfig::default()
    };
    let taps = [(0.0, 1.0, 0.0), (7.3, 0.0, 0.8), (19.0, -0.6, 0.2)]
        .iter()
        .map(|&(d, re, im)| Tap {
            delay_s: d / cfg.sample_rate_hz,
            gains: vec![Complex64::new(re, im)],
        })
        .collect();
    let ch = MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps);
    let fs = FrameSet::new(DatasetLabel::default(), cfg.allocated, ch.response(Antenna::A, 0, &cfg))?;

    let raw = hermitian_eigenvalues(&sample_covariance(&fs)?.matrix);
    let ns = default_subarray_len(cfg.allocated);
    let sm = hermitian_eigenvalues(&freq_smooth(&fs, ns)?.matrix);
    println!("{:>3} {:>14} {:>14}", "i", "unsmoothed", format!("smoothed {ns}"));
    for i in 0..6 {
        println!("{:>3} {:>14.3e} {:>14.3e}", i + 1, raw[i] / raw[0], sm[i] / sm[0]);
    }
    Ok(())
}
