//! Elbow order estimates on random channels against the true path count.

use chansound::estimator::DatasetLabel;
use chansound::sequence::SoundingConfig;
use chansound::simulator::{sample_channel, synthesize_frameset, Antenna, ChannelSpec};
use chansound::subspace::{elbow_order, freq_smooth, hermitian_eigenvalues, DEFAULT_ELBOW_TOLERANCE_DB};

fn main() -> chansound::Result<()> {
    let cfg = SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames: 100,
        hw_averages: 1,
        snr_db: Some(30.0),
        ..SoundingConfig::default()
    };
    let spec = ChannelSpec {
        min_paths: 2,
        max_paths: 6,
        ..ChannelSpec::default()
    };
    let mut correct = 0;
    let runs = 10;
    for seed in 0..runs {
        let ch = sample_channel(&spec, &cfg, seed)?;
        let truth = ch.taps(Antenna::A).len();
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), seed)?;
        let ev = hermitian_eigenvalues(&freq_smooth(&fs, 261)?.matrix);
        let est = elbow_order(&ev, 10, DEFAULT_ELBOW_TOLERANCE_DB)?;
        let db: Vec<String> = ev[..8]
            .iter()
            .map(|l| format!("{:6.1}", 10.0 * (l / ev[0]).log10()))
            .collect();
        println!("seed {seed}: paths {truth}, elbow {}  eigenvalues dB [{}]", est.order, db.join(" "));
        if est.order == truth {
            correct += 1;
        }
    }
    println!("{correct}/{runs} correct");
    Ok(())
}
