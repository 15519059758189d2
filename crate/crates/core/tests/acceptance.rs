//! Acceptance suite: one PASS/FAIL line per criterion and a summary.
//!
//! Run with `cargo test --test acceptance`. The process exits nonzero on a
//! failing criterion only when `ACCEPTANCE_STRICT=1` is set, so that a
//! plain `cargo test` still runs the remaining test targets. Monte Carlo
//! criteria use fixed seeds `0..n`, so the counts are reproducible.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use chansound::analysis::{pn_regions, ReportOptions, DEFAULT_GAMMA_DB, DEFAULT_MERGE_WIDTH_M};
use chansound::clustering::{select_k, DEFAULT_K_MAX};
use chansound::estimator::{build_frameset, cir_from_response, DatasetLabel, EstimatorConfig, FrameSet, Separator};
use chansound::pipeline::{self, OutputKind, SimulationConfig, TargetMode};
use chansound::rng;
use chansound::sequence::{SoundingConfig, SoundingPair};
use chansound::simulator::{
    apply_target, sample_channel, synthesize_rx, synthesize_frameset, AddedPath, Antenna, AntennaOverlay, Blockage,
    ChannelSpec, FirstDelay, MultipathChannel, Tap, TargetOverlay,
};
use chansound::subspace::{
    elbow_order, estimate_gains, freq_smooth, hermitian_eigenvalues, run_music, sample_covariance, MusicConfig,
    DEFAULT_ELBOW_TOLERANCE_DB,
};
use chansound::SPEED_OF_LIGHT;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn single_carrier(snr_db: Option<f64>, frames: usize) -> SoundingConfig {
    SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames,
        hw_averages: 1,
        snr_db,
        ..SoundingConfig::default()
    }
}

fn tap(cfg: &SoundingConfig, delay_samples: f64, gain: Complex64) -> Tap {
    Tap {
        delay_s: delay_samples / cfg.sample_rate_hz,
        gains: vec![gain; cfg.carriers_hz.len()],
    }
}

fn rel_err(est: &[Complex64], truth: &[Complex64]) -> f64 {
    let e: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let n: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    (e / n).sqrt()
}

fn estimate_noiseless(ch: &MultipathChannel, cfg: &SoundingConfig) -> (Vec<Complex64>, Vec<Complex64>) {
    let pair = SoundingPair::new(11, cfg).unwrap();
    let frames = synthesize_rx(ch, &pair, cfg, 0).unwrap();
    let est = EstimatorConfig {
        align: false,
        ..EstimatorConfig::default()
    };
    let sep = Separator::new(cfg, est.separation).unwrap();
    let e = build_frameset(&frames, &pair.x_a, cfg, &est, &sep, &DatasetLabel::default()).unwrap();
    (e.a.mean_row(), e.b.mean_row())
}

fn miso_round_trip() -> Outcome {
    let t0 = Instant::now();
    let cfg = single_carrier(None, 1);
    let c = Complex64::new;
    let a = vec![
        tap(&cfg, 0.0, c(1.0, 0.0)),
        tap(&cfg, 5.0, c(-0.4, 0.5)),
        tap(&cfg, 17.25, c(0.3, -0.2)),
    ];
    let b = vec![tap(&cfg, 2.0, c(0.0, 0.8)), tap(&cfg, 9.7, c(0.35, 0.35))];
    let both = MultipathChannel::new(cfg.carriers_hz.clone(), a.clone(), b.clone());
    let (ha, hb) = estimate_noiseless(&both, &cfg);
    let err = rel_err(&ha, &both.response(Antenna::A, 0, &cfg))
        .max(rel_err(&hb, &both.response(Antenna::B, 0, &cfg)));

    // cross-antenna leakage: energy recovered on the silent antenna
    let only_a = MultipathChannel::new(cfg.carriers_hz.clone(), a, vec![]);
    let only_b = MultipathChannel::new(cfg.carriers_hz.clone(), vec![], b);
    let energy = |x: &[Complex64]| x.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let (ha_a, hb_a) = estimate_noiseless(&only_a, &cfg);
    let (ha_b, hb_b) = estimate_noiseless(&only_b, &cfg);
    let leak = (energy(&hb_a) / energy(&ha_a)).max(energy(&ha_b) / energy(&hb_b));
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        err <= 1e-9 && leak <= 1e-10 && secs < 5.0,
        format!("relative error {err:.2e} (<= 1e-9), leakage {leak:.2e} (<= 1e-10), {secs:.2} s (< 5 s)"),
    )
}

fn rank_restoration() -> Outcome {
    let t0 = Instant::now();
    let cfg = single_carrier(None, 1);
    let c = Complex64::new;
    let ch = MultipathChannel::antenna_a_only(
        cfg.carriers_hz.clone(),
        vec![
            tap(&cfg, 0.0, c(1.0, 0.0)),
            tap(&cfg, 7.3, c(0.0, 0.8)),
            tap(&cfg, 19.0, c(-0.6, 0.2)),
        ],
    );
    let fs = FrameSet::new(DatasetLabel::default(), cfg.allocated, ch.response(Antenna::A, 0, &cfg)).unwrap();
    let raw = hermitian_eigenvalues(&sample_covariance(&fs).unwrap().matrix);
    let sm = hermitian_eigenvalues(&freq_smooth(&fs, 261).unwrap().matrix);
    let r2 = raw[1] / raw[0];
    let s3 = sm[2] / sm[0];
    let s4 = sm[3] / sm[0];
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        r2 < 1e-10 && s3 > 1e-6 && s4 < 1e-10 && secs < 10.0,
        format!(
            "unsmoothed l2/l1 {r2:.1e} (< 1e-10), smoothed l3/l1 {s3:.1e} (> 1e-6), l4/l1 {s4:.1e} (< 1e-10), {secs:.2} s (< 10 s)"
        ),
    )
}

fn order_selection() -> Outcome {
    let cfg = single_carrier(Some(30.0), 100);
    let spec = ChannelSpec {
        min_paths: 4,
        max_paths: 4,
        delay_spread_s: 40.0 / cfg.sample_rate_hz,
        min_spacing_s: 2.0 / cfg.sample_rate_hz,
        decay_db_per_sample: vec![],
        correlation: 1.0,
        first_delay: FirstDelay::SubSample,
    };
    let mut hist = BTreeMap::new();
    for seed in 0..100u64 {
        let ch = sample_channel(&spec, &cfg, seed).unwrap();
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), seed).unwrap();
        let ev = hermitian_eigenvalues(&freq_smooth(&fs, 261).unwrap().matrix);
        let order = elbow_order(&ev, 10, DEFAULT_ELBOW_TOLERANCE_DB).unwrap().order;
        *hist.entry(order).or_insert(0) += 1;
    }
    let hits = hist.get(&4).copied().unwrap_or(0);
    outcome(hits >= 95, format!("order 4 in {hits}/100 seeds (>= 95), estimates {hist:?}"))
}

fn local_maxima(p: &[f64], lo: usize, hi: usize) -> usize {
    (lo.max(1)..=hi.min(p.len() - 2))
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .count()
}

fn super_resolution() -> Outcome {
    let cfg = single_carrier(Some(30.0), 100);
    let mc = MusicConfig {
        order: Some(2),
        ..MusicConfig::default()
    };
    let (mut music_ok, mut cir_single) = (0, 0);
    for seed in 0..100u64 {
        let mut r = rng::stream(seed, 0xACC4);
        let t1 = 8.0 + r.random::<f64>();
        let t2 = t1 + 0.5;
        let g = |r: &mut rand_chacha::ChaCha8Rng| Complex64::from_polar(1.0, r.random::<f64>() * TAU);
        let ch = MultipathChannel::antenna_a_only(
            cfg.carriers_hz.clone(),
            vec![tap(&cfg, t1, g(&mut r)), tap(&cfg, t2, g(&mut r))],
        );
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), seed).unwrap();
        let res = run_music(&fs, &cfg, &mc).unwrap();
        let mut peaks: Vec<f64> = res.peaks_s.iter().map(|t| t * cfg.sample_rate_hz).collect();
        peaks.sort_by(f64::total_cmp);
        if peaks.len() == 2 && (peaks[0] - t1).abs() <= 0.1 && (peaks[1] - t2).abs() <= 0.1 {
            music_ok += 1;
        }
        let cir = cir_from_response(&fs.mean_row(), &cfg, 6.5e9);
        let pdp: Vec<f64> = cir.taps.iter().map(|t| t.norm_sqr()).collect();
        let lo = t1.floor() as usize - 1;
        let hi = t2.ceil() as usize + 1;
        if local_maxima(&pdp, lo, hi) == 1 {
            cir_single += 1;
        }
    }
    outcome(
        music_ok >= 90 && cir_single >= 90,
        format!("MUSIC resolves both within 0.1/B in {music_ok}/100 (>= 90), CIR-PDP single maximum in {cir_single}/100 (>= 90)"),
    )
}

fn gain_inversion() -> Outcome {
    let cfg = single_carrier(None, 1);
    let mut r = rng::seeded(5);
    let delays = [1.3, 6.0, 12.7];
    let gains: Vec<Complex64> = delays
        .iter()
        .map(|_| Complex64::from_polar(0.3 + r.random::<f64>(), r.random::<f64>() * TAU))
        .collect();
    let ch = MultipathChannel::antenna_a_only(
        cfg.carriers_hz.clone(),
        delays.iter().zip(&gains).map(|(&d, &g)| tap(&cfg, d, g)).collect(),
    );
    let fs = FrameSet::new(DatasetLabel::default(), cfg.allocated, ch.response(Antenna::A, 0, &cfg)).unwrap();
    let delays_s: Vec<f64> = delays.iter().map(|d| d / cfg.sample_rate_hz).collect();
    let fit = estimate_gains(&fs, &delays_s, &cfg).unwrap();
    let err = fit
        .gains
        .iter()
        .zip(&gains)
        .map(|(e, t)| (e - t).norm() / t.norm())
        .fold(0.0, f64::max);
    outcome(err <= 1e-6, format!("max relative gain error {err:.2e} (<= 1e-6)"))
}

fn clustering() -> Outcome {
    let mut ok = 0;
    for seed in 0..50u64 {
        let mut r = rng::stream(seed, 0xC1);
        let base = 20e-9 + r.random::<f64>() * 10e-9;
        let centres = [base, base + 5e-9, base + 10e-9];
        let noise = Normal::new(0.0, 0.2e-9).unwrap();
        let samples: Vec<f64> = (0..300).map(|i| centres[i % 3] + noise.sample(&mut r)).collect();
        let sel = select_k(&samples, DEFAULT_K_MAX, seed).unwrap();
        let b = &sel.best;
        if b.k == 3 && b.centroids.iter().zip(&centres).all(|(c, t)| (c - t).abs() <= 0.3e-9) {
            ok += 1;
        }
    }
    outcome(ok >= 48, format!("K=3 with centroids within 0.3 ns in {ok}/50 seeds (>= 48)"))
}

fn pn_mechanism() -> Outcome {
    let cfg = single_carrier(Some(30.0), 100);
    let offsets = [0.0, 6.2, 11.0, 24.3];
    let amps = [1.0, 0.7, 0.6, 0.5];
    let blocked = 2;
    let added_m = 4.7;
    let blocked_m = offsets[blocked] * SPEED_OF_LIGHT / cfg.sample_rate_hz;
    let mc = MusicConfig::default();
    let mut ok = 0;
    for seed in 0..100u64 {
        let mut r = rng::stream(seed, 0x9A);
        let f0 = r.random::<f64>();
        let taps = offsets
            .iter()
            .zip(amps)
            .map(|(&o, a)| tap(&cfg, f0 + o, Complex64::from_polar(a, r.random::<f64>() * TAU)))
            .collect();
        let ch = MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps);
        let overlay = TargetOverlay::on(
            Antenna::A,
            AntennaOverlay {
                added: vec![AddedPath {
                    delay_s: f0 / cfg.sample_rate_hz + added_m / SPEED_OF_LIGHT,
                    gains: vec![Complex64::from_polar(0.6, r.random::<f64>() * TAU)],
                }],
                blocked: vec![Blockage {
                    tap: blocked,
                    attenuation: vec![0.0],
                }],
            },
        );
        let with_ch = apply_target(&ch, &overlay).unwrap();
        let label = |target| DatasetLabel {
            carrier_hz: 6.5e9,
            target,
            ..DatasetLabel::default()
        };
        let without = synthesize_frameset(&ch, Antenna::A, 0, &cfg, label(false), 2 * seed).unwrap();
        let with = synthesize_frameset(&with_ch, Antenna::A, 0, &cfg, label(true), 2 * seed + 1).unwrap();
        let rw = run_music(&with, &cfg, &mc).unwrap();
        let ro = run_music(&without, &cfg, &mc).unwrap();
        let rep = pn_regions(&rw, &ro, DEFAULT_GAMMA_DB, DEFAULT_MERGE_WIDTH_M).unwrap();
        let p_hits = rep.p_regions.iter().filter(|g| g.covers(added_m, 0.3)).count();
        let n_hits = rep.n_regions.iter().filter(|g| g.covers(blocked_m, 0.3)).count();
        if p_hits == 1 && n_hits == 1 {
            ok += 1;
        }
    }
    outcome(
        ok >= 90,
        format!("one P-interval at 4.7 m and one N-interval at {blocked_m:.2} m (each +-0.3 m) in {ok}/100 seeds (>= 90)"),
    )
}

fn numerology() -> Outcome {
    let cfg = SoundingConfig::default();
    let bw = cfg.occupied_bandwidth_hz() / 1e6;
    let shape = cfg.fft_size == 1024 && cfg.allocated == 521 && cfg.frames == 100 && cfg.hw_averages == 100;
    outcome(
        (bw - 500.13).abs() <= 0.01 && shape,
        format!(
            "occupied bandwidth {bw:.4} MHz vs 500.13 +- 0.01 MHz (521*983.04/1024 = {:.4}); N={}, n_on={}, F={}, hw={}",
            521.0 * 983.04 / 1024.0,
            cfg.fft_size,
            cfg.allocated,
            cfg.frames,
            cfg.hw_averages
        ),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let cfg = SimulationConfig {
        output: OutputKind::RxFrames,
        ..SimulationConfig::default()
    };
    let mc = MusicConfig {
        frame_peaks: 3,
        ..MusicConfig::default()
    };
    let opts = ReportOptions::default();
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pipeline::run(&cfg, 42, TargetMode::Both, &mc, &opts, dir.path()))
            .unwrap();
        let files = files_under(dir.path());
        let peaks: Vec<Vec<f64>> = pipeline::load_music_results(&dir.path().join("music"))
            .unwrap()
            .into_iter()
            .map(|r| r.peaks_s)
            .collect();
        (files, peaks)
    };
    let (f1, p1) = run(1);
    let (f2, _) = run(1);
    let (_, p4) = run(4);
    let identical = f1 == f2;
    let same_peaks = p1 == p4;
    outcome(
        identical && same_peaks && !f1.is_empty(),
        format!(
            "{} output files byte-identical across runs: {identical}; peaks identical for 1 and 4 threads: {same_peaks}",
            f1.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("noiseless MISO round trip", miso_round_trip),
        ("rank restoration", rank_restoration),
        ("order selection", order_selection),
        ("super-resolution", super_resolution),
        ("gain inversion", gain_inversion),
        ("delay clustering", clustering),
        ("P/N mechanism", pn_mechanism),
        ("numerology", numerology),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        if !o.pass {
            failed.push((i + 1).to_string());
        }
        println!(
            "criterion {} {:<26} {}  {} [{:.1} s]",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed{}",
        criteria.len() - failed.len(),
        criteria.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failed.join(", "))
        }
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
