//! Multipath channel synthesis and noisy received frames.
//!
//! Delays come from geometry and are shared by every carrier; complex gains
//! are drawn per carrier with a configurable cross-carrier correlation `ρ`:
//! `g = amp · (ρ·s + √(1−ρ²)·e)` with `s` shared across carriers and `e`
//! independent, both circular complex Gaussian with unit variance.
//!
//! Frames are synthesized in the frequency domain on the allocated carriers,
//! `Y[k] = X_a[k] H_a[k] + X_b[k] H_b[k] + W[k]` with
//! `H[k] = Σ α e^{-j2π k τ B / N}`, so fractional delays are exact.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::Dft;
use crate::error::{Error, Result};
use crate::estimator::{DatasetLabel, FrameSet};
use crate::rng;
use crate::sequence::{SoundingConfig, SoundingPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Antenna {
    A,
    B,
}

impl Antenna {
    pub fn label(self) -> &'static str {
        match self {
            Antenna::A => "a",
            Antenna::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_s: f64,
    /// One gain per carrier, in the order of [`MultipathChannel::carriers_hz`].
    pub gains: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathChannel {
    pub carriers_hz: Vec<f64>,
    pub a: Vec<Tap>,
    pub b: Vec<Tap>,
}

fn cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Allocated-carrier frequency response of a tap list.
pub fn taps_response(taps: &[Tap], carrier_idx: usize, cfg: &SoundingConfig) -> Vec<Complex64> {
    let n = cfg.fft_size as f64;
    cfg.subcarriers()
        .map(|k| {
            taps.iter()
                .map(|t| {
                    let d = t.delay_s * cfg.sample_rate_hz;
                    let ph = -2.0 * std::f64::consts::PI * k as f64 * d / n;
                    t.gains[carrier_idx] * Complex64::from_polar(1.0, ph)
                })
                .sum()
        })
        .collect()
}

impl MultipathChannel {
    pub fn new(carriers_hz: Vec<f64>, a: Vec<Tap>, b: Vec<Tap>) -> Self {
        MultipathChannel { carriers_hz, a, b }
    }

    /// Single-antenna channel with antenna `b` silent.
    pub fn antenna_a_only(carriers_hz: Vec<f64>, a: Vec<Tap>) -> Self {
        MultipathChannel {
            carriers_hz,
            a,
            b: Vec::new(),
        }
    }

    pub fn taps(&self, ant: Antenna) -> &[Tap] {
        match ant {
            Antenna::A => &self.a,
            Antenna::B => &self.b,
        }
    }

    fn taps_mut(&mut self, ant: Antenna) -> &mut Vec<Tap> {
        match ant {
            Antenna::A => &mut self.a,
            Antenna::B => &mut self.b,
        }
    }

    pub fn response(&self, ant: Antenna, carrier_idx: usize, cfg: &SoundingConfig) -> Vec<Complex64> {
        taps_response(self.taps(ant), carrier_idx, cfg)
    }

    /// Delay bounds needed by the estimator: every delay in `[0, (N/4)/B)`
    /// and one gain per carrier.
    pub fn validate_window(&self, cfg: &SoundingConfig) -> Result<()> {
        let max = cfg.max_delay_s();
        for ant in [Antenna::A, Antenna::B] {
            for t in self.taps(ant) {
                if !(t.delay_s >= 0.0 && t.delay_s < max) {
                    return Err(Error::config(format!(
                        "antenna {} delay {:e} s outside [0, {:e}) s",
                        ant.label(),
                        t.delay_s,
                        max
                    )));
                }
                if t.gains.len() != self.carriers_hz.len() {
                    return Err(Error::config(format!(
                        "tap has {} gains for {} carriers",
                        t.gains.len(),
                        self.carriers_hz.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full invariant check: window bounds, ascending delays, first delay
    /// below one sample.
    pub fn validate(&self, cfg: &SoundingConfig) -> Result<()> {
        self.validate_window(cfg)?;
        for ant in [Antenna::A, Antenna::B] {
            let taps = self.taps(ant);
            if taps.windows(2).any(|w| w[1].delay_s < w[0].delay_s) {
                return Err(Error::config(format!(
                    "antenna {} delays not sorted",
                    ant.label()
                )));
            }
            if let Some(first) = taps.first() {
                if first.delay_s >= cfg.sample_period_s() {
                    return Err(Error::config(format!(
                        "antenna {} first delay {:e} s is not below 1/B",
                        ant.label(),
                        first.delay_s
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FirstDelay {
    /// First path exactly at zero delay.
    #[default]
    Zero,
    /// First path uniform in `[0, 1/B)`.
    SubSample,
}

/// Parameters of the random channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub min_paths: usize,
    pub max_paths: usize,
    /// Excess delay of the last path is at most this.
    pub delay_spread_s: f64,
    /// Minimum separation between consecutive delays.
    #[serde(default)]
    pub min_spacing_s: f64,
    /// Power decay in dB per sample of excess delay, one value per carrier
    /// or a single value applied to all.
    #[serde(default)]
    pub decay_db_per_sample: Vec<f64>,
    /// Cross-carrier gain correlation `ρ ∈ [0, 1]`.
    pub correlation: f64,
    #[serde(default)]
    pub first_delay: FirstDelay,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            min_paths: 3,
            max_paths: 5,
            delay_spread_s: 40.0 / 983.04e6,
            min_spacing_s: 2.0 / 983.04e6,
            decay_db_per_sample: vec![0.25],
            correlation: 0.7,
            first_delay: FirstDelay::SubSample,
        }
    }
}

impl ChannelSpec {
    fn decay_for(&self, carrier_idx: usize) -> f64 {
        match self.decay_db_per_sample.len() {
            0 => 0.0,
            1 => self.decay_db_per_sample[0],
            _ => self.decay_db_per_sample[carrier_idx],
        }
    }

    pub fn validate(&self, cfg: &SoundingConfig) -> Result<()> {
        if self.min_paths == 0 || self.min_paths > self.max_paths {
            return Err(Error::config(format!(
                "path count range {}..={} is empty or includes zero",
                self.min_paths, self.max_paths
            )));
        }
        let first_max = match self.first_delay {
            FirstDelay::Zero => 0.0,
            FirstDelay::SubSample => cfg.sample_period_s(),
        };
        if !(self.delay_spread_s >= 0.0) || self.delay_spread_s + first_max >= cfg.max_delay_s() {
            return Err(Error::config(format!(
                "delay spread {:e} s does not fit the {:e} s estimation window",
                self.delay_spread_s,
                cfg.max_delay_s()
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::config("correlation must lie in [0, 1]"));
        }
        let n = self.decay_db_per_sample.len();
        if n > 1 && n != cfg.carriers_hz.len() {
            return Err(Error::config(format!(
                "{} decay values for {} carriers",
                n,
                cfg.carriers_hz.len()
            )));
        }
        if self.min_spacing_s < 0.0
            || (self.max_paths > 1
                && self.min_spacing_s * (self.max_paths - 1) as f64 > self.delay_spread_s)
        {
            return Err(Error::config(
                "minimum spacing cannot be met within the delay spread",
            ));
        }
        Ok(())
    }

    fn sample_taps(&self, cfg: &SoundingConfig, rng: &mut impl Rng) -> Result<Vec<Tap>> {
        let count = rng.random_range(self.min_paths..=self.max_paths);
        let first = match self.first_delay {
            FirstDelay::Zero => 0.0,
            FirstDelay::SubSample => rng.random::<f64>() * cfg.sample_period_s(),
        };
        let mut delays = vec![first];
        let mut attempts = 0;
        while delays.len() < count {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::config(
                    "could not place paths with the requested minimum spacing",
                ));
            }
            let d = first + rng.random::<f64>() * self.delay_spread_s;
            if delays
                .iter()
                .all(|&e| (e - d).abs() >= self.min_spacing_s && e != d)
            {
                delays.push(d);
            }
        }
        delays.sort_by(f64::total_cmp);

        let rho = self.correlation;
        let indep = (1.0 - rho * rho).max(0.0).sqrt();
        let taps = delays
            .into_iter()
            .map(|delay_s| {
                let shared = cn(rng);
                let excess = (delay_s - first) * cfg.sample_rate_hz;
                let gains = (0..cfg.carriers_hz.len())
                    .map(|c| {
                        let amp = 10f64.powf(-self.decay_for(c) * excess / 20.0);
                        amp * (shared * rho + cn(rng) * indep)
                    })
                    .collect();
                Tap { delay_s, gains }
            })
            .collect();
        Ok(taps)
    }
}

/// Draws a random two-antenna channel; antennas `a` and `b` use
/// independent streams of `seed`.
pub fn sample_channel(spec: &ChannelSpec, cfg: &SoundingConfig, seed: u64) -> Result<MultipathChannel> {
    cfg.validate()?;
    spec.validate(cfg)?;
    let a = spec.sample_taps(cfg, &mut rng::stream(seed, 1))?;
    let b = spec.sample_taps(cfg, &mut rng::stream(seed, 2))?;
    Ok(MultipathChannel::new(cfg.carriers_hz.clone(), a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedPath {
    pub delay_s: f64,
    pub gains: Vec<Complex64>,
}

/// Amplitude scaling of an existing tap, one factor in `[0, 1]` per carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blockage {
    pub tap: usize,
    pub attenuation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AntennaOverlay {
    #[serde(default)]
    pub added: Vec<AddedPath>,
    #[serde(default)]
    pub blocked: Vec<Blockage>,
}

impl AntennaOverlay {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.blocked.is_empty()
    }
}

/// Changes the target introduces: new reflections and blocked paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetOverlay {
    #[serde(default)]
    pub a: AntennaOverlay,
    #[serde(default)]
    pub b: AntennaOverlay,
}

impl TargetOverlay {
    pub fn on(ant: Antenna, overlay: AntennaOverlay) -> Self {
        let mut t = TargetOverlay::default();
        match ant {
            Antenna::A => t.a = overlay,
            Antenna::B => t.b = overlay,
        }
        t
    }

    pub fn get(&self, ant: Antenna) -> &AntennaOverlay {
        match ant {
            Antenna::A => &self.a,
            Antenna::B => &self.b,
        }
    }
}

fn check_overlay(ch: &MultipathChannel, ant: Antenna, ov: &AntennaOverlay) -> Result<()> {
    let taps = ch.taps(ant);
    let nc = ch.carriers_hz.len();
    for b in &ov.blocked {
        if b.tap >= taps.len() {
            return Err(Error::input(format!(
                "blocked tap {} out of range for antenna {} with {} taps",
                b.tap,
                ant.label(),
                taps.len()
            )));
        }
        if b.attenuation.len() != nc || b.attenuation.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::input(
                "attenuation needs one factor in [0, 1] per carrier",
            ));
        }
    }
    for p in &ov.added {
        if p.gains.len() != nc {
            return Err(Error::input("added path needs one gain per carrier"));
        }
        if !(p.delay_s >= 0.0 && p.delay_s.is_finite()) {
            return Err(Error::input("added path delay must be finite and >= 0"));
        }
    }
    Ok(())
}

/// Returns a new channel with blocked taps scaled and added paths merged in
/// delay order. The input channel is left untouched.
pub fn apply_target(ch: &MultipathChannel, overlay: &TargetOverlay) -> Result<MultipathChannel> {
    let mut out = ch.clone();
    for ant in [Antenna::A, Antenna::B] {
        let ov = overlay.get(ant);
        check_overlay(ch, ant, ov)?;
        let taps = out.taps_mut(ant);
        for b in &ov.blocked {
            for (g, f) in taps[b.tap].gains.iter_mut().zip(&b.attenuation) {
                *g *= *f;
            }
        }
        taps.extend(ov.added.iter().map(|p| Tap {
            delay_s: p.delay_s,
            gains: p.gains.clone(),
        }));
        // stable: originals stay ahead of added paths at equal delay
        taps.sort_by(|x, y| x.delay_s.total_cmp(&y.delay_s));
    }
    Ok(out)
}

/// Inverse of [`apply_target`] for overlays whose attenuation factors are
/// all nonzero.
pub fn remove_target(ch: &MultipathChannel, overlay: &TargetOverlay) -> Result<MultipathChannel> {
    let mut out = ch.clone();
    for ant in [Antenna::A, Antenna::B] {
        let ov = overlay.get(ant);
        let taps = out.taps_mut(ant);
        for p in ov.added.iter().rev() {
            let pos = taps
                .iter()
                .rposition(|t| t.delay_s == p.delay_s && t.gains == p.gains)
                .ok_or_else(|| Error::input("added path not present in channel"))?;
            taps.remove(pos);
        }
        for b in &ov.blocked {
            let tap = taps
                .get_mut(b.tap)
                .ok_or_else(|| Error::input("blocked tap out of range"))?;
            for (g, f) in tap.gains.iter_mut().zip(&b.attenuation) {
                if *f == 0.0 {
                    return Err(Error::input("fully blocked tap cannot be restored"));
                }
                *g /= *f;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    /// One `N`-sample received window.
    pub samples: Vec<Complex64>,
    pub carrier_hz: f64,
    /// Effective SNR of this frame; `None` when noiseless.
    pub snr_db: Option<f64>,
    /// Noise variance per allocated subcarrier in the frequency domain.
    pub noise_power: f64,
}

impl RxFrame {
    pub fn spectrum(&self) -> Vec<Complex64> {
        Dft::new(self.samples.len()).forward(&self.samples)
    }
}

/// Noiseless received spectrum on the allocated carriers.
pub fn received_clean(
    ch: &MultipathChannel,
    pair: &SoundingPair,
    carrier_idx: usize,
    cfg: &SoundingConfig,
) -> Vec<Complex64> {
    let ha = ch.response(Antenna::A, carrier_idx, cfg);
    let hb = ch.response(Antenna::B, carrier_idx, cfg);
    pair.x_a
        .values()
        .iter()
        .zip(pair.x_b.values())
        .zip(ha.iter().zip(&hb))
        .map(|((xa, xb), (a, b))| xa * a + xb * b)
        .collect()
}

/// Noise variance per subcarrier for a given signal power. A silent channel
/// is referenced to unit power.
pub fn noise_power_for(signal_power: f64, snr_db: Option<f64>) -> f64 {
    match snr_db {
        None => 0.0,
        Some(snr) => {
            let reference = if signal_power > 0.0 { signal_power } else { 1.0 };
            reference / 10f64.powf(snr / 10.0)
        }
    }
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

struct FrameSynth<'a> {
    cfg: &'a SoundingConfig,
    dft: Dft,
    clean: Vec<Vec<Complex64>>,
    sigma2: Vec<f64>,
    seed: u64,
}

impl<'a> FrameSynth<'a> {
    fn new(ch: &MultipathChannel, pair: &SoundingPair, cfg: &'a SoundingConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        ch.validate_window(cfg)?;
        if ch.carriers_hz != cfg.carriers_hz {
            return Err(Error::config("channel carriers differ from the sounding config"));
        }
        if pair.x_a.len() != cfg.allocated {
            return Err(Error::config("sounding pair length differs from allocation"));
        }
        let clean: Vec<_> = (0..cfg.carriers_hz.len())
            .map(|c| received_clean(ch, pair, c, cfg))
            .collect();
        let sigma2 = clean
            .iter()
            .map(|y| noise_power_for(mean_power(y), cfg.snr_db))
            .collect();
        Ok(FrameSynth {
            cfg,
            dft: Dft::new(cfg.fft_size),
            clean,
            sigma2,
            seed,
        })
    }

    /// Allocated-carrier spectrum of raw window `window` on carrier `c`.
    fn window_spectrum(&self, c: usize, window: usize) -> Vec<Complex64> {
        let s2 = self.sigma2[c];
        if s2 == 0.0 {
            return self.clean[c].clone();
        }
        let sd = s2.sqrt();
        let mut rng = rng::stream(self.seed, rng::stream_id(&[c as u64, window as u64]));
        self.clean[c].iter().map(|y| y + cn(&mut rng) * sd).collect()
    }

    fn to_frame(&self, c: usize, alloc: &[Complex64], averaged: usize) -> RxFrame {
        let mut grid = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        for (k, v) in self.cfg.subcarriers().zip(alloc) {
            grid[self.cfg.bin(k)] = *v;
        }
        self.dft.inverse_in_place(&mut grid);
        RxFrame {
            samples: grid,
            carrier_hz: self.cfg.carriers_hz[c],
            snr_db: self.cfg.snr_db.map(|s| s + 10.0 * (averaged as f64).log10()),
            noise_power: self.sigma2[c] / averaged as f64,
        }
    }
}

/// Raw received windows: `cfg.frames` per carrier, carrier-major. Window `w`
/// of carrier `c` draws its noise from stream `(c, w)` of `seed`.
/// `cfg.hw_averages` is not applied here; see [`hw_average`].
pub fn synthesize_rx(
    ch: &MultipathChannel,
    pair: &SoundingPair,
    cfg: &SoundingConfig,
    seed: u64,
) -> Result<Vec<RxFrame>> {
    let synth = FrameSynth::new(ch, pair, cfg, seed)?;
    let mut out = Vec::with_capacity(cfg.frames * cfg.carriers_hz.len());
    for c in 0..cfg.carriers_hz.len() {
        for w in 0..cfg.frames {
            let y = synth.window_spectrum(c, w);
            out.push(synth.to_frame(c, &y, 1));
        }
    }
    Ok(out)
}

/// `cfg.frames` retained frames per carrier, each the coherent mean of
/// `cfg.hw_averages` raw windows. Equivalent to running [`hw_average`] on
/// [`synthesize_rx`] with `frames * hw_averages` windows, without holding
/// the raw windows in memory.
pub fn synthesize_averaged_rx(
    ch: &MultipathChannel,
    pair: &SoundingPair,
    cfg: &SoundingConfig,
    seed: u64,
) -> Result<Vec<RxFrame>> {
    let synth = FrameSynth::new(ch, pair, cfg, seed)?;
    let m = cfg.hw_averages;
    let mut out = Vec::with_capacity(cfg.frames * cfg.carriers_hz.len());
    for c in 0..cfg.carriers_hz.len() {
        for f in 0..cfg.frames {
            let mut acc = vec![Complex64::new(0.0, 0.0); cfg.allocated];
            for w in 0..m {
                let y = synth.window_spectrum(c, f * m + w);
                acc.iter_mut().zip(&y).for_each(|(a, v)| *a += v);
            }
            let scale = 1.0 / m as f64;
            acc.iter_mut().for_each(|a| *a *= scale);
            out.push(synth.to_frame(c, &acc, m));
        }
    }
    Ok(out)
}

/// Coherent mean of each run of `m` consecutive frames.
pub fn hw_average(frames: &[RxFrame], m: usize) -> Result<Vec<RxFrame>> {
    if m == 0 {
        return Err(Error::input("averaging factor must be >= 1"));
    }
    if frames.len() % m != 0 {
        return Err(Error::input(format!(
            "{} frames cannot be split into groups of {}",
            frames.len(),
            m
        )));
    }
    frames
        .chunks(m)
        .map(|group| {
            let first = &group[0];
            if group.iter().any(|f| {
                f.carrier_hz != first.carrier_hz || f.samples.len() != first.samples.len()
            }) {
                return Err(Error::input("averaging group mixes carriers or lengths"));
            }
            if m == 1 {
                return Ok(first.clone());
            }
            let mut acc = vec![Complex64::new(0.0, 0.0); first.samples.len()];
            for f in group {
                acc.iter_mut().zip(&f.samples).for_each(|(a, v)| *a += v);
            }
            let scale = 1.0 / m as f64;
            acc.iter_mut().for_each(|a| *a *= scale);
            Ok(RxFrame {
                samples: acc,
                carrier_hz: first.carrier_hz,
                snr_db: first.snr_db.map(|s| s + 10.0 * (m as f64).log10()),
                noise_power: first.noise_power / m as f64,
            })
        })
        .collect()
}

/// Skips the received-signal stage and produces per-antenna channel
/// estimates directly: each row is the true allocated response plus white
/// noise at `cfg.snr_db` (relative to that antenna's mean response power),
/// reduced by the `cfg.hw_averages` coherent averages.
pub fn synthesize_frameset(
    ch: &MultipathChannel,
    ant: Antenna,
    carrier_idx: usize,
    cfg: &SoundingConfig,
    label: DatasetLabel,
    seed: u64,
) -> Result<FrameSet> {
    cfg.validate()?;
    ch.validate_window(cfg)?;
    if carrier_idx >= ch.carriers_hz.len() {
        return Err(Error::config("carrier index out of range"));
    }
    let h = ch.response(ant, carrier_idx, cfg);
    let s2 = noise_power_for(mean_power(&h), cfg.snr_db) / cfg.hw_averages as f64;
    let sd = s2.sqrt();
    let mut data = Vec::with_capacity(cfg.frames * cfg.allocated);
    for f in 0..cfg.frames {
        if s2 == 0.0 {
            data.extend_from_slice(&h);
            continue;
        }
        let id = rng::stream_id(&[0xF5, ant as u64, carrier_idx as u64, f as u64]);
        let mut rng = rng::stream(seed, id);
        data.extend(h.iter().map(|v| v + cn(&mut rng) * sd));
    }
    FrameSet::new(label, cfg.allocated, data)
}
