//! Sounding configuration and the two-antenna orthogonal sounding pair.
//!
//! Antenna `a` transmits a random QPSK spectrum `X_a` on `n_on` subcarriers
//! centred on DC. Antenna `b` transmits `X_b[k] = X_a[k] (-1)^k`, whose
//! time-domain sequence is `x_a` circularly shifted by `N/2`. Subcarrier `k`
//! lives in DFT bin `k mod N`.
//!
//! Transmit and receive pulse shaping are not modelled explicitly: the band
//! limitation is the subcarrier allocation itself.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{energy, Dft};
use crate::error::{Error, Result};
use crate::rng;

/// Grid arithmetic shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundingConfig {
    /// FFT size `N`.
    pub fft_size: usize,
    /// Number of allocated subcarriers, odd, centred on DC.
    pub allocated: usize,
    /// Sample rate `B` in Hz.
    pub sample_rate_hz: f64,
    pub carriers_hz: Vec<f64>,
    /// Channel estimates retained per dataset.
    pub frames: usize,
    /// Raw windows coherently averaged into each retained frame.
    pub hw_averages: usize,
    /// Per-window SNR for simulation; `None` means noiseless.
    pub snr_db: Option<f64>,
}

impl Default for SoundingConfig {
    /// 1024-point FFT, 521 subcarriers at 983.04 MHz sampling, carriers at
    /// 6.5 and 8.75 GHz, 100 frames of 100 averaged windows each.
    fn default() -> Self {
        SoundingConfig {
            fft_size: 1024,
            allocated: 521,
            sample_rate_hz: 983.04e6,
            carriers_hz: vec![6.5e9, 8.75e9],
            frames: 100,
            hw_averages: 100,
            snr_db: Some(10.0),
        }
    }
}

impl SoundingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 4 || !self.fft_size.is_power_of_two() {
            return Err(Error::config(format!(
                "fft_size must be a power of two >= 4, got {}",
                self.fft_size
            )));
        }
        if self.allocated == 0 || self.allocated % 2 == 0 {
            return Err(Error::config(format!(
                "allocated subcarrier count must be odd and nonzero, got {}",
                self.allocated
            )));
        }
        if self.allocated > self.fft_size {
            return Err(Error::config(format!(
                "allocated ({}) exceeds fft_size ({})",
                self.allocated, self.fft_size
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate_hz must be positive"));
        }
        if self.carriers_hz.is_empty() {
            return Err(Error::config("at least one carrier is required"));
        }
        if self.frames == 0 || self.hw_averages == 0 {
            return Err(Error::config("frames and hw_averages must be >= 1"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::config("snr_db must be finite (use null for noiseless)"));
            }
        }
        Ok(())
    }

    /// `n_on * B / N`.
    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.allocated as f64 * self.sample_rate_hz / self.fft_size as f64
    }

    pub fn half_allocated(&self) -> i64 {
        (self.allocated as i64 - 1) / 2
    }

    /// Signed subcarrier indices `-(n_on-1)/2 ..= (n_on-1)/2`.
    pub fn subcarriers(&self) -> impl Iterator<Item = i64> + Clone {
        let h = self.half_allocated();
        -h..=h
    }

    pub fn bin(&self, k: i64) -> usize {
        k.rem_euclid(self.fft_size as i64) as usize
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Per-antenna CIR window length `N/4`.
    pub fn window_len(&self) -> usize {
        self.fft_size / 4
    }

    /// Largest delay representable inside one antenna window, `(N/4)/B`.
    pub fn max_delay_s(&self) -> f64 {
        self.window_len() as f64 / self.sample_rate_hz
    }

    pub fn carrier_index(&self, carrier_hz: f64) -> Option<usize> {
        self.carriers_hz.iter().position(|&c| c == carrier_hz)
    }

    pub fn noiseless(mut self) -> Self {
        self.snr_db = None;
        self
    }
}

/// Complex values on a contiguous block of subcarriers.
///
/// For odd lengths the block is symmetric about DC. An even length `L`
/// covers `-L/2+1 ..= L/2`, which for `L = N` is the full DFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatedSpectrum {
    values: Vec<Complex64>,
}

impl AllocatedSpectrum {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("allocated spectrum must be nonempty"));
        }
        Ok(AllocatedSpectrum { values })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Subcarrier index of `values[0]`.
    pub fn first_index(&self) -> i64 {
        -((self.values.len() as i64 - 1) / 2)
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let first = self.first_index();
        first..first + self.values.len() as i64
    }

    pub fn get(&self, k: i64) -> Option<Complex64> {
        let i = k - self.first_index();
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied()
    }

    /// Places the allocation on an `N`-point DFT grid, zero elsewhere.
    pub fn to_grid(&self, fft_size: usize) -> Result<Vec<Complex64>> {
        if self.values.len() > fft_size {
            return Err(Error::config(format!(
                "allocation of {} subcarriers does not fit a {}-point grid",
                self.values.len(),
                fft_size
            )));
        }
        let mut grid = vec![Complex64::new(0.0, 0.0); fft_size];
        for (k, v) in self.indices().zip(&self.values) {
            grid[k.rem_euclid(fft_size as i64) as usize] = *v;
        }
        Ok(grid)
    }

    /// Inverse DFT of the zero-padded allocation with the `1/N` convention,
    /// so the time-domain energy equals the spectral energy divided by `N`.
    pub fn to_time(&self, fft_size: usize) -> Result<TimeSequence> {
        let mut grid = self.to_grid(fft_size)?;
        Dft::new(fft_size).inverse_in_place(&mut grid);
        Ok(TimeSequence { samples: grid })
    }
}

/// One `N`-sample period of a transmitted or received sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSequence {
    pub samples: Vec<Complex64>,
}

impl TimeSequence {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    /// Forward DFT (no scaling), inverse of [`AllocatedSpectrum::to_time`].
    pub fn spectrum(&self) -> Vec<Complex64> {
        Dft::new(self.samples.len()).forward(&self.samples)
    }

    /// Copy scaled to unit energy. A zero sequence is returned unchanged.
    pub fn normalized(&self) -> TimeSequence {
        let e = self.energy();
        if e == 0.0 {
            return self.clone();
        }
        let s = 1.0 / e.sqrt();
        TimeSequence {
            samples: self.samples.iter().map(|v| v * s).collect(),
        }
    }

    pub fn circular_shift(&self, shift: usize) -> TimeSequence {
        let n = self.samples.len();
        TimeSequence {
            samples: (0..n)
                .map(|i| self.samples[(i + n - shift % n) % n])
                .collect(),
        }
    }
}

/// Deterministic QPSK spectrum: two fair bits per subcarrier drawn from
/// ChaCha8 seeded with `seed`, mapped to `((±1) + j(±1)) / √2`.
pub fn gen_qpsk(seed: u64, n_on: usize) -> Result<AllocatedSpectrum> {
    if n_on == 0 || n_on % 2 == 0 {
        return Err(Error::config(format!(
            "QPSK allocation must be odd and nonzero, got {n_on}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let values = (0..n_on)
        .map(|_| {
            let re = if rng.random::<bool>() { -a } else { a };
            let im = if rng.random::<bool>() { -a } else { a };
            Complex64::new(re, im)
        })
        .collect();
    AllocatedSpectrum::new(values)
}

/// `X_b[k] = X_a[k] e^{jπk}`.
pub fn derive_orthogonal(x_a: &AllocatedSpectrum) -> AllocatedSpectrum {
    let values = x_a
        .indices()
        .zip(x_a.values())
        .map(|(k, v)| if k.rem_euclid(2) == 0 { *v } else { -*v })
        .collect();
    AllocatedSpectrum { values }
}

pub fn to_time(x: &AllocatedSpectrum, cfg: &SoundingConfig) -> Result<TimeSequence> {
    x.to_time(cfg.fft_size)
}

/// Spectra transmitted by antennas `a` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundingPair {
    pub x_a: AllocatedSpectrum,
    pub x_b: AllocatedSpectrum,
}

impl SoundingPair {
    pub fn new(seed: u64, cfg: &SoundingConfig) -> Result<Self> {
        cfg.validate()?;
        let x_a = gen_qpsk(seed, cfg.allocated)?;
        let x_b = derive_orthogonal(&x_a);
        Ok(SoundingPair { x_a, x_b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::naive_dft;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qpsk_alphabet_membership() {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        // n_on=4 is rejected (even), so membership is checked on the nearest odd size.
        let x = gen_qpsk(1, 5).unwrap();
        for v in x.values() {
            assert!((v.re.abs() - a).abs() < 1e-15 && (v.im.abs() - a).abs() < 1e-15);
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(gen_qpsk(1, 4), Err(Error::Config(_))));
        assert!(matches!(gen_qpsk(1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn qpsk_is_deterministic() {
        assert_eq!(gen_qpsk(7, 521).unwrap(), gen_qpsk(7, 521).unwrap());
    }

    #[test]
    fn qpsk_seeds_are_nearly_orthogonal() {
        let x1 = gen_qpsk(1, 521).unwrap();
        let x2 = gen_qpsk(2, 521).unwrap();
        let ip: Complex64 = x1
            .values()
            .iter()
            .zip(x2.values())
            .map(|(a, b)| a * b.conj())
            .sum();
        assert!(ip.norm() / 521.0 < 0.2, "{}", ip.norm() / 521.0);
    }

    #[test]
    fn orthogonal_sign_pattern() {
        let x = AllocatedSpectrum::new(vec![c(1.0, 0.0); 5]).unwrap();
        let y = derive_orthogonal(&x);
        assert_eq!(y.get(0), Some(c(1.0, 0.0)));
        assert_eq!(y.get(1), Some(c(-1.0, 0.0)));
        assert_eq!(y.get(-1), Some(c(-1.0, 0.0)));
        assert_eq!(y.get(2), Some(c(1.0, 0.0)));
    }

    #[test]
    fn full_allocation_all_ones_gives_impulse_at_half() {
        let x = AllocatedSpectrum::new(vec![c(1.0, 0.0); 16]).unwrap();
        let t = derive_orthogonal(&x).to_time(16).unwrap();
        for (n, v) in t.samples.iter().enumerate() {
            let want = if n == 8 { 1.0 } else { 0.0 };
            assert!((v - c(want, 0.0)).norm() < 1e-14, "n={n} v={v}");
        }
    }

    #[test]
    fn orthogonal_time_sequence_is_half_shift_brute_force() {
        let x = gen_qpsk(11, 15).unwrap();
        let grid_a = x.to_grid(16).unwrap();
        let grid_b = derive_orthogonal(&x).to_grid(16).unwrap();
        let ta = naive_dft(&grid_a, true);
        let tb = naive_dft(&grid_b, true);
        for n in 0..16 {
            assert!((tb[n] - ta[(n + 16 - 8) % 16]).norm() < 1e-12);
        }
        // the FFT path agrees with the brute-force one
        let fast = derive_orthogonal(&x).to_time(16).unwrap();
        for n in 0..16 {
            assert!((fast.samples[n] - tb[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn dc_bin_is_constant() {
        let mut v = vec![c(0.0, 0.0); 7];
        v[3] = c(2.0, -1.0);
        let t = AllocatedSpectrum::new(v).unwrap().to_time(32).unwrap();
        for s in &t.samples {
            assert!((s - c(2.0, -1.0) / 32.0).norm() < 1e-15);
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let x = gen_qpsk(3, 521).unwrap();
        let t = x.to_time(1024).unwrap();
        let spec_energy = energy(x.values());
        assert!((t.energy() - spec_energy / 1024.0).abs() < 1e-10 * spec_energy);
        let back = t.spectrum();
        let grid = x.to_grid(1024).unwrap();
        let err: f64 = back.iter().zip(&grid).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err < 1e-20 * spec_energy);
        assert!((t.normalized().energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_numerology() {
        let cfg = SoundingConfig::default();
        cfg.validate().unwrap();
        // 521 · 983.04 / 1024 = 521 · 0.96
        assert!((cfg.occupied_bandwidth_hz() / 1e6 - 500.16).abs() <= 0.01);
        assert_eq!(cfg.fft_size, 1024);
        assert_eq!(cfg.allocated, 521);
        assert_eq!(cfg.frames, 100);
        assert_eq!(cfg.hw_averages, 100);
        assert_eq!(cfg.window_len(), 256);
    }

    #[test]
    fn config_rejects_bad_grids() {
        let base = SoundingConfig::default();
        let mut c1 = base.clone();
        c1.allocated = 1025;
        assert!(c1.validate().is_err());
        let mut c2 = base.clone();
        c2.fft_size = 1000;
        assert!(c2.validate().is_err());
        let mut c3 = base;
        c3.allocated = 520;
        assert!(c3.validate().is_err());
        assert!(matches!(
            gen_qpsk(1, 9).unwrap().to_time(8),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn derive_orthogonal_is_involution(seed in any::<u64>(), half in 0usize..40) {
            let x = gen_qpsk(seed, 2 * half + 1).unwrap();
            prop_assert_eq!(derive_orthogonal(&derive_orthogonal(&x)), x);
        }

        #[test]
        fn qpsk_unit_modulus(seed in any::<u64>(), half in 0usize..300) {
            let x = gen_qpsk(seed, 2 * half + 1).unwrap();
            for v in x.values() {
                prop_assert!((v.norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
