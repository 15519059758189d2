//! MUSIC delay pseudo-spectrum `P(τ) = 1 / ‖b(τ)^H U_noise‖²` with
//! `b(τ)[m] = e^{-j2π m τ B / N} / √Ñ`.
//!
//! On the default grid (`τ_g = g / (B Q)`) `b^H u` is the unnormalized
//! inverse FFT of `u` zero-padded to `N·Q`, read at bin `g`. The noise
//! projection is taken as the complement `1 − Σ |b^H u_sig|²` of the few
//! signal vectors and recomputed directly from the noise basis wherever that
//! complement is small enough to lose precision.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{hermitian_eigen, EigenSplit};
use super::gains::estimate_gains;
use super::order::{elbow_order, DEFAULT_ELBOW_TOLERANCE_DB};
use super::{default_subarray_len, freq_smooth, CovarianceEstimate};
use crate::dsp::{power_db, Dft};
use crate::error::{Error, Result};
use crate::estimator::{cir_from_response, CirEstimate, DatasetLabel, FrameSet};
use crate::sequence::SoundingConfig;

/// Complement values below this are recomputed from the noise basis.
const DIRECT_BELOW: f64 = 1e-3;
/// Lower bound on the noise projection, keeping `P` finite.
const MIN_PROJECTION: f64 = 1e-30;

/// Uniform delay grid `start + i·step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub start_s: f64,
    pub step_s: f64,
    pub len: usize,
}

impl DelayGrid {
    /// `[0, N/(4B))` with step `1/(B·Q)`.
    pub fn for_config(cfg: &SoundingConfig, oversample: usize) -> Result<Self> {
        if oversample == 0 {
            return Err(Error::config("grid oversampling must be at least 1"));
        }
        Ok(DelayGrid {
            start_s: 0.0,
            step_s: 1.0 / (cfg.sample_rate_hz * oversample as f64),
            len: cfg.window_len() * oversample,
        })
    }

    pub fn delay(&self, index: f64) -> f64 {
        self.start_s + index * self.step_s
    }

    pub fn delays(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.delay(i as f64)).collect()
    }

    pub fn end_s(&self) -> f64 {
        self.delay(self.len as f64)
    }

    /// Oversampling factor when the grid starts at zero and its step is
    /// `1/(B·Q)` for an integer `Q`.
    fn fft_oversample(&self, cfg: &SoundingConfig) -> Option<usize> {
        if self.start_s != 0.0 {
            return None;
        }
        let q = 1.0 / (self.step_s * cfg.sample_rate_hz);
        let qr = q.round();
        ((q - qr).abs() <= 1e-9 * q && qr >= 1.0 && self.len <= cfg.fft_size * qr as usize)
            .then_some(qr as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumInfo {
    pub grid: DelayGrid,
    /// Linear pseudo-spectrum, one value per grid point.
    pub power: Vec<f64>,
}

impl SpectrumInfo {
    pub fn power_db(&self) -> Vec<f64> {
        self.power.iter().map(|&p| power_db(p)).collect()
    }
}

fn steering(ns: usize, tau: f64, cfg: &SoundingConfig) -> DVector<Complex64> {
    let norm = 1.0 / (ns as f64).sqrt();
    let w = -2.0 * std::f64::consts::PI * tau * cfg.sample_rate_hz / cfg.fft_size as f64;
    DVector::from_fn(ns, |m, _| Complex64::from_polar(norm, w * m as f64))
}

fn noise_projection(noise: &DMatrix<Complex64>, tau: f64, cfg: &SoundingConfig) -> f64 {
    let b = steering(noise.nrows(), tau, cfg);
    (noise.adjoint() * b).norm_squared()
}

/// Pseudo-spectrum of a (smoothed) covariance for model order `order`.
pub fn music_spectrum(
    cov: &CovarianceEstimate,
    order: usize,
    grid: &DelayGrid,
    cfg: &SoundingConfig,
) -> Result<(EigenSplit, SpectrumInfo)> {
    if order >= cov.dim() {
        return Err(Error::input(format!(
            "model order {order} must be below the subarray length {}",
            cov.dim()
        )));
    }
    let split = hermitian_eigen(&cov.matrix)?.split(order)?;
    let info = spectrum_from_split(&split, grid, cfg)?;
    Ok((split, info))
}

fn spectrum_from_split(split: &EigenSplit, grid: &DelayGrid, cfg: &SoundingConfig) -> Result<SpectrumInfo> {
    if grid.len == 0 || !(grid.step_s > 0.0) {
        return Err(Error::config("delay grid must be nonempty with a positive step"));
    }
    let ns = split.signal.nrows();
    let delays = grid.delays();
    let mut proj: Vec<f64> = match grid.fft_oversample(cfg) {
        Some(q) if ns <= cfg.fft_size * q => {
            let len = cfg.fft_size * q;
            let dft = Dft::new(len);
            let mut captured = vec![0.0; grid.len];
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for col in split.signal.column_iter() {
                buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                buf[..ns].copy_from_slice(col.as_slice());
                dft.inverse_unscaled_in_place(&mut buf);
                for (c, v) in captured.iter_mut().zip(&buf) {
                    *c += v.norm_sqr() / ns as f64;
                }
            }
            captured.into_iter().map(|c| 1.0 - c).collect()
        }
        _ => delays
            .par_iter()
            .map(|&tau| {
                let b = steering(ns, tau, cfg);
                1.0 - (split.signal.adjoint() * b).norm_squared()
            })
            .collect(),
    };
    let redo: Vec<usize> = (0..proj.len()).filter(|&i| proj[i] < DIRECT_BELOW).collect();
    let direct: Vec<f64> = redo
        .par_iter()
        .map(|&i| noise_projection(&split.noise, delays[i], cfg))
        .collect();
    for (i, v) in redo.into_iter().zip(direct) {
        proj[i] = v;
    }
    Ok(SpectrumInfo {
        grid: *grid,
        power: proj.into_iter().map(|p| 1.0 / p.max(MIN_PROJECTION)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Refined fractional grid indices, ascending.
    pub positions: Vec<f64>,
    /// Refined values at those positions.
    pub values: Vec<f64>,
    /// Fewer local maxima than requested.
    pub shortfall: bool,
}

/// The `count` largest strict local maxima, each refined by a parabola
/// through it and its two neighbours. End points count as maxima when they
/// exceed their single neighbour and are reported unrefined.
pub fn pick_peaks(values: &[f64], count: usize) -> PeakSet {
    let n = values.len();
    let mut cands: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i + 1 == n || values[i] > values[i + 1];
            left && right && n > 1
        })
        .collect();
    cands.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let shortfall = cands.len() < count;
    cands.truncate(count);
    cands.sort_unstable();
    let mut positions = Vec::with_capacity(cands.len());
    let mut refined = Vec::with_capacity(cands.len());
    for i in cands {
        if i == 0 || i + 1 == n {
            positions.push(i as f64);
            refined.push(values[i]);
            continue;
        }
        let (l, c, r) = (values[i - 1], values[i], values[i + 1]);
        let den = l - 2.0 * c + r;
        let delta = if den < 0.0 {
            (0.5 * (l - r) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        positions.push(i as f64 + delta);
        refined.push(c - 0.25 * (l - r) * delta);
    }
    PeakSet {
        positions,
        values: refined,
        shortfall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    /// Subarray length `Ñ`; `None` means `⌈n_on/2⌉`.
    pub subarray_len: Option<usize>,
    pub l_max: usize,
    pub elbow_tolerance_db: f64,
    pub grid_oversample: usize,
    /// Fixed model order instead of the elbow.
    pub order: Option<usize>,
    /// Number of leading frames that also get a single-frame spectrum and
    /// peak set (input to delay clustering).
    pub frame_peaks: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        MusicConfig {
            subarray_len: None,
            l_max: 10,
            elbow_tolerance_db: DEFAULT_ELBOW_TOLERANCE_DB,
            grid_oversample: 16,
            order: None,
            frame_peaks: 0,
        }
    }
}

/// Everything the report stage needs from one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicResult {
    pub label: DatasetLabel,
    pub sample_rate_hz: f64,
    pub frames: usize,
    pub subarray_len: usize,
    pub subarrays: usize,
    /// Smoothed-covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub order: usize,
    pub order_curvature_db: Vec<f64>,
    /// Elbow found no curvature above tolerance.
    pub order_flat: bool,
    /// Order supplied rather than estimated.
    pub order_fixed: bool,
    pub grid: DelayGrid,
    pub spectrum_db: Vec<f64>,
    pub peaks_s: Vec<f64>,
    pub peak_shortfall: bool,
    pub gains: Vec<Complex64>,
    pub gain_residual: f64,
    pub gain_condition: f64,
    pub gain_ill_conditioned: bool,
    /// Per-frame peak delays, one list per processed frame.
    pub frame_peaks_s: Vec<Vec<f64>>,
    /// CIR of the frame-mean response.
    pub cir: CirEstimate,
}

impl MusicResult {
    pub fn grid_delays(&self) -> Vec<f64> {
        self.grid.delays()
    }
}

fn peaks_to_delays(grid: &DelayGrid, peaks: &PeakSet) -> Vec<f64> {
    peaks.positions.iter().map(|&p| grid.delay(p)).collect()
}

/// Smoothing, order selection, spectrum, peaks and gains for one dataset.
pub fn run_music(fs: &FrameSet, cfg: &SoundingConfig, mc: &MusicConfig) -> Result<MusicResult> {
    if fs.n_on() != cfg.allocated {
        return Err(Error::input("frame set width differs from allocation"));
    }
    let ns = mc.subarray_len.unwrap_or_else(|| default_subarray_len(fs.n_on()));
    let cov = freq_smooth(fs, ns)?;
    let eig = hermitian_eigen(&cov.matrix)?;
    let (order, curvature, flat, fixed) = match mc.order {
        Some(o) => (o, Vec::new(), false, true),
        None => {
            let est = elbow_order(&eig.eigenvalues, mc.l_max, mc.elbow_tolerance_db)?;
            (est.order, est.curvature_db, est.flat, false)
        }
    };
    if order == 0 {
        return Err(Error::config("model order must be at least 1"));
    }
    let split = eig.split(order)?;
    let grid = DelayGrid::for_config(cfg, mc.grid_oversample)?;
    let spec = spectrum_from_split(&split, &grid, cfg)?;
    let spectrum_db = spec.power_db();
    let peaks = pick_peaks(&spectrum_db, order);
    if peaks.shortfall {
        log::warn!(
            "{}: {} local maxima for order {}",
            fs.label.id(),
            peaks.positions.len(),
            order
        );
    }
    let peaks_s = peaks_to_delays(&grid, &peaks);
    let fit = estimate_gains(fs, &peaks_s, cfg)?;

    let n_frame = mc.frame_peaks.min(fs.n_frames());
    let frame_peaks_s = (0..n_frame)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let one = FrameSet::new(fs.label.clone(), fs.n_on(), fs.row(f).to_vec())?;
            let c = freq_smooth(&one, ns)?;
            let s = hermitian_eigen(&c.matrix)?.split(order)?;
            let sp = spectrum_from_split(&s, &grid, cfg)?;
            Ok(peaks_to_delays(&grid, &pick_peaks(&sp.power_db(), order)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MusicResult {
        label: fs.label.clone(),
        sample_rate_hz: cfg.sample_rate_hz,
        frames: fs.n_frames(),
        subarray_len: ns,
        subarrays: cov.subarrays,
        eigenvalues: split.eigenvalues,
        order,
        order_curvature_db: curvature,
        order_flat: flat,
        order_fixed: fixed,
        grid,
        spectrum_db,
        peaks_s,
        peak_shortfall: peaks.shortfall,
        gains: fit.gains,
        gain_residual: fit.residual_norm,
        gain_condition: fit.condition,
        gain_ill_conditioned: fit.ill_conditioned,
        frame_peaks_s,
        cir: cir_from_response(&fs.mean_row(), cfg, fs.label.carrier_hz),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{synthesize_frameset, Antenna, MultipathChannel, Tap};
    use crate::subspace::freq_smooth;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn channel(cfg: &SoundingConfig, taps: &[(f64, Complex64)]) -> MultipathChannel {
        MultipathChannel::antenna_a_only(
            cfg.carriers_hz.clone(),
            taps.iter()
                .map(|&(d, g)| Tap {
                    delay_s: d / cfg.sample_rate_hz,
                    gains: vec![g; cfg.carriers_hz.len()],
                })
                .collect(),
        )
    }

    fn one_carrier(snr: Option<f64>, frames: usize) -> SoundingConfig {
        let mut cfg = SoundingConfig::default();
        cfg.carriers_hz.truncate(1);
        cfg.snr_db = snr;
        cfg.frames = frames;
        cfg.hw_averages = 1;
        cfg
    }

    #[test]
    fn default_grid_size() {
        let g = DelayGrid::for_config(&SoundingConfig::default(), 16).unwrap();
        assert_eq!(g.len, 4096);
        assert!((g.end_s() - 256.0 / 983.04e6).abs() < 1e-18);
    }

    #[test]
    fn single_path_global_max() {
        let cfg = one_carrier(None, 1);
        let tau = 9.37;
        let ch = channel(&cfg, &[(tau, c(1.0, 0.0))]);
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 0).unwrap();
        let cov = freq_smooth(&fs, 261).unwrap();
        let grid = DelayGrid::for_config(&cfg, 16).unwrap();
        let (_, spec) = music_spectrum(&cov, 1, &grid, &cfg).unwrap();
        let imax = (0..grid.len).max_by(|&a, &b| spec.power[a].total_cmp(&spec.power[b])).unwrap();
        let err = (grid.delay(imax as f64) - tau / cfg.sample_rate_hz).abs();
        assert!(err <= grid.step_s, "{err}");
        assert!(spec.power.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn fast_and_direct_evaluation_agree() {
        let cfg = one_carrier(Some(20.0), 10);
        let ch = channel(&cfg, &[(0.0, c(1.0, 0.0)), (5.5, c(0.3, 0.4))]);
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 3).unwrap();
        let cov = freq_smooth(&fs, 61).unwrap();
        let grid = DelayGrid::for_config(&cfg, 4).unwrap();
        let (split, fast) = music_spectrum(&cov, 2, &grid, &cfg).unwrap();
        for (i, p) in fast.power.iter().enumerate().step_by(37) {
            let direct = 1.0 / noise_projection(&split.noise, grid.delay(i as f64), &cfg);
            assert!((p / direct - 1.0).abs() < 1e-8, "{i} {p} {direct}");
        }
        // an offset grid forces the direct path
        let shifted = DelayGrid { start_s: grid.step_s * 0.5, ..grid };
        let (_, slow) = music_spectrum(&cov, 2, &shifted, &cfg).unwrap();
        let direct = 1.0 / noise_projection(&split.noise, shifted.delay(10.0), &cfg);
        assert!((slow.power[10] / direct - 1.0).abs() < 1e-8);
    }

    #[test]
    fn order_must_be_below_subarray() {
        let cfg = one_carrier(None, 1);
        let fs = synthesize_frameset(&channel(&cfg, &[(0.0, c(1.0, 0.0))]), Antenna::A, 0, &cfg, DatasetLabel::default(), 0).unwrap();
        let cov = freq_smooth(&fs, 5).unwrap();
        let grid = DelayGrid::for_config(&cfg, 1).unwrap();
        assert!(music_spectrum(&cov, 5, &grid, &cfg).is_err());
    }

    #[test]
    fn monotone_spectrum_shortfall() {
        let up: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let p = pick_peaks(&up, 2);
        assert!(p.positions.len() <= 1);
        assert!(p.shortfall);
        let flat = vec![1.0; 10];
        let p = pick_peaks(&flat, 1);
        assert!(p.positions.is_empty() && p.shortfall);
    }

    #[test]
    fn constructed_maxima() {
        let mut v = vec![0.0; 1000];
        v[100] = 5.0;
        v[700] = 3.0;
        v[400] = 1.0;
        let p = pick_peaks(&v, 2);
        assert_eq!(p.positions, vec![100.0, 700.0]);
        assert!(!p.shortfall);
    }

    #[test]
    fn parabolic_vertex() {
        for &x0 in &[10.3, 10.0, 9.51, 10.49] {
            let v: Vec<f64> = (0..21).map(|i| 4.0 - 0.7 * (i as f64 - x0).powi(2)).collect();
            let p = pick_peaks(&v, 1);
            assert!((p.positions[0] - x0).abs() < 1e-3, "{x0} {:?}", p.positions);
            assert!((p.values[0] - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn global_scaling_leaves_peaks() {
        let cfg = one_carrier(Some(25.0), 20);
        let ch = channel(&cfg, &[(0.0, c(1.0, 0.0)), (3.2, c(0.0, 0.7)), (11.0, c(-0.5, 0.1))]);
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 9).unwrap();
        let mc = MusicConfig {
            order: Some(3),
            ..MusicConfig::default()
        };
        let a = run_music(&fs, &cfg, &mc).unwrap();
        let b = run_music(&fs.scaled(c(-3.0, 40.0)), &cfg, &mc).unwrap();
        for (x, y) in a.peaks_s.iter().zip(&b.peaks_s) {
            assert!((x - y).abs() < 1e-6 * a.grid.step_s);
        }
    }

    #[test]
    fn noise_projection_shrinks_with_snr() {
        let taps = [(0.0, c(1.0, 0.0)), (4.4, c(0.5, -0.5))];
        let mut last = f64::INFINITY;
        for snr in [10.0, 20.0, 30.0, 40.0] {
            let cfg = one_carrier(Some(snr), 20);
            let fs = synthesize_frameset(&channel(&cfg, &taps), Antenna::A, 0, &cfg, DatasetLabel::default(), 5).unwrap();
            let cov = freq_smooth(&fs, 261).unwrap();
            let split = hermitian_eigen(&cov.matrix).unwrap().split(2).unwrap();
            let total: f64 = taps
                .iter()
                .map(|t| noise_projection(&split.noise, t.0 / cfg.sample_rate_hz, &cfg))
                .sum();
            assert!(total < last, "{snr}: {total} !< {last}");
            last = total;
        }
    }

    #[test]
    fn two_close_paths_are_resolved() {
        let cfg = one_carrier(Some(30.0), 100);
        let truth = [3.0, 3.5];
        let ch = channel(&cfg, &[(truth[0], c(1.0, 0.0)), (truth[1], c(0.0, 1.0))]);
        let fs = synthesize_frameset(&ch, Antenna::A, 0, &cfg, DatasetLabel::default(), 1).unwrap();
        let mc = MusicConfig {
            order: Some(2),
            ..MusicConfig::default()
        };
        let res = run_music(&fs, &cfg, &mc).unwrap();
        assert_eq!(res.peaks_s.len(), 2);
        for (p, t) in res.peaks_s.iter().zip(truth) {
            assert!((p * cfg.sample_rate_hz - t).abs() < 0.1, "{:?}", res.peaks_s);
        }
    }
}
