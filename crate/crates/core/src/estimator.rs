//! Per-antenna channel estimates from received MISO frames.
//!
//! The received spectrum divided by `X_a` gives
//! `R[k] = H_a[k] + (-1)^k H_b[k]`, whose inverse transform holds antenna `a`
//! in `[0, N/4)` and antenna `b` in `[N/2, 3N/4)`. [`separate_miso`] applies
//! that time-domain windowing literally. Because only `n_on` of the `N` bins
//! are observed, the windowed estimate carries the band-limitation error of
//! the zero-filled transform; [`Separator`] with [`Separation::Projection`]
//! instead fits both antennas jointly on the allocated carriers using a
//! delay-limited (discrete prolate) basis for each window.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{energy, Dft};
use crate::error::{Error, Result};
use crate::sequence::{AllocatedSpectrum, SoundingConfig};
use crate::simulator::{Antenna, RxFrame};

/// Identifies one dataset: carrier, antenna, target state and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLabel {
    pub carrier_hz: f64,
    pub antenna: Antenna,
    pub target: bool,
    #[serde(default)]
    pub placement: String,
    #[serde(default)]
    pub orientation: String,
}

impl Default for DatasetLabel {
    fn default() -> Self {
        DatasetLabel {
            carrier_hz: 0.0,
            antenna: Antenna::A,
            target: false,
            placement: String::new(),
            orientation: String::new(),
        }
    }
}

impl DatasetLabel {
    /// File-name friendly identifier.
    pub fn id(&self) -> String {
        let mut id = format!(
            "{}_{:.0}mhz_{}",
            self.antenna.label(),
            self.carrier_hz / 1e6,
            if self.target { "target" } else { "empty" }
        );
        for part in [&self.placement, &self.orientation] {
            if !part.is_empty() {
                id.push('_');
                id.extend(
                    part.chars()
                        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' }),
                );
            }
        }
        id
    }
}

/// `F × n_on` matrix of allocated-carrier channel estimates, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub label: DatasetLabel,
    n_on: usize,
    data: Vec<Complex64>,
}

impl FrameSet {
    pub fn new(label: DatasetLabel, n_on: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_on == 0 || data.is_empty() || data.len() % n_on != 0 {
            return Err(Error::input(format!(
                "frame data of length {} is not a nonempty multiple of {}",
                data.len(),
                n_on
            )));
        }
        Ok(FrameSet { label, n_on, data })
    }

    pub fn from_rows(label: DatasetLabel, rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_on = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_on) {
            return Err(Error::input("frame rows differ in length"));
        }
        FrameSet::new(label, n_on, rows.concat())
    }

    pub fn n_on(&self) -> usize {
        self.n_on
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_on
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.n_on..(f + 1) * self.n_on]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.n_on)
    }

    pub fn mean_row(&self) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.n_on];
        for row in self.rows() {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        let s = 1.0 / self.n_frames() as f64;
        acc.iter_mut().for_each(|a| *a *= s);
        acc
    }

    pub fn scaled(&self, c: Complex64) -> FrameSet {
        FrameSet {
            label: self.label.clone(),
            n_on: self.n_on,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// Time-domain CIR of one antenna, `N/4` taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirEstimate {
    pub taps: Vec<Complex64>,
    pub carrier_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisoCir {
    pub a: CirEstimate,
    pub b: CirEstimate,
    /// Fraction of CIR energy outside both antenna windows.
    pub leakage: f64,
    pub leakage_warning: bool,
}

pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 0.05;

/// `R[k] = Y[k] / X_a[k]` on the allocated carriers. `y` is the full
/// `N`-bin spectrum of a received frame.
pub fn freq_divide(y: &[Complex64], x_a: &AllocatedSpectrum, cfg: &SoundingConfig) -> Result<Vec<Complex64>> {
    if y.len() != cfg.fft_size {
        return Err(Error::input(format!(
            "spectrum has {} bins, expected {}",
            y.len(),
            cfg.fft_size
        )));
    }
    if x_a.len() != cfg.allocated {
        return Err(Error::input("reference sequence length differs from allocation"));
    }
    cfg.subcarriers()
        .zip(x_a.values())
        .map(|(k, x)| {
            if x.norm() < 1e-12 {
                Err(Error::input(format!("reference symbol at subcarrier {k} is zero")))
            } else {
                Ok(y[cfg.bin(k)] / x)
            }
        })
        .collect()
}

/// Zero-filled inverse transform of an allocated response, scaled by
/// `1/n_on` so that a unit tap at an integer delay reads 1.
pub fn response_to_cir(r: &[Complex64], cfg: &SoundingConfig, dft: &Dft) -> Vec<Complex64> {
    let mut grid = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for (k, v) in cfg.subcarriers().zip(r) {
        grid[cfg.bin(k)] = *v;
    }
    dft.inverse_unscaled_in_place(&mut grid);
    let s = 1.0 / r.len() as f64;
    grid.iter_mut().for_each(|v| *v *= s);
    grid
}

/// Allocated-carrier response of a windowed CIR (inverse of
/// [`response_to_cir`] for band-limited inputs).
pub fn cir_to_response(taps: &[Complex64], cfg: &SoundingConfig, dft: &Dft) -> Vec<Complex64> {
    let mut grid = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    grid[..taps.len()].copy_from_slice(taps);
    dft.forward_in_place(&mut grid);
    let s = cfg.allocated as f64 / cfg.fft_size as f64;
    cfg.subcarriers().map(|k| grid[cfg.bin(k)] * s).collect()
}

/// Windowing step: `ĥ_a[n] = r[n]`, `ĥ_b[n] = r[(n + N/2) mod N]` for
/// `n < N/4`.
pub fn separate_cir(r: &[Complex64], carrier_hz: f64, leakage_threshold: f64) -> MisoCir {
    let n = r.len();
    let w = n / 4;
    let a: Vec<_> = r[..w].to_vec();
    let b: Vec<_> = (0..w).map(|i| r[(i + n / 2) % n]).collect();
    let total = energy(r);
    let inside = energy(&a) + energy(&b);
    let leakage = if total > 0.0 {
        ((total - inside) / total).max(0.0)
    } else {
        0.0
    };
    MisoCir {
        a: CirEstimate {
            taps: a,
            carrier_hz,
        },
        b: CirEstimate {
            taps: b,
            carrier_hz,
        },
        leakage,
        leakage_warning: leakage > leakage_threshold,
    }
}

/// Zero-fill, inverse transform and window an allocated response.
pub fn separate_miso(r: &[Complex64], cfg: &SoundingConfig, carrier_hz: f64) -> Result<MisoCir> {
    if r.len() != cfg.allocated {
        return Err(Error::input("response length differs from allocation"));
    }
    let dft = Dft::new(cfg.fft_size);
    let cir = response_to_cir(r, cfg, &dft);
    let out = separate_cir(&cir, carrier_hz, DEFAULT_LEAKAGE_THRESHOLD);
    if out.leakage_warning {
        log::warn!(
            "{:.1}% of CIR energy outside the antenna windows",
            100.0 * out.leakage
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub response: Vec<Complex64>,
    pub shift: usize,
}

/// Leading-edge bin in `[0, N/2)` of the folded power
/// `|r[n]|² + |r[n + N/2]|²`: the first bin above `beta` times the maximum
/// at which the power stops rising. Folding makes the detection common to
/// both antenna windows.
///
/// With roughly half the bins allocated, the neighbours of an on-grid path
/// sit only about 4 dB below it, so the plain threshold crossing would land
/// one bin early.
pub fn first_path_index(r: &[Complex64], cfg: &SoundingConfig, beta: f64, dft: &Dft) -> Result<usize> {
    let cir = response_to_cir(r, cfg, dft);
    let half = cfg.fft_size / 2;
    let folded: Vec<f64> = (0..half)
        .map(|n| cir[n].norm_sqr() + cir[n + half].norm_sqr())
        .collect();
    let max = folded.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::input("cannot align an all-zero response"));
    }
    let start = folded.iter().position(|&p| p > beta * max).unwrap_or(0);
    let mut n = start;
    while n + 1 < half && folded[n + 1] > folded[n] {
        n += 1;
    }
    Ok(n)
}

/// Circular time shift by `-shift` samples: `R'[k] = R[k] e^{+j2πk·shift/N}`.
pub fn shift_response(r: &[Complex64], cfg: &SoundingConfig, shift: usize) -> Vec<Complex64> {
    let n = cfg.fft_size as f64;
    cfg.subcarriers()
        .zip(r)
        .map(|(k, v)| {
            let ph = 2.0 * std::f64::consts::PI * ((k * shift as i64).rem_euclid(cfg.fft_size as i64)) as f64 / n;
            v * Complex64::from_polar(1.0, ph)
        })
        .collect()
}

/// Rotates the response so its first significant path sits at bin 0.
pub fn align_first_path(r: &[Complex64], cfg: &SoundingConfig, beta: f64) -> Result<Aligned> {
    let dft = Dft::new(cfg.fft_size);
    let shift = first_path_index(r, cfg, beta, &dft)?;
    Ok(Aligned {
        response: shift_response(r, cfg, shift),
        shift,
    })
}

/// How the two antennas are split apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Separation {
    /// Literal windowing of the zero-filled inverse transform.
    Window,
    /// Joint least-squares fit onto delay-limited bases covering
    /// `[-guard, N/4 + guard)` samples for each antenna, keeping basis
    /// vectors whose concentration exceeds `eig_floor` of the largest.
    Projection { guard_bins: f64, eig_floor: f64 },
}

impl Default for Separation {
    fn default() -> Self {
        Separation::Projection {
            guard_bins: 4.0,
            eig_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub separation: Separation,
    pub align: bool,
    pub beta: f64,
    pub leakage_threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            separation: Separation::default(),
            align: true,
            beta: 0.1,
            leakage_threshold: DEFAULT_LEAKAGE_THRESHOLD,
        }
    }
}

/// Per-antenna allocated responses recovered from one `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separated {
    pub h_a: Vec<Complex64>,
    pub h_b: Vec<Complex64>,
    /// Out-of-window energy fraction (windowing) or relative fit residual
    /// energy (projection).
    pub leakage: f64,
}

#[derive(Debug, Clone)]
struct ProjectionBasis {
    /// `n_on × K` orthonormal basis for one antenna window.
    u: DMatrix<Complex64>,
    /// `2K × n_on` pseudo-inverse of `[U, S·U]`, `S = diag((-1)^k)`.
    pinv: DMatrix<Complex64>,
}

/// Reusable antenna separator for one grid configuration.
#[derive(Debug, Clone)]
pub struct Separator {
    cfg: SoundingConfig,
    dft: Dft,
    basis: Option<ProjectionBasis>,
}

impl Separator {
    pub fn new(cfg: &SoundingConfig, method: Separation) -> Result<Self> {
        cfg.validate()?;
        let basis = match method {
            Separation::Window => None,
            Separation::Projection {
                guard_bins,
                eig_floor,
            } => Some(projection_basis(cfg, guard_bins, eig_floor)?),
        };
        Ok(Separator {
            cfg: cfg.clone(),
            dft: Dft::new(cfg.fft_size),
            basis,
        })
    }

    /// Number of basis vectors per antenna, or `None` for windowing.
    pub fn basis_size(&self) -> Option<usize> {
        self.basis.as_ref().map(|b| b.u.ncols())
    }

    pub fn separate(&self, r: &[Complex64]) -> Result<Separated> {
        let cfg = &self.cfg;
        if r.len() != cfg.allocated {
            return Err(Error::input("response length differs from allocation"));
        }
        match &self.basis {
            None => {
                let cir = response_to_cir(r, cfg, &self.dft);
                let miso = separate_cir(&cir, 0.0, f64::INFINITY);
                Ok(Separated {
                    h_a: cir_to_response(&miso.a.taps, cfg, &self.dft),
                    h_b: cir_to_response(&miso.b.taps, cfg, &self.dft),
                    leakage: miso.leakage,
                })
            }
            Some(p) => {
                let k = p.u.ncols();
                let rv = DVector::from_column_slice(r);
                let c = &p.pinv * &rv;
                let h_a = &p.u * c.rows(0, k);
                let h_b = &p.u * c.rows(k, k);
                let total = rv.norm_squared();
                let leakage = if total > 0.0 {
                    let mut resid = 0.0;
                    for (i, (kk, v)) in cfg.subcarriers().zip(r).enumerate() {
                        let sign = if kk.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        resid += (v - h_a[i] - h_b[i] * sign).norm_sqr();
                    }
                    resid / total
                } else {
                    0.0
                };
                Ok(Separated {
                    h_a: h_a.iter().cloned().collect(),
                    h_b: h_b.iter().cloned().collect(),
                    leakage,
                })
            }
        }
    }
}

fn projection_basis(cfg: &SoundingConfig, guard: f64, floor: f64) -> Result<ProjectionBasis> {
    if !(guard >= 0.0) || !(floor > 0.0 && floor < 1.0) {
        return Err(Error::config("projection needs guard >= 0 and floor in (0, 1)"));
    }
    let n = cfg.fft_size as f64;
    let lo = -guard;
    let hi = cfg.window_len() as f64 + guard;
    let width = hi - lo;
    let centre = 0.5 * (lo + hi);
    if 2.0 * width >= n {
        return Err(Error::config("guard too wide for two antenna windows"));
    }
    let ks: Vec<i64> = cfg.subcarriers().collect();
    let m = ks.len();
    // ∫ e^{-j2π(k-k')d/N} dd over [lo, hi) = D · S · D^H with S real
    // symmetric and D = diag(e^{-j2πk·centre/N}).
    let s = DMatrix::from_fn(m, m, |i, j| {
        let dk = (ks[i] - ks[j]) as f64;
        if dk == 0.0 {
            width
        } else {
            let x = std::f64::consts::PI * dk / n;
            (x * width).sin() / x
        }
    });
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let mut keep: Vec<usize> = (0..m)
        .filter(|&i| eig.eigenvalues[i] > floor * lmax)
        .collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kcount = keep.len();
    if kcount == 0 || 2 * kcount >= m {
        return Err(Error::numerical("degenerate projection basis"));
    }
    let u = DMatrix::from_fn(m, kcount, |i, j| {
        let ph = -2.0 * std::f64::consts::PI * ks[i] as f64 * centre / n;
        Complex64::from_polar(1.0, ph) * eig.eigenvectors[(i, keep[j])]
    });
    let mut full = DMatrix::zeros(m, 2 * kcount);
    for j in 0..kcount {
        for i in 0..m {
            let sign = if ks[i].rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            full[(i, j)] = u[(i, j)];
            full[(i, j + kcount)] = u[(i, j)] * sign;
        }
    }
    let pinv = full
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::numerical(format!("projection pseudo-inverse: {e}")))?;
    Ok(ProjectionBasis { u, pinv })
}

/// Result of estimating one carrier's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub a: FrameSet,
    pub b: FrameSet,
    /// Common circular shift applied to every frame.
    pub shift: usize,
    pub mean_leakage: f64,
    pub leakage_warning: bool,
}

/// Divides, aligns and separates every frame of one carrier into per-antenna
/// FrameSets. The alignment shift is estimated once on the frame-mean
/// response. `label` supplies placement, orientation and target state.
pub fn build_frameset(
    frames: &[RxFrame],
    x_a: &AllocatedSpectrum,
    cfg: &SoundingConfig,
    est: &EstimatorConfig,
    separator: &Separator,
    label: &DatasetLabel,
) -> Result<Estimate> {
    let first = frames
        .first()
        .ok_or_else(|| Error::input("no frames to estimate"))?;
    if frames.iter().any(|f| f.carrier_hz != first.carrier_hz) {
        return Err(Error::input("frames from different carriers"));
    }
    let dft = Dft::new(cfg.fft_size);
    let responses = frames
        .par_iter()
        .map(|f| {
            let spec = dft.forward(&f.samples);
            freq_divide(&spec, x_a, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let shift = if est.align {
        let mut mean = vec![Complex64::new(0.0, 0.0); cfg.allocated];
        for r in &responses {
            mean.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        }
        match first_path_index(&mean, cfg, est.beta, &dft) {
            Ok(s) => s,
            Err(_) => 0,
        }
    } else {
        0
    };

    let separated = responses
        .par_iter()
        .map(|r| {
            if shift == 0 {
                separator.separate(r)
            } else {
                separator.separate(&shift_response(r, cfg, shift))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_leakage = separated.iter().map(|s| s.leakage).sum::<f64>() / separated.len() as f64;
    let leakage_warning = mean_leakage > est.leakage_threshold;
    if leakage_warning {
        log::warn!(
            "carrier {:.3} GHz: mean leakage {:.3} above threshold",
            first.carrier_hz / 1e9,
            mean_leakage
        );
    }
    let mk = |ant: Antenna| DatasetLabel {
        carrier_hz: first.carrier_hz,
        antenna: ant,
        ..label.clone()
    };
    let mut a = Vec::with_capacity(frames.len() * cfg.allocated);
    let mut b = Vec::with_capacity(frames.len() * cfg.allocated);
    for s in separated {
        a.extend(s.h_a);
        b.extend(s.h_b);
    }
    Ok(Estimate {
        a: FrameSet::new(mk(Antenna::A), cfg.allocated, a)?,
        b: FrameSet::new(mk(Antenna::B), cfg.allocated, b)?,
        shift,
        mean_leakage,
        leakage_warning,
    })
}

/// Windowed CIR of a single-antenna allocated response, `N/4` taps.
pub fn cir_from_response(h: &[Complex64], cfg: &SoundingConfig, carrier_hz: f64) -> CirEstimate {
    let dft = Dft::new(cfg.fft_size);
    let mut taps = response_to_cir(h, cfg, &dft);
    taps.truncate(cfg.window_len());
    CirEstimate { taps, carrier_hz }
}
