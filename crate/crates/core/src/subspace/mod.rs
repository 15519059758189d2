//! Subspace delay estimation: covariance, frequency smoothing, model order,
//! MUSIC pseudo-spectrum, peak extraction and gain inversion.

mod eigen;
mod gains;
mod music;
mod order;

pub use eigen::{hermitian_eigen, hermitian_eigenvalues, EigenSplit, HermitianEigen};
pub use gains::{estimate_gains, steering_matrix, GainFit, CONDITION_LIMIT};
pub use music::{
    music_spectrum, pick_peaks, run_music, DelayGrid, MusicConfig, MusicResult, PeakSet,
    SpectrumInfo,
};
pub use order::{elbow_order, elbow_order_db, OrderEstimate, DEFAULT_ELBOW_TOLERANCE_DB};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::FrameSet;

/// Hermitian covariance estimate over `dim` subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<Complex64>,
    /// Frames averaged.
    pub sample_count: usize,
    pub smoothed: bool,
    /// Subarray length `Ñ` (equal to `n_on` when unsmoothed).
    pub subarray_len: usize,
    /// Subarrays averaged per frame.
    pub subarrays: usize,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }
}

fn symmetrize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Upper triangle of `Σ_f h_f h_f^H / F`, one row per task so that every
/// entry is accumulated in frame order whatever the thread count.
fn outer_mean(fs: &FrameSet) -> DMatrix<Complex64> {
    let n = fs.n_on();
    let f = fs.n_frames();
    let scale = 1.0 / f as f64;
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![Complex64::new(0.0, 0.0); n - i];
            for row in fs.rows() {
                let hi = row[i];
                for (a, hj) in acc.iter_mut().zip(&row[i..]) {
                    *a += hi * hj.conj();
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            acc
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (d, v) in row.into_iter().enumerate() {
            m[(i, i + d)] = v;
            m[(i + d, i)] = v.conj();
        }
    }
    symmetrize(&mut m);
    m
}

/// `C = (1/F) Σ_f Ĥ_f Ĥ_f^H` over the allocated carriers.
pub fn sample_covariance(fs: &FrameSet) -> Result<CovarianceEstimate> {
    if fs.n_frames() == 0 {
        return Err(Error::input("empty frame set"));
    }
    Ok(CovarianceEstimate {
        matrix: outer_mean(fs),
        sample_count: fs.n_frames(),
        smoothed: false,
        subarray_len: fs.n_on(),
        subarrays: 1,
    })
}

/// Forward frequency smoothing: the mean of the outer products of all
/// `M = n_on − Ñ + 1` contiguous length-`Ñ` subcarrier windows over all
/// frames, `C̃[i,j] = (1/M) Σ_m C[m+i, m+j]`.
pub fn freq_smooth(fs: &FrameSet, subarray_len: usize) -> Result<CovarianceEstimate> {
    let n = fs.n_on();
    if subarray_len == 0 || subarray_len > n {
        return Err(Error::config(format!(
            "subarray length {subarray_len} outside 1..={n}"
        )));
    }
    let full = outer_mean(fs);
    let ns = subarray_len;
    let m = n - ns + 1;
    let scale = 1.0 / m as f64;
    let mut out = DMatrix::zeros(ns, ns);
    // sliding sums along each diagonal of the full covariance
    for d in 0..ns {
        let len = n - d;
        let mut prefix = Vec::with_capacity(len + 1);
        prefix.push(Complex64::new(0.0, 0.0));
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..len {
            acc += full[(t, t + d)];
            prefix.push(acc);
        }
        for i in 0..ns - d {
            let v = (prefix[i + m] - prefix[i]) * scale;
            out[(i, i + d)] = v;
            out[(i + d, i)] = v.conj();
        }
    }
    symmetrize(&mut out);
    Ok(CovarianceEstimate {
        matrix: out,
        sample_count: fs.n_frames(),
        smoothed: true,
        subarray_len: ns,
        subarrays: m,
    })
}

/// Default subarray length `⌈n_on / 2⌉`.
pub fn default_subarray_len(n_on: usize) -> usize {
    n_on.div_ceil(2)
}
