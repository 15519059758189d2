use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FrameSet;
use crate::sequence::SoundingConfig;

/// Steering matrices with a larger condition number are flagged.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainFit {
    pub gains: Vec<Complex64>,
    /// `‖Ĥ − A α̂‖` on the frame-mean response.
    pub residual_norm: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// `A[k, l] = e^{-j2π k τ_l B / N}` over the allocated subcarriers.
pub fn steering_matrix(delays_s: &[f64], cfg: &SoundingConfig) -> DMatrix<Complex64> {
    let ks: Vec<i64> = cfg.subcarriers().collect();
    let n = cfg.fft_size as f64;
    DMatrix::from_fn(ks.len(), delays_s.len(), |r, c| {
        let ph = -2.0 * std::f64::consts::PI * ks[r] as f64 * delays_s[c] * cfg.sample_rate_hz / n;
        Complex64::from_polar(1.0, ph)
    })
}

/// Least-squares path gains for given delays on the frame-mean response,
/// minimum-norm through a truncated SVD when the columns are nearly
/// collinear.
pub fn estimate_gains(fs: &FrameSet, delays_s: &[f64], cfg: &SoundingConfig) -> Result<GainFit> {
    if fs.n_on() != cfg.allocated {
        return Err(Error::input("frame set width differs from allocation"));
    }
    if delays_s.len() >= cfg.allocated {
        return Err(Error::input("more delays than subcarriers"));
    }
    let mut sorted = delays_s.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input("duplicate delays"));
    }
    if sorted.iter().any(|d| !d.is_finite()) {
        return Err(Error::input("non-finite delay"));
    }
    let h = DVector::from_vec(fs.mean_row());
    if delays_s.is_empty() {
        return Ok(GainFit {
            gains: Vec::new(),
            residual_norm: h.norm(),
            condition: 1.0,
            ill_conditioned: false,
        });
    }
    let a = steering_matrix(delays_s, cfg);
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let ill_conditioned = condition > CONDITION_LIMIT;
    if ill_conditioned {
        log::warn!("steering matrix condition number {condition:.3e} above limit");
    }
    let x = svd
        .solve(&h, smax / CONDITION_LIMIT)
        .map_err(|e| Error::numerical(format!("gain inversion: {e}")))?;
    let residual_norm = (&h - &a * &x).norm();
    Ok(GainFit {
        gains: x.iter().cloned().collect(),
        residual_norm,
        condition,
        ill_conditioned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::DatasetLabel;
    use crate::simulator::{Antenna, MultipathChannel, Tap};

    fn fs_for(cfg: &SoundingConfig, taps: &[(f64, Complex64)]) -> FrameSet {
        let ch = MultipathChannel::antenna_a_only(
            cfg.carriers_hz.clone(),
            taps.iter()
                .map(|&(d, g)| Tap {
                    delay_s: d / cfg.sample_rate_hz,
                    gains: vec![g; cfg.carriers_hz.len()],
                })
                .collect(),
        );
        FrameSet::new(DatasetLabel::default(), cfg.allocated, ch.response(Antenna::A, 0, cfg)).unwrap()
    }

    #[test]
    fn unit_gain_single_path() {
        let cfg = SoundingConfig::default();
        let fs = fs_for(&cfg, &[(0.0, Complex64::new(1.0, 0.0))]);
        let fit = estimate_gains(&fs, &[0.0], &cfg).unwrap();
        assert!((fit.gains[0] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(!fit.ill_conditioned);
    }

    #[test]
    fn three_paths_with_true_delays() {
        let cfg = SoundingConfig::default();
        let taps = [
            (0.3, Complex64::new(1.0, -0.2)),
            (6.8, Complex64::new(-0.4, 0.5)),
            (13.25, Complex64::new(0.1, 0.3)),
        ];
        let fs = fs_for(&cfg, &taps);
        let delays: Vec<f64> = taps.iter().map(|t| t.0 / cfg.sample_rate_hz).collect();
        let fit = estimate_gains(&fs, &delays, &cfg).unwrap();
        for (g, t) in fit.gains.iter().zip(&taps) {
            assert!((g - t.1).norm() / t.1.norm() < 1e-6);
        }
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn duplicates_rejected_and_collinear_flagged() {
        let cfg = SoundingConfig::default();
        let fs = fs_for(&cfg, &[(0.0, Complex64::new(1.0, 0.0))]);
        let d = 1.0 / cfg.sample_rate_hz;
        assert!(matches!(estimate_gains(&fs, &[d, d], &cfg), Err(Error::InvalidInput(_))));
        let fit = estimate_gains(&fs, &[d, d * (1.0 + 1e-12)], &cfg).unwrap();
        assert!(fit.ill_conditioned);
        assert!(fit.gains.iter().all(|g| g.norm().is_finite()));
    }
}
