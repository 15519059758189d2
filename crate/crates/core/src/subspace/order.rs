use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ELBOW_TOLERANCE_DB: f64 = 1.0;

/// Eigenvalues below this fraction of the largest are floored before the
/// dB conversion; the floor is relative so a common scale factor cancels.
const RELATIVE_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub order: usize,
    /// Second differences `λ̃_i − 2λ̃_{i+1} + λ̃_{i+2}` for `i = 1..=L_max`.
    pub curvature_db: Vec<f64>,
    /// No curvature reached the tolerance; the order fell back to 1.
    pub flat: bool,
}

/// Elbow on eigenvalues already in dB: the 1-based index of the largest
/// second difference among the first `l_max`, ties to the smaller index.
/// `l_max` is clamped to `len − 2`.
pub fn elbow_order_db(lambda_db: &[f64], l_max: usize, tolerance_db: f64) -> Result<OrderEstimate> {
    if lambda_db.len() < 3 {
        return Err(Error::input("elbow needs at least three eigenvalues"));
    }
    if l_max == 0 {
        return Err(Error::config("maximum order must be at least 1"));
    }
    let l_max = l_max.min(lambda_db.len() - 2);
    let curvature_db: Vec<f64> = (0..l_max)
        .map(|i| lambda_db[i] - 2.0 * lambda_db[i + 1] + lambda_db[i + 2])
        .collect();
    let (best, max) = curvature_db
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let flat = !(max >= tolerance_db);
    Ok(OrderEstimate {
        order: if flat { 1 } else { best + 1 },
        curvature_db,
        flat,
    })
}

/// Elbow on linear descending eigenvalues.
pub fn elbow_order(lambda: &[f64], l_max: usize, tolerance_db: f64) -> Result<OrderEstimate> {
    let top = lambda.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::input("largest eigenvalue must be positive"));
    }
    let floor = top * RELATIVE_FLOOR;
    let db: Vec<f64> = lambda.iter().map(|&l| 10.0 * l.max(floor).log10()).collect();
    elbow_order_db(&db, l_max, tolerance_db)
}
