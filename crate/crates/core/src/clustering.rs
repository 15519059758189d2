//! One-dimensional K-means on relative path delays, with the number of
//! clusters chosen by the mean silhouette score.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_K_MAX: usize = 8;
const MAX_ITERATIONS: usize = 500;

/// Delay samples relative to each frame's first arrival.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeDelays {
    pub samples: Vec<f64>,
    /// Source frame of each sample.
    pub frame: Vec<usize>,
    /// Frames dropped for having no peaks.
    pub skipped: Vec<usize>,
}

/// Subtracts each frame's minimum peak delay and concatenates all frames.
pub fn relative_delays(peak_sets: &[Vec<f64>]) -> RelativeDelays {
    let mut out = RelativeDelays::default();
    for (f, peaks) in peak_sets.iter().enumerate() {
        let Some(first) = peaks.iter().cloned().reduce(f64::min) else {
            log::warn!("frame {f} has no peaks, skipped");
            out.skipped.push(f);
            continue;
        };
        for p in peaks {
            out.samples.push(p - first);
            out.frame.push(f);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayClustering {
    pub k: usize,
    /// Ascending.
    pub centroids: Vec<f64>,
    /// Cluster of each input sample, in input order; cluster 0 has the
    /// smallest centroid.
    pub assignments: Vec<usize>,
    pub wcss: f64,
    /// `None` for `K = 1`.
    pub mean_silhouette: Option<f64>,
    /// Trivial `K = 1` fallback for inputs with fewer than two distinct
    /// values.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub mean_silhouette: f64,
    pub wcss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub best: DelayClustering,
    pub scores: Vec<KScore>,
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::input("no delay samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite delay sample"));
    }
    Ok(())
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        0
    } else {
        1 + sorted.windows(2).filter(|w| w[1] != w[0]).count()
    }
}

/// Index of the nearest centroid (ascending centroids), ties to the lower.
fn nearest(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut bd = (x - centroids[0]).abs();
    for (j, &c) in centroids.iter().enumerate().skip(1) {
        let d = (x - c).abs();
        if d < bd {
            best = j;
            bd = d;
        }
    }
    best
}

fn wcss_of(sorted: &[f64], assign: &[usize], centroids: &[f64]) -> f64 {
    sorted
        .iter()
        .zip(assign)
        .map(|(x, &a)| (x - centroids[a]).powi(2))
        .sum()
}

/// k-means++ seeding over sorted samples.
fn seed_centroids(sorted: &[f64], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = sorted.len();
    let mut centroids = vec![sorted[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = sorted.iter().map(|x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    idx = i;
                    break;
                }
            }
            // guard against rounding landing on an existing centroid
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = sorted[pick];
        centroids.push(c);
        for (w, x) in d2.iter_mut().zip(sorted) {
            *w = w.min((x - c).powi(2));
        }
    }
    centroids.sort_by(f64::total_cmp);
    centroids
}

#[derive(Debug, Clone)]
struct LloydRun {
    centroids: Vec<f64>,
    assign: Vec<usize>,
    wcss: f64,
    /// WCSS after every half step, checked by the tests.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

fn lloyd(sorted: &[f64], mut centroids: Vec<f64>) -> LloydRun {
    let k = centroids.len();
    let mut assign: Vec<usize> = sorted.iter().map(|&x| nearest(x, &centroids)).collect();
    let mut history = vec![wcss_of(sorted, &assign, &centroids)];
    for _ in 0..MAX_ITERATIONS {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (x, &a) in sorted.iter().zip(&assign) {
            sum[a] += x;
            cnt[a] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centroids[j] = sum[j] / cnt[j] as f64;
            } else {
                // move an empty cluster onto the worst-fitted sample
                let (far, _) = sorted
                    .iter()
                    .zip(&assign)
                    .enumerate()
                    .map(|(i, (x, &a))| (i, (x - centroids[a]).abs()))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
                centroids[j] = sorted[far];
            }
        }
        let wcss_centroid = wcss_of(sorted, &assign, &centroids);
        history.push(wcss_centroid);
        let next: Vec<usize> = sorted.iter().map(|&x| nearest(x, &centroids)).collect();
        let stable = next == assign;
        assign = next;
        history.push(wcss_of(sorted, &assign, &centroids));
        if stable {
            break;
        }
    }
    // relabel so that centroids are ascending
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let centroids: Vec<f64> = order.iter().map(|&j| centroids[j]).collect();
    let assign: Vec<usize> = assign.iter().map(|&a| rank[a]).collect();
    let wcss = wcss_of(sorted, &assign, &centroids);
    LloydRun {
        centroids,
        assign,
        wcss,
        history,
    }
}

fn sort_with_index(samples: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    (idx.iter().map(|&i| samples[i]).collect(), idx)
}

fn run_restarts(sorted: &[f64], k: usize, seed: u64, restarts: usize) -> LloydRun {
    let runs: Vec<LloydRun> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            lloyd(sorted, seed_centroids(sorted, k, &mut rng))
        })
        .collect();
    // lowest WCSS, ties to the lowest restart index
    runs.into_iter()
        .reduce(|best, r| if r.wcss < best.wcss { r } else { best })
        .expect("at least one restart")
}

/// K-means with k-means++ seeding and `restarts` independent runs; the run
/// with the lowest WCSS is kept. Samples are sorted internally, so the
/// result does not depend on input order.
pub fn kmeans_1d_with(samples: &[f64], k: usize, seed: u64, restarts: usize) -> Result<DelayClustering> {
    check_samples(samples)?;
    if k == 0 {
        return Err(Error::input("K must be at least 1"));
    }
    let (sorted, idx) = sort_with_index(samples);
    let distinct = distinct_count(&sorted);
    if k > distinct {
        return Err(Error::input(format!(
            "K = {k} exceeds the {distinct} distinct samples"
        )));
    }
    let run = run_restarts(&sorted, k, seed, restarts);
    let mut assignments = vec![0; samples.len()];
    for (pos, &orig) in idx.iter().enumerate() {
        assignments[orig] = run.assign[pos];
    }
    let mut out = DelayClustering {
        k,
        centroids: run.centroids,
        assignments,
        wcss: run.wcss,
        mean_silhouette: None,
        degenerate: false,
    };
    if k >= 2 {
        out.mean_silhouette = Some(silhouette(&out, samples)?);
    }
    Ok(out)
}

pub fn kmeans_1d(samples: &[f64], k: usize, seed: u64) -> Result<DelayClustering> {
    kmeans_1d_with(samples, k, seed, DEFAULT_RESTARTS)
}

/// Per-sample silhouette coefficients. Members of singleton clusters score
/// 0, as does any sample whose intra- and nearest-cluster mean distances are
/// both zero.
pub fn silhouette_samples(cl: &DelayClustering, samples: &[f64]) -> Result<Vec<f64>> {
    if cl.k < 2 {
        return Err(Error::input("silhouette is undefined for K = 1"));
    }
    if cl.assignments.len() != samples.len() {
        return Err(Error::input("assignments and samples differ in length"));
    }
    // per-cluster sorted members with prefix sums
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); cl.k];
    for (&x, &a) in samples.iter().zip(&cl.assignments) {
        if a >= cl.k {
            return Err(Error::input("assignment out of range"));
        }
        members[a].push(x);
    }
    let prefix: Vec<Vec<f64>> = members
        .iter_mut()
        .map(|m| {
            m.sort_by(f64::total_cmp);
            let mut p = Vec::with_capacity(m.len() + 1);
            p.push(0.0);
            let mut acc = 0.0;
            for v in m.iter() {
                acc += v;
                p.push(acc);
            }
            p
        })
        .collect();
    // Σ |x − m| over a sorted cluster
    let abs_sum = |x: f64, j: usize| -> f64 {
        let m = &members[j];
        let p = &prefix[j];
        let below = m.partition_point(|&v| v <= x);
        let n = m.len();
        (below as f64 * x - p[below]) + (p[n] - p[below] - (n - below) as f64 * x)
    };
    Ok(samples
        .iter()
        .zip(&cl.assignments)
        .map(|(&x, &a)| {
            let own = members[a].len();
            if own <= 1 {
                return 0.0;
            }
            let intra = abs_sum(x, a) / (own - 1) as f64;
            let inter = (0..cl.k)
                .filter(|&j| j != a && !members[j].is_empty())
                .map(|j| abs_sum(x, j) / members[j].len() as f64)
                .fold(f64::INFINITY, f64::min);
            if !inter.is_finite() {
                return 0.0;
            }
            let den = intra.max(inter);
            if den > 0.0 {
                ((inter - intra) / den).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean silhouette coefficient.
pub fn silhouette(cl: &DelayClustering, samples: &[f64]) -> Result<f64> {
    let s = silhouette_samples(cl, samples)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Best mean silhouette over `K = 2..=k_max`, ties to the smaller K. Inputs
/// with fewer than two distinct values fall back to a flagged `K = 1`.
pub fn select_k(samples: &[f64], k_max: usize, seed: u64) -> Result<KSelection> {
    check_samples(samples)?;
    let (sorted, _) = sort_with_index(samples);
    let distinct = distinct_count(&sorted);
    if distinct < 2 {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let wcss = samples.iter().map(|x| (x - mean).powi(2)).sum();
        log::warn!("fewer than two distinct delays, using a single cluster");
        return Ok(KSelection {
            best: DelayClustering {
                k: 1,
                centroids: vec![mean],
                assignments: vec![0; samples.len()],
                wcss,
                mean_silhouette: None,
                degenerate: true,
            },
            scores: Vec::new(),
        });
    }
    if k_max < 2 {
        return Err(Error::config("K range must include at least K = 2"));
    }
    let upper = k_max.min(distinct);
    let mut best: Option<DelayClustering> = None;
    let mut scores = Vec::new();
    for k in 2..=upper {
        let cl = kmeans_1d(samples, k, seed)?;
        let s = cl.mean_silhouette.unwrap_or(f64::NEG_INFINITY);
        scores.push(KScore {
            k,
            mean_silhouette: s,
            wcss: cl.wcss,
        });
        if best
            .as_ref()
            .is_none_or(|b| s > b.mean_silhouette.unwrap_or(f64::NEG_INFINITY))
        {
            best = Some(cl);
        }
    }
    Ok(KSelection {
        best: best.expect("K range is nonempty"),
        scores,
    })
}
