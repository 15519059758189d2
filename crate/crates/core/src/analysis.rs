//! Analysis products: CIR-PDP against MUSIC-PDP traces, multipath-count
//! histograms, delay-cluster tracks and P/N regions contrasting spectra
//! measured with and without the target.
//!
//! Every distance is `c·τ` with `c` = [`SPEED_OF_LIGHT`], measured from the
//! first arriving path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{relative_delays, select_k, KSelection};
use crate::dsp::power_db;
use crate::error::{Error, Result};
use crate::estimator::CirEstimate;
use crate::simulator::Antenna;
use crate::subspace::MusicResult;
use crate::SPEED_OF_LIGHT;

pub const DEFAULT_GAMMA_DB: f64 = 6.0;
pub const DEFAULT_MERGE_WIDTH_M: f64 = 0.3;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PdpTrace {
    pub distance_m: Vec<f64>,
    pub value_db: Vec<f64>,
}

impl PdpTrace {
    fn shifted(mut self, origin_m: f64) -> Self {
        self.distance_m.iter_mut().for_each(|d| *d -= origin_m);
        self
    }
}

/// `|ĥ[n]|²` in dB against `n·c/B`.
pub fn cir_pdp(cir: &CirEstimate, sample_rate_hz: f64) -> Result<PdpTrace> {
    if cir.taps.iter().all(|t| t.norm_sqr() == 0.0) {
        return Err(Error::input("CIR is all zero"));
    }
    let bin_m = SPEED_OF_LIGHT / sample_rate_hz;
    Ok(PdpTrace {
        distance_m: (0..cir.taps.len()).map(|n| n as f64 * bin_m).collect(),
        value_db: cir.taps.iter().map(|t| power_db(t.norm_sqr())).collect(),
    })
}

/// MUSIC pseudo-spectrum in dB against `c·τ`.
pub fn music_pdp(res: &MusicResult) -> PdpTrace {
    PdpTrace {
        distance_m: res.grid_delays().iter().map(|t| t * SPEED_OF_LIGHT).collect(),
        value_db: res.spectrum_db.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpPair {
    pub dataset: String,
    pub carrier_hz: f64,
    pub antenna: Antenna,
    pub target: bool,
    /// Delay of the first MUSIC peak; both axes start there.
    pub origin_s: f64,
    pub cir: PdpTrace,
    pub music: PdpTrace,
    pub peaks_m: Vec<f64>,
}

fn first_peak(res: &MusicResult) -> Option<f64> {
    res.peaks_s.iter().cloned().reduce(f64::min)
}

pub fn pdp_pair(res: &MusicResult) -> Result<PdpPair> {
    let origin_s = first_peak(res).unwrap_or(0.0);
    let origin_m = origin_s * SPEED_OF_LIGHT;
    Ok(PdpPair {
        dataset: res.label.id(),
        carrier_hz: res.label.carrier_hz,
        antenna: res.label.antenna,
        target: res.label.target,
        origin_s,
        cir: cir_pdp(&res.cir, res.sample_rate_hz)?.shifted(origin_m),
        music: music_pdp(res).shifted(origin_m),
        peaks_m: res
            .peaks_s
            .iter()
            .map(|t| (t - origin_s) * SPEED_OF_LIGHT)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathHistogram {
    pub carrier_hz: f64,
    pub orientation: String,
    pub target: bool,
    /// Estimated order → number of datasets.
    pub counts: BTreeMap<usize, usize>,
    /// Most frequent order, ties to the smaller.
    pub mode: usize,
    pub total: usize,
}

/// Counts of the estimated order grouped by carrier, orientation and target
/// state, in ascending group order.
pub fn multipath_histogram(results: &[MusicResult]) -> Vec<MultipathHistogram> {
    let mut groups: Vec<MultipathHistogram> = Vec::new();
    for r in results {
        let l = &r.label;
        let pos = groups.iter().position(|g| {
            g.carrier_hz == l.carrier_hz && g.orientation == l.orientation && g.target == l.target
        });
        let g = match pos {
            Some(p) => &mut groups[p],
            None => {
                groups.push(MultipathHistogram {
                    carrier_hz: l.carrier_hz,
                    orientation: l.orientation.clone(),
                    target: l.target,
                    counts: BTreeMap::new(),
                    mode: 0,
                    total: 0,
                });
                groups.last_mut().expect("just pushed")
            }
        };
        *g.counts.entry(r.order).or_insert(0) += 1;
        g.total += 1;
    }
    for g in &mut groups {
        g.mode = g
            .counts
            .iter()
            .fold((0, 0), |(bk, bc), (&k, &c)| if c > bc { (k, c) } else { (bk, bc) })
            .0;
    }
    groups.sort_by(|a, b| {
        a.carrier_hz
            .total_cmp(&b.carrier_hz)
            .then_with(|| a.orientation.cmp(&b.orientation))
            .then_with(|| a.target.cmp(&b.target))
    });
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub start_m: f64,
    pub end_m: f64,
    /// Mean of `with − without` in dB over the grid points of the interval.
    pub delta_db: f64,
}

impl Region {
    pub fn covers(&self, d: f64, tolerance_m: f64) -> bool {
        d >= self.start_m - tolerance_m && d <= self.end_m + tolerance_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub carrier_hz: f64,
    pub antenna: Antenna,
    pub placement: String,
    pub orientation: String,
    pub gamma_db: f64,
    pub merge_width_m: f64,
    /// Common distance origin of both spectra.
    pub origin_s: f64,
    /// Both target states were available.
    pub paired: bool,
    pub p_regions: Vec<Region>,
    pub n_regions: Vec<Region>,
}

fn merge_flags(flags: &[bool], dist: &[f64], diff: &[f64], width: f64) -> Vec<Region> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        let mut j = i + 1;
        while j < flags.len() && dist[j] - dist[end] <= width {
            if flags[j] {
                end = j;
            }
            j += 1;
        }
        let span = &diff[start..=end];
        out.push(Region {
            start_m: dist[start],
            end_m: dist[end],
            delta_db: span.iter().sum::<f64>() / span.len() as f64,
        });
        i = end + 1;
    }
    out
}

/// P-regions where the with-target spectrum exceeds the target-free one by
/// at least `gamma_db`, N-regions for the reverse. Flagged grid points
/// closer than `merge_width_m` are merged into one interval.
pub fn pn_regions(
    with_t: &MusicResult,
    without_t: &MusicResult,
    gamma_db: f64,
    merge_width_m: f64,
) -> Result<RegionReport> {
    if with_t.grid != without_t.grid || with_t.spectrum_db.len() != without_t.spectrum_db.len() {
        return Err(Error::input("spectra are on different delay grids"));
    }
    if !(gamma_db > 0.0) || !(merge_width_m >= 0.0) {
        return Err(Error::config("gamma must be positive and merge width non-negative"));
    }
    let origin_s = match (first_peak(with_t), first_peak(without_t)) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    };
    let dist: Vec<f64> = with_t
        .grid_delays()
        .iter()
        .map(|t| (t - origin_s) * SPEED_OF_LIGHT)
        .collect();
    let diff: Vec<f64> = with_t
        .spectrum_db
        .iter()
        .zip(&without_t.spectrum_db)
        .map(|(a, b)| a - b)
        .collect();
    let p: Vec<bool> = diff.iter().map(|&d| d >= gamma_db).collect();
    let n: Vec<bool> = diff.iter().map(|&d| d <= -gamma_db).collect();
    let l = &without_t.label;
    Ok(RegionReport {
        carrier_hz: l.carrier_hz,
        antenna: l.antenna,
        placement: l.placement.clone(),
        orientation: l.orientation.clone(),
        gamma_db,
        merge_width_m,
        origin_s,
        paired: true,
        p_regions: merge_flags(&p, &dist, &diff, merge_width_m),
        n_regions: merge_flags(&n, &dist, &diff, merge_width_m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One clustering per (carrier, target state), pooling antennas and
    /// placements.
    #[default]
    CarrierTarget,
    /// One clustering per dataset.
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub carrier_hz: f64,
    pub target: bool,
    /// Dataset id when clustering per dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub samples_s: Vec<f64>,
    pub skipped_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<KSelection>,
}

impl ClusterReport {
    pub fn centroids_m(&self) -> Vec<f64> {
        self.selection
            .as_ref()
            .map(|s| s.best.centroids.iter().map(|c| c * SPEED_OF_LIGHT).collect())
            .unwrap_or_default()
    }
}

/// Clusters per-frame relative delays from `results` according to
/// `pooling`. Groups without any samples get no selection.
pub fn cluster_tracks(results: &[MusicResult], pooling: Pooling, k_max: usize, seed: u64) -> Result<Vec<ClusterReport>> {
    let mut groups: Vec<(f64, bool, Option<String>, Vec<Vec<f64>>)> = Vec::new();
    for r in results {
        let key_ds = match pooling {
            Pooling::CarrierTarget => None,
            Pooling::Dataset => Some(r.label.id()),
        };
        let pos = groups.iter().position(|g| {
            g.0 == r.label.carrier_hz && g.1 == r.label.target && g.2 == key_ds
        });
        let g = match pos {
            Some(p) => &mut groups[p],
            None => {
                groups.push((r.label.carrier_hz, r.label.target, key_ds, Vec::new()));
                groups.last_mut().expect("just pushed")
            }
        };
        g.3.extend(r.frame_peaks_s.iter().cloned());
    }
    groups.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    groups
        .into_iter()
        .map(|(carrier_hz, target, dataset, peaks)| {
            let rel = relative_delays(&peaks);
            let selection = if rel.samples.is_empty() {
                None
            } else {
                Some(select_k(&rel.samples, k_max, seed)?)
            };
            Ok(ClusterReport {
                carrier_hz,
                target,
                dataset,
                samples_s: rel.samples,
                skipped_frames: rel.skipped.len(),
                selection,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub gamma_db: f64,
    pub merge_width_m: f64,
    pub k_max: usize,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            gamma_db: DEFAULT_GAMMA_DB,
            merge_width_m: DEFAULT_MERGE_WIDTH_M,
            k_max: crate::clustering::DEFAULT_K_MAX,
            pooling: Pooling::default(),
            seed: 0,
        }
    }
}

/// Source data for every figure across all carriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format_version: u32,
    pub speed_of_light_m_s: f64,
    pub carriers_hz: Vec<f64>,
    pub histograms: Vec<MultipathHistogram>,
    pub pdp_pairs: Vec<PdpPair>,
    pub regions: Vec<RegionReport>,
    pub clusters: Vec<ClusterReport>,
}

/// Assembles histograms, PDP pairs, one region report per
/// (carrier, antenna, placement, orientation) scenario and cluster tracks.
/// Scenarios lacking one target state get an empty, unpaired report.
pub fn multiband_report(results: &[MusicResult], opts: &ReportOptions) -> Result<ReportBundle> {
    if results.is_empty() {
        return Err(Error::input("no results to report"));
    }
    let mut carriers: Vec<f64> = Vec::new();
    for r in results {
        if !carriers.contains(&r.label.carrier_hz) {
            carriers.push(r.label.carrier_hz);
        }
    }
    carriers.sort_by(f64::total_cmp);

    let pdp_pairs = results
        .iter()
        .map(pdp_pair)
        .collect::<Result<Vec<_>>>()?;

    type Scenario<'a> = (f64, Antenna, &'a str, &'a str);
    let mut scenarios: Vec<(Scenario, Option<&MusicResult>, Option<&MusicResult>)> = Vec::new();
    for r in results {
        let l = &r.label;
        let key = (l.carrier_hz, l.antenna, l.placement.as_str(), l.orientation.as_str());
        let pos = scenarios.iter().position(|s| s.0 == key);
        let s = match pos {
            Some(p) => &mut scenarios[p],
            None => {
                scenarios.push((key, None, None));
                scenarios.last_mut().expect("just pushed")
            }
        };
        let slot = if l.target { &mut s.1 } else { &mut s.2 };
        if slot.is_some() {
            return Err(Error::input(format!("duplicate dataset {}", l.id())));
        }
        *slot = Some(r);
    }
    scenarios.sort_by(|a, b| {
        a.0 .0
            .total_cmp(&b.0 .0)
            .then_with(|| a.0 .1.cmp(&b.0 .1))
            .then_with(|| a.0 .2.cmp(b.0 .2))
            .then_with(|| a.0 .3.cmp(b.0 .3))
    });
    let regions = scenarios
        .iter()
        .map(|(key, with, without)| match (with, without) {
            (Some(w), Some(wo)) => pn_regions(w, wo, opts.gamma_db, opts.merge_width_m),
            _ => Ok(RegionReport {
                carrier_hz: key.0,
                antenna: key.1,
                placement: key.2.to_string(),
                orientation: key.3.to_string(),
                gamma_db: opts.gamma_db,
                merge_width_m: opts.merge_width_m,
                origin_s: 0.0,
                paired: false,
                p_regions: Vec::new(),
                n_regions: Vec::new(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReportBundle {
        format_version: REPORT_FORMAT_VERSION,
        speed_of_light_m_s: SPEED_OF_LIGHT,
        carriers_hz: carriers,
        histograms: multipath_histogram(results),
        pdp_pairs,
        regions,
        clusters: cluster_tracks(results, opts.pooling, opts.k_max, opts.seed)?,
    })
}
