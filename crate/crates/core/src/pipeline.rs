//! End-to-end workflow over directories of dataset files: simulate,
//! estimate, MUSIC, cluster and report. Each stage reads the previous
//! stage's directory and writes one file per dataset, so stages can be run
//! separately from the command line or chained with [`run`].
//!
//! Outputs depend only on the configuration and seed. Datasets are processed
//! in parallel but every random draw comes from a per-dataset stream and
//! every file is written by exactly one task.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{cluster_tracks, multiband_report, ClusterReport, PdpTrace, Pooling, ReportBundle, ReportOptions};
use crate::error::{Error, Result};
use crate::estimator::{build_frameset, DatasetLabel, EstimatorConfig, Separator};
use crate::io::{self, DatasetManifest, PayloadKind};
use crate::rng;
use crate::sequence::{SoundingConfig, SoundingPair};
use crate::simulator::{
    apply_target, sample_channel, synthesize_averaged_rx, synthesize_frameset, AddedPath, Antenna,
    AntennaOverlay, Blockage, ChannelSpec, MultipathChannel, TargetOverlay,
};
use crate::subspace::{run_music, MusicConfig, MusicResult};
use crate::SPEED_OF_LIGHT;

pub const CONFIG_FILE: &str = "config.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SEQUENCE_FILE: &str = "sequence.json";
pub const MUSIC_SUFFIX: &str = ".music.json";
pub const ESTIMATE_SUFFIX: &str = ".estimate.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const REPORT_FILE: &str = "report.json";

/// What `simulate` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Per-antenna channel estimates, ready for `music`.
    #[default]
    FrameSet,
    /// Received time-domain windows, to be run through `estimate`.
    RxFrames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    On,
    Off,
    #[default]
    Both,
}

impl TargetMode {
    pub fn states(self) -> &'static [bool] {
        match self {
            TargetMode::On => &[true],
            TargetMode::Off => &[false],
            TargetMode::Both => &[false, true],
        }
    }
}

/// One measurement position of the receiver relative to the target area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub placement: String,
    #[serde(default)]
    pub orientation: String,
}

/// A reflection introduced by the target, `distance_m` beyond the first
/// path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedPathSpec {
    pub distance_m: f64,
    pub amplitude: f64,
}

/// Scaling of existing path `path` (0 = first arrival) by `factor`;
/// `0` blocks it completely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub path: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    pub added: Vec<AddedPathSpec>,
    pub blocked: Vec<BlockSpec>,
    pub antennas: Vec<Antenna>,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            added: vec![AddedPathSpec {
                distance_m: 4.7,
                amplitude: 0.7,
            }],
            blocked: vec![BlockSpec { path: 1, factor: 0.0 }],
            antennas: vec![Antenna::A, Antenna::B],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub format_version: u32,
    pub sounding: SoundingConfig,
    pub channel: ChannelSpec,
    pub scenarios: Vec<ScenarioSpec>,
    pub target: TargetSpec,
    pub output: OutputKind,
    pub estimator: EstimatorConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            format_version: io::FORMAT_VERSION,
            sounding: SoundingConfig::default(),
            channel: ChannelSpec::default(),
            scenarios: vec![ScenarioSpec {
                placement: "A".into(),
                orientation: "alpha".into(),
            }],
            target: TargetSpec::default(),
            output: OutputKind::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != io::FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: io::FORMAT_VERSION,
                found: self.format_version,
            });
        }
        self.sounding.validate()?;
        self.channel.validate(&self.sounding)?;
        if self.scenarios.is_empty() {
            return Err(Error::config("at least one scenario is required"));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i]
                .iter()
                .any(|o| o.placement == s.placement && o.orientation == s.orientation)
            {
                return Err(Error::config(format!(
                    "duplicate scenario {}/{}",
                    s.placement, s.orientation
                )));
            }
        }
        for b in &self.target.blocked {
            if b.path >= self.channel.min_paths || !(0.0..=1.0).contains(&b.factor) {
                return Err(Error::config(format!(
                    "blocked path {} must be below min_paths {} with factor in [0, 1]",
                    b.path, self.channel.min_paths
                )));
            }
        }
        for a in &self.target.added {
            if !(a.distance_m >= 0.0 && a.amplitude.is_finite()) {
                return Err(Error::config("added paths need distance >= 0 and finite amplitude"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SimulationConfig = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Turns a target description into an overlay for a concrete channel.
/// Added-path phases are uniform per carrier, drawn from `seed`.
pub fn build_overlay(
    ch: &MultipathChannel,
    spec: &TargetSpec,
    cfg: &SoundingConfig,
    seed: u64,
) -> Result<TargetOverlay> {
    let nc = cfg.carriers_hz.len();
    let mut overlay = TargetOverlay::default();
    for &ant in &spec.antennas {
        let taps = ch.taps(ant);
        let first = taps
            .first()
            .ok_or_else(|| Error::input(format!("antenna {} has no paths", ant.label())))?
            .delay_s;
        let mut rng = rng::stream(seed, rng::stream_id(&[0x7A, ant as u64]));
        let added = spec
            .added
            .iter()
            .map(|p| {
                let delay_s = first + p.distance_m / SPEED_OF_LIGHT;
                if delay_s >= cfg.max_delay_s() {
                    return Err(Error::config(format!(
                        "added path at {} m falls outside the delay window",
                        p.distance_m
                    )));
                }
                let gains = (0..nc)
                    .map(|_| Complex64::from_polar(p.amplitude, rng.random::<f64>() * std::f64::consts::TAU))
                    .collect();
                Ok(AddedPath { delay_s, gains })
            })
            .collect::<Result<Vec<_>>>()?;
        let blocked = spec
            .blocked
            .iter()
            .map(|b| Blockage {
                tap: b.path,
                attenuation: vec![b.factor; nc],
            })
            .collect();
        let ov = AntennaOverlay { added, blocked };
        match ant {
            Antenna::A => overlay.a = ov,
            Antenna::B => overlay.b = ov,
        }
    }
    Ok(overlay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub placement: String,
    pub orientation: String,
    pub channel: MultipathChannel,
    pub overlay: TargetOverlay,
    pub target_channel: MultipathChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub seed: u64,
    pub scenarios: Vec<ScenarioTruth>,
}

/// Per-scenario channels, with and without the target.
pub fn ground_truth(cfg: &SimulationConfig, seed: u64) -> Result<GroundTruth> {
    cfg.validate()?;
    let scenarios = cfg
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ch_seed = rng::stream_id(&[seed, i as u64]);
            let channel = sample_channel(&cfg.channel, &cfg.sounding, ch_seed)?;
            let overlay = build_overlay(&channel, &cfg.target, &cfg.sounding, ch_seed)?;
            let target_channel = apply_target(&channel, &overlay)?;
            target_channel.validate_window(&cfg.sounding)?;
            Ok(ScenarioTruth {
                placement: s.placement.clone(),
                orientation: s.orientation.clone(),
                channel,
                overlay,
                target_channel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth {
        format_version: io::FORMAT_VERSION,
        seed,
        scenarios,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes the resolved config, ground truth and one dataset per
/// (scenario, target state, carrier[, antenna]). Returns manifest paths in
/// name order.
pub fn simulate(cfg: &SimulationConfig, out: &Path, seed: u64, targets: TargetMode) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    io::create_dir(out)?;
    let truth = ground_truth(cfg, seed)?;
    io::write_json(&out.join(CONFIG_FILE), cfg)?;
    io::write_json(&out.join(GROUND_TRUTH_FILE), &truth)?;
    let sounding = &cfg.sounding;
    let pair = match cfg.output {
        OutputKind::RxFrames => {
            let pair = SoundingPair::new(rng::stream_id(&[seed, 0x5E0]), sounding)?;
            io::write_sequence(&out.join(SEQUENCE_FILE), &pair.x_a)?;
            Some(pair)
        }
        OutputKind::FrameSet => None,
    };

    let mut jobs = Vec::new();
    for (si, sc) in truth.scenarios.iter().enumerate() {
        for &target in targets.states() {
            jobs.push((si, sc, target));
        }
    }
    let written = jobs
        .par_iter()
        .map(|&(si, sc, target)| -> Result<Vec<PathBuf>> {
            let ch = if target { &sc.target_channel } else { &sc.channel };
            let ds_seed = rng::stream_id(&[seed, si as u64, target as u64]);
            let label = |carrier_hz: f64, antenna: Antenna| DatasetLabel {
                carrier_hz,
                antenna,
                target,
                placement: sc.placement.clone(),
                orientation: sc.orientation.clone(),
            };
            let mut paths = Vec::new();
            match &pair {
                None => {
                    for (ci, &carrier) in sounding.carriers_hz.iter().enumerate() {
                        for ant in [Antenna::A, Antenna::B] {
                            let fs = synthesize_frameset(ch, ant, ci, sounding, label(carrier, ant), ds_seed)?;
                            paths.push(io::store_frameset(out, &fs, sounding)?);
                        }
                    }
                }
                Some(pair) => {
                    let frames = synthesize_averaged_rx(ch, pair, sounding, ds_seed)?;
                    for (ci, chunk) in frames.chunks(sounding.frames).enumerate() {
                        let l = label(sounding.carriers_hz[ci], Antenna::A);
                        paths.push(io::store_rx(out, &l, chunk, sounding, SEQUENCE_FILE)?);
                    }
                }
            }
            Ok(paths)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut paths: Vec<PathBuf> = written.into_iter().flatten().collect();
    paths.sort();
    log::info!("simulate: {} datasets written to {}", paths.len(), out.display());
    Ok(paths)
}

/// Sounding parameters a dataset was recorded with.
pub fn sounding_for(m: &DatasetManifest) -> SoundingConfig {
    SoundingConfig {
        fft_size: m.fft_size,
        allocated: m.n_on,
        sample_rate_hz: m.sample_rate_hz,
        carriers_hz: vec![m.carrier_hz],
        frames: m.n_frames,
        hw_averages: 1,
        snr_db: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub source: String,
    pub shift: usize,
    pub mean_leakage: f64,
    pub leakage_warning: bool,
    pub outputs: Vec<String>,
}

/// Estimator settings stored by `simulate`, or the defaults.
pub fn estimator_config_in(dir: &Path) -> Result<EstimatorConfig> {
    let path = dir.join(CONFIG_FILE);
    if path.exists() {
        Ok(SimulationConfig::load(&path)?.estimator)
    } else {
        Ok(EstimatorConfig::default())
    }
}

/// Received frames to per-antenna frame sets.
pub fn estimate(input: &Path, out: &Path, est: &EstimatorConfig) -> Result<Vec<EstimateSummary>> {
    let mut rx = Vec::new();
    for p in io::list_manifests(input)? {
        let m: DatasetManifest = io::read_json(&p)?;
        if m.kind == PayloadKind::RxFrames {
            rx.push(p);
        }
    }
    if rx.is_empty() {
        return Err(Error::input(format!(
            "no received-frame datasets in {}",
            input.display()
        )));
    }
    io::create_dir(out)?;
    rx.par_iter()
        .map(|p| {
            let (m, frames, x_a) = io::load_rx(p)?;
            let cfg = sounding_for(&m);
            let sep = Separator::new(&cfg, est.separation)?;
            let e = build_frameset(&frames, &x_a, &cfg, est, &sep, &m.label())?;
            let outputs = [&e.a, &e.b]
                .iter()
                .map(|fs| {
                    let path = io::store_frameset(out, fs, &cfg)?;
                    Ok(file_name(&path))
                })
                .collect::<Result<Vec<_>>>()?;
            let summary = EstimateSummary {
                source: file_name(p),
                shift: e.shift,
                mean_leakage: e.mean_leakage,
                leakage_warning: e.leakage_warning,
                outputs,
            };
            io::write_json(&out.join(format!("{}{ESTIMATE_SUFFIX}", m.stem())), &summary)?;
            Ok(summary)
        })
        .collect()
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// MUSIC on every frame set in `input`; one `<id>.music.json` each.
pub fn music(input: &Path, out: &Path, mc: &MusicConfig) -> Result<Vec<MusicResult>> {
    let mut sets = Vec::new();
    for p in io::list_manifests(input)? {
        let m: DatasetManifest = io::read_json(&p)?;
        if m.kind == PayloadKind::FrameSet {
            sets.push(p);
        }
    }
    if sets.is_empty() {
        return Err(Error::input(format!("no frame sets in {}", input.display())));
    }
    io::create_dir(out)?;
    sets.par_iter()
        .map(|p| {
            let (m, fs) = io::load_frameset(p)?;
            let res = run_music(&fs, &sounding_for(&m), mc)?;
            io::write_json(&out.join(format!("{}{MUSIC_SUFFIX}", m.stem())), &res)?;
            log::info!("{}: order {}, peaks {:?}", m.stem(), res.order, res.peaks_s);
            Ok(res)
        })
        .collect()
}

pub fn load_music_results(dir: &Path) -> Result<Vec<MusicResult>> {
    let paths = io::list_with_suffix(dir, MUSIC_SUFFIX)?;
    if paths.is_empty() {
        return Err(Error::input(format!("no MUSIC results in {}", dir.display())));
    }
    paths.iter().map(|p| io::read_json(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k_max: usize,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            k_max: crate::clustering::DEFAULT_K_MAX,
            pooling: Pooling::default(),
            seed: 0,
        }
    }
}

fn clusters_csv(reports: &[ClusterReport]) -> String {
    let mut s = String::from("carrier_hz,target,dataset,k,cluster,centroid_s,centroid_m,count\n");
    for r in reports {
        let Some(sel) = &r.selection else { continue };
        let best = &sel.best;
        for (i, c) in best.centroids.iter().enumerate() {
            let count = best.assignments.iter().filter(|&&a| a == i).count();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.carrier_hz,
                r.target,
                r.dataset.as_deref().unwrap_or(""),
                best.k,
                i,
                c,
                c * SPEED_OF_LIGHT,
                count
            );
        }
    }
    s
}

/// Delay clustering of per-frame peaks; writes `clusters.json` and
/// `clusters.csv`.
pub fn cluster(input: &Path, out: &Path, opts: &ClusterOptions) -> Result<Vec<ClusterReport>> {
    let results = load_music_results(input)?;
    let reports = cluster_tracks(&results, opts.pooling, opts.k_max, opts.seed)?;
    if reports.iter().all(|r| r.selection.is_none()) {
        log::warn!("no per-frame peaks to cluster; run music with frame peaks enabled");
    }
    io::create_dir(out)?;
    io::write_json(&out.join(CLUSTERS_FILE), &reports)?;
    write_text(&out.join("clusters.csv"), &clusters_csv(&reports))?;
    Ok(reports)
}

fn trace_csv(t: &PdpTrace) -> String {
    let mut s = String::from("distance_m,value_db\n");
    for (d, v) in t.distance_m.iter().zip(&t.value_db) {
        let _ = writeln!(s, "{d},{v}");
    }
    s
}

/// Writes `report.json` and the CSV files behind every figure:
/// `pdp/<id>.cir.csv`, `pdp/<id>.music.csv`, `regions/<scenario>.csv`,
/// `histograms.csv` and `clusters.csv`.
pub fn write_report(bundle: &ReportBundle, out: &Path) -> Result<()> {
    io::create_dir(out)?;
    io::write_json(&out.join(REPORT_FILE), bundle)?;
    let pdp_dir = out.join("pdp");
    io::create_dir(&pdp_dir)?;
    for p in &bundle.pdp_pairs {
        write_text(&pdp_dir.join(format!("{}.cir.csv", p.dataset)), &trace_csv(&p.cir))?;
        write_text(&pdp_dir.join(format!("{}.music.csv", p.dataset)), &trace_csv(&p.music))?;
    }
    let region_dir = out.join("regions");
    io::create_dir(&region_dir)?;
    for r in &bundle.regions {
        let label = DatasetLabel {
            carrier_hz: r.carrier_hz,
            antenna: r.antenna,
            target: false,
            placement: r.placement.clone(),
            orientation: r.orientation.clone(),
        };
        let name = label.id().replacen("_empty", "", 1);
        let mut s = String::from("kind,start_m,end_m,delta_db\n");
        for (kind, list) in [("P", &r.p_regions), ("N", &r.n_regions)] {
            for g in list {
                let _ = writeln!(s, "{kind},{},{},{}", g.start_m, g.end_m, g.delta_db);
            }
        }
        write_text(&region_dir.join(format!("{name}.csv")), &s)?;
    }
    let mut h = String::from("carrier_hz,orientation,target,order,count\n");
    for g in &bundle.histograms {
        for (order, count) in &g.counts {
            let _ = writeln!(h, "{},{},{},{order},{count}", g.carrier_hz, g.orientation, g.target);
        }
    }
    write_text(&out.join("histograms.csv"), &h)?;
    write_text(&out.join("clusters.csv"), &clusters_csv(&bundle.clusters))?;
    Ok(())
}

pub fn report(input: &Path, out: &Path, opts: &ReportOptions) -> Result<ReportBundle> {
    let results = load_music_results(input)?;
    let bundle = multiband_report(&results, opts)?;
    write_report(&bundle, out)?;
    Ok(bundle)
}

/// Directory layout used by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunDirs {
    pub datasets: PathBuf,
    pub estimates: PathBuf,
    pub music: PathBuf,
    pub report: PathBuf,
}

impl RunDirs {
    pub fn under(root: &Path) -> Self {
        RunDirs {
            datasets: root.join("datasets"),
            estimates: root.join("estimates"),
            music: root.join("music"),
            report: root.join("report"),
        }
    }
}

/// Every stage in sequence under `root`.
pub fn run(
    cfg: &SimulationConfig,
    seed: u64,
    targets: TargetMode,
    mc: &MusicConfig,
    opts: &ReportOptions,
    root: &Path,
) -> Result<ReportBundle> {
    let dirs = RunDirs::under(root);
    simulate(cfg, &dirs.datasets, seed, targets)?;
    let frames_dir = match cfg.output {
        OutputKind::FrameSet => &dirs.datasets,
        OutputKind::RxFrames => {
            estimate(&dirs.datasets, &dirs.estimates, &cfg.estimator)?;
            &dirs.estimates
        }
    };
    music(frames_dir, &dirs.music, mc)?;
    report(&dirs.music, &dirs.report, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config() -> SimulationConfig {
        SimulationConfig {
            sounding: SoundingConfig {
                frames: 8,
                hw_averages: 10,
                snr_db: Some(20.0),
                ..SoundingConfig::default()
            },
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: SimulationConfig = serde_json::from_str(r#"{"output": "rx_frames"}"#).unwrap();
        assert_eq!(cfg.output, OutputKind::RxFrames);
        assert_eq!(cfg.sounding, SoundingConfig::default());
        cfg.validate().unwrap();
        let text = serde_json::to_string(&SimulationConfig::default()).unwrap();
        let back: SimulationConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, SimulationConfig::default());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SimulationConfig::default();
        cfg.target.blocked = vec![BlockSpec { path: 7, factor: 0.0 }];
        assert!(cfg.validate().is_err());
        let mut cfg = SimulationConfig::default();
        cfg.scenarios.push(cfg.scenarios[0].clone());
        assert!(cfg.validate().is_err());
        let mut cfg = SimulationConfig::default();
        cfg.format_version = 2;
        assert!(matches!(cfg.validate(), Err(Error::FormatVersion { .. })));
    }

    #[test]
    fn overlay_places_path_relative_to_first_arrival() {
        let cfg = SimulationConfig::default();
        let gt = ground_truth(&cfg, 3).unwrap();
        let sc = &gt.scenarios[0];
        for ant in [Antenna::A, Antenna::B] {
            let first = sc.channel.taps(ant)[0].delay_s;
            let added = &sc.overlay.get(ant).added[0];
            assert!(((added.delay_s - first) * SPEED_OF_LIGHT - 4.7).abs() < 1e-9);
            assert!(added.gains.iter().all(|g| (g.norm() - 0.7).abs() < 1e-12));
            let blocked = sc.target_channel.taps(ant).iter().filter(|t| t.gains.iter().all(|g| g.norm() == 0.0)).count();
            assert_eq!(blocked, 1);
        }
        assert_eq!(ground_truth(&cfg, 3).unwrap(), gt);
        assert_ne!(ground_truth(&cfg, 4).unwrap(), gt);
    }

    #[test]
    fn simulate_frame_sets_layout() {
        let dir = tempfile::tempdir().unwrap();
        let paths = simulate(&small_config(), dir.path(), 1, TargetMode::Both).unwrap();
        // 1 scenario × 2 target states × 2 carriers × 2 antennas
        assert_eq!(paths.len(), 8);
        assert!(dir.path().join(GROUND_TRUTH_FILE).exists());
        let (m, fs) = io::load_frameset(&paths[0]).unwrap();
        assert_eq!(fs.n_frames(), 8);
        assert_eq!(m.n_on, 521);
        assert!(estimate(dir.path(), &dir.path().join("e"), &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn rx_path_through_estimator_matches_truth() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.output = OutputKind::RxFrames;
        cfg.sounding.snr_db = Some(40.0);
        cfg.sounding.carriers_hz = vec![6.5e9];
        cfg.channel.first_delay = crate::simulator::FirstDelay::Zero;
        let paths = simulate(&cfg, &dir.path().join("d"), 2, TargetMode::Off).unwrap();
        assert_eq!(paths.len(), 1);
        let sums = estimate(&dir.path().join("d"), &dir.path().join("e"), &cfg.estimator).unwrap();
        assert_eq!(sums.len(), 1);
        assert_eq!(sums[0].shift, 0);
        let truth: GroundTruth = io::read_json(&dir.path().join("d").join(GROUND_TRUTH_FILE)).unwrap();
        let ch = &truth.scenarios[0].channel;
        for (name, ant) in sums[0].outputs.iter().zip([Antenna::A, Antenna::B]) {
            let (_, fs) = io::load_frameset(&dir.path().join("e").join(name)).unwrap();
            let h = ch.response(ant, 0, &cfg.sounding);
            let mean = fs.mean_row();
            let err: f64 = mean.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(err / norm < 0.02, "antenna {:?}: {}", ant, err / norm);
        }
    }
}
