use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use chansound::analysis::{multiband_report, multipath_histogram, ReportOptions};
use chansound::estimator::DatasetLabel;
use chansound::pipeline::{ground_truth, BlockSpec, ScenarioSpec, SimulationConfig, TargetSpec};
use chansound::rng;
use chansound::sequence::SoundingConfig;
use chansound::simulator::{
    apply_target, synthesize_frameset, AddedPath, Antenna, AntennaOverlay, Blockage, MultipathChannel, Tap,
    TargetOverlay,
};
use chansound::subspace::{run_music, MusicConfig, MusicResult};

fn cfg() -> SoundingConfig {
    SoundingConfig {
        carriers_hz: vec![6.5e9],
        frames: 50,
        hw_averages: 1,
        snr_db: Some(30.0),
        ..SoundingConfig::default()
    }
}

fn channel(cfg: &SoundingConfig, offsets: &[f64], seed: u64) -> (MultipathChannel, f64) {
    let mut r = rng::stream(seed, 0xBA);
    let f0 = r.random::<f64>();
    let taps = offsets
        .iter()
        .map(|o| Tap {
            delay_s: (f0 + o) / cfg.sample_rate_hz,
            gains: vec![Complex64::from_polar(1.0, r.random::<f64>() * TAU)],
        })
        .collect();
    (MultipathChannel::antenna_a_only(cfg.carriers_hz.clone(), taps), f0)
}

fn analyse(cfg: &SoundingConfig, ch: &MultipathChannel, target: bool, placement: usize, seed: u64) -> MusicResult {
    let label = DatasetLabel {
        carrier_hz: 6.5e9,
        antenna: Antenna::A,
        target,
        placement: format!("P{placement}"),
        orientation: "alpha".into(),
    };
    let fs = synthesize_frameset(ch, Antenna::A, 0, cfg, label, seed).unwrap();
    run_music(&fs, cfg, &MusicConfig::default()).unwrap()
}

fn modes(results: &[MusicResult]) -> (usize, usize) {
    let h = multipath_histogram(results);
    assert_eq!(h.len(), 2);
    assert_eq!(h.iter().map(|g| g.total).sum::<usize>(), results.len());
    let without = h.iter().find(|g| !g.target).unwrap().mode;
    let with = h.iter().find(|g| g.target).unwrap().mode;
    (without, with)
}

#[test]
fn added_reflection_raises_mode_by_one() {
    let cfg = cfg();
    let mut results = Vec::new();
    for p in 0..8u64 {
        let (ch, f0) = channel(&cfg, &[0.0, 8.0, 20.0], p);
        let overlay = TargetOverlay::on(
            Antenna::A,
            AntennaOverlay {
                added: vec![AddedPath {
                    delay_s: (f0 + 13.5) / cfg.sample_rate_hz,
                    gains: vec![Complex64::new(0.0, 0.8)],
                }],
                blocked: vec![],
            },
        );
        let with = apply_target(&ch, &overlay).unwrap();
        results.push(analyse(&cfg, &ch, false, p as usize, 2 * p));
        results.push(analyse(&cfg, &with, true, p as usize, 2 * p + 1));
    }
    let (without, with) = modes(&results);
    assert_eq!(without, 3);
    assert_eq!(with, without + 1);
}

#[test]
fn blocking_two_paths_lowers_mode_by_two() {
    let cfg = cfg();
    let mut results = Vec::new();
    for p in 0..8u64 {
        let (ch, _) = channel(&cfg, &[0.0, 6.0, 13.0, 21.0, 30.0], 100 + p);
        let overlay = TargetOverlay::on(
            Antenna::A,
            AntennaOverlay {
                added: vec![],
                blocked: [1, 3]
                    .into_iter()
                    .map(|tap| Blockage {
                        tap,
                        attenuation: vec![0.0],
                    })
                    .collect(),
            },
        );
        let with = apply_target(&ch, &overlay).unwrap();
        results.push(analyse(&cfg, &ch, false, p as usize, 2 * p));
        results.push(analyse(&cfg, &with, true, p as usize, 2 * p + 1));
    }
    let (without, with) = modes(&results);
    assert_eq!(without, 5);
    assert_eq!(with + 2, without);
}

#[test]
fn shared_geometry_carriers_share_region_grids() {
    let sim = SimulationConfig {
        sounding: SoundingConfig {
            frames: 30,
            hw_averages: 10,
            ..SoundingConfig::default()
        },
        scenarios: vec![ScenarioSpec {
            placement: "B".into(),
            orientation: "gamma".into(),
        }],
        target: TargetSpec {
            antennas: vec![Antenna::A],
            blocked: vec![BlockSpec { path: 1, factor: 0.1 }],
            ..TargetSpec::default()
        },
        ..SimulationConfig::default()
    };
    sim.validate().unwrap();
    let truth = ground_truth(&sim, 7).unwrap();
    let sc = &truth.scenarios[0];
    let mut results = Vec::new();
    for (ci, &carrier) in sim.sounding.carriers_hz.iter().enumerate() {
        for (target, ch) in [(false, &sc.channel), (true, &sc.target_channel)] {
            let label = DatasetLabel {
                carrier_hz: carrier,
                antenna: Antenna::A,
                target,
                placement: sc.placement.clone(),
                orientation: sc.orientation.clone(),
            };
            let fs = synthesize_frameset(ch, Antenna::A, ci, &sim.sounding, label, 10 * ci as u64 + target as u64).unwrap();
            results.push(run_music(&fs, &sim.sounding, &MusicConfig::default()).unwrap());
        }
    }
    let bundle = multiband_report(&results, &ReportOptions::default()).unwrap();
    assert_eq!(bundle.carriers_hz, sim.sounding.carriers_hz);
    assert_eq!(bundle.regions.len(), 2);
    assert!(bundle.regions.iter().all(|r| r.paired));
    assert_eq!(results[0].grid, results[2].grid);

    let deltas: Vec<Vec<f64>> = bundle
        .regions
        .iter()
        .map(|r| r.p_regions.iter().chain(&r.n_regions).map(|g| g.delta_db).collect())
        .collect();
    assert!(!deltas[0].is_empty() && !deltas[1].is_empty());
    assert_ne!(deltas[0], deltas[1]);
    // both carriers see the new reflection at the same place
    for r in &bundle.regions {
        assert!(r.p_regions.iter().any(|g| g.covers(4.7, 0.3)), "{r:?}");
    }
}
