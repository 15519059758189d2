//! Dataset files: a JSON manifest next to a raw little-endian `f32` payload
//! of interleaved `(re, im)` pairs, frame-major.
//!
//! The payload is hashed with SHA-256 and the digest stored in the manifest.
//! Loading checks size before checksum so that a short file is reported as
//! truncated rather than corrupt.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{DatasetLabel, FrameSet};
use crate::sequence::{AllocatedSpectrum, SoundingConfig};
use crate::simulator::{Antenna, RxFrame};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_SUFFIX: &str = ".manifest.json";
pub const PAYLOAD_SUFFIX: &str = ".f32";
/// Bytes per stored complex sample.
pub const SAMPLE_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    /// Per-antenna channel estimates on the allocated carriers, `n_on` per
    /// row.
    FrameSet,
    /// Received time-domain windows, `fft_size` per row.
    RxFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: PayloadKind,
    pub carrier_hz: f64,
    /// Absent for received frames, which mix both antennas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna: Option<Antenna>,
    pub n_on: usize,
    pub fft_size: usize,
    pub sample_rate_hz: f64,
    pub n_frames: usize,
    pub target: bool,
    #[serde(default)]
    pub placement: String,
    #[serde(default)]
    pub orientation: String,
    /// Relative to the manifest's directory.
    pub payload_file: String,
    pub payload_sha256: String,
    /// Reference sequence for received frames, relative to the manifest's
    /// directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_file: Option<String>,
}

impl DatasetManifest {
    pub fn row_len(&self) -> usize {
        match self.kind {
            PayloadKind::FrameSet => self.n_on,
            PayloadKind::RxFrames => self.fft_size,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.n_frames * self.row_len() * SAMPLE_BYTES
    }

    pub fn label(&self) -> DatasetLabel {
        DatasetLabel {
            carrier_hz: self.carrier_hz,
            antenna: self.antenna.unwrap_or(Antenna::A),
            target: self.target,
            placement: self.placement.clone(),
            orientation: self.orientation.clone(),
        }
    }

    /// File stem shared by manifest and payload.
    pub fn stem(&self) -> String {
        match self.kind {
            PayloadKind::FrameSet => self.label().id(),
            PayloadKind::RxFrames => {
                let id = self.label().id();
                // drop the antenna prefix
                format!("rx{}", &id[id.find('_').unwrap_or(0)..])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: FORMAT_VERSION,
                found: self.format_version,
            });
        }
        if self.n_frames == 0 || self.n_on == 0 || self.n_on > self.fft_size {
            return Err(Error::input(format!(
                "manifest with {} frames, n_on {}, fft size {}",
                self.n_frames, self.n_on, self.fft_size
            )));
        }
        if self.kind == PayloadKind::FrameSet && self.antenna.is_none() {
            return Err(Error::input("frame set manifest without antenna"));
        }
        Ok(())
    }

    /// Checks that the manifest describes data recorded with `cfg`.
    pub fn check_config(&self, cfg: &SoundingConfig) -> Result<()> {
        if self.n_on != cfg.allocated
            || self.fft_size != cfg.fft_size
            || self.sample_rate_hz != cfg.sample_rate_hz
        {
            return Err(Error::input(format!(
                "dataset {} was recorded with n_on {}, N {}, B {} Hz",
                self.stem(),
                self.n_on,
                self.fft_size,
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_samples(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * SAMPLE_BYTES);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(SAMPLE_BYTES)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn base_dir(manifest_path: &Path) -> &Path {
    manifest_path.parent().unwrap_or_else(|| Path::new("."))
}

fn write_dataset(dir: &Path, mut manifest: DatasetManifest, samples: &[Complex64]) -> Result<PathBuf> {
    let bytes = encode_samples(samples);
    let stem = manifest.stem();
    manifest.payload_file = format!("{stem}{PAYLOAD_SUFFIX}");
    manifest.payload_sha256 = sha256_hex(&bytes);
    debug_assert_eq!(bytes.len(), manifest.payload_bytes());
    let payload = dir.join(&manifest.payload_file);
    fs::write(&payload, &bytes).map_err(|e| Error::io(format!("writing {}", payload.display()), e))?;
    let path = dir.join(format!("{stem}{MANIFEST_SUFFIX}"));
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Reads and verifies the payload of `manifest` stored next to
/// `manifest_path`.
pub fn read_payload(manifest_path: &Path, manifest: &DatasetManifest) -> Result<Vec<Complex64>> {
    manifest.validate()?;
    let path = base_dir(manifest_path).join(&manifest.payload_file);
    let bytes = fs::read(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let expected = manifest.payload_bytes();
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            path,
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::SizeMismatch {
            path,
            expected,
            found: bytes.len(),
        });
    }
    let found = sha256_hex(&bytes);
    if !found.eq_ignore_ascii_case(&manifest.payload_sha256) {
        return Err(Error::ChecksumMismatch {
            path,
            expected: manifest.payload_sha256.clone(),
            found,
        });
    }
    Ok(decode_samples(&bytes))
}

/// Writes `<id>.manifest.json` and `<id>.f32` into `dir`; returns the
/// manifest path. Samples are stored as `f32`.
pub fn store_frameset(dir: &Path, fs: &FrameSet, cfg: &SoundingConfig) -> Result<PathBuf> {
    let l = &fs.label;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        kind: PayloadKind::FrameSet,
        carrier_hz: l.carrier_hz,
        antenna: Some(l.antenna),
        n_on: fs.n_on(),
        fft_size: cfg.fft_size,
        sample_rate_hz: cfg.sample_rate_hz,
        n_frames: fs.n_frames(),
        target: l.target,
        placement: l.placement.clone(),
        orientation: l.orientation.clone(),
        payload_file: String::new(),
        payload_sha256: String::new(),
        sequence_file: None,
    };
    write_dataset(dir, manifest, fs.data())
}

pub fn load_frameset(manifest_path: &Path) -> Result<(DatasetManifest, FrameSet)> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    if manifest.kind != PayloadKind::FrameSet {
        return Err(Error::input(format!(
            "{} holds received frames, not a frame set",
            manifest_path.display()
        )));
    }
    let data = read_payload(manifest_path, &manifest)?;
    let fs = FrameSet::new(manifest.label(), manifest.n_on, data)?;
    Ok((manifest, fs))
}

/// Stores received windows of one carrier. `label.antenna` is ignored.
pub fn store_rx(
    dir: &Path,
    label: &DatasetLabel,
    frames: &[RxFrame],
    cfg: &SoundingConfig,
    sequence_file: &str,
) -> Result<PathBuf> {
    if frames.is_empty() || frames.iter().any(|f| f.samples.len() != cfg.fft_size) {
        return Err(Error::input("received frames must be nonempty and N samples long"));
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        kind: PayloadKind::RxFrames,
        carrier_hz: label.carrier_hz,
        antenna: None,
        n_on: cfg.allocated,
        fft_size: cfg.fft_size,
        sample_rate_hz: cfg.sample_rate_hz,
        n_frames: frames.len(),
        target: label.target,
        placement: label.placement.clone(),
        orientation: label.orientation.clone(),
        payload_file: String::new(),
        payload_sha256: String::new(),
        sequence_file: Some(sequence_file.to_string()),
    };
    let samples: Vec<Complex64> = frames.iter().flat_map(|f| f.samples.iter().copied()).collect();
    write_dataset(dir, manifest, &samples)
}

/// Received windows plus the reference sequence they were sounded with.
pub fn load_rx(manifest_path: &Path) -> Result<(DatasetManifest, Vec<RxFrame>, AllocatedSpectrum)> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    if manifest.kind != PayloadKind::RxFrames {
        return Err(Error::input(format!(
            "{} holds a frame set, not received frames",
            manifest_path.display()
        )));
    }
    let seq_name = manifest
        .sequence_file
        .as_deref()
        .ok_or_else(|| Error::input("received frames without a reference sequence"))?;
    let x_a = read_sequence(&base_dir(manifest_path).join(seq_name))?;
    if x_a.len() != manifest.n_on {
        return Err(Error::input("reference sequence length differs from n_on"));
    }
    let data = read_payload(manifest_path, &manifest)?;
    let frames = data
        .chunks_exact(manifest.fft_size)
        .map(|c| RxFrame {
            samples: c.to_vec(),
            carrier_hz: manifest.carrier_hz,
            snr_db: None,
            noise_power: 0.0,
        })
        .collect();
    Ok((manifest, frames, x_a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SequenceFile {
    format_version: u32,
    n_on: usize,
    /// `(re, im)` per allocated subcarrier, lowest index first.
    values: Vec<[f64; 2]>,
}

pub fn write_sequence(path: &Path, x: &AllocatedSpectrum) -> Result<()> {
    write_json(
        path,
        &SequenceFile {
            format_version: FORMAT_VERSION,
            n_on: x.len(),
            values: x.values().iter().map(|v| [v.re, v.im]).collect(),
        },
    )
}

pub fn read_sequence(path: &Path) -> Result<AllocatedSpectrum> {
    let f: SequenceFile = read_json(path)?;
    if f.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            found: f.format_version,
        });
    }
    if f.values.len() != f.n_on {
        return Err(Error::input("sequence file length disagrees with n_on"));
    }
    AllocatedSpectrum::new(f.values.iter().map(|v| Complex64::new(v[0], v[1])).collect())
}

/// Manifest files in `dir`, sorted by name.
pub fn list_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    list_with_suffix(dir, MANIFEST_SUFFIX)
}

pub fn list_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let path = entry.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
