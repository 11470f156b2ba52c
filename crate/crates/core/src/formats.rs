//! On-disk formats.
//!
//! * Contour CSV: header `frame,value`, one row per frame.
//! * Feature matrices: CSV with one frame per row (no header), or raw
//!   little-endian `f32` with a JSON sidecar `{"frames": T, "dim": D}`.
//! * Codebook JSON: `{"k": K, "dim": D, "centroids": [[...], ...]}`.
//! * Unit files: `{"units": [...]}`; dedup files:
//!   `{"unique_units": [...], "counts": [...]}`.
//! * Prosody bundle JSON, versioned by `"schema": 1`; see [`ProsodyBundle`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentOp;
use crate::contour::{Contour, ContourKind, VuvMask};
use crate::error::{Error, Result};
use crate::savgol::SavgolParams;
use crate::units::{Codebook, DedupResult, Unit};

pub const BUNDLE_SCHEMA: u32 = 1;

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

pub fn write_contour_csv<W: Write>(out: W, c: &Contour) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "value"])?;
    for (t, v) in c.values.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_contour_csv<R: Read>(input: R, kind: ContourKind, hop: usize) -> Result<Contour> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame", "value"] {
        return schema(format!(
            "contour CSV header must be 'frame,value', got {headers:?}"
        ));
    }
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let frame: usize = parse_field(rec.get(0), i)?;
        if frame != i {
            return schema(format!("row {i} has frame index {frame}"));
        }
        values.push(parse_field(rec.get(1), i)?);
    }
    let c = Contour::new(kind, hop, values);
    c.validate()?;
    Ok(c)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, row: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Schema(format!("unparseable field in row {row}")))
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut data = Vec::new();
    let mut dim = None;
    let mut frames = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if *dim.get_or_insert(rec.len()) != rec.len() {
            return schema(format!(
                "row {i} has {} columns, expected {}",
                rec.len(),
                dim.unwrap()
            ));
        }
        for f in rec.iter() {
            data.push(parse_field::<f64>(Some(f), i)?);
        }
        frames += 1;
    }
    let dim = dim.unwrap_or(0);
    Array2::from_shape_vec((frames, dim), data).map_err(|e| Error::Schema(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub frames: usize,
    pub dim: usize,
}

pub fn read_features_bin(data: &[u8], sidecar: FeatureSidecar) -> Result<Array2<f64>> {
    let expected = sidecar.frames * sidecar.dim * 4;
    if data.len() != expected {
        return schema(format!(
            "binary features hold {} bytes, sidecar implies {expected}",
            data.len()
        ));
    }
    let values = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Array2::from_shape_vec((sidecar.frames, sidecar.dim), values)
        .map_err(|e| Error::Schema(e.to_string()))
}

pub fn features_to_bin(m: &Array2<f64>) -> (Vec<u8>, FeatureSidecar) {
    let bytes = m.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    (
        bytes,
        FeatureSidecar {
            frames: m.nrows(),
            dim: m.ncols(),
        },
    )
}

/// Load features from `path`: `.bin` files use the sidecar at `<path>.json`,
/// anything else is read as CSV.
pub fn load_features(path: &Path) -> Result<Array2<f64>> {
    if path.extension().is_some_and(|e| e == "bin") {
        let mut sidecar_path = path.as_os_str().to_owned();
        sidecar_path.push(".json");
        let sidecar: FeatureSidecar = serde_json::from_slice(&fs::read(&sidecar_path)?)?;
        read_features_bin(&fs::read(path)?, sidecar)
    } else {
        read_features_csv(fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookFile {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl From<&Codebook> for CodebookFile {
    fn from(cb: &Codebook) -> Self {
        CodebookFile {
            k: cb.k(),
            dim: cb.dim(),
            centroids: cb
                .centroids
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        }
    }
}

impl TryFrom<CodebookFile> for Codebook {
    type Error = Error;

    fn try_from(f: CodebookFile) -> Result<Codebook> {
        if f.centroids.len() != f.k || f.centroids.iter().any(|r| r.len() != f.dim) {
            return schema(format!(
                "codebook does not match declared k={} dim={}",
                f.k, f.dim
            ));
        }
        let flat = f.centroids.into_iter().flatten().collect();
        let m =
            Array2::from_shape_vec((f.k, f.dim), flat).map_err(|e| Error::Schema(e.to_string()))?;
        Codebook::new(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFile {
    pub units: Vec<Unit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub seed: u64,
    #[serde(flatten)]
    pub op: AugmentOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub source: String,
    pub sample_rate: u32,
    pub hop: usize,
    pub smoothing: SavgolParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentRecord>,
}

/// Prosody of one utterance: raw and smoothed F0/energy, the VUV mask,
/// optional unit durations, and optional augmented contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsodyBundle {
    pub schema: u32,
    pub meta: BundleMeta,
    pub f0: Vec<f64>,
    pub f0_smooth: Vec<f64>,
    pub energy: Vec<f64>,
    pub energy_smooth: Vec<f64>,
    pub vuv: VuvMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<DedupResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations_smooth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0_aug: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_aug: Option<Vec<f64>>,
}

impl ProsodyBundle {
    pub fn validate(&self) -> Result<()> {
        if self.schema != BUNDLE_SCHEMA {
            return schema(format!("unsupported bundle schema {}", self.schema));
        }
        let n = self.f0.len();
        let lens = [
            ("f0_smooth", self.f0_smooth.len()),
            ("energy", self.energy.len()),
            ("energy_smooth", self.energy_smooth.len()),
            ("vuv", self.vuv.len()),
        ];
        for (name, len) in lens.into_iter().chain(
            [("f0_aug", &self.f0_aug), ("energy_aug", &self.energy_aug)]
                .into_iter()
                .filter_map(|(name, v)| v.as_ref().map(|v| (name, v.len()))),
        ) {
            if len != n {
                return schema(format!("{name} has {len} frames, f0 has {n}"));
            }
        }
        let all = [&self.f0, &self.f0_smooth, &self.energy, &self.energy_smooth];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return schema("bundle contains non-finite values");
        }
        for (t, voiced) in self.vuv.iter().enumerate() {
            if voiced != (self.f0[t] != 0.0) {
                return schema(format!("frame {t}: VUV flag disagrees with F0 value"));
            }
        }
        if let Some(d) = &self.durations {
            d.validate().map_err(|e| Error::Schema(e.to_string()))?;
            if let Some(ds) = &self.durations_smooth {
                if ds.len() != d.counts.len() {
                    return schema("durations_smooth length differs from durations");
                }
            }
        } else if self.durations_smooth.is_some() {
            return schema("durations_smooth present without durations");
        }
        Ok(())
    }

    fn contour(&self, kind: ContourKind, values: &[f64]) -> Contour {
        Contour::new(kind, self.meta.hop, values.to_vec())
    }

    pub fn f0_contour(&self) -> Contour {
        self.contour(ContourKind::F0, &self.f0)
    }

    pub fn f0_smooth_contour(&self) -> Contour {
        self.contour(ContourKind::F0, &self.f0_smooth)
    }

    pub fn energy_contour(&self) -> Contour {
        self.contour(ContourKind::Energy, &self.energy)
    }

    pub fn energy_smooth_contour(&self) -> Contour {
        self.contour(ContourKind::Energy, &self.energy_smooth)
    }

    pub fn duration_contour(&self) -> Option<Contour> {
        self.durations.as_ref().map(|d| {
            Contour::new(
                ContourKind::Duration,
                0,
                d.counts.iter().map(|&c| c as f64).collect(),
            )
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let b: ProsodyBundle =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bundle() -> ProsodyBundle {
        ProsodyBundle {
            schema: 1,
            meta: BundleMeta {
                source: "x.wav".into(),
                sample_rate: 16000,
                hop: 256,
                smoothing: SavgolParams::default(),
                augment: None,
            },
            f0: vec![0.0, 110.0, 111.0],
            f0_smooth: vec![0.0, 110.0, 111.0],
            energy: vec![-3.0, -1.0, -1.5],
            energy_smooth: vec![-3.0, -1.0, -1.5],
            vuv: VuvMask::new(vec![false, true, true]),
            durations: None,
            durations_smooth: None,
            f0_aug: None,
            energy_aug: None,
        }
    }

    #[test]
    fn contour_csv_roundtrip() {
        let c = Contour::new(ContourKind::Energy, 256, vec![0.5, -1.25, 3.0]);
        let mut buf = Vec::new();
        write_contour_csv(&mut buf, &c).unwrap();
        assert!(buf.starts_with(b"frame,value\n0,0.5\n"));
        assert_eq!(
            read_contour_csv(&buf[..], ContourKind::Energy, 256).unwrap(),
            c
        );
        assert!(read_contour_csv(&b"t,v\n0,1\n"[..], ContourKind::Energy, 256).is_err());
    }

    #[test]
    fn features_csv_and_bin() {
        let m = read_features_csv(&b"1,2,3\n4,5,6\n"[..]).unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert!(read_features_csv(&b"1,2\n3\n"[..]).is_err());
        let (bytes, side) = features_to_bin(&m);
        assert_eq!(side, FeatureSidecar { frames: 2, dim: 3 });
        assert_eq!(read_features_bin(&bytes, side).unwrap(), m);
        assert!(read_features_bin(&bytes[..8], side).is_err());
    }

    #[test]
    fn codebook_json_shape() {
        let cb = Codebook::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let json = serde_json::to_string(&CodebookFile::from(&cb)).unwrap();
        assert_eq!(json, r#"{"k":2,"dim":2,"centroids":[[1.0,2.0],[3.0,4.0]]}"#);
        let back: CodebookFile = serde_json::from_str(&json).unwrap();
        assert_eq!(Codebook::try_from(back).unwrap(), cb);
        let bad: CodebookFile =
            serde_json::from_str(r#"{"k":3,"dim":2,"centroids":[[1,2]]}"#).unwrap();
        assert!(Codebook::try_from(bad).is_err());
    }

    #[test]
    fn bundle_roundtrip_and_validation() {
        let b = bundle();
        let json = b.to_json().unwrap();
        assert_eq!(ProsodyBundle::from_json(&json).unwrap(), b);

        let mut bad = bundle();
        bad.schema = 2;
        assert!(matches!(bad.validate(), Err(Error::Schema(_))));
        let mut bad = bundle();
        bad.energy.pop();
        assert!(bad.validate().is_err());
        let mut bad = bundle();
        bad.vuv = VuvMask::new(vec![true, true, true]);
        assert!(bad.validate().is_err());
        assert!(matches!(
            ProsodyBundle::from_json(b"{\"schema\": 1}"),
            Err(Error::Schema(_))
        ));
    }
}
