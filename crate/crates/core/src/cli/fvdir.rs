//! On-disk focus volumes: a directory of per-slice PFM files plus an
//! `index.json` describing the rate, source stack shape, and (when known)
//! the focal distances, so depth extraction can run from saved volumes.

use std::path::Path;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focusvol::{FocusVolume, RateDescriptor};
use crate::stackio::{read_pfm, write_atomic, write_pfm, StackShape};

#[derive(Debug, Serialize, Deserialize)]
struct RateJson {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexJson {
    slices: Vec<String>,
    rate: RateJson,
    source: StackShape,
    focal_distances: Option<Vec<f64>>,
}

fn rate_to_json(rate: RateDescriptor) -> RateJson {
    match rate {
        RateDescriptor::Single(r) => RateJson { kind: "single".into(), r: Some(r) },
        RateDescriptor::CumulativeUpTo(r) => RateJson { kind: "cumulative".into(), r: Some(r) },
        RateDescriptor::Laplacian => RateJson { kind: "laplacian".into(), r: None },
    }
}

fn rate_from_json(path: &Path, rate: &RateJson) -> Result<RateDescriptor> {
    match (rate.kind.as_str(), rate.r) {
        ("single", Some(r)) => Ok(RateDescriptor::Single(r)),
        ("cumulative", Some(r)) => Ok(RateDescriptor::CumulativeUpTo(r)),
        ("laplacian", _) => Ok(RateDescriptor::Laplacian),
        _ => Err(Error::decode(path, format!("bad rate descriptor {:?}", rate.kind))),
    }
}

/// Writes one PFM per slice plus `index.json`; returns the file names.
pub fn write_fv_dir(
    fv: &FocusVolume,
    distances: Option<&[f64]>,
    dir: &Path,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(fv.slices() + 1);
    for s in 0..fv.slices() {
        let name = format!("slice_{s:03}.pfm");
        write_pfm(fv.slice_plane(s), &dir.join(&name))?;
        names.push(name);
    }
    let index = IndexJson {
        slices: names.clone(),
        rate: rate_to_json(fv.rate()),
        source: fv.source(),
        focal_distances: distances.map(|d| d.to_vec()),
    };
    write_atomic(
        &dir.join("index.json"),
        &serde_json::to_vec_pretty(&index).expect("index serializes"),
    )?;
    names.push("index.json".into());
    Ok(names)
}

/// Loads a volume written by [`write_fv_dir`].
pub fn read_fv_dir(dir: &Path) -> Result<(FocusVolume, Option<Vec<f64>>)> {
    let index_path = dir.join("index.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: IndexJson = serde_json::from_str(&text)
        .map_err(|e| Error::decode(&index_path, format!("index JSON: {e}")))?;
    if index.slices.is_empty() {
        return Err(Error::decode(&index_path, "index lists no slices"));
    }
    if index.slices.len() != index.source.slices {
        return Err(Error::decode(&index_path, "slice count disagrees with source shape"));
    }
    let mut values = Array3::zeros((index.slices.len(), index.source.height, index.source.width));
    for (s, name) in index.slices.iter().enumerate() {
        let plane = read_pfm(&dir.join(name))?;
        if plane.dim() != (index.source.height, index.source.width) {
            return Err(Error::decode(dir.join(name), "slice dimensions disagree with index"));
        }
        values.index_axis_mut(Axis(0), s).assign(&plane);
    }
    let rate = rate_from_json(&index_path, &index.rate)?;
    let fv = FocusVolume::from_parts(values, rate, index.source)?;
    Ok((fv, index.focal_distances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolve::BorderPolicy;
    use crate::focusvol::ddl_focus_volume;
    use crate::stackio::{FocalStack, Image};
    use ndarray::Array2;

    #[test]
    fn fv_dir_round_trip() {
        let plane = Array2::from_shape_fn((8, 8), |(y, x)| ((y * 3 + x) % 5) as f64 / 5.0);
        let stack = FocalStack::new(
            vec![Image::from_plane(plane.clone()).unwrap(), Image::from_plane(plane).unwrap()],
            vec![0.5, 1.5],
        )
        .unwrap();
        let fv = ddl_focus_volume(&stack, 2, BorderPolicy::Replicate).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fv_dir(&fv, Some(stack.focal_distances()), dir.path()).unwrap();
        let (back, distances) = read_fv_dir(dir.path()).unwrap();
        assert_eq!(back.rate(), fv.rate());
        assert_eq!(back.source(), fv.source());
        assert_eq!(distances, Some(vec![0.5, 1.5]));
        // PFM stores f32, so compare at f32 precision.
        for (a, b) in fv.values().iter().zip(back.values().iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn missing_index_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_fv_dir(dir.path()).unwrap_err().is_io());
    }
}
