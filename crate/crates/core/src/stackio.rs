//! Focal-stack loading and validation, mean images, and exact image /
//! depth-map file formats (PNG, PGM, PFM, 16-bit PNG with range sidecar).
//!
//! Pixel values are reals in `[0, 1]` everywhere inside the toolkit; 8- and
//! 16-bit inputs are divided by their maximum code value on load so squared
//! focus responses stay comparable across datasets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classic::{DepthMap, DepthUnit};
use crate::error::{Error, Result};

/// A single image: `channels` (1 or 3) planes of `height x width` reals.
///
/// Planar layout `(c, y, x)` so per-channel views are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    planes: Array3<f64>,
}

impl Image {
    /// Wraps a `(channels, height, width)` array. Channels must be 1 or 3 and
    /// every value finite.
    pub fn new(planes: Array3<f64>) -> Result<Self> {
        let channels = planes.len_of(Axis(0));
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if planes.len_of(Axis(1)) == 0 || planes.len_of(Axis(2)) == 0 {
            return Err(Error::InvalidInput("image has zero area".into()));
        }
        if !planes.iter().all(|v| v.is_finite()) {
            return Err(Error::OutOfDomain("image contains non-finite values".into()));
        }
        Ok(Self { planes })
    }

    /// Single-channel image from one plane.
    pub fn from_plane(plane: Array2<f64>) -> Result<Self> {
        let (h, w) = plane.dim();
        Self::new(plane.into_shape_with_order((1, h, w)).expect("reshape"))
    }

    /// Constant-valued image, handy for tests and synthetic data.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(Array3::from_elem((channels, height, width), value))
    }

    pub fn height(&self) -> usize {
        self.planes.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.planes.len_of(Axis(2))
    }

    pub fn channels(&self) -> usize {
        self.planes.len_of(Axis(0))
    }

    /// Contiguous view of one channel plane.
    pub fn plane(&self, c: usize) -> ArrayView2<'_, f64> {
        self.planes.index_axis(Axis(0), c)
    }

    pub fn planes(&self) -> &Array3<f64> {
        &self.planes
    }

    pub fn value(&self, c: usize, y: usize, x: usize) -> f64 {
        self.planes[(c, y, x)]
    }
}

/// Ordered, co-registered focal stack with strictly monotonic focal distances.
#[derive(Debug, Clone)]
pub struct FocalStack {
    slices: Vec<Image>,
    focal_distances: Vec<f64>,
}

/// Dimensions of a stack, carried by derived products for shape checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackShape {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

fn strictly_monotonic(values: &[f64]) -> bool {
    if values.len() < 2 {
        return true;
    }
    let ascending = values.windows(2).all(|w| w[0] < w[1]);
    let descending = values.windows(2).all(|w| w[0] > w[1]);
    ascending || descending
}

impl FocalStack {
    /// Validates all stack invariants: at least two slices, equal dimensions,
    /// one focal distance per slice, strictly monotonic distances.
    pub fn new(slices: Vec<Image>, focal_distances: Vec<f64>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "focal stack needs at least 2 slices, got {}",
                slices.len()
            )));
        }
        if slices.len() != focal_distances.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} slices but {} focal distances",
                slices.len(),
                focal_distances.len()
            )));
        }
        let (h, w, c) = (slices[0].height(), slices[0].width(), slices[0].channels());
        for (i, s) in slices.iter().enumerate() {
            if s.height() != h || s.width() != w || s.channels() != c {
                return Err(Error::ShapeMismatch(format!(
                    "slice {} is {}x{}x{}, expected {}x{}x{}",
                    i,
                    s.channels(),
                    s.height(),
                    s.width(),
                    c,
                    h,
                    w
                )));
            }
        }
        if !focal_distances.iter().all(|d| d.is_finite()) {
            return Err(Error::OutOfDomain("non-finite focal distance".into()));
        }
        if !strictly_monotonic(&focal_distances) {
            return Err(Error::InvalidInput(
                "focal distances must be strictly monotonic".into(),
            ));
        }
        Ok(Self { slices, focal_distances })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn height(&self) -> usize {
        self.slices[0].height()
    }

    pub fn width(&self) -> usize {
        self.slices[0].width()
    }

    pub fn channels(&self) -> usize {
        self.slices[0].channels()
    }

    pub fn slice(&self, s: usize) -> &Image {
        &self.slices[s]
    }

    pub fn slices(&self) -> &[Image] {
        &self.slices
    }

    pub fn focal_distances(&self) -> &[f64] {
        &self.focal_distances
    }

    pub fn shape(&self) -> StackShape {
        StackShape {
            slices: self.len(),
            height: self.height(),
            width: self.width(),
            channels: self.channels(),
        }
    }
}

/// How manifest images are interpreted on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Gray,
    Rgb,
}

/// On-disk description of a focal stack: image paths (relative to the
/// manifest file), per-slice focal distances, and color mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackManifest {
    pub images: Vec<PathBuf>,
    pub focal_distances: Vec<f64>,
    pub color_mode: ColorMode,
}

impl StackManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let manifest: StackManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::decode(path, format!("manifest JSON: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.focal_distances.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} image paths but {} focal distances",
                self.images.len(),
                self.focal_distances.len()
            )));
        }
        if self.images.len() < 2 {
            return Err(Error::InvalidInput("manifest lists fewer than 2 images".into()));
        }
        if !strictly_monotonic(&self.focal_distances) {
            return Err(Error::InvalidInput(
                "focal distances must be strictly monotonic".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(path, &json)
    }
}

/// Loads the stack a manifest describes. Relative image paths resolve
/// against `base_dir`.
pub fn load_stack(manifest: &StackManifest, base_dir: &Path) -> Result<FocalStack> {
    manifest.validate()?;
    let mut slices = Vec::with_capacity(manifest.images.len());
    for rel in &manifest.images {
        let path = if rel.is_absolute() { rel.clone() } else { base_dir.join(rel) };
        slices.push(load_image(&path, manifest.color_mode)?);
    }
    FocalStack::new(slices, manifest.focal_distances.clone())
}

/// Convenience: read the manifest at `path` and load its stack relative to
/// the manifest's directory.
pub fn load_stack_from_manifest(path: &Path) -> Result<FocalStack> {
    let manifest = StackManifest::from_file(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_stack(&manifest, base)
}

/// Converts an RGB stack to grayscale with the unweighted channel average
/// `(R+G+B)/3`. Grayscale input passes through unchanged.
pub fn to_grayscale(stack: &FocalStack) -> FocalStack {
    to_grayscale_weighted(stack, [1.0 / 3.0; 3])
}

/// Grayscale conversion with caller-supplied channel weights, for callers
/// that need to match an external pipeline's convention.
pub fn to_grayscale_weighted(stack: &FocalStack, weights: [f64; 3]) -> FocalStack {
    if stack.channels() == 1 {
        return stack.clone();
    }
    let slices = stack
        .slices()
        .iter()
        .map(|img| {
            let gray = weights[0] * &img.plane(0)
                + weights[1] * &img.plane(1)
                + weights[2] * &img.plane(2);
            Image::from_plane(gray).expect("finite by construction")
        })
        .collect();
    FocalStack { slices, focal_distances: stack.focal_distances.clone() }
}

/// Per-pixel, per-channel arithmetic mean over all slices.
pub fn mean_image(stack: &FocalStack) -> Image {
    let mut acc = stack.slice(0).planes().clone();
    for s in 1..stack.len() {
        acc += stack.slice(s).planes();
    }
    acc /= stack.len() as f64;
    Image::new(acc).expect("finite by construction")
}

// ---------------------------------------------------------------------------
// Raster image IO (PNG / PGM in, PNG out)
// ---------------------------------------------------------------------------

/// Decodes a PNG or PGM file into `[0,1]` reals. 8-bit codes divide by 255,
/// 16-bit by 65535. With `ColorMode::Gray`, RGB files collapse via the
/// unweighted channel average; `ColorMode::Rgb` rejects grayscale files
/// rather than inventing chroma.
pub fn load_image(path: &Path, mode: ColorMode) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::decode(path, e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    use image::DynamicImage as D;
    let (channels, data): (usize, Vec<f64>) = match &dynimg {
        D::ImageLuma8(img) => (1, img.as_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        D::ImageLuma16(img) => (1, img.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        D::ImageRgb8(img) => (3, img.as_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        D::ImageRgb16(img) => (3, img.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        _ => {
            return Err(Error::decode(
                path,
                format!("unsupported pixel format {:?} (use 8/16-bit gray or RGB)", dynimg.color()),
            ))
        }
    };
    // Interleaved (y, x, c) -> planar (c, y, x).
    let mut planes = Array3::zeros((channels, h, w));
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                planes[(c, y, x)] = data[(y * w + x) * channels + c];
            }
        }
    }
    let img = Image::new(planes)?;
    match (mode, img.channels()) {
        (ColorMode::Gray, 3) => {
            let gray = (&img.plane(0) + &img.plane(1) + &img.plane(2)) / 3.0;
            Image::from_plane(gray)
        }
        (ColorMode::Gray, _) => Ok(img),
        (ColorMode::Rgb, 3) => Ok(img),
        (ColorMode::Rgb, c) => Err(Error::decode(
            path,
            format!("manifest expects rgb but file has {c} channel(s)"),
        )),
    }
}

fn quantize(v: f64, max_code: f64) -> u16 {
    (v.clamp(0.0, 1.0) * max_code).round() as u16
}

/// Writes a `[0,1]` image as a 16-bit PNG (grayscale or RGB).
pub fn write_image_png16(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = Vec::new();
    {
        let encoder = image::codecs::png::PngEncoder::new(&mut buf);
        use image::ImageEncoder;
        let mut raw = Vec::with_capacity(h * w * img.channels());
        for y in 0..h {
            for x in 0..w {
                for c in 0..img.channels() {
                    raw.push(quantize(img.value(c, y, x), 65535.0));
                }
            }
        }
        // The encoder takes native-endian samples and writes big-endian PNG.
        let bytes: Vec<u8> = raw.iter().flat_map(|v| v.to_ne_bytes()).collect();
        let color = if img.channels() == 1 {
            image::ExtendedColorType::L16
        } else {
            image::ExtendedColorType::Rgb16
        };
        encoder
            .write_image(&bytes, w as u32, h as u32, color)
            .map_err(|e| Error::decode(path, e.to_string()))?;
    }
    write_atomic(path, &buf)
}

/// Writes a `[0,1]` image as an 8-bit PNG (grayscale or RGB).
pub fn write_image_png8(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = Vec::new();
    {
        let encoder = image::codecs::png::PngEncoder::new(&mut buf);
        use image::ImageEncoder;
        let mut raw: Vec<u8> = Vec::with_capacity(h * w * img.channels());
        for y in 0..h {
            for x in 0..w {
                for c in 0..img.channels() {
                    raw.push((img.value(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        let color = if img.channels() == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        encoder
            .write_image(&raw, w as u32, h as u32, color)
            .map_err(|e| Error::decode(path, e.to_string()))?;
    }
    write_atomic(path, &buf)
}

// ---------------------------------------------------------------------------
// PFM (Portable Float Map)
// ---------------------------------------------------------------------------

/// Writes a grayscale PFM: header `Pf`, dimensions, negative scale for
/// little-endian, then f32 scanlines bottom-to-top per the format convention.
pub fn write_pfm(plane: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let (h, w) = plane.dim();
    let mut buf = Vec::with_capacity(32 + h * w * 4);
    buf.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", w, h).as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            buf.extend_from_slice(&(plane[(y, x)] as f32).to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

/// Reads a grayscale PFM written by [`write_pfm`] or compatible tools.
/// Color (`PF`) maps are rejected.
pub fn read_pfm(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        header.push_str(&line);
    }
    let mut tokens = header.split_whitespace();
    let magic = tokens.next().unwrap_or("");
    if magic == "PF" {
        return Err(Error::decode(path, "color PFM not supported, expected grayscale 'Pf'"));
    }
    if magic != "Pf" {
        return Err(Error::decode(path, format!("bad PFM magic {magic:?}")));
    }
    let w: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::decode(path, "bad PFM width"))?;
    let h: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::decode(path, "bad PFM height"))?;
    let scale: f64 = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::decode(path, "bad PFM scale"))?;
    if w == 0 || h == 0 {
        return Err(Error::decode(path, "zero-sized PFM"));
    }
    let little_endian = scale < 0.0;
    let mut bytes = vec![0u8; w * h * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut plane = Array2::zeros((h, w));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // Scanlines are stored bottom-to-top.
        let y = h - 1 - i / w;
        let x = i % w;
        plane[(y, x)] = v as f64;
    }
    Ok(plane)
}

// ---------------------------------------------------------------------------
// Depth-map IO
// ---------------------------------------------------------------------------

/// Serialization format for depth maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthFormat {
    /// Raw f32 reals, lossless for our purposes.
    Pfm,
    /// 16-bit PNG mapping `[min,max]` linearly onto `[0,65535]`; min and max
    /// go to a text sidecar (`<path>.minmax.txt`) so the mapping inverts.
    Png16,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".minmax.txt");
    PathBuf::from(name)
}

/// Writes a depth map in the requested format. Rejects non-finite values.
pub fn write_depth(map: &DepthMap, path: &Path, format: DepthFormat) -> Result<()> {
    if !map.values.iter().all(|v| v.is_finite()) {
        return Err(Error::OutOfDomain("depth map contains NaN/Inf".into()));
    }
    match format {
        DepthFormat::Pfm => write_pfm(map.values.view(), path),
        DepthFormat::Png16 => {
            let lo = map.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = map.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            let (h, w) = map.values.dim();
            let mut codes = Array2::<f64>::zeros((h, w));
            if span > 0.0 {
                for (o, &v) in codes.iter_mut().zip(map.values.iter()) {
                    *o = (v - lo) / span;
                }
            }
            let img = Image::from_plane(codes)?;
            write_image_png16(&img, path)?;
            let mut sidecar = String::new();
            sidecar.push_str(&format!("{}\n{}\n", lo, hi));
            write_atomic(&sidecar_path(path), sidecar.as_bytes())
        }
    }
}

/// Reads back a depth map written by [`write_depth`]. The caller states the
/// unit; files do not carry it.
pub fn read_depth(path: &Path, format: DepthFormat, unit: DepthUnit) -> Result<DepthMap> {
    match format {
        DepthFormat::Pfm => DepthMap::new(read_pfm(path)?, unit),
        DepthFormat::Png16 => {
            let img = load_image(path, ColorMode::Gray)?;
            if img.channels() != 1 {
                return Err(Error::decode(path, "depth PNG must be grayscale"));
            }
            let side = sidecar_path(path);
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let mut lines = text.split_whitespace();
            let lo: f64 = lines
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::decode(&side, "missing min"))?;
            let hi: f64 = lines
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::decode(&side, "missing max"))?;
            let span = hi - lo;
            let values = img.plane(0).mapv(|code| lo + code * span);
            DepthMap::new(values, unit)
        }
    }
}

/// Infer [`DepthFormat`] from a file extension (`.pfm` vs `.png`).
pub fn depth_format_for(path: &Path) -> Result<DepthFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") | Some("PFM") => Ok(DepthFormat::Pfm),
        Some("png") | Some("PNG") => Ok(DepthFormat::Png16),
        other => Err(Error::InvalidInput(format!(
            "cannot infer depth format from extension {other:?} (use .pfm or .png)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Atomic writes
// ---------------------------------------------------------------------------

/// Writes `bytes` to `path` via a temp file plus rename, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut writer = BufWriter::new(tmp.as_file_mut());
        writer.write_all(bytes).map_err(|e| Error::io(path, e))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn const_slice(h: usize, w: usize, v: f64) -> Image {
        Image::constant(h, w, 1, v).unwrap()
    }

    #[test]
    fn stack_rejects_non_monotonic_distances() {
        let slices = vec![const_slice(4, 4, 0.0), const_slice(4, 4, 1.0)];
        let err = FocalStack::new(slices, vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn stack_accepts_descending_distances() {
        let slices = vec![const_slice(4, 4, 0.0), const_slice(4, 4, 1.0)];
        assert!(FocalStack::new(slices, vec![2.0, 1.0]).is_ok());
    }

    #[test]
    fn stack_rejects_dimension_mismatch() {
        let slices = vec![const_slice(64, 64, 0.0), const_slice(32, 32, 1.0)];
        let err = FocalStack::new(slices, vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn grayscale_averages_channels() {
        let mut planes = Array3::zeros((3, 2, 2));
        planes.index_axis_mut(Axis(0), 0).fill(1.0);
        let rgb = Image::new(planes).unwrap();
        let stack = FocalStack::new(vec![rgb.clone(), rgb], vec![0.0, 1.0]).unwrap();
        let gray = to_grayscale(&stack);
        assert_eq!(gray.channels(), 1);
        assert!((gray.slice(0).value(0, 0, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grayscale_passes_through_gray_input() {
        let slices = vec![const_slice(3, 3, 0.4), const_slice(3, 3, 0.6)];
        let stack = FocalStack::new(slices, vec![0.0, 1.0]).unwrap();
        let gray = to_grayscale(&stack);
        assert_eq!(gray.slice(1).value(0, 2, 2), 0.6);
    }

    #[test]
    fn grayscale_equal_channels_identity() {
        let planes = Array3::from_elem((3, 2, 2), 0.3);
        let rgb = Image::new(planes).unwrap();
        let stack = FocalStack::new(vec![rgb.clone(), rgb], vec![0.0, 1.0]).unwrap();
        let gray = to_grayscale(&stack);
        assert!((gray.slice(0).value(0, 1, 1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mean_image_of_two_constants() {
        let stack =
            FocalStack::new(vec![const_slice(4, 4, 0.0), const_slice(4, 4, 1.0)], vec![0.0, 1.0])
                .unwrap();
        let mean = mean_image(&stack);
        assert_eq!(mean.value(0, 2, 3), 0.5);
    }

    #[test]
    fn mean_image_of_identical_slices_is_that_slice() {
        let img = const_slice(4, 4, 0.37);
        let stack = FocalStack::new(vec![img.clone(), img.clone(), img.clone()], vec![0.0, 1.0, 2.0])
            .unwrap();
        assert!((mean_image(&stack).value(0, 0, 0) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn mean_image_pixelwise() {
        let a = Image::from_plane(array![[0.1]]).unwrap();
        let b = Image::from_plane(array![[0.2]]).unwrap();
        let c = Image::from_plane(array![[0.6]]).unwrap();
        let stack = FocalStack::new(vec![a, b, c], vec![0.0, 1.0, 2.0]).unwrap();
        assert!((mean_image(&stack).value(0, 0, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mean_image_commutes_with_slice_permutation() {
        let a = Image::from_plane(array![[0.1, 0.9], [0.5, 0.2]]).unwrap();
        let b = Image::from_plane(array![[0.7, 0.3], [0.0, 1.0]]).unwrap();
        let c = Image::from_plane(array![[0.2, 0.2], [0.8, 0.4]]).unwrap();
        let s1 = FocalStack::new(vec![a.clone(), b.clone(), c.clone()], vec![0.0, 1.0, 2.0]).unwrap();
        let s2 = FocalStack::new(vec![c, a, b], vec![0.0, 1.0, 2.0]).unwrap();
        let m1 = mean_image(&s1);
        let m2 = mean_image(&s2);
        for (u, v) in m1.planes().iter().zip(m2.planes().iter()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn pfm_load_write_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        // 1e-3 is not f32-exact; storage quantizes it once and then the
        // load -> write -> load cycle must be lossless.
        let values = array![[5.0, -1.25], [0.0, 1e-3]];
        let map = DepthMap::new(values, DepthUnit::Index).unwrap();
        write_depth(&map, &path, DepthFormat::Pfm).unwrap();
        let loaded = read_depth(&path, DepthFormat::Pfm, DepthUnit::Index).unwrap();
        let path2 = dir.path().join("d2.pfm");
        write_depth(&loaded, &path2, DepthFormat::Pfm).unwrap();
        let reloaded = read_depth(&path2, DepthFormat::Pfm, DepthUnit::Index).unwrap();
        assert_eq!(loaded.values, reloaded.values);
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        // f32-exact constants survive the full cycle unchanged.
        assert_eq!(loaded.values[(0, 0)], 5.0);
        assert_eq!(loaded.values[(0, 1)], -1.25);
    }

    #[test]
    fn png16_sidecar_records_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let values = array![[10.0, 55.0], [100.0, 32.5]];
        let map = DepthMap::new(values, DepthUnit::FocalDistance).unwrap();
        write_depth(&map, &path, DepthFormat::Png16).unwrap();
        let sidecar = std::fs::read_to_string(sidecar_path(&path)).unwrap();
        let nums: Vec<f64> = sidecar.split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(nums, vec![10.0, 100.0]);
        let back = read_depth(&path, DepthFormat::Png16, DepthUnit::FocalDistance).unwrap();
        for (a, b) in map.values.iter().zip(back.values.iter()) {
            assert!((a - b).abs() <= 90.0 / 65535.0 + 1e-9);
        }
    }

    #[test]
    fn png16_constant_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let map = DepthMap::new(Array2::from_elem((3, 3), 7.5), DepthUnit::Index).unwrap();
        write_depth(&map, &path, DepthFormat::Png16).unwrap();
        let back = read_depth(&path, DepthFormat::Png16, DepthUnit::Index).unwrap();
        assert!(back.values.iter().all(|&v| v == 7.5));
    }

    #[test]
    fn write_depth_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let map = DepthMap {
            values: array![[f64::NAN]],
            unit: DepthUnit::Index,
        };
        let err = write_depth(&map, &dir.path().join("n.pfm"), DepthFormat::Pfm).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain(_)));
    }

    #[test]
    fn manifest_round_trip_and_load() {
        let dir = tempfile::tempdir().unwrap();
        for (i, v) in [0.2f64, 0.8].iter().enumerate() {
            let img = const_slice(8, 8, *v);
            write_image_png16(&img, &dir.path().join(format!("s{i}.png"))).unwrap();
        }
        let manifest = StackManifest {
            images: vec!["s0.png".into(), "s1.png".into()],
            focal_distances: vec![0.1, 0.15],
            color_mode: ColorMode::Gray,
        };
        let mpath = dir.path().join("manifest.json");
        manifest.save(&mpath).unwrap();
        let stack = load_stack_from_manifest(&mpath).unwrap();
        assert_eq!(stack.len(), 2);
        assert_eq!(stack.height(), 8);
        assert!((stack.slice(0).value(0, 0, 0) - 0.2).abs() < 1.0 / 65535.0);
    }

    #[test]
    fn missing_image_is_io_error() {
        let manifest = StackManifest {
            images: vec!["nope.png".into(), "alsonope.png".into()],
            focal_distances: vec![0.0, 1.0],
            color_mode: ColorMode::Gray,
        };
        let err = load_stack(&manifest, Path::new("/definitely/absent")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn grayscale_range_preserved() {
        let mut planes = Array3::zeros((3, 4, 4));
        planes.index_axis_mut(Axis(0), 0).fill(1.0);
        planes.index_axis_mut(Axis(0), 1).fill(0.5);
        let img = Image::new(planes).unwrap();
        let stack = FocalStack::new(vec![img.clone(), img], vec![0.0, 1.0]).unwrap();
        let gray = to_grayscale(&stack);
        for v in gray.slice(0).planes().iter() {
            assert!((0.0..=1.0).contains(v));
        }
    }
}
