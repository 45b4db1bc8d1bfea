//! Seeded weight container for the refiner, plus its flat binary file
//! format.
//!
//! Weights are never trained here: they are drawn once from a ChaCha8
//! stream keyed by the seed, uniformly in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
//! (fan_in = in_channels * k * k), in the fixed layer order given by
//! [`RefinerWeights::layer_names`]. Regenerating from the same seed is
//! bit-identical.
//!
//! File format (`save`/`load`), all integers little-endian:
//!
//! ```text
//! magic  b"SFFWGT01"
//! u64    seed
//! u32    image_channels
//! u32    aggregation depth (rates * slices)
//! u32    tensor count
//! per tensor: u8 ndim, u32 dims..., f64 data (little-endian, row-major)
//! 32 bytes: SHA-256 over everything above
//! ```

use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array4};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::nn::Conv2dParams;
use super::{HIDDEN_CHANNELS, MASK_CHANNELS};
use crate::error::{Error, Result};
use crate::stackio::write_atomic;

const MAGIC: &[u8; 8] = b"SFFWGT01";

/// Context-encoder stage widths at 1/4, 1/8, 1/16 resolution.
pub(crate) const STAGE_CHANNELS: [usize; 3] = [64, 96, 128];
const STEM_CHANNELS: usize = 32;
const DEPTH_HEAD_MID: usize = 128;

/// Gate convolutions of one ConvGRU scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub(crate) update: Conv2dParams,
    pub(crate) reset: Conv2dParams,
    pub(crate) candidate: Conv2dParams,
}

/// Every learnable-shaped tensor of the refiner, generated from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerWeights {
    pub seed: u64,
    pub image_channels: usize,
    /// Depth of the focus aggregation map this instance fuses (R * S).
    pub aggregation_depth: usize,

    // Context encoder: stem, three downsampling stages with one residual
    // block each, and a 3x3 head per gate and scale.
    pub(crate) stem: Conv2dParams,
    pub(crate) stage_down: [Conv2dParams; 3],
    pub(crate) stage_res: [(Conv2dParams, Conv2dParams); 3],
    pub(crate) heads: [[Conv2dParams; 3]; 3], // [scale 4/8/16][gate z/r/h]

    // GRU hierarchy.
    pub gru4: GruWeights,
    pub gru8: GruWeights,
    pub gru16: GruWeights,

    // Focus-depth fusion and output heads.
    pub(crate) fuse1: Conv2dParams,
    pub(crate) fuse2: Conv2dParams,
    pub(crate) depth1: Conv2dParams,
    pub(crate) depth2: Conv2dParams,
    pub(crate) mask: Conv2dParams,
}

fn seeded_conv(
    rng: &mut ChaCha8Rng,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
) -> Conv2dParams {
    let fan_in = (in_c * k * k) as f64;
    let bound = 1.0 / fan_in.sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let weight = Array4::from_shape_fn((out_c, in_c, k, k), |_| dist.sample(rng));
    let bias = Array1::from_shape_fn(out_c, |_| dist.sample(rng));
    Conv2dParams { weight, bias, stride }
}

fn seeded_gru(rng: &mut ChaCha8Rng, input_channels: usize) -> GruWeights {
    let in_c = HIDDEN_CHANNELS + input_channels;
    GruWeights {
        update: seeded_conv(rng, HIDDEN_CHANNELS, in_c, 3, 1),
        reset: seeded_conv(rng, HIDDEN_CHANNELS, in_c, 3, 1),
        candidate: seeded_conv(rng, HIDDEN_CHANNELS, in_c, 3, 1),
    }
}

impl RefinerWeights {
    /// Deterministic construction from a seed. `aggregation_depth` is the
    /// channel count of the pooled focus aggregation map the fusion stack
    /// consumes; `image_channels` is what the context encoder sees.
    pub fn from_seed(seed: u64, image_channels: usize, aggregation_depth: usize) -> Result<Self> {
        if image_channels != 1 && image_channels != 3 {
            return Err(Error::InvalidInput(format!(
                "context encoder expects 1 or 3 channels, got {image_channels}"
            )));
        }
        if aggregation_depth == 0 {
            return Err(Error::InvalidInput("aggregation depth must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = seeded_conv(&mut rng, STEM_CHANNELS, image_channels, 3, 2);
        let mut prev = STEM_CHANNELS;
        let mut stage_down = Vec::new();
        let mut stage_res = Vec::new();
        for ch in STAGE_CHANNELS {
            stage_down.push(seeded_conv(&mut rng, ch, prev, 3, 2));
            stage_res.push((
                seeded_conv(&mut rng, ch, ch, 3, 1),
                seeded_conv(&mut rng, ch, ch, 3, 1),
            ));
            prev = ch;
        }
        let heads = STAGE_CHANNELS.map(|ch| {
            [
                seeded_conv(&mut rng, HIDDEN_CHANNELS, ch, 3, 1),
                seeded_conv(&mut rng, HIDDEN_CHANNELS, ch, 3, 1),
                seeded_conv(&mut rng, HIDDEN_CHANNELS, ch, 3, 1),
            ]
        });
        // Auxiliary-input widths: the finest scale sees an upsampled hidden
        // state plus the fused features, the middle one a pooled hidden state
        // plus an upsampled one, the coarsest only a pooled hidden state.
        let gru4 = seeded_gru(&mut rng, 2 * HIDDEN_CHANNELS);
        let gru8 = seeded_gru(&mut rng, 2 * HIDDEN_CHANNELS);
        let gru16 = seeded_gru(&mut rng, HIDDEN_CHANNELS);
        let fuse1 = seeded_conv(&mut rng, HIDDEN_CHANNELS, aggregation_depth + 1, 3, 1);
        let fuse2 = seeded_conv(&mut rng, HIDDEN_CHANNELS, HIDDEN_CHANNELS, 3, 1);
        let depth1 = seeded_conv(&mut rng, DEPTH_HEAD_MID, HIDDEN_CHANNELS, 3, 1);
        let depth2 = seeded_conv(&mut rng, 1, DEPTH_HEAD_MID, 3, 1);
        let mask = seeded_conv(&mut rng, MASK_CHANNELS, HIDDEN_CHANNELS, 3, 1);
        Ok(Self {
            seed,
            image_channels,
            aggregation_depth,
            stem,
            stage_down: stage_down.try_into().expect("three stages"),
            stage_res: stage_res.try_into().expect("three stages"),
            heads,
            gru4,
            gru8,
            gru16,
            fuse1,
            fuse2,
            depth1,
            depth2,
            mask,
        })
    }

    /// Zeroes both depth-head convolutions, forcing every depth update to
    /// be exactly zero. Test hook for the telescoping identity.
    pub fn zero_depth_head(&mut self) {
        self.depth1.weight.fill(0.0);
        self.depth1.bias.fill(0.0);
        self.depth2.weight.fill(0.0);
        self.depth2.bias.fill(0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.parameter_count()).sum()
    }

    /// Fixed serialization order. Names exist for diagnostics only.
    pub fn layer_names(&self) -> Vec<&'static str> {
        self.layers().iter().map(|(n, _)| *n).collect()
    }

    fn layers(&self) -> Vec<(&'static str, &Conv2dParams)> {
        let mut out: Vec<(&'static str, &Conv2dParams)> = vec![("stem", &self.stem)];
        let stage_names = [
            ("stage4.down", "stage4.res1", "stage4.res2"),
            ("stage8.down", "stage8.res1", "stage8.res2"),
            ("stage16.down", "stage16.res1", "stage16.res2"),
        ];
        for (i, (dn, r1, r2)) in stage_names.into_iter().enumerate() {
            out.push((dn, &self.stage_down[i]));
            out.push((r1, &self.stage_res[i].0));
            out.push((r2, &self.stage_res[i].1));
        }
        let head_names = [
            ["head4.z", "head4.r", "head4.h"],
            ["head8.z", "head8.r", "head8.h"],
            ["head16.z", "head16.r", "head16.h"],
        ];
        for (i, names) in head_names.into_iter().enumerate() {
            for (j, n) in names.into_iter().enumerate() {
                out.push((n, &self.heads[i][j]));
            }
        }
        for (names, gru) in [
            (["gru4.z", "gru4.r", "gru4.h"], &self.gru4),
            (["gru8.z", "gru8.r", "gru8.h"], &self.gru8),
            (["gru16.z", "gru16.r", "gru16.h"], &self.gru16),
        ] {
            out.push((names[0], &gru.update));
            out.push((names[1], &gru.reset));
            out.push((names[2], &gru.candidate));
        }
        out.push(("fuse1", &self.fuse1));
        out.push(("fuse2", &self.fuse2));
        out.push(("depth1", &self.depth1));
        out.push(("depth2", &self.depth2));
        out.push(("mask", &self.mask));
        out
    }

    /// Mutable view of the layers in the same order as [`Self::layers`].
    fn layers_mut(&mut self) -> Vec<&mut Conv2dParams> {
        let RefinerWeights {
            stem,
            stage_down,
            stage_res,
            heads,
            gru4,
            gru8,
            gru16,
            fuse1,
            fuse2,
            depth1,
            depth2,
            mask,
            ..
        } = self;
        let mut out: Vec<&mut Conv2dParams> = vec![stem];
        for (down, (r1, r2)) in stage_down.iter_mut().zip(stage_res.iter_mut()) {
            out.push(down);
            out.push(r1);
            out.push(r2);
        }
        for scale in heads.iter_mut() {
            for head in scale.iter_mut() {
                out.push(head);
            }
        }
        for gru in [gru4, gru8, gru16] {
            out.push(&mut gru.update);
            out.push(&mut gru.reset);
            out.push(&mut gru.candidate);
        }
        out.extend([fuse1, fuse2, depth1, depth2, mask]);
        out
    }

    /// Serializes into the documented flat binary container.
    pub fn save(&self, path: &Path) -> Result<()> {
        let layers = self.layers();
        let tensor_count = layers.len() * 2;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.image_channels as u32).to_le_bytes());
        buf.extend_from_slice(&(self.aggregation_depth as u32).to_le_bytes());
        buf.extend_from_slice(&(tensor_count as u32).to_le_bytes());
        for (_, layer) in &layers {
            push_tensor(&mut buf, layer.weight.shape(), layer.weight.as_slice().unwrap());
            push_tensor(&mut buf, layer.bias.shape(), layer.bias.as_slice().unwrap());
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        write_atomic(path, &buf)
    }

    /// Loads a container, checking magic, checksum, and tensor shapes
    /// against the structure implied by the header.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < MAGIC.len() + 8 + 4 + 4 + 4 + 32 {
            return Err(Error::decode(path, "weight container truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::decode(path, "weight container checksum mismatch"));
        }
        let mut cur = body;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::decode(path, "weight container truncated"));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(Error::decode(path, "bad weight container magic"));
        }
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let image_channels = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let aggregation_depth = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let tensor_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;

        let mut skeleton = RefinerWeights::from_seed(seed, image_channels, aggregation_depth)?;
        let mut layers = skeleton.layers_mut();
        if tensor_count != layers.len() * 2 {
            return Err(Error::decode(
                path,
                format!("expected {} tensors, file has {tensor_count}", layers.len() * 2),
            ));
        }
        for layer in layers.iter_mut() {
            let w = read_tensor(path, &mut take)?;
            if w.0 != layer.weight.shape() {
                return Err(Error::decode(path, "weight tensor shape mismatch"));
            }
            layer
                .weight
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&w.1);
            let b = read_tensor(path, &mut take)?;
            if b.0 != layer.bias.shape() {
                return Err(Error::decode(path, "bias tensor shape mismatch"));
            }
            layer.bias.as_slice_mut().unwrap().copy_from_slice(&b.1);
        }
        drop(layers);
        Ok(skeleton)
    }
}

fn push_tensor(buf: &mut Vec<u8>, shape: &[usize], data: &[f64]) {
    buf.push(shape.len() as u8);
    for &d in shape {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_tensor<'a>(
    path: &Path,
    take: &mut impl FnMut(usize) -> Result<&'a [u8]>,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let ndim = take(1)?[0] as usize;
    if ndim == 0 || ndim > 4 {
        return Err(Error::decode(path, format!("bad tensor rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let len: usize = shape.iter().product();
    let raw = take(len * 8)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}
