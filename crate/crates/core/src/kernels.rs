//! Laplacian-family focus kernels: the standard 3x3 Laplacian, dilated 1-D
//! second differences, and directional dilated Laplacian (DDL) kernels at
//! the four orientations {0°, 45°, 90°, 135°}.
//!
//! Taps are integers; promotion to reals happens in the convolution engine,
//! which keeps golden-value tests exact. Every kernel sums to zero, so the
//! response to constant input is exactly zero.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Tap axis of a directional kernel. `Deg0` places the +1 taps horizontally
/// (variation along x), `Deg90` vertically; `Deg45`/`Deg135` are the two
/// diagonals. Results that sum over all four directions are invariant to
/// this labelling convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Orientation {
    pub const ALL: [Orientation; 4] =
        [Orientation::Deg0, Orientation::Deg45, Orientation::Deg90, Orientation::Deg135];

    pub fn degrees(self) -> u32 {
        match self {
            Orientation::Deg0 => 0,
            Orientation::Deg45 => 45,
            Orientation::Deg90 => 90,
            Orientation::Deg135 => 135,
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        match deg {
            0 => Ok(Orientation::Deg0),
            45 => Ok(Orientation::Deg45),
            90 => Ok(Orientation::Deg90),
            135 => Ok(Orientation::Deg135),
            other => Err(Error::InvalidInput(format!(
                "orientation must be one of 0/45/90/135 degrees, got {other}"
            ))),
        }
    }
}

/// A square integer convolution kernel. DDL kernels have exactly three
/// nonzero taps {+1, -2, +1} and size `2r+1`; the isotropic standard
/// Laplacian has five.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel2D {
    taps: Array2<i32>,
    dilation: u32,
    orientation: Option<Orientation>,
}

impl Kernel2D {
    /// Kernel side length (odd).
    pub fn size(&self) -> usize {
        self.taps.nrows()
    }

    /// Tap offset radius `(size-1)/2`.
    pub fn radius(&self) -> usize {
        (self.size() - 1) / 2
    }

    pub fn dilation(&self) -> u32 {
        self.dilation
    }

    /// `None` marks isotropic kernels.
    pub fn orientation(&self) -> Option<Orientation> {
        self.orientation
    }

    pub fn taps(&self) -> ArrayView2<'_, i32> {
        self.taps.view()
    }

    pub fn tap_sum(&self) -> i32 {
        self.taps.iter().sum()
    }

    /// Nonzero taps as `(dy, dx, weight)` offsets from the center, in
    /// row-major order. The convolution engine iterates these in this fixed
    /// order, which pins the floating-point accumulation order.
    pub fn sparse_taps(&self) -> Vec<(isize, isize, f64)> {
        let r = self.radius() as isize;
        let mut out = Vec::new();
        for ((y, x), &w) in self.taps.indexed_iter() {
            if w != 0 {
                out.push((y as isize - r, x as isize - r, w as f64));
            }
        }
        out
    }
}

/// Dilated 1-D second difference `s(i+r) + s(i-r) - 2 s(i)` as a tap vector
/// of length `2r+1`: `+1` at both ends, `-2` in the middle, zeros elsewhere.
pub fn laplacian_1d(r: u32) -> Result<Vec<i32>> {
    if r == 0 {
        return Err(Error::InvalidInput("dilation rate must be >= 1".into()));
    }
    let r = r as usize;
    let mut taps = vec![0i32; 2 * r + 1];
    taps[0] = 1;
    taps[r] = -2;
    taps[2 * r] = 1;
    Ok(taps)
}

/// Directional dilated Laplacian: a `(2r+1)x(2r+1)` kernel with `-2` at the
/// center and `+1` at the two opposite offsets `r` steps along `theta`.
pub fn ddl_kernel(r: u32, theta: Orientation) -> Result<Kernel2D> {
    if r == 0 {
        return Err(Error::InvalidInput("dilation rate must be >= 1".into()));
    }
    let ru = r as usize;
    let k = 2 * ru + 1;
    let c = ru;
    let mut taps = Array2::zeros((k, k));
    taps[(c, c)] = -2;
    let (a, b) = match theta {
        Orientation::Deg0 => ((c, c - ru), (c, c + ru)),
        Orientation::Deg90 => ((c - ru, c), (c + ru, c)),
        Orientation::Deg45 => ((c - ru, c + ru), (c + ru, c - ru)),
        Orientation::Deg135 => ((c - ru, c - ru), (c + ru, c + ru)),
    };
    taps[a] = 1;
    taps[b] = 1;
    Ok(Kernel2D { taps, dilation: r, orientation: Some(theta) })
}

/// All four DDL orientations at rate `r`, in the fixed order 0°, 45°, 90°, 135°.
pub fn ddl_kernel_set(r: u32) -> Result<[Kernel2D; 4]> {
    Ok([
        ddl_kernel(r, Orientation::Deg0)?,
        ddl_kernel(r, Orientation::Deg45)?,
        ddl_kernel(r, Orientation::Deg90)?,
        ddl_kernel(r, Orientation::Deg135)?,
    ])
}

/// The 4-neighbour 3x3 Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]`.
pub fn standard_laplacian() -> Kernel2D {
    let taps = ndarray::array![[0, 1, 0], [1, -4, 1], [0, 1, 0]];
    Kernel2D { taps, dilation: 1, orientation: None }
}
