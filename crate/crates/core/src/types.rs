//! Shared domain types.
//!
//! A [`SliceSeries`] stores its frames as a row-major `H × W × n` tensor.
//! Flattening pixels row-major over `H` then `W` gives pixel index
//! `p = h * W + w`, and the backing buffer read as `M × n` row-major (with
//! `M = H * W`) is exactly the pixel-by-frame data matrix `D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which image axis runs superior–inferior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiAxis {
    Rows,
    Cols,
}

/// Patient direction of increasing pixel index along the SI axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiOrientation {
    IncreasingInferior,
    IncreasingSuperior,
}

/// One slice's image time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSeries {
    slice_index: usize,
    height: usize,
    width: usize,
    frames: usize,
    data: Vec<f64>,
    frame_interval: f64,
    si_axis: SiAxis,
    si_orientation: SiOrientation,
}

impl SliceSeries {
    /// Builds a series from a row-major `height × width × frames` buffer.
    pub fn new(
        slice_index: usize,
        height: usize,
        width: usize,
        frames: usize,
        data: Vec<f64>,
        frame_interval: f64,
        si_axis: SiAxis,
        si_orientation: SiOrientation,
    ) -> Result<Self> {
        if frames < 2 {
            return Err(Error::InvalidSeries(format!(
                "slice {slice_index}: need at least 2 frames, got {frames}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidSeries(format!(
                "slice {slice_index}: empty image {height}x{width}"
            )));
        }
        if data.len() != height * width * frames {
            return Err(Error::DimensionMismatch(format!(
                "slice {slice_index}: buffer holds {} values, expected {height}x{width}x{frames}",
                data.len()
            )));
        }
        if !(frame_interval.is_finite() && frame_interval > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "slice {slice_index}: frame interval {frame_interval} must be positive and finite"
            )));
        }
        Ok(Self {
            slice_index,
            height,
            width,
            frames,
            data,
            frame_interval,
            si_axis,
            si_orientation,
        })
    }

    /// Builds a series from a pixel-major `M × n` matrix, reusing `template`'s metadata.
    pub fn with_data(template: &SliceSeries, data: Vec<f64>) -> Result<Self> {
        Self::new(
            template.slice_index,
            template.height,
            template.width,
            template.frames,
            data,
            template.frame_interval,
            template.si_axis,
            template.si_orientation,
        )
    }

    pub fn slice_index(&self) -> usize {
        self.slice_index
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of frames `n`.
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Number of pixels per frame `M = H * W`.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    pub fn si_axis(&self) -> SiAxis {
        self.si_axis
    }

    pub fn si_orientation(&self) -> SiOrientation {
        self.si_orientation
    }

    /// Pixel-major data matrix `D` (row `p` is the time course of pixel `p`).
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Time course of pixel `p`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.frames..(p + 1) * self.frames]
    }

    pub fn value(&self, row: usize, col: usize, frame: usize) -> f64 {
        self.data[(row * self.width + col) * self.frames + frame]
    }

    /// Copies frame `i` out as a row-major `H × W` image.
    pub fn frame(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.frames).copied().collect()
    }

    /// Pixel-wise temporal mean image.
    pub fn mean_image(&self) -> Vec<f64> {
        let n = self.frames as f64;
        self.data
            .chunks_exact(self.frames)
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    }

    /// Assembles a series from a list of row-major `H × W` frames.
    pub fn from_frames(
        slice_index: usize,
        height: usize,
        width: usize,
        frames: &[Vec<f64>],
        frame_interval: f64,
        si_axis: SiAxis,
        si_orientation: SiOrientation,
    ) -> Result<Self> {
        let n = frames.len();
        let m = height * width;
        if let Some(bad) = frames.iter().position(|f| f.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "frame {bad} holds {} pixels, expected {m}",
                frames[bad].len()
            )));
        }
        let mut data = vec![0.0; m * n];
        for (i, f) in frames.iter().enumerate() {
            for (p, &v) in f.iter().enumerate() {
                data[p * n + i] = v;
            }
        }
        Self::new(
            slice_index,
            height,
            width,
            n,
            data,
            frame_interval,
            si_axis,
            si_orientation,
        )
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let frame = pos % self.frames;
            let pixel = pos / self.frames;
            return Err(Error::NonFiniteData(format!(
                "slice {} pixel ({}, {}) frame {}",
                self.slice_index,
                pixel / self.width,
                pixel % self.width,
                frame
            )));
        }
        Ok(())
    }
}

/// Spatially ordered list of slices; list order is acquisition-plane adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    slices: Vec<SliceSeries>,
}

impl SliceStack {
    /// Wraps slices without validation. Use [`validate_stack`] before processing.
    pub fn new(slices: Vec<SliceSeries>) -> Self {
        Self { slices }
    }

    pub fn slices(&self) -> &[SliceSeries] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<SliceSeries> {
        self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Keeps slices at 0-based positions 0, 2, 4, … (slices 1, 3, 5, … in 1-based terms).
    pub fn odd_slices(&self) -> SliceStack {
        SliceStack::new(self.slices.iter().step_by(2).cloned().collect())
    }
}

/// Checks every [`SliceSeries`] and [`SliceStack`] invariant.
///
/// Single-slice stacks are accepted here; sign correction rejects them later.
pub fn validate_stack(stack: SliceStack) -> Result<SliceStack> {
    let first = stack.slices.first().ok_or(Error::EmptyStack)?;
    let (h, w, n) = (first.height, first.width, first.frames);
    let (axis, orient) = (first.si_axis, first.si_orientation);
    for s in &stack.slices {
        if (s.height, s.width, s.frames) != (h, w, n) {
            return Err(Error::DimensionMismatch(format!(
                "slice {} is {}x{}x{}, slice {} is {h}x{w}x{n}",
                s.slice_index, s.height, s.width, s.frames, first.slice_index
            )));
        }
        if s.si_axis != axis || s.si_orientation != orient {
            return Err(Error::DimensionMismatch(format!(
                "slice {} SI metadata differs from slice {}",
                s.slice_index, first.slice_index
            )));
        }
        if s.frames < 2 || s.data.len() != h * w * n {
            return Err(Error::DimensionMismatch(format!(
                "slice {} buffer is inconsistent with its shape",
                s.slice_index
            )));
        }
        if !(s.frame_interval.is_finite() && s.frame_interval > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "slice {}: frame interval {}",
                s.slice_index, s.frame_interval
            )));
        }
        s.check_finite()?;
    }
    Ok(stack)
}

/// Top-k temporal modes of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Unit-norm right singular vectors, length `n` each.
    pub vectors: Vec<Vec<f64>>,
    /// Gram eigenvalues (squared singular values), descending.
    pub eigenvalues: Vec<f64>,
    /// `D · v_i`, length `M` each. Empty until populated.
    pub eigen_images: Vec<Vec<f64>>,
}

impl EigenBasis {
    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    /// `λ₂ / λ₃`, when at least three modes were computed.
    pub fn lambda2_over_lambda3(&self) -> Option<f64> {
        match self.eigenvalues.as_slice() {
            [_, l2, l3, ..] if *l3 > 0.0 => Some(l2 / l3),
            _ => None,
        }
    }
}

/// Processing stage of a respiratory trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalStage {
    RawV2,
    ChainCorrected,
    GloballyCorrected,
}

impl std::fmt::Display for SignalStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SignalStage::RawV2 => "raw_v2",
            SignalStage::ChainCorrected => "chain_corrected",
            SignalStage::GloballyCorrected => "globally_corrected",
        };
        f.write_str(s)
    }
}

/// Per-slice respiratory trace at a given stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RespiratorySignal {
    pub slice_index: usize,
    pub values: Vec<f64>,
    pub stage: SignalStage,
}

impl RespiratorySignal {
    pub fn raw(slice_index: usize, values: Vec<f64>) -> Self {
        Self {
            slice_index,
            values,
            stage: SignalStage::RawV2,
        }
    }

    /// Multiplies by `sign` (±1) and advances to `stage`.
    ///
    /// Stages only move forward; multiplying by ±1 is exact so norms are preserved.
    pub(crate) fn signed(&self, sign: f64, stage: SignalStage) -> Self {
        debug_assert!(sign == 1.0 || sign == -1.0);
        debug_assert!(stage > self.stage);
        Self {
            slice_index: self.slice_index,
            values: self.values.iter().map(|v| sign * v).collect(),
            stage,
        }
    }
}

/// Per-frame SI mass-median positions of one slice (1-based pixel indices,
/// increasing toward the patient-inferior direction).
#[derive(Debug, Clone, PartialEq)]
pub struct CoMCurve {
    pub slice_index: usize,
    pub values: Vec<f64>,
    pub axis_length: usize,
}

/// Diagnostics of the two-step sign correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    /// Pearson `r` between neighbouring eigen images, length `J − 1`.
    pub pairwise_r: Vec<f64>,
    /// Pearson `s` between each chain-corrected trace and its CoM curve, length `J`.
    pub com_s: Vec<f64>,
    /// 1-based stack position of the slice with the largest `|s|`.
    pub chosen_slice: usize,
    pub applied_global_sign: i8,
    pub per_slice_chain_sign: Vec<i8>,
    /// 1-based stack positions whose CoM curve was constant and excluded.
    #[serde(default)]
    pub excluded_slices: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}
