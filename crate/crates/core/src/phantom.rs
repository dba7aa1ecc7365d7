//! Synthetic multi-slice cine phantom with analytically known motion.
//!
//! Each slice shows a uniform body background, a bright "liver" half-plane on
//! the inferior side whose diaphragm boundary translates along the SI axis
//! with a `cos^{2p}` breathing waveform, and a disk "heart" whose radius
//! pulses at the cardiac frequency while its center follows a fraction of the
//! respiratory displacement. Edges are rendered with linear partial-volume
//! ramps so sub-pixel motion is smooth. Gaussian noise is added and the result
//! clamped at zero, like a magnitude image.
//!
//! Geometry is computed in canonical coordinates (SI index increasing
//! inferior, rows = SI) and then mapped to the configured axis/orientation.
//!
//! Randomness: per-slice respiratory phases are drawn from a ChaCha8 stream
//! seeded with `seed`; slice `j` (1-based) draws its noise from a ChaCha8
//! stream seeded with [`slice_seed`]`(seed, j)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SiAxis, SiOrientation, SliceSeries, SliceStack};

/// Shape of the simulated anatomy, mostly as fractions of the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomGeometry {
    pub body_intensity: f64,
    pub liver_intensity: f64,
    pub heart_intensity: f64,
    /// Rest position of the diaphragm on slice 1, as a fraction of the SI extent.
    pub liver_boundary_frac: f64,
    /// Rest boundary shift between neighbouring slices, pixels.
    pub liver_step_px: f64,
    /// Heart center as (SI, in-plane) fractions of the image extents.
    pub heart_center_frac: [f64; 2],
    /// Heart radius on slice 1, as a fraction of the smaller image extent.
    pub heart_radius_frac: f64,
    /// Radius on the last slice relative to slice 1.
    pub apex_radius_ratio: f64,
    /// Fraction of the respiratory displacement followed by the heart.
    pub heart_coupling: f64,
}

impl Default for PhantomGeometry {
    fn default() -> Self {
        Self {
            body_intensity: 0.2,
            liver_intensity: 1.0,
            heart_intensity: 0.8,
            liver_boundary_frac: 0.6,
            liver_step_px: 0.8,
            heart_center_frac: [0.33, 0.5],
            heart_radius_frac: 0.13,
            apex_radius_ratio: 0.6,
            heart_coupling: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Seconds per frame.
    pub frame_interval: f64,
    pub resp_freq: f64,
    /// Peak-to-peak SI displacement, pixels.
    pub resp_amplitude: f64,
    /// `p` in the `cos^{2p}` breathing waveform.
    pub resp_shape_exponent: u32,
    /// Radians, one per slice; drawn uniformly from `[0, 2π)` when absent.
    pub per_slice_phase_offsets: Option<Vec<f64>>,
    pub cardiac_freq: f64,
    /// Radial pulsation amplitude of the heart, pixels.
    pub cardiac_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub si_axis: SiAxis,
    pub si_orientation: SiOrientation,
    pub geometry: PhantomGeometry,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let geometry = PhantomGeometry::default();
        let peak = geometry.body_intensity + geometry.liver_intensity.max(geometry.heart_intensity);
        Self {
            slices: 10,
            height: 192,
            width: 160,
            frames: 240,
            frame_interval: 0.042,
            resp_freq: 0.25,
            resp_amplitude: 8.0,
            resp_shape_exponent: 2,
            per_slice_phase_offsets: None,
            cardiac_freq: 1.2,
            cardiac_amplitude: 3.0,
            noise_sigma: 0.05 * peak,
            seed: 1,
            si_axis: SiAxis::Rows,
            si_orientation: SiOrientation::IncreasingInferior,
            geometry,
        }
    }
}

impl PhantomConfig {
    /// Extent of the image along the SI axis.
    pub fn si_length(&self) -> usize {
        match self.si_axis {
            SiAxis::Rows => self.height,
            SiAxis::Cols => self.width,
        }
    }

    fn other_length(&self) -> usize {
        match self.si_axis {
            SiAxis::Rows => self.width,
            SiAxis::Cols => self.height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.slices == 0 || self.height == 0 || self.width == 0 {
            return bad(format!(
                "need positive dimensions, got J={} H={} W={}",
                self.slices, self.height, self.width
            ));
        }
        if self.frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames));
        }
        if !(self.frame_interval.is_finite() && self.frame_interval > 0.0) {
            return bad(format!("frame interval {}", self.frame_interval));
        }
        if !(self.resp_freq > 0.0 && self.resp_freq < 0.8) {
            return bad(format!("resp_freq {} must lie in (0, 0.8) Hz", self.resp_freq));
        }
        if !(self.cardiac_freq > self.resp_freq && self.cardiac_freq.is_finite()) {
            return bad(format!(
                "cardiac_freq {} must exceed resp_freq {}",
                self.cardiac_freq, self.resp_freq
            ));
        }
        for (name, v) in [
            ("resp_amplitude", self.resp_amplitude),
            ("cardiac_amplitude", self.cardiac_amplitude),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and nonnegative"));
            }
        }
        if self.resp_shape_exponent == 0 {
            return bad("resp_shape_exponent must be at least 1".into());
        }
        if (self.frames as f64) * self.frame_interval * self.resp_freq < 1.0 {
            return bad(format!(
                "{} frames of {} s do not cover one {} Hz breathing period",
                self.frames, self.frame_interval, self.resp_freq
            ));
        }
        if let Some(offsets) = &self.per_slice_phase_offsets {
            if offsets.len() != self.slices {
                return bad(format!(
                    "{} phase offsets for {} slices",
                    offsets.len(),
                    self.slices
                ));
            }
            if offsets.iter().any(|p| !p.is_finite()) {
                return bad("non-finite phase offset".into());
            }
        }
        Ok(())
    }

    /// Per-slice phase offsets, drawn from the seed when not configured.
    pub fn phase_offsets(&self) -> Vec<f64> {
        match &self.per_slice_phase_offsets {
            Some(v) => v.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.slices)
                    .map(|_| rng.random_range(0.0..2.0 * PI))
                    .collect()
            }
        }
    }

    fn liver_rest_boundary(&self, slice_pos: usize) -> f64 {
        self.geometry.liver_boundary_frac * self.si_length() as f64
            + self.geometry.liver_step_px * slice_pos as f64
    }

    fn heart_rest_radius(&self, slice_pos: usize) -> f64 {
        let base = self.geometry.heart_radius_frac * self.si_length().min(self.other_length()) as f64;
        let frac = if self.slices > 1 {
            slice_pos as f64 / (self.slices - 1) as f64
        } else {
            0.0
        };
        base * (1.0 + (self.geometry.apex_radius_ratio - 1.0) * frac)
    }

    fn heart_rest_center(&self) -> [f64; 2] {
        [
            self.geometry.heart_center_frac[0] * self.si_length() as f64,
            self.geometry.heart_center_frac[1] * self.other_length() as f64,
        ]
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of 1-based slice `j`: `splitmix64(seed ^ splitmix64(j))`.
pub fn slice_seed(seed: u64, j: usize) -> u64 {
    splitmix64(seed ^ splitmix64(j as u64))
}

/// Reduces a phase to `[0, 2π)` on a grid of `2π / 2³²`, so offsets that
/// differ by whole turns render identically.
fn canonical_phase(phase: f64) -> f64 {
    const STEPS: f64 = 4_294_967_296.0;
    let q = ((phase / (2.0 * PI)).rem_euclid(1.0) * STEPS).round() % STEPS;
    q * (2.0 * PI / STEPS)
}

/// Mean of `cos^{2p}` over a period: `C(2p, p) / 4^p`.
fn cos_power_mean(p: u32) -> f64 {
    let mut mean = 1.0;
    for k in 1..=p {
        // C(2k,k)/4^k = C(2k-2,k-1)/4^(k-1) * (2k-1)/(2k)
        mean *= (2 * k - 1) as f64 / (2 * k) as f64;
    }
    mean
}

/// Zero-mean SI displacement at time `t` (pixels, positive = inferior):
/// `A · (cos^{2p}(π f t + φ) − C(2p,p)/4^p)`.
pub fn resp_waveform(t: f64, cfg: &PhantomConfig, phase: f64) -> f64 {
    if cfg.resp_amplitude == 0.0 {
        return 0.0;
    }
    let c = (PI * cfg.resp_freq * t + canonical_phase(phase)).cos();
    let c2 = c * c;
    let mut pow = 1.0;
    for _ in 0..cfg.resp_shape_exponent {
        pow *= c2;
    }
    cfg.resp_amplitude * (pow - cos_power_mean(cfg.resp_shape_exponent))
}

/// Closed-form SI displacement field of the phantom: pixel weight times the
/// slice's respiratory trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementModel {
    pub height: usize,
    pub width: usize,
    pub si_axis: SiAxis,
    pub si_orientation: SiOrientation,
    /// Canonical SI position of each slice's diaphragm at zero displacement.
    pub liver_rest_boundary: Vec<f64>,
    /// Canonical (SI, in-plane) heart center at zero displacement.
    pub heart_center: [f64; 2],
    pub heart_rest_radius: Vec<f64>,
    pub heart_coupling: f64,
}

impl DisplacementModel {
    fn canonical(&self, row: usize, col: usize) -> (f64, f64) {
        let (si, other, len) = match self.si_axis {
            SiAxis::Rows => (row, col, self.height),
            SiAxis::Cols => (col, row, self.width),
        };
        let si = match self.si_orientation {
            SiOrientation::IncreasingInferior => si,
            SiOrientation::IncreasingSuperior => len - 1 - si,
        };
        (si as f64 + 0.5, other as f64 + 0.5)
    }

    /// Fraction of the respiratory displacement carried by pixel `(row, col)`
    /// of 0-based slice position `slice_pos`: 1 in the liver, the coupling
    /// factor in the heart, 0 elsewhere.
    pub fn weight(&self, slice_pos: usize, row: usize, col: usize) -> f64 {
        let (s, x) = self.canonical(row, col);
        if s >= self.liver_rest_boundary[slice_pos] {
            return 1.0;
        }
        let ds = s - self.heart_center[0];
        let dx = x - self.heart_center[1];
        if (ds * ds + dx * dx).sqrt() <= self.heart_rest_radius[slice_pos] {
            self.heart_coupling
        } else {
            0.0
        }
    }
}

/// Phantom-only reference record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `J × n` true SI displacement (pixels, positive = inferior).
    pub resp_trace: Vec<Vec<f64>>,
    /// Per-slice 1-based R-wave frame indices.
    pub trigger_frames: Vec<Vec<usize>>,
    pub displacement: DisplacementModel,
    pub frame_interval: f64,
    pub phase_offsets: Vec<f64>,
}

/// Frames nearest each multiple of the cardiac period, 1-based; identical for every slice.
pub fn simulate_triggers(cfg: &PhantomConfig) -> Vec<Vec<usize>> {
    let period = 1.0 / (cfg.cardiac_freq * cfg.frame_interval);
    let mut frames = Vec::new();
    for k in 0.. {
        let f = (k as f64 * period).round() as usize + 1;
        if f > cfg.frames {
            break;
        }
        if frames.last().is_some_and(|&last| f <= last) {
            continue;
        }
        frames.push(f);
    }
    vec![frames; cfg.slices]
}

fn coverage(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn render_slice(cfg: &PhantomConfig, slice_pos: usize, phase: f64) -> Result<(SliceSeries, Vec<f64>)> {
    let n = cfg.frames;
    let si_len = cfg.si_length();
    let g = &cfg.geometry;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * cfg.frame_interval).collect();
    let resp: Vec<f64> = times.iter().map(|&t| resp_waveform(t, cfg, phase)).collect();

    let b0 = cfg.liver_rest_boundary(slice_pos);
    // liver term per canonical SI row and frame
    let mut liver = vec![0.0; si_len * n];
    for s in 0..si_len {
        for i in 0..n {
            liver[s * n + i] = g.liver_intensity * coverage(s as f64 + 1.0 - (b0 + resp[i]));
        }
    }

    let [hc_s, hc_x] = cfg.heart_rest_center();
    let r0 = cfg.heart_rest_radius(slice_pos);
    let heart_s: Vec<f64> = resp.iter().map(|d| hc_s + g.heart_coupling * d).collect();
    let heart_r: Vec<f64> = times
        .iter()
        .map(|&t| (r0 + cfg.cardiac_amplitude * (2.0 * PI * cfg.cardiac_freq * t).cos()).max(0.0))
        .collect();
    let reach = r0 + cfg.cardiac_amplitude + g.heart_coupling.abs() * cfg.resp_amplitude + 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(slice_seed(cfg.seed, slice_pos + 1));
    let (h, w) = (cfg.height, cfg.width);
    let mut data = vec![0.0; h * w * n];
    for row in 0..h {
        for col in 0..w {
            let (si, other) = match cfg.si_axis {
                SiAxis::Rows => (row, col),
                SiAxis::Cols => (col, row),
            };
            let s = match cfg.si_orientation {
                SiOrientation::IncreasingInferior => si,
                SiOrientation::IncreasingSuperior => si_len - 1 - si,
            };
            let (sc, xc) = (s as f64 + 0.5, other as f64 + 0.5);
            let near_heart = (sc - hc_s).abs() <= reach && (xc - hc_x).abs() <= reach;
            let px = &mut data[(row * w + col) * n..(row * w + col + 1) * n];
            for i in 0..n {
                let mut v = g.body_intensity + liver[s * n + i];
                if near_heart {
                    let ds = sc - heart_s[i];
                    let dx = xc - hc_x;
                    let dist = (ds * ds + dx * dx).sqrt();
                    v += g.heart_intensity * coverage(heart_r[i] - dist + 0.5);
                }
                if cfg.noise_sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    v += cfg.noise_sigma * z;
                }
                px[i] = v.max(0.0);
            }
        }
    }
    let series = SliceSeries::new(
        slice_pos + 1,
        h,
        w,
        n,
        data,
        cfg.frame_interval,
        cfg.si_axis,
        cfg.si_orientation,
    )?;
    Ok((series, resp))
}

/// Renders every slice and the matching ground truth. Deterministic in `cfg`.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(SliceStack, GroundTruth)> {
    cfg.validate()?;
    let phases = cfg.phase_offsets();
    let mut slices = Vec::with_capacity(cfg.slices);
    let mut resp_trace = Vec::with_capacity(cfg.slices);
    for (j, &phase) in phases.iter().enumerate() {
        let (series, resp) = render_slice(cfg, j, phase)?;
        slices.push(series);
        resp_trace.push(resp);
    }
    let displacement = DisplacementModel {
        height: cfg.height,
        width: cfg.width,
        si_axis: cfg.si_axis,
        si_orientation: cfg.si_orientation,
        liver_rest_boundary: (0..cfg.slices).map(|j| cfg.liver_rest_boundary(j)).collect(),
        heart_center: cfg.heart_rest_center(),
        heart_rest_radius: (0..cfg.slices).map(|j| cfg.heart_rest_radius(j)).collect(),
        heart_coupling: cfg.geometry.heart_coupling,
    };
    let gt = GroundTruth {
        resp_trace,
        trigger_frames: simulate_triggers(cfg),
        displacement,
        frame_interval: cfg.frame_interval,
        phase_offsets: phases,
    };
    Ok((SliceStack::new(slices), gt))
}
