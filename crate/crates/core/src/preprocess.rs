//! Temporal low-pass filtering.
//!
//! A Hamming-windowed sinc FIR with symmetric taps, applied with
//! mirror-reflection padding so the output has zero phase lag and no edge
//! transients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SliceSeries;

/// Peak sidelobe attenuation reachable with a Hamming window.
pub const HAMMING_STOPBAND_DB: f64 = 53.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    ZeroPhaseFir,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub transition_width_hz: f64,
    pub min_stopband_atten_db: f64,
    pub mode: FilterMode,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: 0.8,
            transition_width_hz: 0.4,
            min_stopband_atten_db: 40.0,
            mode: FilterMode::ZeroPhaseFir,
        }
    }
}

/// Designed filter taps for a given frame interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    /// Designs the filter. The sinc cutoff sits at `cutoff_hz` (the −6 dB
    /// point) and the transition band of `transition_width_hz` is centered on it.
    pub fn design(spec: &FilterSpec, frame_interval: f64) -> Result<Self> {
        if !(frame_interval.is_finite() && frame_interval > 0.0) {
            return Err(Error::InvalidFilter(format!(
                "frame interval {frame_interval}"
            )));
        }
        let fs = 1.0 / frame_interval;
        let nyquist = fs / 2.0;
        if !(spec.cutoff_hz > 0.0 && spec.cutoff_hz.is_finite()) {
            return Err(Error::InvalidFilter(format!("cutoff {}", spec.cutoff_hz)));
        }
        if spec.cutoff_hz >= nyquist {
            return Err(Error::CutoffAboveNyquist {
                cutoff_hz: spec.cutoff_hz,
                nyquist_hz: nyquist,
            });
        }
        if !(spec.transition_width_hz > 0.0 && spec.transition_width_hz.is_finite()) {
            return Err(Error::InvalidFilter(format!(
                "transition width {}",
                spec.transition_width_hz
            )));
        }
        if spec.min_stopband_atten_db > HAMMING_STOPBAND_DB {
            return Err(Error::InvalidFilter(format!(
                "{} dB stopband exceeds the {HAMMING_STOPBAND_DB} dB a Hamming window provides",
                spec.min_stopband_atten_db
            )));
        }

        // Hamming window length rule: N ≈ 3.3 / Δf (Δf in cycles/sample).
        let df = spec.transition_width_hz / fs;
        let mut len = (3.3 / df).ceil() as usize;
        if len.is_multiple_of(2) {
            len += 1;
        }
        let len = len.max(3);
        let half = (len - 1) / 2;
        let fc = spec.cutoff_hz / fs;
        let mut taps: Vec<f64> = (0..len)
            .map(|k| {
                let x = k as f64 - half as f64;
                let ideal = if x == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * PI * fc * x).sin() / (PI * x)
                };
                let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / (len - 1) as f64).cos();
                ideal * window
            })
            .collect();
        // symmetrize exactly, then normalize to unit DC gain
        for k in 0..half {
            let avg = 0.5 * (taps[k] + taps[len - 1 - k]);
            taps[k] = avg;
            taps[len - 1 - k] = avg;
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn half_length(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    fn check_len(&self, n: usize) -> Result<()> {
        // reflection padding needs samples 1..=half on both sides
        if n <= self.half_length() {
            return Err(Error::SeriesTooShort {
                frames: n,
                half_length: self.half_length(),
            });
        }
        Ok(())
    }

    /// Filters one time course.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut padded = Vec::with_capacity(x.len() + 2 * self.half_length());
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut padded, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], padded: &mut Vec<f64>, out: &mut [f64]) {
        let n = x.len();
        let h = self.half_length();
        padded.clear();
        padded.extend((1..=h).rev().map(|k| x[k]));
        padded.extend_from_slice(x);
        padded.extend((1..=h).map(|k| x[n - 1 - k]));
        for (i, y) in out.iter_mut().enumerate() {
            *y = padded[i..i + self.taps.len()]
                .iter()
                .zip(&self.taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// The filter as an `n × n` row-major linear operator on a time course,
    /// reflection padding folded in: `y = A x`.
    pub fn operator_matrix(&self, n: usize) -> Result<Vec<f64>> {
        self.check_len(n)?;
        let h = self.half_length() as isize;
        let last = n as isize - 1;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for (k, &t) in self.taps.iter().enumerate() {
                let mut j = i as isize + k as isize - h;
                if j < 0 {
                    j = -j;
                } else if j > last {
                    j = 2 * last - j;
                }
                a[i * n + j as usize] += t;
            }
        }
        Ok(a)
    }
}

/// Low-pass filters every pixel's time course of `series`.
pub fn lowpass_temporal(series: &SliceSeries, spec: &FilterSpec) -> Result<SliceSeries> {
    let filter = FirFilter::design(spec, series.frame_interval())?;
    let n = series.frames();
    filter.check_len(n)?;
    let mut out = vec![0.0; series.data().len()];
    let mut padded = Vec::with_capacity(n + 2 * filter.half_length());
    for (src, dst) in series
        .data()
        .chunks_exact(n)
        .zip(out.chunks_exact_mut(n))
    {
        filter.apply_into(src, &mut padded, dst);
    }
    SliceSeries::with_data(series, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{SiAxis, SiOrientation};

    const DT: f64 = 0.042;

    fn default_filter() -> FirFilter {
        FirFilter::design(&FilterSpec::default(), DT).unwrap()
    }

    /// Amplitude and phase of `x` at `freq` by direct DFT projection.
    fn dft_at(x: &[f64], freq: f64, dt: f64) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let w = 2.0 * PI * freq * i as f64 * dt;
            re += v * w.cos();
            im -= v * w.sin();
        }
        let n = x.len() as f64;
        ((re * re + im * im).sqrt() * 2.0 / n, im.atan2(re))
    }

    fn sinusoid(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 * DT + 0.3).sin())
            .collect()
    }

    #[test]
    fn taps_are_symmetric_with_unit_dc_gain() {
        let f = default_filter();
        let t = f.taps();
        assert_eq!(t.len() % 2, 1);
        for k in 0..t.len() {
            assert_eq!(t[k], t[t.len() - 1 - k]);
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_passes_unchanged() {
        let out = default_filter().apply(&vec![3.25; 240]).unwrap();
        assert!(out.iter().all(|v| (v - 3.25).abs() < 1e-9));
    }

    #[test]
    fn cardiac_frequency_is_attenuated_40db() {
        // 1250 frames at 42 ms hold exactly 63 cycles of 1.2 Hz: no DFT leakage
        let n = 1250;
        let f = default_filter();
        let x = sinusoid(1.2, n);
        let y = f.apply(&x).unwrap();
        let (ain, _) = dft_at(&x, 1.2, DT);
        let (aout, _) = dft_at(&y, 1.2, DT);
        assert!(aout <= 0.01 * ain, "gain {}", aout / ain);
        // steady-state interior of a 240-frame series
        let h = f.half_length();
        let y = f.apply(&sinusoid(1.2, 240)).unwrap();
        let peak = y[h..240 - h].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 0.01, "interior peak {peak}");
    }

    #[test]
    fn respiratory_frequency_passes_with_zero_lag() {
        // 2000 frames hold exactly 21 cycles of 0.25 Hz
        let n = 2000;
        let x = sinusoid(0.25, n);
        let y = default_filter().apply(&x).unwrap();
        let (ain, _) = dft_at(&x, 0.25, DT);
        let (aout, _) = dft_at(&y, 0.25, DT);
        assert!((aout / ain - 1.0).abs() < 0.02, "gain {}", aout / ain);

        let (_, pin) = dft_at(&x, 0.25, DT);
        let (_, pout) = dft_at(&y, 0.25, DT);
        let lag_frames = (pout - pin) / (2.0 * PI * 0.25 * DT);
        assert!(lag_frames.abs() < 1.0, "lag {lag_frames} frames");

        // cross-correlation lag oracle on broadband input, interior samples only
        let mut state = 99u64;
        let noise: Vec<f64> = (0..600)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let f = default_filter();
        let out = f.apply(&noise).unwrap();
        let h = f.half_length() + 10;
        let xcorr = |lag: isize| -> f64 {
            (h..600 - h)
                .map(|i| noise[i] * out[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-10..=10)
            .max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b)))
            .unwrap();
        assert_eq!(best, 0);

        let x = sinusoid(0.25, 240);
        let y = default_filter().apply(&x).unwrap();
        let (a240, _) = dft_at(&x, 0.25, DT);
        let (b240, _) = dft_at(&y, 0.25, DT);
        assert!((b240 / a240 - 1.0).abs() < 0.02, "gain {}", b240 / a240);
    }

    #[test]
    fn cutoff_above_nyquist_is_rejected() {
        let spec = FilterSpec {
            cutoff_hz: 12.0,
            ..FilterSpec::default()
        };
        assert!(matches!(
            FirFilter::design(&spec, DT),
            Err(Error::CutoffAboveNyquist { .. })
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        let f = default_filter();
        let h = f.half_length();
        assert!(matches!(
            f.apply(&vec![0.0; h]),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(f.apply(&vec![0.0; h + 1]).is_ok());
    }

    #[test]
    fn operator_matrix_matches_direct_filtering() {
        let f = default_filter();
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let y = f.apply(&x).unwrap();
        let a = f.operator_matrix(n).unwrap();
        for i in 0..n {
            let yi: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((yi - y[i]).abs() < 1e-12 * (1.0 + y[i].abs()));
        }
    }

    #[test]
    fn lowpass_temporal_filters_each_pixel() {
        let n = 120;
        let frames: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 * DT;
                vec![
                    1.0,
                    (2.0 * PI * 0.25 * t).sin(),
                    (2.0 * PI * 1.2 * t).sin(),
                    5.0 + t,
                ]
            })
            .collect();
        let s = SliceSeries::from_frames(
            3,
            2,
            2,
            &frames,
            DT,
            SiAxis::Rows,
            SiOrientation::IncreasingInferior,
        )
        .unwrap();
        let out = lowpass_temporal(&s, &FilterSpec::default()).unwrap();
        assert_eq!(out.slice_index(), 3);
        let f = default_filter();
        for p in 0..4 {
            assert_eq!(out.pixel(p), f.apply(s.pixel(p)).unwrap().as_slice());
        }
    }
}
