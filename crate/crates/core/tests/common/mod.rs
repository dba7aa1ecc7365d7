#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use respigate::phantom::{generate_phantom, GroundTruth, PhantomConfig};
use respigate::types::SliceStack;

/// The default phantom, rendered once per test binary.
pub fn default_phantom() -> &'static (SliceStack, GroundTruth) {
    static CELL: OnceLock<(SliceStack, GroundTruth)> = OnceLock::new();
    CELL.get_or_init(|| generate_phantom(&PhantomConfig::default()).expect("default phantom"))
}

/// Reduced-size phantom for tests that only need plausible data.
pub fn small_config() -> PhantomConfig {
    PhantomConfig {
        slices: 4,
        height: 64,
        width: 48,
        frames: 120,
        ..PhantomConfig::default()
    }
}

/// Two-pass Pearson correlation, independent of the library's.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Amplitude spectrum of `x` at bins `0..n/2` by direct DFT.
pub fn amplitude_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = 2.0 * PI * (k * i) as f64 / n as f64;
                re += v * w.cos();
                im -= v * w.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// SplitMix64 stream mapped to `[0, 1)`.
pub struct Uniform(pub u64);

impl Uniform {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() * n as f64) as usize
    }
}
