//! Two-step sign correction of the per-slice respiratory mode.
//!
//! Step one chains signs through the stack: neighbouring slices image nearly
//! the same anatomy, so their second eigen images should correlate positively
//! over pixels once their signs agree. Slice `j + 1` is multiplied by the
//! product of `sign(r_{l,l+1})` for `l ≤ j`, which makes every slice agree
//! with slice 1.
//!
//! Step two fixes the one remaining global sign. Each slice's SI mass-median
//! curve is correlated with its chain-corrected trace, and the correlation of
//! largest magnitude decides the sign applied to the whole stack. Using only
//! the most reliable slice matters because on some slices the mass-median
//! curve barely follows breathing.

use log::warn;

use crate::error::{Error, Result};
use crate::pca::{extract_v2, SliceModes};
use crate::preprocess::{FilterSpec, FirFilter};
use crate::types::{
    CoMCurve, RespiratorySignal, SiAxis, SiOrientation, SignReport, SignalStage, SliceSeries,
    SliceStack,
};

/// Default `|r|` below which a neighbour link is reported as weak.
pub const DEFAULT_WEAK_LINK_THRESHOLD: f64 = 0.2;

/// Pearson product-moment correlation, computed in two passes around the means.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "correlating vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::ZeroVariance(format!(
            "need at least two samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if is_constant(x) || sxx == 0.0 {
        return Err(Error::ZeroVariance("first argument is constant".into()));
    }
    if is_constant(y) || syy == 0.0 {
        return Err(Error::ZeroVariance("second argument is constant".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

fn sign_of(r: f64) -> Result<f64> {
    if r > 0.0 {
        Ok(1.0)
    } else if r < 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::ZeroCorrelation)
    }
}

/// Output of the neighbour chaining step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub signals: Vec<RespiratorySignal>,
    pub pairwise_r: Vec<f64>,
    /// Cumulative sign applied to each slice (slice 1 is always +1).
    pub chain_signs: Vec<i8>,
    pub warnings: Vec<String>,
}

/// Aligns every raw `v₂` to slice 1 through neighbour eigen-image correlations.
pub fn chain_signs<I: AsRef<[f64]>>(
    eigen_images: &[I],
    v2s: &[RespiratorySignal],
    weak_link_threshold: f64,
) -> Result<ChainResult> {
    if v2s.len() < 2 {
        return Err(Error::SingleSlice);
    }
    if eigen_images.len() != v2s.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigen images for {} signals",
            eigen_images.len(),
            v2s.len()
        )));
    }
    if let Some(s) = v2s.iter().find(|s| s.stage != SignalStage::RawV2) {
        return Err(Error::WrongStage(s.stage.to_string()));
    }

    let mut pairwise_r = Vec::with_capacity(v2s.len() - 1);
    let mut warnings = Vec::new();
    for (l, pair) in eigen_images.windows(2).enumerate() {
        let r = pearson(pair[0].as_ref(), pair[1].as_ref()).map_err(|e| match e {
            Error::ZeroVariance(_) => Error::ZeroVariance(format!(
                "eigen image of slice {} or {} is constant",
                v2s[l].slice_index,
                v2s[l + 1].slice_index
            )),
            other => other,
        })?;
        if r.abs() < weak_link_threshold {
            let msg = format!(
                "weak link between slices {} and {}: |r| = {:.4} < {}",
                v2s[l].slice_index,
                v2s[l + 1].slice_index,
                r.abs(),
                weak_link_threshold
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        pairwise_r.push(r);
    }

    let mut sign = 1.0;
    let mut chain_signs = vec![1i8];
    let mut signals = vec![v2s[0].signed(1.0, SignalStage::ChainCorrected)];
    for (r, v) in pairwise_r.iter().zip(&v2s[1..]) {
        sign *= sign_of(*r)?;
        chain_signs.push(sign as i8);
        signals.push(v.signed(sign, SignalStage::ChainCorrected));
    }
    Ok(ChainResult {
        signals,
        pairwise_r,
        chain_signs,
        warnings,
    })
}

/// SI projection `P(l, i)`: frame `i` summed over the in-plane axis at SI index `l`,
/// rows ordered toward the patient-inferior direction. Returned as `L` time courses.
pub fn si_projection(series: &SliceSeries) -> Vec<Vec<f64>> {
    let (h, w, n) = (series.height(), series.width(), series.frames());
    let data = series.data();
    let mut proj = match series.si_axis() {
        SiAxis::Rows => {
            let mut p = vec![vec![0.0; n]; h];
            for (row, acc) in p.iter_mut().enumerate() {
                for col in 0..w {
                    let src = &data[(row * w + col) * n..(row * w + col + 1) * n];
                    acc.iter_mut().zip(src).for_each(|(a, v)| *a += v);
                }
            }
            p
        }
        SiAxis::Cols => {
            let mut p = vec![vec![0.0; n]; w];
            for row in 0..h {
                for (col, acc) in p.iter_mut().enumerate() {
                    let src = &data[(row * w + col) * n..(row * w + col + 1) * n];
                    acc.iter_mut().zip(src).for_each(|(a, v)| *a += v);
                }
            }
            p
        }
    };
    if series.si_orientation() == SiOrientation::IncreasingSuperior {
        proj.reverse();
    }
    proj
}

/// Mass median of one projection: the 1-based `m` minimizing
/// `|Σ_{l ≤ m} p_l − Σ p / 2|`. Ties go to the smallest `m` whose row carries
/// mass, else the smallest `m`; the first rule only matters when a single row
/// holds all the mass. `None` for zero total mass.
pub fn mass_median(profile: &[f64]) -> Option<usize> {
    let total: f64 = profile.iter().sum();
    if total == 0.0 {
        return None;
    }
    let half = total / 2.0;
    let mut cum = 0.0;
    // (gap, has no mass, index): lexicographic minimum
    let mut best = (f64::INFINITY, true, 0);
    for (l, p) in profile.iter().enumerate() {
        cum += p;
        let cand = ((cum - half).abs(), *p == 0.0, l + 1);
        if cand.0 < best.0 || (cand.0 == best.0 && best.1 && !cand.1) {
            best = cand;
        }
    }
    Some(best.2)
}

/// Center-of-mass (mass-median) curve along SI for every frame.
///
/// With `filter`, the projection time courses are low-pass filtered first;
/// by linearity this equals projecting the filtered series. Negative
/// projected mass is clamped to zero with a warning.
pub fn com_curve(series: &SliceSeries, filter: Option<&FirFilter>) -> Result<(CoMCurve, Vec<String>)> {
    let mut proj = si_projection(series);
    if let Some(f) = filter {
        for row in proj.iter_mut() {
            *row = f.apply(row)?;
        }
    }
    let mut warnings = Vec::new();
    let negatives = proj.iter().flatten().filter(|v| **v < 0.0).count();
    if negatives > 0 {
        let msg = format!(
            "slice {}: clamped {negatives} negative projection values to zero",
            series.slice_index()
        );
        warn!("{msg}");
        warnings.push(msg);
        proj.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
    }
    let n = series.frames();
    let mut profile = vec![0.0; proj.len()];
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        for (dst, row) in profile.iter_mut().zip(&proj) {
            *dst = row[i];
        }
        let m = mass_median(&profile).ok_or(Error::ZeroMass {
            slice: series.slice_index(),
            frame: i + 1,
        })?;
        values.push(m as f64);
    }
    Ok((
        CoMCurve {
            slice_index: series.slice_index(),
            values,
            axis_length: proj.len(),
        },
        warnings,
    ))
}

/// Output of the global sign step.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSignResult {
    pub signals: Vec<RespiratorySignal>,
    pub com_s: Vec<f64>,
    /// 0-based position of the slice with the largest `|s|`.
    pub chosen: usize,
    pub sign: i8,
    /// 0-based positions with constant CoM curves.
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Applies `sign(s_l)` to every slice, where `s_l` is the CoM correlation of largest magnitude.
pub fn global_sign(chain_corrected: &[RespiratorySignal], curves: &[CoMCurve]) -> Result<GlobalSignResult> {
    if chain_corrected.len() != curves.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals for {} CoM curves",
            chain_corrected.len(),
            curves.len()
        )));
    }
    if let Some(s) = chain_corrected
        .iter()
        .find(|s| s.stage != SignalStage::ChainCorrected)
    {
        return Err(Error::WrongStage(s.stage.to_string()));
    }
    let mut com_s = Vec::with_capacity(curves.len());
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (j, (sig, c)) in chain_corrected.iter().zip(curves).enumerate() {
        if sig.values.len() != c.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "slice {}: signal has {} frames, CoM curve {}",
                sig.slice_index,
                sig.values.len(),
                c.values.len()
            )));
        }
        if is_constant(&c.values) {
            let msg = format!(
                "slice {}: center-of-mass curve is constant; excluded from global sign",
                sig.slice_index
            );
            warn!("{msg}");
            warnings.push(msg);
            excluded.push(j);
            com_s.push(0.0);
            continue;
        }
        com_s.push(pearson(&sig.values, &c.values)?);
    }

    let mut chosen: Option<usize> = None;
    for j in 0..com_s.len() {
        if excluded.contains(&j) {
            continue;
        }
        if chosen.is_none_or(|c| com_s[j].abs() > com_s[c].abs()) {
            chosen = Some(j);
        }
    }
    let chosen = chosen.ok_or(Error::AllCurvesDegenerate)?;
    let sign = sign_of(com_s[chosen])?;
    let signals = chain_corrected
        .iter()
        .map(|s| s.signed(sign, SignalStage::GloballyCorrected))
        .collect();
    Ok(GlobalSignResult {
        signals,
        com_s,
        chosen,
        sign: sign as i8,
        excluded,
        warnings,
    })
}

/// Chains and globally aligns already extracted modes.
pub fn resolve_signs(
    modes: &[SliceModes],
    curves: &[CoMCurve],
    weak_link_threshold: f64,
) -> Result<(Vec<RespiratorySignal>, SignReport)> {
    let images: Vec<&[f64]> = modes.iter().map(|m| m.eigen_image2()).collect();
    let raw: Vec<RespiratorySignal> = modes.iter().map(|m| m.v2.clone()).collect();
    let chain = chain_signs(&images, &raw, weak_link_threshold)?;
    let global = global_sign(&chain.signals, curves)?;
    let mut warnings = chain.warnings;
    warnings.extend(global.warnings);
    let report = SignReport {
        pairwise_r: chain.pairwise_r,
        com_s: global.com_s,
        chosen_slice: global.chosen + 1,
        applied_global_sign: global.sign,
        per_slice_chain_sign: chain.chain_signs,
        excluded_slices: global.excluded.iter().map(|j| j + 1).collect(),
        warnings,
    };
    Ok((global.signals, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOptions {
    pub filter: FilterSpec,
    /// Modes computed per slice (at least 2).
    pub k: usize,
    pub weak_link_threshold: f64,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            k: 2,
            weak_link_threshold: DEFAULT_WEAK_LINK_THRESHOLD,
        }
    }
}

/// Everything produced by a full sign-correction run.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub signals: Vec<RespiratorySignal>,
    pub report: SignReport,
    pub modes: Vec<SliceModes>,
    pub curves: Vec<CoMCurve>,
}

/// CoM curves of every slice, computed on the low-pass filtered series.
pub fn filtered_com_curves(stack: &SliceStack, spec: &FilterSpec) -> Result<(Vec<CoMCurve>, Vec<String>)> {
    let mut curves = Vec::with_capacity(stack.len());
    let mut warnings = Vec::new();
    for s in stack.slices() {
        let filter = FirFilter::design(spec, s.frame_interval())?;
        let (c, w) = com_curve(s, Some(&filter))?;
        curves.push(c);
        warnings.extend(w);
    }
    Ok((curves, warnings))
}

/// Full pipeline: extract `v₂`, chain signs, compute CoM curves, apply the global sign.
pub fn correct_signs_with(stack: &SliceStack, opts: &CorrectionOptions) -> Result<Correction> {
    if stack.len() < 2 {
        return Err(Error::SingleSlice);
    }
    let modes = extract_v2(stack, &opts.filter, opts.k)?;
    let (curves, com_warnings) = filtered_com_curves(stack, &opts.filter)?;
    let (signals, mut report) = resolve_signs(&modes, &curves, opts.weak_link_threshold)?;
    let mut warnings = com_warnings;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok(Correction {
        signals,
        report,
        modes,
        curves,
    })
}

/// [`correct_signs_with`] using default options apart from the filter.
pub fn correct_signs(stack: &SliceStack, spec: &FilterSpec) -> Result<(Vec<RespiratorySignal>, SignReport)> {
    let opts = CorrectionOptions {
        filter: *spec,
        ..CorrectionOptions::default()
    };
    let c = correct_signs_with(stack, &opts)?;
    Ok((c.signals, c.report))
}
