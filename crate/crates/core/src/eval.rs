//! Agreement between extracted respiratory signals and reference traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::GroundTruth;
use crate::signcorrect::{correct_signs_with, pearson, CorrectionOptions};
use crate::types::{RespiratorySignal, SliceStack};

/// Axis-aligned rectangle in image coordinates, 0-based, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl std::fmt::Display for Roi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rows {}..{} cols {}..{}",
            self.row,
            self.row + self.rows,
            self.col,
            self.col + self.cols
        )
    }
}

/// Mean SI displacement of the phantom's analytic motion field inside `roi`,
/// per frame, for 1-based stack position `slice`.
pub fn roi_reference(gt: Option<&GroundTruth>, roi: &Roi, slice: usize) -> Result<Vec<f64>> {
    let gt = gt.ok_or(Error::NoGroundTruth)?;
    let d = &gt.displacement;
    if roi.rows == 0
        || roi.cols == 0
        || roi.row + roi.rows > d.height
        || roi.col + roi.cols > d.width
    {
        return Err(Error::RoiOutOfBounds(roi.to_string()));
    }
    if slice == 0 || slice > gt.resp_trace.len() {
        return Err(Error::DimensionMismatch(format!(
            "slice {slice} of a {}-slice ground truth",
            gt.resp_trace.len()
        )));
    }
    let mut weight = 0.0;
    for r in roi.row..roi.row + roi.rows {
        for c in roi.col..roi.col + roi.cols {
            weight += d.weight(slice - 1, r, c);
        }
    }
    let weight = weight / (roi.rows * roi.cols) as f64;
    Ok(gt.resp_trace[slice - 1].iter().map(|v| weight * v).collect())
}

/// A region inside the moving liver on every slice: ten SI pixels starting two
/// pixels past the lowest rest diaphragm, central half of the in-plane extent.
pub fn default_roi(gt: &GroundTruth) -> Roi {
    use crate::types::{SiAxis, SiOrientation};
    let d = &gt.displacement;
    let (si_len, other_len) = match d.si_axis {
        SiAxis::Rows => (d.height, d.width),
        SiAxis::Cols => (d.width, d.height),
    };
    let deepest = d
        .liver_rest_boundary
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let start = ((deepest.ceil() as usize) + 2).min(si_len.saturating_sub(1));
    let len = 10.min(si_len - start);
    let si0 = match d.si_orientation {
        SiOrientation::IncreasingInferior => start,
        SiOrientation::IncreasingSuperior => si_len - start - len,
    };
    let (o0, olen) = (other_len / 4, (other_len / 2).max(1));
    match d.si_axis {
        SiAxis::Rows => Roi { row: si0, col: o0, rows: len, cols: olen },
        SiAxis::Cols => Roi { row: o0, col: si0, rows: olen, cols: len },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_slice_r: Vec<f64>,
    pub mean_r: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub all_positive: bool,
}

/// Per-slice Pearson correlation of signals against references plus summaries.
pub fn agreement<S: AsRef<[f64]>, R: AsRef<[f64]>>(signals: &[S], references: &[R]) -> Result<AgreementReport> {
    if signals.len() != references.len() || signals.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals against {} references",
            signals.len(),
            references.len()
        )));
    }
    let per_slice_r = signals
        .iter()
        .zip(references)
        .map(|(s, r)| pearson(s.as_ref(), r.as_ref()))
        .collect::<Result<Vec<f64>>>()?;
    let mean_r = per_slice_r.iter().sum::<f64>() / per_slice_r.len() as f64;
    let min_r = per_slice_r.iter().copied().fold(f64::INFINITY, f64::min);
    let max_r = per_slice_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AgreementReport {
        all_positive: per_slice_r.iter().all(|r| *r > 0.0),
        per_slice_r,
        mean_r,
        min_r,
        max_r,
    })
}

/// Convenience wrapper over [`agreement`] for corrected signals.
pub fn signal_agreement(signals: &[RespiratorySignal], references: &[Vec<f64>]) -> Result<AgreementReport> {
    let values: Vec<&[f64]> = signals.iter().map(|s| s.values.as_slice()).collect();
    agreement(&values, references)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddSliceReport {
    pub full: AgreementReport,
    pub odd: AgreementReport,
}

/// Runs sign correction on the whole stack and on slices 1, 3, 5, … only,
/// scoring both against the ground-truth traces.
pub fn odd_slice_experiment(stack: &SliceStack, gt: &GroundTruth, opts: &CorrectionOptions) -> Result<OddSliceReport> {
    if gt.resp_trace.len() != stack.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ground-truth traces for {} slices",
            gt.resp_trace.len(),
            stack.len()
        )));
    }
    let full = correct_signs_with(stack, opts)?;
    let full = signal_agreement(&full.signals, &gt.resp_trace)?;
    let odd_stack = stack.odd_slices();
    let odd_refs: Vec<Vec<f64>> = gt.resp_trace.iter().step_by(2).cloned().collect();
    let odd = correct_signs_with(&odd_stack, opts)?;
    let odd = signal_agreement(&odd.signals, &odd_refs)?;
    Ok(OddSliceReport { full, odd })
}

/// Plain-text summary table: one row per run with mean and range of `r`.
pub fn format_table(rows: &[(String, &AgreementReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>6}  {:>11}  All positive", "Run", "Mean", "Range");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>6.2}  {:>5.2}-{:<5.2}  {}",
            name,
            r.mean_r,
            r.min_r,
            r.max_r,
            if r.all_positive { "yes" } else { "no" }
        );
    }
    out
}
