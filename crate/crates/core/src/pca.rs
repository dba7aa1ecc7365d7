//! Temporal principal components of each slice.
//!
//! Right singular vectors of the pixel-by-frame matrix `D` come from the
//! eigendecomposition of the `n × n` Gram matrix `DᵀD`. No mean-centering is
//! applied, so the leading mode tracks the temporal average and the second
//! mode carries respiration once cardiac content is filtered out.
//!
//! Filtering is folded into the Gram matrix: with the filter written as an
//! `n × n` operator `A` acting on time courses, the filtered data matrix is
//! `D Aᵀ`, its Gram matrix is `A (DᵀD) Aᵀ` and its eigen images are
//! `D (Aᵀ v)`. This avoids materializing the filtered series.

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, SquareMatrix};
use crate::preprocess::{FilterSpec, FirFilter};
use crate::types::{EigenBasis, RespiratorySignal, SliceSeries, SliceStack};

/// Relative asymmetry tolerated by [`top_eigenvectors`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// `λ₂ / λ₁` at or below which a slice has no usable motion mode.
pub const DEGENERATE_SPECTRUM_RATIO: f64 = 1e-12;

/// `G = DᵀD` for the series' pixel-major data matrix.
pub fn gram_matrix(series: &SliceSeries) -> SquareMatrix {
    gram_of_rows(series.data(), series.frames())
}

/// Gram matrix of a row-major matrix with rows of length `n`.
///
/// Accumulates rank-4 updates of the upper triangle in a fixed pixel order,
/// so results are reproducible bit for bit.
pub(crate) fn gram_of_rows(data: &[f64], n: usize) -> SquareMatrix {
    let mut g = vec![0.0; n * n];
    let mut blocks = data.chunks_exact(4 * n);
    for block in &mut blocks {
        let (r0, rest) = block.split_at(n);
        let (r1, rest) = rest.split_at(n);
        let (r2, r3) = rest.split_at(n);
        for a in 0..n {
            let (x0, x1, x2, x3) = (r0[a], r1[a], r2[a], r3[a]);
            let dst = &mut g[a * n + a..(a + 1) * n];
            let cols = dst
                .iter_mut()
                .zip(&r0[a..])
                .zip(&r1[a..])
                .zip(&r2[a..])
                .zip(&r3[a..]);
            for ((((d, y0), y1), y2), y3) in cols {
                *d += x0 * y0 + x1 * y1 + x2 * y2 + x3 * y3;
            }
        }
    }
    for row in blocks.remainder().chunks_exact(n) {
        for a in 0..n {
            let x = row[a];
            for (d, y) in g[a * n + a..(a + 1) * n].iter_mut().zip(&row[a..]) {
                *d += x * y;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            g[a * n + b] = g[b * n + a];
        }
    }
    SquareMatrix::from_row_major(n, g).expect("n*n buffer")
}

/// Top-`k` eigenpairs of a symmetric positive semidefinite matrix.
///
/// Returned vectors have unit norm and whatever sign the solver produced;
/// eigenvalues are descending and clamped at zero. Eigen images are left empty.
pub fn top_eigenvectors(g: &SquareMatrix, k: usize) -> Result<EigenBasis> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(Error::InvalidRank { k, n });
    }
    let asym = g.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * g.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetricInput(asym));
    }
    let (values, vectors) = symmetric_eigen(g)?;
    let mut basis = EigenBasis {
        vectors: Vec::with_capacity(k),
        eigenvalues: Vec::with_capacity(k),
        eigen_images: Vec::new(),
    };
    for col in (n - k..n).rev() {
        basis.eigenvalues.push(values[col].max(0.0));
        basis.vectors.push((0..n).map(|r| vectors.get(r, col)).collect());
    }
    Ok(basis)
}

/// Fills `basis.eigen_images` with `D · v_i` for `series`.
pub fn eigen_images(series: &SliceSeries, mut basis: EigenBasis) -> Result<EigenBasis> {
    let n = series.frames();
    if let Some(bad) = basis.vectors.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "basis vector of length {} for a {n}-frame series",
            bad.len()
        )));
    }
    basis.eigen_images = basis
        .vectors
        .iter()
        .map(|v| project_rows(series.data(), n, v))
        .collect();
    Ok(basis)
}

fn project_rows(data: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    data.chunks_exact(n)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Eigen decomposition of one slice's filtered series.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceModes {
    pub slice_index: usize,
    /// Modes of the filtered series, eigen images populated.
    pub basis: EigenBasis,
    /// `v₂` with solver-chosen sign.
    pub v2: RespiratorySignal,
}

impl SliceModes {
    /// `D · v₂` of the filtered series.
    pub fn eigen_image2(&self) -> &[f64] {
        &self.basis.eigen_images[1]
    }
}

/// Filtered Gram matrix `A (DᵀD) Aᵀ` of a series.
pub fn filtered_gram(series: &SliceSeries, filter: &FirFilter) -> Result<(SquareMatrix, SquareMatrix)> {
    let n = series.frames();
    let op = SquareMatrix::from_row_major(n, filter.operator_matrix(n)?)?;
    let g = gram_matrix(series);
    let gf = op.matmul(&g).matmul(&op.transpose());
    // exact symmetry; the products above differ from it only by rounding
    let mut sym = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5 * (gf.get(i, j) + gf.get(j, i));
            sym.set(i, j, v);
            sym.set(j, i, v);
        }
    }
    Ok((sym, op))
}

/// Low-pass filters a slice, decomposes it and computes `k ≥ 2` modes.
pub fn decompose_slice(series: &SliceSeries, spec: &FilterSpec, k: usize) -> Result<SliceModes> {
    let k = k.max(2);
    let filter = FirFilter::design(spec, series.frame_interval())?;
    let (gf, op) = filtered_gram(series, &filter)?;
    let mut basis = top_eigenvectors(&gf, k)?;
    let l1 = basis.eigenvalues[0];
    let l2 = basis.eigenvalues[1];
    if !(l2 > DEGENERATE_SPECTRUM_RATIO * l1) {
        return Err(Error::DegenerateSpectrum {
            slice: series.slice_index(),
            ratio: if l1 > 0.0 { l2 / l1 } else { 0.0 },
        });
    }
    let n = series.frames();
    basis.eigen_images = basis
        .vectors
        .iter()
        .map(|v| project_rows(series.data(), n, &op.tr_matvec(v)))
        .collect();
    let v2 = RespiratorySignal::raw(series.slice_index(), basis.vectors[1].clone());
    Ok(SliceModes {
        slice_index: series.slice_index(),
        basis,
        v2,
    })
}

/// Extracts `v₂` and its eigen image from every slice of a validated stack.
pub fn extract_v2(stack: &SliceStack, spec: &FilterSpec, k: usize) -> Result<Vec<SliceModes>> {
    stack
        .slices()
        .iter()
        .map(|s| decompose_slice(s, spec, k))
        .collect()
}
