use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::layout::{Subsystem, SubsystemLayout, DEFAULT_DIMENSION_BUDGET};
use super::operator::{LocalOperator, TargetIndexer, UNITARY_TOLERANCE};
use super::pure::{PureState, NORM_TOLERANCE};
use crate::error::{Error, Result};

/// Most negative eigenvalue tolerated by [`DensityOperator::validate`].
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

/// A density matrix over a [`SubsystemLayout`], stored dense and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    layout: SubsystemLayout,
    dim: usize,
    matrix: Vec<C64>,
}

fn check_budget(layout: &SubsystemLayout) -> Result<usize> {
    let dim = layout.checked_dimension(DEFAULT_DIMENSION_BUDGET)?;
    let entries = (dim as u128) * (dim as u128);
    if entries > DEFAULT_DIMENSION_BUDGET as u128 {
        return Err(Error::DimensionBudget {
            required: entries,
            budget: DEFAULT_DIMENSION_BUDGET,
        });
    }
    Ok(dim)
}

impl DensityOperator {
    /// Wraps a row-major matrix after checking Hermiticity, trace and positivity.
    pub fn new(layout: SubsystemLayout, matrix: Vec<C64>) -> Result<Self> {
        let dim = check_budget(&layout)?;
        if matrix.len() != dim * dim {
            return Err(Error::LayoutMismatch(format!(
                "{} entries for a {dim}x{dim} density operator",
                matrix.len()
            )));
        }
        let rho = Self {
            layout,
            dim,
            matrix,
        };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_pure(psi: &PureState) -> Result<Self> {
        let layout = psi.layout().clone();
        let dim = check_budget(&layout)?;
        let a = psi.amplitudes();
        let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            if a[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..dim {
                matrix[i * dim + j] = a[i] * a[j].conj();
            }
        }
        Ok(Self {
            layout,
            dim,
            matrix,
        })
    }

    /// Convex combination of pure states; weights must sum to one.
    pub fn from_mixture(components: &[(f64, PureState)]) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidInput("empty mixture".into()));
        };
        let layout = first.layout().clone();
        let dim = check_budget(&layout)?;
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
        for (w, psi) in components {
            if *w < 0.0 {
                return Err(Error::parameter("mixture weight", *w, "must be non-negative"));
            }
            if psi.layout() != &layout {
                return Err(Error::LayoutMismatch("mixture components differ".into()));
            }
            let a = psi.amplitudes();
            for i in 0..dim {
                if a[i] == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..dim {
                    matrix[i * dim + j] += *w * a[i] * a[j].conj();
                }
            }
        }
        Ok(Self {
            layout,
            dim,
            matrix,
        })
    }

    pub(crate) fn unchecked(layout: SubsystemLayout, matrix: Vec<C64>) -> Self {
        let dim = layout.dimension();
        debug_assert_eq!(matrix.len(), dim * dim);
        Self {
            layout,
            dim,
            matrix,
        }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix[row * self.dim + col]
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[i * d + j] - self.matrix[j * d + i].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim;
        // Symmetrize so round-off asymmetry does not leak into the solver.
        let m = DMatrix::from_fn(d, d, |i, j| {
            0.5 * (self.matrix[i * d + j] + self.matrix[j * d + i].conj())
        });
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Checks Hermiticity and unit trace within 1e-12 and eigenvalues >= -1e-10.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_deviation();
        if h > NORM_TOLERANCE {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {h:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > NORM_TOLERANCE || tr.im.abs() > NORM_TOLERANCE {
            return Err(Error::InvalidDensity(format!("trace {tr} is not 1")));
        }
        let lambda = self.min_eigenvalue();
        if lambda < -POSITIVITY_TOLERANCE {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {lambda:e}"
            )));
        }
        Ok(())
    }

    /// `<psi| rho |psi>`.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        if psi.layout() != &self.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {}",
                psi.layout(),
                self.layout
            )));
        }
        let a = psi.amplitudes();
        let d = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            if a[i] == C64::new(0.0, 0.0) {
                continue;
            }
            let row: C64 = (0..d).map(|j| self.matrix[i * d + j] * a[j]).sum();
            acc += a[i].conj() * row;
        }
        Ok(acc.re)
    }

    pub fn apply_unitary(&self, op: &LocalOperator) -> Result<DensityOperator> {
        let deviation = op.unitarity_deviation();
        if deviation > UNITARY_TOLERANCE {
            return Err(Error::NotUnitary(deviation));
        }
        self.sandwich(op)
    }

    /// `K rho K^dagger` without renormalization.
    pub(crate) fn sandwich(&self, op: &LocalOperator) -> Result<DensityOperator> {
        op.check_against(&self.layout)?;
        let indexer = TargetIndexer::new(&self.layout, op.targets())?;
        Ok(DensityOperator {
            layout: self.layout.clone(),
            dim: self.dim,
            matrix: sandwich_matrix(&self.matrix, self.dim, &indexer, op),
        })
    }

    /// Applies the channel `rho -> sum_k K_k rho K_k^dagger`.
    ///
    /// The Kraus set must be trace preserving on the whole local space.
    pub fn apply_kraus(&self, kraus: &[LocalOperator]) -> Result<DensityOperator> {
        check_completeness(kraus)?;
        let mut out: Option<DensityOperator> = None;
        for k in kraus {
            let term = self.sandwich(k)?;
            out = Some(match out {
                None => term,
                Some(mut acc) => {
                    for (a, b) in acc.matrix.iter_mut().zip(term.matrix) {
                        *a += b;
                    }
                    acc
                }
            });
        }
        out.ok_or_else(|| Error::InvalidInput("empty Kraus set".into()))?
            .renormalized()
    }

    /// Renormalizes the trace, warning when it drifted past tolerance.
    pub(crate) fn renormalized(mut self) -> Result<DensityOperator> {
        let tr = self.trace().re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(Error::NotNormalized(tr));
        }
        if (tr - 1.0).abs() > NORM_TOLERANCE {
            log::warn!("renormalizing density operator with trace {tr}");
        }
        if tr != 1.0 {
            let s = 1.0 / tr;
            for z in &mut self.matrix {
                *z *= s;
            }
        }
        Ok(self)
    }

    /// Normalizes an unnormalized conditional state produced by a projection.
    pub(crate) fn normalized_by(mut self, probability: f64) -> DensityOperator {
        let s = 1.0 / probability;
        for z in &mut self.matrix {
            *z *= s;
        }
        self
    }

    /// Reduced state on `keep`.
    ///
    /// Kept subsystems retain their relative order and are renumbered from zero
    /// within their kind.
    pub fn partial_trace(&self, keep: &[Subsystem]) -> Result<DensityOperator> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let kept = self.layout.normalize_targets(keep)?;
        if kept.len() == self.layout.subsystem_count() {
            return Ok(self.clone());
        }
        let new_layout = self.layout.restricted(&kept);
        let new_dim = new_layout.dimension();
        let strides = self.layout.strides();
        let kept_positions: Vec<usize> = kept
            .iter()
            .map(|&s| self.layout.position(s))
            .collect::<Result<_>>()?;
        let traced_positions: Vec<usize> = (0..self.layout.subsystem_count())
            .filter(|p| !kept_positions.contains(p))
            .collect();
        let traced_dim: usize = traced_positions
            .iter()
            .map(|&p| self.layout.radix(p))
            .product();

        // groups[t] lists (old index, kept index) sharing traced configuration t
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); traced_dim];
        for old in 0..self.dim {
            let mut k = 0;
            for &p in &kept_positions {
                k = k * self.layout.radix(p) + self.layout.digit(old, p, &strides);
            }
            let mut t = 0;
            for &p in &traced_positions {
                t = t * self.layout.radix(p) + self.layout.digit(old, p, &strides);
            }
            groups[t].push((old, k));
        }

        let mut matrix = vec![C64::new(0.0, 0.0); new_dim * new_dim];
        for group in &groups {
            for &(i, ki) in group {
                for &(j, kj) in group {
                    matrix[ki * new_dim + kj] += self.matrix[i * self.dim + j];
                }
            }
        }
        Ok(DensityOperator {
            layout: new_layout,
            dim: new_dim,
            matrix,
        })
    }

    /// Probability weight of the composite basis states selected by `pred`.
    pub(crate) fn diagonal_weight(&self, mut pred: impl FnMut(usize) -> bool) -> f64 {
        (0..self.dim)
            .filter(|&i| pred(i))
            .map(|i| self.matrix[i * self.dim + i].re)
            .sum()
    }

    /// Mean photon number in `mode`.
    pub fn mean_photon_number(&self, mode: usize) -> Result<f64> {
        let position = self.layout.position(Subsystem::Mode(mode))?;
        let strides = self.layout.strides();
        Ok((0..self.dim)
            .map(|i| {
                self.layout.digit(i, position, &strides) as f64 * self.matrix[i * self.dim + i].re
            })
            .sum())
    }

    /// Elementwise (Schur) product with a real multiplier `factor(row, col)`.
    pub(crate) fn schur_scaled(&self, factor: impl Fn(usize, usize) -> f64) -> DensityOperator {
        let d = self.dim;
        let mut matrix = self.matrix.clone();
        for i in 0..d {
            for j in 0..d {
                let f = factor(i, j);
                if f != 1.0 {
                    matrix[i * d + j] *= f;
                }
            }
        }
        DensityOperator {
            layout: self.layout.clone(),
            dim: d,
            matrix,
        }
    }

    /// Fixes subsystems to given digits, removing them; returns the event
    /// probability and the normalized conditional state when nonzero.
    pub fn condition(&self, fixed: &[(Subsystem, usize)]) -> Result<(f64, Option<DensityOperator>)> {
        let targets: Vec<Subsystem> = fixed.iter().map(|&(s, _)| s).collect();
        let sorted = self.layout.normalize_targets(&targets)?;
        let strides = self.layout.strides();
        let fixed_positions: Vec<(usize, usize)> = fixed
            .iter()
            .map(|&(s, d)| Ok((self.layout.position(s)?, d)))
            .collect::<Result<_>>()?;
        let selected: Vec<usize> = (0..self.dim)
            .filter(|&i| {
                fixed_positions
                    .iter()
                    .all(|&(p, d)| self.layout.digit(i, p, &strides) == d)
            })
            .collect();
        let probability: f64 = selected
            .iter()
            .map(|&i| self.matrix[i * self.dim + i].re)
            .sum();
        if probability <= 0.0 {
            return Ok((0.0, None));
        }
        let kept: Vec<Subsystem> = self
            .layout
            .subsystems()
            .filter(|s| !sorted.contains(s))
            .collect();
        let layout = self.layout.restricted(&kept);
        let n = selected.len();
        let mut matrix = Vec::with_capacity(n * n);
        for &i in &selected {
            for &j in &selected {
                matrix.push(self.matrix[i * self.dim + j] / probability);
            }
        }
        Ok((probability, Some(DensityOperator::unchecked(layout, matrix))))
    }
}

/// Errors unless `sum_k K_k^dagger K_k` equals the identity within 1e-12.
pub(crate) fn check_completeness(kraus: &[LocalOperator]) -> Result<()> {
    let Some(first) = kraus.first() else {
        return Err(Error::InvalidInput("empty Kraus set".into()));
    };
    let d = first.dim();
    let mut sum = vec![C64::new(0.0, 0.0); d * d];
    for k in kraus {
        let kk = k.adjoint().compose(k)?;
        for (s, v) in sum.iter_mut().zip(kk.matrix()) {
            *s += v;
        }
    }
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in 0..d {
            let expected = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((sum[r * d + c] - expected).norm());
        }
    }
    if worst > UNITARY_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "Kraus operators are not trace preserving (deviation {worst:e})"
        )));
    }
    Ok(())
}

fn sandwich_matrix(rho: &[C64], dim: usize, indexer: &TargetIndexer, op: &LocalOperator) -> Vec<C64> {
    let d = op.dim();
    let m = op.matrix();
    let zero = C64::new(0.0, 0.0);
    // left: A = K rho, column by column
    let mut left = vec![zero; dim * dim];
    let mut local = vec![zero; d];
    for col in 0..dim {
        for &base in &indexer.bases {
            let mut any = false;
            for (k, &off) in indexer.offsets.iter().enumerate() {
                local[k] = rho[(base + off) * dim + col];
                any |= local[k] != zero;
            }
            if !any {
                continue;
            }
            for (r, &off) in indexer.offsets.iter().enumerate() {
                left[(base + off) * dim + col] =
                    m[r * d..(r + 1) * d].iter().zip(&local).map(|(a, v)| a * v).sum();
            }
        }
    }
    // right: A K^dagger, row by row: out[i][base+off_r] = sum_l A[i][base+off_l] conj(K[r][l])
    let mut out = vec![zero; dim * dim];
    for row in 0..dim {
        let src = &left[row * dim..(row + 1) * dim];
        let dst = &mut out[row * dim..(row + 1) * dim];
        for &base in &indexer.bases {
            let mut any = false;
            for (k, &off) in indexer.offsets.iter().enumerate() {
                local[k] = src[base + off];
                any |= local[k] != zero;
            }
            if !any {
                continue;
            }
            for (r, &off) in indexer.offsets.iter().enumerate() {
                dst[base + off] = m[r * d..(r + 1) * d]
                    .iter()
                    .zip(&local)
                    .map(|(a, v)| a.conj() * v)
                    .sum();
            }
        }
    }
    out
}
