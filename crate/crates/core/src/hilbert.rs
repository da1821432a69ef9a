//! Free modules over the algebra: vectors, operators, the algebra-valued
//! inner product, finite-rank building blocks, and the extended trace.
//!
//! A vector in the rank-n free module stores, per factor, an (n·k)×k panel:
//! the n algebra components stacked vertically. Operators store (n·k)×(n·k)
//! blocks.

use num_complex::Complex64;

use crate::algebra::{AlgebraElement, AlgebraShape};
use crate::eig::{self, CMatrix};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct ModuleVector {
    shape: AlgebraShape,
    n: usize,
    blocks: Vec<CMatrix>,
}

#[derive(Debug, Clone)]
pub struct ModuleOperator {
    shape: AlgebraShape,
    n: usize,
    blocks: Vec<CMatrix>,
}

fn check_finite(blocks: &[CMatrix]) -> Result<()> {
    for b in blocks {
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::NonFiniteEntry);
        }
    }
    Ok(())
}

impl ModuleVector {
    pub fn from_blocks(shape: AlgebraShape, n: usize, blocks: Vec<CMatrix>) -> Result<Self> {
        if n == 0 || blocks.len() != shape.factors() {
            return Err(CoreError::ShapeMismatch);
        }
        for (b, &k) in blocks.iter().zip(shape.block_dims()) {
            if b.nrows() != n * k || b.ncols() != k {
                return Err(CoreError::ShapeMismatch);
            }
        }
        check_finite(&blocks)?;
        Ok(ModuleVector { shape, n, blocks })
    }

    pub fn zero(shape: &AlgebraShape, n: usize) -> Self {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::zeros(n * k, k))
            .collect();
        ModuleVector {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    /// Standard basis element `e_i`: per block, identity in the i-th stacked slot.
    pub fn basis(shape: &AlgebraShape, n: usize, i: usize) -> Self {
        assert!(i < n);
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| {
                let mut b = CMatrix::zeros(n * k, k);
                for r in 0..k {
                    b[(i * k + r, r)] = Complex64::new(1.0, 0.0);
                }
                b
            })
            .collect();
        ModuleVector {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &CMatrix {
        &self.blocks[j]
    }

    fn compatible(&self, other: &ModuleVector) -> Result<()> {
        if self.shape != other.shape || self.n != other.n {
            return Err(CoreError::ShapeMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &ModuleVector) -> Result<ModuleVector> {
        self.compatible(other)?;
        Ok(ModuleVector {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &ModuleVector) -> Result<ModuleVector> {
        self.compatible(other)?;
        Ok(ModuleVector {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect(),
        })
    }

    /// Right action `x · a` by an algebra element.
    pub fn act(&self, a: &AlgebraElement) -> Result<ModuleVector> {
        if self.shape != *a.shape() {
            return Err(CoreError::ShapeMismatch);
        }
        Ok(ModuleVector {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self
                .blocks
                .iter()
                .zip(a.blocks())
                .map(|(x, b)| x * b)
                .collect(),
        })
    }

    /// Module norm `||x|| = ||⟨x,x⟩||^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(eig::spectral_norm)
            .fold(0.0, f64::max)
    }
}

/// Algebra-valued inner product `⟨x,y⟩ = Σ_k x_k* y_k`, linear in `y`.
pub fn inner_product(x: &ModuleVector, y: &ModuleVector) -> Result<AlgebraElement> {
    x.compatible(y)?;
    let blocks = x
        .blocks
        .iter()
        .zip(&y.blocks)
        .map(|(a, b)| a.adjoint() * b)
        .collect();
    AlgebraElement::from_blocks(x.shape.clone(), blocks)
}

/// Finite-rank operator `θ_{x,y}(z) = x ⟨y,z⟩`.
pub fn theta_operator(x: &ModuleVector, y: &ModuleVector) -> Result<ModuleOperator> {
    x.compatible(y)?;
    let blocks = x
        .blocks
        .iter()
        .zip(&y.blocks)
        .map(|(a, b)| a * b.adjoint())
        .collect();
    ModuleOperator::from_blocks(x.shape.clone(), x.n, blocks)
}

impl ModuleOperator {
    pub fn from_blocks(shape: AlgebraShape, n: usize, blocks: Vec<CMatrix>) -> Result<Self> {
        if n == 0 || blocks.len() != shape.factors() {
            return Err(CoreError::ShapeMismatch);
        }
        for (b, &k) in blocks.iter().zip(shape.block_dims()) {
            if b.nrows() != n * k || b.ncols() != n * k {
                return Err(CoreError::ShapeMismatch);
            }
        }
        check_finite(&blocks)?;
        Ok(ModuleOperator { shape, n, blocks })
    }

    pub fn zero(shape: &AlgebraShape, n: usize) -> Self {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::zeros(n * k, n * k))
            .collect();
        ModuleOperator {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    pub fn identity(shape: &AlgebraShape, n: usize) -> Self {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::identity(n * k, n * k))
            .collect();
        ModuleOperator {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &CMatrix {
        &self.blocks[j]
    }

    pub fn compatible(&self, other: &ModuleOperator) -> Result<()> {
        if self.shape != other.shape || self.n != other.n {
            return Err(CoreError::ShapeMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        self.compatible(other)?;
        Ok(ModuleOperator {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        self.compatible(other)?;
        Ok(ModuleOperator {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn mul(&self, other: &ModuleOperator) -> Result<ModuleOperator> {
        self.compatible(other)?;
        Ok(ModuleOperator {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn adjoint(&self) -> ModuleOperator {
        ModuleOperator {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> ModuleOperator {
        ModuleOperator {
            shape: self.shape.clone(),
            n: self.n,
            blocks: self.blocks.iter().map(|b| b * factor).collect(),
        }
    }

    pub fn operator_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(eig::spectral_norm)
            .fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(eig::hermitian_defect)
            .fold(0.0, f64::max)
    }

    /// Extended trace `τ̄ = tr ⊗ τ`; on rank n, `τ̄(1) = n`.
    pub fn tau_bar(&self) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(j, b)| self.shape.atom_weight(j) * b.trace().re)
            .sum()
    }
}

/// Apply an operator to a vector, blockwise.
pub fn apply_operator(k: &ModuleOperator, x: &ModuleVector) -> Result<ModuleVector> {
    if k.shape != *x.shape() || k.n != x.rank() {
        return Err(CoreError::ShapeMismatch);
    }
    let blocks = k
        .blocks
        .iter()
        .zip(x.blocks())
        .map(|(a, b)| a * b)
        .collect();
    ModuleVector::from_blocks(k.shape.clone(), k.n, blocks)
}

/// Positivity verdict for a module operator.
#[derive(Debug, Clone)]
pub struct PositivityReport {
    pub strictly_positive: bool,
    pub min_eigenvalue: f64,
    pub hermitian_defect: f64,
}

/// Hermitian within `tol` and minimum eigenvalue over all blocks above `tol`.
/// Kernel-freeness at numeric scale means a strictly positive bottom of the
/// spectrum.
pub fn is_strictly_positive(k: &ModuleOperator, tol: f64) -> PositivityReport {
    let defect = k.hermitian_defect();
    if defect > tol.max(1e-10 * k.operator_norm().max(1.0)) {
        return PositivityReport {
            strictly_positive: false,
            min_eigenvalue: f64::NAN,
            hermitian_defect: defect,
        };
    }
    let mut min_eig = f64::INFINITY;
    for b in &k.blocks {
        let sym = (b + b.adjoint()).scale(0.5);
        match eig::hermitian_eigenvalues(&sym) {
            Ok(vals) => {
                if let Some(&last) = vals.last() {
                    min_eig = min_eig.min(last);
                }
            }
            Err(_) => {
                return PositivityReport {
                    strictly_positive: false,
                    min_eigenvalue: f64::NAN,
                    hermitian_defect: defect,
                }
            }
        }
    }
    PositivityReport {
        strictly_positive: min_eig > tol,
        min_eigenvalue: min_eig,
        hermitian_defect: defect,
    }
}

const GRAM_INVERTIBILITY_THRESHOLD: f64 = 1e-8;

/// Symmetric (Löwdin) orthonormalization of a vector family: stack the
/// family into a panel per block and right-multiply by the inverse square
/// root of its Gram matrix. Span over the algebra is preserved.
pub fn orthonormalize(xs: &[ModuleVector]) -> Result<Vec<ModuleVector>> {
    if xs.is_empty() {
        return Ok(vec![]);
    }
    let shape = xs[0].shape().clone();
    let n = xs[0].rank();
    for x in xs {
        if *x.shape() != shape || x.rank() != n {
            return Err(CoreError::ShapeMismatch);
        }
    }
    let s = xs.len();
    let mut out: Vec<ModuleVector> = vec![ModuleVector::zero(&shape, n); s];
    for (j, &k) in shape.block_dims().iter().enumerate() {
        // panel of the whole family: (n·k) × (s·k)
        let mut panel = CMatrix::zeros(n * k, s * k);
        for (idx, x) in xs.iter().enumerate() {
            panel.view_mut((0, idx * k), (n * k, k)).copy_from(x.block(j));
        }
        let gram = panel.adjoint() * &panel;
        let (vals, vecs) = eig::hermitian_eigensystem(&gram)?;
        let min_eig = vals.last().copied().unwrap_or(0.0);
        if min_eig <= GRAM_INVERTIBILITY_THRESHOLD {
            return Err(CoreError::RankDeficient { min_eig });
        }
        let inv_sqrt: Vec<f64> = vals.iter().map(|&v| 1.0 / v.sqrt()).collect();
        let ortho = &panel * eig::reconstruct(&inv_sqrt, &vecs);
        for (idx, o) in out.iter_mut().enumerate() {
            o.blocks[j] = ortho.view((0, idx * k), (n * k, k)).into_owned();
        }
    }
    Ok(out)
}

/// Orthonormality defect of a family: max over pairs of `||⟨x_i,x_j⟩ - δ_ij||`.
pub fn orthonormality_defect(xs: &[ModuleVector]) -> Result<f64> {
    let mut defect: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in xs.iter().enumerate() {
            let g = inner_product(x, y)?;
            let target = if i == j {
                AlgebraElement::identity(x.shape())
            } else {
                AlgebraElement::zero(x.shape())
            };
            defect = defect.max(g.sub(&target)?.operator_norm());
        }
    }
    Ok(defect)
}

/// Norm of the compression of `K` to the complement of the span of `xs`:
/// `||(1-P) K (1-P)||` with `P = Σ θ_{x_i,x_i}`.
pub fn tail_norm(k: &ModuleOperator, xs: &[ModuleVector]) -> Result<f64> {
    let defect = orthonormality_defect(xs)?;
    if defect > 1e-8 {
        return Err(CoreError::NotOrthonormal { defect });
    }
    let mut p = ModuleOperator::zero(k.shape(), k.rank());
    for x in xs {
        p = p.add(&theta_operator(x, x)?)?;
    }
    let complement = ModuleOperator::identity(k.shape(), k.rank()).sub(&p)?;
    Ok(complement.mul(k)?.mul(&complement)?.operator_norm())
}

/// Random module-level generators.
pub mod random {
    use super::*;
    use crate::algebra::random::polar_unitary;
    use crate::rng::SplitMix64;

    pub fn gaussian_operator(
        shape: &AlgebraShape,
        n: usize,
        rng: &mut SplitMix64,
    ) -> ModuleOperator {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::from_fn(n * k, n * k, |_, _| rng.next_complex_gaussian()))
            .collect();
        ModuleOperator {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    pub fn hermitian_operator(
        shape: &AlgebraShape,
        n: usize,
        rng: &mut SplitMix64,
    ) -> ModuleOperator {
        let g = gaussian_operator(shape, n, rng);
        g.add(&g.adjoint()).expect("same shape").scale(Complex64::new(0.5, 0.0))
    }

    /// `G*G + shift·1`: strictly positive whenever `shift > 0`.
    pub fn positive_operator(
        shape: &AlgebraShape,
        n: usize,
        shift: f64,
        rng: &mut SplitMix64,
    ) -> ModuleOperator {
        let g = gaussian_operator(shape, n, rng);
        g.adjoint()
            .mul(&g)
            .expect("same shape")
            .add(&ModuleOperator::identity(shape, n).scale(Complex64::new(shift, 0.0)))
            .expect("same shape")
    }

    pub fn unitary_operator(
        shape: &AlgebraShape,
        n: usize,
        rng: &mut SplitMix64,
    ) -> ModuleOperator {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| {
                let g = CMatrix::from_fn(n * k, n * k, |_, _| rng.next_complex_gaussian());
                polar_unitary(&g)
            })
            .collect();
        ModuleOperator {
            shape: shape.clone(),
            n,
            blocks,
        }
    }

    pub fn gaussian_vector(
        shape: &AlgebraShape,
        n: usize,
        rng: &mut SplitMix64,
    ) -> ModuleVector {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::from_fn(n * k, k, |_, _| rng.next_complex_gaussian()))
            .collect();
        ModuleVector {
            shape: shape.clone(),
            n,
            blocks,
        }
    }
}
