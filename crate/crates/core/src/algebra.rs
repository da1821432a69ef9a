//! Finite direct sums of complex matrix factors: arithmetic, traces,
//! spectral decomposition, and projection comparison.
//!
//! A shape `⊕_j M_{k_j}` with trace weights `w_j` (summing to 1) carries a
//! faithful tracial state `τ(a) = Σ_j w_j tr_j(a_j)/k_j` and the
//! center-valued trace whose j-th component is the normalized block trace.

use num_complex::Complex64;

use crate::eig::{self, CMatrix};
use crate::error::{CoreError, Result};

/// `⊕_j M_{k_j}` with trace weights. Weights are renormalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraShape {
    block_dims: Vec<usize>,
    trace_weights: Vec<f64>,
}

impl AlgebraShape {
    pub fn new(block_dims: Vec<usize>, trace_weights: Option<Vec<f64>>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.iter().any(|&k| k == 0) {
            return Err(CoreError::NonPositiveDim);
        }
        let m = block_dims.len();
        let weights = match trace_weights {
            None => vec![1.0 / m as f64; m],
            Some(w) => {
                if w.len() != m {
                    return Err(CoreError::WeightMismatch {
                        expected: m,
                        got: w.len(),
                    });
                }
                if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(CoreError::NonFiniteEntry);
                }
                let sum: f64 = w.iter().sum();
                w.into_iter().map(|x| x / sum).collect()
            }
        };
        Ok(AlgebraShape {
            block_dims,
            trace_weights: weights,
        })
    }

    pub fn factors(&self) -> usize {
        self.block_dims.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn trace_weights(&self) -> &[f64] {
        &self.trace_weights
    }

    /// Weight carried by a single eigenvector of block `j` under the trace.
    pub fn atom_weight(&self, j: usize) -> f64 {
        self.trace_weights[j] / self.block_dims[j] as f64
    }

    /// Same factors with every block dimension doubled; the home of 2x2
    /// operator matrices over the algebra.
    pub fn doubled(&self) -> AlgebraShape {
        AlgebraShape {
            block_dims: self.block_dims.iter().map(|&k| 2 * k).collect(),
            trace_weights: self.trace_weights.clone(),
        }
    }
}

/// Block matrix over an [`AlgebraShape`].
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    shape: AlgebraShape,
    blocks: Vec<CMatrix>,
}

/// A function on the finite center spectrum: one complex value per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterElement {
    pub values: Vec<Complex64>,
}

fn check_finite(blocks: &[CMatrix]) -> Result<()> {
    for b in blocks {
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::NonFiniteEntry);
        }
    }
    Ok(())
}

impl AlgebraElement {
    pub fn from_blocks(shape: AlgebraShape, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != shape.factors() {
            return Err(CoreError::ShapeMismatch);
        }
        for (b, &k) in blocks.iter().zip(shape.block_dims()) {
            if b.nrows() != k || b.ncols() != k {
                return Err(CoreError::ShapeMismatch);
            }
        }
        check_finite(&blocks)?;
        Ok(AlgebraElement { shape, blocks })
    }

    pub fn zero(shape: &AlgebraShape) -> Self {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::zeros(k, k))
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::identity(k, k))
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    /// Real diagonal element; `diags[j]` fills the diagonal of block `j`.
    pub fn from_real_diagonals(shape: &AlgebraShape, diags: &[Vec<f64>]) -> Result<Self> {
        if diags.len() != shape.factors() {
            return Err(CoreError::ShapeMismatch);
        }
        let mut blocks = Vec::with_capacity(diags.len());
        for (d, &k) in diags.iter().zip(shape.block_dims()) {
            if d.len() != k {
                return Err(CoreError::ShapeMismatch);
            }
            blocks.push(CMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    Complex64::new(d[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }));
        }
        AlgebraElement::from_blocks(shape.clone(), blocks)
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &CMatrix {
        &self.blocks[j]
    }

    fn check_same_shape(&self, other: &AlgebraElement) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b)
            .collect();
        Ok(AlgebraElement {
            shape: self.shape.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a - b)
            .collect();
        Ok(AlgebraElement {
            shape: self.shape.clone(),
            blocks,
        })
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a * b)
            .collect();
        Ok(AlgebraElement {
            shape: self.shape.clone(),
            blocks,
        })
    }

    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> AlgebraElement {
        AlgebraElement {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().map(|b| b * factor).collect(),
        }
    }

    /// Operator norm: max over blocks of the largest singular value.
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

    /// Center-valued trace: normalized block traces, `T(1) = (1, …, 1)`.
    pub fn center_trace(&self) -> CenterElement {
        let values = self
            .blocks
            .iter()
            .zip(self.shape.block_dims())
            .map(|(b, &k)| b.trace() / Complex64::new(k as f64, 0.0))
            .collect();
        CenterElement { values }
    }

    /// Tracial state `τ = Σ_j w_j · (normalized block trace)`, `τ(1) = 1`.
    pub fn scalar_trace(&self) -> Complex64 {
        self.center_trace()
            .values
            .iter()
            .zip(self.shape.trace_weights())
            .map(|(v, &w)| v * Complex64::new(w, 0.0))
            .sum()
    }

    /// Blockwise eigendecomposition, eigenvalues descending per block.
    pub fn eigensystem(&self) -> Result<Vec<(Vec<f64>, CMatrix)>> {
        self.blocks.iter().map(eig::hermitian_eigensystem).collect()
    }
}

/// What [`validate_element`] checks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Projection,
    Positive,
    Unitary,
}

/// Boolean verdict plus the size of the violated quantity.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub kind: ElementKind,
    pub ok: bool,
    pub defect: f64,
    pub detail: String,
}

/// Check that `a` is a projection, positive, or unitary within `tol`.
pub fn validate_element(a: &AlgebraElement, kind: ElementKind, tol: f64) -> ValidationReport {
    let (defect, detail) = match kind {
        ElementKind::Projection => {
            let herm = a.hermitian_defect();
            let idem = a
                .mul(a)
                .and_then(|sq| sq.sub(a))
                .map(|d| d.operator_norm())
                .unwrap_or(f64::INFINITY);
            (
                herm.max(idem),
                format!("||a*-a|| = {herm:.3e}, ||a^2-a|| = {idem:.3e}"),
            )
        }
        ElementKind::Positive => {
            let herm = a.hermitian_defect();
            if herm > tol {
                (herm, format!("not Hermitian, defect {herm:.3e}"))
            } else {
                let min_eig = a
                    .eigensystem()
                    .map(|sys| {
                        sys.iter()
                            .flat_map(|(vals, _)| vals.iter().copied())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .unwrap_or(f64::NEG_INFINITY);
                (
                    (-min_eig).max(0.0),
                    format!("minimum eigenvalue {min_eig:.3e}"),
                )
            }
        }
        ElementKind::Unitary => {
            let defect = a
                .adjoint()
                .mul(a)
                .and_then(|p| p.sub(&AlgebraElement::identity(a.shape())))
                .map(|d| d.operator_norm())
                .unwrap_or(f64::INFINITY);
            (defect, format!("||a*a - 1|| = {defect:.3e}"))
        }
    };
    ValidationReport {
        kind,
        ok: defect <= tol,
        defect,
        detail,
    }
}

/// A finite-spectrum form `Σ_i α_i p_i` with mutually orthogonal projections
/// summing to 1 and strictly increasing values.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    pub atoms: Vec<(f64, AlgebraElement)>,
}

impl SpectralForm {
    pub fn reconstruct(&self, shape: &AlgebraShape) -> AlgebraElement {
        let mut acc = AlgebraElement::zero(shape);
        for (value, proj) in &self.atoms {
            acc = acc
                .add(&proj.scale(Complex64::new(*value, 0.0)))
                .expect("atoms share the shape");
        }
        acc
    }
}

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;

/// Spectral decomposition of a Hermitian element with eigenvalue clustering:
/// gaps below `cluster_tol` are merged into one atom.
pub fn spectral_decomposition(a: &AlgebraElement, cluster_tol: f64) -> Result<SpectralForm> {
    let defect = a.hermitian_defect();
    if defect > 1e-10 * a.operator_norm().max(1.0) {
        return Err(CoreError::NotHermitian { defect });
    }
    let systems = a.eigensystem()?;
    // (value, block, column)
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (j, (vals, _)) in systems.iter().enumerate() {
        for (c, &v) in vals.iter().enumerate() {
            entries.push((v, j, c));
        }
    }
    entries.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let shape = a.shape();
    let mut atoms: Vec<(f64, AlgebraElement)> = Vec::new();
    let mut start = 0;
    while start < entries.len() {
        let mut end = start + 1;
        while end < entries.len() && entries[end].0 - entries[end - 1].0 < cluster_tol {
            end += 1;
        }
        let members = &entries[start..end];
        let value = members.iter().map(|e| e.0).sum::<f64>() / members.len() as f64;
        let mut blocks: Vec<CMatrix> = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::zeros(k, k))
            .collect();
        for &(_, j, c) in members {
            let v = systems[j].1.column(c);
            blocks[j] += &v * v.adjoint();
        }
        atoms.push((value, AlgebraElement::from_blocks(shape.clone(), blocks)?));
        start = end;
    }
    Ok(SpectralForm { atoms })
}

/// Rank of a projection block: eigenvalues above 1/2.
fn projection_rank(vals: &[f64]) -> usize {
    vals.iter().filter(|&&v| v > 0.5).count()
}

/// Equivalent subprojections realizing the componentwise minimum of the
/// center-valued traces: `r_p ≤ p`, `r_q ≤ q`, `v*v = r_p`, `v v* = r_q`,
/// with per-block rank `min(rank p_j, rank q_j)`.
pub fn equivalent_subprojections(
    p: &AlgebraElement,
    q: &AlgebraElement,
) -> Result<(AlgebraElement, AlgebraElement, AlgebraElement)> {
    if p.shape() != q.shape() {
        return Err(CoreError::ShapeMismatch);
    }
    for e in [p, q] {
        let report = validate_element(e, ElementKind::Projection, 1e-10);
        if !report.ok {
            return Err(CoreError::NotProjection {
                defect: report.defect,
            });
        }
    }
    let shape = p.shape().clone();
    let sys_p = p.eigensystem()?;
    let sys_q = q.eigensystem()?;
    let mut rp_blocks = Vec::new();
    let mut rq_blocks = Vec::new();
    let mut v_blocks = Vec::new();
    for (j, &k) in shape.block_dims().iter().enumerate() {
        let (pv, pvecs) = &sys_p[j];
        let (qv, qvecs) = &sys_q[j];
        let r = projection_rank(pv).min(projection_rank(qv));
        // first r eigenvectors: descending eigenvalue, stable index
        let bp = pvecs.columns(0, r).into_owned();
        let bq = qvecs.columns(0, r).into_owned();
        rp_blocks.push(&bp * bp.adjoint());
        rq_blocks.push(&bq * bq.adjoint());
        let _ = k;
        v_blocks.push(&bq * bp.adjoint());
    }
    Ok((
        AlgebraElement::from_blocks(shape.clone(), rp_blocks)?,
        AlgebraElement::from_blocks(shape.clone(), rq_blocks)?,
        AlgebraElement::from_blocks(shape, v_blocks)?,
    ))
}

/// Random helpers shared by the generators, the verification suite and the
/// CLI. Everything is a pure function of the generator state.
pub mod random {
    use super::*;
    use crate::rng::SplitMix64;

    pub fn gaussian_element(shape: &AlgebraShape, rng: &mut SplitMix64) -> AlgebraElement {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| CMatrix::from_fn(k, k, |_, _| rng.next_complex_gaussian()))
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    pub fn hermitian_element(shape: &AlgebraShape, rng: &mut SplitMix64) -> AlgebraElement {
        let g = gaussian_element(shape, rng);
        g.add(&g.adjoint())
            .expect("same shape")
            .scale(Complex64::new(0.5, 0.0))
    }

    /// Unitary block element via the polar factor of a Gaussian matrix.
    pub fn unitary_element(shape: &AlgebraShape, rng: &mut SplitMix64) -> AlgebraElement {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| {
                let g = CMatrix::from_fn(k, k, |_, _| rng.next_complex_gaussian());
                polar_unitary(&g)
            })
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    /// Projection with a random rank per block (possibly 0 or full).
    pub fn projection_element(shape: &AlgebraShape, rng: &mut SplitMix64) -> AlgebraElement {
        let blocks = shape
            .block_dims()
            .iter()
            .map(|&k| {
                let u = {
                    let g = CMatrix::from_fn(k, k, |_, _| rng.next_complex_gaussian());
                    polar_unitary(&g)
                };
                let rank = (rng.next_u64() as usize) % (k + 1);
                let b = u.columns(0, rank).into_owned();
                &b * b.adjoint()
            })
            .collect();
        AlgebraElement {
            shape: shape.clone(),
            blocks,
        }
    }

    /// Polar unitary factor `G (G*G)^{-1/2}`.
    pub fn polar_unitary(g: &CMatrix) -> CMatrix {
        let gram = g.adjoint() * g;
        let (vals, vecs) = eig::hermitian_eigensystem(&gram).expect("gram is Hermitian");
        let inv_sqrt: Vec<f64> = vals.iter().map(|&v| 1.0 / v.max(1e-300).sqrt()).collect();
        g * eig::reconstruct(&inv_sqrt, &vecs)
    }
}
