//! Eigenvalue exchange ordering, conjugating-unitary chains with dyadic
//! tolerances, and the rational-flux magnetic fiber model (Harper matrix
//! family, band functions, continuous-selection report).
//!
//! The exchange machinery works on an exact representation: each operator
//! eigenvalue is eigendecomposed once per block, and every subsequent
//! exchange permutes the stored floating-point values between slots without
//! recomputing them. Multisets are preserved bit for bit.

use num_complex::Complex64;

use crate::algebra::{AlgebraElement, AlgebraShape};
use crate::diag::{self, Diagonalization};
use crate::eig::{self, CMatrix};
use crate::error::{CoreError, Result};
use crate::hilbert::{self, ModuleOperator};

pub const DEFAULT_GAP_TOL: f64 = 1e-6;
pub const MAX_ITERATION_STEPS: usize = 40;

/// One operator eigenvalue held as per-block eigenbases plus value lists
/// (descending). Exchanges move values between slots; bases never change.
#[derive(Debug, Clone)]
struct SlotRep {
    bases: Vec<CMatrix>,
    values: Vec<Vec<f64>>,
}

impl SlotRep {
    fn from_element(lam: &AlgebraElement) -> Result<SlotRep> {
        let sys = lam.eigensystem()?;
        let (values, bases) = sys.into_iter().map(|(v, b)| (v, b)).unzip();
        Ok(SlotRep { bases, values })
    }

    fn to_element(&self, shape: &AlgebraShape) -> Result<AlgebraElement> {
        let blocks = self
            .bases
            .iter()
            .zip(&self.values)
            .map(|(b, v)| eig::reconstruct(v, b))
            .collect();
        AlgebraElement::from_blocks(shape.clone(), blocks)
    }
}

/// Stable descending permutation of the concatenated value pair:
/// `sorted[m] = concat[perm[m]]`. Ties keep the first slot first.
fn exchange_permutation(upper: &[f64], lower: &[f64]) -> Vec<usize> {
    let concat: Vec<f64> = upper.iter().chain(lower).copied().collect();
    let mut perm: Vec<usize> = (0..concat.len()).collect();
    perm.sort_by(|&a, &b| concat[b].partial_cmp(&concat[a]).unwrap());
    perm
}

fn is_identity_perm(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}

/// `blockdiag(V_a, V_b) · Π · blockdiag(V_a, V_b)*` where Π realizes the
/// exchange permutation. Conjugation by the result carries
/// `diag(λ_a, λ_b)` to the redistributed pair.
fn pair_witness_block(va: &CMatrix, vb: &CMatrix, perm: &[usize]) -> CMatrix {
    let k = va.ncols();
    let two_k = 2 * k;
    let mut v = CMatrix::zeros(two_k, two_k);
    v.view_mut((0, 0), (k, k)).copy_from(va);
    v.view_mut((k, k), (k, k)).copy_from(vb);
    let mut pi = CMatrix::zeros(two_k, two_k);
    for (m, &src) in perm.iter().enumerate() {
        pi[(src, m)] = Complex64::new(1.0, 0.0);
    }
    &v * pi * v.adjoint()
}

/// An adjacent pair after exchange: redistributed eigenvalues, the exact
/// per-block spectra (descending), and the unitary witness on the doubled
/// shape conjugating `diag(a, b)` to `diag(upper, lower)`.
#[derive(Debug, Clone)]
pub struct ExchangedPair {
    pub upper: AlgebraElement,
    pub lower: AlgebraElement,
    pub upper_spectra: Vec<Vec<f64>>,
    pub lower_spectra: Vec<Vec<f64>>,
    pub witness: AlgebraElement,
}

/// Embed two algebra elements as `diag(a, b)` on the doubled shape.
pub fn embed_pair(a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
    if a.shape() != b.shape() {
        return Err(CoreError::ShapeMismatch);
    }
    let doubled = a.shape().doubled();
    let blocks = a
        .blocks()
        .iter()
        .zip(b.blocks())
        .map(|(ba, bb)| {
            let k = ba.nrows();
            let mut m = CMatrix::zeros(2 * k, 2 * k);
            m.view_mut((0, 0), (k, k)).copy_from(ba);
            m.view_mut((k, k), (k, k)).copy_from(bb);
            m
        })
        .collect();
    AlgebraElement::from_blocks(doubled, blocks)
}

/// Redistribute the union spectrum of an adjacent pair: per block the
/// larger half (with trace multiplicity) goes to the upper slot, the
/// smaller half to the lower, so that `min spec(upper) ≥ max spec(lower)`
/// in every block. Already-ordered pairs come back unchanged with an exact
/// identity witness.
pub fn order_pair(a: &AlgebraElement, b: &AlgebraElement) -> Result<ExchangedPair> {
    if a.shape() != b.shape() {
        return Err(CoreError::ShapeMismatch);
    }
    let shape = a.shape().clone();
    let mut ra = SlotRep::from_element(a)?;
    let mut rb = SlotRep::from_element(b)?;

    let mut witness_blocks = Vec::with_capacity(shape.factors());
    let mut any_moved = false;
    for (j, &k) in shape.block_dims().iter().enumerate() {
        let perm = exchange_permutation(&ra.values[j], &rb.values[j]);
        if is_identity_perm(&perm) {
            witness_blocks.push(CMatrix::identity(2 * k, 2 * k));
            continue;
        }
        any_moved = true;
        witness_blocks.push(pair_witness_block(&ra.bases[j], &rb.bases[j], &perm));
        let concat: Vec<f64> = ra.values[j].iter().chain(&rb.values[j]).copied().collect();
        for m in 0..k {
            ra.values[j][m] = concat[perm[m]];
            rb.values[j][m] = concat[perm[k + m]];
        }
    }
    let witness = if any_moved {
        AlgebraElement::from_blocks(shape.doubled(), witness_blocks)?
    } else {
        AlgebraElement::identity(&shape.doubled())
    };
    Ok(ExchangedPair {
        upper: ra.to_element(&shape)?,
        lower: rb.to_element(&shape)?,
        upper_spectra: ra.values.clone(),
        lower_spectra: rb.values.clone(),
        witness,
    })
}

/// A fully ordered eigenvalue list with the exact per-slot spectra and the
/// accumulated block-unitary witness on the rank-n module.
#[derive(Debug, Clone)]
pub struct OrderedSystem {
    pub elements: Vec<AlgebraElement>,
    /// `spectra[i][j]` is slot i's descending value list in block j, exact.
    pub spectra: Vec<Vec<Vec<f64>>>,
    pub witness: ModuleOperator,
    pub exchanges: usize,
}

/// Pair witness embedded at chunks `(i, i+1)` of the rank-n block unitary.
fn embed_witness(
    shape: &AlgebraShape,
    n: usize,
    i: usize,
    pair_blocks: &[CMatrix],
) -> Result<ModuleOperator> {
    let blocks = shape
        .block_dims()
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut m = CMatrix::identity(n * k, n * k);
            m.view_mut((i * k, i * k), (2 * k, 2 * k))
                .copy_from(&pair_blocks[j]);
            m
        })
        .collect();
    ModuleOperator::from_blocks(shape.clone(), n, blocks)
}

/// Bubble passes of adjacent exchanges until every consecutive margin is
/// nonnegative in every block. The result equals the global per-block sort
/// of the union multiset, cut into consecutive slots.
pub fn order_all(lams: &[AlgebraElement]) -> Result<OrderedSystem> {
    if lams.is_empty() {
        return Err(CoreError::InvalidPartition("empty eigenvalue list".into()));
    }
    let shape = lams[0].shape().clone();
    for lam in lams {
        if lam.shape() != &shape {
            return Err(CoreError::ShapeMismatch);
        }
    }
    let n = lams.len();
    let mut reps: Vec<SlotRep> = lams
        .iter()
        .map(SlotRep::from_element)
        .collect::<Result<_>>()?;

    let mut witness = ModuleOperator::identity(&shape, n);
    let mut exchanges = 0usize;
    let max_passes = n * (n.saturating_sub(1)) / 2 + 2;
    for _ in 0..max_passes {
        let mut moved = false;
        for i in 0..n.saturating_sub(1) {
            let mut pair_blocks = Vec::with_capacity(shape.factors());
            let mut slot_moved = false;
            let perms: Vec<Vec<usize>> = (0..shape.factors())
                .map(|j| exchange_permutation(&reps[i].values[j], &reps[i + 1].values[j]))
                .collect();
            for (j, &k) in shape.block_dims().iter().enumerate() {
                if is_identity_perm(&perms[j]) {
                    pair_blocks.push(CMatrix::identity(2 * k, 2 * k));
                    continue;
                }
                slot_moved = true;
                pair_blocks.push(pair_witness_block(
                    &reps[i].bases[j],
                    &reps[i + 1].bases[j],
                    &perms[j],
                ));
                let concat: Vec<f64> = reps[i].values[j]
                    .iter()
                    .chain(&reps[i + 1].values[j])
                    .copied()
                    .collect();
                for m in 0..k {
                    reps[i].values[j][m] = concat[perms[j][m]];
                    reps[i + 1].values[j][m] = concat[perms[j][k + m]];
                }
            }
            if slot_moved {
                witness = witness.mul(&embed_witness(&shape, n, i, &pair_blocks)?)?;
                exchanges += 1;
                moved = true;
            }
        }
        if !moved {
            let elements = reps
                .iter()
                .map(|r| r.to_element(&shape))
                .collect::<Result<_>>()?;
            let spectra = reps.iter().map(|r| r.values.clone()).collect();
            return Ok(OrderedSystem {
                elements,
                spectra,
                witness,
                exchanges,
            });
        }
    }
    Err(CoreError::IterationBudget)
}

const CONJUGATION_IDENTITY_TOL: f64 = 1e-12;

/// A unitary aligning the eigenbasis of `lam` with that of `target`:
/// `||u* lam u - target||` is at most the sorted-spectrum distance plus
/// solver residual. Equal inputs get the exact identity.
pub fn conjugating_unitary(lam: &AlgebraElement, target: &AlgebraElement) -> Result<AlgebraElement> {
    if lam.shape() != target.shape() {
        return Err(CoreError::ShapeMismatch);
    }
    for a in [lam, target] {
        let defect = a.hermitian_defect();
        if defect > 1e-10 * a.operator_norm().max(1.0) {
            return Err(CoreError::NotHermitian { defect });
        }
    }
    let diff = lam.sub(target)?.operator_norm();
    if diff <= CONJUGATION_IDENTITY_TOL * (1.0 + lam.operator_norm()) {
        return Ok(AlgebraElement::identity(lam.shape()));
    }
    let sys_l = lam.eigensystem()?;
    let sys_t = target.eigensystem()?;
    let blocks = sys_l
        .iter()
        .zip(&sys_t)
        .map(|((_, vl), (_, vt))| vl * vt.adjoint())
        .collect();
    AlgebraElement::from_blocks(lam.shape().clone(), blocks)
}

/// One refinement step of the dyadic iteration.
#[derive(Debug, Clone)]
pub struct IterationStep {
    pub eps: f64,
    /// `||K_n - K||`, at most eps.
    pub approximation_error: f64,
    /// `max_i ||λ̄_i^(n) - λ̄_i^(n-1)||`; zero at the first step.
    pub step_distance: f64,
    pub approximant: ModuleOperator,
    pub lambda_bars: Vec<AlgebraElement>,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub limits: Vec<AlgebraElement>,
    /// `max_i ||K x_i - x_i · limit_i||` with x_i from diagonalizing K.
    pub final_residual: f64,
}

/// Dyadic weak-diagonalization iteration: at step n snap K to the 2⁻ⁿ
/// grid, diagonalize and order the snapped operator, then conjugate each
/// eigenvalue by an accumulated unitary chain so consecutive steps stay
/// within 2⁻ⁿ⁺¹. Every approximant is built from the original K, so the
/// snapped spectra at successive resolutions bracket the same values and
/// the sequence is Cauchy at the dyadic rate.
pub fn iterate_weak_diagonalization(k: &ModuleOperator, n_steps: usize) -> Result<IterationTrace> {
    if n_steps == 0 || n_steps > MAX_ITERATION_STEPS {
        return Err(CoreError::IterationBudget);
    }
    let base = diag::diagonalize(k)?; // rejects non-positive input
    let rank = k.rank();

    let mut chains: Vec<AlgebraElement> =
        (0..rank).map(|_| AlgebraElement::identity(k.shape())).collect();
    let mut steps: Vec<IterationStep> = Vec::with_capacity(n_steps);
    let mut prev: Option<Vec<AlgebraElement>> = None;

    for n in 1..=n_steps {
        let eps = 0.5f64.powi(n as i32);
        let approximant = diag::finite_spectrum_approx(k, eps)?;
        let approximation_error = k.sub(&approximant)?.operator_norm();
        let dn = diag::diagonalize(&approximant)?;
        let ordered = order_all(&dn.eigenvalues)?;

        let mut bars = Vec::with_capacity(rank);
        match &prev {
            None => bars = ordered.elements,
            Some(prev_bars) => {
                for i in 0..rank {
                    let mu = chains[i]
                        .adjoint()
                        .mul(&ordered.elements[i])?
                        .mul(&chains[i])?;
                    let u = conjugating_unitary(&mu, &prev_bars[i])?;
                    let bar = u.adjoint().mul(&mu)?.mul(&u)?;
                    chains[i] = chains[i].mul(&u)?;
                    bars.push(bar);
                }
            }
        }
        let step_distance = match &prev {
            None => 0.0,
            Some(prev_bars) => bars
                .iter()
                .zip(prev_bars)
                .map(|(a, b)| a.sub(b).map(|d| d.operator_norm()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0f64, f64::max),
        };
        steps.push(IterationStep {
            eps,
            approximation_error,
            step_distance,
            approximant,
            lambda_bars: bars.clone(),
        });
        prev = Some(bars);
    }

    let limits = prev.unwrap();
    let mut final_residual: f64 = 0.0;
    for (x, lim) in base.eigenvectors.iter().zip(&limits) {
        let d = hilbert::apply_operator(k, x)?.sub(&x.act(lim)?)?;
        final_residual = final_residual.max(d.norm());
    }
    Ok(IterationTrace {
        steps,
        limits,
        final_residual,
    })
}

/// Reference diagonalization of the iterated operator, for spectrum
/// comparison against the limits.
pub fn direct_reference(k: &ModuleOperator) -> Result<Diagonalization> {
    diag::diagonalize(k)
}

/// Grid-sampled field of Hermitian q×q matrices over the 2-torus. Point
/// `(i1, i2)` sits at `k = (2π i1/N, 2π i2/N)`, stored row-major in i1.
#[derive(Debug, Clone)]
pub struct OperatorField {
    pub q: usize,
    pub grid_size: usize,
    pub matrices: Vec<CMatrix>,
}

impl OperatorField {
    pub fn point(&self, i1: usize, i2: usize) -> (f64, f64) {
        let h = std::f64::consts::TAU / self.grid_size as f64;
        (i1 as f64 * h, i2 as f64 * h)
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.grid_size + i2
    }

    pub fn matrix(&self, i1: usize, i2: usize) -> &CMatrix {
        &self.matrices[self.index(i1, i2)]
    }

    pub fn grid_spacing(&self) -> f64 {
        std::f64::consts::TAU / self.grid_size as f64
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Bloch-reduced Harper matrix family at rational flux p/q in Landau
/// gauge: diagonal `2cos(k₂ + 2πpm/q)`, nearest-neighbor hopping 1, and
/// corner entries `e^{±ik₁}` closing the magnetic translation cycle. At
/// q = 2 the corner shares an entry with the hopping term and the two
/// contributions add.
pub fn harper_field(p: usize, q: usize, grid_size: usize) -> Result<OperatorField> {
    if p == 0 || p >= q || gcd(p, q) != 1 {
        return Err(CoreError::BadFlux);
    }
    if grid_size < 4 {
        return Err(CoreError::GridTooSmall);
    }
    let h = std::f64::consts::TAU / grid_size as f64;
    let flux = std::f64::consts::TAU * p as f64 / q as f64;
    let mut matrices = Vec::with_capacity(grid_size * grid_size);
    for i1 in 0..grid_size {
        let k1 = i1 as f64 * h;
        let phase = Complex64::new(0.0, k1).exp();
        for i2 in 0..grid_size {
            let k2 = i2 as f64 * h;
            let mut m = CMatrix::zeros(q, q);
            for r in 0..q {
                m[(r, r)] = Complex64::new(2.0 * (k2 + flux * r as f64).cos(), 0.0);
            }
            for r in 0..q - 1 {
                m[(r, r + 1)] += Complex64::new(1.0, 0.0);
                m[(r + 1, r)] += Complex64::new(1.0, 0.0);
            }
            m[(0, q - 1)] += phase;
            m[(q - 1, 0)] += phase.conj();
            matrices.push(m);
        }
    }
    Ok(OperatorField {
        q,
        grid_size,
        matrices,
    })
}

/// Pointwise-sorted eigenvalue functions of a Hermitian field.
#[derive(Debug, Clone)]
pub struct BandSystem {
    pub q: usize,
    pub grid_size: usize,
    /// `values[point][band]`, descending per point.
    pub values: Vec<Vec<f64>>,
    /// Max band jump over torus-neighbor edges.
    pub modulus: f64,
    pub gap_tol: f64,
    /// `(i1, i2, upper_band)` where bands `upper_band` and `upper_band+1`
    /// are closer than `gap_tol`.
    pub degeneracies: Vec<(usize, usize, usize)>,
}

impl BandSystem {
    pub fn band(&self, i1: usize, i2: usize, band: usize) -> f64 {
        self.values[i1 * self.grid_size + i2][band]
    }

    /// All band values, sorted ascending, deduplicated at the given
    /// resolution. The butterfly column for one flux.
    pub fn union_spectrum(&self, resolution: f64) -> Vec<f64> {
        let mut all: Vec<f64> = self.values.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out: Vec<f64> = Vec::new();
        for v in all {
            if out.last().map(|&w| v - w > resolution).unwrap_or(true) {
                out.push(v);
            }
        }
        out
    }
}

pub fn band_functions(field: &OperatorField) -> Result<BandSystem> {
    band_functions_with(field, DEFAULT_GAP_TOL, 1)
}

/// Same with an explicit degeneracy tolerance and worker count. The point
/// sweep is split by index range and collected in index order, so the
/// result does not depend on the worker count.
pub fn band_functions_with(
    field: &OperatorField,
    gap_tol: f64,
    threads: usize,
) -> Result<BandSystem> {
    let npts = field.matrices.len();
    let values: Vec<Vec<f64>> = if threads <= 1 || npts < 2 * threads {
        field
            .matrices
            .iter()
            .map(eig::hermitian_eigenvalues)
            .collect::<Result<_>>()?
    } else {
        let chunk = npts.div_ceil(threads);
        let pieces: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = field
                .matrices
                .chunks(chunk)
                .map(|ms| {
                    scope.spawn(move || {
                        ms.iter()
                            .map(eig::hermitian_eigenvalues)
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut out = Vec::with_capacity(npts);
        for piece in pieces {
            out.extend(piece?);
        }
        out
    };

    let n = field.grid_size;
    let mut modulus: f64 = 0.0;
    for i1 in 0..n {
        for i2 in 0..n {
            let here = &values[i1 * n + i2];
            for (r1, r2) in [((i1 + 1) % n, i2), (i1, (i2 + 1) % n)] {
                let there = &values[r1 * n + r2];
                for b in 0..field.q {
                    modulus = modulus.max((here[b] - there[b]).abs());
                }
            }
        }
    }
    let mut degeneracies = Vec::new();
    for i1 in 0..n {
        for i2 in 0..n {
            let here = &values[i1 * n + i2];
            for b in 0..field.q.saturating_sub(1) {
                if here[b] - here[b + 1] < gap_tol {
                    degeneracies.push((i1, i2, b));
                }
            }
        }
    }
    Ok(BandSystem {
        q: field.q,
        grid_size: n,
        values,
        modulus,
        gap_tol,
        degeneracies,
    })
}

/// Continuity and symmetry certificates for a band system.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub grid_spacing: f64,
    /// Empirical Lipschitz constant: max edge-wise `||ΔH|| / h`.
    pub lipschitz: f64,
    pub modulus: f64,
    /// `L·h + tol`; the modulus must stay below it.
    pub continuity_bound: f64,
    pub continuity_ok: bool,
    pub degeneracy_count: usize,
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    /// `|min + max|`.
    pub symmetry_defect: f64,
    /// Hausdorff-type distance between the grid value set and its negation.
    pub hausdorff_defect: f64,
}

pub fn selection_report(
    field: &OperatorField,
    bands: &BandSystem,
    tol: f64,
) -> Result<SelectionReport> {
    if bands.q != field.q || bands.grid_size != field.grid_size {
        return Err(CoreError::ShapeMismatch);
    }
    let n = field.grid_size;
    let h = field.grid_spacing();
    let mut lipschitz: f64 = 0.0;
    for i1 in 0..n {
        for i2 in 0..n {
            let here = field.matrix(i1, i2);
            for (r1, r2) in [((i1 + 1) % n, i2), (i1, (i2 + 1) % n)] {
                let jump = eig::spectral_norm(&(here - field.matrix(r1, r2)));
                lipschitz = lipschitz.max(jump / h);
            }
        }
    }
    let continuity_bound = lipschitz * h + tol;

    let mut all: Vec<f64> = bands.values.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spectrum_min = all[0];
    let spectrum_max = *all.last().unwrap();

    // directed distance from the set to its negation; the negated set's
    // distance back is the same by symmetry of the matching
    let mut hausdorff_defect: f64 = 0.0;
    for &v in &all {
        let target = -v;
        let idx = all.partition_point(|&w| w < target);
        let mut best = f64::INFINITY;
        if idx < all.len() {
            best = best.min((all[idx] - target).abs());
        }
        if idx > 0 {
            best = best.min((all[idx - 1] - target).abs());
        }
        hausdorff_defect = hausdorff_defect.max(best);
    }

    Ok(SelectionReport {
        grid_spacing: h,
        lipschitz,
        modulus: bands.modulus,
        continuity_bound,
        continuity_ok: bands.modulus <= continuity_bound,
        degeneracy_count: bands.degeneracies.len(),
        spectrum_min,
        spectrum_max,
        symmetry_defect: (spectrum_min + spectrum_max).abs(),
        hausdorff_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::random as mrandom;
    use crate::rng::SplitMix64;

    fn scalar_shape() -> AlgebraShape {
        AlgebraShape::new(vec![1], None).unwrap()
    }

    fn m2() -> AlgebraShape {
        AlgebraShape::new(vec![2], None).unwrap()
    }

    fn diag_element(shape: &AlgebraShape, diags: &[Vec<f64>]) -> AlgebraElement {
        AlgebraElement::from_real_diagonals(shape, diags).unwrap()
    }

    #[test]
    fn order_pair_scalars() {
        let shape = scalar_shape();
        let a = diag_element(&shape, &[vec![1.0]]);
        let b = diag_element(&shape, &[vec![2.0]]);
        let ex = order_pair(&a, &b).unwrap();
        assert_eq!(ex.upper_spectra[0], vec![2.0]);
        assert_eq!(ex.lower_spectra[0], vec![1.0]);
        // the witness is the swap
        let w = ex.witness.block(0);
        assert!((w[(0, 1)].re - 1.0).abs() < 1e-14);
        assert!((w[(1, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_pair_m2_redistribution() {
        let shape = m2();
        let a = diag_element(&shape, &[vec![5.0, 1.0]]);
        let b = diag_element(&shape, &[vec![3.0, 2.0]]);
        let ex = order_pair(&a, &b).unwrap();
        assert_eq!(ex.upper_spectra[0], vec![5.0, 3.0]);
        assert_eq!(ex.lower_spectra[0], vec![2.0, 1.0]);
    }

    #[test]
    fn order_pair_fixed_point() {
        let shape = m2();
        let a = diag_element(&shape, &[vec![5.0, 4.0]]);
        let b = diag_element(&shape, &[vec![3.0, 2.0]]);
        let ex = order_pair(&a, &b).unwrap();
        assert!(ex.upper.sub(&a).unwrap().operator_norm() < 1e-14);
        assert!(ex.lower.sub(&b).unwrap().operator_norm() < 1e-14);
        let id = AlgebraElement::identity(&shape.doubled());
        assert!(ex.witness.sub(&id).unwrap().operator_norm() < 1e-14);
    }

    #[test]
    fn order_pair_witness_conjugation() {
        use crate::algebra::random as arandom;
        let shape = AlgebraShape::new(vec![2, 3], Some(vec![0.4, 0.6])).unwrap();
        let mut rng = SplitMix64::new(31);
        for _ in 0..30 {
            let a = arandom::hermitian_element(&shape, &mut rng);
            let b = arandom::hermitian_element(&shape, &mut rng);
            let ex = order_pair(&a, &b).unwrap();
            // witness unitary
            let w = &ex.witness;
            let id = AlgebraElement::identity(&shape.doubled());
            assert!(
                w.adjoint().mul(w).unwrap().sub(&id).unwrap().operator_norm() < 1e-9
            );
            // conjugation identity
            let before = embed_pair(&a, &b).unwrap();
            let after = embed_pair(&ex.upper, &ex.lower).unwrap();
            let carried = w.adjoint().mul(&before).unwrap().mul(w).unwrap();
            assert!(carried.sub(&after).unwrap().operator_norm() < 1e-9);
            // per-block separation
            for j in 0..shape.factors() {
                let min_up = *ex.upper_spectra[j].last().unwrap();
                let max_lo = ex.lower_spectra[j][0];
                assert!(min_up >= max_lo);
            }
            // exact multiset preservation
            let sys_a = a.eigensystem().unwrap();
            let sys_b = b.eigensystem().unwrap();
            for j in 0..shape.factors() {
                let mut input: Vec<u64> = sys_a[j]
                    .0
                    .iter()
                    .chain(&sys_b[j].0)
                    .map(|v| v.to_bits())
                    .collect();
                let mut output: Vec<u64> = ex.upper_spectra[j]
                    .iter()
                    .chain(&ex.lower_spectra[j])
                    .map(|v| v.to_bits())
                    .collect();
                input.sort_unstable();
                output.sort_unstable();
                assert_eq!(input, output);
            }
        }
    }

    #[test]
    fn order_all_reversed_scalars() {
        let shape = scalar_shape();
        let lams: Vec<AlgebraElement> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| diag_element(&shape, &[vec![v]]))
            .collect();
        let ordered = order_all(&lams).unwrap();
        let got: Vec<f64> = ordered.spectra.iter().map(|s| s[0][0]).collect();
        assert_eq!(got, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn order_all_identity_witness_when_sorted() {
        let shape = scalar_shape();
        let lams: Vec<AlgebraElement> = [3.0, 2.0, 1.0]
            .iter()
            .map(|&v| diag_element(&shape, &[vec![v]]))
            .collect();
        let ordered = order_all(&lams).unwrap();
        assert_eq!(ordered.exchanges, 0);
        let id = ModuleOperator::identity(&shape, 3);
        assert!(ordered.witness.sub(&id).unwrap().operator_norm() < 1e-14);
    }

    /// Independent oracle: per block, sort the union multiset descending
    /// and cut into consecutive chunks of the block dimension.
    fn sort_then_chunk(lams: &[AlgebraElement]) -> Vec<Vec<Vec<f64>>> {
        let shape = lams[0].shape();
        let n = lams.len();
        let mut out = vec![vec![Vec::new(); shape.factors()]; n];
        for (j, &k) in shape.block_dims().iter().enumerate() {
            let mut union: Vec<f64> = Vec::new();
            for lam in lams {
                union.extend(lam.eigensystem().unwrap()[j].0.iter().copied());
            }
            union.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (i, slot) in out.iter_mut().enumerate() {
                slot[j] = union[i * k..(i + 1) * k].to_vec();
            }
        }
        out
    }

    #[test]
    fn order_all_matches_global_sort_oracle() {
        use crate::algebra::random as arandom;
        let shape = m2();
        let mut rng = SplitMix64::new(32);
        for _ in 0..200 {
            let lams: Vec<AlgebraElement> = (0..3)
                .map(|_| arandom::hermitian_element(&shape, &mut rng))
                .collect();
            let ordered = order_all(&lams).unwrap();
            let oracle = sort_then_chunk(&lams);
            for i in 0..3 {
                for j in 0..shape.factors() {
                    let got: Vec<u64> =
                        ordered.spectra[i][j].iter().map(|v| v.to_bits()).collect();
                    let want: Vec<u64> = oracle[i][j].iter().map(|v| v.to_bits()).collect();
                    assert_eq!(got, want, "slot {i} block {j}");
                }
            }
            // witness conjugates the stacked diagonal within solver noise
            let n = lams.len();
            let stack = |ls: &[AlgebraElement]| {
                let blocks = shape
                    .block_dims()
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| {
                        let mut m = CMatrix::zeros(n * k, n * k);
                        for (i, l) in ls.iter().enumerate() {
                            m.view_mut((i * k, i * k), (k, k)).copy_from(l.block(j));
                        }
                        m
                    })
                    .collect();
                ModuleOperator::from_blocks(shape.clone(), n, blocks).unwrap()
            };
            let before = stack(&lams);
            let after = stack(&ordered.elements);
            let w = &ordered.witness;
            let carried = w.adjoint().mul(&before).unwrap().mul(w).unwrap();
            assert!(carried.sub(&after).unwrap().operator_norm() < 1e-9);
            let id = ModuleOperator::identity(&shape, n);
            assert!(
                w.adjoint().mul(w).unwrap().sub(&id).unwrap().operator_norm() < 1e-9
            );
        }
    }

    #[test]
    fn conjugating_unitary_examples() {
        use crate::algebra::random as arandom;
        let shape = m2();
        let mut rng = SplitMix64::new(33);
        let lam = arandom::hermitian_element(&shape, &mut rng);
        // identity on equal inputs
        let u = conjugating_unitary(&lam, &lam).unwrap();
        let id = AlgebraElement::identity(&shape);
        assert!(u.sub(&id).unwrap().operator_norm() < 1e-14);
        // exact conjugate recovery
        for _ in 0..20 {
            let lam = arandom::hermitian_element(&shape, &mut rng);
            let v = arandom::unitary_element(&shape, &mut rng);
            let target = v.adjoint().mul(&lam).unwrap().mul(&v).unwrap();
            let u = conjugating_unitary(&lam, &target).unwrap();
            let got = u.adjoint().mul(&lam).unwrap().mul(&u).unwrap();
            assert!(got.sub(&target).unwrap().operator_norm() < 1e-8);
        }
        // spectra shifted by δ
        let delta = 0.3;
        let lam = arandom::hermitian_element(&shape, &mut rng);
        let target = lam
            .add(&AlgebraElement::identity(&shape).scale(Complex64::new(delta, 0.0)))
            .unwrap();
        let u = conjugating_unitary(&lam, &target).unwrap();
        let got = u.adjoint().mul(&lam).unwrap().mul(&u).unwrap();
        assert!(got.sub(&target).unwrap().operator_norm() <= delta + 1e-8);
    }

    fn diag_operator(shape: &AlgebraShape, n: usize, entries: &[Vec<f64>]) -> ModuleOperator {
        let blocks = entries
            .iter()
            .map(|d| {
                CMatrix::from_fn(d.len(), d.len(), |i, j| {
                    if i == j {
                        Complex64::new(d[i], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        ModuleOperator::from_blocks(shape.clone(), n, blocks).unwrap()
    }

    #[test]
    fn iteration_scalar_by_hand() {
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![3.0, 1.0]]);
        let trace = iterate_weak_diagonalization(&k, 10).unwrap();
        assert!((trace.limits[0].block(0)[(0, 0)].re - 3.0).abs() < 0.5f64.powi(10) + 1e-12);
        assert!((trace.limits[1].block(0)[(0, 0)].re - 1.0).abs() < 0.5f64.powi(10) + 1e-12);
        assert!(trace.final_residual <= 0.5f64.powi(8));
    }

    #[test]
    fn iteration_fixed_point_on_grid() {
        // spectrum already on the 2^-3 grid: constant from step 3 on
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![0.75, 0.25]]);
        let trace = iterate_weak_diagonalization(&k, 8).unwrap();
        for step in &trace.steps[3..] {
            assert!(step.step_distance < 1e-12, "distance {}", step.step_distance);
        }
    }

    #[test]
    fn iteration_cauchy_rate() {
        let shape = AlgebraShape::new(vec![2], None).unwrap();
        let mut rng = SplitMix64::new(34);
        for _ in 0..5 {
            let k = mrandom::positive_operator(&shape, 3, 0.1, &mut rng);
            let n_steps = 20;
            let trace = iterate_weak_diagonalization(&k, n_steps).unwrap();
            for (idx, step) in trace.steps.iter().enumerate() {
                let n = idx + 1;
                assert!(step.approximation_error <= step.eps + 1e-12);
                if n >= 2 {
                    assert!(
                        step.step_distance <= 0.5f64.powi(n as i32 - 1) + 1e-9,
                        "step {n}: {}",
                        step.step_distance
                    );
                }
            }
            assert!(trace.final_residual <= 0.5f64.powi(n_steps as i32 - 2) + 1e-7);
            // limits' spectra match the direct diagonalization
            let direct = direct_reference(&k).unwrap();
            let tol = 0.5f64.powi(n_steps as i32 - 1) + 1e-8;
            for (lim, lam) in trace.limits.iter().zip(&direct.eigenvalues) {
                let sl = lim.eigensystem().unwrap();
                let sd = lam.eigensystem().unwrap();
                for (a, b) in sl.iter().zip(&sd) {
                    for (x, y) in a.0.iter().zip(&b.0) {
                        assert!((x - y).abs() <= tol);
                    }
                }
            }
        }
    }

    #[test]
    fn iteration_rejects_bad_input() {
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![1.0, -1.0]]);
        assert!(iterate_weak_diagonalization(&k, 5).is_err());
        let ok = diag_operator(&shape, 2, &[vec![2.0, 1.0]]);
        assert!(matches!(
            iterate_weak_diagonalization(&ok, 41),
            Err(CoreError::IterationBudget)
        ));
    }

    #[test]
    fn harper_examples() {
        let field = harper_field(1, 2, 4).unwrap();
        let h00 = field.matrix(0, 0);
        assert!((h00[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((h00[(0, 1)].re - 2.0).abs() < 1e-12);
        assert!((h00[(1, 1)].re + 2.0).abs() < 1e-12);
        let vals = eig::hermitian_eigenvalues(h00).unwrap();
        let root8 = 8.0f64.sqrt();
        assert!((vals[0] - root8).abs() < 1e-12);
        assert!((vals[1] + root8).abs() < 1e-12);

        // band touching at (π, π/2): grid indices (2, 1) on a 4-grid
        let vals = eig::hermitian_eigenvalues(field.matrix(2, 1)).unwrap();
        assert!(vals[0].abs() < 1e-12 && vals[1].abs() < 1e-12);
    }

    #[test]
    fn harper_norm_bound() {
        for &(p, q) in &[(1usize, 2usize), (1, 3), (2, 3), (1, 5), (3, 5)] {
            let field = harper_field(p, q, 8).unwrap();
            for m in &field.matrices {
                assert!(eig::hermitian_defect(m) < 1e-12);
                assert!(eig::spectral_norm(m) <= 4.0 + 1e-9);
            }
        }
    }

    #[test]
    fn harper_rejects_bad_flux() {
        assert!(matches!(harper_field(0, 2, 8), Err(CoreError::BadFlux)));
        assert!(matches!(harper_field(2, 4, 8), Err(CoreError::BadFlux)));
        assert!(matches!(harper_field(3, 2, 8), Err(CoreError::BadFlux)));
        assert!(matches!(
            harper_field(1, 2, 3),
            Err(CoreError::GridTooSmall)
        ));
    }

    #[test]
    fn constant_field_bands() {
        let mut matrices = Vec::new();
        for _ in 0..16 {
            matrices.push(CMatrix::from_fn(2, 2, |i, j| {
                if i == j {
                    Complex64::new(2.0 - i as f64, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }));
        }
        let field = OperatorField {
            q: 2,
            grid_size: 4,
            matrices,
        };
        let bands = band_functions(&field).unwrap();
        assert!(bands.modulus < 1e-14);
        assert!(bands.degeneracies.is_empty());
        let report = selection_report(&field, &bands, 1e-9).unwrap();
        assert!(report.lipschitz < 1e-14);
        assert!((report.symmetry_defect - 3.0).abs() < 1e-12);
    }

    #[test]
    fn harper_q2_closed_form() {
        let field = harper_field(1, 2, 64).unwrap();
        let bands = band_functions(&field).unwrap();
        for i1 in 0..64 {
            for i2 in 0..64 {
                let (k1, k2) = field.point(i1, i2);
                let cf = 2.0 * (k2.cos().powi(2) + (k1 / 2.0).cos().powi(2)).sqrt();
                assert!((bands.band(i1, i2, 0) - cf).abs() < 1e-9);
                assert!((bands.band(i1, i2, 1) + cf).abs() < 1e-9);
            }
        }
        // degeneracies exactly at the closed-form gap locus (π, π/2), (π, 3π/2)
        let locus: Vec<(usize, usize, usize)> = vec![(32, 16, 0), (32, 48, 0)];
        assert_eq!(bands.degeneracies, locus);
    }

    #[test]
    fn harper_weyl_edge_bound() {
        let field = harper_field(1, 2, 16).unwrap();
        let bands = band_functions(&field).unwrap();
        let n = field.grid_size;
        let mut max_edge: f64 = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                for (r1, r2) in [((i1 + 1) % n, i2), (i1, (i2 + 1) % n)] {
                    let d = field.matrix(i1, i2) - field.matrix(r1, r2);
                    max_edge = max_edge.max(eig::spectral_norm(&d));
                }
            }
        }
        assert!(bands.modulus <= max_edge + 1e-10);
        let report = selection_report(&field, &bands, 1e-9).unwrap();
        assert!(report.continuity_ok);
    }

    #[test]
    fn harper_symmetry_q3() {
        let field = harper_field(1, 3, 32).unwrap();
        let bands = band_functions(&field).unwrap();
        let report = selection_report(&field, &bands, 1e-9).unwrap();
        assert!(report.spectrum_min >= -4.0 - 1e-9);
        assert!(report.spectrum_max <= 4.0 + 1e-9);
        assert!(report.symmetry_defect <= 2.0 * bands.modulus);
        assert!(report.hausdorff_defect <= 2.0 * bands.modulus);
    }

    #[test]
    fn harper_flux_mirror() {
        // p/q and (q-p)/q agree after the reflection k2 -> -k2
        for &(p, q) in &[(1usize, 3usize), (2, 5)] {
            let n = 8;
            let f1 = harper_field(p, q, n).unwrap();
            let f2 = harper_field(q - p, q, n).unwrap();
            let b1 = band_functions(&f1).unwrap();
            let b2 = band_functions(&f2).unwrap();
            for i1 in 0..n {
                for i2 in 0..n {
                    let m2 = (n - i2) % n;
                    for band in 0..q {
                        assert!((b1.band(i1, i2, band) - b2.band(i1, m2, band)).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn bands_independent_of_worker_count() {
        let field = harper_field(1, 3, 16).unwrap();
        let a = band_functions_with(&field, DEFAULT_GAP_TOL, 1).unwrap();
        let b = band_functions_with(&field, DEFAULT_GAP_TOL, 3).unwrap();
        let c = band_functions_with(&field, DEFAULT_GAP_TOL, 7).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x, y);
        }
        for (x, y) in a.values.iter().zip(&c.values) {
            assert_eq!(x, y);
        }
        assert_eq!(a.modulus.to_bits(), b.modulus.to_bits());
        assert_eq!(a.degeneracies, c.degeneracies);
    }

    #[test]
    fn union_spectrum_dedup() {
        let field = harper_field(1, 2, 8).unwrap();
        let bands = band_functions(&field).unwrap();
        let union = bands.union_spectrum(1e-9);
        assert!(union.windows(2).all(|w| w[1] > w[0]));
        assert!(union.iter().all(|v| v.abs() <= 4.0 + 1e-9));
    }
}
