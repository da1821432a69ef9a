//! Ordered diagonalization of positive module operators, the trace
//! quantile (spectral scale) with its minimax oracle, finite-spectrum
//! approximation, and the common-refinement / pairing machinery behind the
//! perturbation bound.
//!
//! The canonical diagonalization per factor: eigendecompose the (n·k)-
//! dimensional block, sort eigenvalues descending, and cut the list into n
//! consecutive chunks of size k. Chunk i's eigenvectors form the i-th
//! module eigenvector panel; the i-th operator eigenvalue is the diagonal
//! chunk in that basis.

use crate::algebra::{AlgebraElement, AlgebraShape};
use crate::eig::{self, CMatrix};
use crate::error::{CoreError, Result};
use crate::hilbert::{self, ModuleOperator, ModuleVector};

pub const STRICT_POSITIVITY_TOL: f64 = 1e-10;

/// Eigenvector system, operator eigenvalues, ordering margins and the
/// residual certificate of a diagonalization.
#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub eigenvectors: Vec<ModuleVector>,
    pub eigenvalues: Vec<AlgebraElement>,
    /// `margins[i][j] = min spec(λ_i, block j) - max spec(λ_{i+1}, block j)`.
    pub ordering_margins: Vec<Vec<f64>>,
    /// `max_i ||K x_i - x_i λ_i||`.
    pub residual: f64,
}

/// Blockwise eigendata of a Hermitian module operator, values descending.
#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn eigen_blocks(k: &ModuleOperator) -> Result<Vec<BlockEigen>> {
    k.blocks()
        .iter()
        .map(|b| {
            let (values, vectors) = eig::hermitian_eigensystem(b)?;
            Ok(BlockEigen { values, vectors })
        })
        .collect()
}

/// Diagonalize a strictly positive operator (the default contract).
pub fn diagonalize(k: &ModuleOperator) -> Result<Diagonalization> {
    diagonalize_with(k, false)
}

/// Same with the strictness hypothesis relaxable to positive-semidefinite.
pub fn diagonalize_with(k: &ModuleOperator, allow_semidefinite: bool) -> Result<Diagonalization> {
    let report = hilbert::is_strictly_positive(k, STRICT_POSITIVITY_TOL);
    let acceptable = report.strictly_positive
        || (allow_semidefinite
            && report.hermitian_defect <= STRICT_POSITIVITY_TOL
            && report.min_eigenvalue >= -STRICT_POSITIVITY_TOL);
    if !acceptable {
        return Err(CoreError::NotStrictlyPositive {
            min_eig: report.min_eigenvalue,
        });
    }
    let shape = k.shape().clone();
    let n = k.rank();
    let systems = eigen_blocks(k)?;

    let mut eigenvectors = Vec::with_capacity(n);
    let mut eigenvalues = Vec::with_capacity(n);
    for i in 0..n {
        let mut panels = Vec::with_capacity(shape.factors());
        let mut diags = Vec::with_capacity(shape.factors());
        for (j, &kj) in shape.block_dims().iter().enumerate() {
            let sys = &systems[j];
            panels.push(sys.vectors.columns(i * kj, kj).into_owned());
            diags.push(sys.values[i * kj..(i + 1) * kj].to_vec());
        }
        eigenvectors.push(ModuleVector::from_blocks(shape.clone(), n, panels)?);
        eigenvalues.push(AlgebraElement::from_real_diagonals(&shape, &diags)?);
    }

    let mut residual: f64 = 0.0;
    for (x, lam) in eigenvectors.iter().zip(&eigenvalues) {
        let d = hilbert::apply_operator(k, x)?.sub(&x.act(lam)?)?;
        residual = residual.max(d.norm());
    }
    let ordering_margins = ordering_margins(&eigenvalues)?;
    Ok(Diagonalization {
        eigenvectors,
        eigenvalues,
        ordering_margins,
        residual,
    })
}

impl Diagonalization {
    /// `Σ_i θ_{x_i·λ_i, x_i}`.
    pub fn reconstruct(&self, shape: &AlgebraShape, n: usize) -> Result<ModuleOperator> {
        let mut acc = ModuleOperator::zero(shape, n);
        for (x, lam) in self.eigenvectors.iter().zip(&self.eigenvalues) {
            acc = acc.add(&hilbert::theta_operator(&x.act(lam)?, x)?)?;
        }
        Ok(acc)
    }

    /// Per-eigenvalue block spectra, descending, for spectrum-wise checks.
    pub fn eigenvalue_spectra(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        self.eigenvalues
            .iter()
            .map(|lam| {
                lam.eigensystem()
                    .map(|sys| sys.into_iter().map(|(vals, _)| vals).collect())
            })
            .collect()
    }
}

/// Margins of the unitary-invariant ordering: for each consecutive pair and
/// block, `min spec(λ_i) - max spec(λ_{i+1})`. All margins nonnegative is
/// equivalent to `u* λ_i u ≥ v* λ_{i+1} v` for all unitaries `u, v` in the
/// factor: a unitary orbit can align any eigenvector pair, so the worst
/// case pairs the bottom of λ_i against the top of λ_{i+1}.
pub fn ordering_margins(lams: &[AlgebraElement]) -> Result<Vec<Vec<f64>>> {
    for lam in lams {
        let defect = lam.hermitian_defect();
        if defect > 1e-10 * lam.operator_norm().max(1.0) {
            return Err(CoreError::NotHermitian { defect });
        }
    }
    let spectra: Vec<Vec<Vec<f64>>> = lams
        .iter()
        .map(|lam| {
            lam.eigensystem()
                .map(|sys| sys.into_iter().map(|(vals, _)| vals).collect::<Vec<_>>())
        })
        .collect::<Result<_>>()?;
    let mut margins = Vec::new();
    for w in spectra.windows(2) {
        let pair: Vec<f64> = w[0]
            .iter()
            .zip(&w[1])
            .map(|(hi, lo)| hi.last().copied().unwrap_or(0.0) - lo.first().copied().unwrap_or(0.0))
            .collect();
        margins.push(pair);
    }
    Ok(margins)
}

/// The trace quantile of a Hermitian operator: atoms `(weight, value)`
/// sorted ascending by value, total weight n.
#[derive(Debug, Clone)]
pub struct SpectralScale {
    pub atoms: Vec<(f64, f64)>,
    pub total_weight: f64,
}

const SCALE_SLACK: f64 = 1e-12;

impl SpectralScale {
    /// `ε(α)`: smallest atom value whose cumulative weight reaches α. At a
    /// jump the value at the jump is returned (infimum convention).
    pub fn eval(&self, alpha: f64) -> f64 {
        let mut cum = 0.0;
        for &(w, v) in &self.atoms {
            cum += w;
            if cum >= alpha - SCALE_SLACK {
                return v;
            }
        }
        self.atoms.last().map(|&(_, v)| v).unwrap_or(0.0)
    }

    /// Cumulative weights after each atom.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut cum = 0.0;
        self.atoms
            .iter()
            .map(|&(w, _)| {
                cum += w;
                cum
            })
            .collect()
    }

    /// Sampling grid for export: every breakpoint plus midpoints.
    pub fn sample_alphas(&self) -> Vec<f64> {
        let bps = self.breakpoints();
        let mut alphas = Vec::with_capacity(2 * bps.len());
        let mut prev = 0.0;
        for &b in &bps {
            alphas.push(0.5 * (prev + b));
            alphas.push(b);
            prev = b;
        }
        alphas
    }
}

/// Every block eigenvalue with weight `w_j / k_j`, merged and sorted.
pub fn spectral_scale(k: &ModuleOperator) -> Result<SpectralScale> {
    let defect = k.hermitian_defect();
    if defect > 1e-10 * k.operator_norm().max(1.0) {
        return Err(CoreError::NotHermitian { defect });
    }
    let systems = eigen_blocks(k)?;
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (j, sys) in systems.iter().enumerate() {
        let w = k.shape().atom_weight(j);
        for &v in &sys.values {
            atoms.push((w, v));
        }
    }
    atoms.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    Ok(SpectralScale {
        atoms,
        total_weight: k.rank() as f64,
    })
}

pub const ORACLE_MAX_DIM: usize = 12;

/// Exhaustive minimax: minimize, over spectral-subspace projections P with
/// `τ̄(P) ≥ α`, the largest Rayleigh quotient on the range of P. For
/// Hermitian operators spectral subspaces attain the infimum over all
/// projections, so this is exact up to solver residual. Test oracle only.
pub fn minimax_oracle(k: &ModuleOperator, alpha: f64, subspace_budget: usize) -> Result<f64> {
    let systems = eigen_blocks(k)?;
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (j, sys) in systems.iter().enumerate() {
        let w = k.shape().atom_weight(j);
        for &v in &sys.values {
            atoms.push((w, v));
        }
    }
    let dim = atoms.len();
    if dim > ORACLE_MAX_DIM {
        return Err(CoreError::TooLarge { dim });
    }
    let masks: u64 = 1u64 << dim;
    if masks as usize > subspace_budget {
        return Err(CoreError::TooLarge { dim });
    }
    let mut best = f64::INFINITY;
    for mask in 1..masks {
        let mut tau = 0.0;
        let mut top = f64::NEG_INFINITY;
        for (i, &(w, v)) in atoms.iter().enumerate() {
            if mask & (1 << i) != 0 {
                tau += w;
                top = top.max(v);
            }
        }
        if tau >= alpha - SCALE_SLACK {
            best = best.min(top);
        }
    }
    if best.is_infinite() {
        return Err(CoreError::TooLarge { dim });
    }
    Ok(best)
}

const SNAP_GUARD: f64 = 1e-12;

/// Snap every eigenvalue upward to the grid `eps·Z`, keeping the eigenbasis.
/// Values at or below zero land on `eps`, so the output is strictly
/// positive whenever the input is positive-semidefinite. A small guard
/// keeps values already on the grid fixed in the presence of solver noise.
pub fn finite_spectrum_approx(k: &ModuleOperator, eps: f64) -> Result<ModuleOperator> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(CoreError::NonPositiveEps);
    }
    let defect = k.hermitian_defect();
    if defect > 1e-10 * k.operator_norm().max(1.0) {
        return Err(CoreError::NotHermitian { defect });
    }
    let systems = eigen_blocks(k)?;
    let blocks = systems
        .iter()
        .map(|sys| {
            let snapped: Vec<f64> = sys
                .values
                .iter()
                .map(|&v| eps * ((v.max(0.0) - SNAP_GUARD) / eps).ceil().max(1.0))
                .collect();
            eig::reconstruct(&snapped, &sys.vectors)
        })
        .collect();
    ModuleOperator::from_blocks(k.shape().clone(), k.rank(), blocks)
}

/// Where a refined part sits relative to the original projection families:
/// the eigenvector-panel chunk it lies under and, per side, the
/// spectral-level index it lies under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subordination {
    pub block: usize,
    pub chunk: usize,
    pub level1: usize,
    pub level2: usize,
}

/// Two partitions of unity refined to matching traces, part by part.
#[derive(Debug, Clone)]
pub struct PairedPartition {
    pub parts1: Vec<ModuleOperator>,
    pub parts2: Vec<ModuleOperator>,
    pub traces: Vec<f64>,
    pub subordination: Vec<Subordination>,
}

const LEVEL_TOL: f64 = 1e-9;

/// Cut positions (in descending-eigenvalue atom indices) of one block:
/// distinct-value boundaries plus the panel boundaries at multiples of k.
fn block_cuts(values: &[f64], k: usize) -> Vec<usize> {
    let nk = values.len();
    let mut cuts = vec![0];
    for i in 1..nk {
        if values[i - 1] - values[i] > LEVEL_TOL || i % k == 0 {
            cuts.push(i);
        }
    }
    cuts.push(nk);
    cuts.dedup();
    cuts
}

/// Common refinement of the spectral-projection and eigenvector-panel
/// families of two Hermitian operators on the same shape. Within each
/// factor both sides carry the same trace grid (every eigenvector weighs
/// `w_j/k_j`), so merged integer cut positions always match and traces pair
/// exactly.
pub fn common_refinement(k1: &ModuleOperator, k2: &ModuleOperator) -> Result<PairedPartition> {
    k1.compatible(k2)?;
    let shape = k1.shape().clone();
    let n = k1.rank();
    let sys1 = eigen_blocks(k1)?;
    let sys2 = eigen_blocks(k2)?;

    let mut parts1 = Vec::new();
    let mut parts2 = Vec::new();
    let mut traces = Vec::new();
    let mut subordination = Vec::new();
    for (j, &kj) in shape.block_dims().iter().enumerate() {
        let cuts1 = block_cuts(&sys1[j].values, kj);
        let cuts2 = block_cuts(&sys2[j].values, kj);
        let mut merged: Vec<usize> = cuts1.iter().chain(cuts2.iter()).copied().collect();
        merged.sort_unstable();
        merged.dedup();
        for w in merged.windows(2) {
            let (start, end) = (w[0], w[1]);
            if end <= start {
                return Err(CoreError::TraceMismatchUnresolvable);
            }
            let build = |sys: &BlockEigen| -> Result<ModuleOperator> {
                let cols = sys.vectors.columns(start, end - start).into_owned();
                let mut blocks: Vec<CMatrix> = shape
                    .block_dims()
                    .iter()
                    .map(|&kb| CMatrix::zeros(n * kb, n * kb))
                    .collect();
                blocks[j] = &cols * cols.adjoint();
                ModuleOperator::from_blocks(shape.clone(), n, blocks)
            };
            parts1.push(build(&sys1[j])?);
            parts2.push(build(&sys2[j])?);
            traces.push((end - start) as f64 * shape.atom_weight(j));
            let level_of = |cuts: &[usize]| cuts.iter().filter(|&&c| c <= start).count() - 1;
            subordination.push(Subordination {
                block: j,
                chunk: start / kj,
                level1: level_of(&cuts1),
                level2: level_of(&cuts2),
            });
        }
    }
    Ok(PairedPartition {
        parts1,
        parts2,
        traces,
        subordination,
    })
}

/// A unitary carrying the range of each part on side 2 onto the matching
/// part on side 1. When the two sides coincide the identity is returned.
pub fn pairing_unitary(pp: &PairedPartition) -> Result<ModuleOperator> {
    if pp.parts1.len() != pp.parts2.len() || pp.parts1.is_empty() {
        return Err(CoreError::InvalidPartition("empty or mismatched parts".into()));
    }
    let shape = pp.parts1[0].shape().clone();
    let n = pp.parts1[0].rank();

    let coincide = pp
        .parts1
        .iter()
        .zip(&pp.parts2)
        .all(|(a, b)| a.sub(b).map(|d| d.operator_norm() < 1e-12).unwrap_or(false));
    if coincide {
        return Ok(ModuleOperator::identity(&shape, n));
    }

    let mut u = ModuleOperator::zero(&shape, n);
    for (r1, r2) in pp.parts1.iter().zip(&pp.parts2) {
        r1.compatible(r2)?;
        let s1 = eigen_blocks(r1)?;
        let s2 = eigen_blocks(r2)?;
        let mut blocks: Vec<CMatrix> = shape
            .block_dims()
            .iter()
            .map(|&kb| CMatrix::zeros(n * kb, n * kb))
            .collect();
        for j in 0..shape.factors() {
            let rank1 = s1[j].values.iter().filter(|&&v| v > 0.5).count();
            let rank2 = s2[j].values.iter().filter(|&&v| v > 0.5).count();
            if rank1 != rank2 {
                return Err(CoreError::InvalidPartition(format!(
                    "rank mismatch in block {j}: {rank1} vs {rank2}"
                )));
            }
            if rank1 == 0 {
                continue;
            }
            let b1 = s1[j].vectors.columns(0, rank1).into_owned();
            let b2 = s2[j].vectors.columns(0, rank2).into_owned();
            blocks[j] = &b1 * b2.adjoint();
        }
        u = u.add(&ModuleOperator::from_blocks(shape.clone(), n, blocks)?)?;
    }
    Ok(u)
}

/// Perturbation pairing report.
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    /// `||K1 - K2||`.
    pub delta: f64,
    /// `||λ_i^{(1)} - λ_i^{(2)}||` per i.
    pub eigenvalue_bounds: Vec<f64>,
    /// `||U* K1 U - K2||`.
    pub conjugation_defect: f64,
}

/// Pair the eigensystems of two strictly positive operators on the same
/// shape: a unitary carrying the eigenvectors of `K2` to those of `K1`,
/// matched eigenvalue pairs, and the Weyl-type bound report.
pub fn match_eigenvalues(
    k1: &ModuleOperator,
    k2: &ModuleOperator,
) -> Result<(ModuleOperator, Vec<(AlgebraElement, AlgebraElement)>, PerturbationReport)> {
    k1.compatible(k2)?;
    for k in [k1, k2] {
        let rep = hilbert::is_strictly_positive(k, STRICT_POSITIVITY_TOL);
        if !rep.strictly_positive {
            return Err(CoreError::NotStrictlyPositive {
                min_eig: rep.min_eigenvalue,
            });
        }
    }
    let d1 = diagonalize(k1)?;
    let d2 = diagonalize(k2)?;
    let sys1 = eigen_blocks(k1)?;
    let sys2 = eigen_blocks(k2)?;
    let blocks = sys1
        .iter()
        .zip(&sys2)
        .map(|(a, b)| &a.vectors * b.vectors.adjoint())
        .collect();
    let u = ModuleOperator::from_blocks(k1.shape().clone(), k1.rank(), blocks)?;

    let delta = k1.sub(k2)?.operator_norm();
    let pairs: Vec<(AlgebraElement, AlgebraElement)> = d1
        .eigenvalues
        .iter()
        .cloned()
        .zip(d2.eigenvalues.iter().cloned())
        .collect();
    let eigenvalue_bounds = pairs
        .iter()
        .map(|(a, b)| a.sub(b).map(|d| d.operator_norm()))
        .collect::<Result<Vec<f64>>>()?;
    let conjugation_defect = u
        .adjoint()
        .mul(k1)?
        .mul(&u)?
        .sub(k2)?
        .operator_norm();
    Ok((
        u,
        pairs,
        PerturbationReport {
            delta,
            eigenvalue_bounds,
            conjugation_defect,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::random as mrandom;
    use crate::rng::SplitMix64;
    use num_complex::Complex64;

    fn scalar_shape() -> AlgebraShape {
        AlgebraShape::new(vec![1], None).unwrap()
    }

    fn m2() -> AlgebraShape {
        AlgebraShape::new(vec![2], None).unwrap()
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
    fn scalar_diagonalization() {
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![3.0, 1.0]]);
        let d = diagonalize(&k).unwrap();
        assert_eq!(d.eigenvalues.len(), 2);
        assert!((d.eigenvalues[0].block(0)[(0, 0)].re - 3.0).abs() < 1e-12);
        assert!((d.eigenvalues[1].block(0)[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((d.ordering_margins[0][0] - 2.0).abs() < 1e-12);
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn chunked_allocation() {
        let shape = m2();
        let k = diag_operator(&shape, 2, &[vec![4.0, 3.0, 2.0, 1.0]]);
        let d = diagonalize(&k).unwrap();
        let spectra = d.eigenvalue_spectra().unwrap();
        assert_eq!(spectra[0][0], vec![4.0, 3.0]);
        assert_eq!(spectra[1][0], vec![2.0, 1.0]);
        assert!((d.ordering_margins[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_partition_oracle() {
        let shape = m2();
        let mut rng = SplitMix64::new(21);
        for _ in 0..20 {
            let k = mrandom::positive_operator(&shape, 2, 0.1, &mut rng);
            let d = diagonalize(&k).unwrap();
            let mut union: Vec<f64> = d
                .eigenvalue_spectra()
                .unwrap()
                .iter()
                .flat_map(|per_block| per_block[0].iter().copied())
                .collect();
            union.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let direct = eigen_blocks(&k).unwrap()[0].values.clone();
            for (a, b) in union.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_positive() {
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![1.0, -1.0]]);
        assert!(matches!(
            diagonalize(&k),
            Err(CoreError::NotStrictlyPositive { .. })
        ));
        // kernel rejected by default, accepted under the flag
        let k0 = diag_operator(&shape, 2, &[vec![1.0, 0.0]]);
        assert!(diagonalize(&k0).is_err());
        assert!(diagonalize_with(&k0, true).is_ok());
    }

    #[test]
    fn margins_examples() {
        let shape = scalar_shape();
        let l1 = AlgebraElement::from_real_diagonals(&shape, &[vec![2.0]]).unwrap();
        let l2 = AlgebraElement::from_real_diagonals(&shape, &[vec![1.0]]).unwrap();
        let m = ordering_margins(&[l1, l2]).unwrap();
        assert!((m[0][0] - 1.0).abs() < 1e-14);

        let shape = m2();
        let l1 = AlgebraElement::from_real_diagonals(&shape, &[vec![5.0, 1.0]]).unwrap();
        let l2 = AlgebraElement::from_real_diagonals(&shape, &[vec![3.0, 2.0]]).unwrap();
        let m = ordering_margins(&[l1, l2]).unwrap();
        assert!((m[0][0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn margin_unitary_characterization() {
        use crate::algebra::random as arandom;
        use crate::algebra::{validate_element, ElementKind};
        let shape = m2();
        let mut rng = SplitMix64::new(23);
        for _ in 0..50 {
            let l1 = arandom::hermitian_element(&shape, &mut rng);
            let l2 = arandom::hermitian_element(&shape, &mut rng);
            let margin = ordering_margins(std::slice::from_ref(&l1).iter().chain([&l2]).cloned().collect::<Vec<_>>().as_slice())
                .unwrap()[0][0];
            let mut violated = false;
            for _ in 0..50 {
                let u = arandom::unitary_element(&shape, &mut rng);
                let v = arandom::unitary_element(&shape, &mut rng);
                let diff = u
                    .adjoint()
                    .mul(&l1)
                    .unwrap()
                    .mul(&u)
                    .unwrap()
                    .sub(&v.adjoint().mul(&l2).unwrap().mul(&v).unwrap())
                    .unwrap();
                if !validate_element(&diff, ElementKind::Positive, 1e-9).ok {
                    violated = true;
                }
            }
            if margin >= 0.0 {
                assert!(!violated, "margin {margin} but a violation was found");
            } else {
                // the aligned witness must expose the violation
                let sys1 = l1.eigensystem().unwrap();
                let sys2 = l2.eigensystem().unwrap();
                let min1 = *sys1[0].0.last().unwrap();
                let max2 = sys2[0].0[0];
                assert!(min1 - max2 < 0.0);
            }
        }
    }

    #[test]
    fn scale_examples() {
        let shape = AlgebraShape::new(vec![3], None).unwrap();
        let k = diag_operator(&shape, 1, &[vec![1.0, 2.0, 3.0]]);
        let s = spectral_scale(&k).unwrap();
        assert!((s.eval(1.0 / 3.0) - 1.0).abs() < 1e-12);
        assert!((s.eval(2.0 / 3.0) - 2.0).abs() < 1e-12);
        assert!((s.eval(1.0) - 3.0).abs() < 1e-12);

        let shape = AlgebraShape::new(vec![1, 1], Some(vec![0.5, 0.5])).unwrap();
        let k = diag_operator(&shape, 1, &[vec![2.0], vec![5.0]]);
        let s = spectral_scale(&k).unwrap();
        assert_eq!(s.atoms.len(), 2);
        assert!((s.eval(0.5) - 2.0).abs() < 1e-12);
        assert!((s.eval(1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scale_shift_equivariance() {
        let shape = m2();
        let mut rng = SplitMix64::new(24);
        let k = mrandom::hermitian_operator(&shape, 2, &mut rng);
        let c = 0.7;
        let shifted = k
            .add(&ModuleOperator::identity(&shape, 2).scale(Complex64::new(c, 0.0)))
            .unwrap();
        let s1 = spectral_scale(&k).unwrap();
        let s2 = spectral_scale(&shifted).unwrap();
        for &alpha in &s1.sample_alphas() {
            assert!((s2.eval(alpha) - s1.eval(alpha) - c).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_matches_scale() {
        let shape = AlgebraShape::new(vec![3], None).unwrap();
        let k = diag_operator(&shape, 1, &[vec![1.0, 2.0, 3.0]]);
        assert!((minimax_oracle(&k, 1.0 / 3.0, 1 << 12).unwrap() - 1.0).abs() < 1e-12);
        // α = n: the top of the spectrum
        assert!((minimax_oracle(&k, 1.0, 1 << 12).unwrap() - 3.0).abs() < 1e-12);

        let shape = m2();
        let mut rng = SplitMix64::new(25);
        for _ in 0..10 {
            let k = mrandom::hermitian_operator(&shape, 2, &mut rng);
            let s = spectral_scale(&k).unwrap();
            for &alpha in &s.sample_alphas() {
                let o = minimax_oracle(&k, alpha, 1 << 12).unwrap();
                assert!((o - s.eval(alpha)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn oracle_rejects_large() {
        let shape = m2();
        let mut rng = SplitMix64::new(26);
        let k = mrandom::hermitian_operator(&shape, 8, &mut rng);
        assert!(matches!(
            minimax_oracle(&k, 1.0, 1 << 20),
            Err(CoreError::TooLarge { .. })
        ));
    }

    #[test]
    fn snapping_examples() {
        let shape = m2();
        let k = diag_operator(&shape, 1, &[vec![0.3, 1.4]]);
        let snapped = finite_spectrum_approx(&k, 0.5).unwrap();
        let vals = eigen_blocks(&snapped).unwrap()[0].values.clone();
        assert!((vals[0] - 1.5).abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert!((k.sub(&snapped).unwrap().operator_norm() - 0.2).abs() < 1e-12);
        // fixed point on the grid
        let grid = diag_operator(&shape, 1, &[vec![0.5, 1.5]]);
        let again = finite_spectrum_approx(&grid, 0.5).unwrap();
        assert!(grid.sub(&again).unwrap().operator_norm() < 1e-12);
    }

    #[test]
    fn snapping_bounds_and_commutation() {
        let shape = m2();
        let mut rng = SplitMix64::new(27);
        let eps = (0.5f64).powi(5);
        for _ in 0..20 {
            let k = mrandom::positive_operator(&shape, 2, 0.05, &mut rng);
            let snapped = finite_spectrum_approx(&k, eps).unwrap();
            assert!(k.sub(&snapped).unwrap().operator_norm() <= eps + 1e-10);
            assert!(hilbert::is_strictly_positive(&snapped, 1e-12).strictly_positive);
            // commutes with K
            let comm = k.mul(&snapped).unwrap().sub(&snapped.mul(&k).unwrap()).unwrap();
            assert!(comm.operator_norm() < 1e-9 * (1.0 + k.operator_norm().powi(2)));
            // spectrum cardinality bound
            let mut distinct: Vec<f64> = Vec::new();
            for sys in eigen_blocks(&snapped).unwrap() {
                for v in sys.values {
                    if !distinct.iter().any(|&d| (d - v).abs() < 1e-9) {
                        distinct.push(v);
                    }
                }
            }
            let bound = (k.operator_norm() / eps).ceil() as usize + 1;
            assert!(distinct.len() <= bound);
        }
    }

    #[test]
    fn refinement_self() {
        let shape = scalar_shape();
        let k = diag_operator(&shape, 2, &[vec![3.0, 1.0]]);
        let pp = common_refinement(&k, &k).unwrap();
        assert_eq!(pp.traces, vec![1.0, 1.0]);
        let u = pairing_unitary(&pp).unwrap();
        let id = ModuleOperator::identity(&shape, 2);
        assert!(u.sub(&id).unwrap().operator_norm() < 1e-12);
    }

    #[test]
    fn refinement_scalar_pair() {
        let shape = scalar_shape();
        let k1 = diag_operator(&shape, 2, &[vec![3.0, 1.0]]);
        let k2 = diag_operator(&shape, 2, &[vec![2.9, 1.1]]);
        let pp = common_refinement(&k1, &k2).unwrap();
        assert_eq!(pp.traces, vec![1.0, 1.0]);
    }

    #[test]
    fn refinement_merged_breakpoints() {
        let shape = m2();
        let k1 = diag_operator(&shape, 2, &[vec![4.0, 3.0, 2.0, 1.0]]);
        let k2 = diag_operator(&shape, 2, &[vec![4.0, 4.0, 1.0, 1.0]]);
        let pp = common_refinement(&k1, &k2).unwrap();
        assert_eq!(pp.traces, vec![0.5, 0.5, 0.5, 0.5]);
        // partition of unity on both sides
        for parts in [&pp.parts1, &pp.parts2] {
            let mut sum = ModuleOperator::zero(&shape, 2);
            for p in parts.iter() {
                sum = sum.add(p).unwrap();
            }
            assert!(
                sum.sub(&ModuleOperator::identity(&shape, 2))
                    .unwrap()
                    .operator_norm()
                    < 1e-9
            );
        }
    }

    #[test]
    fn refinement_random_conjugation() {
        let shape = AlgebraShape::new(vec![2, 3], Some(vec![0.25, 0.75])).unwrap();
        let mut rng = SplitMix64::new(28);
        for _ in 0..10 {
            let k1 = mrandom::positive_operator(&shape, 2, 0.1, &mut rng);
            let k2 = mrandom::positive_operator(&shape, 2, 0.1, &mut rng);
            let pp = common_refinement(&k1, &k2).unwrap();
            // matched traces and subordination
            let total: f64 = pp.traces.iter().sum();
            assert!((total - 2.0).abs() < 1e-10);
            let u = pairing_unitary(&pp).unwrap();
            let udefect = u
                .adjoint()
                .mul(&u)
                .unwrap()
                .sub(&ModuleOperator::identity(&shape, 2))
                .unwrap()
                .operator_norm();
            assert!(udefect < 1e-9);
            for (r1, r2) in pp.parts1.iter().zip(&pp.parts2) {
                let carried = u.mul(r2).unwrap().mul(&u.adjoint()).unwrap();
                assert!(carried.sub(r1).unwrap().operator_norm() < 1e-8);
                assert!((r1.tau_bar() - r2.tau_bar()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn match_identical_and_shift() {
        let shape = m2();
        let mut rng = SplitMix64::new(29);
        let k = mrandom::positive_operator(&shape, 2, 0.1, &mut rng);
        let (_, _, rep) = match_eigenvalues(&k, &k).unwrap();
        assert!(rep.delta < 1e-12);
        assert!(rep.eigenvalue_bounds.iter().all(|&b| b < 1e-9));
        assert!(rep.conjugation_defect < 1e-9);

        let delta = 0.25;
        let k2 = k
            .add(&ModuleOperator::identity(&shape, 2).scale(Complex64::new(delta, 0.0)))
            .unwrap();
        let (_, _, rep) = match_eigenvalues(&k2, &k).unwrap();
        for &b in &rep.eigenvalue_bounds {
            assert!((b - delta).abs() < 1e-9);
        }
    }

    #[test]
    fn weyl_sweep() {
        let shape = AlgebraShape::new(vec![2, 3], Some(vec![0.25, 0.75])).unwrap();
        let mut rng = SplitMix64::new(30);
        for &delta in &[1e-1, 1e-2, 1e-3] {
            for _ in 0..10 {
                let k1 = mrandom::positive_operator(&shape, 2, 0.5, &mut rng);
                let h = mrandom::hermitian_operator(&shape, 2, &mut rng);
                let e = h.scale(Complex64::new(delta / h.operator_norm(), 0.0));
                let k2 = k1.add(&e).unwrap();
                let (_, _, rep) = match_eigenvalues(&k1, &k2).unwrap();
                for &b in &rep.eigenvalue_bounds {
                    assert!(b <= rep.delta + 1e-8);
                }
                assert!(rep.conjugation_defect <= rep.delta + 1e-8);
            }
        }
    }
}
