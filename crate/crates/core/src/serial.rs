//! On-disk formats: JSON for algebra elements, module vectors and
//! operators, diagonalizations and iteration traces; CSV for the spectral
//! scale, band functions and flux sweeps.
//!
//! Complex entries are `[re, im]` pairs, matrices row-major. JSON numbers
//! go through serde_json's shortest-round-trip formatter, so write, read,
//! write is byte-identical. CSV values are printed with 17 significant
//! digits, `.` decimal, no locale.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, AlgebraShape};
use crate::diag::{Diagonalization, PerturbationReport, SpectralScale};
use crate::eig::CMatrix;
use crate::error::{CoreError, Result};
use crate::hilbert::{ModuleOperator, ModuleVector};
use crate::weak::{BandSystem, IterationTrace, OperatorField, SelectionReport};

fn parse_err(e: impl std::fmt::Display) -> CoreError {
    CoreError::ParseError(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct ShapeJson {
    dims: Vec<usize>,
    weights: Vec<f64>,
}

impl ShapeJson {
    fn from_shape(shape: &AlgebraShape) -> ShapeJson {
        ShapeJson {
            dims: shape.block_dims().to_vec(),
            weights: shape.trace_weights().to_vec(),
        }
    }

    fn to_shape(&self) -> Result<AlgebraShape> {
        AlgebraShape::new(self.dims.clone(), Some(self.weights.clone()))
    }
}

type RowsJson = Vec<Vec<[f64; 2]>>;

fn matrix_to_rows(m: &CMatrix) -> RowsJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn rows_to_matrix(rows: &RowsJson) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::ParseError("ragged matrix rows".into()));
    }
    for row in rows {
        for &[re, im] in row {
            if !re.is_finite() || !im.is_finite() {
                return Err(CoreError::NonFiniteEntry);
            }
        }
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

#[derive(Serialize, Deserialize)]
pub struct ElementJson {
    shape: ShapeJson,
    blocks: Vec<RowsJson>,
}

pub fn element_to_json(a: &AlgebraElement) -> ElementJson {
    ElementJson {
        shape: ShapeJson::from_shape(a.shape()),
        blocks: a.blocks().iter().map(matrix_to_rows).collect(),
    }
}

pub fn element_from_json(j: &ElementJson) -> Result<AlgebraElement> {
    let shape = j.shape.to_shape()?;
    let blocks = j.blocks.iter().map(rows_to_matrix).collect::<Result<_>>()?;
    AlgebraElement::from_blocks(shape, blocks)
}

#[derive(Serialize, Deserialize)]
pub struct VectorJson {
    shape: ShapeJson,
    n: usize,
    blocks: Vec<RowsJson>,
}

pub fn vector_to_json(x: &ModuleVector) -> VectorJson {
    VectorJson {
        shape: ShapeJson::from_shape(x.shape()),
        n: x.rank(),
        blocks: x.blocks().iter().map(matrix_to_rows).collect(),
    }
}

pub fn vector_from_json(j: &VectorJson) -> Result<ModuleVector> {
    let shape = j.shape.to_shape()?;
    let blocks = j.blocks.iter().map(rows_to_matrix).collect::<Result<_>>()?;
    ModuleVector::from_blocks(shape, j.n, blocks)
}

#[derive(Serialize, Deserialize)]
pub struct OperatorJson {
    shape: ShapeJson,
    n: usize,
    /// Advisory; recomputed and cross-checked on load.
    hermitian: bool,
    blocks: Vec<RowsJson>,
}

const HERMITIAN_FLAG_TOL: f64 = 1e-10;

pub fn operator_to_json(k: &ModuleOperator) -> OperatorJson {
    let hermitian = k.hermitian_defect() <= HERMITIAN_FLAG_TOL * k.operator_norm().max(1.0);
    OperatorJson {
        shape: ShapeJson::from_shape(k.shape()),
        n: k.rank(),
        hermitian,
        blocks: k.blocks().iter().map(matrix_to_rows).collect(),
    }
}

pub fn operator_from_json(j: &OperatorJson) -> Result<ModuleOperator> {
    let shape = j.shape.to_shape()?;
    let blocks = j.blocks.iter().map(rows_to_matrix).collect::<Result<_>>()?;
    let k = ModuleOperator::from_blocks(shape, j.n, blocks)?;
    let actually = k.hermitian_defect() <= HERMITIAN_FLAG_TOL * k.operator_norm().max(1.0);
    if j.hermitian && !actually {
        return Err(CoreError::ParseError(
            "operator flagged hermitian but the stored entries are not".into(),
        ));
    }
    Ok(k)
}

#[derive(Serialize, Deserialize)]
pub struct DiagonalizationJson {
    eigenvectors: Vec<VectorJson>,
    eigenvalues: Vec<ElementJson>,
    ordering_margins: Vec<Vec<f64>>,
    residual: f64,
}

pub fn diagonalization_to_json(d: &Diagonalization) -> DiagonalizationJson {
    DiagonalizationJson {
        eigenvectors: d.eigenvectors.iter().map(vector_to_json).collect(),
        eigenvalues: d.eigenvalues.iter().map(element_to_json).collect(),
        ordering_margins: d.ordering_margins.clone(),
        residual: d.residual,
    }
}

pub fn diagonalization_from_json(j: &DiagonalizationJson) -> Result<Diagonalization> {
    Ok(Diagonalization {
        eigenvectors: j
            .eigenvectors
            .iter()
            .map(vector_from_json)
            .collect::<Result<_>>()?,
        eigenvalues: j
            .eigenvalues
            .iter()
            .map(element_from_json)
            .collect::<Result<_>>()?,
        ordering_margins: j.ordering_margins.clone(),
        residual: j.residual,
    })
}

#[derive(Serialize, Deserialize)]
pub struct IterationStepJson {
    pub eps: f64,
    pub approximation_error: f64,
    pub step_distance: f64,
}

#[derive(Serialize, Deserialize)]
pub struct IterationTraceJson {
    pub steps: Vec<IterationStepJson>,
    pub limits: Vec<ElementJson>,
    pub final_residual: f64,
}

pub fn trace_to_json(t: &IterationTrace) -> IterationTraceJson {
    IterationTraceJson {
        steps: t
            .steps
            .iter()
            .map(|s| IterationStepJson {
                eps: s.eps,
                approximation_error: s.approximation_error,
                step_distance: s.step_distance,
            })
            .collect(),
        limits: t.limits.iter().map(element_to_json).collect(),
        final_residual: t.final_residual,
    }
}

#[derive(Serialize, Deserialize)]
pub struct PerturbationJson {
    pub delta: f64,
    pub eigenvalue_bounds: Vec<f64>,
    pub conjugation_defect: f64,
}

pub fn perturbation_to_json(r: &PerturbationReport) -> PerturbationJson {
    PerturbationJson {
        delta: r.delta,
        eigenvalue_bounds: r.eigenvalue_bounds.clone(),
        conjugation_defect: r.conjugation_defect,
    }
}

#[derive(Serialize, Deserialize)]
pub struct SelectionReportJson {
    pub grid_spacing: f64,
    pub lipschitz: f64,
    pub modulus: f64,
    pub continuity_bound: f64,
    pub continuity_ok: bool,
    pub degeneracy_count: usize,
    pub degeneracies: Vec<(usize, usize, usize)>,
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    pub symmetry_defect: f64,
    pub hausdorff_defect: f64,
}

pub fn selection_report_to_json(r: &SelectionReport, bands: &BandSystem) -> SelectionReportJson {
    SelectionReportJson {
        grid_spacing: r.grid_spacing,
        lipschitz: r.lipschitz,
        modulus: r.modulus,
        continuity_bound: r.continuity_bound,
        continuity_ok: r.continuity_ok,
        degeneracy_count: r.degeneracy_count,
        degeneracies: bands.degeneracies.clone(),
        spectrum_min: r.spectrum_min,
        spectrum_max: r.spectrum_max,
        symmetry_defect: r.symmetry_defect,
        hausdorff_defect: r.hausdorff_defect,
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(parse_err)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str<'a, T: Deserialize<'a>>(s: &'a str) -> Result<T> {
    serde_json::from_str(s).map_err(parse_err)
}

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `alpha,epsilon` rows sampled at atom breakpoints plus midpoints.
pub fn scale_to_csv(scale: &SpectralScale) -> String {
    let mut out = String::from("alpha,epsilon\n");
    for alpha in scale.sample_alphas() {
        out.push_str(&format!("{},{}\n", fmt_f64(alpha), fmt_f64(scale.eval(alpha))));
    }
    out
}

/// `k1,k2,band_index,value` rows in row-major grid order.
pub fn bands_to_csv(field: &OperatorField, bands: &BandSystem) -> String {
    let mut out = String::from("k1,k2,band_index,value\n");
    for i1 in 0..field.grid_size {
        for i2 in 0..field.grid_size {
            let (k1, k2) = field.point(i1, i2);
            for b in 0..bands.q {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f64(k1),
                    fmt_f64(k2),
                    b,
                    fmt_f64(bands.band(i1, i2, b))
                ));
            }
        }
    }
    out
}

/// `p,q,value` rows for a flux sweep, one row per union-spectrum value.
pub fn butterfly_to_csv(rows: &[(usize, usize, f64)]) -> String {
    let mut out = String::from("p,q,value\n");
    for &(p, q, v) in rows {
        out.push_str(&format!("{p},{q},{}\n", fmt_f64(v)));
    }
    out
}
