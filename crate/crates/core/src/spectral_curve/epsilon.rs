//! Choice of a perturbation size `ε` small enough that the topology of the
//! perturbed index sets has settled.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::mesh::SphereMesh;
use super::regions::{extract_regions, validate_jump, JumpReport, RegionMap};
use super::trace::{trace_curve, CurveTrace};
use crate::error::{Error, Result};
use crate::numfmt::serialize_f64;
use crate::quadform::{symmetric_eigenvalues, Pencil, QuadraticForm, DEFAULT_ZERO_TOL};

pub const MAX_HALVINGS: usize = 40;
const START_FRACTION: f64 = 0.1;
const RADIUS_FLOOR: f64 = 1e-3;
/// Accepted `ε` stays below this fraction of the smallest positive critical value.
const CRITICAL_FRACTION: f64 = 0.5;
/// Halvings allowed past the first settled value while looking for one under the critical bound.
const EXTRA_HALVINGS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonStep {
    #[serde(serialize_with = "serialize_f64")]
    pub epsilon: f64,
    pub oval_count: usize,
    pub labels: Vec<usize>,
    pub jumps_valid: bool,
}

impl EpsilonStep {
    fn agrees_with(&self, other: &EpsilonStep) -> bool {
        self.jumps_valid && other.jumps_valid && self.oval_count == other.oval_count && self.labels == other.labels
    }
}

#[derive(Debug, Clone)]
pub struct Stabilized {
    pub epsilon: f64,
    /// Number of halvings from the starting value.
    pub halvings: usize,
    pub history: Vec<EpsilonStep>,
    /// `CRITICAL_FRACTION` times the smallest positive critical value of the
    /// generalized eigenvalues of `(ωQ, P)` on the mesh.
    pub critical_bound: f64,
    /// Whether the accepted value and its predecessor both lie under `critical_bound`.
    pub below_critical_bound: bool,
    pub trace: CurveTrace,
    pub regions: RegionMap,
    pub jumps: JumpReport,
}

/// Largest spectral radius of `ωQ` over the mesh vertices.
pub fn max_spectral_radius(pencil: &Pencil, mesh: &SphereMesh) -> Result<f64> {
    if pencil.k() != 2 {
        return Err(Error::UnsupportedK { k: pencil.k() });
    }
    let mut best = 0.0f64;
    for &omega in mesh.vertices() {
        best = best.max(symmetric_eigenvalues(&pencil.combine_matrix(&omega))?.amax());
    }
    Ok(best)
}

/// Starting value `0.1 · max(max_ω ρ(ωQ), 1e-3)`.
pub fn starting_epsilon(pencil: &Pencil, mesh: &SphereMesh) -> Result<f64> {
    Ok(START_FRACTION * max_spectral_radius(pencil, mesh)?.max(RADIUS_FLOOR))
}

/// Generalized eigenvalues `μ₁ ≤ … ≤ μ_{n+1}` of `(ωQ, P)` at every mesh vertex,
/// flattened row by row. `i⁻(ωQ − εP)` is the number of `μ_j` below `ε`.
pub fn generalized_eigenvalues(pencil: &Pencil, p: &QuadraticForm, mesh: &SphereMesh) -> Result<Vec<f64>> {
    if pencil.k() != 2 {
        return Err(Error::UnsupportedK { k: pencil.k() });
    }
    if p.dim() != pencil.dim() {
        return Err(Error::DimensionMismatch {
            expected: pencil.dim(),
            found: p.dim(),
        });
    }
    let eig = SymmetricEigen::new(p.matrix().clone());
    if eig.eigenvalues.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "perturbation form is not positive definite".into(),
        ));
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt().recip()));
    let root = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
    let mut out = Vec::with_capacity(mesh.vertices().len() * pencil.dim());
    for &omega in mesh.vertices() {
        let m = &root * pencil.combine_matrix(&omega) * &root;
        let mut values: Vec<f64> = symmetric_eigenvalues(&(&m + m.transpose()).scale(0.5))?
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        out.extend(values);
    }
    Ok(out)
}

/// Smallest critical value above `floor` among the branches `μ_j`, found by
/// comparing each vertex with its link; infinite if there is none. Vertices
/// where a second branch also lies within the link spread of zero are skipped:
/// there `ωQ` is close to a multiple zero eigenvalue and the mesh cannot tell
/// the critical value from zero.
pub fn smallest_positive_critical_value(values: &[f64], dim: usize, mesh: &SphereMesh, floor: f64) -> f64 {
    let links = mesh.vertex_links();
    let mut best = f64::INFINITY;
    for j in 0..dim {
        let at = |v: usize| values[v * dim + j];
        // ties broken by vertex index
        let above = |w: usize, v: usize| (at(w), w) > (at(v), v);
        for (v, link) in links.iter().enumerate() {
            let value = at(v);
            if value <= floor || value >= best {
                continue;
            }
            let changes = (0..link.len())
                .filter(|&i| above(link[i], v) != above(link[(i + 1) % link.len()], v))
                .count();
            if changes == 2 {
                continue;
            }
            let spread = link.iter().fold(0.0f64, |m, &w| m.max((at(w) - value).abs()));
            let crowded = value <= spread && (0..dim).any(|i| i != j && values[v * dim + i].abs() <= spread);
            if !crowded {
                best = value;
            }
        }
    }
    best
}

pub fn critical_bound(pencil: &Pencil, p: &QuadraticForm, mesh: &SphereMesh) -> Result<f64> {
    let values = generalized_eigenvalues(pencil, p, mesh)?;
    let dim = pencil.dim();
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = DEFAULT_ZERO_TOL * scale.max(f64::MIN_POSITIVE);
    Ok(CRITICAL_FRACTION * smallest_positive_critical_value(&values, dim, mesh, floor))
}

/// Halves `ε` until two consecutive values give the same oval count, the same
/// multiset of region labels, and unit index jumps. When the first such pair
/// lies above the critical bound, keeps halving for a settled pair below it
/// and falls back to the first pair if none turns up.
pub fn choose_epsilon(pencil: &Pencil, p: &QuadraticForm, mesh: &SphereMesh) -> Result<Stabilized> {
    choose_epsilon_from(pencil, p, mesh, starting_epsilon(pencil, mesh)?)
}

pub fn choose_epsilon_from(pencil: &Pencil, p: &QuadraticForm, mesh: &SphereMesh, start: f64) -> Result<Stabilized> {
    if !(start > 0.0 && start.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "starting epsilon {start} must be positive"
        )));
    }
    let bound = critical_bound(pencil, p, mesh)?;
    let mut history: Vec<EpsilonStep> = Vec::new();
    let mut first: Option<Stabilized> = None;
    let mut epsilon = start;
    for halvings in 0..=MAX_HALVINGS {
        if first.as_ref().is_some_and(|f| halvings > f.halvings + EXTRA_HALVINGS) {
            break;
        }
        let trace = trace_curve(pencil, p, epsilon, mesh)?;
        let regions = extract_regions(&trace, mesh, pencil, p, epsilon)?;
        let jumps = validate_jump(&trace, mesh, &regions);
        let step = EpsilonStep {
            epsilon,
            oval_count: trace.ovals.len(),
            labels: regions.label_multiset(),
            jumps_valid: jumps.valid,
        };
        let settled = history.last().is_some_and(|prev| prev.agrees_with(&step));
        let below = 2.0 * epsilon <= bound;
        history.push(step);
        if settled && (below || first.is_none()) {
            let found = Stabilized {
                epsilon,
                halvings,
                history: history.clone(),
                critical_bound: bound,
                below_critical_bound: below,
                trace,
                regions,
                jumps,
            };
            if below {
                return Ok(Stabilized { history, ..found });
            }
            first = Some(found);
        }
        epsilon *= 0.5;
    }
    match first {
        Some(found) => Ok(Stabilized { history, ..found }),
        None => Err(Error::NoStabilization {
            halvings: MAX_HALVINGS,
            last_epsilon: epsilon * 2.0,
        }),
    }
}
