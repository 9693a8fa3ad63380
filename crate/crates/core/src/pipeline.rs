//! End-to-end analysis of a three-form pencil: perturbation, curve tracing,
//! regions, filtration and bounds, with retries and authority flags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::betti_bounds::{build_filtration, BoundReport, OmegaLevel};
use crate::error::{Error, Result};
use crate::numfmt::{serialize_f64, serialize_matrix, serialize_opt_f64, serialize_vec_f64};
use crate::quadform::{inertia_eigen, random_posdef, Pencil, QuadraticForm, DEFAULT_ZERO_TOL};
use crate::spectral_curve::epsilon::{choose_epsilon, EpsilonStep};
use crate::spectral_curve::mesh::{build_mesh, SphereMesh, MAX_DEPTH};
use crate::spectral_curve::regions::{extract_regions, validate_jump, JumpReport, RegionMap};
use crate::spectral_curve::trace::{trace_curve, CurveTrace};

pub const DEFAULT_DEPTH: usize = 6;
pub const DEFAULT_ATTEMPTS: usize = 10;
/// Sample count for the inertia-only summary of pencils with `k ≠ 2`.
pub const INERTIA_SAMPLES: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub depth: usize,
    pub seed: u64,
    /// Skips stabilization and traces at this value.
    pub epsilon: Option<f64>,
    /// Perturbation draws tried before giving up.
    pub max_attempts: usize,
    /// Re-trace at `depth + 1` with the same `ε` and `P`.
    pub check_refinement: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            depth: DEFAULT_DEPTH,
            seed: 0,
            epsilon: None,
            max_attempts: DEFAULT_ATTEMPTS,
            check_refinement: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "mesh depth {} exceeds {MAX_DEPTH}",
                self.depth
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon override must be positive, got {eps}"
                )));
            }
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter(
                "at least one perturbation attempt is needed".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedAttempt {
    pub attempt: usize,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stabilization {
    pub halvings: usize,
    pub history: Vec<EpsilonStep>,
    #[serde(serialize_with = "serialize_f64")]
    pub critical_bound: f64,
    pub below_critical_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementCheck {
    pub depth: usize,
    pub oval_count: Option<usize>,
    pub labels: Option<Vec<usize>>,
    pub jumps_valid: bool,
    pub stable: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Authority {
    pub jumps_valid: bool,
    /// `ε` came from stabilization below the critical bound, or was given.
    pub epsilon_settled: bool,
    /// `None` when the refinement check was skipped.
    pub refinement_stable: Option<bool>,
    pub authoritative: bool,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub seed: u64,
    pub depth: usize,
    pub attempt: usize,
    pub p: QuadraticForm,
    pub mesh: SphereMesh,
    pub epsilon: f64,
    pub stabilization: Option<Stabilization>,
    pub trace: CurveTrace,
    pub regions: RegionMap,
    pub jumps: JumpReport,
    pub levels: Vec<OmegaLevel>,
    pub bounds: BoundReport,
    pub refinement: Option<RefinementCheck>,
    pub failed_attempts: Vec<FailedAttempt>,
}

impl Analysis {
    pub fn authority(&self) -> Authority {
        let jumps_valid = self.jumps.valid;
        let epsilon_settled = self.stabilization.as_ref().is_none_or(|s| s.below_critical_bound);
        let refinement_stable = self.refinement.as_ref().map(|r| r.stable);
        Authority {
            jumps_valid,
            epsilon_settled,
            refinement_stable,
            authoritative: jumps_valid && epsilon_settled && refinement_stable != Some(false),
        }
    }

    pub fn report(&self) -> AnalysisReport {
        AnalysisReport {
            n: self.bounds.n,
            k: 2,
            seed: self.seed,
            mesh_depth: self.depth,
            epsilon_used: self.epsilon,
            epsilon_source: if self.stabilization.is_some() {
                "stabilized"
            } else {
                "override"
            },
            stabilization_iterations: self.stabilization.as_ref().map(|s| s.halvings),
            stabilization: self.stabilization.clone(),
            perturbation_attempt: self.attempt,
            perturbation: matrix_rows(&self.p),
            failed_attempts: self.failed_attempts.clone(),
            bounds: self.bounds.clone(),
            levels: self.levels.clone(),
            ovals: self
                .trace
                .ovals
                .iter()
                .enumerate()
                .map(|(id, o)| OvalSummary {
                    id,
                    level: o.level,
                    points: o.nodes.len(),
                })
                .collect(),
            regions: self
                .regions
                .regions
                .iter()
                .enumerate()
                .map(|(id, r)| RegionSummary {
                    id,
                    label: r.label,
                    representative: self.mesh.vertices()[r.representative].to_vec(),
                    vertex_count: r.vertex_count,
                })
                .collect(),
            jumps: self.jumps.clone(),
            refinement: self.refinement.clone(),
            authority: self.authority(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvalSummary {
    pub id: usize,
    pub level: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub id: usize,
    pub label: usize,
    #[serde(serialize_with = "serialize_vec_f64")]
    pub representative: Vec<f64>,
    pub vertex_count: usize,
}

/// Everything a run produces, in a form with deterministic serialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub mesh_depth: usize,
    #[serde(serialize_with = "serialize_f64")]
    pub epsilon_used: f64,
    pub epsilon_source: &'static str,
    pub stabilization_iterations: Option<usize>,
    pub stabilization: Option<Stabilization>,
    pub perturbation_attempt: usize,
    #[serde(serialize_with = "serialize_matrix")]
    pub perturbation: Vec<Vec<f64>>,
    pub failed_attempts: Vec<FailedAttempt>,
    pub bounds: BoundReport,
    pub levels: Vec<OmegaLevel>,
    pub ovals: Vec<OvalSummary>,
    pub regions: Vec<RegionSummary>,
    pub jumps: JumpReport,
    pub refinement: Option<RefinementCheck>,
    pub authority: Authority,
}

pub fn matrix_rows(form: &QuadraticForm) -> Vec<Vec<f64>> {
    let m = form.matrix();
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Perturbation and mesh for attempt `a`: a fresh `P` each time, and from the
/// second attempt on a slightly rotated mesh.
pub fn attempt_setup(base: &SphereMesh, dim: usize, seed: u64, attempt: usize) -> (QuadraticForm, SphereMesh) {
    let s = seed.wrapping_add(attempt as u64);
    let mesh = if attempt == 0 { base.clone() } else { base.rotated(s) };
    (random_posdef(dim, s), mesh)
}

fn retryable(err: &Error) -> bool {
    matches!(
        err,
        Error::VertexOnCurve { .. }
            | Error::LabelConflict { .. }
            | Error::NoStabilization { .. }
            | Error::HarnackExceeded { .. }
            | Error::InvalidParameter(_)
    )
}

struct Traced {
    epsilon: f64,
    stabilization: Option<Stabilization>,
    trace: CurveTrace,
    regions: RegionMap,
    jumps: JumpReport,
}

fn trace_once(pencil: &Pencil, p: &QuadraticForm, mesh: &SphereMesh, epsilon: Option<f64>) -> Result<Traced> {
    match epsilon {
        Some(eps) => {
            let trace = trace_curve(pencil, p, eps, mesh)?;
            let regions = extract_regions(&trace, mesh, pencil, p, eps)?;
            let jumps = validate_jump(&trace, mesh, &regions);
            Ok(Traced {
                epsilon: eps,
                stabilization: None,
                trace,
                regions,
                jumps,
            })
        }
        None => {
            let s = choose_epsilon(pencil, p, mesh)?;
            Ok(Traced {
                epsilon: s.epsilon,
                stabilization: Some(Stabilization {
                    halvings: s.halvings,
                    history: s.history,
                    critical_bound: s.critical_bound,
                    below_critical_bound: s.below_critical_bound,
                }),
                trace: s.trace,
                regions: s.regions,
                jumps: s.jumps,
            })
        }
    }
}

fn refinement_check(
    pencil: &Pencil,
    p: &QuadraticForm,
    mesh: &SphereMesh,
    epsilon: f64,
    regions: &RegionMap,
    oval_count: usize,
) -> RefinementCheck {
    let depth = mesh.depth() + 1;
    let result = build_mesh(depth).map(|fine| {
        // same rotation as the coarse mesh: its first 12 vertices are the icosahedron's
        rotate_like(&fine, mesh)
    });
    let outcome = result.and_then(|fine| {
        let trace = trace_curve(pencil, p, epsilon, &fine)?;
        let map = extract_regions(&trace, &fine, pencil, p, epsilon)?;
        let jumps = validate_jump(&trace, &fine, &map);
        Ok((trace.ovals.len(), map.label_multiset(), jumps.valid))
    });
    match outcome {
        Ok((count, labels, valid)) => RefinementCheck {
            depth,
            stable: valid && count == oval_count && labels == regions.label_multiset(),
            oval_count: Some(count),
            labels: Some(labels),
            jumps_valid: valid,
            error: None,
        },
        Err(e) => RefinementCheck {
            depth,
            oval_count: None,
            labels: None,
            jumps_valid: false,
            stable: false,
            error: Some(e.to_string()),
        },
    }
}

/// Applies to `fine` the rotation that carries the unrotated icosahedron onto
/// the first 12 vertices of `like`.
fn rotate_like(fine: &SphereMesh, like: &SphereMesh) -> SphereMesh {
    use nalgebra::{Matrix3, Vector3};
    let base = build_mesh(0).expect("depth 0");
    let col = |v: [f64; 3]| Vector3::new(v[0], v[1], v[2]);
    // icosahedron vertices 0, 1, 4 are linearly independent
    let idx = [0, 1, 4];
    let a = Matrix3::from_columns(&idx.map(|i| col(base.vertices()[i])));
    let b = Matrix3::from_columns(&idx.map(|i| col(like.vertices()[i])));
    let rot = b * a.try_inverse().expect("independent vertices");
    fine.transformed(|v| {
        let r = rot * col(v);
        [r.x, r.y, r.z]
    })
}

/// Runs the whole curve pipeline on a `k = 2` pencil.
pub fn analyze(pencil: &Pencil, config: &PipelineConfig) -> Result<Analysis> {
    config.validate()?;
    if pencil.k() != 2 {
        return Err(Error::UnsupportedK { k: pencil.k() });
    }
    let base = build_mesh(config.depth)?;
    let mut failed = Vec::new();
    let mut last_err = None;
    for attempt in 0..config.max_attempts {
        let (p, mesh) = attempt_setup(&base, pencil.dim(), config.seed, attempt);
        let outcome = trace_once(pencil, &p, &mesh, config.epsilon).and_then(|t| {
            if !t.jumps.valid && config.epsilon.is_some() {
                return Err(Error::InvalidParameter(format!(
                    "index jumps other than one at epsilon {}",
                    t.epsilon
                )));
            }
            let levels = build_filtration(&t.regions, &mesh)?;
            let bounds = BoundReport::new(&t.regions, &levels, t.epsilon, config.depth);
            bounds.check_harnack()?;
            Ok((t, levels, bounds))
        });
        match outcome {
            Ok((t, levels, bounds)) => {
                let refinement = (config.check_refinement && config.depth < MAX_DEPTH)
                    .then(|| refinement_check(pencil, &p, &mesh, t.epsilon, &t.regions, t.trace.ovals.len()));
                return Ok(Analysis {
                    seed: config.seed,
                    depth: config.depth,
                    attempt,
                    p,
                    mesh,
                    epsilon: t.epsilon,
                    stabilization: t.stabilization,
                    trace: t.trace,
                    regions: t.regions,
                    jumps: t.jumps,
                    levels,
                    bounds,
                    refinement,
                    failed_attempts: failed,
                });
            }
            Err(e) if retryable(&e) => {
                failed.push(FailedAttempt {
                    attempt,
                    code: e.code(),
                    message: e.to_string(),
                });
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// `μ` and `ν` read off sampled points of `S^k`, for pencils outside the curve pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InertiaSummary {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub samples: usize,
    pub mu: usize,
    pub nu: usize,
    /// `n + 1` when every sample has the same positive index.
    pub constant_index_bound: Option<usize>,
    #[serde(serialize_with = "serialize_opt_f64")]
    pub min_abs_eigenvalue: Option<f64>,
}

pub fn inertia_summary(pencil: &Pencil, samples: usize, seed: u64) -> Result<InertiaSummary> {
    let dim = pencil.k() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(samples + 2 * dim);
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = sign;
            points.push(e);
        }
    }
    while points.len() < samples + 2 * dim {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            points.push(g.iter().map(|x| x / len).collect());
        }
    }
    let (mut mu, mut nu) = (0usize, usize::MAX);
    let mut min_abs = f64::INFINITY;
    for omega in &points {
        let form = pencil.combine(omega)?;
        let eig = form.eigenvalues()?;
        min_abs = eig.iter().fold(min_abs, |m, x| m.min(x.abs()));
        let positive = inertia_eigen(&form, DEFAULT_ZERO_TOL)?.positive;
        mu = mu.max(positive);
        nu = nu.min(positive);
    }
    Ok(InertiaSummary {
        n: pencil.n(),
        k: pencil.k(),
        seed,
        samples: points.len(),
        mu,
        nu,
        constant_index_bound: (mu == nu).then_some(pencil.n() + 1),
        min_abs_eigenvalue: min_abs.is_finite().then_some(min_abs),
    })
}
