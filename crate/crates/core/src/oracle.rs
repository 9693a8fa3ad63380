//! Brute-force estimate of the total Betti number of the base locus
//! `X = {q₀ = … = q_k = 0} ⊂ ℝPⁿ` for small `n`, used to check the bounds.
//!
//! Directions are covered by the cube faces `{x_i = 1}`; each face is
//! subdivided into boxes, and a box is dropped as soon as a second-order
//! Taylor bound shows some `q_l` has no zero on it. Survivors at the finest
//! level are projected onto `X` by Gauss–Newton, clustered up to sign, and each
//! cluster is classified as a point or a closed curve.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::betti_bounds::BoundReport;
use crate::error::{Error, Result};
use crate::numfmt::{format_f64, serialize_opt_f64};
use crate::quadform::Pencil;

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;
pub const MAX_RESOLUTION: usize = 9;
pub const MAX_DIM: usize = 5;
pub const CELL_BUDGET: usize = 10_000_000;
const NEWTON_STEPS: usize = 50;
/// Largest extent of a cluster counted as one isolated point; Newton lands on
/// such a point from every nearby cell.
const POINT_SPREAD: f64 = 1e-4;
/// Single-linkage radius in cell diameters.
const LINK_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VarietySample {
    pub n: usize,
    pub resolution: usize,
    /// Unit vectors with canonical sign, pairwise distinct.
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub cells_tested: usize,
    pub budget_exceeded: bool,
    /// Diameter of a finest-level cell.
    pub cell_diameter: f64,
}

#[derive(Clone)]
struct Cell {
    face: usize,
    center: Vec<f64>,
}

/// Surviving cells per level `0..=max_level`; stops early past the budget.
struct Subdivision {
    levels: Vec<Vec<Cell>>,
    cells_tested: usize,
    budget_exceeded: bool,
}

/// Finest level used when none is given: curves in ℝP⁴ need one more halving
/// than point sets to be classified.
pub fn default_resolution(dim: usize) -> usize {
    if dim >= 5 {
        MAX_RESOLUTION
    } else {
        8
    }
}

fn check_oracle_input(pencil: &Pencil, resolution: usize) -> Result<()> {
    if pencil.dim() > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "the oracle handles n + 1 ≤ {MAX_DIM}, got {}",
            pencil.dim()
        )));
    }
    if resolution == 0 || resolution > MAX_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "oracle resolution must lie in 1..={MAX_RESOLUTION}, got {resolution}"
        )));
    }
    Ok(())
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}

/// Whether some form is provably nonzero on the box `center ± h` (free
/// coordinates only; coordinate `face` is pinned to 1).
fn excluded(mats: &[DMatrix<f64>], abs_mats: &[DMatrix<f64>], face: usize, center: &[f64], h: f64) -> bool {
    let n = center.len();
    mats.iter().zip(abs_mats).any(|(m, a)| {
        let mut value = 0.0;
        let mut linear = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += m[(i, j)] * center[j];
            }
            value += center[i] * row;
            if i != face {
                linear += row.abs();
            }
        }
        let mut quadratic = 0.0;
        for i in (0..n).filter(|&i| i != face) {
            for j in (0..n).filter(|&j| j != face) {
                quadratic += a[(i, j)];
            }
        }
        value.abs() > 2.0 * h * linear + h * h * quadratic
    })
}

fn subdivide(pencil: &Pencil, max_level: usize) -> Subdivision {
    let dim = pencil.dim();
    let mats: Vec<DMatrix<f64>> = pencil.forms().iter().map(|f| f.matrix().clone()).collect();
    let abs_mats: Vec<DMatrix<f64>> = mats.iter().map(|m| m.abs()).collect();
    let free = dim - 1;
    let mut level: Vec<Cell> = (0..dim)
        .map(|face| {
            let mut center = vec![0.0; dim];
            center[face] = 1.0;
            Cell { face, center }
        })
        .collect();
    let mut levels = Vec::with_capacity(max_level + 1);
    let mut tested = 0usize;
    let mut h = 1.0;
    for depth in 0..=max_level {
        tested += level.len();
        level.retain(|c| !excluded(&mats, &abs_mats, c.face, &c.center, h));
        if tested > CELL_BUDGET {
            levels.push(level);
            return Subdivision {
                levels,
                cells_tested: tested,
                budget_exceeded: true,
            };
        }
        if depth < max_level {
            let half = 0.5 * h;
            let mut next = Vec::with_capacity(level.len() << free);
            for cell in &level {
                for mask in 0..(1usize << free) {
                    let mut center = cell.center.clone();
                    let mut bit = 0;
                    for (i, c) in center.iter_mut().enumerate() {
                        if i == cell.face {
                            continue;
                        }
                        *c += if mask >> bit & 1 == 1 { half } else { -half };
                        bit += 1;
                    }
                    next.push(Cell {
                        face: cell.face,
                        center,
                    });
                }
            }
            levels.push(std::mem::replace(&mut level, next));
            h = half;
        } else {
            levels.push(std::mem::take(&mut level));
        }
    }
    Subdivision {
        levels,
        cells_tested: tested,
        budget_exceeded: false,
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len > 0.0 {
        for x in v.iter_mut() {
            *x /= len;
        }
    }
    len
}

/// First coordinate of magnitude above `1e-12` made positive.
pub fn canonical_sign(x: &mut [f64]) {
    if let Some(&first) = x.iter().find(|v| v.abs() > 1e-12) {
        if first < 0.0 {
            for v in x.iter_mut() {
                *v = -*v;
            }
        }
    }
}

pub fn residual(mats: &[DMatrix<f64>], x: &[f64]) -> f64 {
    mats.iter().fold(0.0f64, |m, q| m.max(quad(q, x).abs()))
}

/// Gauss–Newton on `q_l(x) = 0, (|x|² − 1)/2 = 0` with a pseudo-inverse step.
pub fn project(mats: &[DMatrix<f64>], start: &[f64], tol: f64) -> (Vec<f64>, f64) {
    let n = start.len();
    let k = mats.len();
    let mut x = start.to_vec();
    normalize(&mut x);
    for _ in 0..NEWTON_STEPS {
        let r = residual(mats, &x);
        if r <= 1e-3 * tol {
            break;
        }
        let xv = DVector::from_column_slice(&x);
        let mut jac = DMatrix::<f64>::zeros(k + 1, n);
        let mut f = DVector::<f64>::zeros(k + 1);
        for (l, m) in mats.iter().enumerate() {
            let g = m * &xv;
            f[l] = xv.dot(&g);
            jac.row_mut(l).copy_from(&(2.0 * g).transpose());
        }
        f[k] = 0.5 * (xv.norm_squared() - 1.0);
        jac.row_mut(k).copy_from(&xv.transpose());
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let step = match svd.solve(&f, 1e-12 * smax.max(f64::MIN_POSITIVE)) {
            Ok(s) => s,
            Err(_) => break,
        };
        for i in 0..n {
            x[i] -= step[i];
        }
        normalize(&mut x);
        if step.norm() < 1e-15 {
            break;
        }
    }
    let r = residual(mats, &x);
    (x, r)
}

fn sample_from_cells(mats: &[DMatrix<f64>], cells: &[Cell], dim: usize, h: f64, tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let diameter = cell_diameter(dim, h);
    let voxel = 0.25 * diameter;
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    for cell in cells {
        let (mut x, r) = project(mats, &cell.center, tol);
        if !(r <= tol) {
            continue;
        }
        canonical_sign(&mut x);
        let key: Vec<i64> = x.iter().map(|v| (v / voxel).floor() as i64).collect();
        if seen.contains_key(&key) {
            continue;
        }
        seen.insert(key, points.len());
        points.push(x);
        residuals.push(r);
    }
    // deterministic order independent of the cell walk
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    (
        order.iter().map(|&i| points[i].clone()).collect(),
        order.iter().map(|&i| residuals[i]).collect(),
    )
}

/// Diameter of a face box with half-width `h` in the `n` free coordinates.
pub fn cell_diameter(dim: usize, h: f64) -> f64 {
    2.0 * h * ((dim - 1) as f64).sqrt()
}

fn sample_at(pencil: &Pencil, sub: &Subdivision, level: usize, tol: f64) -> VarietySample {
    let mats: Vec<DMatrix<f64>> = pencil.forms().iter().map(|f| f.matrix().clone()).collect();
    let h = 0.5f64.powi(level as i32);
    let reached = level < sub.levels.len();
    let (points, residuals) = if reached {
        sample_from_cells(&mats, &sub.levels[level], pencil.dim(), h, tol)
    } else {
        (Vec::new(), Vec::new())
    };
    VarietySample {
        n: pencil.n(),
        resolution: level,
        points,
        residuals,
        cells_tested: sub.cells_tested,
        budget_exceeded: sub.budget_exceeded || !reached,
        cell_diameter: cell_diameter(pencil.dim(), h),
    }
}

/// Points of `X` from the cells that survive `resolution` subdivision levels.
pub fn sample_variety(pencil: &Pencil, resolution: usize, residual_tol: f64) -> Result<VarietySample> {
    check_oracle_input(pencil, resolution)?;
    let sub = subdivide(pencil, resolution);
    Ok(sample_at(pencil, &sub, resolution, residual_tol))
}

fn projective_distance(x: &[f64], y: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    minus.min(plus).sqrt()
}

/// Grid hash over canonical points; queries look at both `x` and `−x`.
struct PointIndex<'a> {
    points: &'a [Vec<f64>],
    cell: f64,
    grid: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> PointIndex<'a> {
    fn new(points: &'a [Vec<f64>], cell: f64) -> Self {
        let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(Self::key(p, cell)).or_default().push(i);
        }
        PointIndex { points, cell, grid }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// Indices within `radius ≤ cell` of `x` up to sign, ascending.
    fn within(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let dim = x.len();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for probe in [x, neg.as_slice()] {
            let base = Self::key(probe, self.cell);
            let mut offset = vec![-1i64; dim];
            loop {
                let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
                if let Some(ids) = self.grid.get(&key) {
                    for &i in ids {
                        if projective_distance(&self.points[i], x) <= radius {
                            out.push(i);
                        }
                    }
                }
                let mut d = 0;
                while d < dim && offset[d] == 1 {
                    offset[d] = -1;
                    d += 1;
                }
                if d == dim {
                    break;
                }
                offset[d] += 1;
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Single-linkage components at `radius`, numbered by first point.
fn link_components(points: &[Vec<f64>], radius: f64) -> Vec<usize> {
    let index = PointIndex::new(points, radius);
    let mut uf = crate::union_find::UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for j in index.within(p, radius) {
            uf.union(i, j);
        }
    }
    uf.compact_labels().0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    Point,
    Curve,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterInfo {
    pub size: usize,
    pub kind: ClusterKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    Exact,
    LowerBoundOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BettiEstimate {
    pub b0: usize,
    pub estimate: usize,
    pub flag: EstimateFlag,
    pub clusters: Vec<ClusterInfo>,
    /// Cluster id of every sample point.
    #[serde(skip)]
    pub assignment: Vec<usize>,
    /// Smallest third-from-top singular value of the Jacobian `[Q_l x]` over
    /// the sample, relative to the largest; zero at singular points of `X`.
    #[serde(serialize_with = "serialize_opt_f64")]
    pub min_jacobian_ratio: Option<f64>,
}

fn classify(points: &[Vec<f64>], members: &[usize], link: f64) -> ClusterKind {
    let first = &points[members[0]];
    let extent = members
        .iter()
        .fold(0.0f64, |m, &i| m.max(projective_distance(&points[i], first)));
    if extent <= POINT_SPREAD {
        return ClusterKind::Point;
    }
    if extent <= link {
        // too small to tell a short curve from several nearby points
        return ClusterKind::Unknown;
    }
    let local: Vec<Vec<f64>> = members.iter().map(|&i| points[i].clone()).collect();
    let index = PointIndex::new(&local, link);
    // greedy net with spacing `link`
    let mut covered = vec![false; local.len()];
    let mut net = Vec::new();
    for i in 0..local.len() {
        if covered[i] {
            continue;
        }
        net.push(i);
        for j in index.within(&local[i], link) {
            covered[j] = true;
        }
    }
    let (inner, outer) = (1.5 * link, 3.0 * link);
    for &c in &net {
        let ring: Vec<Vec<f64>> = local
            .iter()
            .filter(|p| {
                let d = projective_distance(p, &local[c]);
                d > inner && d < outer
            })
            .cloned()
            .collect();
        let arcs = link_components(&ring, link);
        let count = arcs.iter().max().map_or(0, |m| m + 1);
        if count != 2 {
            return ClusterKind::Unknown;
        }
    }
    ClusterKind::Curve
}

fn jacobian_ratio(mats: &[DMatrix<f64>], x: &[f64]) -> f64 {
    let n = x.len();
    let xv = DVector::from_column_slice(x);
    let mut jac = DMatrix::<f64>::zeros(mats.len(), n);
    for (l, m) in mats.iter().enumerate() {
        jac.row_mut(l).copy_from(&(m * &xv).transpose());
    }
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 || sv.len() < mats.len() {
        return 0.0;
    }
    sv[mats.len() - 1] / top
}

/// `b₀` by single linkage at three cell diameters; `b = b₀` when every
/// cluster is a point, `2·b₀` when every cluster is a closed curve, and `b₀`
/// flagged as a lower bound otherwise.
pub fn estimate_betti(sample: &VarietySample, pencil: &Pencil) -> BettiEstimate {
    let link = LINK_FACTOR * sample.cell_diameter;
    let assignment = link_components(&sample.points, link);
    let b0 = assignment.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); b0];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    let clusters: Vec<ClusterInfo> = members
        .iter()
        .map(|m| ClusterInfo {
            size: m.len(),
            kind: classify(&sample.points, m, link),
        })
        .collect();
    let (estimate, flag) = if clusters.iter().all(|c| c.kind == ClusterKind::Point) {
        (b0, EstimateFlag::Exact)
    } else if clusters.iter().all(|c| c.kind == ClusterKind::Curve) {
        (2 * b0, EstimateFlag::Exact)
    } else {
        (b0, EstimateFlag::LowerBoundOnly)
    };
    let mats: Vec<DMatrix<f64>> = pencil.forms().iter().map(|f| f.matrix().clone()).collect();
    let min_jacobian_ratio = sample.points.iter().map(|x| jacobian_ratio(&mats, x)).reduce(f64::min);
    BettiEstimate {
        b0,
        estimate,
        flag,
        clusters,
        assignment,
        min_jacobian_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub resolution: usize,
    pub estimate: usize,
    pub flag: EstimateFlag,
    pub b0: usize,
    /// `b₀` one level coarser.
    pub coarse_b0: usize,
    pub coarse_estimate: usize,
    pub cells_tested: usize,
    pub budget_exceeded: bool,
    pub points: usize,
    pub clusters: Vec<ClusterInfo>,
    #[serde(serialize_with = "serialize_opt_f64")]
    pub min_jacobian_ratio: Option<f64>,
    /// Largest `max_l |q_l(x)|` over the finer sample.
    #[serde(serialize_with = "serialize_opt_f64")]
    pub max_residual: Option<f64>,
    pub authoritative: bool,
}

/// Samples at `resolution − 1` and `resolution` and estimates `b(X)` at the
/// finer one. Authoritative when both levels give the same `b₀` and estimate,
/// the estimate is exact, and the cell budget held.
pub fn run_oracle(
    pencil: &Pencil,
    resolution: usize,
    residual_tol: f64,
) -> Result<(OracleResult, VarietySample, BettiEstimate)> {
    check_oracle_input(pencil, resolution)?;
    if resolution < 2 {
        return Err(Error::InvalidParameter("oracle resolution must be at least 2".into()));
    }
    let sub = subdivide(pencil, resolution);
    let coarse = sample_at(pencil, &sub, resolution - 1, residual_tol);
    let fine = sample_at(pencil, &sub, resolution, residual_tol);
    let coarse_est = estimate_betti(&coarse, pencil);
    let fine_est = estimate_betti(&fine, pencil);
    let authoritative = !fine.budget_exceeded
        && coarse_est.b0 == fine_est.b0
        && coarse_est.estimate == fine_est.estimate
        && coarse_est.flag == EstimateFlag::Exact
        && fine_est.flag == EstimateFlag::Exact;
    let result = OracleResult {
        resolution,
        estimate: fine_est.estimate,
        flag: fine_est.flag,
        b0: fine_est.b0,
        coarse_b0: coarse_est.b0,
        coarse_estimate: coarse_est.estimate,
        cells_tested: sub.cells_tested,
        budget_exceeded: fine.budget_exceeded,
        points: fine.points.len(),
        clusters: fine_est.clusters.clone(),
        min_jacobian_ratio: fine_est.min_jacobian_ratio,
        max_residual: fine.residuals.iter().copied().reduce(f64::max),
        authoritative,
    };
    Ok((result, fine, fine_est))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    pub oracle_estimate: usize,
    pub refined_bound: i64,
    pub theorem_cap: i64,
    pub authoritative: bool,
}

/// PASS iff `oracle ≤ refined_bound ≤ n(n + 1)`.
pub fn verify_bound(bounds: &BoundReport, oracle: &OracleResult, analysis_authoritative: bool) -> VerifyOutcome {
    let pass = oracle.estimate as i64 <= bounds.refined_bound && bounds.refined_bound <= bounds.theorem_cap;
    VerifyOutcome {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        oracle_estimate: oracle.estimate,
        refined_bound: bounds.refined_bound,
        theorem_cap: bounds.theorem_cap,
        authoritative: oracle.authoritative && analysis_authoritative,
    }
}

/// `x0,…,xn,cluster_id` rows, 17 significant digits.
pub fn sample_csv(sample: &VarietySample, estimate: &BettiEstimate) -> String {
    let dim = sample.n + 1;
    let mut out = (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push_str(",cluster_id\n");
    for (p, c) in sample.points.iter().zip(&estimate.assignment) {
        for v in p {
            out.push_str(&format_f64(*v));
            out.push(',');
        }
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}
