//! The filtration of `S²` by the perturbed inertia index and the bounds on the
//! total Betti number of the base locus built from it.
//!
//! Level `j ≥ 0` is `Ω^{j+1} = {i⁺(ωQ) ≥ j + 1}`, realized after perturbation as
//! `{i⁻(ωQ − εP) ≤ n − j}`. A proper level is a surface in `S²` bounded by the
//! ovals traced at index threshold `n − j`, and its total Betti number is the
//! number of those ovals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numfmt::serialize_f64;
use crate::spectral_curve::regions::{level_components, RegionMap};
use crate::spectral_curve::SphereMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Empty,
    Full,
    Proper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaLevel {
    pub j: usize,
    /// `n − j`: the level is `{i⁻ ≤ threshold}`.
    pub threshold: usize,
    pub kind: LevelKind,
    pub region_ids: Vec<usize>,
    pub boundary_ovals: Vec<usize>,
    pub betti_total: usize,
    /// `2·b₀ − χ` of the mesh subcomplex spanned by the level's vertices, which
    /// counts boundary circles of a proper level independently of the tracing.
    pub euler_count: Option<i64>,
}

/// `b(Ω)`: the number of boundary ovals of a proper level, 2 for the whole
/// sphere, 0 for the empty set.
pub fn betti_of_omega(level: &OmegaLevel) -> usize {
    match level.kind {
        LevelKind::Empty => 0,
        LevelKind::Full => 2,
        LevelKind::Proper => level.boundary_ovals.len(),
    }
}

/// `(μ, ν)`: the largest and smallest `i⁺ = n + 1 − i⁻` over the regions.
pub fn index_range(map: &RegionMap) -> (usize, usize) {
    let min = map.regions.iter().map(|r| r.label).min().unwrap_or(0);
    let max = map.regions.iter().map(|r| r.label).max().unwrap_or(0);
    (map.n + 1 - min, map.n + 1 - max)
}

/// Levels `j = 0, …, n`. Those with `ν < j + 1 ≤ μ` are proper; below that
/// range a level is the whole sphere and above it empty.
pub fn build_filtration(map: &RegionMap, mesh: &SphereMesh) -> Result<Vec<OmegaLevel>> {
    let n = map.n;
    let labels: Vec<usize> = (0..map.vertex_region.len()).map(|v| map.label_of_vertex(v)).collect();
    let min = map.regions.iter().map(|r| r.label).min().unwrap_or(0);
    let max = map.regions.iter().map(|r| r.label).max().unwrap_or(0);

    let mut levels: Vec<OmegaLevel> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let threshold = n - j;
        let region_ids: Vec<usize> = (0..map.regions.len())
            .filter(|&r| map.regions[r].label <= threshold)
            .collect();
        let kind = if threshold < min {
            LevelKind::Empty
        } else if threshold >= max {
            LevelKind::Full
        } else {
            LevelKind::Proper
        };
        let boundary_ovals: Vec<usize> = (0..map.oval_levels.len())
            .filter(|&o| map.oval_levels[o] == threshold)
            .collect();
        if kind != LevelKind::Proper && !boundary_ovals.is_empty() {
            return Err(Error::NestingViolation { index: j });
        }
        let euler_count = (kind == LevelKind::Proper).then(|| euler_boundary_count(&labels, mesh, threshold));
        let mut level = OmegaLevel {
            j,
            threshold,
            kind,
            region_ids,
            boundary_ovals,
            betti_total: 0,
            euler_count,
        };
        level.betti_total = betti_of_omega(&level);
        if let Some(euler) = level.euler_count {
            if euler != level.boundary_ovals.len() as i64 {
                return Err(Error::EulerMismatch {
                    index: j,
                    ovals: level.boundary_ovals.len(),
                    euler,
                });
            }
        }
        if let Some(prev) = levels.last() {
            // prev is {i⁻ ≤ threshold + 1}
            if !level
                .region_ids
                .iter()
                .all(|r| prev.region_ids.binary_search(r).is_ok())
            {
                return Err(Error::NestingViolation { index: j });
            }
        }
        levels.push(level);
    }
    Ok(levels)
}

fn euler_boundary_count(labels: &[usize], mesh: &SphereMesh, threshold: usize) -> i64 {
    let inside = |v: usize| labels[v] <= threshold;
    let vertices = (0..labels.len()).filter(|&v| inside(v)).count() as i64;
    let edges = mesh.edges().iter().filter(|&&[a, b]| inside(a) && inside(b)).count() as i64;
    let faces = mesh.triangles().iter().filter(|t| t.iter().all(|&v| inside(v))).count() as i64;
    let ids = level_components(labels, mesh, threshold);
    let components = (0..labels.len())
        .filter(|&v| inside(v))
        .map(|v| ids[v])
        .max()
        .map_or(0, |m| m as i64 + 1);
    2 * components - (vertices - edges + faces)
}

/// `n + 1 + Σ_j b(Ω^{j+1})`.
pub fn eq1_bound(levels: &[OmegaLevel], n: usize) -> i64 {
    (n + 1) as i64 + levels.iter().map(|l| betti_of_omega(l) as i64).sum::<i64>()
}

/// `n + 1` when `μ = ν`, otherwise `n + 1 − 2(μ − ν) + c`.
pub fn refined_bound(n: usize, mu: usize, nu: usize, c: usize) -> i64 {
    let base = (n + 1) as i64;
    if mu == nu {
        base
    } else {
        base - 2 * (mu as i64 - nu as i64) + c as i64
    }
}

/// Largest number of ovals of a smooth curve of degree `n + 1` on `S²`:
/// `d(d − 2) + 2` with `d = n + 1`.
pub fn harnack_cap(n: usize) -> i64 {
    let d = (n + 1) as i64;
    d * (d - 2) + 2
}

pub fn harnack_check(c: usize, n: usize) -> bool {
    c as i64 <= harnack_cap(n)
}

pub fn theorem_cap(n: usize) -> i64 {
    (n * (n + 1)) as i64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub mu: usize,
    pub nu: usize,
    pub oval_count: usize,
    /// `b(Ω^{j+1})` for `j = 0, …, n`.
    pub level_betti: Vec<usize>,
    /// Sum of `b(Ω^{j+1})` over the proper levels; equals `oval_count`.
    pub filtration_sum: usize,
    pub eq1_bound: i64,
    pub refined_bound: i64,
    pub theorem_cap: i64,
    pub harnack_cap: i64,
    pub harnack_ok: bool,
    #[serde(serialize_with = "serialize_f64")]
    pub epsilon_used: f64,
    pub mesh_depth: usize,
}

impl BoundReport {
    pub fn new(map: &RegionMap, levels: &[OmegaLevel], epsilon: f64, mesh_depth: usize) -> Self {
        let n = map.n;
        let (mu, nu) = index_range(map);
        let c = map.oval_count();
        let filtration_sum = levels
            .iter()
            .filter(|l| l.kind == LevelKind::Proper)
            .map(betti_of_omega)
            .sum();
        let refined = refined_bound(n, mu, nu, c);
        let harnack_ok = harnack_check(c, n);
        debug_assert!(n == 0 || !harnack_ok || refined <= theorem_cap(n));
        BoundReport {
            n,
            mu,
            nu,
            oval_count: c,
            level_betti: levels.iter().map(betti_of_omega).collect(),
            filtration_sum,
            eq1_bound: eq1_bound(levels, n),
            refined_bound: refined,
            theorem_cap: theorem_cap(n),
            harnack_cap: harnack_cap(n),
            harnack_ok,
            epsilon_used: epsilon,
            mesh_depth,
        }
    }

    /// A trace with more ovals than the cap has spurious ovals; its bounds are void.
    pub fn check_harnack(&self) -> Result<()> {
        if self.harnack_ok {
            Ok(())
        } else {
            Err(Error::HarnackExceeded {
                ovals: self.oval_count,
                cap: self.harnack_cap as usize,
            })
        }
    }
}
