//! Connected components of `S² \ C(ε)` and the index jump across each oval.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::mesh::SphereMesh;
use super::trace::{CurveTrace, PerturbedPencil};
use crate::error::{Error, Result};
use crate::numfmt::serialize_f64;
use crate::quadform::{inertia_eigen, Pencil, QuadraticForm, DEFAULT_ZERO_TOL};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    /// `i⁻(ωQ − εP)` on the region.
    pub label: usize,
    /// Mesh vertex farthest (in edge hops) from the curve.
    pub representative: usize,
    pub vertex_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adjacency {
    /// Region ids, smaller first.
    pub regions: (usize, usize),
    /// Ovals crossing the edges between the two regions.
    pub ovals: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RegionMap {
    /// Projective dimension; labels lie in `[0, n + 1]`.
    pub n: usize,
    pub vertex_region: Vec<usize>,
    pub regions: Vec<Region>,
    pub adjacency: Vec<Adjacency>,
    /// For each oval, the `(inside, outside)` pairs it separates, as components
    /// of `{i⁻ ≤ level}` and `{i⁻ > level}` on the mesh. A resolved oval has one.
    pub oval_sides: Vec<Vec<(usize, usize)>>,
    pub oval_levels: Vec<usize>,
}

impl RegionMap {
    pub fn label_of_vertex(&self, v: usize) -> usize {
        self.regions[self.vertex_region[v]].label
    }

    /// Labels of all regions, sorted.
    pub fn label_multiset(&self) -> Vec<usize> {
        let mut labels: Vec<usize> = self.regions.iter().map(|r| r.label).collect();
        labels.sort_unstable();
        labels
    }

    pub fn oval_count(&self) -> usize {
        self.oval_sides.len()
    }
}

/// Union-find over mesh vertices, merging across edges the curve does not cross.
pub fn extract_regions(
    trace: &CurveTrace,
    mesh: &SphereMesh,
    pencil: &Pencil,
    p: &QuadraticForm,
    epsilon: f64,
) -> Result<RegionMap> {
    let field = PerturbedPencil::new(pencil, p, epsilon)?;
    let nv = mesh.vertices().len();
    if trace.labels.len() != nv {
        return Err(Error::DimensionMismatch {
            expected: nv,
            found: trace.labels.len(),
        });
    }
    let labels = &trace.labels;

    let mut uf = UnionFind::new(nv);
    let mut on_curve = vec![false; nv];
    for &[a, b] in mesh.edges() {
        if labels[a] == labels[b] {
            uf.union(a, b);
        } else {
            on_curve[a] = true;
            on_curve[b] = true;
        }
    }
    let (vertex_region, region_count) = uf.compact_labels();

    // hop distance to the curve, within regions
    let mut dist = vec![usize::MAX; nv];
    let mut queue: VecDeque<usize> = (0..nv).filter(|&v| on_curve[v]).collect();
    for &v in &queue {
        dist[v] = 0;
    }
    while let Some(v) = queue.pop_front() {
        for &e in mesh.vertex_edges(v) {
            let w = mesh.other_end(e, v);
            if labels[w] == labels[v] && dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }

    let mut regions: Vec<Option<Region>> = vec![None; region_count];
    for v in 0..nv {
        let r = vertex_region[v];
        match &mut regions[r] {
            None => {
                regions[r] = Some(Region {
                    label: labels[v],
                    representative: v,
                    vertex_count: 1,
                })
            }
            Some(region) => {
                region.vertex_count += 1;
                if dist[v] != usize::MAX
                    && (dist[region.representative] == usize::MAX || dist[v] > dist[region.representative])
                {
                    region.representative = v;
                }
            }
        }
    }
    let regions: Vec<Region> = regions
        .into_iter()
        .map(|r| r.expect("every region has a vertex"))
        .collect();

    // independent inertia evaluation at each representative
    for region in &regions {
        let omega = mesh.vertices()[region.representative];
        let form = QuadraticForm::new(field.matrix(omega))?;
        let negative = inertia_eigen(&form, DEFAULT_ZERO_TOL)?.negative;
        if negative != region.label {
            return Err(Error::LabelConflict {
                vertex: region.representative,
            });
        }
    }

    let owner = trace.crossing_ovals();
    let mut adjacency: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for (node, crossing) in trace.crossings.iter().enumerate() {
        let [a, b] = mesh.edges()[crossing.edge];
        let (ra, rb) = (vertex_region[a], vertex_region[b]);
        adjacency
            .entry((ra.min(rb), ra.max(rb)))
            .or_default()
            .insert(owner[node]);
    }

    let mut oval_sides: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); trace.ovals.len()];
    let levels: BTreeSet<usize> = trace.ovals.iter().map(|o| o.level).collect();
    for level in levels {
        let components = level_components(labels, mesh, level);
        for (node, crossing) in trace.crossings.iter().enumerate() {
            if crossing.level != level {
                continue;
            }
            let [a, b] = mesh.edges()[crossing.edge];
            let (inside, outside) = if labels[a] <= level { (a, b) } else { (b, a) };
            oval_sides[owner[node]].insert((components[inside], components[outside]));
        }
    }

    Ok(RegionMap {
        n: pencil.n(),
        vertex_region,
        regions,
        adjacency: adjacency
            .into_iter()
            .map(|(regions, ovals)| Adjacency {
                regions,
                ovals: ovals.into_iter().collect(),
            })
            .collect(),
        oval_sides: oval_sides.into_iter().map(|s| s.into_iter().collect()).collect(),
        oval_levels: trace.ovals.iter().map(|o| o.level).collect(),
    })
}

/// Component id of every vertex in the split of the mesh into `{i⁻ ≤ level}`
/// and `{i⁻ > level}`, with the first kind numbered first.
pub fn level_components(labels: &[usize], mesh: &SphereMesh, level: usize) -> Vec<usize> {
    let mut uf = UnionFind::new(labels.len());
    for &[a, b] in mesh.edges() {
        if (labels[a] <= level) == (labels[b] <= level) {
            uf.union(a, b);
        }
    }
    let (ids, _) = uf.compact_labels();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&v| (labels[v] > level, ids[v], v));
    let mut renumber = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for v in order {
        if renumber[ids[v]] == usize::MAX {
            renumber[ids[v]] = next;
            next += 1;
        }
    }
    ids.into_iter().map(|id| renumber[id]).collect()
}

/// Two crossings on one edge at consecutive levels that coincide or come in
/// the wrong order: the index jumps by more than one there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpViolation {
    pub edge: usize,
    pub levels: (usize, usize),
    pub ovals: (usize, usize),
    /// Signed gap between the two crossings along the edge, oriented from the
    /// lower level to the higher one.
    #[serde(serialize_with = "serialize_f64")]
    pub gap: f64,
}

/// Crossings closer than this fraction of an edge are treated as one point.
pub const COINCIDENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub valid: bool,
    pub violations: Vec<JumpViolation>,
    /// Ovals that do not separate exactly one pair of regions.
    pub unresolved_ovals: Vec<usize>,
}

/// Checks that the index changes by exactly one across every oval. Edges
/// whose endpoint labels differ by `d > 1` carry `d` crossings; these must be
/// distinct and ordered by level along the edge, so that a thin band with
/// each intermediate index separates them even where no vertex falls inside.
pub fn validate_jump(trace: &CurveTrace, mesh: &SphereMesh, map: &RegionMap) -> JumpReport {
    let owner = trace.crossing_ovals();
    let mut violations = Vec::new();
    let mut start = 0;
    while start < trace.crossings.len() {
        let edge = trace.crossings[start].edge;
        let mut end = start + 1;
        while end < trace.crossings.len() && trace.crossings[end].edge == edge {
            end += 1;
        }
        let [a, b] = mesh.edges()[edge];
        let direction = if trace.labels[a] < trace.labels[b] { 1.0 } else { -1.0 };
        for i in start..end.saturating_sub(1) {
            let (x, y) = (&trace.crossings[i], &trace.crossings[i + 1]);
            let gap = direction * (y.param - x.param);
            if gap <= COINCIDENT_TOL {
                violations.push(JumpViolation {
                    edge,
                    levels: (x.level, y.level),
                    ovals: (owner[i], owner[i + 1]),
                    gap,
                });
            }
        }
        start = end;
    }
    let unresolved_ovals: Vec<usize> = map
        .oval_sides
        .iter()
        .enumerate()
        .filter(|(_, sides)| sides.len() != 1)
        .map(|(id, _)| id)
        .collect();
    JumpReport {
        valid: violations.is_empty() && unresolved_ovals.is_empty(),
        violations,
        unresolved_ovals,
    }
}
