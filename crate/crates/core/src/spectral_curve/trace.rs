//! Marching-triangles extraction of `C(ε) = {ω ∈ S² : det(ωQ − εP) = 0}`.
//!
//! Every mesh vertex carries the negative inertia index `i⁻(ωQ − εP)`. An edge
//! whose endpoints carry different indices is crossed by the curve once per
//! unit of index change, so the curve is traced one threshold at a time: the
//! level-`t` piece is the boundary of `{i⁻ ≤ t}`, and within a triangle it is
//! either absent or a single segment joining two edges. Under unit jumps each
//! oval lives on exactly one level.

use nalgebra::DMatrix;

use super::mesh::SphereMesh;
use crate::error::{Error, Result};
use crate::quadform::{symmetric_eigenvalues, Pencil, QuadraticForm, DEFAULT_ZERO_TOL};

/// A vertex is "on the curve" when `ωQ − εP` has an eigenvalue within
/// `VERTEX_TOL · ρ` of zero.
pub const VERTEX_TOL: f64 = DEFAULT_ZERO_TOL;

const ROOT_STEPS: usize = 30;
const ROOT_TOL: f64 = 1e-10;

/// The perturbed family `ω ↦ ωQ − εP` on `S²`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedPencil<'a> {
    pub pencil: &'a Pencil,
    pub p: &'a QuadraticForm,
    pub epsilon: f64,
}

impl<'a> PerturbedPencil<'a> {
    pub fn new(pencil: &'a Pencil, p: &'a QuadraticForm, epsilon: f64) -> Result<Self> {
        if pencil.k() != 2 {
            return Err(Error::UnsupportedK { k: pencil.k() });
        }
        if p.dim() != pencil.dim() {
            return Err(Error::DimensionMismatch {
                expected: pencil.dim(),
                found: p.dim(),
            });
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { pencil, p, epsilon })
    }

    pub fn matrix(&self, omega: [f64; 3]) -> DMatrix<f64> {
        let mut m = self.pencil.combine_matrix(&omega);
        let eps = self.epsilon;
        m.zip_apply(self.p.matrix(), |a, b| *a -= eps * b);
        m
    }

    pub fn det(&self, omega: [f64; 3]) -> f64 {
        self.matrix(omega).lu().determinant()
    }

    pub fn sample(&self, omega: [f64; 3]) -> Result<VertexSample> {
        let m = self.matrix(omega);
        let eig = symmetric_eigenvalues(&m)?;
        let radius = eig.amax();
        let threshold = VERTEX_TOL * radius;
        let label = eig.iter().filter(|v| **v < -threshold).count();
        let min_abs = eig.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        Ok(VertexSample {
            label,
            det: m.lu().determinant(),
            min_abs_eigenvalue: min_abs,
            spectral_radius: radius,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexSample {
    /// `i⁻(ωQ − εP)`.
    pub label: usize,
    pub det: f64,
    pub min_abs_eigenvalue: f64,
    pub spectral_radius: f64,
}

impl VertexSample {
    pub fn on_curve(&self) -> bool {
        !(self.min_abs_eigenvalue > VERTEX_TOL * self.spectral_radius)
    }

    /// `sign(det) = (−1)^{i⁻}` away from the curve.
    pub fn sign_consistent(&self) -> bool {
        (self.det < 0.0) == (self.label % 2 == 1) && self.det != 0.0
    }
}

/// `f(ω) = det(ωQ − εP)` via an LU factorization.
pub fn det_field(pencil: &Pencil, p: &QuadraticForm, epsilon: f64, omega: [f64; 3]) -> Result<f64> {
    Ok(PerturbedPencil::new(pencil, p, epsilon)?.det(normalize(omega)))
}

/// Point where the level-`level` piece of the curve crosses a mesh edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub edge: usize,
    pub level: usize,
    /// Position along the edge chord, from its lower-numbered vertex.
    pub param: f64,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Oval {
    /// The oval bounds `{i⁻ ≤ level}` from `{i⁻ > level}`.
    pub level: usize,
    /// Indices into `CurveTrace::crossings`, in cyclic order.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CurveTrace {
    pub epsilon: f64,
    pub ovals: Vec<Oval>,
    pub crossings: Vec<Crossing>,
    /// Edge ids whose endpoint labels differ, ascending.
    pub crossed_edges: Vec<usize>,
    /// `i⁻(ωQ − εP)` per mesh vertex.
    pub labels: Vec<usize>,
    /// `det(ωQ − εP)` per mesh vertex.
    pub dets: Vec<f64>,
}

impl CurveTrace {
    pub fn oval_points(&self, oval: usize) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.ovals[oval].nodes.iter().map(|&n| self.crossings[n].point)
    }

    /// Which oval each crossing belongs to.
    pub fn crossing_ovals(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.crossings.len()];
        for (id, oval) in self.ovals.iter().enumerate() {
            for &n in &oval.nodes {
                owner[n] = id;
            }
        }
        owner
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

fn along(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    normalize([
        a[0] + s * (b[0] - a[0]),
        a[1] + s * (b[1] - a[1]),
        a[2] + s * (b[2] - a[2]),
    ])
}

/// Samples every mesh vertex, failing on vertices that sit on the curve.
pub fn sample_vertices(field: &PerturbedPencil<'_>, mesh: &SphereMesh) -> Result<Vec<VertexSample>> {
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(v, &omega)| {
            let s = field.sample(omega)?;
            if s.on_curve() {
                return Err(Error::VertexOnCurve {
                    vertex: v,
                    min_abs_eigenvalue: s.min_abs_eigenvalue,
                });
            }
            if !s.sign_consistent() {
                return Err(Error::LabelConflict { vertex: v });
            }
            Ok(s)
        })
        .collect()
}

/// Root of `f` on a single-jump edge: false position seeded by linear
/// interpolation, then refined until `|f| ≤ 1e-10 · max(|f(a)|, |f(b)|)`.
fn locate_sign_change(field: &PerturbedPencil<'_>, a: [f64; 3], b: [f64; 3], fa: f64, fb: f64) -> f64 {
    let tol = ROOT_TOL * fa.abs().max(fb.abs());
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut flo, mut fhi) = (fa, fb);
    let mut s = fa / (fa - fb);
    let mut side = 0i8;
    for _ in 0..ROOT_STEPS {
        let fs = field.det(along(a, b, s));
        if fs.abs() <= tol {
            break;
        }
        if (fs < 0.0) == (flo < 0.0) {
            lo = s;
            flo = fs;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = s;
            fhi = fs;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if hi - lo < 1e-15 {
            break;
        }
        s = (lo * fhi - hi * flo) / (fhi - flo);
        if !(s > lo && s < hi) {
            s = 0.5 * (lo + hi);
        }
    }
    s
}

/// Where the index crosses `level` on an edge with a multi-unit jump:
/// bisection on the predicate `i⁻ ≤ level`.
fn locate_level(field: &PerturbedPencil<'_>, a: [f64; 3], b: [f64; 3], a_below: bool, level: usize) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..ROOT_STEPS {
        let mid = 0.5 * (lo + hi);
        let below = field.sample(along(a, b, mid))?.label <= level;
        if below == a_below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Traces `C(ε)` on `mesh`. Fails with `VertexOnCurve` when a vertex is too
/// close to the curve; callers rotate the mesh and retry.
pub fn trace_curve(pencil: &Pencil, p: &QuadraticForm, epsilon: f64, mesh: &SphereMesh) -> Result<CurveTrace> {
    let field = PerturbedPencil::new(pencil, p, epsilon)?;
    let samples = sample_vertices(&field, mesh)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let dets: Vec<f64> = samples.iter().map(|s| s.det).collect();
    let verts = mesh.vertices();

    // crossing nodes, grouped by edge
    let mut crossed_edges = Vec::new();
    let mut first_node = vec![usize::MAX; mesh.edges().len()];
    let mut crossings = Vec::new();
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        let (la, lb) = (labels[a], labels[b]);
        if la == lb {
            continue;
        }
        crossed_edges.push(e);
        first_node[e] = crossings.len();
        let (lo, hi) = (la.min(lb), la.max(lb));
        for level in lo..hi {
            let param = if hi - lo == 1 {
                locate_sign_change(&field, verts[a], verts[b], dets[a], dets[b])
            } else {
                locate_level(&field, verts[a], verts[b], la <= level, level)?
            };
            crossings.push(Crossing {
                edge: e,
                level,
                param,
                point: along(verts[a], verts[b], param),
            });
        }
    }
    let node = |edge: usize, level: usize| -> usize {
        let [a, b] = mesh.edges()[edge];
        first_node[edge] + (level - labels[a].min(labels[b]))
    };

    // one segment per (triangle, level) straddled by the triangle's labels
    let mut links = vec![[usize::MAX; 2]; crossings.len()];
    let mut attach = |n: usize, other: usize| {
        let slot = &mut links[n];
        if slot[0] == usize::MAX {
            slot[0] = other;
        } else {
            slot[1] = other;
        }
    };
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let l = tri.map(|v| labels[v]);
        let lo = l.iter().copied().min().unwrap_or(0);
        let hi = l.iter().copied().max().unwrap_or(0);
        let edges = mesh.triangle_edges(t);
        for level in lo..hi {
            let mut hit = [0usize; 2];
            let mut count = 0;
            for i in 0..3 {
                let (x, y) = (l[i], l[(i + 1) % 3]);
                if (x <= level) != (y <= level) {
                    hit[count] = node(edges[i], level);
                    count += 1;
                }
            }
            debug_assert_eq!(count, 2);
            attach(hit[0], hit[1]);
            attach(hit[1], hit[0]);
        }
    }

    // walk the cycles
    let mut visited = vec![false; crossings.len()];
    let mut ovals = Vec::new();
    for start in 0..crossings.len() {
        if visited[start] {
            continue;
        }
        let mut nodes = vec![start];
        visited[start] = true;
        let (mut prev, mut cur) = (start, links[start][0]);
        while cur != start {
            visited[cur] = true;
            nodes.push(cur);
            let next = if links[cur][0] == prev {
                links[cur][1]
            } else {
                links[cur][0]
            };
            prev = cur;
            cur = next;
        }
        ovals.push(Oval {
            level: crossings[start].level,
            nodes,
        });
    }

    Ok(CurveTrace {
        epsilon,
        ovals,
        crossings,
        crossed_edges,
        labels,
        dets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_curve::mesh::build_mesh;

    fn single_factor() -> Pencil {
        Pencil::diagonal(&[vec![1.0, 0.0, 0.0], vec![0.0; 3], vec![0.0; 3]]).unwrap()
    }

    #[test]
    fn det_field_diagonal_product() {
        let rows = vec![vec![1.0, 0.5, 0.0], vec![0.0, -1.0, 2.0], vec![0.3, 0.3, 0.3]];
        let pencil = Pencil::diagonal(&rows).unwrap();
        let p = QuadraticForm::identity(3);
        let w = normalize([0.2, -0.7, 0.4]);
        let expect: f64 = rows
            .iter()
            .map(|d| d[0] * w[0] + d[1] * w[1] + d[2] * w[2] - 0.1)
            .product();
        let got = det_field(&pencil, &p, 0.1, w).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn det_field_large_epsilon_sign() {
        // ε above every eigenvalue of ωQ: sign (−1)^{n+1}
        let pencil = Pencil::diagonal(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let p = QuadraticForm::identity(4);
        let mesh = build_mesh(2).unwrap();
        for &w in mesh.vertices() {
            assert!(det_field(&pencil, &p, 2.0, w).unwrap() > 0.0);
        }
        let odd = Pencil::diagonal(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        for &w in mesh.vertices() {
            assert!(det_field(&odd, &QuadraticForm::identity(3), 2.0, w).unwrap() < 0.0);
        }
    }

    #[test]
    fn det_field_not_antipodal() {
        let pencil = single_factor();
        let p = QuadraticForm::identity(3);
        let w = normalize([0.3, 0.4, 0.5]);
        let f = det_field(&pencil, &p, 0.2, w).unwrap();
        let g = det_field(&pencil, &p, 0.2, w.map(|x| -x)).unwrap();
        assert!((f - g).abs() > 1e-6 && (f + g).abs() > 1e-6);
    }

    #[test]
    fn det_field_rejects_bad_inputs() {
        let pencil = single_factor();
        assert!(matches!(
            det_field(&pencil, &QuadraticForm::identity(4), 0.1, [1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let two = Pencil::new(vec![QuadraticForm::identity(3); 2]).unwrap();
        assert_eq!(
            det_field(&two, &QuadraticForm::identity(3), 0.1, [1.0, 0.0, 0.0]),
            Err(Error::UnsupportedK { k: 1 })
        );
        assert!(det_field(&pencil, &QuadraticForm::identity(3), 0.0, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn single_circle() {
        let mesh = build_mesh(4).unwrap().rotated(1);
        let trace = trace_curve(&single_factor(), &QuadraticForm::identity(3), 0.5, &mesh).unwrap();
        assert_eq!(trace.ovals.len(), 1);
        for point in trace.oval_points(0) {
            assert!((point[0] - 0.5).abs() < 1e-9, "{point:?}");
        }
        // closed cycle: consecutive crossings share a triangle
        let oval = &trace.ovals[0];
        for i in 0..oval.nodes.len() {
            let a = trace.crossings[oval.nodes[i]].edge;
            let b = trace.crossings[oval.nodes[(i + 1) % oval.nodes.len()]].edge;
            let ta = mesh.edge_triangles(a);
            let tb = mesh.edge_triangles(b);
            assert!(ta.iter().any(|t| tb.contains(t)));
        }
    }

    #[test]
    fn three_coordinate_circles() {
        // circles {ω_i = 0.8} have angular radius 36.9° around e_i and are disjoint
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mesh = build_mesh(4).unwrap().rotated(2);
        let trace = trace_curve(
            &Pencil::diagonal(&rows).unwrap(),
            &QuadraticForm::identity(3),
            0.8,
            &mesh,
        )
        .unwrap();
        assert_eq!(trace.ovals.len(), 3);
    }

    #[test]
    fn no_curve_for_large_epsilon() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mesh = build_mesh(3).unwrap();
        let trace = trace_curve(
            &Pencil::diagonal(&rows).unwrap(),
            &QuadraticForm::identity(3),
            1.5,
            &mesh,
        )
        .unwrap();
        assert!(trace.ovals.is_empty());
        assert!(trace.crossed_edges.is_empty());
        assert!(trace.labels.iter().all(|&l| l == 3));
    }

    #[test]
    fn vertex_on_curve_is_reported() {
        // icosahedron vertex 0 is (−1, φ, 0)/|·|; put the circle through it
        let mesh = build_mesh(0).unwrap();
        let x = mesh.vertices()[0][1];
        let pencil = Pencil::diagonal(&[vec![0.0, 1.0, 0.0], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let err = trace_curve(&pencil, &QuadraticForm::identity(3), x, &mesh).unwrap_err();
        assert!(matches!(err, Error::VertexOnCurve { .. }), "{err:?}");
    }

    #[test]
    fn double_jump_edges_get_one_crossing_per_level() {
        // q₀ = diag(1, 1, −1): {ω₀ = ε} is a double curve, the index jumps by 2 there
        let pencil = Pencil::diagonal(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]).unwrap();
        let mesh = build_mesh(3).unwrap().rotated(3);
        let trace = trace_curve(&pencil, &QuadraticForm::identity(3), 0.3, &mesh).unwrap();
        // labels: 1 on {ω₀ > 0.3}, 3 on the band, 2 on {ω₀ < −0.3}; two coincident
        // ovals on {ω₀ = 0.3} plus one on {ω₀ = −0.3}
        assert_eq!(trace.ovals.len(), 3);
        let mut levels: Vec<usize> = trace.ovals.iter().map(|o| o.level).collect();
        levels.sort();
        assert_eq!(levels, vec![1, 2, 2]);
    }
}
