//! Geodesic sphere mesh from repeated midpoint subdivision of an icosahedron.

use std::collections::HashMap;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 10;

#[derive(Debug, Clone)]
pub struct SphereMesh {
    depth: usize,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// `triangle_edges[t][i]` joins `triangles[t][i]` and `triangles[t][(i + 1) % 3]`.
    triangle_edges: Vec<[usize; 3]>,
    edge_triangles: Vec<[usize; 2]>,
    vertex_edge_offsets: Vec<usize>,
    vertex_edge_list: Vec<usize>,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

fn icosahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn subdivide(vertices: &mut Vec<[f64; 3]>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        *midpoints.entry(key).or_insert_with(|| {
            let (p, q) = (verts[a], verts[b]);
            verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
            verts.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = midpoint(a, b, vertices);
        let bc = midpoint(b, c, vertices);
        let ca = midpoint(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    out
}

/// Subdivided icosahedron with `20 · 4^depth` triangles.
pub fn build_mesh(depth: usize) -> Result<SphereMesh> {
    if depth > MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "mesh depth {depth} exceeds {MAX_DEPTH}"
        )));
    }
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..depth {
        faces = subdivide(&mut vertices, &faces);
    }
    Ok(SphereMesh::from_parts(depth, vertices, faces))
}

impl SphereMesh {
    fn from_parts(depth: usize, vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Self {
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3 / 2);
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2);
        let mut edge_triangles: Vec<[usize; 2]> = Vec::with_capacity(triangles.len() * 3 / 2);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_triangles.push([usize::MAX; 2]);
                    edges.len() - 1
                });
                let slot = &mut edge_triangles[id];
                if slot[0] == usize::MAX {
                    slot[0] = t;
                } else {
                    slot[1] = t;
                }
                te[i] = id;
            }
            triangle_edges.push(te);
        }

        let mut counts = vec![0usize; vertices.len() + 1];
        for e in &edges {
            counts[e[0] + 1] += 1;
            counts[e[1] + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut list = vec![0; offsets[vertices.len()]];
        for (id, e) in edges.iter().enumerate() {
            for &v in e {
                list[fill[v]] = id;
                fill[v] += 1;
            }
        }

        Self {
            depth,
            vertices,
            triangles,
            edges,
            triangle_edges,
            edge_triangles,
            vertex_edge_offsets: offsets,
            vertex_edge_list: list,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> [usize; 2] {
        self.edge_triangles[e]
    }

    /// Triangles sharing an edge with `t`.
    pub fn triangle_neighbors(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t].map(|e| {
            let [a, b] = self.edge_triangles[e];
            if a == t {
                b
            } else {
                a
            }
        })
    }

    /// Ids of the edges incident to vertex `v`.
    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edge_list[self.vertex_edge_offsets[v]..self.vertex_edge_offsets[v + 1]]
    }

    pub fn other_end(&self, edge: usize, v: usize) -> usize {
        let [a, b] = self.edges[edge];
        if a == v {
            b
        } else {
            a
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Longest edge, as an angle in radians.
    pub fn max_edge_angle(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).clamp(-1.0, 1.0).acos()
            })
            .fold(0.0, f64::max)
    }

    /// Neighbours of each vertex in cyclic order around it.
    pub fn vertex_links(&self) -> Vec<Vec<usize>> {
        let nv = self.vertices.len();
        // for each vertex, the opposite edge of every incident triangle, oriented
        let mut next: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
        for &[a, b, c] in &self.triangles {
            next[a].push((b, c));
            next[b].push((c, a));
            next[c].push((a, b));
        }
        next.into_iter()
            .map(|pairs| {
                let mut cycle = Vec::with_capacity(pairs.len());
                let mut current = pairs[0].0;
                for _ in 0..pairs.len() {
                    cycle.push(current);
                    current = pairs.iter().find(|p| p.0 == current).expect("closed link").1;
                }
                cycle
            })
            .collect()
    }

    /// Same combinatorics, vertices moved by a small seeded rotation.
    pub fn rotated(&self, seed: u64) -> SphereMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let angle = rng.random_range(0.02..0.1);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        self.transformed(|v| {
            let r = rot * Vector3::new(v[0], v[1], v[2]);
            [r.x, r.y, r.z]
        })
    }

    /// Same combinatorics, every vertex mapped by `f` and renormalized.
    pub fn transformed(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> SphereMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = normalize(f(*v));
        }
        out
    }
}
