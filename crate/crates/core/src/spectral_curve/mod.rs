//! The perturbed spectral curve `C(ε)` on `S²`, the regions it cuts out, and
//! the choice of a small enough `ε`.

pub mod epsilon;
pub mod mesh;
pub mod regions;
pub mod trace;

pub use epsilon::{choose_epsilon, Stabilized};
pub use mesh::{build_mesh, SphereMesh};
pub use regions::{extract_regions, validate_jump, JumpReport, RegionMap};
pub use trace::{det_field, trace_curve, CurveTrace, Oval};
