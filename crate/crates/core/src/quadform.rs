//! Quadratic forms on ℝⁿ⁺¹, pencils of forms and their inertia indices.
//!
//! A form is stored as the symmetric matrix `Q` with `q(x) = ⟨x, Qx⟩` for the
//! standard scalar product. Inertia is computed two independent ways: by
//! counting eigenvalue signs, and by counting sign variations of the
//! characteristic polynomial coefficients (Descartes' rule, which is exact for
//! polynomials with only real roots).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default degeneracy threshold, relative to the spectral radius of the form.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

impl QuadraticForm {
    /// Builds a form from a square matrix, replacing it by `(A + Aᵀ)/2`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::InvalidParameter("a form needs dimension >= 1".into()));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(entries)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `q(x) = ⟨x, Qx⟩`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.matrix[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Eigenvalues in no particular order.
    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        symmetric_eigenvalues(&self.matrix)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.amax())
    }
}

pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite matrix entry".into()));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    Ok(eig)
}

/// A tuple `(q₀, …, q_k)` of forms of equal dimension, evaluated on the unit
/// sphere `Sᵏ` as `ω ↦ ω₀q₀ + ⋯ + ω_k q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    forms: Vec<QuadraticForm>,
}

impl Pencil {
    pub fn new(forms: Vec<QuadraticForm>) -> Result<Self> {
        let Some(first) = forms.first() else {
            return Err(Error::InvalidParameter("a pencil needs at least one form".into()));
        };
        let dim = first.dim();
        if let Some(bad) = forms.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Self { forms })
    }

    /// Pencil of diagonal forms; `rows[i]` holds the coefficient vector
    /// `(Q₀ᵢᵢ, …, Q_kᵢᵢ)` of the i-th diagonal entry.
    pub fn diagonal(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter("empty diagonal pencil".into()));
        };
        let width = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: bad.len(),
            });
        }
        let forms = (0..width)
            .map(|f| QuadraticForm::diagonal(&rows.iter().map(|r| r[f]).collect::<Vec<_>>()))
            .collect();
        Self::new(forms)
    }

    /// Number of forms minus one.
    pub fn k(&self) -> usize {
        self.forms.len() - 1
    }

    /// Dimension `n + 1` of the underlying space.
    pub fn dim(&self) -> usize {
        self.forms[0].dim()
    }

    /// Projective dimension `n`.
    pub fn n(&self) -> usize {
        self.dim() - 1
    }

    pub fn forms(&self) -> &[QuadraticForm] {
        &self.forms
    }

    /// Unnormalized linear combination `Σ cᵢ Qᵢ`.
    pub fn combine(&self, coeffs: &[f64]) -> Result<QuadraticForm> {
        if coeffs.len() != self.forms.len() {
            return Err(Error::DimensionMismatch {
                expected: self.forms.len(),
                found: coeffs.len(),
            });
        }
        Ok(QuadraticForm {
            matrix: self.combine_matrix(coeffs),
        })
    }

    pub(crate) fn combine_matrix(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (c, f) in coeffs.iter().zip(&self.forms) {
            if *c != 0.0 {
                let c = *c;
                m.zip_apply(&f.matrix, |a, b| *a += c * b);
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.forms.iter().all(|f| f.matrix.iter().all(|v| *v == 0.0))
    }
}

/// `ωq = Σ ωᵢ qᵢ` for a point of the unit sphere. `omega` is renormalized.
pub fn evaluate_pencil(pencil: &Pencil, omega: &[f64]) -> Result<QuadraticForm> {
    if omega.len() != pencil.forms.len() {
        return Err(Error::DimensionMismatch {
            expected: pencil.forms.len(),
            found: omega.len(),
        });
    }
    let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter("omega must be a nonzero finite vector".into()));
    }
    let unit: Vec<f64> = omega.iter().map(|v| v / norm).collect();
    pencil.combine(&unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct InertiaTriple {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl InertiaTriple {
    pub fn dim(&self) -> usize {
        self.positive + self.negative + self.zero
    }
}

/// Counts eigenvalue signs. Eigenvalues within `zero_tol · ρ(Q)` of zero are
/// counted as zero, `ρ` being the spectral radius.
pub fn inertia_eigen(form: &QuadraticForm, zero_tol: f64) -> Result<InertiaTriple> {
    check_tol(zero_tol)?;
    let eig = form.eigenvalues()?;
    Ok(inertia_from_eigenvalues(eig.as_slice(), zero_tol))
}

pub(crate) fn inertia_from_eigenvalues(eig: &[f64], zero_tol: f64) -> InertiaTriple {
    let radius = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = zero_tol * radius;
    let mut out = InertiaTriple {
        positive: 0,
        negative: 0,
        zero: 0,
    };
    for &v in eig {
        if v > threshold {
            out.positive += 1;
        } else if v < -threshold {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    out
}

fn check_tol(zero_tol: f64) -> Result<()> {
    if zero_tol > 0.0 && zero_tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "zero_tol must be positive, got {zero_tol}"
        )))
    }
}

/// Coefficients `(a₀, …, a_N)` of `det(Q − tI)` in increasing degree, with
/// `a₀ = det Q` and `a_N = (−1)ᴺ`.
///
/// Uses the Faddeev–LeVerrier recurrence on `Q / s`, where `s` is the RMS
/// eigenvalue `‖Q‖_F / √N`, and rescales afterwards. No eigenvalues are
/// computed.
pub fn char_poly_coeffs(form: &QuadraticForm) -> Vec<f64> {
    let (normalized, scale) = normalized_char_poly(form);
    let dim = form.dim();
    normalized
        .iter()
        .enumerate()
        .map(|(i, a)| a * scale.powi((dim - i) as i32))
        .collect()
}

/// Char-poly coefficients of `Q / s` together with `s`. For the zero form
/// `s = 1`.
fn normalized_char_poly(form: &QuadraticForm) -> (Vec<f64>, f64) {
    let dim = form.dim();
    let frob = form.matrix.norm();
    let scale = if frob > 0.0 { frob / (dim as f64).sqrt() } else { 1.0 };
    let a = &form.matrix / scale;

    // c[i] are the coefficients of det(tI − A), c[dim] = 1.
    let mut c = vec![0.0; dim + 1];
    c[dim] = 1.0;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for k in 1..=dim {
        // M_k = A M_{k-1} + c_{N-k+1} I
        let mut next = &a * &m;
        for i in 0..dim {
            next[(i, i)] += c[dim - k + 1];
        }
        m = next;
        let am = &a * &m;
        c[dim - k] = -am.trace() / k as f64;
    }

    let sign = if dim % 2 == 0 { 1.0 } else { -1.0 };
    (c.into_iter().map(|v| v * sign).collect(), scale)
}

/// Sign variations of a sequence, skipping entries with `|a| <= zero_tol · max|a|`.
pub fn sign_variations(coeffs: &[f64], zero_tol: f64) -> usize {
    let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = zero_tol * scale;
    let mut last = 0.0f64;
    let mut changes = 0;
    for &a in coeffs {
        if a.abs() <= cut {
            continue;
        }
        if last != 0.0 && (a > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = a;
    }
    changes
}

/// Positive inertia index by Descartes' rule of signs on `det(Q − tI)`.
pub fn inertia_descartes(form: &QuadraticForm, zero_tol: f64) -> usize {
    let (coeffs, _) = normalized_char_poly(form);
    sign_variations(&coeffs, zero_tol)
}

/// Positive definite form with eigenvalues drawn uniformly from `[0.5, 1.5]`,
/// conjugated by a random orthogonal matrix. Deterministic in `(dim, seed)`.
pub fn random_posdef(dim: usize, seed: u64) -> QuadraticForm {
    assert!(dim >= 1, "random_posdef needs dim >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..=1.5)).collect();
    let gauss = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let r = qr.r();
    let mut orth = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            orth.column_mut(j).neg_mut();
        }
    }
    let d = DMatrix::from_diagonal(&DVector::from_vec(diag));
    let m = &orth * d * orth.transpose();
    QuadraticForm {
        matrix: (&m + m.transpose()) * 0.5,
    }
}

/// Pencil of `forms` symmetric integer matrices of size `dim` with entries
/// uniform in `[-bound, bound]`. Deterministic in the arguments.
pub fn random_integer_pencil(dim: usize, forms: usize, bound: i64, seed: u64) -> Pencil {
    assert!(dim >= 1 && forms >= 1, "random_integer_pencil needs dim, forms >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forms = (0..forms)
        .map(|_| {
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..dim {
                for j in i..dim {
                    let v = rng.random_range(-bound..=bound) as f64;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            QuadraticForm { matrix: m }
        })
        .collect();
    Pencil::new(forms).expect("forms share one size")
}
