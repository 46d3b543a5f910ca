//! Dense matrix kernels shared by every other module: eigenvalues, singular
//! values, inertia, Cholesky-type factorizations and the stable deflating
//! subspace of a matrix pencil.
//!
//! All operations are pure functions on immutable inputs. Tolerances are
//! relative to `1 + norm(input)` unless a function documents otherwise.

pub mod qz;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex<f64>>;
pub type CVec = DVector<Complex<f64>>;

/// Eigenvalues with |lambda| inside `[1 - UNIT_CIRCLE_TOL, 1 + UNIT_CIRCLE_TOL]`
/// defeat the stable/antistable splitting of a pencil.
pub const UNIT_CIRCLE_TOL: f64 = 1e-8;

/// Signature of a symmetric matrix: eigenvalue counts below, above and
/// inside the zero tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InertiaTriple {
    pub n_minus: usize,
    pub n_plus: usize,
    pub n_zero: usize,
}

/// A square pencil `lambda * M - N`.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub m: Mat,
    pub n: Mat,
}

impl Pencil {
    pub fn new(m: Mat, n: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || n.nrows() != n.ncols() || m.nrows() != n.nrows() {
            return Err(Error::Dimension(
                "pencil requires square M, N of equal size".into(),
            ));
        }
        ensure_finite(&m, "pencil M")?;
        ensure_finite(&n, "pencil N")?;
        Ok(Self { m, n })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Generalized eigenvalue of a pencil in homogeneous (alpha, beta) form;
/// the eigenvalue is alpha/beta and is infinite when beta vanishes.
#[derive(Debug, Clone, Copy)]
pub struct PencilEigenvalue {
    pub alpha: Complex<f64>,
    pub beta: Complex<f64>,
}

impl PencilEigenvalue {
    pub fn is_finite(&self, scale: f64) -> bool {
        self.beta.norm() > f64::EPSILON * scale
    }

    pub fn value(&self) -> Complex<f64> {
        self.alpha / self.beta
    }
}

/// Reject NaN/Inf entries at construction boundaries.
pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "{what} contains non-finite entries"
        )))
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

/// Eigenvalues of a square real matrix, computed through the QZ form of the
/// pencil `lambda * I - A`.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(
            "eigenvalues of a non-square matrix".into(),
        ));
    }
    ensure_finite(a, "eigenvalue input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let gs = qz::qz(&to_complex(a), &CMat::identity(n, n))?;
    gs.eigenvalue_pairs()
        .into_iter()
        .map(|(al, be)| {
            if be.norm() <= f64::EPSILON * n as f64 {
                Err(Error::Numerical(
                    "identity pencil produced a vanishing beta".into(),
                ))
            } else {
                Ok(al / be)
            }
        })
        .collect()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .into_iter()
        .fold(0.0f64, |acc, l| acc.max(l.norm())))
}

/// Counts of eigenvalues of a symmetric matrix below -tol, above tol and in
/// between. `tol` also bounds the tolerated asymmetry.
pub fn hermitian_inertia(p: &Mat, tol: f64) -> Result<InertiaTriple> {
    if p.nrows() != p.ncols() {
        return Err(Error::Dimension("inertia of a non-square matrix".into()));
    }
    ensure_finite(p, "inertia input")?;
    let asym = (p - p.transpose()).amax();
    if asym > tol.max(f64::EPSILON * (1.0 + p.amax())) {
        return Err(Error::Contract(format!(
            "matrix is asymmetric beyond tolerance ({asym:.3e} > {tol:.3e})"
        )));
    }
    let sym = (p + p.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    let mut inertia = InertiaTriple {
        n_minus: 0,
        n_plus: 0,
        n_zero: 0,
    };
    for &l in eigs.iter() {
        if l < -tol {
            inertia.n_minus += 1;
        } else if l > tol {
            inertia.n_plus += 1;
        } else {
            inertia.n_zero += 1;
        }
    }
    Ok(inertia)
}

/// Orthonormal basis (s x dim) of the deflating subspace of `lambda*M - N`
/// associated with all generalized eigenvalues of modulus < 1. Infinite
/// eigenvalues count as outside the disc.
pub fn stable_deflating_subspace(p: &Pencil, dim: usize) -> Result<Mat> {
    let s = p.dim();
    if dim > s {
        return Err(Error::Dimension(format!(
            "requested subspace dimension {dim} exceeds pencil size {s}"
        )));
    }
    let mut gs = qz::qz(&to_complex(&p.n), &to_complex(&p.m))?;

    // Dichotomy scan before any reordering.
    let scale = max_mod(&gs.s).max(max_mod(&gs.t)).max(1.0);
    let mut stable = 0usize;
    for (al, be) in gs.eigenvalue_pairs() {
        if be.norm() <= f64::EPSILON * scale {
            continue; // infinite: outside
        }
        let modulus = (al / be).norm();
        if (modulus - 1.0).abs() <= UNIT_CIRCLE_TOL {
            return Err(Error::Dichotomy(format!(
                "generalized eigenvalue of modulus {modulus:.12} on the unit circle"
            )));
        }
        if modulus < 1.0 {
            stable += 1;
        }
    }
    if stable != dim {
        return Err(Error::SubspaceDimension {
            expected: dim,
            found: stable,
        });
    }

    let eps_scale = f64::EPSILON * scale;
    let count = qz::reorder(&mut gs, |al, be| {
        be.norm() > eps_scale && al.norm() < be.norm()
    })?;
    debug_assert_eq!(count, dim);

    // The complex basis spans a conjugation-closed subspace, so the real and
    // imaginary parts of its columns span the same real subspace.
    let u = gs.z.columns(0, dim);
    let mut stacked = Mat::zeros(s, 2 * dim);
    for j in 0..dim {
        for i in 0..s {
            stacked[(i, j)] = u[(i, j)].re;
            stacked[(i, dim + j)] = u[(i, j)].im;
        }
    }
    let qr = stacked.col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    // Guard: the real span must have full dimension `dim`.
    let r0 = r[(0, 0)].abs().max(f64::EPSILON);
    if dim > 0 && r[(dim - 1, dim - 1)].abs() <= 1e-12 * r0 {
        return Err(Error::Numerical(
            "stable deflating subspace is numerically rank deficient".into(),
        ));
    }
    Ok(q.columns(0, dim).into_owned())
}

/// All generalized eigenvalues of a pencil in (alpha, beta) form.
pub fn generalized_eigenvalues(p: &Pencil) -> Result<Vec<PencilEigenvalue>> {
    let gs = qz::qz(&to_complex(&p.n), &to_complex(&p.m))?;
    Ok(gs
        .eigenvalue_pairs()
        .into_iter()
        .map(|(alpha, beta)| PencilEigenvalue { alpha, beta })
        .collect())
}

fn max_mod(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.norm()))
}

/// Smallest singular value of a real matrix.
pub fn min_singular_value(a: &Mat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().fold(f64::INFINITY, |acc, &s| acc.min(s))
}

/// Singular values of a complex matrix via the Hermitian embedding
/// [[0, A], [A^H, 0]], whose nonzero eigenvalues are +/- the singular values.
/// Keeps absolute accuracy at the eps * norm level, unlike forming A^H A.
fn complex_singular_values(a: &CMat) -> Vec<f64> {
    let (r, c) = (a.nrows(), a.ncols());
    let dim = r + c;
    let mut h = CMat::zeros(dim, dim);
    for i in 0..r {
        for j in 0..c {
            h[(i, r + j)] = a[(i, j)];
            h[(r + j, i)] = a[(i, j)].conj();
        }
    }
    let eigs = h.symmetric_eigen().eigenvalues;
    let mut pos: Vec<f64> = eigs.iter().map(|l| l.abs()).collect();
    pos.sort_by(f64::total_cmp);
    // Of the r + c magnitudes, the top min(r, c) are the singular values
    // (each appears twice as +/- sigma; zeros pad the rest).
    let k = r.min(c);
    pos.into_iter()
        .rev()
        .take(2 * k)
        .skip(1)
        .step_by(2)
        .collect()
}

/// Smallest singular value of a complex matrix.
pub fn min_singular_value_complex(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    complex_singular_values(a)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Largest singular value of a complex matrix.
pub fn max_singular_value_complex(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    complex_singular_values(a)
        .into_iter()
        .fold(0.0f64, f64::max)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_spd(p: &Mat) -> Result<Mat> {
    if p.nrows() != p.ncols() {
        return Err(Error::Dimension("cholesky of a non-square matrix".into()));
    }
    ensure_finite(p, "cholesky input")?;
    let scale = 1.0 + p.amax();
    if (p - p.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Contract("cholesky input is not symmetric".into()));
    }
    let sym = (p + p.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky hit a non-positive pivot".into()))
}

/// Symmetric positive-semidefinite principal square root via eigendecomposition.
/// Eigenvalues below `-tol_rel * (1 + norm)` are rejected; small negative
/// values inside the band are clamped to zero.
pub fn sym_psd_sqrt(p: &Mat) -> Result<Mat> {
    sym_psd_power(p, 0.5)
}

/// Inverse principal square root of a symmetric positive-definite matrix.
pub fn sym_pd_inv_sqrt(p: &Mat) -> Result<Mat> {
    sym_psd_power(p, -0.5)
}

fn sym_psd_power(p: &Mat, exponent: f64) -> Result<Mat> {
    if p.nrows() != p.ncols() {
        return Err(Error::Dimension(
            "matrix power of a non-square matrix".into(),
        ));
    }
    let scale = 1.0 + p.amax();
    if (p - p.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Contract(
            "matrix power input is not symmetric".into(),
        ));
    }
    let se = ((p + p.transpose()) * 0.5).symmetric_eigen();
    let tol = 1e-12 * scale;
    let mut d = DVector::zeros(se.eigenvalues.len());
    for (i, &l) in se.eigenvalues.iter().enumerate() {
        if l < -tol {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue {l:.3e} below the semidefinite tolerance"
            )));
        }
        let clamped = l.max(0.0);
        if exponent < 0.0 && clamped <= tol {
            return Err(Error::NotPositiveDefinite(
                "matrix is singular, inverse square root undefined".into(),
            ));
        }
        d[i] = clamped.powf(exponent);
    }
    let v = &se.eigenvectors;
    Ok(v * Mat::from_diagonal(&d) * v.transpose())
}

/// Solve A X = B through an LU factorization, failing on singular A.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("linear solve with a singular matrix".into()))
}

/// Symmetrize: (P + P^T) / 2.
pub fn symmetrize(p: &Mat) -> Mat {
    (p + p.transpose()) * 0.5
}
