//! Kalman-Szego-Popov-Yakubovich systems.
//!
//! For a Popov triplet (A, B, Q, L, R) with symmetric Q, R and a signature
//! J = diag(-I_{m1}, I_{m2}), a stabilizing solution is (X, V, W, F) with
//! ```text
//!   R + B'XB    = V'JV
//!   L + A'XB    = W'JV
//!   Q + A'XA - X = W'JW
//! ```
//! where X solves the discrete algebraic Riccati equation, V is
//! block-lower-triangular with positive-diagonal blocks, and the feedback
//! F = -(R + B'XB)^-1 (L' + B'XA) makes A + BF stable.
//!
//! The Riccati solution comes from the stable deflating subspace of the
//! extended pencil
//! ```text
//!   lambda | I  0   0 |   | A   0  B |
//!          | 0 -A'  0 | - | Q  -I  L |
//!          | 0 -B'  0 |   | L'  0  R |
//! ```
//! which tolerates singular R and singular A, followed by Newton polishing
//! steps on the Riccati residual while they improve it.

use crate::error::{Error, Result};
use crate::numkernel::{self, Mat, Pencil};

/// Residual thresholds are `KSPY_RESIDUAL_TOL * (1 + norm(X))`.
pub const KSPY_RESIDUAL_TOL: f64 = 1e-8;

/// Positive-semidefiniteness band for X: min eigenvalue >= -PSD_TOL * (1 + |X|).
pub const PSD_TOL: f64 = 1e-10;

/// Input-space signature: the first `neg` channels carry weight -1, the
/// remaining `pos` channels weight +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JSignature {
    pub neg: usize,
    pub pos: usize,
}

impl JSignature {
    pub fn total(&self) -> usize {
        self.neg + self.pos
    }

    pub fn matrix(&self) -> Mat {
        let mut j = Mat::identity(self.total(), self.total());
        for i in 0..self.neg {
            j[(i, i)] = -1.0;
        }
        j
    }
}

/// The data (A, B, Q, L, R) of an indefinite quadratic optimization problem,
/// together with the input-channel signature.
#[derive(Debug, Clone)]
pub struct PopovTriplet {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub l: Mat,
    pub r: Mat,
    pub j: JSignature,
}

impl PopovTriplet {
    pub fn new(a: Mat, b: Mat, q: Mat, l: Mat, r: Mat, j: JSignature) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n {
            return Err(Error::Dimension("A must be square".into()));
        }
        if b.nrows() != n {
            return Err(Error::Dimension("B must have as many rows as A".into()));
        }
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension("Q must be n x n".into()));
        }
        if l.nrows() != n || l.ncols() != m {
            return Err(Error::Dimension("L must be n x m".into()));
        }
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::Dimension("R must be m x m".into()));
        }
        if j.total() != m {
            return Err(Error::Dimension(format!(
                "signature {} + {} must match input count {m}",
                j.neg, j.pos
            )));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("Q", &q), ("L", &l), ("R", &r)] {
            numkernel::ensure_finite(mat, name)?;
        }
        let sym_tol = 1e-12;
        let q_asym = (&q - q.transpose()).amax();
        if q_asym > sym_tol * (1.0 + q.amax()) {
            return Err(Error::Contract(format!("Q asymmetric by {q_asym:.3e}")));
        }
        let r_asym = (&r - r.transpose()).amax();
        if r_asym > sym_tol * (1.0 + r.amax()) {
            return Err(Error::Contract(format!("R asymmetric by {r_asym:.3e}")));
        }
        Ok(Self { a, b, q, l, r, j })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Residuals of the three KSPY equations.
#[derive(Debug, Clone, Copy)]
pub struct KspyResiduals {
    /// |R + B'XB - V'JV|
    pub eq_v: f64,
    /// |L + A'XB - W'JV|
    pub eq_wv: f64,
    /// |Q + A'XA - X - W'JW|
    pub eq_w: f64,
}

impl KspyResiduals {
    pub fn max(&self) -> f64 {
        self.eq_v.max(self.eq_wv).max(self.eq_w)
    }
}

/// Stabilizing KSPY solution with its certificates.
#[derive(Debug, Clone)]
pub struct KspySolution {
    pub x: Mat,
    pub v: Mat,
    pub w: Mat,
    pub f: Mat,
    pub residuals: KspyResiduals,
    /// Smallest eigenvalue of X, for the X >= 0 side condition.
    pub x_min_eig: f64,
    /// X >= 0 up to `PSD_TOL * (1 + |X|)`.
    pub x_psd: bool,
    /// Spectral radius of A + BF.
    pub closed_loop_radius: f64,
}

/// Extended pencil whose stable deflating subspace encodes the stabilizing
/// Riccati solution.
fn extended_pencil(t: &PopovTriplet) -> Result<Pencil> {
    let n = t.state_dim();
    let m = t.input_dim();
    let s = 2 * n + m;
    let mut big_m = Mat::zeros(s, s);
    let mut big_n = Mat::zeros(s, s);

    // M = [I 0 0; 0 -A' 0; 0 -B' 0]
    big_m
        .view_mut((0, 0), (n, n))
        .copy_from(&Mat::identity(n, n));
    big_m
        .view_mut((n, n), (n, n))
        .copy_from(&(-t.a.transpose()));
    big_m
        .view_mut((2 * n, n), (m, n))
        .copy_from(&(-t.b.transpose()));

    // N = [A 0 B; Q -I L; L' 0 R]
    big_n.view_mut((0, 0), (n, n)).copy_from(&t.a);
    big_n.view_mut((0, 2 * n), (n, m)).copy_from(&t.b);
    big_n.view_mut((n, 0), (n, n)).copy_from(&t.q);
    big_n
        .view_mut((n, n), (n, n))
        .copy_from(&(-Mat::identity(n, n)));
    big_n.view_mut((n, 2 * n), (n, m)).copy_from(&t.l);
    big_n
        .view_mut((2 * n, 0), (m, n))
        .copy_from(&t.l.transpose());
    big_n.view_mut((2 * n, 2 * n), (m, m)).copy_from(&t.r);

    Pencil::new(big_m, big_n)
}

/// Riccati residual `A'XA - X + Q - (L + A'XB)(R + B'XB)^-1 (L' + B'XA)`.
fn riccati_residual(t: &PopovTriplet, x: &Mat) -> Result<Mat> {
    let inner = &t.r + t.b.transpose() * x * &t.b;
    let rhs = t.l.transpose() + t.b.transpose() * x * &t.a;
    let gain = numkernel::solve(&inner, &rhs)
        .map_err(|_| Error::Numerical("R + B'XB is singular".into()))?;
    let lw = &t.l + t.a.transpose() * x * &t.b;
    Ok(t.a.transpose() * x * &t.a - x + &t.q - lw * gain)
}

/// Solve the Stein equation X - A' X A = C through the Kronecker form.
/// Sizes here are tiny, so the dense n^2 x n^2 solve is fine.
fn solve_stein(a: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let at = a.transpose();
    let mut k = Mat::identity(n * n, n * n);
    // vec(A' X A) = (A'' (x) A') vec(X) = (A (x) A') vec(X), column-major vec:
    // vec(P X Q) = (Q' (x) P) vec(X) with P = A', Q = A.
    for bi in 0..n {
        for bj in 0..n {
            let factor = at[(bi, bj)];
            if factor == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    k[(bi * n + i, bj * n + j)] -= factor * at[(i, j)];
                }
            }
        }
    }
    let rhs = Mat::from_column_slice(n * n, 1, c.as_slice());
    let sol = numkernel::solve(&k, &rhs)?;
    Ok(numkernel::symmetrize(&Mat::from_column_slice(
        n,
        n,
        sol.as_slice(),
    )))
}

/// One Newton step: with F from X, solve the closed-loop Stein equation for
/// the next iterate.
fn newton_step(t: &PopovTriplet, x: &Mat) -> Result<Mat> {
    let f = stabilizing_feedback(t, x)?;
    let a_cl = &t.a + &t.b * &f;
    let c = &t.q + &t.l * &f + f.transpose() * t.l.transpose() + f.transpose() * &t.r * &f;
    solve_stein(&a_cl, &numkernel::symmetrize(&c))
}

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `A'XA - X + Q = (L + A'XB)(R + B'XB)^-1 (L' + B'XA)`.
pub fn solve_stabilizing_dare(t: &PopovTriplet) -> Result<Mat> {
    let n = t.state_dim();
    let pencil = extended_pencil(t)?;

    let u = match numkernel::stable_deflating_subspace(&pencil, n) {
        Ok(u) => u,
        Err(Error::Dichotomy(d)) => {
            return Err(Error::Dichotomy(format!("no stabilizing solution: {d}")))
        }
        Err(e) => return Err(e),
    };
    let u1 = u.view((0, 0), (n, n)).into_owned();
    let u2 = u.view((n, 0), (n, n)).into_owned();

    // X = U2 U1^-1, via a transposed solve to avoid the explicit inverse.
    let xt = numkernel::solve(&u1.transpose(), &u2.transpose())
        .map_err(|_| Error::Numerical("deflating subspace basis is not graph-like".into()))?;
    let mut x = numkernel::symmetrize(&xt.transpose());

    // Newton polish while it helps.
    let mut res = riccati_residual(t, &x)?.amax();
    for _ in 0..6 {
        if res <= 1e-15 * (1.0 + x.amax()) {
            break;
        }
        let Ok(candidate) = newton_step(t, &x) else {
            break;
        };
        let Ok(candidate_res) = riccati_residual(t, &candidate) else {
            break;
        };
        if candidate_res.amax() < res {
            res = candidate_res.amax();
            x = candidate;
        } else {
            break;
        }
    }

    let tol = KSPY_RESIDUAL_TOL * (1.0 + x.amax());
    if res > tol {
        return Err(Error::Numerical(format!(
            "Riccati residual {res:.3e} above tolerance {tol:.3e}"
        )));
    }
    Ok(x)
}

/// `F = -(R + B'XB)^-1 (L' + B'XA)`.
pub fn stabilizing_feedback(t: &PopovTriplet, x: &Mat) -> Result<Mat> {
    let inner = &t.r + t.b.transpose() * x * &t.b;
    let rhs = t.l.transpose() + t.b.transpose() * x * &t.a;
    let f = numkernel::solve(&inner, &rhs)
        .map_err(|_| Error::Numerical("R + B'XB is singular".into()))?;
    Ok(-f)
}

/// Factor a symmetric matrix P with inertia (m1, m2, 0) as P = V'JV where
/// V = [V11 0; V21 V22] has upper-triangular diagonal blocks with positive
/// diagonals: `P22 = V22'V22`, `V21 = V22^-T P12'`, and the negated Schur
/// complement `P12 P22^-1 P12' - P11 = V11'V11`.
pub fn j_lower_factorize(p: &Mat, j: JSignature) -> Result<Mat> {
    let m = j.total();
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, signature wants {m}x{m}",
            p.nrows(),
            p.ncols()
        )));
    }
    let scale = 1.0 + p.amax();
    let inertia = numkernel::hermitian_inertia(p, 1e-10 * scale)?;
    if inertia.n_minus != j.neg || inertia.n_plus != j.pos || inertia.n_zero != 0 {
        return Err(Error::SignCondition(format!(
            "inertia ({}, {}, {}) does not match signature (-{}, +{})",
            inertia.n_minus, inertia.n_plus, inertia.n_zero, j.neg, j.pos
        )));
    }
    let (m1, m2) = (j.neg, j.pos);
    let p11 = p.view((0, 0), (m1, m1)).into_owned();
    let p12 = p.view((0, m1), (m1, m2)).into_owned();
    let p22 = p.view((m1, m1), (m2, m2)).into_owned();

    // Upper-triangular factor with positive diagonal: P22 = V22' V22.
    let v22 = if m2 > 0 {
        numkernel::cholesky_spd(&numkernel::symmetrize(&p22))
            .map_err(|_| Error::SignCondition("positive block is not positive definite".into()))?
            .transpose()
    } else {
        Mat::zeros(0, 0)
    };

    // V21 = V22^-T P12' solved from V22' V21 = P12'.
    let v21 = if m1 > 0 && m2 > 0 {
        numkernel::solve(&v22.transpose(), &p12.transpose())?
    } else {
        Mat::zeros(m2, m1)
    };

    // Negated Schur complement must be positive definite.
    let v11 = if m1 > 0 {
        let correction = if m2 > 0 {
            v21.transpose() * &v21
        } else {
            Mat::zeros(m1, m1)
        };
        let schur = numkernel::symmetrize(&(correction - &p11));
        numkernel::cholesky_spd(&schur)
            .map_err(|_| Error::SignCondition("Schur complement is not negative definite".into()))?
            .transpose()
    } else {
        Mat::zeros(0, 0)
    };

    let mut v = Mat::zeros(m, m);
    v.view_mut((0, 0), (m1, m1)).copy_from(&v11);
    v.view_mut((m1, 0), (m2, m1)).copy_from(&v21);
    v.view_mut((m1, m1), (m2, m2)).copy_from(&v22);
    Ok(v)
}

/// Given the stabilizing X, produce (V, W) with
/// `R + B'XB = V'JV` and `W = J V^-T (L + A'XB)'`.
pub fn kspy_factorize(t: &PopovTriplet, x: &Mat) -> Result<(Mat, Mat)> {
    let p = numkernel::symmetrize(&(&t.r + t.b.transpose() * x * &t.b));
    let v = j_lower_factorize(&p, t.j)?;
    let lw = &t.l + t.a.transpose() * x * &t.b;
    // V^-T lw' from the triangular-ish solve V' y = lw'.
    let y = numkernel::solve(&v.transpose(), &lw.transpose())?;
    let w = t.j.matrix() * y;
    Ok((v, w))
}

fn residuals(t: &PopovTriplet, x: &Mat, v: &Mat, w: &Mat) -> KspyResiduals {
    let j = t.j.matrix();
    let eq_v = (&t.r + t.b.transpose() * x * &t.b - v.transpose() * &j * v).amax();
    let eq_wv = (&t.l + t.a.transpose() * x * &t.b - w.transpose() * &j * v).amax();
    let eq_w = (&t.q + t.a.transpose() * x * &t.a - x - w.transpose() * &j * w).amax();
    KspyResiduals { eq_v, eq_wv, eq_w }
}

/// Full stabilizing KSPY solve: Riccati solution, J-factorization, feedback,
/// and the residual / stability / semidefiniteness certificates.
pub fn solve_kspy(t: &PopovTriplet) -> Result<KspySolution> {
    let x = solve_stabilizing_dare(t)?;
    let (v, w) = kspy_factorize(t, &x)?;
    let f = stabilizing_feedback(t, &x)?;

    let res = residuals(t, &x, &v, &w);
    let tol = KSPY_RESIDUAL_TOL * (1.0 + x.amax());
    if res.max() > tol {
        return Err(Error::Numerical(format!(
            "KSPY residual {:.3e} above tolerance {tol:.3e}",
            res.max()
        )));
    }
    let closed_loop_radius = numkernel::spectral_radius(&(&t.a + &t.b * &f))?;
    if closed_loop_radius >= 1.0 {
        return Err(Error::Numerical(format!(
            "feedback is not stabilizing: spectral radius {closed_loop_radius}"
        )));
    }

    let x_min_eig = x
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let x_psd = x_min_eig >= -PSD_TOL * (1.0 + x.amax());

    Ok(KspySolution {
        x,
        v,
        w,
        f,
        residuals: res,
        x_min_eig,
        x_psd,
        closed_loop_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn scalar(x: f64) -> Mat {
        DMatrix::from_element(1, 1, x)
    }

    /// Scaled string control triplet at sigma = 6, gamma = 1/5, built from
    /// the scaled discrete matrices by hand so the kspy tests stand alone.
    fn string_star_triplet() -> PopovTriplet {
        let sigma = 6.0f64;
        let gamma = 0.2f64;
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let b = dmatrix![1.0 / (sigma * gamma.sqrt()), 0.0; 0.0, gamma.sqrt()];
        let c1 = dmatrix![0.0, 2.0 / gamma.sqrt()];
        let d11 = 1.0 / (sigma * gamma);
        let q = c1.transpose() * &c1;
        let l = c1.transpose() * dmatrix![d11, 0.0];
        let r = dmatrix![d11 * d11 - 1.0, 0.0; 0.0, 0.0];
        PopovTriplet::new(a, b, q, l, r, JSignature { neg: 1, pos: 1 }).unwrap()
    }

    /// Scaled string observer triplet (dual data).
    fn string_obs_triplet() -> PopovTriplet {
        let sigma = 6.0f64;
        let gamma = 0.2f64;
        let a = dmatrix![0.0, -1.0; 1.0, 0.0]; // A_d'
        let b1 = DMatrix::from_column_slice(2, 1, &[1.0 / (sigma * gamma.sqrt()), 0.0]);
        let c1 = dmatrix![0.0, 2.0 / gamma.sqrt()];
        let c2 = dmatrix![2.0 * sigma * gamma.sqrt(), 0.0];
        let d11 = 1.0 / (sigma * gamma);
        let d21 = 0.0;
        let mut b = DMatrix::zeros(2, 2);
        b.view_mut((0, 0), (2, 1)).copy_from(&c1.transpose());
        b.view_mut((0, 1), (2, 1)).copy_from(&c2.transpose());
        let q = &b1 * b1.transpose();
        let dstack = DMatrix::from_column_slice(2, 1, &[d11, d21]);
        let l = &b1 * dstack.transpose();
        let mut r = &dstack * dstack.transpose();
        r[(0, 0)] -= 1.0;
        PopovTriplet::new(a, b, q, l, r, JSignature { neg: 1, pos: 1 }).unwrap()
    }

    #[test]
    fn dare_scalar_zero_solution() {
        let t = PopovTriplet::new(
            scalar(0.0),
            scalar(1.0),
            scalar(0.0),
            scalar(0.0),
            scalar(1.0),
            JSignature { neg: 0, pos: 1 },
        )
        .unwrap();
        let x = solve_stabilizing_dare(&t).unwrap();
        assert!(x[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn dare_lyapunov_limit() {
        // A = a, B = 0: X = q / (1 - a^2).
        let (a, q) = (0.6, 0.8);
        let t = PopovTriplet::new(
            scalar(a),
            scalar(0.0),
            scalar(q),
            scalar(0.0),
            scalar(1.0),
            JSignature { neg: 0, pos: 1 },
        )
        .unwrap();
        let x = solve_stabilizing_dare(&t).unwrap();
        assert!((x[(0, 0)] - q / (1.0 - a * a)).abs() < 1e-12);
    }

    #[test]
    fn dare_string_control_closed_form() {
        // X = diag(0, 4 sigma^2 gamma / (sigma^2 gamma^2 - 1)) = diag(0, 720/11).
        let t = string_star_triplet();
        let x = solve_stabilizing_dare(&t).unwrap();
        let expect = 720.0 / 11.0;
        assert!(x[(0, 0)].abs() < 1e-10);
        assert!(x[(0, 1)].abs() < 1e-10);
        assert!((x[(1, 1)] - expect).abs() < 1e-8 * (1.0 + expect));
    }

    #[test]
    fn dare_string_observer_closed_form() {
        // Y = diag(gamma / (sigma^2 gamma^2 - 1), 0) = diag(5/11, 0).
        let t = string_obs_triplet();
        let y = solve_stabilizing_dare(&t).unwrap();
        assert!((y[(0, 0)] - 5.0 / 11.0).abs() < 1e-10);
        assert!(y[(1, 1)].abs() < 1e-10);
    }

    #[test]
    fn feedback_zero_case() {
        let t = PopovTriplet::new(
            scalar(0.5),
            scalar(1.0),
            scalar(0.0),
            scalar(0.0),
            scalar(1.0),
            JSignature { neg: 0, pos: 1 },
        )
        .unwrap();
        let f = stabilizing_feedback(&t, &scalar(0.0)).unwrap();
        assert_eq!(f[(0, 0)], 0.0);
    }

    #[test]
    fn feedback_string_closed_loop_matrix() {
        // A + BF = [0, (s^2 g^2 + 1)/(s^2 g^2 - 1); 0, 0] = [0, 2.44/0.44; 0, 0].
        let t = string_star_triplet();
        let x = solve_stabilizing_dare(&t).unwrap();
        let f = stabilizing_feedback(&t, &x).unwrap();
        let acl = &t.a + &t.b * &f;
        let expect = 2.44 / 0.44;
        assert!(acl[(0, 0)].abs() < 1e-9);
        assert!((acl[(0, 1)] - expect).abs() < 1e-8);
        assert!(acl[(1, 0)].abs() < 1e-9);
        assert!(acl[(1, 1)].abs() < 1e-9);
    }

    #[test]
    fn feedback_string_observer_is_nilpotent() {
        let t = string_obs_triplet();
        let y = solve_stabilizing_dare(&t).unwrap();
        let f = stabilizing_feedback(&t, &y).unwrap();
        let acl_t = (&t.a + &t.b * &f).transpose();
        // Strictly upper triangular: only the (1, 2) entry survives.
        assert!(acl_t[(0, 0)].abs() < 1e-9);
        assert!(acl_t[(1, 0)].abs() < 1e-9);
        assert!(acl_t[(1, 1)].abs() < 1e-9);
        assert!(numkernel::spectral_radius(&acl_t).unwrap() < 1e-6);
    }

    #[test]
    fn j_factorize_diagonal() {
        let p = dmatrix![-1.0, 0.0; 0.0, 4.0];
        let v = j_lower_factorize(&p, JSignature { neg: 1, pos: 1 }).unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((v[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(v[(0, 1)].abs() < 1e-14);
        assert!(v[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn j_factorize_dense_two_by_two() {
        let p = dmatrix![-1.0, 1.0; 1.0, 3.0];
        let j = JSignature { neg: 1, pos: 1 };
        let v = j_lower_factorize(&p, j).unwrap();
        let s3 = 3.0f64.sqrt();
        assert!((v[(0, 0)] - 2.0 / s3).abs() < 1e-12);
        assert!((v[(1, 0)] - 1.0 / s3).abs() < 1e-12);
        assert!((v[(1, 1)] - s3).abs() < 1e-12);
        let res = (v.transpose() * j.matrix() * &v - &p).amax();
        assert!(res <= 1e-10 * (1.0 + p.amax()));
    }

    #[test]
    fn j_factorize_string_inner_matrix() {
        let t = string_star_triplet();
        let x = solve_stabilizing_dare(&t).unwrap();
        let p = numkernel::symmetrize(&(&t.r + t.b.transpose() * &x * &t.b));
        let inertia = numkernel::hermitian_inertia(&p, 1e-10 * (1.0 + p.amax())).unwrap();
        assert_eq!((inertia.n_minus, inertia.n_plus, inertia.n_zero), (1, 1, 0));
        let v = j_lower_factorize(&p, t.j).unwrap();
        assert!((v[(0, 0)] - 0.552771).abs() < 1e-6);
        assert!((v[(1, 1)] - 3.618136).abs() < 1e-6);
        assert!(v[(1, 0)].abs() < 1e-9);
    }

    #[test]
    fn j_factorize_rejects_wrong_inertia() {
        let p = Mat::identity(2, 2);
        match j_lower_factorize(&p, JSignature { neg: 1, pos: 1 }) {
            Err(Error::SignCondition(_)) => {}
            other => panic!("expected sign condition error, got {other:?}"),
        }
    }

    #[test]
    fn j_factorize_is_unique_under_refactorization() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let m1 = rng.random_range(0..=2usize);
            let m2 = rng.random_range(1..=3usize);
            let j = JSignature { neg: m1, pos: m2 };
            let m = j.total();
            // Build V with the factorization's structure, then refactorize.
            let mut v = Mat::zeros(m, m);
            for i in 0..m {
                for jj in 0..m {
                    let in_v11 = i < m1 && jj < m1 && jj >= i;
                    let in_v22 = i >= m1 && jj >= m1 && jj >= i;
                    let in_v21 = i >= m1 && jj < m1;
                    if in_v11 || in_v22 || in_v21 {
                        v[(i, jj)] = rng.random_range(-1.0..1.0);
                    }
                }
            }
            for i in 0..m {
                v[(i, i)] = rng.random_range(0.5..2.0);
            }
            let p = v.transpose() * j.matrix() * &v;
            let v2 = j_lower_factorize(&numkernel::symmetrize(&p), j).unwrap();
            assert!(
                (&v2 - &v).amax() <= 1e-10 * (1.0 + v.amax()),
                "refactorization drifted by {:.3e}",
                (&v2 - &v).amax()
            );
        }
    }

    #[test]
    fn kspy_factorize_identity_case() {
        let t = PopovTriplet::new(
            Mat::zeros(2, 2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
            Mat::zeros(2, 2),
            dmatrix![-1.0, 0.0; 0.0, 1.0],
            JSignature { neg: 1, pos: 1 },
        )
        .unwrap();
        let (v, w) = kspy_factorize(&t, &Mat::zeros(2, 2)).unwrap();
        assert!((v - Mat::identity(2, 2)).amax() < 1e-14);
        assert!(w.amax() < 1e-14);
    }

    #[test]
    fn kspy_string_w_matrix() {
        // Closed forms: W = [0, -2/(sqrt(g) sqrt(s^2 g^2 - 1));
        //                    -2 s sqrt(g)/sqrt(s^2 g^2 - 1), 0].
        let (sigma, gamma) = (6.0f64, 0.2f64);
        let root = (sigma * sigma * gamma * gamma - 1.0).sqrt();
        let w01 = -2.0 / (gamma.sqrt() * root);
        let w10 = -2.0 * sigma * gamma.sqrt() / root;
        let t = string_star_triplet();
        let x = solve_stabilizing_dare(&t).unwrap();
        let (_, w) = kspy_factorize(&t, &x).unwrap();
        assert!(w[(0, 0)].abs() < 1e-8);
        assert!((w[(0, 1)] - w01).abs() < 1e-8);
        assert!((w[(1, 0)] - w10).abs() < 1e-8);
        assert!(w[(1, 1)].abs() < 1e-8);
    }

    #[test]
    fn kspy_residual_identity_on_random_triplets_with_known_x() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(1..=5usize);
            let m = rng.random_range(1..=3usize);
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let b = Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &c * c.transpose();
            let l = Mat::from_fn(n, m, |_, _| rng.random_range(-0.2..0.2));
            let r = Mat::identity(m, m) * rng.random_range(0.5..2.0);
            let Ok(t) = PopovTriplet::new(a, b, q, l, r, JSignature { neg: 0, pos: m }) else {
                continue;
            };
            let Ok(x) = solve_stabilizing_dare(&t) else {
                continue;
            };
            let (v, w) = kspy_factorize(&t, &x).unwrap();
            let res = residuals(&t, &x, &v, &w);
            assert!(
                res.max() <= 1e-8 * (1.0 + x.amax()),
                "residual {:.3e}",
                res.max()
            );
        }
    }

    #[test]
    fn solve_kspy_string_certificates() {
        let sol = solve_kspy(&string_star_triplet()).unwrap();
        assert!(sol.x_psd);
        assert!(sol.residuals.max() <= 1e-10 * (1.0 + sol.x.amax()));
        assert!(sol.closed_loop_radius < 1e-6);

        let obs = solve_kspy(&string_obs_triplet()).unwrap();
        assert!(obs.x_psd);
        assert!((obs.x[(0, 0)] - 5.0 / 11.0).abs() < 1e-9);
        assert!(obs.x[(1, 1)].abs() < 1e-9);
    }

    #[test]
    fn solve_kspy_flags_indefinite_x_below_gamma_threshold() {
        // gamma = 0.1 < 1/sigma: the stabilizing solution, if it exists,
        // must fail the X >= 0 side condition (or the sign condition breaks).
        let sigma = 6.0f64;
        let gamma = 0.1f64;
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let b = dmatrix![1.0 / (sigma * gamma.sqrt()), 0.0; 0.0, gamma.sqrt()];
        let c1 = dmatrix![0.0, 2.0 / gamma.sqrt()];
        let d11 = 1.0 / (sigma * gamma);
        let q = c1.transpose() * &c1;
        let l = c1.transpose() * dmatrix![d11, 0.0];
        let r = dmatrix![d11 * d11 - 1.0, 0.0; 0.0, 0.0];
        let t = PopovTriplet::new(a, b, q, l, r, JSignature { neg: 1, pos: 1 }).unwrap();
        match solve_kspy(&t) {
            Ok(sol) => assert!(!sol.x_psd, "X should fail the PSD side condition"),
            Err(Error::SignCondition(_)) | Err(Error::Dichotomy(_)) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn random_triplets_satisfy_all_certificates() {
        let mut rng = StdRng::seed_from_u64(99);
        let mut solved = 0;
        for _ in 0..60 {
            let n = rng.random_range(1..=6usize);
            let m = rng.random_range(1..=3usize);
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let b = Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &c * c.transpose();
            let l = Mat::zeros(n, m);
            let r = Mat::identity(m, m);
            let t = PopovTriplet::new(a, b, q, l, r, JSignature { neg: 0, pos: m }).unwrap();
            let Ok(sol) = solve_kspy(&t) else { continue };
            solved += 1;
            let tol = 1e-8 * (1.0 + sol.x.amax());
            assert!(sol.residuals.max() <= tol);
            assert!(sol.closed_loop_radius < 1.0);
            // Definite case: the LQ solution is positive semidefinite.
            assert!(sol.x_psd);
        }
        assert!(solved >= 40, "only {solved} of 60 random solves succeeded");
    }

    #[test]
    fn duality_transposed_triplet() {
        // On symmetric instances the transposed-data triplet is the dual
        // filter problem, and its stabilizing solution is the transpose of
        // the primal one. Both solves run the full pencil machinery.
        let mut rng = StdRng::seed_from_u64(3);
        let mut solved = 0;
        for _ in 0..12 {
            let n = 3;
            let raw = Mat::from_fn(n, n, |_, _| rng.random_range(-0.7..0.7));
            let a = numkernel::symmetrize(&raw);
            let c = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = numkernel::symmetrize(&(&c * c.transpose()));
            let j = JSignature { neg: 0, pos: n };
            let primal = PopovTriplet::new(
                a.clone(),
                Mat::identity(n, n),
                q.clone(),
                Mat::zeros(n, n),
                Mat::identity(n, n),
                j,
            )
            .unwrap();
            let dual = PopovTriplet::new(
                a.transpose(),
                Mat::identity(n, n),
                q.transpose(),
                Mat::zeros(n, n),
                Mat::identity(n, n),
                j,
            )
            .unwrap();
            let (Ok(xp), Ok(xd)) = (
                solve_stabilizing_dare(&primal),
                solve_stabilizing_dare(&dual),
            ) else {
                continue;
            };
            solved += 1;
            assert!(
                (&xp - xd.transpose()).amax() <= 1e-9 * (1.0 + xp.amax()),
                "dual solution is not the primal transpose"
            );
        }
        assert!(solved >= 8, "only {solved} of 12 dual pairs solved");
    }
}
