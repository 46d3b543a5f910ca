//! Complex QZ decomposition with eigenvalue reordering.
//!
//! For a square pencil lambda*M - N this computes unitary Q, Z and upper
//! triangular (S, T) with Q^H N Z = S and Q^H M Z = T, so the generalized
//! eigenvalues are alpha_j / beta_j = S[j,j] / T[j,j]. Working in complex
//! arithmetic keeps every block 1x1, which makes both the iteration and the
//! reordering step short. Pencils here come from Riccati equations and
//! invariant-zero tests, so sizes stay small and single-shift iteration is
//! plenty.
//!
//! The iteration follows the standard Hessenberg-triangular + shifted-QZ
//! scheme, including the deflation chains that push zero diagonal entries of
//! T (infinite eigenvalues) to the border of the active window.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

type CMat = DMatrix<Complex<f64>>;
type C = Complex<f64>;

const EPS: f64 = f64::EPSILON;
const SAFMIN: f64 = f64::MIN_POSITIVE;

/// Generalized Schur form of a pencil lambda*M - N.
#[derive(Debug, Clone)]
pub struct GeneralizedSchur {
    /// Q^H N Z, upper triangular.
    pub s: CMat,
    /// Q^H M Z, upper triangular with real non-negative diagonal.
    pub t: CMat,
    /// Left unitary factor.
    pub q: CMat,
    /// Right unitary factor.
    pub z: CMat,
}

impl GeneralizedSchur {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// (alpha, beta) pairs; the j-th generalized eigenvalue is alpha/beta,
    /// infinite when beta = 0.
    pub fn eigenvalue_pairs(&self) -> Vec<(C, C)> {
        (0..self.dim())
            .map(|j| (self.s[(j, j)], self.t[(j, j)]))
            .collect()
    }
}

/// |re| + |im|, the cheap magnitude used in deflation tests.
#[inline]
fn abs1(x: C) -> f64 {
    x.re.abs() + x.im.abs()
}

/// Largest |re| + |im| over all entries.
fn max_abs1(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(abs1(*x)))
}

/// Complex Givens rotation: returns (c, s, r) with c real such that
/// [c s; -conj(s) c] * [f; g] = [r; 0].
fn make_givens(f: C, g: C) -> (f64, C, C) {
    if g == C::ZERO {
        return (1.0, C::ZERO, f);
    }
    if f == C::ZERO {
        let ng = g.norm();
        return (0.0, g.conj() / ng, C::new(ng, 0.0));
    }
    let scale = f.re.abs().max(f.im.abs()).max(g.re.abs()).max(g.im.abs());
    let fs = f / scale;
    let gs = g / scale;
    let nf = fs.norm();
    let d = (nf * nf + gs.norm_sqr()).sqrt();
    let c = nf / d;
    let phase = fs / nf;
    let s = phase * gs.conj() / d;
    let r = phase * d * scale;
    (c, s, r)
}

/// Apply [c s; -conj(s) c] to rows (i, j) of `m`, columns lo..hi.
fn rot_rows(m: &mut CMat, i: usize, j: usize, c: f64, s: C, lo: usize, hi: usize) {
    for col in lo..hi {
        let a = m[(i, col)];
        let b = m[(j, col)];
        m[(i, col)] = a * c + s * b;
        m[(j, col)] = b * c - s.conj() * a;
    }
}

/// Apply the rotation from the right so that columns mix as
/// col_i <- c*col_i + s*col_j, col_j <- c*col_j - conj(s)*col_i.
fn rot_cols(m: &mut CMat, i: usize, j: usize, c: f64, s: C, lo: usize, hi: usize) {
    for row in lo..hi {
        let a = m[(row, i)];
        let b = m[(row, j)];
        m[(row, i)] = a * c + s * b;
        m[(row, j)] = b * c - s.conj() * a;
    }
}

/// Reduce (N, M) to generalized Hessenberg form: N Hessenberg, M triangular.
fn hessenberg_triangular(n_mat: &CMat, m_mat: &CMat) -> (CMat, CMat, CMat, CMat) {
    let n = n_mat.nrows();
    let mut h = n_mat.clone();
    let mut t = m_mat.clone();

    // M = QR; fold Q^H into N.
    let qr = t.clone().qr();
    let q0 = qr.q();
    t = qr.r();
    h = q0.adjoint() * &h;
    let mut q = q0;
    let mut z = CMat::identity(n, n);

    // Chase N below the first subdiagonal column by column.
    for jcol in 0..n.saturating_sub(2) {
        for jrow in ((jcol + 2)..n).rev() {
            // Row rotation kills H[jrow, jcol].
            let (c, s, r) = make_givens(h[(jrow - 1, jcol)], h[(jrow, jcol)]);
            h[(jrow - 1, jcol)] = r;
            h[(jrow, jcol)] = C::ZERO;
            rot_rows(&mut h, jrow - 1, jrow, c, s, jcol + 1, n);
            rot_rows(&mut t, jrow - 1, jrow, c, s, jrow - 1, n);
            // Q <- Q G^H.
            rot_cols(&mut q, jrow - 1, jrow, c, s.conj(), 0, n);

            // Column rotation restores the triangularity of T.
            let (c, s, r) = make_givens(t[(jrow, jrow)], t[(jrow, jrow - 1)]);
            t[(jrow, jrow)] = r;
            t[(jrow, jrow - 1)] = C::ZERO;
            rot_cols(&mut t, jrow, jrow - 1, c, s, 0, jrow);
            rot_cols(&mut h, jrow, jrow - 1, c, s, 0, n);
            rot_cols(&mut z, jrow, jrow - 1, c, s, 0, n);
        }
    }
    (h, t, q, z)
}

/// Scale column j so that T[j,j] becomes real non-negative.
fn normalize_t_diagonal(h: &mut CMat, t: &mut CMat, z: &mut CMat, j: usize) {
    let n = h.nrows();
    let absb = t[(j, j)].norm();
    if absb > SAFMIN {
        let signbc = t[(j, j)].conj() / absb;
        t[(j, j)] = C::new(absb, 0.0);
        for i in 0..j {
            t[(i, j)] *= signbc;
        }
        for i in 0..=j {
            h[(i, j)] *= signbc;
        }
        for i in 0..n {
            z[(i, j)] *= signbc;
        }
    } else {
        t[(j, j)] = C::ZERO;
    }
}

/// Single-shift QZ iteration on a Hessenberg-triangular pair.
///
/// On success S is upper triangular and T is upper triangular with real
/// non-negative diagonal.
fn qz_iteration(mut h: CMat, mut t: CMat, mut q: CMat, mut z: CMat) -> Result<GeneralizedSchur> {
    let n = h.nrows();
    if n == 0 {
        return Ok(GeneralizedSchur { s: h, t, q, z });
    }

    let anorm = max_abs1(&h).max(SAFMIN);
    let bnorm = max_abs1(&t).max(SAFMIN);
    let atol = SAFMIN.max(EPS * anorm);
    let btol = SAFMIN.max(EPS * bnorm);
    let ascale = 1.0 / anorm;
    let bscale = 1.0 / bnorm;

    let mut ilast = n - 1;
    let mut iiter = 0usize;
    let mut eshift = C::ZERO;
    let maxit = 60 * n;

    normalize_t_diagonal(&mut h, &mut t, &mut z, ilast);

    'main: for _ in 0..=maxit {
        // Deflation scan. `ifirst` is set when an active block remains.
        let mut ifirst_opt: Option<usize> = None;
        let mut split_infinite = false;

        if ilast == 0 {
            // 1x1 block: converged.
        } else if abs1(h[(ilast, ilast - 1)]) <= atol {
            h[(ilast, ilast - 1)] = C::ZERO;
        } else if t[(ilast, ilast)].norm() <= btol {
            // Infinite eigenvalue at the bottom: rotate it out so the
            // subdiagonal entry vanishes.
            t[(ilast, ilast)] = C::ZERO;
            let (c, s, r) = make_givens(h[(ilast, ilast)], h[(ilast, ilast - 1)]);
            h[(ilast, ilast)] = r;
            h[(ilast, ilast - 1)] = C::ZERO;
            rot_cols(&mut h, ilast, ilast - 1, c, s, 0, ilast);
            rot_cols(&mut t, ilast, ilast - 1, c, s, 0, ilast);
            rot_cols(&mut z, ilast, ilast - 1, c, s, 0, n);
        } else {
            let mut deflated = false;
            for j in (0..ilast).rev() {
                let ilazro = if j == 0 {
                    true
                } else if abs1(h[(j, j - 1)]) <= atol {
                    h[(j, j - 1)] = C::ZERO;
                    true
                } else {
                    false
                };

                if t[(j, j)].norm() <= btol {
                    // Interior infinite eigenvalue. Push the zero down the
                    // diagonal of T until it deflates at `ilast`.
                    t[(j, j)] = C::ZERO;
                    if ilazro {
                        let mut converged_interior = false;
                        for jch in j..ilast {
                            let (c, s, r) = make_givens(h[(jch, jch)], h[(jch + 1, jch)]);
                            h[(jch, jch)] = r;
                            h[(jch + 1, jch)] = C::ZERO;
                            rot_rows(&mut h, jch, jch + 1, c, s, jch + 1, n);
                            rot_rows(&mut t, jch, jch + 1, c, s, jch + 1, n);
                            rot_cols(&mut q, jch, jch + 1, c, s.conj(), 0, n);
                            if t[(jch + 1, jch + 1)].norm() >= btol {
                                if jch + 1 >= ilast {
                                    converged_interior = true;
                                } else {
                                    ifirst_opt = Some(jch + 1);
                                }
                                break;
                            }
                            t[(jch + 1, jch + 1)] = C::ZERO;
                        }
                        if ifirst_opt.is_none() && !converged_interior {
                            split_infinite = true;
                        }
                        deflated = true;
                        break;
                    } else {
                        // T[j,j] = 0 but H still coupled below: chase the
                        // zero with paired rotations.
                        for jch in j..ilast {
                            let (c, s, r) = make_givens(t[(jch, jch + 1)], t[(jch + 1, jch + 1)]);
                            t[(jch, jch + 1)] = r;
                            t[(jch + 1, jch + 1)] = C::ZERO;
                            if jch + 2 < n {
                                rot_rows(&mut t, jch, jch + 1, c, s, jch + 2, n);
                            }
                            rot_rows(&mut h, jch, jch + 1, c, s, jch.saturating_sub(1), n);
                            rot_cols(&mut q, jch, jch + 1, c, s.conj(), 0, n);

                            let (c, s, r) = make_givens(h[(jch + 1, jch)], h[(jch + 1, jch - 1)]);
                            h[(jch + 1, jch)] = r;
                            h[(jch + 1, jch - 1)] = C::ZERO;
                            rot_cols(&mut h, jch, jch - 1, c, s, 0, jch + 1);
                            rot_cols(&mut t, jch, jch - 1, c, s, 0, jch);
                            rot_cols(&mut z, jch, jch - 1, c, s, 0, n);
                        }
                        split_infinite = true;
                        deflated = true;
                        break;
                    }
                } else if ilazro {
                    ifirst_opt = Some(j);
                    break;
                }
            }
            if !deflated && ifirst_opt.is_none() {
                return Err(Error::Numerical(
                    "qz deflation scan failed to find a split".into(),
                ));
            }
        }

        if split_infinite {
            // An infinite eigenvalue reached the border; re-run the scan.
            continue 'main;
        }

        let Some(ifirst) = ifirst_opt else {
            // Eigenvalue at `ilast` converged.
            normalize_t_diagonal(&mut h, &mut t, &mut z, ilast);
            if ilast == 0 {
                return Ok(GeneralizedSchur { s: h, t, q, z });
            }
            ilast -= 1;
            iiter = 0;
            eshift = C::ZERO;
            continue 'main;
        };

        // Shift from the trailing 2x2 of (H, T) restricted to the window.
        iiter += 1;
        let shift = if !iiter.is_multiple_of(10) {
            let u12 = (t[(ilast - 1, ilast)] * bscale) / (t[(ilast, ilast)] * bscale);
            let ad11 = (h[(ilast - 1, ilast - 1)] * ascale) / (t[(ilast - 1, ilast - 1)] * bscale);
            let ad21 = (h[(ilast, ilast - 1)] * ascale) / (t[(ilast - 1, ilast - 1)] * bscale);
            let ad12 = (h[(ilast - 1, ilast)] * ascale) / (t[(ilast, ilast)] * bscale);
            let ad22 = (h[(ilast, ilast)] * ascale) / (t[(ilast, ilast)] * bscale);
            let abi22 = ad22 - u12 * ad21;
            let t1 = (ad11 + abi22) * 0.5;
            let rtdisc = (t1 * t1 + ad12 * ad21 - ad11 * ad22).sqrt();
            let diff = t1 - abi22;
            if diff.re * rtdisc.re + diff.im * rtdisc.im <= 0.0 {
                t1 + rtdisc
            } else {
                t1 - rtdisc
            }
        } else {
            // Exceptional shift.
            eshift += (h[(ilast, ilast - 1)] * ascale) / (t[(ilast - 1, ilast - 1)] * bscale);
            eshift
        };

        // Start the sweep as high as the shifted column is negligible.
        let mut istart = ifirst;
        let mut ctemp = h[(ifirst, ifirst)] * ascale - shift * (t[(ifirst, ifirst)] * bscale);
        for j in ((ifirst + 1)..ilast).rev() {
            let candidate = h[(j, j)] * ascale - shift * (t[(j, j)] * bscale);
            let mut temp = abs1(candidate);
            let mut temp2 = ascale * abs1(h[(j + 1, j)]);
            let tempr = temp.max(temp2);
            if tempr < 1.0 && tempr > 0.0 {
                temp /= tempr;
                temp2 /= tempr;
            }
            if abs1(h[(j, j - 1)]) * temp2 <= temp * atol {
                istart = j;
                ctemp = candidate;
                break;
            }
        }

        // Bulge chase.
        let (mut c, mut s, _) = make_givens(ctemp, h[(istart + 1, istart)] * ascale);
        for j in istart..ilast {
            if j > istart {
                let (c2, s2, r) = make_givens(h[(j, j - 1)], h[(j + 1, j - 1)]);
                h[(j, j - 1)] = r;
                h[(j + 1, j - 1)] = C::ZERO;
                c = c2;
                s = s2;
            }
            rot_rows(&mut h, j, j + 1, c, s, j, n);
            rot_rows(&mut t, j, j + 1, c, s, j, n);
            rot_cols(&mut q, j, j + 1, c, s.conj(), 0, n);

            let (c2, s2, r) = make_givens(t[(j + 1, j + 1)], t[(j + 1, j)]);
            t[(j + 1, j + 1)] = r;
            t[(j + 1, j)] = C::ZERO;
            rot_cols(&mut h, j + 1, j, c2, s2, 0, n.min(j + 3));
            rot_cols(&mut t, j + 1, j, c2, s2, 0, j + 1);
            rot_cols(&mut z, j + 1, j, c2, s2, 0, n);
        }
    }

    Err(Error::Numerical(format!(
        "qz iteration did not converge within {maxit} sweeps"
    )))
}

/// Full QZ decomposition of the pencil lambda*M - N.
pub fn qz(n_mat: &CMat, m_mat: &CMat) -> Result<GeneralizedSchur> {
    let n = n_mat.nrows();
    if n_mat.ncols() != n || m_mat.nrows() != n || m_mat.ncols() != n {
        return Err(Error::Dimension(
            "qz requires square matrices of equal size".into(),
        ));
    }
    let (h, t, q, z) = hessenberg_triangular(n_mat, m_mat);
    qz_iteration(h, t, q, z)
}

/// Swap the adjacent generalized eigenvalues at positions (j, j+1) of an
/// upper-triangular pair, updating Q and Z.
///
/// Uses the eigenvector construction: v spans the right eigenvector of the
/// trailing eigenvalue of the 2x2 sub-pencil, and since S v is parallel to
/// T v one left rotation restores triangularity after the column rotation.
fn swap_adjacent(gs: &mut GeneralizedSchur, j: usize) -> Result<()> {
    let n = gs.dim();
    let (a11, a12, a22) = (gs.s[(j, j)], gs.s[(j, j + 1)], gs.s[(j + 1, j + 1)]);
    let (b11, b12, b22) = (gs.t[(j, j)], gs.t[(j, j + 1)], gs.t[(j + 1, j + 1)]);

    let v1 = a22 * b12 - a12 * b22;
    let v2 = a11 * b22 - a22 * b11;
    let scale = abs1(a11)
        .max(abs1(a12))
        .max(abs1(a22))
        .max(abs1(b11))
        .max(abs1(b12))
        .max(abs1(b22));
    if abs1(v1) + abs1(v2) <= EPS * scale * scale {
        // Eigenvalues coincide to working precision; nothing to swap.
        return Ok(());
    }

    // Column rotation bringing v into the leading position. make_givens
    // annihilation means v is proportional to [cz; conj(sz)], so the column
    // mix that reproduces the eigenvector direction uses conj(sz).
    let (cz, sz, _) = make_givens(v1, v2);
    let sz = sz.conj();
    // Image of v under both matrices (parallel); rotate the larger one.
    let sv = (a11 * v1 + a12 * v2, a22 * v2);
    let tv = (b11 * v1 + b12 * v2, b22 * v2);
    let use_s = abs1(sv.0) + abs1(sv.1) >= abs1(tv.0) + abs1(tv.1);
    let (w1, w2) = if use_s { sv } else { tv };
    let (cq, sq, _) = make_givens(w1, w2);

    rot_cols(&mut gs.s, j, j + 1, cz, sz, 0, n);
    rot_cols(&mut gs.t, j, j + 1, cz, sz, 0, n);
    rot_cols(&mut gs.z, j, j + 1, cz, sz, 0, n);
    rot_rows(&mut gs.s, j, j + 1, cq, sq, 0, n);
    rot_rows(&mut gs.t, j, j + 1, cq, sq, 0, n);
    rot_cols(&mut gs.q, j, j + 1, cq, sq.conj(), 0, n);

    gs.s[(j + 1, j)] = C::ZERO;
    gs.t[(j + 1, j)] = C::ZERO;
    Ok(())
}

/// Reorder the generalized Schur form so that every eigenvalue selected by
/// `select(alpha, beta)` occupies the leading positions. Returns the number
/// of selected eigenvalues.
pub fn reorder(gs: &mut GeneralizedSchur, select: impl Fn(C, C) -> bool) -> Result<usize> {
    let n = gs.dim();
    let mut selected: Vec<bool> = (0..n).map(|j| select(gs.s[(j, j)], gs.t[(j, j)])).collect();
    let total = selected.iter().filter(|&&b| b).count();

    for target in 0..total {
        let src = (target..n)
            .find(|&j| selected[j])
            .expect("selected count is consistent");
        for j in (target..src).rev() {
            swap_adjacent(gs, j)?;
            selected.swap(j, j + 1);
        }
    }
    Ok(total)
}
