//! Closed-loop assembly, assumption verification, transfer-function
//! evaluation, and H-infinity norms.
//!
//! The closed loop of a plant and a compensator is formed by the standard
//! fractional interconnection; it is well-posed iff S = I - D22 D_c is
//! invertible. The discrete H-infinity norm is a supremum over the unit
//! circle, computed by a dense grid sweep plus golden-section refinement.
//! The continuous-time norm of the transport closed loop equals the
//! discrete norm of the same quadruple because z = exp(s p(1)) maps the
//! right half-plane boundary onto the unit circle.

use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkernel::{self, CMat, Mat, Pencil};
use crate::pde::DiscretePlant;
use crate::synth::{ControllerRealization, StateSpace, TwoPortStateSpace};

/// Default frequency-grid resolution.
pub const DEFAULT_GRID: usize = 4096;

/// Default golden-section refinement tolerance (interval width in theta).
pub const DEFAULT_REFINE_TOL: f64 = 1e-10;

/// Margin for strict inequalities in the assumption checks.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Environment variable capping the sweep thread count.
pub const THREADS_ENV: &str = "HYPHINF_THREADS";

/// Anything that exposes a state-space quadruple (A, B, C, D).
pub trait Lti {
    fn quad(&self) -> (&Mat, &Mat, &Mat, &Mat);
}

impl Lti for StateSpace {
    fn quad(&self) -> (&Mat, &Mat, &Mat, &Mat) {
        (&self.a, &self.b, &self.c, &self.d)
    }
}

/// Closed-loop system from disturbance to regulated output, carrying the
/// travel time of the underlying transport plant and the well-posedness
/// witness det(I - D22 D_c).
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub travel_time: f64,
    pub s_det: f64,
}

impl Lti for ClosedLoop {
    fn quad(&self) -> (&Mat, &Mat, &Mat, &Mat) {
        (&self.a, &self.b, &self.c, &self.d)
    }
}

impl ClosedLoop {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn as_state_space(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }
}

/// Form the closed loop of the plant and the compensator:
/// ```text
/// A_cl = | A + B2 S~^-1 Dc C2     B2 S~^-1 Cc          |
///        | Bc S^-1 C2             Ac + Bc S^-1 D22 Cc  |
/// ```
/// with S = I - D22 Dc, S~ = I - Dc D22, plus the matching B_cl, C_cl, D_cl.
pub fn close_loop(p: &DiscretePlant, c: &ControllerRealization) -> Result<ClosedLoop> {
    p.validate()?;
    c.validate()?;
    let dims = p.dims();
    if c.b.ncols() != dims.m || c.c.nrows() != dims.p {
        return Err(Error::Dimension(format!(
            "compensator must map {} measurements to {} controls, got {} -> {}",
            dims.m,
            dims.p,
            c.b.ncols(),
            c.c.nrows()
        )));
    }
    let n_c = c.order();

    let s = Mat::identity(dims.m, dims.m) - &p.d22 * &c.d;
    let s_det = s.clone().lu().determinant();
    let s_inv = s
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("closed loop ill-posed: I - D22 Dc singular".into()))?;
    let s_tilde = Mat::identity(dims.p, dims.p) - &c.d * &p.d22;
    let s_tilde_inv = s_tilde
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("closed loop ill-posed: I - Dc D22 singular".into()))?;

    // Identity used as a numerical cross-check: S~^-1 Dc = Dc S^-1.
    let lhs = &s_tilde_inv * &c.d;
    let rhs = &c.d * &s_inv;
    let gap = (&lhs - &rhs).amax();
    if gap > 1e-12 * (1.0 + lhs.amax()) {
        return Err(Error::Numerical(format!(
            "feedthrough identity S~^-1 Dc = Dc S^-1 violated by {gap:.3e}"
        )));
    }

    let n = dims.n;
    let mut a = Mat::zeros(n + n_c, n + n_c);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(&p.a + &p.b2 * &s_tilde_inv * &c.d * &p.c2));
    a.view_mut((0, n), (n, n_c))
        .copy_from(&(&p.b2 * &s_tilde_inv * &c.c));
    a.view_mut((n, 0), (n_c, n))
        .copy_from(&(&c.b * &s_inv * &p.c2));
    a.view_mut((n, n), (n_c, n_c))
        .copy_from(&(&c.a + &c.b * &s_inv * &p.d22 * &c.c));

    let mut b = Mat::zeros(n + n_c, dims.k);
    b.view_mut((0, 0), (n, dims.k))
        .copy_from(&(&p.b1 + &p.b2 * &s_tilde_inv * &c.d * &p.d21));
    b.view_mut((n, 0), (n_c, dims.k))
        .copy_from(&(&c.b * &s_inv * &p.d21));

    let mut cc = Mat::zeros(dims.l, n + n_c);
    cc.view_mut((0, 0), (dims.l, n))
        .copy_from(&(&p.c1 + &p.d12 * &c.d * &s_inv * &p.c2));
    cc.view_mut((0, n), (dims.l, n_c))
        .copy_from(&(&p.d12 * &s_tilde_inv * &c.c));

    let d = &p.d11 + &p.d12 * &c.d * &s_inv * &p.d21;

    Ok(ClosedLoop {
        a,
        b,
        c: cc,
        d,
        travel_time: p.travel_time,
        s_det,
    })
}

/// Evaluate `D + C (zI - A)^-1 B` at a complex point, guarding against
/// evaluation too close to a pole.
pub fn transfer_eval<S: Lti>(sys: &S, z: Complex<f64>) -> Result<CMat> {
    let (a, _, _, _) = sys.quad();
    if a.nrows() > 0 {
        let eigs = numkernel::eigenvalues(a)?;
        let dist = eigs
            .iter()
            .map(|l| (z - l).norm())
            .fold(f64::INFINITY, f64::min);
        if dist <= 1e-12 {
            return Err(Error::PoleProximity(format!(
                "z within {dist:.3e} of the spectrum"
            )));
        }
    }
    transfer_eval_raw(sys, z)
}

/// Transfer evaluation without the spectrum distance check; used inside
/// sweeps that already guarantee stability.
fn transfer_eval_raw<S: Lti>(sys: &S, z: Complex<f64>) -> Result<CMat> {
    let (a, b, c, d) = sys.quad();
    let n = a.nrows();
    let dc = d.map(|x| Complex::new(x, 0.0));
    if n == 0 {
        return Ok(dc);
    }
    let mut zia = a.map(|x| Complex::new(-x, 0.0));
    for i in 0..n {
        zia[(i, i)] += z;
    }
    let bc = b.map(|x| Complex::new(x, 0.0));
    let x = zia
        .lu()
        .solve(&bc)
        .ok_or_else(|| Error::PoleProximity("zI - A is singular".into()))?;
    let cc = c.map(|x| Complex::new(x, 0.0));
    Ok(dc + cc * x)
}

/// Largest singular value of the transfer function at e^{i theta}.
fn gain_at<S: Lti>(sys: &S, theta: f64) -> Result<f64> {
    let z = Complex::new(theta.cos(), theta.sin());
    Ok(numkernel::max_singular_value_complex(&transfer_eval_raw(
        sys, z,
    )?))
}

/// Discrete H-infinity norm: grid sweep + golden-section refinement.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HinfNorm {
    pub norm: f64,
    pub theta: f64,
}

fn sweep_parallelism() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get().min(8))
                .unwrap_or(1)
        })
}

/// Evaluate the gain on a uniform theta grid, data-parallel over indices
/// with a deterministic (index-ordered) result.
fn sweep_gains<S: Lti + Sync>(sys: &S, grid: usize) -> Result<Vec<f64>> {
    let threads = sweep_parallelism().min(grid).max(1);
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    if threads == 1 || grid < 64 {
        return (0..grid).map(|i| gain_at(sys, i as f64 * step)).collect();
    }
    let chunk = grid.div_ceil(threads);
    let mut out: Vec<Result<Vec<f64>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(grid);
            handles.push(scope.spawn(move || {
                (lo..hi)
                    .map(|i| gain_at(sys, i as f64 * step))
                    .collect::<Result<Vec<f64>>>()
            }));
        }
        for h in handles {
            out.push(h.join().expect("sweep worker panicked"));
        }
    });
    let mut gains = Vec::with_capacity(grid);
    for chunk_result in out {
        gains.extend(chunk_result?);
    }
    Ok(gains)
}

/// Golden-section maximization of the gain on [lo, hi].
fn golden_refine<S: Lti>(sys: &S, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = gain_at(sys, c)?;
    let mut fd = gain_at(sys, d)?;
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = gain_at(sys, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = gain_at(sys, d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((gain_at(sys, mid)?.max(fc).max(fd), mid))
}

/// Discrete-time H-infinity norm over the unit circle. Requires a stable A.
/// Ties in the grid maximum break toward the smaller theta.
pub fn hinf_norm_disc<S: Lti + Sync>(
    sys: &S,
    grid_size: usize,
    refine_tol: f64,
) -> Result<HinfNorm> {
    let (a, _, _, _) = sys.quad();
    if a.nrows() > 0 {
        let rho = numkernel::spectral_radius(a)?;
        if rho >= 1.0 {
            return Err(Error::Numerical(format!(
                "norm undefined on the circle: spectral radius {rho:.6} >= 1"
            )));
        }
    }
    let grid = grid_size.max(1);
    let gains = sweep_gains(sys, grid)?;
    if grid == 1 {
        return Ok(HinfNorm {
            norm: gains[0],
            theta: 0.0,
        });
    }
    let step = 2.0 * std::f64::consts::PI / grid as f64;

    // Indices of the top-3 grid values (deterministic order).
    let mut order: Vec<usize> = (0..grid).collect();
    order.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]).then(i.cmp(&j)));
    let mut best = HinfNorm {
        norm: f64::NEG_INFINITY,
        theta: 0.0,
    };
    for &idx in order.iter().take(3) {
        let lo = (idx as f64 - 1.0) * step;
        let hi = (idx as f64 + 1.0) * step;
        let (val, theta) = golden_refine(sys, lo, hi, refine_tol)?;
        let theta = theta.rem_euclid(2.0 * std::f64::consts::PI);
        if val > best.norm || (val == best.norm && theta < best.theta) {
            best = HinfNorm { norm: val, theta };
        }
    }
    // The refined value can never undercut the grid.
    let (grid_max_idx, grid_max) =
        gains
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &g)| {
                if g > acc.1 {
                    (i, g)
                } else {
                    acc
                }
            });
    if grid_max > best.norm {
        best = HinfNorm {
            norm: grid_max,
            theta: grid_max_idx as f64 * step,
        };
    }
    Ok(best)
}

/// Continuous-time H-infinity norm of the transport closed loop. The
/// substitution z = exp(s p(1)) makes it equal to the discrete norm of the
/// same quadruple; the reported frequency is omega = theta / p(1).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HinfNormCont {
    pub norm: f64,
    pub theta: f64,
    pub omega: f64,
}

pub fn hinf_norm_cont(cl: &ClosedLoop) -> Result<HinfNormCont> {
    let disc = hinf_norm_disc(cl, DEFAULT_GRID, DEFAULT_REFINE_TOL)?;
    Ok(HinfNormCont {
        norm: disc.norm,
        theta: disc.theta,
        omega: disc.theta / cl.travel_time,
    })
}

/// One verified condition with its worst point and margin.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub condition: String,
    pub worst_point: String,
    pub margin: f64,
}

/// Stabilizability, detectability and the two unit-circle rank conditions.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub stabilizable: bool,
    pub detectable: bool,
    pub rank12: bool,
    pub rank21: bool,
    pub witnesses: Vec<Witness>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.stabilizable && self.detectable && self.rank12 && self.rank21
    }
}

/// Stack [zI - A, B] horizontally in complex arithmetic.
fn pbh_row(a: &Mat, b: &Mat, z: Complex<f64>) -> CMat {
    let n = a.nrows();
    let mut m = CMat::zeros(n, n + b.ncols());
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += z;
    }
    for i in 0..n {
        for j in 0..b.ncols() {
            m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
        }
    }
    m
}

/// Stack [zI - A; C] vertically in complex arithmetic.
fn pbh_col(a: &Mat, c: &Mat, z: Complex<f64>) -> CMat {
    let n = a.nrows();
    let rows = n + c.nrows();
    let mut m = CMat::zeros(rows, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += z;
    }
    for i in 0..c.nrows() {
        for j in 0..n {
            m[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    m
}

/// Unit-circle rank condition for the block [[e^{i theta} I - A, -B], [-C, -D]].
/// When the block is square its zeros come from the pencil
/// `lambda diag(I, 0) - [[A, B], [C, D]]` and the test is exact; otherwise a
/// dense theta scan with local refinement bounds the minimum singular value.
fn circle_rank_condition(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<(bool, Witness)> {
    let n = a.nrows();
    let (rows, cols) = (n + c.nrows(), n + b.ncols());
    let scale = 1.0 + a.amax().max(b.amax()).max(c.amax()).max(d.amax());
    let threshold = 1e-8 * scale;

    let block_at = |theta: f64| -> CMat {
        let z = Complex::new(theta.cos(), theta.sin());
        let mut m = CMat::zeros(rows, cols);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
            }
            m[(i, i)] += z;
        }
        for i in 0..n {
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(-b[(i, j)], 0.0);
            }
        }
        for i in 0..c.nrows() {
            for j in 0..n {
                m[(n + i, j)] = Complex::new(-c[(i, j)], 0.0);
            }
            for j in 0..d.ncols() {
                m[(n + i, n + j)] = Complex::new(-d[(i, j)], 0.0);
            }
        }
        m
    };

    if rows == cols {
        // Exact route: invariant zeros of the pencil.
        let mut big_m = Mat::zeros(rows, rows);
        for i in 0..n {
            big_m[(i, i)] = 1.0;
        }
        let mut big_n = Mat::zeros(rows, rows);
        big_n.view_mut((0, 0), (n, n)).copy_from(a);
        big_n.view_mut((0, n), (n, b.ncols())).copy_from(b);
        big_n.view_mut((n, 0), (c.nrows(), n)).copy_from(c);
        big_n.view_mut((n, n), (d.nrows(), d.ncols())).copy_from(d);
        let pencil = Pencil::new(big_m, big_n)?;
        let eigs = numkernel::generalized_eigenvalues(&pencil)?;
        let pencil_scale = pencil.m.amax().max(pencil.n.amax()).max(1.0);

        // A singular pencil (alpha = beta = 0) means rank deficiency for
        // every theta; fall through to the scan to measure it.
        let singular = eigs.iter().any(|e| {
            e.alpha.norm() <= 1e-10 * pencil_scale && e.beta.norm() <= 1e-10 * pencil_scale
        });
        if !singular {
            let mut worst_gap = f64::INFINITY;
            let mut worst_theta = 0.0f64;
            for e in &eigs {
                if !e.is_finite(pencil_scale) {
                    continue;
                }
                let v = e.value();
                let gap = (v.norm() - 1.0).abs();
                if gap < worst_gap {
                    worst_gap = gap;
                    worst_theta = v.arg();
                }
            }
            let ok = worst_gap > 1e-8;
            // Margin: the minimum singular value at the angle of the zero
            // closest to the circle (or at 0 if there are no finite zeros).
            let margin = numkernel::min_singular_value_complex(&block_at(worst_theta));
            return Ok((
                ok,
                Witness {
                    condition: String::new(),
                    worst_point: format!("theta = {worst_theta:.12}"),
                    margin,
                },
            ));
        }
    }

    // Scan route.
    let samples = 4096usize;
    let mut worst = (0usize, f64::INFINITY);
    for i in 0..samples {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
        let sv = numkernel::min_singular_value_complex(&block_at(theta));
        if sv < worst.1 {
            worst = (i, sv);
        }
    }
    // Local refinement around the scan minimum by trisection.
    let step = 2.0 * std::f64::consts::PI / samples as f64;
    let (mut lo, mut hi) = (worst.0 as f64 * step - step, worst.0 as f64 * step + step);
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let s1 = numkernel::min_singular_value_complex(&block_at(m1));
        let s2 = numkernel::min_singular_value_complex(&block_at(m2));
        if s1 <= s2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let theta_min = 0.5 * (lo + hi);
    let margin = numkernel::min_singular_value_complex(&block_at(theta_min)).min(worst.1);
    Ok((
        margin > threshold,
        Witness {
            condition: String::new(),
            worst_point: format!("theta = {theta_min:.12}"),
            margin,
        },
    ))
}

/// Verify stabilizability, detectability and the two regularity rank
/// conditions of the plant. Failures are report entries, not errors.
pub fn check_assumptions(p: &DiscretePlant) -> Result<AssumptionReport> {
    let scale = 1.0 + p.a.amax().max(p.b2.amax()).max(p.c2.amax());
    let threshold = STRICT_MARGIN * scale;
    let eigs = numkernel::eigenvalues(&p.a)?;

    let mut witnesses = Vec::new();
    let mut stabilizable = true;
    let mut detectable = true;
    let mut stab_margin = f64::INFINITY;
    let mut det_margin = f64::INFINITY;
    let mut stab_worst = "no eigenvalue outside the disc".to_string();
    let mut det_worst = stab_worst.clone();

    for l in &eigs {
        if l.norm() <= 1.0 - STRICT_MARGIN {
            continue;
        }
        let sv_b = numkernel::min_singular_value_complex(&pbh_row(&p.a, &p.b2, *l));
        if sv_b < stab_margin {
            stab_margin = sv_b;
            stab_worst = format!("lambda = {:.9} + {:.9}i", l.re, l.im);
        }
        if sv_b <= threshold {
            stabilizable = false;
        }
        let sv_c = numkernel::min_singular_value_complex(&pbh_col(&p.a, &p.c2, *l));
        if sv_c < det_margin {
            det_margin = sv_c;
            det_worst = format!("lambda = {:.9} + {:.9}i", l.re, l.im);
        }
        if sv_c <= threshold {
            detectable = false;
        }
    }
    witnesses.push(Witness {
        condition: "stabilizable".into(),
        worst_point: stab_worst,
        margin: if stab_margin.is_finite() {
            stab_margin
        } else {
            f64::INFINITY
        },
    });
    witnesses.push(Witness {
        condition: "detectable".into(),
        worst_point: det_worst,
        margin: if det_margin.is_finite() {
            det_margin
        } else {
            f64::INFINITY
        },
    });

    let (rank12, mut w12) = circle_rank_condition(&p.a, &p.b2, &p.c1, &p.d12)?;
    w12.condition = "rank12".into();
    witnesses.push(w12);
    let (rank21, mut w21) = circle_rank_condition(&p.a, &p.b1, &p.c2, &p.d21)?;
    w21.condition = "rank21".into();
    witnesses.push(w21);

    Ok(AssumptionReport {
        stabilizable,
        detectable,
        rank12,
        rank21,
        witnesses,
    })
}

/// Frequency-response table over the uniform theta grid, with
/// omega = theta / p(1).
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub norm_g: Vec<f64>,
}

pub fn frequency_response(cl: &ClosedLoop, grid_size: usize) -> Result<FrequencyResponse> {
    let rho = numkernel::spectral_radius(&cl.a)?;
    if cl.order() > 0 && rho >= 1.0 {
        return Err(Error::Numerical(format!(
            "norm undefined on the circle: spectral radius {rho:.6} >= 1"
        )));
    }
    let grid = grid_size.max(1);
    let gains = sweep_gains(cl, grid)?;
    let step = 2.0 * std::f64::consts::PI / grid as f64;
    let theta: Vec<f64> = (0..grid).map(|i| i as f64 * step).collect();
    let omega: Vec<f64> = theta.iter().map(|t| t / cl.travel_time).collect();
    Ok(FrequencyResponse {
        theta,
        omega,
        norm_g: gains,
    })
}

/// Convenience: a two-port system viewed from input 1 to output 1 (used in
/// tests to evaluate generator transfer functions).
pub fn two_port_channel_11(g: &TwoPortStateSpace) -> StateSpace {
    StateSpace {
        a: g.a.clone(),
        b: g.b1.clone(),
        c: g.c1.clone(),
        d: g.d11.clone(),
    }
}
