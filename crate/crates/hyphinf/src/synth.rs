//! The constructive synthesis pipeline.
//!
//! Given a discrete plant and a performance level gamma, the pipeline is:
//! scale the plant to the gamma = 1 normal form, build the control and
//! observer Popov triplets, check the three solvability conditions
//! (stabilizing X >= 0, stabilizing Y >= 0, rho(XY) < 1), solve the cross
//! triplet for Z = Y(I - XY)^-1, assemble the compensator generator, undo
//! the scaling, close the generator against a free stable parameter of
//! norm < gamma, and finally correct for the plant's direct feedthrough
//! from control to measurement.
//!
//! Channel bookkeeping: every J-signature is sized by the triplet's input
//! partition, negative block first. The control triplet splits (k, p), the
//! observer triplet (l, m), the cross triplet (p, m).

use serde::Serialize;

use crate::clp;
use crate::error::{Error, Result};
use crate::kspy::{self, JSignature, KspySolution, PopovTriplet};
use crate::numkernel::{self, Mat};
use crate::pde::DiscretePlant;

/// A plain state-space quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let ss = Self { a, b, c, d };
        ss.validate()?;
        Ok(ss)
    }

    pub fn validate(&self) -> Result<()> {
        let (na, nu, ny) = (self.a.nrows(), self.b.ncols(), self.c.nrows());
        if self.a.ncols() != na
            || self.b.nrows() != na
            || self.c.ncols() != na
            || self.d.nrows() != ny
            || self.d.ncols() != nu
        {
            return Err(Error::Dimension(format!(
                "state space blocks disagree: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols(),
                self.d.nrows(),
                self.d.ncols()
            )));
        }
        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("D", &self.d),
        ] {
            numkernel::ensure_finite(m, name)?;
        }
        Ok(())
    }

    /// The zero system with the given input/output dimensions and no state.
    pub fn zero(ny: usize, nu: usize) -> Self {
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, nu),
            c: Mat::zeros(ny, 0),
            d: Mat::zeros(ny, nu),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// A dynamic compensator is just a state-space quadruple.
pub type ControllerRealization = StateSpace;

/// Two-port state space: one system with partitioned inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPortStateSpace {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d21: Mat,
    pub d22: Mat,
}

/// Status of one solvability condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// Smallest eigenvalue of the Riccati solution (the X >= 0 margin).
    pub min_eigenvalue: f64,
    /// Largest KSPY residual.
    pub residual: f64,
    /// Human-readable failure reason when the solve itself failed.
    pub detail: Option<String>,
}

impl ConditionReport {
    fn failed(detail: String) -> Self {
        Self {
            holds: false,
            min_eigenvalue: f64::NAN,
            residual: f64::NAN,
            detail: Some(detail),
        }
    }

    fn from_solution(sol: &KspySolution) -> Self {
        Self {
            holds: sol.x_psd,
            min_eigenvalue: sol.x_min_eig,
            residual: sol.residuals.max(),
            detail: (!sol.x_psd).then(|| "Riccati solution is not positive semidefinite".into()),
        }
    }
}

/// Everything produced on the way to the compensator generator.
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub condition_a: ConditionReport,
    pub condition_b: ConditionReport,
    /// rho(X Y); condition (c) holds when this is < 1.
    pub rho_xy: f64,
    pub condition_c: bool,
    pub x: Option<Mat>,
    pub y: Option<Mat>,
    pub intermediates: Option<Intermediates>,
    pub sigma_g: Option<TwoPortStateSpace>,
}

/// Intermediate matrices of the generator construction.
#[derive(Debug, Clone)]
pub struct Intermediates {
    pub f: Mat,
    pub v_c: Mat,
    pub w_c: Mat,
    pub v_o: Mat,
    pub w_o: Mat,
    pub z: Mat,
    pub v_x: Mat,
    pub w_x: Mat,
    pub s_c: Mat,
    pub s_x: Mat,
    pub c2_f1: Mat,
    /// Gap between the cross Riccati solution and Y (I - XY)^-1.
    pub z_formula_gap: f64,
}

impl SynthesisReport {
    pub fn all_conditions_hold(&self) -> bool {
        self.condition_a.holds && self.condition_b.holds && self.condition_c
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        if !self.condition_a.holds {
            Some("condition_a")
        } else if !self.condition_b.holds {
            Some("condition_b")
        } else if !self.condition_c {
            Some("condition_c")
        } else {
            None
        }
    }
}

/// Scale the plant so that solving at level 1 solves the original at level
/// gamma: B1, C1 shrink by sqrt(gamma), B2, C2 grow by sqrt(gamma), D11 by
/// gamma, D22 by gamma, D12 and D21 unchanged.
pub fn scale_plant(p: &DiscretePlant, gamma: f64) -> Result<DiscretePlant> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let sg = gamma.sqrt();
    let scaled = DiscretePlant {
        a: p.a.clone(),
        b1: &p.b1 / sg,
        b2: &p.b2 * sg,
        c1: &p.c1 / sg,
        c2: &p.c2 * sg,
        d11: &p.d11 / gamma,
        d12: p.d12.clone(),
        d21: p.d21.clone(),
        d22: &p.d22 * gamma,
        travel_time: p.travel_time,
    };
    scaled.validate()?;
    Ok(scaled)
}

/// Control Popov triplet: inputs [d; u] with signature (k, p).
pub fn build_popov_star(p: &DiscretePlant) -> Result<PopovTriplet> {
    let dims = p.dims();
    let b = hstack(&p.b1, &p.b2);
    let d_row = hstack(&p.d11, &p.d12);
    let q = p.c1.transpose() * &p.c1;
    let l = p.c1.transpose() * &d_row;
    let mut r = d_row.transpose() * &d_row;
    for i in 0..dims.k {
        r[(i, i)] -= 1.0;
    }
    PopovTriplet::new(
        p.a.clone(),
        b,
        numkernel::symmetrize(&q),
        l,
        numkernel::symmetrize(&r),
        JSignature {
            neg: dims.k,
            pos: dims.p,
        },
    )
}

/// Observer Popov triplet: the dual construction on (A', [C1' C2']) with
/// signature (l, m).
pub fn build_popov_obs(p: &DiscretePlant) -> Result<PopovTriplet> {
    let dims = p.dims();
    let b = hstack(&p.c1.transpose(), &p.c2.transpose());
    let d_col = vstack(&p.d11, &p.d21); // (l + m) x k
    let q = &p.b1 * p.b1.transpose();
    let l = &p.b1 * d_col.transpose();
    let mut r = &d_col * d_col.transpose();
    for i in 0..dims.l {
        r[(i, i)] -= 1.0;
    }
    PopovTriplet::new(
        p.a.transpose(),
        b,
        numkernel::symmetrize(&q),
        l,
        numkernel::symmetrize(&r),
        JSignature {
            neg: dims.l,
            pos: dims.m,
        },
    )
}

/// Cross Popov triplet built from the control solve, with signature (p, m).
pub fn build_popov_cross(p: &DiscretePlant, star: &KspySolution) -> Result<PopovTriplet> {
    let dims = p.dims();
    let (k, pp, m) = (dims.k, dims.p, dims.m);

    let f1 = star.f.view((0, 0), (k, dims.n)).into_owned();
    let f2 = star.f.view((k, 0), (pp, dims.n)).into_owned();
    let v_c11 = star.v.view((0, 0), (k, k)).into_owned();
    let v_c21 = star.v.view((k, 0), (pp, k)).into_owned();
    let v_c22 = star.v.view((k, k), (pp, pp)).into_owned();

    // S_c = (V_c11' V_c11)^-1.
    let s_c = inverse_of(&(v_c11.transpose() * &v_c11), "V_c11' V_c11")?;

    let a_x = p.a.transpose() + f1.transpose() * p.b1.transpose();
    let b_first = -f2.transpose() * v_c22.transpose();
    let b_second = p.c2.transpose() + f1.transpose() * p.d21.transpose();
    let b = hstack(&b_first, &b_second);

    let q = &p.b1 * &s_c * p.b1.transpose();
    let stack = vstack(&v_c21, &p.d21); // (p + m) x k
    let l = &p.b1 * &s_c * stack.transpose();
    let mut r = &stack * &s_c * stack.transpose();
    for i in 0..pp {
        r[(i, i)] -= 1.0;
    }
    PopovTriplet::new(
        a_x,
        b,
        numkernel::symmetrize(&q),
        l,
        numkernel::symmetrize(&r),
        JSignature { neg: pp, pos: m },
    )
}

/// Run the two KSPY solves and evaluate the three solvability conditions.
/// The plant must already be in the gamma = 1 normal form.
pub fn check_solvability(
    p: &DiscretePlant,
) -> Result<(SynthesisReport, Option<(KspySolution, KspySolution)>)> {
    p.validate()?;
    let star_triplet = build_popov_star(p)?;
    let obs_triplet = build_popov_obs(p)?;

    let star = kspy::solve_kspy(&star_triplet);
    let obs = kspy::solve_kspy(&obs_triplet);

    let condition_a = match &star {
        Ok(sol) => ConditionReport::from_solution(sol),
        Err(e) => ConditionReport::failed(e.to_string()),
    };
    let condition_b = match &obs {
        Ok(sol) => ConditionReport::from_solution(sol),
        Err(e) => ConditionReport::failed(e.to_string()),
    };

    let (rho_xy, condition_c, x, y) = match (&star, &obs) {
        (Ok(s), Ok(o)) => {
            let rho = numkernel::spectral_radius(&(&s.x * &o.x))?;
            (rho, rho < 1.0, Some(s.x.clone()), Some(o.x.clone()))
        }
        _ => (f64::NAN, false, None, None),
    };

    let report = SynthesisReport {
        condition_a,
        condition_b,
        rho_xy,
        condition_c,
        x,
        y,
        intermediates: None,
        sigma_g: None,
    };
    let solutions = match (star, obs) {
        (Ok(s), Ok(o)) => Some((s, o)),
        _ => None,
    };
    Ok((report, solutions))
}

/// Assemble the compensator generator from the three KSPY solves. The plant
/// must be the gamma = 1 scaled plant used for `check_solvability`.
pub fn build_sigma_g(
    p: &DiscretePlant,
    report: &mut SynthesisReport,
    star: &KspySolution,
    obs: &KspySolution,
) -> Result<TwoPortStateSpace> {
    if !report.all_conditions_hold() {
        return Err(Error::Condition(format!(
            "solvability condition failed: {}",
            report.first_failure().unwrap_or("unknown")
        )));
    }
    let dims = p.dims();
    let (k, pp, m, n) = (dims.k, dims.p, dims.m, dims.n);

    let x = &star.x;
    let y = &obs.x;

    // Z = Y (I - X Y)^-1, the cross Riccati solution.
    let ixy = Mat::identity(n, n) - x * y;
    let z_formula = numkernel::symmetrize(&numkernel::solve(&ixy.transpose(), y)?.transpose());

    // Solve the cross KSPY system; certify against the closed form.
    let cross_triplet = build_popov_cross(p, star)?;
    let cross = kspy::solve_kspy(&cross_triplet).map_err(|e| e.in_stage("cross kspy"))?;
    let z = cross.x.clone();
    let z_formula_gap = (&z - &z_formula).amax();
    if z_formula_gap > 1e-6 * (1.0 + z.amax()) {
        return Err(Error::Numerical(format!(
            "cross Riccati solution disagrees with Y(I-XY)^-1 by {z_formula_gap:.3e}"
        )));
    }

    let f1 = star.f.view((0, 0), (k, n)).into_owned();
    let f2 = star.f.view((k, 0), (pp, n)).into_owned();
    let v_c11 = star.v.view((0, 0), (k, k)).into_owned();
    let v_c21 = star.v.view((k, 0), (pp, k)).into_owned();
    let v_c22 = star.v.view((k, k), (pp, pp)).into_owned();
    let v_x11 = cross.v.view((0, 0), (pp, pp)).into_owned();

    let s_c = inverse_of(&(v_c11.transpose() * &v_c11), "V_c11' V_c11")?;
    let s_x = inverse_of(&(v_x11.transpose() * &v_x11), "V_x11' V_x11")?;
    let s_x_sqrt = numkernel::sym_psd_sqrt(&s_x)?;
    let s_x_inv_sqrt = numkernel::sym_pd_inv_sqrt(&s_x)?;

    let c2_f1 = &p.c2 + &p.d21 * &f1;

    // Shared kernel: D21 S_c D21' + C2F1 Z C2F1', with its +/- 1/2 powers.
    let kernel = numkernel::symmetrize(
        &(&p.d21 * &s_c * p.d21.transpose() + &c2_f1 * &z * c2_f1.transpose()),
    );
    let kernel_inv = inverse_of(&kernel, "D21 S_c D21' + C2F1 Z C2F1'")?;
    let kernel_inv_sqrt = numkernel::sym_pd_inv_sqrt(&kernel)?;

    let v_c22_inv_v_c21 = numkernel::solve(&v_c22, &v_c21)
        .map_err(|_| Error::Numerical("V_c22 is singular".into()))?;

    // Evaluation order: the D blocks first, then the C blocks, then the B
    // blocks, then A_g.
    let d_g11 = -((&v_c22_inv_v_c21 * &s_c * p.d21.transpose() - &f2 * &z * c2_f1.transpose())
        * &kernel_inv);
    let d_g12 = numkernel::solve(&v_c22, &s_x_inv_sqrt)
        .map_err(|_| Error::Numerical("V_c22 is singular".into()))?;
    let d_g21 = kernel_inv_sqrt.clone();
    let d_g22 = Mat::zeros(m, pp);

    let c_g1 = -&f2 + &d_g11 * &c2_f1;
    let c_g2 = &kernel_inv_sqrt * &c2_f1;

    let a_bf1 = &p.a + &p.b1 * &f1;
    let b_g1 = -(&p.b1 * &s_c * p.d21.transpose() * &kernel_inv)
        - &p.b2 * &d_g11
        - &a_bf1 * &z * c_g2.transpose() * &d_g21;
    let b_g2 = -(&p.b2 * &d_g12)
        - &p.b1
            * &s_c
            * (&v_c22_inv_v_c21 + &d_g11 * &p.d21).transpose()
            * v_c22.transpose()
            * &s_x_sqrt
        - &a_bf1 * &z * c_g1.transpose() * v_c22.transpose() * &s_x_sqrt;

    let a_g = &p.a + &p.b1 * &f1 + &p.b2 * &f2 + &b_g1 * &c2_f1;

    let sigma_g = TwoPortStateSpace {
        a: a_g,
        b1: b_g1,
        b2: b_g2,
        c1: c_g1,
        c2: c_g2,
        d11: d_g11,
        d12: d_g12,
        d21: d_g21,
        d22: d_g22,
    };

    report.intermediates = Some(Intermediates {
        f: star.f.clone(),
        v_c: star.v.clone(),
        w_c: star.w.clone(),
        v_o: obs.v.clone(),
        w_o: obs.w.clone(),
        z,
        v_x: cross.v.clone(),
        w_x: cross.w.clone(),
        s_c,
        s_x,
        c2_f1,
        z_formula_gap,
    });
    report.sigma_g = Some(sigma_g.clone());
    Ok(sigma_g)
}

/// Undo the gamma-scaling of the generator: B_g1, C_g1 grow by sqrt(gamma),
/// B_g2, C_g2 shrink by sqrt(gamma), D_g11 grows by gamma, D_g22 shrinks by
/// gamma, the rest is unchanged.
pub fn unscale_sigma_g(g: &TwoPortStateSpace, gamma: f64) -> Result<TwoPortStateSpace> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let sg = gamma.sqrt();
    Ok(TwoPortStateSpace {
        a: g.a.clone(),
        b1: &g.b1 * sg,
        b2: &g.b2 / sg,
        c1: &g.c1 * sg,
        c2: &g.c2 / sg,
        d11: &g.d11 * gamma,
        d12: g.d12.clone(),
        d21: g.d21.clone(),
        d22: &g.d22 / gamma,
    })
}

/// Outcome of the free-parameter validation.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaQValidation {
    pub valid: bool,
    pub stable: bool,
    pub norm: f64,
    pub bound: f64,
}

/// The free parameter must be internally stable with H-infinity norm < gamma.
pub fn validate_sigma_q(sigma_q: &StateSpace, gamma: f64) -> Result<SigmaQValidation> {
    sigma_q.validate()?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let stable = if sigma_q.order() == 0 {
        true
    } else {
        numkernel::spectral_radius(&sigma_q.a)? < 1.0
    };
    if !stable {
        return Ok(SigmaQValidation {
            valid: false,
            stable,
            norm: f64::INFINITY,
            bound: gamma,
        });
    }
    let norm = clp::hinf_norm_disc(sigma_q, clp::DEFAULT_GRID, clp::DEFAULT_REFINE_TOL)?;
    Ok(SigmaQValidation {
        valid: norm.norm < gamma,
        stable,
        norm: norm.norm,
        bound: gamma,
    })
}

/// Close the generator against the free parameter:
/// with D_g22 = 0 the lower fractional interconnection reduces to
/// `A_c = [A_g + B_g2 D_Q C_g2, B_g2 C_Q; B_Q C_g2, A_Q]` and friends.
pub fn assemble_controller(
    sigma_g: &TwoPortStateSpace,
    sigma_q: &StateSpace,
) -> Result<ControllerRealization> {
    let n_g = sigma_g.a.nrows();
    let n_q = sigma_q.order();
    let m_in = sigma_g.b1.ncols();
    let p_out = sigma_g.c1.nrows();
    if sigma_q.b.ncols() != sigma_g.c2.nrows() || sigma_q.c.nrows() != sigma_g.b2.ncols() {
        return Err(Error::Dimension(format!(
            "parameter must map {} -> {}, got {} -> {}",
            sigma_g.c2.nrows(),
            sigma_g.b2.ncols(),
            sigma_q.b.ncols(),
            sigma_q.c.nrows()
        )));
    }
    if sigma_g.d22.amax() != 0.0 {
        return Err(Error::Contract("generator must have D_g22 = 0".into()));
    }

    let mut a = Mat::zeros(n_g + n_q, n_g + n_q);
    a.view_mut((0, 0), (n_g, n_g))
        .copy_from(&(&sigma_g.a + &sigma_g.b2 * &sigma_q.d * &sigma_g.c2));
    a.view_mut((0, n_g), (n_g, n_q))
        .copy_from(&(&sigma_g.b2 * &sigma_q.c));
    a.view_mut((n_g, 0), (n_q, n_g))
        .copy_from(&(&sigma_q.b * &sigma_g.c2));
    a.view_mut((n_g, n_g), (n_q, n_q)).copy_from(&sigma_q.a);

    let mut b = Mat::zeros(n_g + n_q, m_in);
    b.view_mut((0, 0), (n_g, m_in))
        .copy_from(&(&sigma_g.b1 + &sigma_g.b2 * &sigma_q.d * &sigma_g.d21));
    b.view_mut((n_g, 0), (n_q, m_in))
        .copy_from(&(&sigma_q.b * &sigma_g.d21));

    let mut c = Mat::zeros(p_out, n_g + n_q);
    c.view_mut((0, 0), (p_out, n_g))
        .copy_from(&(&sigma_g.c1 + &sigma_g.d12 * &sigma_q.d * &sigma_g.c2));
    c.view_mut((0, n_g), (p_out, n_q))
        .copy_from(&(&sigma_g.d12 * &sigma_q.c));

    let d = &sigma_g.d11 + &sigma_g.d12 * &sigma_q.d * &sigma_g.d21;

    StateSpace::new(a, b, c, d)
}

/// Wrap the compensator in the feedback `G_c (I + D22 G_c)^-1` that restores
/// it for a plant with direct control-to-measurement feedthrough. Minimal
/// realization: with `Lam = (I + D_c D22)^-1`,
/// `A' = A_c - B_c D22 Lam C_c`, `B' = B_c (I + D22 D_c)^-1`,
/// `C' = Lam C_c`, `D' = Lam D_c`.
pub fn d22_correct(c: &ControllerRealization, d22: &Mat) -> Result<ControllerRealization> {
    let p_out = c.c.nrows();
    let m_in = c.b.ncols();
    if d22.nrows() != m_in || d22.ncols() != p_out {
        return Err(Error::Dimension(format!(
            "D22 must be {m_in}x{p_out}, got {}x{}",
            d22.nrows(),
            d22.ncols()
        )));
    }
    if d22.amax() == 0.0 {
        return Ok(c.clone());
    }
    let eye_p = Mat::identity(p_out, p_out);
    let eye_m = Mat::identity(m_in, m_in);
    let inner = &eye_p + &c.d * d22;
    let lam = inner
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("correction ill-posed: I + D_c D22 singular".into()))?;
    let inner_m = &eye_m + d22 * &c.d;
    let inner_m_inv = inner_m
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("correction ill-posed: I + D22 D_c singular".into()))?;

    StateSpace::new(
        &c.a - &c.b * d22 * &lam * &c.c,
        &c.b * inner_m_inv,
        &lam * &c.c,
        &lam * &c.d,
    )
}

/// Map a controller computed for the gamma-scaled plant back to the
/// controller for the original plant. The generator-level unscaling, pushed
/// through the fractional interconnection, becomes a similarity by
/// `diag(I_{n_g}, gamma^-1/2 I)` plus sqrt(gamma) input/output scalings and
/// a gamma scaling of the feedthrough.
pub fn unscale_controller(
    c: &ControllerRealization,
    gamma: f64,
    generator_states: usize,
) -> Result<ControllerRealization> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let n = c.order();
    if generator_states > n {
        return Err(Error::Dimension(
            "generator state count exceeds controller order".into(),
        ));
    }
    let sg = gamma.sqrt();
    let mut t = Mat::identity(n, n);
    let mut t_inv = Mat::identity(n, n);
    for i in generator_states..n {
        t[(i, i)] = 1.0 / sg;
        t_inv[(i, i)] = sg;
    }
    StateSpace::new(
        &t * &c.a * &t_inv,
        &t * &c.b * sg,
        &c.c * &t_inv * sg,
        &c.d * gamma,
    )
}

/// The free parameter for the scaled problem: transfer scaled by `alpha`
/// through its C and D blocks.
pub fn scale_sigma_q(sigma_q: &StateSpace, alpha: f64) -> StateSpace {
    StateSpace {
        a: sigma_q.a.clone(),
        b: sigma_q.b.clone(),
        c: &sigma_q.c * alpha,
        d: &sigma_q.d * alpha,
    }
}

/// Full synthesis: scale, check, build the generator, unscale, close against
/// the parameter, and correct for the true D22.
///
/// The returned report carries every intermediate. The parameter must pass
/// `validate_sigma_q` at level gamma.
pub fn synthesize(
    p: &DiscretePlant,
    gamma: f64,
    sigma_q: &StateSpace,
) -> Result<(ControllerRealization, SynthesisReport)> {
    let validation =
        validate_sigma_q(sigma_q, gamma).map_err(|e| e.in_stage("sigma_q validation"))?;
    if !validation.valid {
        return Err(Error::Condition(format!(
            "sigma_q norm bound violated: norm {:.6} >= gamma {:.6}",
            validation.norm, validation.bound
        ))
        .in_stage("sigma_q validation"));
    }
    synthesize_unchecked(p, gamma, sigma_q)
}

/// Synthesis without the parameter validation gate; the report still records
/// every certificate. Used by diagnostic runs that deliberately push
/// out-of-bound parameters through the pipeline.
pub fn synthesize_unchecked(
    p: &DiscretePlant,
    gamma: f64,
    sigma_q: &StateSpace,
) -> Result<(ControllerRealization, SynthesisReport)> {
    // The generator construction assumes no direct control-to-measurement
    // feedthrough; the true D22 re-enters through the final correction.
    let mut scaled = scale_plant(p, gamma).map_err(|e| e.in_stage("scale"))?;
    scaled.d22 = Mat::zeros(p.d22.nrows(), p.d22.ncols());

    let (mut report, solutions) =
        check_solvability(&scaled).map_err(|e| e.in_stage("solvability"))?;
    let Some((star, obs)) = solutions else {
        return Err(Error::Condition(format!(
            "solvability condition failed: {}",
            report.first_failure().unwrap_or("unknown")
        ))
        .in_stage("solvability"));
    };
    if !report.all_conditions_hold() {
        return Err(Error::Condition(format!(
            "solvability condition failed: {}",
            report.first_failure().unwrap_or("unknown")
        ))
        .in_stage("solvability"));
    }

    let sigma_g_scaled =
        build_sigma_g(&scaled, &mut report, &star, &obs).map_err(|e| e.in_stage("generator"))?;
    let sigma_g = unscale_sigma_g(&sigma_g_scaled, gamma).map_err(|e| e.in_stage("unscale"))?;
    report.sigma_g = Some(sigma_g.clone());

    let controller = assemble_controller(&sigma_g, sigma_q).map_err(|e| e.in_stage("assembly"))?;
    let corrected = d22_correct(&controller, &p.d22).map_err(|e| e.in_stage("d22 correction"))?;
    Ok((corrected, report))
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

fn vstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

fn inverse_of(m: &Mat, label: &str) -> Result<Mat> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("{label} is singular")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde;

    const SIGMA: f64 = 6.0;
    const GAMMA: f64 = 0.2;

    fn string_plant() -> DiscretePlant {
        pde::to_discrete(&pde::string_fixture(1.0 / 6.0, 1.0 / 6.0).unwrap()).unwrap()
    }

    fn scaled_string_plant() -> DiscretePlant {
        let mut p = scale_plant(&string_plant(), GAMMA).unwrap();
        p.d22 = Mat::zeros(1, 1);
        p
    }

    /// First-order parameter with the product B_Q C_Q chosen so its
    /// H-infinity norm |B_Q C_Q| / (1 + A_Q) stays below gamma.
    fn small_sigma_q() -> StateSpace {
        StateSpace::new(
            Mat::from_element(1, 1, -0.5),
            Mat::from_element(1, 1, 5.0f64.sqrt() / 10.0),
            Mat::from_element(1, 1, 9.0 * 5.0f64.sqrt() / 50.0),
            Mat::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn scale_plant_identity_at_gamma_one() {
        let p = string_plant();
        let s = scale_plant(&p, 1.0).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn scale_plant_string_values() {
        let s = scale_plant(&string_plant(), GAMMA).unwrap();
        assert!((s.b1[(0, 0)] - 1.0 / (SIGMA * GAMMA.sqrt())).abs() < 1e-12);
        assert!((s.d22[(0, 0)] + SIGMA * GAMMA).abs() < 1e-12);
        assert!((s.c1[(0, 1)] - 2.0 / GAMMA.sqrt()).abs() < 1e-12);
        assert!((s.d11[(0, 0)] - 1.0 / (SIGMA * GAMMA)).abs() < 1e-12);
    }

    #[test]
    fn scale_plant_round_trip() {
        let p = string_plant();
        let back = scale_plant(&scale_plant(&p, GAMMA).unwrap(), 1.0 / GAMMA).unwrap();
        assert!((&back.b1 - &p.b1).amax() < 1e-14);
        assert!((&back.c2 - &p.c2).amax() < 1e-14);
        assert!((&back.d11 - &p.d11).amax() < 1e-14);
        assert!((&back.d22 - &p.d22).amax() < 1e-14);
    }

    #[test]
    fn popov_star_string_r_matrix() {
        let t = build_popov_star(&scaled_string_plant()).unwrap();
        let expect = 1.0 / (SIGMA * SIGMA * GAMMA * GAMMA) - 1.0;
        assert!((t.r[(0, 0)] - expect).abs() < 1e-12);
        assert!(t.r[(0, 1)].abs() < 1e-14);
        assert!(t.r[(1, 1)].abs() < 1e-14);
        assert_eq!(t.j, JSignature { neg: 1, pos: 1 });
    }

    #[test]
    fn popov_star_zero_plant() {
        let p = DiscretePlant {
            a: Mat::zeros(1, 1),
            b1: Mat::zeros(1, 1),
            b2: Mat::zeros(1, 1),
            c1: Mat::zeros(1, 1),
            c2: Mat::zeros(1, 1),
            d11: Mat::zeros(1, 1),
            d12: Mat::zeros(1, 1),
            d21: Mat::zeros(1, 1),
            d22: Mat::zeros(1, 1),
            travel_time: 1.0,
        };
        let t = build_popov_star(&p).unwrap();
        assert_eq!(t.q.amax(), 0.0);
        assert_eq!(t.l.amax(), 0.0);
        assert!((t.r[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(t.r[(1, 1)], 0.0);
        let to = build_popov_obs(&p).unwrap();
        assert!((to.r[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(to.r[(1, 1)], 0.0);
    }

    #[test]
    fn popov_obs_string_q_matrix() {
        let t = build_popov_obs(&scaled_string_plant()).unwrap();
        let expect = 1.0 / (SIGMA * SIGMA * GAMMA);
        assert!((t.q[(0, 0)] - expect).abs() < 1e-12);
        assert!(t.q[(1, 1)].abs() < 1e-14);
    }

    #[test]
    fn popov_r_symmetric_on_random_plants() {
        use rand::rngs::StdRng;
        use rand::{RngExt, SeedableRng};
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..10 {
            let n = rng.random_range(1..=4);
            let dims = [
                rng.random_range(1..=2),
                rng.random_range(1..=n.min(2)),
                rng.random_range(1..=2),
                rng.random_range(1..=2),
            ];
            let (k, pq, l, m) = (dims[0], dims[1], dims[2], dims[3]);
            let mut mk =
                |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let p = DiscretePlant {
                a: mk(n, n),
                b1: mk(n, k),
                b2: mk(n, pq),
                c1: mk(l, n),
                c2: mk(m, n),
                d11: mk(l, k),
                d12: mk(l, pq),
                d21: mk(m, k),
                d22: mk(m, pq),
                travel_time: 1.0,
            };
            let ts = build_popov_star(&p).unwrap();
            assert!((ts.r.transpose() - &ts.r).amax() < 1e-14);
            let to = build_popov_obs(&p).unwrap();
            assert!((to.r.transpose() - &to.r).amax() < 1e-14);
        }
    }

    #[test]
    fn cross_triplet_string_values() {
        let p = scaled_string_plant();
        let (_, sols) = check_solvability(&p).unwrap();
        let (star, _) = sols.unwrap();
        let cross = build_popov_cross(&p, &star).unwrap();
        // Q_x = diag(gamma/(s^2 g^2 - 1), 0), L_x = 0, R_x = diag(-1, 0).
        assert!((cross.q[(0, 0)] - GAMMA / 0.44).abs() < 1e-9);
        assert!(cross.q[(1, 1)].abs() < 1e-9);
        assert!(cross.l.amax() < 1e-9);
        assert!((cross.r[(0, 0)] + 1.0).abs() < 1e-9);
        assert!(cross.r[(1, 1)].abs() < 1e-9);
        assert_eq!(cross.j, JSignature { neg: 1, pos: 1 });
    }

    #[test]
    fn check_solvability_string_passes_and_rho_is_zero() {
        let (report, sols) = check_solvability(&scaled_string_plant()).unwrap();
        assert!(report.condition_a.holds);
        assert!(report.condition_b.holds);
        assert!(report.condition_c);
        assert!(report.rho_xy <= 1e-14);
        let (star, obs) = sols.unwrap();
        assert!((star.x[(1, 1)] - 720.0 / 11.0).abs() < 1e-8 * 66.0);
        assert!((obs.x[(0, 0)] - 5.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn check_solvability_fails_below_gamma_threshold() {
        // gamma = 0.1 < 1/sigma.
        let mut p = scale_plant(&string_plant(), 0.1).unwrap();
        p.d22 = Mat::zeros(1, 1);
        let (report, _) = check_solvability(&p).unwrap();
        assert!(!report.condition_a.holds);
        assert_eq!(report.first_failure(), Some("condition_a"));
    }

    #[test]
    fn check_solvability_unstabilizable_plant_fails_condition_a() {
        let p = DiscretePlant {
            a: Mat::from_element(1, 1, 2.0),
            b1: Mat::from_element(1, 1, 1.0),
            b2: Mat::zeros(1, 1),
            c1: Mat::identity(1, 1),
            c2: Mat::identity(1, 1),
            d11: Mat::zeros(1, 1),
            d12: Mat::from_element(1, 1, 1.0),
            d21: Mat::from_element(1, 1, 1.0),
            d22: Mat::zeros(1, 1),
            travel_time: 1.0,
        };
        let (report, _) = check_solvability(&p).unwrap();
        assert!(!report.condition_a.holds);
    }

    #[test]
    fn sigma_g_string_scaled_entries() {
        let p = scaled_string_plant();
        let (mut report, sols) = check_solvability(&p).unwrap();
        let (star, obs) = sols.unwrap();
        let g = build_sigma_g(&p, &mut report, &star, &obs).unwrap();

        let s2g2 = SIGMA * SIGMA * GAMMA * GAMMA;
        let root = (s2g2 - 1.0).sqrt();
        // A_g = [0, (s^2g^2+1)/(s^2g^2-1); 0, 0].
        assert!((g.a[(0, 1)] - (s2g2 + 1.0) / (s2g2 - 1.0)).abs() < 1e-9);
        assert!(g.a[(0, 0)].abs() < 1e-9);
        assert!(g.a[(1, 0)].abs() < 1e-9);
        assert!(g.a[(1, 1)].abs() < 1e-9);
        // B_g1 = 0.
        assert!(g.b1.amax() < 1e-9);
        // B_g2 = [0; -root/(2 sigma sqrt(gamma))].
        assert!(g.b2[(0, 0)].abs() < 1e-9);
        assert!((g.b2[(1, 0)] + root / (2.0 * SIGMA * GAMMA.sqrt())).abs() < 1e-9);
        // C_g1 = 0.
        assert!(g.c1.amax() < 1e-9);
        // C_g2 = [root/sqrt(gamma), 0].
        assert!((g.c2[(0, 0)] - root / GAMMA.sqrt()).abs() < 1e-9);
        assert!(g.c2[(0, 1)].abs() < 1e-9);
        // D blocks.
        assert!((g.d11[(0, 0)] - 1.0 / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert!((g.d12[(0, 0)] - root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert!((g.d21[(0, 0)] - root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert_eq!(g.d22.amax(), 0.0);

        // Numeric anchors.
        assert!((g.a[(0, 1)] - 5.545455).abs() < 1e-5);
        assert!((g.b2[(1, 0)] + 0.123603).abs() < 1e-5);
        assert!((g.c2[(0, 0)] - 1.483240).abs() < 1e-5);
        assert!((g.d11[(0, 0)] - 0.416667).abs() < 1e-5);
        assert!((g.d12[(0, 0)] - 0.276385).abs() < 1e-5);

        // Intermediates: S_c, S_x and the cross factor.
        let inter = report.intermediates.as_ref().unwrap();
        assert!((inter.s_c[(0, 0)] - s2g2 / (s2g2 - 1.0)).abs() < 1e-9);
        assert!((inter.s_x[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((inter.c2_f1[(0, 0)] - 2.0 * SIGMA * GAMMA.sqrt()).abs() < 1e-8);
        assert!(inter.z_formula_gap < 1e-9);
        // V_x = [1, 0; -2sg/(s^2g^2-1), 2sg/root].
        assert!((inter.v_x[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((inter.v_x[(1, 0)] + 2.0 * SIGMA * GAMMA / (s2g2 - 1.0)).abs() < 1e-7);
        assert!((inter.v_x[(1, 1)] - 2.0 * SIGMA * GAMMA / root).abs() < 1e-7);
        // W_x = [0, 0; 0, -sqrt(gamma)/root].
        assert!(inter.w_x[(0, 0)].abs() < 1e-8);
        assert!((inter.w_x[(1, 1)] + GAMMA.sqrt() / root).abs() < 1e-7);
    }

    #[test]
    fn sigma_g_unscaled_string_entries() {
        let p = scaled_string_plant();
        let (mut report, sols) = check_solvability(&p).unwrap();
        let (star, obs) = sols.unwrap();
        let gs = build_sigma_g(&p, &mut report, &star, &obs).unwrap();
        let g = unscale_sigma_g(&gs, GAMMA).unwrap();

        let root = (SIGMA * SIGMA * GAMMA * GAMMA - 1.0).sqrt();
        assert!((g.d11[(0, 0)] - 1.0 / (2.0 * SIGMA)).abs() < 1e-10);
        assert!((g.b2[(1, 0)] + root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert!((g.c2[(0, 0)] - root / GAMMA).abs() < 1e-9);
        assert!((g.b2[(1, 0)] + 0.276385).abs() < 1e-5);
        assert!((g.c2[(0, 0)] - 3.316625).abs() < 1e-5);
        assert!((g.d11[(0, 0)] - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn unscale_round_trip_is_identity() {
        let p = scaled_string_plant();
        let (mut report, sols) = check_solvability(&p).unwrap();
        let (star, obs) = sols.unwrap();
        let g = build_sigma_g(&p, &mut report, &star, &obs).unwrap();
        let round = unscale_sigma_g(&unscale_sigma_g(&g, GAMMA).unwrap(), 1.0 / GAMMA).unwrap();
        for (lhs, rhs) in [
            (&round.b1, &g.b1),
            (&round.b2, &g.b2),
            (&round.c1, &g.c1),
            (&round.c2, &g.c2),
            (&round.d11, &g.d11),
        ] {
            assert!((lhs - rhs).amax() <= 1e-14 * (1.0 + rhs.amax()));
        }
    }

    #[test]
    fn validate_sigma_q_zero_and_first_order() {
        let zero = StateSpace::zero(1, 1);
        let v = validate_sigma_q(&zero, GAMMA).unwrap();
        assert!(v.valid);
        assert_eq!(v.norm, 0.0);

        // First-order lag: norm = |B C| / (1 + A) at theta = pi for A < 0.
        let c_val = 0.07f64;
        let q = StateSpace::new(
            Mat::from_element(1, 1, -0.5),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, c_val),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let v = validate_sigma_q(&q, GAMMA).unwrap();
        assert!((v.norm - c_val / 0.5).abs() < 1e-8);
        assert!(v.valid);
    }

    #[test]
    fn validate_sigma_q_rejects_tabulated_oversized_parameter() {
        // B_Q C_Q = 2.25, 1 + A_Q = 0.5: norm 4.5 >= gamma.
        let q = StateSpace::new(
            Mat::from_element(1, 1, -0.5),
            Mat::from_element(1, 1, 5.0f64.sqrt() / 2.0),
            Mat::from_element(1, 1, 9.0 * 5.0f64.sqrt() / 10.0),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let v = validate_sigma_q(&q, GAMMA).unwrap();
        assert!(!v.valid);
        assert!((v.norm - 4.5).abs() < 1e-6);
    }

    #[test]
    fn assemble_controller_static_zero_parameter() {
        // The zero parameter collapses the interconnection to the (1,1)
        // channel of the generator, so the transfer equals
        // D_g11 + C_g1 (zI - A_g)^-1 B_g1 pointwise.
        let p = scaled_string_plant();
        let (mut report, sols) = check_solvability(&p).unwrap();
        let (star, obs) = sols.unwrap();
        let g = build_sigma_g(&p, &mut report, &star, &obs).unwrap();
        let c = assemble_controller(&g, &StateSpace::zero(1, 1)).unwrap();
        assert!((&c.a - &g.a).amax() < 1e-14);
        assert!((&c.b - &g.b1).amax() < 1e-14);
        assert!((&c.c - &g.c1).amax() < 1e-14);
        assert!((&c.d - &g.d11).amax() < 1e-14);
        let channel = crate::clp::two_port_channel_11(&g);
        for idx in 0..8 {
            let theta = 0.3 + idx as f64;
            let z = nalgebra::Complex::new(1.7 * theta.cos(), 1.7 * theta.sin());
            let lhs = crate::clp::transfer_eval(&c, z).unwrap();
            let rhs = crate::clp::transfer_eval(&channel, z).unwrap();
            assert!((lhs[(0, 0)] - rhs[(0, 0)]).norm() < 1e-13);
        }
    }

    #[test]
    fn popov_obs_is_the_star_triplet_of_the_dual_plant() {
        use rand::rngs::StdRng;
        use rand::{RngExt, SeedableRng};
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..10 {
            let n = rng.random_range(1..=4);
            let (k, pq, l, m) = (
                rng.random_range(1..=2),
                rng.random_range(1..=2),
                rng.random_range(1..=2),
                rng.random_range(1..=2),
            );
            let mut mk =
                |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let p = DiscretePlant {
                a: mk(n, n),
                b1: mk(n, k),
                b2: mk(n, pq),
                c1: mk(l, n),
                c2: mk(m, n),
                d11: mk(l, k),
                d12: mk(l, pq),
                d21: mk(m, k),
                d22: mk(m, pq),
                travel_time: 1.0,
            };
            // Transpose-dual plant: states, disturbance <-> regulated
            // output, control <-> measurement all swap through transposes.
            let dual = DiscretePlant {
                a: p.a.transpose(),
                b1: p.c1.transpose(),
                b2: p.c2.transpose(),
                c1: p.b1.transpose(),
                c2: p.b2.transpose(),
                d11: p.d11.transpose(),
                d12: p.d21.transpose(),
                d21: p.d12.transpose(),
                d22: p.d22.transpose(),
                travel_time: 1.0,
            };
            let obs = build_popov_obs(&p).unwrap();
            let star_dual = build_popov_star(&dual).unwrap();
            assert!((&obs.a - &star_dual.a).amax() < 1e-14);
            assert!((&obs.b - &star_dual.b).amax() < 1e-14);
            assert!((&obs.q - &star_dual.q).amax() < 1e-14);
            assert!((&obs.l - &star_dual.l).amax() < 1e-14);
            assert!((&obs.r - &star_dual.r).amax() < 1e-14);
            assert_eq!(obs.j, star_dual.j);
        }
    }

    #[test]
    fn assemble_controller_string_three_state_form() {
        let p = scaled_string_plant();
        let (mut report, sols) = check_solvability(&p).unwrap();
        let (star, obs) = sols.unwrap();
        let gs = build_sigma_g(&p, &mut report, &star, &obs).unwrap();
        let g = unscale_sigma_g(&gs, GAMMA).unwrap();
        let q = small_sigma_q();
        let c = assemble_controller(&g, &q).unwrap();

        let s2g2 = SIGMA * SIGMA * GAMMA * GAMMA;
        let root = (s2g2 - 1.0).sqrt();
        let b_q = q.b[(0, 0)];
        let c_q = q.c[(0, 0)];
        // A_c = [0, (s2g2+1)/(s2g2-1), 0;
        //        0, 0, -C_Q root/(2 s g);
        //        B_Q root/g, 0, A_Q].
        assert_eq!(c.order(), 3);
        assert!((c.a[(0, 1)] - (s2g2 + 1.0) / (s2g2 - 1.0)).abs() < 1e-9);
        assert!((c.a[(1, 2)] + c_q * root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert!((c.a[(2, 0)] - b_q * root / GAMMA).abs() < 1e-9);
        assert!((c.a[(2, 2)] + 0.5).abs() < 1e-12);
        for (i, j) in [(0, 0), (0, 2), (1, 0), (1, 1), (2, 1)] {
            assert!(c.a[(i, j)].abs() < 1e-9, "A_c[{i},{j}] = {}", c.a[(i, j)]);
        }
        // B_c = [0; 0; B_Q root/(2 s g)], C_c = [0, 0, C_Q root/(2 s g)].
        assert!(c.b[(0, 0)].abs() < 1e-9);
        assert!(c.b[(1, 0)].abs() < 1e-9);
        assert!((c.b[(2, 0)] - b_q * root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        assert!((c.c[(0, 2)] - c_q * root / (2.0 * SIGMA * GAMMA)).abs() < 1e-9);
        // D_c = 1/(2 sigma).
        assert!((c.d[(0, 0)] - 1.0 / (2.0 * SIGMA)).abs() < 1e-10);
    }

    #[test]
    fn d22_correct_identity_when_zero() {
        let c = StateSpace::new(
            Mat::from_element(1, 1, 0.3),
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            Mat::from_element(1, 1, 0.5),
        )
        .unwrap();
        let fixed = d22_correct(&c, &Mat::zeros(1, 1)).unwrap();
        assert_eq!(fixed, c);
    }

    #[test]
    fn d22_correct_string_feedthrough() {
        // D_c = 1/(2 sigma), D22 = -sigma: D' = (1/(2s)) / (1 - 1/2) = 1/s.
        let c = StateSpace::new(
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::from_element(1, 1, 1.0 / (2.0 * SIGMA)),
        )
        .unwrap();
        let fixed = d22_correct(&c, &Mat::from_element(1, 1, -SIGMA)).unwrap();
        assert!((fixed.d[(0, 0)] - 1.0 / SIGMA).abs() < 1e-14);
    }

    #[test]
    fn synthesize_string_end_to_end() {
        let p = string_plant();
        let (c, report) = synthesize(&p, GAMMA, &small_sigma_q()).unwrap();
        assert!(report.all_conditions_hold());
        assert!((c.d[(0, 0)] - 1.0 / SIGMA).abs() < 1e-10);
        assert_eq!(c.order(), 3);
    }

    #[test]
    fn synthesize_fails_below_gamma_threshold() {
        let p = string_plant();
        match synthesize(&p, 0.1, &StateSpace::zero(1, 1)) {
            Err(e) => {
                let msg = e.to_string();
                assert!(msg.contains("solvability"), "unexpected error: {msg}");
            }
            Ok(_) => panic!("synthesis should fail for gamma < 1/sigma"),
        }
    }

    #[test]
    fn synthesize_rejects_oversized_parameter() {
        let p = string_plant();
        let q = StateSpace::new(
            Mat::from_element(1, 1, -0.5),
            Mat::from_element(1, 1, 5.0f64.sqrt() / 2.0),
            Mat::from_element(1, 1, 9.0 * 5.0f64.sqrt() / 10.0),
            Mat::zeros(1, 1),
        )
        .unwrap();
        match synthesize(&p, GAMMA, &q) {
            Err(e) => assert!(e.to_string().contains("sigma_q")),
            Ok(_) => panic!("oversized parameter must be rejected"),
        }
    }

    #[test]
    fn synthesize_zero_parameter_matches_generator() {
        let p = string_plant();
        let (c, report) = synthesize(&p, GAMMA, &StateSpace::zero(1, 1)).unwrap();
        let g = report.sigma_g.as_ref().unwrap();
        // With the zero parameter the pre-correction controller is
        // (A_g, B_g1, C_g1, D_g11); the correction then mixes in D22.
        let pre = assemble_controller(g, &StateSpace::zero(1, 1)).unwrap();
        assert!((&pre.a - &g.a).amax() < 1e-14);
        let corrected = d22_correct(&pre, &p.d22).unwrap();
        assert!((&corrected.a - &c.a).amax() < 1e-12);
        assert!((&corrected.d - &c.d).amax() < 1e-12);
    }

    #[test]
    fn scaling_commutation_on_string() {
        // Direct synthesis at gamma vs the scaled route at gamma = 1 with
        // the parameter divided by gamma, mapped back through
        // unscale_controller.
        let p = string_plant();
        let q = small_sigma_q();
        let (direct, report) = synthesize(&p, GAMMA, &q).unwrap();
        let n_g = report.sigma_g.as_ref().unwrap().a.nrows();

        let scaled_plant = scale_plant(&p, GAMMA).unwrap();
        let q_scaled = scale_sigma_q(&q, 1.0 / GAMMA);
        let (scaled_ctrl, _) = synthesize(&scaled_plant, 1.0, &q_scaled).unwrap();
        let mapped = unscale_controller(&scaled_ctrl, GAMMA, n_g).unwrap();

        assert!((&mapped.a - &direct.a).amax() <= 1e-10 * (1.0 + direct.a.amax()));
        assert!((&mapped.b - &direct.b).amax() <= 1e-10 * (1.0 + direct.b.amax()));
        assert!((&mapped.c - &direct.c).amax() <= 1e-10 * (1.0 + direct.c.amax()));
        assert!((&mapped.d - &direct.d).amax() <= 1e-10 * (1.0 + direct.d.amax()));
    }
}
