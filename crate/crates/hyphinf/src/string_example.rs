//! The vibrating-string benchmark: analytic closed forms for every quantity
//! the synthesis pipeline produces, a tabulated reference realization of the
//! corrected compensator and of the closed loop, and a comparison report.
//!
//! The reference tables carry two known quirks that the comparison flags
//! instead of reconciling:
//! - the tabulated first-order parameter (B_Q C_Q = 9/4 with A_Q = -1/2)
//!   violates the admissibility bound |B_Q C_Q / (1 + A_Q)| < gamma at
//!   gamma = 1/5, and the resulting loop is unstable; the benchmark's
//!   expected eigenvalue set corresponds to the gamma-scaled parameter
//!   (B_Q, C_Q multiplied by gamma), which satisfies the bound;
//! - one entry of the tabulated closed-loop state matrix and the length of
//!   its tabulated input column disagree with the assembled loop.

use nalgebra::{Complex, DVector};
use serde::Serialize;

use crate::clp;
use crate::error::{Error, Result};
use crate::numkernel::{self, Mat};
use crate::pde;
use crate::synth::{self, StateSpace};

/// Benchmark parameters; `default()` is the standard configuration
/// (sigma = 6 via rho = T = 1/6, gamma = 1/5).
#[derive(Debug, Clone, Copy)]
pub struct StringParams {
    pub rho: f64,
    pub t_mod: f64,
    pub gamma: f64,
    pub a_q: f64,
    pub b_q: f64,
    pub c_q: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
}

impl Default for StringParams {
    fn default() -> Self {
        Self {
            rho: 1.0 / 6.0,
            t_mod: 1.0 / 6.0,
            gamma: 0.2,
            a_q: -0.5,
            b_q: 5.0f64.sqrt() / 2.0,
            c_q: 9.0 * 5.0f64.sqrt() / 10.0,
            a_tilde: 0.25,
            b_tilde: 2.0,
        }
    }
}

impl StringParams {
    pub fn sigma(&self) -> f64 {
        1.0 / (self.rho * self.t_mod).sqrt()
    }

    /// The tabulated first-order parameter, exactly as listed.
    pub fn verbatim_sigma_q(&self) -> StateSpace {
        StateSpace {
            a: Mat::from_element(1, 1, self.a_q),
            b: Mat::from_element(1, 1, self.b_q),
            c: Mat::from_element(1, 1, self.c_q),
            d: Mat::zeros(1, 1),
        }
    }

    /// The admissible variant: B_Q and C_Q scaled by gamma, which brings
    /// |B_Q C_Q / (1 + A_Q)| under the bound and reproduces the expected
    /// closed-loop spectrum.
    pub fn effective_sigma_q(&self) -> StateSpace {
        StateSpace {
            a: Mat::from_element(1, 1, self.a_q),
            b: Mat::from_element(1, 1, self.b_q * self.gamma),
            c: Mat::from_element(1, 1, self.c_q * self.gamma),
            d: Mat::zeros(1, 1),
        }
    }
}

/// Analytic closed forms for the scaled synthesis quantities at (sigma,
/// gamma); all derivable by hand from the string's discrete matrices.
#[derive(Debug, Clone)]
pub struct ClosedForms {
    pub x_scaled: Mat,
    pub y_scaled: Mat,
    pub v_c: Mat,
    pub v_o: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub q_cross: Mat,
    pub r_cross: Mat,
    pub z_cross: Mat,
    pub v_cross: Mat,
    pub w_cross: Mat,
    pub s_c: f64,
    pub s_cross: f64,
    pub c2_f1: Mat,
    /// Scaled generator entries.
    pub a_g: Mat,
    pub b_g1: Mat,
    pub b_g2_scaled: Mat,
    pub c_g1: Mat,
    pub c_g2_scaled: Mat,
    pub d_g11_scaled: f64,
    pub d_g12: f64,
    pub d_g21: f64,
    /// Unscaled generator entries that differ from the scaled ones.
    pub b_g2: Mat,
    pub c_g2: Mat,
    pub d_g11: f64,
    /// Corrected-compensator feedthrough 1/sigma.
    pub d_c_opt: f64,
}

pub fn closed_forms(sigma: f64, gamma: f64) -> Result<ClosedForms> {
    let s2g2 = sigma * sigma * gamma * gamma;
    if s2g2 <= 1.0 {
        return Err(Error::Contract(format!(
            "closed forms need sigma*gamma > 1, got {}",
            s2g2.sqrt()
        )));
    }
    let root = (s2g2 - 1.0).sqrt();
    let sg = gamma.sqrt();

    let x22 = 4.0 * sigma * sigma * gamma / (s2g2 - 1.0);
    let y11 = gamma / (s2g2 - 1.0);

    let v_diag =
        Mat::from_partial_diagonal(2, 2, &[root / (sigma * gamma), 2.0 * sigma * gamma / root]);
    let w_c = Mat::from_row_slice(
        2,
        2,
        &[0.0, -2.0 / (sg * root), -2.0 * sigma * sg / root, 0.0],
    );
    let w_o = Mat::from_partial_diagonal(2, 2, &[-1.0 / (sigma * sg * root), -sg / root]);

    let v_cross = Mat::from_row_slice(
        2,
        2,
        &[
            1.0,
            0.0,
            -2.0 * sigma * gamma / (s2g2 - 1.0),
            2.0 * sigma * gamma / root,
        ],
    );
    let w_cross = Mat::from_partial_diagonal(2, 2, &[0.0, -sg / root]);

    let a_g = Mat::from_row_slice(2, 2, &[0.0, (s2g2 + 1.0) / (s2g2 - 1.0), 0.0, 0.0]);

    Ok(ClosedForms {
        x_scaled: Mat::from_partial_diagonal(2, 2, &[0.0, x22]),
        y_scaled: Mat::from_partial_diagonal(2, 2, &[y11, 0.0]),
        v_c: v_diag.clone(),
        v_o: v_diag,
        w_c,
        w_o,
        q_cross: Mat::from_partial_diagonal(2, 2, &[y11, 0.0]),
        r_cross: Mat::from_partial_diagonal(2, 2, &[-1.0, 0.0]),
        z_cross: Mat::from_partial_diagonal(2, 2, &[y11, 0.0]),
        v_cross,
        w_cross,
        s_c: s2g2 / (s2g2 - 1.0),
        s_cross: 1.0,
        c2_f1: Mat::from_row_slice(1, 2, &[2.0 * sigma * sg, 0.0]),
        a_g,
        b_g1: Mat::zeros(2, 1),
        b_g2_scaled: Mat::from_column_slice(2, 1, &[0.0, -root / (2.0 * sigma * sg)]),
        c_g1: Mat::zeros(1, 2),
        c_g2_scaled: Mat::from_row_slice(1, 2, &[root / sg, 0.0]),
        d_g11_scaled: 1.0 / (2.0 * sigma * gamma),
        d_g12: root / (2.0 * sigma * gamma),
        d_g21: root / (2.0 * sigma * gamma),
        b_g2: Mat::from_column_slice(2, 1, &[0.0, -root / (2.0 * sigma * gamma)]),
        c_g2: Mat::from_row_slice(1, 2, &[root / gamma, 0.0]),
        d_g11: 1.0 / (2.0 * sigma),
        d_c_opt: 1.0 / sigma,
    })
}

/// Tabulated four-state realization of the corrected compensator
/// G_c (I - sigma G_c)^-1 with the free parameter folded in.
pub fn reference_corrected_controller(
    params: &StringParams,
    sigma_q: &StateSpace,
) -> Result<StateSpace> {
    let sigma = params.sigma();
    let gamma = params.gamma;
    let s2g2 = sigma * sigma * gamma * gamma;
    if s2g2 <= 1.0 {
        return Err(Error::Contract("needs sigma*gamma > 1".into()));
    }
    let root = (s2g2 - 1.0).sqrt();
    let (a_q, b_q, c_q) = (sigma_q.a[(0, 0)], sigma_q.b[(0, 0)], sigma_q.c[(0, 0)]);
    let (a_t, b_t) = (params.a_tilde, params.b_tilde);

    let a = Mat::from_row_slice(
        4,
        4,
        &[
            0.0,
            (s2g2 + 1.0) / (s2g2 - 1.0),
            0.0,
            0.0,
            0.0,
            0.0,
            -c_q * root / (2.0 * sigma * gamma),
            0.0,
            b_q * root / gamma,
            0.0,
            a_q + b_q * c_q * (s2g2 - 1.0) / (2.0 * sigma * gamma * gamma),
            0.0,
            0.0,
            0.0,
            b_t * c_q * root / (sigma * gamma),
            a_t,
        ],
    );
    let b = Mat::from_column_slice(4, 1, &[0.0, 0.0, b_q * root / (sigma * gamma), b_t / sigma]);
    let c = Mat::from_row_slice(1, 4, &[0.0, 0.0, c_q * root / (sigma * gamma), 0.0]);
    let d = Mat::from_element(1, 1, 1.0 / sigma);
    StateSpace::new(a, b, c, d)
}

/// Tabulated six-state closed-loop matrices. The seventh tabulated input
/// entry and the (6, 5) entry quirk are preserved as given; see
/// `reference_closed_loop_input_length`.
pub fn reference_closed_loop(
    params: &StringParams,
    sigma_q: &StateSpace,
) -> Result<(Mat, Mat, Mat, Mat)> {
    let sigma = params.sigma();
    let gamma = params.gamma;
    let s2g2 = sigma * sigma * gamma * gamma;
    if s2g2 <= 1.0 {
        return Err(Error::Contract("needs sigma*gamma > 1".into()));
    }
    let root = (s2g2 - 1.0).sqrt();
    let (a_q, b_q, c_q) = (sigma_q.a[(0, 0)], sigma_q.b[(0, 0)], sigma_q.c[(0, 0)]);
    let (a_t, b_t) = (params.a_tilde, params.b_tilde);

    let a = Mat::from_row_slice(
        6,
        6,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0, //
            0.0,
            0.0,
            0.0,
            0.0,
            c_q * root / (2.0 * sigma * gamma),
            0.0, //
            0.0,
            0.0,
            0.0,
            (s2g2 + 1.0) / (s2g2 - 1.0),
            0.0,
            0.0, //
            0.0,
            0.0,
            0.0,
            0.0,
            -c_q * root / (2.0 * sigma * gamma),
            0.0, //
            b_q * root / gamma,
            0.0,
            b_q * root / gamma,
            0.0,
            a_q,
            0.0, //
            b_t,
            0.0,
            0.0,
            0.0,
            b_t * c_q * (s2g2 - 1.0) / (2.0 * sigma * gamma),
            a_t,
        ],
    );
    // Tabulated with seven entries; the trailing zero has no matching state.
    let b = Mat::from_column_slice(6, 1, &[1.0 / sigma, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let c = Mat::from_row_slice(1, 6, &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    let d = Mat::from_element(1, 1, 1.0 / sigma);
    Ok((a, b, c, d))
}

/// Length of the tabulated closed-loop input column (7, one more than the
/// state count). Recorded so reports can flag it.
pub const REFERENCE_CLOSED_LOOP_INPUT_LEN: usize = 7;

/// Rational closed-loop transfer function
/// `1/sigma + (1/sigma) (s^2 g^2 - 1) B_Q C_Q / (sigma g^2 z^2 (z - A_Q) + B_Q C_Q)`.
pub fn reference_closed_loop_transfer(
    params: &StringParams,
    sigma_q: &StateSpace,
    z: Complex<f64>,
) -> Complex<f64> {
    let sigma = params.sigma();
    let gamma = params.gamma;
    let s2g2 = sigma * sigma * gamma * gamma;
    let bc = sigma_q.b[(0, 0)] * sigma_q.c[(0, 0)];
    let a_q = sigma_q.a[(0, 0)];
    let denom = sigma * gamma * gamma * z * z * (z - a_q) + bc;
    1.0 / sigma + (1.0 / sigma) * (s2g2 - 1.0) * bc / denom
}

/// Expected closed-loop eigenvalue multiset for the default benchmark.
pub fn expected_eigenvalues() -> Vec<Complex<f64>> {
    vec![
        Complex::new(0.25, 0.0),
        Complex::new(-0.9319, 0.0),
        Complex::new(0.2159, 0.5965),
        Complex::new(0.2159, -0.5965),
        Complex::new(0.0, 0.0),
        Complex::new(0.0, 0.0),
    ]
}

/// Best-case worst pairing distance between two complex multisets
/// (minimum over permutations of the maximum pointwise distance).
pub fn eigenvalue_match_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p: &[usize]| {
        let worst = (0..n)
            .map(|i| (a[i] - b[p[i]]).norm())
            .fold(0.0f64, f64::max);
        if worst < best {
            best = worst;
        }
    });
    best
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// One comparison entry of the benchmark report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub quantity: String,
    pub computed: String,
    pub reference: String,
    pub delta: Option<f64>,
    pub status: EntryStatus,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EntryStatus {
    Match,
    Mismatch,
    Flag,
}

/// Full benchmark comparison.
#[derive(Debug, Clone, Serialize)]
pub struct StringReport {
    pub entries: Vec<ReportEntry>,
    pub mismatches: usize,
    pub flags: usize,
}

impl StringReport {
    pub fn push(
        &mut self,
        quantity: impl Into<String>,
        computed: impl Into<String>,
        reference: impl Into<String>,
        delta: Option<f64>,
        status: EntryStatus,
        note: impl Into<String>,
    ) {
        match status {
            EntryStatus::Mismatch => self.mismatches += 1,
            EntryStatus::Flag => self.flags += 1,
            EntryStatus::Match => {}
        }
        self.entries.push(ReportEntry {
            quantity: quantity.into(),
            computed: computed.into(),
            reference: reference.into(),
            delta,
            status,
            note: note.into(),
        });
    }

    fn push_matrix(&mut self, quantity: &str, computed: &Mat, reference: &Mat, tol: f64) {
        let delta = (computed - reference).amax();
        let status = if delta <= tol {
            EntryStatus::Match
        } else {
            EntryStatus::Mismatch
        };
        self.push(
            quantity,
            fmt_matrix(computed),
            fmt_matrix(reference),
            Some(delta),
            status,
            "",
        );
    }

    fn push_scalar(&mut self, quantity: &str, computed: f64, reference: f64, tol: f64) {
        let delta = (computed - reference).abs();
        let status = if delta <= tol {
            EntryStatus::Match
        } else {
            EntryStatus::Mismatch
        };
        self.push(
            quantity,
            format!("{computed:.9}"),
            format!("{reference:.9}"),
            Some(delta),
            status,
            "",
        );
    }

    /// Render as a markdown table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Vibrating-string benchmark report\n\n");
        out.push_str(&format!(
            "{} quantities compared: {} matches, {} mismatches, {} flags.\n\n",
            self.entries.len(),
            self.entries.len() - self.mismatches - self.flags,
            self.mismatches,
            self.flags
        ));
        out.push_str("| quantity | computed | reference | delta | status | note |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for e in &self.entries {
            let delta = e
                .delta
                .map(|d| format!("{d:.3e}"))
                .unwrap_or_else(|| "-".into());
            let status = match e.status {
                EntryStatus::Match => "MATCH",
                EntryStatus::Mismatch => "MISMATCH",
                EntryStatus::Flag => "FLAG",
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                e.quantity, e.computed, e.reference, delta, status, e.note
            ));
        }
        out
    }
}

fn fmt_matrix(m: &Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cols: Vec<String> = (0..m.ncols())
                .map(|j| format!("{:.6}", m[(i, j)]))
                .collect();
            cols.join(", ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

/// Run the whole benchmark: build the fixture, synthesize with both the
/// verbatim and the effective parameter, and compare every tabulated
/// quantity. Mismatches and admissibility violations become report entries,
/// never errors.
pub fn run_benchmark(params: &StringParams) -> Result<StringReport> {
    let sigma = params.sigma();
    let gamma = params.gamma;
    let tol = 1e-8;
    let mut report = StringReport {
        entries: Vec::new(),
        mismatches: 0,
        flags: 0,
    };

    let plant_pde = pde::string_fixture(params.rho, params.t_mod)?;
    let wp = pde::wellposedness_check(&plant_pde);
    report.push(
        "well-posedness (K invertible)",
        format!("sigma_min = {:.6}", wp.sigma_min_k),
        "invertible",
        None,
        if wp.well_posed {
            EntryStatus::Match
        } else {
            EntryStatus::Mismatch
        },
        "",
    );
    let plant = pde::to_discrete(&plant_pde)?;

    // Discrete matrices.
    let expected_discrete: [(&str, Mat); 9] = [
        ("A_d", Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        ("B1_d", Mat::from_column_slice(2, 1, &[1.0 / sigma, 0.0])),
        ("B2_d", Mat::from_column_slice(2, 1, &[0.0, 1.0])),
        ("C1_d", Mat::from_row_slice(1, 2, &[0.0, 2.0])),
        ("C2_d", Mat::from_row_slice(1, 2, &[2.0 * sigma, 0.0])),
        ("D11_d", Mat::from_element(1, 1, 1.0 / sigma)),
        ("D12_d", Mat::zeros(1, 1)),
        ("D21_d", Mat::zeros(1, 1)),
        ("D22_d", Mat::from_element(1, 1, -sigma)),
    ];
    let computed_discrete = [
        &plant.a, &plant.b1, &plant.b2, &plant.c1, &plant.c2, &plant.d11, &plant.d12, &plant.d21,
        &plant.d22,
    ];
    for ((name, expect), computed) in expected_discrete.iter().zip(computed_discrete) {
        report.push_matrix(name, computed, expect, 1e-12);
    }

    // Assumptions.
    let mut scaled = synth::scale_plant(&plant, gamma)?;
    scaled.d22 = Mat::zeros(1, 1);
    let assumptions = clp::check_assumptions(&scaled)?;
    report.push(
        "stabilizability/detectability + circle rank conditions",
        format!(
            "stab={} det={} rank12={} rank21={}",
            assumptions.stabilizable,
            assumptions.detectable,
            assumptions.rank12,
            assumptions.rank21
        ),
        "all hold",
        None,
        if assumptions.all_hold() {
            EntryStatus::Match
        } else {
            EntryStatus::Mismatch
        },
        "",
    );

    // Solvability and closed forms.
    let forms = closed_forms(sigma, gamma)?;
    let (mut synth_report, solutions) = synth::check_solvability(&scaled)?;
    let Some((star, obs)) = solutions else {
        report.push(
            "solvability",
            format!("{:?}", synth_report.first_failure()),
            "conditions a, b, c hold",
            None,
            EntryStatus::Mismatch,
            "KSPY solves failed",
        );
        return Ok(report);
    };
    report.push_matrix("X (scaled control Riccati)", &star.x, &forms.x_scaled, tol);
    report.push_matrix("Y (scaled observer Riccati)", &obs.x, &forms.y_scaled, tol);
    report.push_matrix("V_c", &star.v, &forms.v_c, tol);
    report.push_matrix("W_c", &star.w, &forms.w_c, tol);
    report.push_matrix("V_o", &obs.v, &forms.v_o, tol);
    report.push_matrix("W_o", &obs.w, &forms.w_o, tol);
    report.push_scalar("rho(XY)", synth_report.rho_xy, 0.0, 1e-14);

    // The tabulated stabilized matrix omits gamma; the assembled one is
    // [0, (s^2 g^2 + 1)/(s^2 g^2 - 1); 0, 0].
    let b_stacked = {
        let mut b = Mat::zeros(2, 2);
        b.view_mut((0, 0), (2, 1)).copy_from(&scaled.b1);
        b.view_mut((0, 1), (2, 1)).copy_from(&scaled.b2);
        b
    };
    let a_bf = &scaled.a + &b_stacked * &star.f;
    let printed_entry = (sigma * sigma + 1.0) / (sigma * sigma - 1.0);
    let computed_entry = a_bf[(0, 1)];
    report.push(
        "A + B F (control, entry (1,2))",
        format!("{computed_entry:.9}"),
        format!("{printed_entry:.9} (tabulated without gamma)"),
        Some((computed_entry - printed_entry).abs()),
        if (computed_entry - printed_entry).abs() <= tol {
            EntryStatus::Match
        } else {
            EntryStatus::Flag
        },
        "tabulated form omits gamma; certified instead by spectral radius < 1",
    );

    // Cross triplet and generator.
    let cross_triplet = synth::build_popov_cross(&scaled, &star)?;
    report.push_matrix("Q_x", &cross_triplet.q, &forms.q_cross, tol);
    report.push_matrix("L_x", &cross_triplet.l, &Mat::zeros(2, 2), tol);
    report.push_matrix("R_x", &cross_triplet.r, &forms.r_cross, tol);

    let sigma_g_scaled = synth::build_sigma_g(&scaled, &mut synth_report, &star, &obs)?;
    let inter = synth_report
        .intermediates
        .clone()
        .expect("intermediates recorded");
    report.push_matrix("Z = Y(I-XY)^-1", &inter.z, &forms.z_cross, tol);
    report.push_matrix("V_x", &inter.v_x, &forms.v_cross, tol);
    report.push_matrix("W_x", &inter.w_x, &forms.w_cross, tol);
    report.push_scalar("S_c", inter.s_c[(0, 0)], forms.s_c, tol);
    report.push_scalar("S_x", inter.s_x[(0, 0)], forms.s_cross, tol);
    report.push_matrix("C_{2,F1}", &inter.c2_f1, &forms.c2_f1, tol);

    report.push_matrix("A_g (scaled)", &sigma_g_scaled.a, &forms.a_g, tol);
    report.push_matrix("B_g1 (scaled)", &sigma_g_scaled.b1, &forms.b_g1, tol);
    report.push_matrix("B_g2 (scaled)", &sigma_g_scaled.b2, &forms.b_g2_scaled, tol);
    report.push_matrix("C_g1 (scaled)", &sigma_g_scaled.c1, &forms.c_g1, tol);
    report.push_matrix("C_g2 (scaled)", &sigma_g_scaled.c2, &forms.c_g2_scaled, tol);
    report.push_scalar(
        "D_g11 (scaled)",
        sigma_g_scaled.d11[(0, 0)],
        forms.d_g11_scaled,
        tol,
    );
    report.push_scalar("D_g12", sigma_g_scaled.d12[(0, 0)], forms.d_g12, tol);
    report.push_scalar("D_g21", sigma_g_scaled.d21[(0, 0)], forms.d_g21, tol);
    report.push_scalar("D_g22", sigma_g_scaled.d22[(0, 0)], 0.0, 0.0);

    let sigma_g = synth::unscale_sigma_g(&sigma_g_scaled, gamma)?;
    report.push_matrix("B_g2 (unscaled)", &sigma_g.b2, &forms.b_g2, tol);
    report.push_matrix("C_g2 (unscaled)", &sigma_g.c2, &forms.c_g2, tol);
    report.push_scalar("D_g11 (unscaled)", sigma_g.d11[(0, 0)], forms.d_g11, tol);

    // Free-parameter admissibility: the verbatim parameter violates the
    // bound; the effective one satisfies it.
    let verbatim = params.verbatim_sigma_q();
    let effective = params.effective_sigma_q();
    let v_verbatim = synth::validate_sigma_q(&verbatim, gamma)?;
    report.push(
        "free parameter admissibility |B_Q C_Q/(1+A_Q)| < gamma (verbatim)",
        format!("norm = {:.6}", v_verbatim.norm),
        format!("< {gamma}"),
        Some(v_verbatim.norm),
        if v_verbatim.valid {
            EntryStatus::Match
        } else {
            EntryStatus::Flag
        },
        "tabulated B_Q, C_Q violate the admissibility bound",
    );
    let v_effective = synth::validate_sigma_q(&effective, gamma)?;
    report.push(
        "free parameter admissibility (gamma-scaled)",
        format!("norm = {:.6}", v_effective.norm),
        format!("< {gamma}"),
        Some(v_effective.norm),
        if v_effective.valid {
            EntryStatus::Match
        } else {
            EntryStatus::Mismatch
        },
        "",
    );

    // Both parameter variants flow through assembly + correction; the
    // three-state pre-correction compensator matches the tabulated display
    // identically in B_Q, C_Q, so only the corrected loop differs.
    for (label, sq) in [("verbatim", &verbatim), ("effective", &effective)] {
        let pre = synth::assemble_controller(&sigma_g, sq)?;
        let root = (sigma * sigma * gamma * gamma - 1.0).sqrt();
        let (b_q, c_q) = (sq.b[(0, 0)], sq.c[(0, 0)]);
        let a_c_expect = Mat::from_row_slice(
            3,
            3,
            &[
                0.0,
                (sigma * sigma * gamma * gamma + 1.0) / (sigma * sigma * gamma * gamma - 1.0),
                0.0,
                0.0,
                0.0,
                -c_q * root / (2.0 * sigma * gamma),
                b_q * root / gamma,
                0.0,
                sq.a[(0, 0)],
            ],
        );
        report.push_matrix(
            &format!("A_c ({label} parameter)"),
            &pre.a,
            &a_c_expect,
            tol,
        );
        report.push_scalar(
            &format!("D_c ({label} parameter)"),
            pre.d[(0, 0)],
            1.0 / (2.0 * sigma),
            tol,
        );

        let corrected = synth::d22_correct(&pre, &plant.d22)?;
        report.push_scalar(
            &format!("D_c corrected ({label})"),
            corrected.d[(0, 0)],
            forms.d_c_opt,
            tol,
        );
        report.push_scalar(
            &format!("1 - D22 D_c_corrected ({label})"),
            1.0 - plant.d22[(0, 0)] * corrected.d[(0, 0)],
            2.0,
            tol,
        );

        // Corrected compensator vs the tabulated four-state realization:
        // transfer functions on points outside the unit circle.
        let reference = reference_corrected_controller(params, sq)?;
        let mut worst = 0.0f64;
        for idx in 0..64 {
            let theta = 2.0 * std::f64::consts::PI * idx as f64 / 64.0;
            let radius = 1.5 + 0.02 * idx as f64;
            let z = Complex::new(radius * theta.cos(), radius * theta.sin());
            let g1 = clp::transfer_eval(&corrected, z)?;
            let g2 = clp::transfer_eval(&reference, z)?;
            worst = worst.max((g1[(0, 0)] - g2[(0, 0)]).norm());
        }
        report.push(
            format!("corrected compensator transfer vs 4-state realization ({label})"),
            format!("max gap {worst:.3e} over 64 exterior points"),
            "identical transfer",
            Some(worst),
            if worst <= tol {
                EntryStatus::Match
            } else {
                EntryStatus::Mismatch
            },
            "",
        );

        // Assembled closed loop vs the tabulated one.
        let cl = clp::close_loop(&plant, &corrected)?;
        let (a_ref, _b_ref, _c_ref, _d_ref) = reference_closed_loop(params, sq)?;
        // The assembled loop is 2 + 4 = 6 states only when the compensator
        // carries the tabulated 4-state structure; ours is minimal (3
        // states), so compare through the spectrum and the transfer.
        let eig_ref = numkernel::eigenvalues(&a_ref)?;
        let eig_cl = numkernel::eigenvalues(&cl.a)?;
        // Pad the smaller set with the extra reference eigenvalue a_tilde.
        let mut eig_cl_padded = eig_cl.clone();
        if eig_cl_padded.len() + 1 == eig_ref.len() {
            eig_cl_padded.push(Complex::new(params.a_tilde, 0.0));
        }
        let spec_gap = if eig_cl_padded.len() == eig_ref.len() {
            eigenvalue_match_distance(&eig_cl_padded, &eig_ref)
        } else {
            f64::INFINITY
        };
        report.push(
            format!("closed-loop spectrum vs tabulated matrix ({label})"),
            fmt_eigs(&eig_cl_padded),
            fmt_eigs(&eig_ref),
            Some(spec_gap),
            if spec_gap <= 1e-6 {
                EntryStatus::Match
            } else {
                EntryStatus::Flag
            },
            "tabulated entry (6,5) carries the unrooted factor; spectra \
             nevertheless agree because that column is decoupled",
        );
        report.push(
            format!("tabulated closed-loop input column length ({label})"),
            "6 states",
            format!("{REFERENCE_CLOSED_LOOP_INPUT_LEN} entries listed"),
            None,
            EntryStatus::Flag,
            "one tabulated entry has no matching state; trailing zero dropped",
        );

        // Transfer function against the rational formula on the circle.
        let rho = numkernel::spectral_radius(&cl.a)?;
        let mut transfer_gap = 0.0f64;
        for idx in 0..32 {
            let theta = 2.0 * std::f64::consts::PI * (idx as f64 + 0.37) / 32.0;
            let z = Complex::new(theta.cos(), theta.sin());
            let g = clp::transfer_eval(&cl, z)?;
            let g_ref = reference_closed_loop_transfer(params, sq, z);
            transfer_gap = transfer_gap.max((g[(0, 0)] - g_ref).norm());
        }
        report.push(
            format!("closed-loop transfer vs rational formula ({label})"),
            format!("max gap {transfer_gap:.3e} on the circle"),
            "identical",
            Some(transfer_gap),
            if transfer_gap <= 1e-8 {
                EntryStatus::Match
            } else {
                EntryStatus::Mismatch
            },
            "",
        );

        // Stability and the norm claim.
        if rho < 1.0 {
            let norm = clp::hinf_norm_disc(&cl, clp::DEFAULT_GRID, clp::DEFAULT_REFINE_TOL)?;
            let cont = clp::hinf_norm_cont(&cl)?;
            report.push(
                format!("closed-loop H-infinity norm < gamma ({label})"),
                format!(
                    "rho(A_cl) = {rho:.6}, norm = {:.6} (disc) = {:.6} (cont)",
                    norm.norm, cont.norm
                ),
                format!("stable, norm < {gamma}"),
                Some(norm.norm),
                if norm.norm < gamma {
                    EntryStatus::Match
                } else {
                    EntryStatus::Flag
                },
                "",
            );
        } else {
            report.push(
                format!("closed-loop H-infinity norm < gamma ({label})"),
                format!("unstable: rho(A_cl) = {rho:.6}, norm undefined on the circle"),
                format!("stable, norm < {gamma}"),
                None,
                EntryStatus::Flag,
                "loop built from the inadmissible parameter is not internally stable",
            );
        }

        if label == "effective" {
            let expected = expected_eigenvalues();
            let gap = if eig_ref.len() == expected.len() {
                eigenvalue_match_distance(&eig_ref, &expected)
            } else {
                f64::INFINITY
            };
            report.push(
                "tabulated closed-loop eigenvalues vs expected multiset (effective)",
                fmt_eigs(&eig_ref),
                fmt_eigs(&expected),
                Some(gap),
                if gap <= 1e-3 {
                    EntryStatus::Match
                } else {
                    EntryStatus::Mismatch
                },
                "",
            );
        } else {
            let expected = expected_eigenvalues();
            let gap = if eig_ref.len() == expected.len() {
                eigenvalue_match_distance(&eig_ref, &expected)
            } else {
                f64::INFINITY
            };
            report.push(
                "tabulated closed-loop eigenvalues vs expected multiset (verbatim)",
                fmt_eigs(&eig_ref),
                fmt_eigs(&expected),
                Some(gap),
                if gap <= 1e-3 {
                    EntryStatus::Match
                } else {
                    EntryStatus::Flag
                },
                "expected multiset corresponds to the gamma-scaled parameter",
            );
        }
    }

    Ok(report)
}

fn fmt_eigs(eigs: &[Complex<f64>]) -> String {
    let mut sorted: Vec<&Complex<f64>> = eigs.iter().collect();
    sorted.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.im.total_cmp(&b.im)));
    let items: Vec<String> = sorted
        .iter()
        .map(|l| format!("{:.4}{:+.4}i", l.re, l.im))
        .collect();
    format!("{{{}}}", items.join(", "))
}

/// Continuous initial profile used by the default simulation runs: smooth
/// and compatible with the closed-loop boundary reflection only in the weak
/// sense (good enough for decay studies).
pub fn default_initial_profile(states: usize) -> impl Fn(f64) -> DVector<f64> {
    move |zeta: f64| {
        DVector::from_fn(states, |i, _| {
            ((i + 1) as f64 * 2.1 * zeta).sin() + 0.1 * (i as f64 + 1.0)
        })
    }
}

/// Smooth initial data for the open-loop string plant that is continuous
/// across the boundary reflection (lambda0(0) x0(0) = A_d lambda0(1) x0(1))
/// but not C^1-compatible: the profile f stays continuous with derivative
/// kinks at integer arguments, the regime where the simulator's linear
/// reconstruction is genuinely first order.
pub fn compatible_string_x0(z: f64) -> DVector<f64> {
    let (alpha, beta) = (0.8, -0.4);
    let phase = std::f64::consts::FRAC_PI_2 * z;
    let base0 = alpha * phase.cos() - beta * phase.sin();
    let base1 = beta * phase.cos() + alpha * phase.sin();
    // Perturbation vanishing at both endpoints keeps C^0 compatibility.
    DVector::from_vec(vec![
        base0 + 0.4 * (std::f64::consts::PI * z).sin(),
        base1 + 0.7 * z * (1.0 - z),
    ])
}

/// Sup-norm error of the grid simulator against the characteristics oracle
/// on the string plant: a fixed query grid plus probes in the cells crossed
/// by the derivative kinks of the profile (where the continuum sup lives).
pub fn simulator_sup_error(cells: usize, steps: usize) -> Result<f64> {
    let plant = pde::to_discrete(&pde::string_fixture(1.0 / 6.0, 1.0 / 6.0)?)?;
    let lam = crate::pde::SpeedProfile::constant(1.0)?;
    let x0 = compatible_string_x0;
    let d_fun = |t: f64| DVector::from_vec(vec![(0.7 * t).sin() * 0.5]);
    let u_fun = |_t: f64| DVector::zeros(1);
    let oracle = crate::sim::CharacteristicsOracle::new(&plant, &lam, &x0, &d_fun, &u_fun)?;

    let mut state = crate::sim::init_from_continuous(&x0, &lam, cells)?;
    let mut history = vec![state.clone()];
    for j in 0..steps {
        let mut d_j = Mat::zeros(1, cells);
        let u_j = Mat::zeros(1, cells);
        for i in 0..cells {
            let zeta = crate::sim::GridState::midpoint(i, cells);
            d_j[(0, i)] = d_fun((j as f64 + zeta) * plant.travel_time)[0];
        }
        state = crate::sim::step(&state, &plant, &d_j, &u_j)?;
        history.push(state.clone());
    }

    let horizon = steps as f64 * plant.travel_time;
    let h = 1.0 / cells as f64;
    let mut worst = 0.0f64;
    let mut probe = |zeta: f64, t: f64| -> Result<()> {
        if !(0.0..=1.0).contains(&zeta) || t < 0.0 || t > horizon {
            return Ok(());
        }
        let got = crate::sim::reconstruct_continuous(&history, &lam, zeta, t)?;
        let expect = oracle.eval(zeta, t)?;
        worst = worst.max((got - expect).amax());
        Ok(())
    };
    // Fixed grid away from the kink characteristics.
    for qz in 1..20 {
        for qt in 1..20 {
            probe(qz as f64 / 20.0, qt as f64 * horizon / 20.0 + 0.013)?;
        }
    }
    // Kink probes: s = k(zeta) + t just past an integer, offset by a quarter
    // cell so the interpolation cell straddles the kink.
    for s_star in 1..=steps {
        for qz in 1..10 {
            let zeta = qz as f64 / 10.0;
            let t = (s_star as f64 - (1.0 - zeta) + 0.25 * h) * plant.travel_time;
            probe(zeta, t)?;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_match_hand_values() {
        let f = closed_forms(6.0, 0.2).unwrap();
        assert!((f.x_scaled[(1, 1)] - 720.0 / 11.0).abs() < 1e-12);
        assert!((f.y_scaled[(0, 0)] - 5.0 / 11.0).abs() < 1e-12);
        assert!((f.v_c[(0, 0)] - 0.552771).abs() < 1e-6);
        assert!((f.d_g11 - 1.0 / 12.0).abs() < 1e-15);
        assert!((f.d_c_opt - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn eigenvalue_matching_is_permutation_invariant() {
        let a = vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(-1.0, 0.0),
        ];
        let mut b = a.clone();
        b.reverse();
        assert!(eigenvalue_match_distance(&a, &b) < 1e-15);
        let mut c = a.clone();
        c[0] = Complex::new(1.1, 0.0);
        let d = eigenvalue_match_distance(&a, &c);
        assert!((d - 0.1).abs() < 1e-12);
    }
}
