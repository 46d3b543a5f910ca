//! The boundary-controlled transport plant and its discrete-time form.
//!
//! The plant is
//! ```text
//!   x_t(z, t) = -(lambda0(z) x(z, t))_z
//!   E d(t) + [0; I] u(t) = -K lambda0(0) x(0,t) - L lambda0(1) x(1,t)
//!   z(t) = -Kz lambda0(0) x(0,t) - Lz lambda0(1) x(1,t)
//!   y(t) = -Ky lambda0(0) x(0,t) - Ly lambda0(1) x(1,t)
//! ```
//! with `lambda0 >= eps > 0`. With invertible K the flux travels across the
//! domain in time p(1) = int_0^1 1/lambda0, and one boundary reflection is a
//! constant-matrix discrete-time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{self, Mat};

/// Default quadrature resolution for sampled speed profiles.
pub const DEFAULT_QUAD_POINTS: usize = 1024;

/// Relative invertibility threshold for the boundary matrix K.
pub const WELLPOSED_TOL: f64 = 1e-12;

/// Transport speed profile on [0, 1], bounded below by a positive constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpeedProfile {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    /// Piecewise constant: `values[i]` holds on `[breakpoints[i-1], breakpoints[i])`
    /// with implicit endpoints 0 and 1, so `values.len() == breakpoints.len() + 1`.
    #[serde(rename = "piecewise-constant")]
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Samples on an increasing grid covering [0, 1]; evaluation is linear
    /// interpolation.
    #[serde(rename = "sampled")]
    Sampled { grid: Vec<f64>, values: Vec<f64> },
}

impl SpeedProfile {
    pub fn constant(value: f64) -> Result<Self> {
        let p = SpeedProfile::Constant { value };
        p.validate()?;
        Ok(p)
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = SpeedProfile::PiecewiseConstant {
            breakpoints,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sampled(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = SpeedProfile::Sampled { grid, values };
        p.validate()?;
        Ok(p)
    }

    /// Check positivity and structural invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            SpeedProfile::Constant { value } => {
                if !value.is_finite() || *value <= 0.0 {
                    return Err(Error::Contract(format!(
                        "speed profile must be positive, got {value}"
                    )));
                }
            }
            SpeedProfile::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::Contract(
                        "piecewise profile needs one more value than breakpoints".into(),
                    ));
                }
                if !breakpoints.windows(2).all(|w| w[0] < w[1])
                    || breakpoints.iter().any(|&b| !(0.0..=1.0).contains(&b))
                {
                    return Err(Error::Contract(
                        "breakpoints must be strictly increasing inside [0, 1]".into(),
                    ));
                }
                if values.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                    return Err(Error::Contract("speed profile sample <= 0".into()));
                }
            }
            SpeedProfile::Sampled { grid, values } => {
                if grid.len() != values.len() || grid.len() < 2 {
                    return Err(Error::Contract(
                        "sampled profile needs matching grid/values with at least 2 points".into(),
                    ));
                }
                if !grid.windows(2).all(|w| w[0] < w[1])
                    || grid[0] > 0.0
                    || *grid.last().unwrap() < 1.0
                {
                    return Err(Error::Contract(
                        "sampled grid must increase and cover [0, 1]".into(),
                    ));
                }
                if values.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                    return Err(Error::Contract("speed profile sample <= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Essential lower bound of the profile.
    pub fn lower_bound(&self) -> f64 {
        match self {
            SpeedProfile::Constant { value } => *value,
            SpeedProfile::PiecewiseConstant { values, .. }
            | SpeedProfile::Sampled { values, .. } => {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Point evaluation lambda0(zeta).
    pub fn eval(&self, zeta: f64) -> f64 {
        match self {
            SpeedProfile::Constant { value } => *value,
            SpeedProfile::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let idx = breakpoints.partition_point(|&b| b <= zeta);
                values[idx]
            }
            SpeedProfile::Sampled { grid, values } => {
                if zeta <= grid[0] {
                    return values[0];
                }
                if zeta >= *grid.last().unwrap() {
                    return *values.last().unwrap();
                }
                let hi = grid.partition_point(|&g| g <= zeta);
                let (g0, g1) = (grid[hi - 1], grid[hi]);
                let w = (zeta - g0) / (g1 - g0);
                values[hi - 1] * (1.0 - w) + values[hi] * w
            }
        }
    }
}

/// Plant dimensions: state n, disturbance k, control p, regulated output l,
/// measured output m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantDims {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub l: usize,
    pub m: usize,
}

/// The boundary-controlled transport plant.
#[derive(Debug, Clone)]
pub struct HyperbolicPlant {
    pub dims: PlantDims,
    pub lambda0: SpeedProfile,
    pub e: Mat,
    pub k_bc: Mat,
    pub l_bc: Mat,
    pub ky: Mat,
    pub ly: Mat,
    pub kz: Mat,
    pub lz: Mat,
    /// Optional constant reaction matrix; `absorb_reaction` removes it.
    pub m_reaction: Option<Mat>,
}

impl HyperbolicPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: PlantDims,
        lambda0: SpeedProfile,
        e: Mat,
        k_bc: Mat,
        l_bc: Mat,
        ky: Mat,
        ly: Mat,
        kz: Mat,
        lz: Mat,
        m_reaction: Option<Mat>,
    ) -> Result<Self> {
        lambda0.validate()?;
        let PlantDims { n, k, p, l, m } = dims;
        if p > n {
            return Err(Error::Dimension(format!(
                "control dimension p={p} exceeds state dimension n={n}"
            )));
        }
        let expect = [
            ("E", &e, n, k),
            ("K", &k_bc, n, n),
            ("L", &l_bc, n, n),
            ("Ky", &ky, m, n),
            ("Ly", &ly, m, n),
            ("Kz", &kz, l, n),
            ("Lz", &lz, l, n),
        ];
        for (name, mat, rows, cols) in expect {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(Error::Dimension(format!(
                    "{name} must be {rows}x{cols}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            numkernel::ensure_finite(mat, name)?;
        }
        if let Some(mr) = &m_reaction {
            if mr.nrows() != n || mr.ncols() != n {
                return Err(Error::Dimension("M must be n x n".into()));
            }
            numkernel::ensure_finite(mr, "M")?;
        }
        Ok(Self {
            dims,
            lambda0,
            e,
            k_bc,
            l_bc,
            ky,
            ly,
            kz,
            lz,
            m_reaction,
        })
    }
}

/// Outcome of the well-posedness test: K invertible up to the relative
/// threshold, with the measured smallest singular value as diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellPosedness {
    pub well_posed: bool,
    pub sigma_min_k: f64,
    pub threshold: f64,
}

/// The plant is well-posed iff K is invertible.
pub fn wellposedness_check(plant: &HyperbolicPlant) -> WellPosedness {
    let sigma_min = numkernel::min_singular_value(&plant.k_bc);
    let scale = plant.k_bc.amax();
    let threshold = WELLPOSED_TOL * scale.max(f64::MIN_POSITIVE);
    WellPosedness {
        well_posed: sigma_min > threshold,
        sigma_min_k: sigma_min,
        threshold,
    }
}

/// Tabulated travel-time reparameterization:
/// `p(zeta) = int_0^zeta 1/lambda0`, `k(zeta) = 1 - p(zeta)/p(1)`.
///
/// `p` is strictly increasing; `k` decreases from exactly 1 to exactly 0.
#[derive(Debug, Clone)]
pub struct TravelTime {
    zeta: Vec<f64>,
    p: Vec<f64>,
    p1: f64,
}

impl TravelTime {
    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.zeta, &self.p)
    }

    /// p(zeta) by linear interpolation of the table (exact for constant and
    /// piecewise-constant profiles since p is piecewise linear there).
    pub fn p_at(&self, zeta: f64) -> f64 {
        let z = zeta.clamp(0.0, 1.0);
        let hi = self
            .zeta
            .partition_point(|&g| g < z)
            .max(1)
            .min(self.zeta.len() - 1);
        let (z0, z1) = (self.zeta[hi - 1], self.zeta[hi]);
        let w = if z1 > z0 { (z - z0) / (z1 - z0) } else { 0.0 };
        self.p[hi - 1] * (1.0 - w) + self.p[hi] * w
    }

    /// k(zeta) = 1 - p(zeta)/p(1), with the endpoints pinned to 1 and 0.
    pub fn k_at(&self, zeta: f64) -> f64 {
        if zeta <= 0.0 {
            return 1.0;
        }
        if zeta >= 1.0 {
            return 0.0;
        }
        1.0 - self.p_at(zeta) / self.p1
    }

    /// Solve k(zeta) = eta for zeta by bisection on the monotone table.
    pub fn invert_k(&self, eta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Range(format!("k^-1 argument {eta} outside [0, 1]")));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        // k is strictly decreasing: k(lo) = 1 >= eta >= 0 = k(hi).
        for _ in 0..100 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.k_at(mid) >= eta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if hi - lo > 1e-9 {
            return Err(Error::Numerical("bisection for k^-1 stalled".into()));
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Build the travel-time table with `quad_points` subintervals.
pub fn travel_time_profile(lambda0: &SpeedProfile, quad_points: usize) -> Result<TravelTime> {
    lambda0.validate()?;
    let quad_points = quad_points.max(1);

    // Node set: uniform grid, plus breakpoints/sample nodes so the trapezoid
    // rule is exact wherever 1/lambda0 is piecewise linear or constant.
    let mut nodes: Vec<f64> = (0..=quad_points)
        .map(|i| i as f64 / quad_points as f64)
        .collect();
    match lambda0 {
        SpeedProfile::PiecewiseConstant { breakpoints, .. } => {
            nodes.extend(breakpoints.iter().copied());
        }
        SpeedProfile::Sampled { grid, .. } => {
            nodes.extend(grid.iter().copied().filter(|g| (0.0..=1.0).contains(g)));
        }
        SpeedProfile::Constant { .. } => {}
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut p = Vec::with_capacity(nodes.len());
    p.push(0.0);
    let mut acc = 0.0f64;
    for w in nodes.windows(2) {
        let (z0, z1) = (w[0], w[1]);
        let h = z1 - z0;
        let integrand = |z: f64| 1.0 / lambda0.eval(z);
        let step = match lambda0 {
            // Piecewise constant: the value on (z0, z1) decides everything.
            SpeedProfile::PiecewiseConstant { .. } => h * integrand(0.5 * (z0 + z1)),
            _ => 0.5 * h * (integrand(z0) + integrand(z1)),
        };
        acc += step;
        p.push(acc);
    }
    let p1 = acc;
    if !(p1.is_finite() && p1 > 0.0) {
        return Err(Error::Contract(format!("travel time p(1) = {p1} invalid")));
    }
    Ok(TravelTime { zeta: nodes, p, p1 })
}

/// The nine-matrix discrete-time plant plus the travel time p(1).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d21: Mat,
    pub d22: Mat,
    pub travel_time: f64,
}

impl DiscretePlant {
    pub fn dims(&self) -> PlantDims {
        PlantDims {
            n: self.a.nrows(),
            k: self.b1.ncols(),
            p: self.b2.ncols(),
            l: self.c1.nrows(),
            m: self.c2.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let PlantDims { n, k, p, l, m } = self.dims();
        let expect = [
            ("A_d", &self.a, n, n),
            ("B1", &self.b1, n, k),
            ("B2", &self.b2, n, p),
            ("C1", &self.c1, l, n),
            ("C2", &self.c2, m, n),
            ("D11", &self.d11, l, k),
            ("D12", &self.d12, l, p),
            ("D21", &self.d21, m, k),
            ("D22", &self.d22, m, p),
        ];
        for (name, mat, rows, cols) in expect {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(Error::Dimension(format!(
                    "{name} must be {rows}x{cols}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            numkernel::ensure_finite(mat, name)?;
        }
        if !(self.travel_time.is_finite() && self.travel_time > 0.0) {
            return Err(Error::Contract("travel_time must be positive".into()));
        }
        Ok(())
    }
}

/// Build the discrete-time plant through one LU factorization of K:
/// `A_d = -K^-1 L`, `B1 = -K^-1 E`, `B2 = -K^-1 [0; I]`, with the C and D
/// blocks assembled from the same solves.
pub fn to_discrete(plant: &HyperbolicPlant) -> Result<DiscretePlant> {
    let wp = wellposedness_check(plant);
    if !wp.well_posed {
        return Err(Error::NotWellPosed(format!(
            "K is singular (sigma_min = {:.3e})",
            wp.sigma_min_k
        )));
    }
    let PlantDims { n, p, .. } = plant.dims;

    // [0; I] selector for the control channel.
    let mut sel = Mat::zeros(n, p);
    for j in 0..p {
        sel[(n - p + j, j)] = 1.0;
    }

    let lu = plant.k_bc.clone().lu();
    let solve = |rhs: &Mat| -> Result<Mat> {
        lu.solve(rhs)
            .ok_or_else(|| Error::NotWellPosed("K solve failed".into()))
    };
    let k_inv_l = solve(&plant.l_bc)?;
    let k_inv_e = solve(&plant.e)?;
    let k_inv_sel = solve(&sel)?;

    let a = -&k_inv_l;
    let b1 = -&k_inv_e;
    let b2 = -&k_inv_sel;
    let c1 = &plant.kz * &k_inv_l - &plant.lz;
    let c2 = &plant.ky * &k_inv_l - &plant.ly;
    let d11 = &plant.kz * &k_inv_e;
    let d12 = &plant.kz * &k_inv_sel;
    let d21 = &plant.ky * &k_inv_e;
    let d22 = &plant.ky * &k_inv_sel;

    let tt = travel_time_profile(&plant.lambda0, DEFAULT_QUAD_POINTS)?;

    let dp = DiscretePlant {
        a,
        b1,
        b2,
        c1,
        c2,
        d11,
        d12,
        d21,
        d22,
        travel_time: tt.p1(),
    };
    dp.validate()?;
    Ok(dp)
}

/// Remove a constant reaction term M by the change of variables
/// `x~ = Q(zeta) x` with `Q' = -Q M / lambda0`, `Q(0) = I`. Only the matrices
/// multiplying the zeta = 1 trace change: `L <- L Q(1)^-1` (and likewise Ly,
/// Lz), because `lambda0(1) x(1) = Q(1)^-1 lambda0(1) x~(1)` while Q(0) = I
/// leaves the zeta = 0 trace untouched.
pub fn absorb_reaction(plant: &HyperbolicPlant, ode_steps: usize) -> Result<HyperbolicPlant> {
    let Some(m_reaction) = &plant.m_reaction else {
        return Ok(plant.clone());
    };
    if m_reaction.amax() == 0.0 {
        let mut out = plant.clone();
        out.m_reaction = None;
        return Ok(out);
    }
    let q1 = integrate_reaction_ode(m_reaction, &plant.lambda0, ode_steps.max(8))?;
    let q1_inv = q1
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Q(1) is singular".into()))?;

    let mut out = plant.clone();
    out.l_bc = &plant.l_bc * &q1_inv;
    out.ly = &plant.ly * &q1_inv;
    out.lz = &plant.lz * &q1_inv;
    out.m_reaction = None;
    Ok(out)
}

/// Integrate `Q' = -lambda0^-1 Q M` from Q(0) = I to zeta = 1 with the
/// classical 4th-order Runge-Kutta scheme on a fixed step.
pub fn integrate_reaction_ode(
    m_reaction: &Mat,
    lambda0: &SpeedProfile,
    ode_steps: usize,
) -> Result<Mat> {
    lambda0.validate()?;
    let n = m_reaction.nrows();
    if m_reaction.ncols() != n {
        return Err(Error::Dimension("reaction matrix must be square".into()));
    }
    let h = 1.0 / ode_steps as f64;
    let rhs = |z: f64, q: &Mat| -> Mat { -(q * m_reaction) / lambda0.eval(z) };
    let mut q = Mat::identity(n, n);
    for i in 0..ode_steps {
        let z = i as f64 * h;
        let k1 = rhs(z, &q);
        let k2 = rhs(z + 0.5 * h, &(&q + &k1 * (0.5 * h)));
        let k3 = rhs(z + 0.5 * h, &(&q + &k2 * (0.5 * h)));
        let k4 = rhs(z + h, &(&q + &k3 * h));
        q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(q)
}

/// The diagonalized vibrating-string plant with mass density `rho` and
/// modulus `t_mod`; wave speed v = sqrt(t_mod/rho) and impedance parameter
/// sigma = 1/sqrt(rho t_mod). Disturbance: boundary velocity at zeta = 1;
/// control: boundary force at zeta = 0; regulated output: force at zeta = 1;
/// measurement: velocity at zeta = 0.
pub fn string_fixture(rho: f64, t_mod: f64) -> Result<HyperbolicPlant> {
    if !(rho.is_finite() && rho > 0.0 && t_mod.is_finite() && t_mod > 0.0) {
        return Err(Error::Contract(
            "string parameters rho, T must be positive".into(),
        ));
    }
    let v = (t_mod / rho).sqrt();
    let sigma = 1.0 / (rho * t_mod).sqrt();
    let dims = PlantDims {
        n: 2,
        k: 1,
        p: 1,
        l: 1,
        m: 1,
    };
    HyperbolicPlant::new(
        dims,
        SpeedProfile::constant(v)?,
        Mat::from_column_slice(2, 1, &[1.0, 0.0]),
        Mat::from_row_slice(2, 2, &[-sigma, 0.0, 0.0, -1.0]),
        Mat::from_row_slice(2, 2, &[0.0, sigma, -1.0, 0.0]),
        Mat::from_row_slice(1, 2, &[0.0, sigma]),
        Mat::from_row_slice(1, 2, &[-sigma, 0.0]),
        Mat::from_row_slice(1, 2, &[-1.0, 0.0]),
        Mat::from_row_slice(1, 2, &[0.0, -1.0]),
        None,
    )
}
