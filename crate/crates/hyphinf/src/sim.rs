//! Exact simulation through the discrete-time representation, plus an
//! independent method-of-characteristics oracle.
//!
//! The discrete state x_d(j) is a function on [0, 1], sampled here at the
//! cell midpoints zeta_i = (i + 1/2)/N. The recursion
//! `x_d(j+1)(zeta) = A_d x_d(j)(zeta) + B1 d_d(j)(zeta) + B2 u_d(j)(zeta)`
//! is pointwise exact, so all discretization error lives in the initial
//! sampling and in the linear interpolation used for reconstruction; both
//! are first order in 1/N.
//!
//! Time bookkeeping: x_d(j)(zeta) = f(j + zeta) where
//! `f(k(zeta) + t/p(1)) = lambda0(zeta) x(zeta, t)`, and the input samples
//! are d_d(j)(zeta) = d((j + zeta) p(1)).

use nalgebra::DVector;

use crate::clp::ClosedLoop;
use crate::error::{Error, Result};
use crate::numkernel::Mat;
use crate::pde::{self, DiscretePlant, SpeedProfile, TravelTime};

/// State samples at cell midpoints after `step` boundary reflections.
#[derive(Debug, Clone)]
pub struct GridState {
    /// n x N matrix; column i holds x_d(step)((i + 1/2)/N).
    pub samples: Mat,
    pub step: usize,
    pub travel_time: f64,
}

impl GridState {
    pub fn cells(&self) -> usize {
        self.samples.ncols()
    }

    /// Midpoint of cell i.
    pub fn midpoint(i: usize, cells: usize) -> f64 {
        (i as f64 + 0.5) / cells as f64
    }

    /// Discrete L^2(0, 1) norm of the sampled state.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.norm_squared() / self.cells() as f64).sqrt()
    }
}

/// Outputs of one step on the same midpoint grid.
#[derive(Debug, Clone)]
pub struct SignalTrace {
    pub z: Mat,
    pub y: Mat,
}

/// Sample a vector-valued function of zeta at the cell midpoints.
pub fn sample_midpoints(f: &dyn Fn(f64) -> DVector<f64>, rows: usize, cells: usize) -> Result<Mat> {
    let mut out = Mat::zeros(rows, cells);
    for i in 0..cells {
        let v = f(GridState::midpoint(i, cells));
        if v.len() != rows {
            return Err(Error::Dimension(format!(
                "sampled function returned length {}, expected {rows}",
                v.len()
            )));
        }
        out.set_column(i, &v);
    }
    Ok(out)
}

/// Initial discrete state from continuous data:
/// `x_d(0)(k(zeta)) = lambda0(zeta) x0(zeta)`, so each midpoint eta is
/// pulled back through the monotone bisection zeta = k^-1(eta).
pub fn init_from_continuous(
    x0: &dyn Fn(f64) -> DVector<f64>,
    lambda0: &SpeedProfile,
    cells: usize,
) -> Result<GridState> {
    if cells == 0 {
        return Err(Error::Contract("cell count must be at least 1".into()));
    }
    let tt = pde::travel_time_profile(lambda0, pde::DEFAULT_QUAD_POINTS)?;
    init_from_continuous_with(x0, lambda0, &tt, cells)
}

/// Same as `init_from_continuous` with a precomputed travel-time table.
pub fn init_from_continuous_with(
    x0: &dyn Fn(f64) -> DVector<f64>,
    lambda0: &SpeedProfile,
    tt: &TravelTime,
    cells: usize,
) -> Result<GridState> {
    let probe = x0(0.0);
    let n = probe.len();
    let mut samples = Mat::zeros(n, cells);
    for i in 0..cells {
        let eta = GridState::midpoint(i, cells);
        let zeta = tt.invert_k(eta)?;
        let v = x0(zeta) * lambda0.eval(zeta);
        samples.set_column(i, &v);
    }
    Ok(GridState {
        samples,
        step: 0,
        travel_time: tt.p1(),
    })
}

/// One boundary reflection: the pointwise matrix recursion per grid column.
pub fn step(state: &GridState, p: &DiscretePlant, d_j: &Mat, u_j: &Mat) -> Result<GridState> {
    let dims = p.dims();
    let cells = state.cells();
    if state.samples.nrows() != dims.n {
        return Err(Error::Dimension(format!(
            "state has {} rows, plant wants {}",
            state.samples.nrows(),
            dims.n
        )));
    }
    if d_j.nrows() != dims.k
        || d_j.ncols() != cells
        || u_j.nrows() != dims.p
        || u_j.ncols() != cells
    {
        return Err(Error::Dimension(
            "input signals must match (k x N) and (p x N)".into(),
        ));
    }
    Ok(GridState {
        samples: &p.a * &state.samples + &p.b1 * d_j + &p.b2 * u_j,
        step: state.step + 1,
        travel_time: state.travel_time,
    })
}

/// Pointwise output equations on the grid.
pub fn outputs(state: &GridState, p: &DiscretePlant, d_j: &Mat, u_j: &Mat) -> Result<SignalTrace> {
    let dims = p.dims();
    let cells = state.cells();
    if d_j.ncols() != cells || u_j.ncols() != cells {
        return Err(Error::Dimension("grid misalignment".into()));
    }
    if d_j.nrows() != dims.k || u_j.nrows() != dims.p {
        return Err(Error::Dimension("input row mismatch".into()));
    }
    Ok(SignalTrace {
        z: &p.c1 * &state.samples + &p.d11 * d_j + &p.d12 * u_j,
        y: &p.c2 * &state.samples + &p.d21 * d_j + &p.d22 * u_j,
    })
}

/// Reconstruct x(zeta, t) from the sampled history: the samples of step j
/// live at global positions s = j + (i + 1/2)/N of the profile f, so the
/// reconstruction is one linear interpolation on that uniform grid followed
/// by division by lambda0(zeta).
pub fn reconstruct_continuous(
    history: &[GridState],
    lambda0: &SpeedProfile,
    zeta: f64,
    t: f64,
) -> Result<DVector<f64>> {
    if history.is_empty() {
        return Err(Error::Range("empty history".into()));
    }
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Range(format!("zeta = {zeta} outside [0, 1]")));
    }
    if t < 0.0 {
        return Err(Error::Range(format!("t = {t} negative")));
    }
    let tt = pde::travel_time_profile(lambda0, pde::DEFAULT_QUAD_POINTS)?;
    let p1 = tt.p1();
    let cells = history[0].cells();
    let n = history[0].samples.nrows();

    let s = tt.k_at(zeta) + t / p1;
    // Global sample index: s = j + (i + 1/2)/N <=> idx = s*N - 1/2.
    let pos = s * cells as f64 - 0.5;
    let lo = pos.floor() as isize;
    let max_idx = history.len() * cells - 1;
    let (i0, i1, w) = if lo < 0 {
        (0usize, 0usize, 0.0)
    } else if lo as usize >= max_idx {
        (max_idx, max_idx, 0.0)
    } else {
        (lo as usize, lo as usize + 1, pos - lo as f64)
    };
    if s > history.len() as f64 {
        return Err(Error::Range(format!(
            "t = {t} beyond the simulated horizon ({} steps)",
            history.len()
        )));
    }
    let fetch = |idx: usize| -> Result<DVector<f64>> {
        let (j, i) = (idx / cells, idx % cells);
        let gs = history
            .get(j)
            .ok_or_else(|| Error::Range(format!("step {j} beyond horizon")))?;
        if gs.step != j {
            return Err(Error::Contract("history steps out of order".into()));
        }
        Ok(gs.samples.column(i).into_owned())
    };
    let f0 = fetch(i0)?;
    let f1 = fetch(i1)?;
    let f = f0 * (1.0 - w) + f1 * w;
    debug_assert_eq!(f.len(), n);
    Ok(f / lambda0.eval(zeta))
}

/// Closed-loop simulation trace.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub history: Vec<GridState>,
    /// Discrete L^2 state norm after each step (index 0 = initial state).
    pub l2_norms: Vec<f64>,
    /// Per-step L^2 norm of each regulated-output component (l x steps).
    pub z_norms: Mat,
}

/// Simulate the autonomous closed loop driven by the disturbance d(t):
/// the closed loop is itself a plant with state matrix A_cl, disturbance
/// input B_cl and regulated output C_cl, D_cl (no control, no measurement).
pub fn simulate_closed_loop(
    cl: &ClosedLoop,
    lambda0: &SpeedProfile,
    x0: &dyn Fn(f64) -> DVector<f64>,
    d: &dyn Fn(f64) -> DVector<f64>,
    steps: usize,
    cells: usize,
) -> Result<SimTrace> {
    if cells == 0 || steps == 0 {
        return Err(Error::Contract("steps and cells must be at least 1".into()));
    }
    let n = cl.order();
    let k = cl.b.ncols();
    let l = cl.c.nrows();
    let as_plant = DiscretePlant {
        a: cl.a.clone(),
        b1: cl.b.clone(),
        b2: Mat::zeros(n, 1),
        c1: cl.c.clone(),
        c2: Mat::zeros(0, n),
        d11: cl.d.clone(),
        d12: Mat::zeros(l, 1),
        d21: Mat::zeros(0, k),
        d22: Mat::zeros(0, 1),
        travel_time: cl.travel_time,
    };
    let tt = pde::travel_time_profile(lambda0, pde::DEFAULT_QUAD_POINTS)?;
    if (tt.p1() - cl.travel_time).abs() > 1e-9 * (1.0 + cl.travel_time) {
        return Err(Error::Contract(format!(
            "speed profile travel time {} does not match the closed loop's {}",
            tt.p1(),
            cl.travel_time
        )));
    }

    let mut state = init_from_continuous_with(x0, lambda0, &tt, cells)?;
    let mut history = Vec::with_capacity(steps + 1);
    let mut l2_norms = Vec::with_capacity(steps + 1);
    let mut z_norms = Mat::zeros(l, steps);
    l2_norms.push(state.l2_norm());

    let u_empty = Mat::zeros(1, cells);
    for j in 0..steps {
        // d_d(j)(zeta_i) = d((j + zeta_i) p(1)).
        let mut d_j = Mat::zeros(k, cells);
        for i in 0..cells {
            let zeta = GridState::midpoint(i, cells);
            let v = d((j as f64 + zeta) * cl.travel_time);
            if v.len() != k {
                return Err(Error::Dimension(format!(
                    "disturbance returned length {}, expected {k}",
                    v.len()
                )));
            }
            d_j.set_column(i, &v);
        }
        let out = outputs(&state, &as_plant, &d_j, &u_empty)?;
        for comp in 0..l {
            z_norms[(comp, j)] = (out.z.row(comp).norm_squared() / cells as f64).sqrt();
        }
        let next = step(&state, &as_plant, &d_j, &u_empty)?;
        history.push(state);
        l2_norms.push(next.l2_norm());
        state = next;
    }
    history.push(state);
    Ok(SimTrace {
        history,
        l2_norms,
        z_norms,
    })
}

/// Independent oracle: evaluate the profile f directly from the recursion
/// `f(s + 1) = A_d f(s) + B1 d(s p(1)) + B2 u(s p(1))` at exact real
/// arguments, recursing down to the initial segment f|[0, 1] which is the
/// pullback of the initial data. No grid is involved.
pub struct CharacteristicsOracle<'a> {
    plant: &'a DiscretePlant,
    lambda0: &'a SpeedProfile,
    tt: TravelTime,
    x0: &'a dyn Fn(f64) -> DVector<f64>,
    d: &'a dyn Fn(f64) -> DVector<f64>,
    u: &'a dyn Fn(f64) -> DVector<f64>,
}

impl<'a> CharacteristicsOracle<'a> {
    pub fn new(
        plant: &'a DiscretePlant,
        lambda0: &'a SpeedProfile,
        x0: &'a dyn Fn(f64) -> DVector<f64>,
        d: &'a dyn Fn(f64) -> DVector<f64>,
        u: &'a dyn Fn(f64) -> DVector<f64>,
    ) -> Result<Self> {
        match lambda0 {
            SpeedProfile::Constant { .. } | SpeedProfile::PiecewiseConstant { .. } => {}
            SpeedProfile::Sampled { .. } => {
                return Err(Error::Contract(
                    "characteristics oracle needs a constant or piecewise-constant profile".into(),
                ))
            }
        }
        let tt = pde::travel_time_profile(lambda0, pde::DEFAULT_QUAD_POINTS)?;
        Ok(Self {
            plant,
            lambda0,
            tt,
            x0,
            d,
            u,
        })
    }

    /// f(s) for s >= 0.
    pub fn eval_f(&self, s: f64) -> Result<DVector<f64>> {
        if s < 0.0 {
            return Err(Error::Range(format!("f argument {s} negative")));
        }
        if s <= 1.0 {
            // f(k(zeta)) = lambda0(zeta) x0(zeta): invert k exactly through
            // the monotone table.
            let zeta = self.tt.invert_k(s.clamp(0.0, 1.0))?;
            return Ok((self.x0)(zeta) * self.lambda0.eval(zeta));
        }
        let prev = self.eval_f(s - 1.0)?;
        let t_phys = (s - 1.0) * self.tt.p1();
        Ok(&self.plant.a * prev
            + &self.plant.b1 * (self.d)(t_phys)
            + &self.plant.b2 * (self.u)(t_phys))
    }

    /// Exact solution sample x(zeta, t).
    pub fn eval(&self, zeta: f64, t: f64) -> Result<DVector<f64>> {
        if !(0.0..=1.0).contains(&zeta) || t < 0.0 {
            return Err(Error::Range(format!("query ({zeta}, {t}) out of range")));
        }
        let s = self.tt.k_at(zeta) + t / self.tt.p1();
        Ok(self.eval_f(s)? / self.lambda0.eval(zeta))
    }
}
