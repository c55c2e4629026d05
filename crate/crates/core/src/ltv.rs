//! State-transition matrices, trajectories and controllability gramians.
//!
//! All continuous-time integration is classical fixed-step RK4 on the grid the
//! caller supplies. The gramian `W = ∫₀ᵀ Φ(T,t)B(t)B'(t)Φ'(T,t) dt` is
//! evaluated by composite Simpson over the backward adjoint sweep
//! `d/dt Φ(T,t) = −Φ(T,t)A(t)`, so the transition matrices at every node come
//! from a single integration pass.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factor::Ldlt;
use crate::grid::Grid;
use crate::signal::ControlSignal;
use crate::system::{DtSystem, LtvSystem};

/// Default cap on the gramian condition estimate.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Factored controllability gramian.
#[derive(Debug, Clone)]
pub struct GramianResult {
    w: DMatrix<f64>,
    condition_estimate: f64,
    factor: Ldlt,
}

impl GramianResult {
    /// Symmetrize, factor and validate a gramian.
    pub fn from_matrix(w: DMatrix<f64>, condition_cap: f64) -> Result<Self> {
        let n = w.nrows();
        let w = (&w + w.transpose()) * 0.5;
        let factor = Ldlt::new(&w)?;
        let trace = w.trace();
        let floor = -1e-10 * trace.abs() / n as f64;
        let min_pivot = factor.min_pivot();
        if min_pivot < floor || !min_pivot.is_finite() {
            return Err(Error::NotPositiveSemidefinite { pivot: min_pivot });
        }
        let condition_estimate = factor.condition_estimate();
        if !(condition_estimate <= condition_cap) {
            return Err(Error::IllConditioned {
                estimate: condition_estimate,
            });
        }
        Ok(Self {
            w,
            condition_estimate,
            factor,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn pivots(&self) -> &DVector<f64> {
        self.factor.pivots()
    }

    /// `W⁻¹ b` through the factorization.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    /// `x' W⁻¹ y`.
    pub fn inverse_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.solve(y))
    }
}

/// Sampled state trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid,
    states: DMatrix<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One column per node.
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn state(&self, i: usize) -> DVector<f64> {
        self.states.column(i).into_owned()
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.states.column(self.states.ncols() - 1).into_owned()
    }
}

fn ensure_finite(mat: &DMatrix<f64>, time: f64) -> Result<()> {
    if mat.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration { time })
    }
}

fn ensure_covers(system: &LtvSystem, grid: &Grid) -> Result<()> {
    if system.covers(grid.horizon()) {
        Ok(())
    } else {
        Err(Error::Spec(format!(
            "system is not defined on [0, {}]",
            grid.horizon()
        )))
    }
}

/// One forward RK4 step of `X' = A(t) X` as a matrix: `X(t+h) = Q X(t)`.
fn rk4_forward_factor(
    a_lo: &DMatrix<f64>,
    a_mid: &DMatrix<f64>,
    a_hi: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = a_lo.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k1 = a_lo * h;
    let k2 = (a_mid * h) * (&eye + &k1 * 0.5);
    let k3 = (a_mid * h) * (&eye + &k2 * 0.5);
    let k4 = (a_hi * h) * (&eye + &k3);
    eye + (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0
}

/// One backward RK4 step of `X' = −X A(t)` from `t+h` to `t`: `X(t) = X(t+h) P`.
fn rk4_backward_factor(
    a_hi: &DMatrix<f64>,
    a_mid: &DMatrix<f64>,
    a_lo: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = a_lo.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k1 = a_hi * h;
    let k2 = (&eye + &k1 * 0.5) * (a_mid * h);
    let k3 = (&eye + &k2 * 0.5) * (a_mid * h);
    let k4 = (&eye + &k3) * (a_lo * h);
    eye + (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0
}

/// `Φ(t1, t0)` by RK4 with step at most the grid step.
pub fn state_transition(system: &LtvSystem, t0: f64, t1: f64, grid: &Grid) -> Result<DMatrix<f64>> {
    let n = system.state_dim();
    if !(t0 <= t1) {
        return Err(Error::Spec(format!("state_transition needs t0 <= t1, got {t0} > {t1}")));
    }
    if !system.covers(t1) || t0 < 0.0 {
        return Err(Error::Spec(format!("[{t0}, {t1}] is outside the system's span")));
    }
    let mut phi = DMatrix::<f64>::identity(n, n);
    if t0 == t1 {
        return Ok(phi);
    }
    let span = t1 - t0;
    let steps = ((span / grid.step()) - 1e-9).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let lti = system
        .lti_matrices()
        .map(|(a, _)| rk4_forward_factor(a, a, a, h));
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let q = match &lti {
            Some(q) => Cow::Borrowed(q),
            None => Cow::Owned(rk4_forward_factor(
                &system.a_at(t),
                &system.a_at(t + 0.5 * h),
                &system.a_at(t + h),
                h,
            )),
        };
        phi = q.as_ref() * phi;
        ensure_finite(&phi, t + h)?;
    }
    Ok(phi)
}

/// Backward sweep over the grid, visiting `Φ(T, t_i)` for `i = N, N-1, …, 0`.
pub(crate) fn sweep_adjoint(
    system: &LtvSystem,
    grid: &Grid,
    mut visit: impl FnMut(usize, &DMatrix<f64>) -> Result<()>,
) -> Result<()> {
    ensure_covers(system, grid)?;
    let n = system.state_dim();
    let h = grid.step();
    let last = grid.intervals();
    let mut phi = DMatrix::<f64>::identity(n, n);
    visit(last, &phi)?;
    let lti = system
        .lti_matrices()
        .map(|(a, _)| rk4_backward_factor(a, a, a, h));
    for i in (0..last).rev() {
        let t_lo = grid.time(i);
        let t_hi = grid.time(i + 1);
        let p = match &lti {
            Some(p) => Cow::Borrowed(p),
            None => Cow::Owned(rk4_backward_factor(
                &system.a_at(t_hi),
                &system.a_at(0.5 * (t_lo + t_hi)),
                &system.a_at(t_lo),
                h,
            )),
        };
        phi = &phi * p.as_ref();
        ensure_finite(&phi, t_lo)?;
        visit(i, &phi)?;
    }
    Ok(())
}

/// `Φ(T, t_i)` at every node, `T` being the grid horizon.
pub fn adjoint_transition_profile(system: &LtvSystem, grid: &Grid) -> Result<Vec<DMatrix<f64>>> {
    let mut out = vec![DMatrix::zeros(0, 0); grid.len()];
    sweep_adjoint(system, grid, |i, phi| {
        out[i] = phi.clone();
        Ok(())
    })?;
    Ok(out)
}

/// `Φ'(T, t_i) c` at every node, by the transposed backward sweep.
pub(crate) fn adjoint_vectors(
    system: &LtvSystem,
    grid: &Grid,
    c: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    ensure_covers(system, grid)?;
    let h = grid.step();
    let last = grid.intervals();
    let mut out = vec![DVector::zeros(0); grid.len()];
    let mut y = c.clone();
    out[last] = y.clone();
    let lti = system
        .lti_matrices()
        .map(|(a, _)| rk4_backward_factor(a, a, a, h).transpose());
    for i in (0..last).rev() {
        let t_lo = grid.time(i);
        let t_hi = grid.time(i + 1);
        y = match &lti {
            Some(pt) => pt * &y,
            None => {
                let a_hi = system.a_at(t_hi);
                let a_mid = system.a_at(0.5 * (t_lo + t_hi));
                let a_lo = system.a_at(t_lo);
                let k1 = a_hi.tr_mul(&y) * h;
                let k2 = a_mid.tr_mul(&(&y + &k1 * 0.5)) * h;
                let k3 = a_mid.tr_mul(&(&y + &k2 * 0.5)) * h;
                let k4 = a_lo.tr_mul(&(&y + &k3)) * h;
                &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0
            }
        };
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { time: t_lo });
        }
        out[i] = y.clone();
    }
    Ok(out)
}

/// The input `B'(t) Φ'(T,t) c` sampled on the grid.
pub fn gramian_input(system: &LtvSystem, grid: &Grid, c: &DVector<f64>) -> Result<ControlSignal> {
    if c.len() != system.state_dim() {
        return Err(Error::Shape(format!(
            "costate vector has length {}, expected {}",
            c.len(),
            system.state_dim()
        )));
    }
    let ys = adjoint_vectors(system, grid, c)?;
    let mut samples = DMatrix::zeros(system.input_dim(), grid.len());
    for (i, y) in ys.iter().enumerate() {
        samples.set_column(i, &system.b_at(grid.time(i)).tr_mul(y));
    }
    ControlSignal::new(*grid, samples)
}

/// Everything one backward sweep yields.
#[derive(Debug, Clone)]
pub(crate) struct SweepOutput {
    pub gramian: DMatrix<f64>,
    /// `Φ(T, 0)`.
    pub phi_t0: DMatrix<f64>,
    /// `∫ Φ(T,t) B(t) v(t) dt` for each requested signal.
    pub integrals: Vec<DVector<f64>>,
}

pub(crate) fn gramian_sweep(
    system: &LtvSystem,
    grid: &Grid,
    signals: &[&ControlSignal],
) -> Result<SweepOutput> {
    let n = system.state_dim();
    for v in signals {
        if !v.grid().same_as(grid) {
            return Err(Error::Shape("input signal is not sampled on the solver grid".into()));
        }
        if v.dim() != system.input_dim() {
            return Err(Error::Shape(format!(
                "input signal has dimension {}, system expects {}",
                v.dim(),
                system.input_dim()
            )));
        }
    }
    let mut gramian = DMatrix::<f64>::zeros(n, n);
    let mut integrals = vec![DVector::<f64>::zeros(n); signals.len()];
    let mut phi_t0 = DMatrix::<f64>::zeros(n, n);
    sweep_adjoint(system, grid, |i, phi| {
        let w = grid.simpson_weight(i);
        let g = phi * system.b_at(grid.time(i)).as_ref();
        gramian.gemm(w, &g, &g.transpose(), 1.0);
        for (acc, v) in integrals.iter_mut().zip(signals) {
            acc.gemv(w, &g, &v.sample(i), 1.0);
        }
        if i == 0 {
            phi_t0.copy_from(phi);
        }
        Ok(())
    })?;
    Ok(SweepOutput {
        gramian,
        phi_t0,
        integrals,
    })
}

pub fn controllability_gramian(system: &LtvSystem, grid: &Grid) -> Result<GramianResult> {
    controllability_gramian_with_cap(system, grid, DEFAULT_CONDITION_CAP)
}

pub fn controllability_gramian_with_cap(
    system: &LtvSystem,
    grid: &Grid,
    condition_cap: f64,
) -> Result<GramianResult> {
    let out = gramian_sweep(system, grid, &[])?;
    GramianResult::from_matrix(out.gramian, condition_cap)
}

/// Forward RK4 simulation of `x' = A x + B u` from `x0`.
pub fn propagate(
    system: &LtvSystem,
    x0: &DVector<f64>,
    u: &ControlSignal,
    grid: &Grid,
) -> Result<Trajectory> {
    ensure_covers(system, grid)?;
    if !u.grid().same_as(grid) {
        return Err(Error::Shape("input is not sampled on the propagation grid".into()));
    }
    if u.dim() != system.input_dim() || x0.len() != system.state_dim() {
        return Err(Error::Shape(format!(
            "propagate expects x0 in R^{} and u in R^{}",
            system.state_dim(),
            system.input_dim()
        )));
    }
    let h = grid.step();
    let f = |t: f64, x: &DVector<f64>, input: &DVector<f64>| {
        system.a_at(t).as_ref() * x + system.b_at(t).as_ref() * input
    };
    let mut states = DMatrix::zeros(system.state_dim(), grid.len());
    let mut x = x0.clone();
    states.set_column(0, &x);
    for i in 0..grid.intervals() {
        let t = grid.time(i);
        let t_mid = t + 0.5 * h;
        let u_lo = u.sample(i).into_owned();
        let u_mid = u.value_at(t_mid);
        let u_hi = u.sample(i + 1).into_owned();
        let k1 = f(t, &x, &u_lo);
        let k2 = f(t_mid, &(&x + &k1 * (0.5 * h)), &u_mid);
        let k3 = f(t_mid, &(&x + &k2 * (0.5 * h)), &u_mid);
        let k4 = f(grid.time(i + 1), &(&x + &k3 * h), &u_hi);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { time: grid.time(i + 1) });
        }
        states.set_column(i + 1, &x);
    }
    Ok(Trajectory {
        grid: *grid,
        states,
    })
}

/// Ordered product `A(k1-1) ⋯ A(k0)`; identity when `k0 == k1`.
pub fn dt_transition(system: &DtSystem, k0: usize, k1: usize) -> Result<DMatrix<f64>> {
    if k0 > k1 || k1 > system.steps() {
        return Err(Error::Range(format!(
            "need 0 <= k0 <= k1 <= {}, got k0 = {k0}, k1 = {k1}",
            system.steps()
        )));
    }
    let n = system.state_dim();
    let mut phi = DMatrix::<f64>::identity(n, n);
    for k in k0..k1 {
        phi = system.a(k) * phi;
    }
    Ok(phi)
}

/// Input maps `G(k) = Φ_d(p, k+1) B(k)` and the free response `Φ_d(p, 0)`.
pub(crate) fn dt_input_maps(system: &DtSystem) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let p = system.steps();
    let n = system.state_dim();
    let mut maps = vec![DMatrix::zeros(0, 0); p];
    let mut tail = DMatrix::<f64>::identity(n, n);
    for k in (0..p).rev() {
        maps[k] = &tail * system.b(k);
        tail = &tail * system.a(k);
    }
    (maps, tail)
}

/// Discrete gramian `Σ_k G(k) G'(k)`.
pub fn dt_gramian(system: &DtSystem) -> Result<GramianResult> {
    dt_gramian_with_cap(system, DEFAULT_CONDITION_CAP)
}

pub fn dt_gramian_with_cap(system: &DtSystem, condition_cap: f64) -> Result<GramianResult> {
    let (maps, _) = dt_input_maps(system);
    let n = system.state_dim();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for g in &maps {
        w.gemm(1.0, g, &g.transpose(), 1.0);
    }
    GramianResult::from_matrix(w, condition_cap)
}
