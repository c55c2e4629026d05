//! Discrete-time minimum-novelty control.
//!
//! Steps run `k = 0..p-1` for both the prior sequence `v` and the next input
//! `u`. The non-convex energy equality is relaxed to `(1/p)Σ‖u(k)‖² ≤ γu`; the
//! relaxed optimum always sits on the sphere, so both problems share it.
//!
//! With `G(k) = Φ_d(p, k+1) B(k)`, `W = Σ G G'`, `c = 1/√(γu γv)` and
//! `κ = √((pγu − r'W⁻¹r)/(pγv − s'W⁻¹s))` the KKT point is
//!
//! ```text
//! γ = c / (2κ),   δ = W⁻¹(c s − 2γ r) / p,   u(k) = (c v(k) − p G'(k) δ) / (2γ)
//! ```

use nalgebra::{DMatrix, DVector, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ltv::{self, GramianResult, DEFAULT_CONDITION_CAP};
use crate::novelty_ct::{self, ControlSignal, FeasibilityReport, TransferSpec, FEASIBILITY_RTOL};
use crate::system::{DtSystem, LtvSystem};

/// Input sequence `u(0), …, u(p-1)`, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DtControlSequence {
    samples: DMatrix<f64>,
}

impl DtControlSequence {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::Shape("sequence needs m >= 1 and p >= 1".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Spec("sequence has non-finite entries".into()));
        }
        Ok(Self { samples })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Shape("sequence needs at least one step".into()));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn steps(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn step(&self, k: usize) -> DVector<f64> {
        self.samples.column(k).into_owned()
    }

    /// `(1/p) Σ ‖u(k)‖²`.
    pub fn energy(&self) -> f64 {
        self.samples.norm_squared() / self.steps() as f64
    }

    /// `Σ v'(k) u(k)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.samples.shape() != other.samples.shape() {
            return Err(Error::Shape("sequences have different shapes".into()));
        }
        Ok(self.samples.dot(&other.samples))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: &self.samples * factor,
        }
    }

    /// Rescaled to average energy `gamma`.
    pub fn with_energy(&self, gamma: f64) -> Result<Self> {
        let e = self.energy();
        if e == 0.0 || !(gamma > 0.0) {
            return Err(Error::Spec("cannot rescale a zero sequence or to non-positive energy".into()));
        }
        Ok(self.scaled((gamma / e).sqrt()))
    }

    /// Stacked `[u(0); u(1); …]`.
    fn flat(&self) -> DVector<f64> {
        DVector::from_column_slice(self.samples.as_slice())
    }

    fn from_flat(flat: &DVector<f64>, m: usize) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(m, flat.len() / m, flat.as_slice()))
    }
}

/// `(1/(p√(γv γu))) Σ v'(k) u(k)`.
pub fn novelty_of_dt(
    v: &DtControlSequence,
    u: &DtControlSequence,
    gamma_v: f64,
    gamma_u: f64,
) -> Result<f64> {
    if !(gamma_v > 0.0 && gamma_u > 0.0) {
        return Err(Error::Spec("energies must be positive".into()));
    }
    Ok(v.inner(u)? / (v.steps() as f64 * (gamma_v * gamma_u).sqrt()))
}

/// Discrete transfer; the horizon `p` is the system's.
#[derive(Debug, Clone, PartialEq)]
pub struct DtTransferSpec {
    pub x_r: Option<DVector<f64>>,
    pub x_0: DVector<f64>,
    pub x_f: DVector<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
}

impl DtTransferSpec {
    pub fn new(x_0: DVector<f64>, x_f: DVector<f64>, gamma_v: f64, gamma_u: f64) -> Result<Self> {
        let spec = Self {
            x_r: None,
            x_0,
            x_f,
            gamma_v,
            gamma_u,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_prior_state(mut self, x_r: DVector<f64>) -> Result<Self> {
        self.x_r = Some(x_r);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_v > 0.0 && self.gamma_v.is_finite())
            || !(self.gamma_u > 0.0 && self.gamma_u.is_finite())
        {
            return Err(Error::Spec(format!(
                "energies must be positive, got gamma_v = {}, gamma_u = {}",
                self.gamma_v, self.gamma_u
            )));
        }
        let n = self.x_0.len();
        if self.x_f.len() != n || self.x_r.as_ref().is_some_and(|x| x.len() != n) {
            return Err(Error::Shape("endpoint states have different lengths".into()));
        }
        Ok(())
    }

    fn check_against(&self, system: &DtSystem, v: Option<&DtControlSequence>) -> Result<()> {
        self.validate()?;
        if self.x_0.len() != system.state_dim() {
            return Err(Error::Shape(format!(
                "endpoints have length {}, system state is {}",
                self.x_0.len(),
                system.state_dim()
            )));
        }
        if let Some(v) = v {
            if v.dim() != system.input_dim() || v.steps() != system.steps() {
                return Err(Error::Shape(format!(
                    "prior sequence is {}x{}, expected {}x{}",
                    v.dim(),
                    v.steps(),
                    system.input_dim(),
                    system.steps()
                )));
            }
            let e = v.energy();
            if (e - self.gamma_v).abs() > novelty_ct::PRIOR_ENERGY_RTOL * self.gamma_v {
                return Err(Error::Spec(format!(
                    "prior sequence has average energy {e}, expected gamma_v = {}",
                    self.gamma_v
                )));
            }
        } else if self.x_r.is_none() {
            return Err(Error::Spec("need either a prior sequence or the prior state x_r".into()));
        }
        Ok(())
    }
}

/// KKT multipliers of the relaxed problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtMultipliers {
    pub gamma: f64,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DtSolution {
    pub u: DtControlSequence,
    /// `None` when the endpoint constraint leaves a single feasible input.
    pub multipliers: Option<DtMultipliers>,
    pub j: f64,
    pub relaxation_tight: bool,
    pub feasibility: FeasibilityReport,
    /// Iterations used by the oracle; zero for the closed form.
    pub iterations: usize,
}

struct DtProblem {
    maps: Vec<DMatrix<f64>>,
    gramian: GramianResult,
    s: DVector<f64>,
    r: DVector<f64>,
}

fn prior_vector(
    maps: &[DMatrix<f64>],
    free: &DMatrix<f64>,
    spec: &DtTransferSpec,
    v: Option<&DtControlSequence>,
) -> DVector<f64> {
    match v {
        Some(v) => {
            let mut s = DVector::zeros(spec.x_0.len());
            for (k, g) in maps.iter().enumerate() {
                s.gemv(1.0, g, &v.samples.column(k), 1.0);
            }
            s
        }
        None => &spec.x_0 - free * spec.x_r.as_ref().expect("checked by caller"),
    }
}

fn setup(system: &DtSystem, spec: &DtTransferSpec, v: Option<&DtControlSequence>) -> Result<DtProblem> {
    spec.check_against(system, v)?;
    let (maps, free) = ltv::dt_input_maps(system);
    let n = system.state_dim();
    let mut w = DMatrix::zeros(n, n);
    for g in &maps {
        w.gemm(1.0, g, &g.transpose(), 1.0);
    }
    let gramian = GramianResult::from_matrix(w, DEFAULT_CONDITION_CAP)?;
    let r = &spec.x_f - &free * &spec.x_0;
    let s = prior_vector(&maps, &free, spec, v);
    Ok(DtProblem { maps, gramian, s, r })
}

fn stack_transposed(maps: &[DMatrix<f64>], c: &DVector<f64>) -> DMatrix<f64> {
    let m = maps[0].ncols();
    let mut out = DMatrix::zeros(m, maps.len());
    for (k, g) in maps.iter().enumerate() {
        out.set_column(k, &g.tr_mul(c));
    }
    out
}

fn tightness(u: &DtControlSequence, gamma_u: f64) -> bool {
    (u.energy() - gamma_u).abs() <= 1e-8 * gamma_u
}

/// Closed-form KKT solution of the relaxed discrete problem.
///
/// When `pγu` equals the minimum transfer energy the endpoint constraint
/// pins `u` down completely; that input is returned without multipliers.
pub fn min_novelty_control_dt(
    system: &DtSystem,
    spec: &DtTransferSpec,
    v: &DtControlSequence,
) -> Result<DtSolution> {
    let prob = setup(system, spec, Some(v))?;
    let p = system.steps() as f64;
    let report = FeasibilityReport::from_energies(
        prob.gramian.inverse_form(&prob.s, &prob.s),
        prob.gramian.inverse_form(&prob.r, &prob.r),
        p * spec.gamma_v,
        p * spec.gamma_u,
    );
    let tol = FEASIBILITY_RTOL * p * spec.gamma_v.max(spec.gamma_u);
    if report.margin_next < -tol || report.margin_prior < -tol {
        return Err(Error::Infeasible(Box::new(report)));
    }
    let winv_r = prob.gramian.solve(&prob.r);
    if report.margin_next <= tol {
        let u = DtControlSequence::new(stack_transposed(&prob.maps, &winv_r))?;
        let j = novelty_of_dt(v, &u, spec.gamma_v, spec.gamma_u)?;
        return Ok(DtSolution {
            relaxation_tight: tightness(&u, spec.gamma_u),
            u,
            multipliers: None,
            j,
            feasibility: FeasibilityReport { feasible: true, ..report },
            iterations: 0,
        });
    }
    let c = 1.0 / (spec.gamma_u * spec.gamma_v).sqrt();
    let kappa = (report.margin_next / report.margin_prior).sqrt();
    let gamma = c / (2.0 * kappa);
    if report.margin_prior <= tol || !(gamma > f64::EPSILON * c) {
        return Err(Error::Degenerate {
            reason: "prior sequence lies in the span of the endpoint map; the multiplier gamma vanishes"
                .into(),
            value: Some(prob.gramian.inverse_form(&prob.s, &prob.r) * c / p),
        });
    }
    let delta = prob.gramian.solve(&(&prob.s * c - &prob.r * (2.0 * gamma))) / p;
    let correction = stack_transposed(&prob.maps, &delta);
    let u = DtControlSequence::new((v.samples() * c - correction * p) / (2.0 * gamma))?;
    let j = novelty_of_dt(v, &u, spec.gamma_v, spec.gamma_u)?;
    Ok(DtSolution {
        relaxation_tight: tightness(&u, spec.gamma_u),
        u,
        multipliers: Some(DtMultipliers {
            gamma,
            delta: delta.as_slice().to_vec(),
        }),
        j,
        feasibility: report,
        iterations: 0,
    })
}

/// Stopping rules and iteration cap of [`qp_oracle_dt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_iterations: usize,
    pub gap_rtol: f64,
    pub step_rtol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            gap_rtol: 1e-10,
            step_rtol: 1e-12,
        }
    }
}

/// Solve the relaxed problem by projected gradient ascent, independently of
/// the gramian closed form.
pub fn qp_oracle_dt(system: &DtSystem, spec: &DtTransferSpec, v: &DtControlSequence) -> Result<DtSolution> {
    qp_oracle_dt_with(system, spec, v, OracleOptions::default())
}

pub fn qp_oracle_dt_with(
    system: &DtSystem,
    spec: &DtTransferSpec,
    v: &DtControlSequence,
    opts: OracleOptions,
) -> Result<DtSolution> {
    spec.check_against(system, Some(v))?;
    let (maps, free) = ltv::dt_input_maps(system);
    let n = system.state_dim();
    let m = system.input_dim();
    let p = system.steps();
    let pf = p as f64;
    // stacked endpoint map M: n x (p m)
    let mut big = DMatrix::zeros(n, p * m);
    for (k, g) in maps.iter().enumerate() {
        big.view_mut((0, k * m), (n, m)).copy_from(g);
    }
    let r = &spec.x_f - &free * &spec.x_0;
    let s = prior_vector(&maps, &free, spec, Some(v));

    let svd = SVD::new(big.clone(), true, true);
    let u_mat = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V'");
    let smax = svd.singular_values.max();
    let rank_tol = smax * 1e-12 * (p * m).max(n) as f64;
    let rank: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rank_tol)
        .collect();
    let min_norm = |b: &DVector<f64>| {
        let mut x = DVector::zeros(p * m);
        for &i in &rank {
            let coef = u_mat.column(i).dot(b) / svd.singular_values[i];
            x.axpy(coef, &vt.row(i).transpose(), 1.0);
        }
        x
    };
    let project_null = |x: &DVector<f64>| {
        let mut out = x.clone();
        for &i in &rank {
            let row = vt.row(i).transpose();
            out.axpy(-row.dot(x), &row, 1.0);
        }
        out
    };

    let u0 = min_norm(&r);
    let budget_next = pf * spec.gamma_u;
    let report = FeasibilityReport::from_energies(
        min_norm(&s).norm_squared(),
        u0.norm_squared(),
        pf * spec.gamma_v,
        budget_next,
    );
    let unreachable = (&big * &u0 - &r).norm() > 1e-9 * r.norm().max(1.0);
    let tol = FEASIBILITY_RTOL * pf * spec.gamma_v.max(spec.gamma_u);
    let radius_sq = budget_next - u0.norm_squared();
    if unreachable || radius_sq < -tol {
        return Err(Error::Infeasible(Box::new(FeasibilityReport { feasible: false, ..report })));
    }
    let c = 1.0 / (spec.gamma_u * spec.gamma_v).sqrt();
    let vflat = v.flat();
    let j_of = |u: &DVector<f64>| vflat.dot(u) * c / pf;
    if radius_sq <= tol {
        let u = DtControlSequence::from_flat(&u0, m)?;
        return Ok(DtSolution {
            relaxation_tight: tightness(&u, spec.gamma_u),
            j: j_of(&u0),
            u,
            multipliers: None,
            feasibility: FeasibilityReport { feasible: true, ..report },
            iterations: 0,
        });
    }
    let radius = radius_sq.sqrt();
    let grad = &vflat * (c / pf);
    let grad_null = project_null(&grad);
    if grad_null.norm() <= 1e-14 * grad.norm() {
        return Err(Error::Degenerate {
            reason: "objective is constant on the feasible set".into(),
            value: Some(j_of(&u0)),
        });
    }
    let alpha = 0.25 * radius / grad_null.norm();
    let project = |x: &DVector<f64>| {
        let z = project_null(x);
        let nz = z.norm();
        if nz > radius {
            &u0 + z * (radius / nz)
        } else {
            &u0 + z
        }
    };

    // stationarity: grad = (2γ/p) u + M'δ
    let recover = |u: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let mut lhs = DMatrix::zeros(p * m, n + 1);
        lhs.set_column(0, &(u * (2.0 / pf)));
        lhs.view_mut((0, 1), (p * m, n)).copy_from(&big.transpose());
        let sol = lhs.svd(true, true).solve(&grad, 1e-14).ok()?;
        Some((sol[0], sol.rows(1, n).into_owned()))
    };
    let gap_of = |u: &DVector<f64>, gamma: f64, delta: &DVector<f64>| {
        if gamma <= 0.0 {
            return f64::INFINITY;
        }
        let resid = &grad - big.tr_mul(delta);
        let dual = pf / (4.0 * gamma) * resid.norm_squared() + gamma * spec.gamma_u + delta.dot(&r);
        dual - grad.dot(u)
    };

    let mut u = project(&u0);
    let mut last_gap = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let next = project(&(&u + &grad * alpha));
        let step = (&next - &u).norm();
        u = next;
        if step <= opts.step_rtol * u.norm().max(1.0) {
            if let Some((gamma, delta)) = recover(&u) {
                last_gap = gap_of(&u, gamma, &delta);
                if last_gap.abs() <= opts.gap_rtol * grad.dot(&u).abs().max(1.0) {
                    let seq = DtControlSequence::from_flat(&u, m)?;
                    return Ok(DtSolution {
                        relaxation_tight: tightness(&seq, spec.gamma_u),
                        j: j_of(&u),
                        u: seq,
                        multipliers: Some(DtMultipliers {
                            gamma,
                            delta: delta.as_slice().to_vec(),
                        }),
                        feasibility: report,
                        iterations: it,
                    });
                }
            }
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        gap: last_gap,
    })
}

/// Zero-order-hold discretization of `system` over `[0, horizon]` into `p`
/// steps, each integrated with `substeps` RK4 steps.
pub fn zoh_discretize(system: &LtvSystem, horizon: f64, p: usize, substeps: usize) -> Result<DtSystem> {
    if p == 0 || substeps == 0 {
        return Err(Error::Spec("need p >= 1 and substeps >= 1".into()));
    }
    if !(horizon > 0.0) || !system.covers(horizon) {
        return Err(Error::Spec(format!("system is not defined on [0, {horizon}]")));
    }
    let n = system.state_dim();
    let m = system.input_dim();
    let dt = horizon / p as f64;
    let h = dt / substeps as f64;
    // Y = [Φ Γ] with Y' = A Y + [0 B]
    let rhs = |t: f64, y: &DMatrix<f64>| {
        let mut dy = system.a_at(t).as_ref() * y;
        let mut tail = dy.view_mut((0, n), (n, m));
        tail += system.b_at(t).as_ref();
        dy
    };
    let mut a_seq = Vec::with_capacity(p);
    let mut b_seq = Vec::with_capacity(p);
    for k in 0..p {
        let mut y = DMatrix::zeros(n, n + m);
        y.view_mut((0, 0), (n, n)).fill_with_identity();
        for j in 0..substeps {
            let t = k as f64 * dt + j as f64 * h;
            let k1 = rhs(t, &y);
            let k2 = rhs(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
            let k3 = rhs(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
            let k4 = rhs(t + h, &(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { time: (k + 1) as f64 * dt });
        }
        a_seq.push(y.columns(0, n).into_owned());
        b_seq.push(y.columns(n, m).into_owned());
    }
    DtSystem::new(a_seq, b_seq)
}

/// Interval averages of `v` over `p` equal steps, by 3-point Gauss–Legendre.
pub fn interval_averages(v: &ControlSignal, p: usize) -> Result<DtControlSequence> {
    if p == 0 {
        return Err(Error::Spec("need p >= 1".into()));
    }
    let dt = v.grid().horizon() / p as f64;
    let nodes = [(-(0.6f64).sqrt(), 5.0 / 18.0), (0.0, 8.0 / 18.0), ((0.6f64).sqrt(), 5.0 / 18.0)];
    let mut out = DMatrix::zeros(v.dim(), p);
    for k in 0..p {
        let mid = (k as f64 + 0.5) * dt;
        let mut acc = DVector::zeros(v.dim());
        for (x, w) in nodes {
            acc.axpy(w, &v.value_at(mid + 0.5 * dt * x), 1.0);
        }
        out.set_column(k, &acc);
    }
    DtControlSequence::new(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyRow {
    pub p: usize,
    pub j_dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyTable {
    pub j_ct: f64,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyTable {
    /// Whether `|J_dt − J_ct|` decreases over the last `count` refinements.
    pub fn monotone_tail(&self, count: usize) -> bool {
        let start = self.rows.len().saturating_sub(count);
        self.rows[start..].windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Compare the continuous optimum with ZOH discretizations at each `p`.
pub fn ct_dt_consistency(
    system: &LtvSystem,
    spec: &TransferSpec,
    v: &ControlSignal,
    grid: &Grid,
    steps: &[usize],
) -> Result<ConsistencyTable> {
    let j_ct = novelty_ct::min_novelty_control(system, spec, v, grid)?.j;
    let substeps = (grid.intervals() / steps.iter().copied().max().unwrap_or(1)).max(4);
    let mut rows = Vec::with_capacity(steps.len());
    for &p in steps {
        let dsys = zoh_discretize(system, spec.horizon, p, substeps)?;
        let vd = interval_averages(v, p)?.with_energy(spec.gamma_v)?;
        let dspec = DtTransferSpec::new(spec.x_0.clone(), spec.x_f.clone(), spec.gamma_v, spec.gamma_u)?;
        let j_dt = min_novelty_control_dt(&dsys, &dspec, &vd)?.j;
        rows.push(ConsistencyRow {
            p,
            j_dt,
            error: (j_dt - j_ct).abs(),
        });
    }
    Ok(ConsistencyTable { j_ct, rows })
}
