//! Continuous-time minimum-novelty control.
//!
//! A prior input `v` drove the system over `[-T, 0]`; the next input `u` must
//! move it from `x_0` to `x_f` over `[0, T]` with average energy `γu`. The
//! solvers maximize the normalized inner product
//! `J = (1/(T√(γv γu))) ∫ v'u dt` in closed form:
//!
//! ```text
//! μ = 1/(2√(γvγu)) · √((γv T − s'W⁻¹s) / (γu T − r'W⁻¹r))
//! u = (v − B'Φ'W⁻¹s) / (2μ√(γvγu)) + B'Φ'W⁻¹r
//! J = s'W⁻¹r/(T√(γvγu)) + (1 − s'W⁻¹s/(γv T)) / (2μγu)
//! ```
//!
//! with `s = ∫Φ(T,t)B(t)v dt`, `r = x_f − Φ(T,0)x_0` and `W` the
//! controllability gramian. Every integral uses the Simpson rule of the
//! solver grid, so the energy and endpoint constraints hold exactly in that
//! quadrature.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ltv::{self, GramianResult, DEFAULT_CONDITION_CAP};
pub use crate::signal::ControlSignal;
use crate::system::LtvSystem;

/// Relative tolerance on the prior input's energy.
pub const PRIOR_ENERGY_RTOL: f64 = 1e-6;

/// Feasibility margins must exceed this fraction of `max(γv T, γu T)`.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// Endpoints, horizon and energy budgets of a two-leg transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    /// State before the prior leg; optional when the prior input is given.
    pub x_r: Option<DVector<f64>>,
    pub x_0: DVector<f64>,
    pub x_f: DVector<f64>,
    /// Horizon `T` in ms.
    pub horizon: f64,
    pub gamma_v: f64,
    pub gamma_u: f64,
    /// Horizon `T*` of the prior input in the average-novelty variant.
    pub prior_horizon: Option<f64>,
}

impl TransferSpec {
    pub fn new(
        x_0: DVector<f64>,
        x_f: DVector<f64>,
        horizon: f64,
        gamma_v: f64,
        gamma_u: f64,
    ) -> Result<Self> {
        let spec = Self {
            x_r: None,
            x_0,
            x_f,
            horizon,
            gamma_v,
            gamma_u,
            prior_horizon: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_prior_state(mut self, x_r: DVector<f64>) -> Result<Self> {
        self.x_r = Some(x_r);
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior_horizon(mut self, t_star: f64) -> Result<Self> {
        self.prior_horizon = Some(t_star);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.horizon) {
            return Err(Error::Spec(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !positive(self.gamma_v) || !positive(self.gamma_u) {
            return Err(Error::Spec(format!(
                "energies must be positive, got gamma_v = {}, gamma_u = {}",
                self.gamma_v, self.gamma_u
            )));
        }
        if let Some(t) = self.prior_horizon {
            if !positive(t) {
                return Err(Error::Spec(format!("prior horizon must be positive, got {t}")));
            }
        }
        let n = self.x_0.len();
        if self.x_f.len() != n || self.x_r.as_ref().is_some_and(|x| x.len() != n) {
            return Err(Error::Shape("endpoint states have different lengths".into()));
        }
        let finite = |x: &DVector<f64>| x.iter().all(|v| v.is_finite());
        if !finite(&self.x_0) || !finite(&self.x_f) || self.x_r.as_ref().is_some_and(|x| !finite(x)) {
            return Err(Error::Spec("endpoint states must be finite".into()));
        }
        Ok(())
    }

    fn check_against(&self, system: &LtvSystem, grid: &Grid) -> Result<()> {
        self.validate()?;
        if self.x_0.len() != system.state_dim() {
            return Err(Error::Shape(format!(
                "endpoints have length {}, system state is {}",
                self.x_0.len(),
                system.state_dim()
            )));
        }
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::Shape(format!(
                "grid horizon {} differs from transfer horizon {}",
                grid.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Minimum energies of both legs and the resulting existence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `s'W⁻¹s`.
    pub e_prior: f64,
    /// `r'W⁻¹r`.
    pub e_next: f64,
    pub margin_prior: f64,
    pub margin_next: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// Margins against total budgets `prior_budget` and `next_budget`.
    pub fn from_energies(e_prior: f64, e_next: f64, prior_budget: f64, next_budget: f64) -> Self {
        let margin_prior = prior_budget - e_prior;
        let margin_next = next_budget - e_next;
        let tol = FEASIBILITY_RTOL * prior_budget.max(next_budget);
        Self {
            e_prior,
            e_next,
            margin_prior,
            margin_next,
            feasible: margin_prior > tol && margin_next > tol,
        }
    }

    fn into_result(self) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::Infeasible(Box::new(self)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyVariant {
    InnerProduct,
    Euclidean,
    Average,
}

#[derive(Debug, Clone)]
pub struct NoveltySolution {
    pub u: ControlSignal,
    /// Energy multiplier (`μ` of the inner-product law, `−1 + …` for the Euclidean one).
    pub mu: f64,
    /// Optimal objective: `J`, `J₁` or `J₂` depending on `variant`.
    pub j: f64,
    pub feasibility: FeasibilityReport,
    pub s: DVector<f64>,
    pub r: DVector<f64>,
    pub variant: NoveltyVariant,
}

/// Optimal `μ` and `J` from the endpoint data alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoveltyValue {
    pub mu: f64,
    pub j: f64,
    pub feasibility: FeasibilityReport,
}

/// `(1/(T√(γv γu))) ∫ v'u dt` on the shared grid.
pub fn novelty_of(v: &ControlSignal, u: &ControlSignal, gamma_v: f64, gamma_u: f64) -> Result<f64> {
    if !(gamma_v > 0.0 && gamma_u > 0.0) {
        return Err(Error::Spec("energies must be positive".into()));
    }
    let ip = v.inner(u)?;
    Ok(ip / (v.grid().horizon() * (gamma_v * gamma_u).sqrt()))
}

/// Gramian, free response and prior-input integrals of one backward sweep.
#[derive(Debug, Clone)]
pub struct TransferContext<'a> {
    system: &'a LtvSystem,
    grid: Grid,
    gramian: GramianResult,
    phi_t0: DMatrix<f64>,
    integrals: Vec<DVector<f64>>,
}

impl<'a> TransferContext<'a> {
    /// Prepare a transfer over `grid`; `priors` get their `∫Φ B v dt` computed
    /// in the same pass.
    pub fn new(system: &'a LtvSystem, grid: &Grid, priors: &[&ControlSignal]) -> Result<Self> {
        Self::with_cap(system, grid, priors, DEFAULT_CONDITION_CAP)
    }

    pub fn with_cap(
        system: &'a LtvSystem,
        grid: &Grid,
        priors: &[&ControlSignal],
        condition_cap: f64,
    ) -> Result<Self> {
        let sweep = ltv::gramian_sweep(system, grid, priors)?;
        let gramian = GramianResult::from_matrix(sweep.gramian, condition_cap)?;
        Ok(Self {
            system,
            grid: *grid,
            gramian,
            phi_t0: sweep.phi_t0,
            integrals: sweep.integrals,
        })
    }

    pub fn gramian(&self) -> &GramianResult {
        &self.gramian
    }

    /// `Φ(T, 0)`.
    pub fn free_response(&self) -> &DMatrix<f64> {
        &self.phi_t0
    }

    /// `∫Φ(T,t)B(t)v(t) dt` for the `k`-th prior passed to [`TransferContext::new`].
    pub fn prior_integral(&self, k: usize) -> &DVector<f64> {
        &self.integrals[k]
    }

    /// `r = x_f − Φ(T,0) x_0`.
    pub fn next_leg_vector(&self, spec: &TransferSpec) -> DVector<f64> {
        &spec.x_f - &self.phi_t0 * &spec.x_0
    }

    /// `s = x_0 − Φ(T,0) x_r`, valid whenever the prior input drove `x_r` to `x_0`.
    pub fn prior_leg_vector(&self, spec: &TransferSpec) -> Result<DVector<f64>> {
        let x_r = spec.x_r.as_ref().ok_or_else(|| {
            Error::Spec("need either a prior input or the prior state x_r".into())
        })?;
        Ok(&spec.x_0 - &self.phi_t0 * x_r)
    }

    fn input_from(&self, c: &DVector<f64>) -> Result<ControlSignal> {
        ltv::gramian_input(self.system, &self.grid, c)
    }
}

/// `(s, r)` for a transfer. `s` uses the prior input when given (integral
/// form), otherwise the endpoint form `x_0 − Φ(T,0)x_r`.
pub fn transfer_vectors(
    system: &LtvSystem,
    spec: &TransferSpec,
    v: Option<&ControlSignal>,
    grid: &Grid,
) -> Result<(DVector<f64>, DVector<f64>)> {
    spec.check_against(system, grid)?;
    if v.is_none() && spec.x_r.is_none() {
        return Err(Error::Spec("need either a prior input or the prior state x_r".into()));
    }
    let sweep = ltv::gramian_sweep(system, grid, &v.into_iter().collect::<Vec<_>>())?;
    let r = &spec.x_f - &sweep.phi_t0 * &spec.x_0;
    let s = match v {
        Some(_) => sweep.integrals[0].clone(),
        None => &spec.x_0 - &sweep.phi_t0 * spec.x_r.as_ref().expect("checked above"),
    };
    Ok((s, r))
}

/// Existence check: both legs' minimum energies must stay below `γ T`.
pub fn check_existence(
    spec: &TransferSpec,
    s: &DVector<f64>,
    r: &DVector<f64>,
    gramian: &GramianResult,
) -> Result<FeasibilityReport> {
    spec.validate()?;
    let t = spec.horizon;
    Ok(FeasibilityReport::from_energies(
        gramian.inverse_form(s, s),
        gramian.inverse_form(r, r),
        spec.gamma_v * t,
        spec.gamma_u * t,
    ))
}

/// Closed-form `(μ, J)` given the total prior energy term `prior_energy`
/// (`γv T` unless the prior is replaced by its average).
fn closed_form_value(
    spec: &TransferSpec,
    report: &FeasibilityReport,
    s_winv_r: f64,
    prior_energy: f64,
) -> (f64, f64) {
    let t = spec.horizon;
    let root = (spec.gamma_v * spec.gamma_u).sqrt();
    let mu = 0.5 / root * (report.margin_prior / report.margin_next).sqrt();
    let e_s = prior_energy - report.margin_prior;
    let j = s_winv_r / (t * root)
        + (prior_energy - e_s) / (2.0 * mu * spec.gamma_u * spec.gamma_v * t);
    (mu, j)
}

/// Optimal `J` from `(x_r, x_0, x_f)` only; it does not depend on which prior
/// input performed the first leg.
pub fn optimal_novelty(ctx: &TransferContext<'_>, spec: &TransferSpec) -> Result<NoveltyValue> {
    let s = ctx.prior_leg_vector(spec)?;
    let r = ctx.next_leg_vector(spec);
    let report = check_existence(spec, &s, &r, ctx.gramian())?.into_result()?;
    let (mu, j) = closed_form_value(
        spec,
        &report,
        ctx.gramian().inverse_form(&s, &r),
        spec.gamma_v * spec.horizon,
    );
    Ok(NoveltyValue {
        mu,
        j,
        feasibility: report,
    })
}

fn check_prior_energy(v: &ControlSignal, gamma_v: f64) -> Result<()> {
    let e = v.energy();
    if (e - gamma_v).abs() > PRIOR_ENERGY_RTOL * gamma_v {
        return Err(Error::Spec(format!(
            "prior input has average energy {e}, expected gamma_v = {gamma_v}"
        )));
    }
    Ok(())
}

/// `κ (v − B'Φ'W⁻¹s) + B'Φ'W⁻¹r` sampled on the grid.
fn assemble_input(
    ctx: &TransferContext<'_>,
    prior: &ControlSignal,
    kappa: f64,
    s: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<ControlSignal> {
    let c = ctx.gramian().solve(r) - ctx.gramian().solve(s) * kappa;
    let base = ctx.input_from(&c)?;
    let samples = base.samples() + prior.samples() * kappa;
    ControlSignal::new(*base.grid(), samples)
}

fn log_costate(ctx: &TransferContext<'_>, spec: &TransferSpec, mu: f64, s: &DVector<f64>, r: &DVector<f64>) {
    if log::log_enabled!(log::Level::Debug) {
        let root = (spec.gamma_v * spec.gamma_u).sqrt();
        let inner = s / (2.0 * mu * root) - r;
        let lambda0 = ctx.free_response().tr_mul(&ctx.gramian().solve(&inner)) * (2.0 * mu / spec.horizon);
        log::debug!("initial costate lambda(0) = {:?}", lambda0.as_slice());
    }
}

/// Minimally novel input for the inner-product measure.
pub fn min_novelty_control(
    system: &LtvSystem,
    spec: &TransferSpec,
    v: &ControlSignal,
    grid: &Grid,
) -> Result<NoveltySolution> {
    spec.check_against(system, grid)?;
    let ctx = TransferContext::new(system, grid, &[v])?;
    min_novelty_control_in(&ctx, spec, v, 0)
}

/// [`min_novelty_control`] reusing a prepared context; `prior_index` selects
/// the prior integral computed for `v`.
pub fn min_novelty_control_in(
    ctx: &TransferContext<'_>,
    spec: &TransferSpec,
    v: &ControlSignal,
    prior_index: usize,
) -> Result<NoveltySolution> {
    spec.check_against(ctx.system, &ctx.grid)?;
    check_prior_energy(v, spec.gamma_v)?;
    let s = ctx.prior_integral(prior_index).clone();
    let r = ctx.next_leg_vector(spec);
    let report = check_existence(spec, &s, &r, ctx.gramian())?.into_result()?;
    let (mu, j) = closed_form_value(
        spec,
        &report,
        ctx.gramian().inverse_form(&s, &r),
        spec.gamma_v * spec.horizon,
    );
    log_costate(ctx, spec, mu, &s, &r);
    let kappa = 0.5 / (mu * (spec.gamma_v * spec.gamma_u).sqrt());
    let u = assemble_input(ctx, v, kappa, &s, &r)?;
    Ok(NoveltySolution {
        u,
        mu,
        j,
        feasibility: report,
        s,
        r,
        variant: NoveltyVariant::InnerProduct,
    })
}

/// Classical minimum-energy input `B'Φ'W⁻¹r` and its average energy `r'W⁻¹r / T`.
pub fn min_energy_control(
    system: &LtvSystem,
    spec: &TransferSpec,
    grid: &Grid,
) -> Result<(ControlSignal, f64)> {
    spec.check_against(system, grid)?;
    let ctx = TransferContext::new(system, grid, &[])?;
    min_energy_control_in(&ctx, spec)
}

pub fn min_energy_control_in(
    ctx: &TransferContext<'_>,
    spec: &TransferSpec,
) -> Result<(ControlSignal, f64)> {
    let r = ctx.next_leg_vector(spec);
    let c = ctx.gramian().solve(&r);
    let energy = r.dot(&c) / spec.horizon;
    Ok((ctx.input_from(&c)?, energy))
}

/// Minimizer of the average squared distance `J₁ = (1/T)∫‖v − u‖² dt`.
pub fn euclidean_min_control(
    system: &LtvSystem,
    spec: &TransferSpec,
    v: &ControlSignal,
    grid: &Grid,
) -> Result<NoveltySolution> {
    spec.check_against(system, grid)?;
    check_prior_energy(v, spec.gamma_v)?;
    let ctx = TransferContext::new(system, grid, &[v])?;
    let s = ctx.prior_integral(0).clone();
    let r = ctx.next_leg_vector(spec);
    let report = check_existence(spec, &s, &r, ctx.gramian())?.into_result()?;
    let mu = -1.0 + (report.margin_prior / report.margin_next).sqrt();
    let one_plus = 1.0 + mu;
    if !(one_plus > f64::EPSILON) || !one_plus.is_finite() {
        return Err(Error::Degenerate {
            reason: format!("Euclidean multiplier mu = {mu} makes 1 + mu vanish"),
            value: None,
        });
    }
    let t = spec.horizon;
    let e_s = report.e_prior;
    let j1 = (spec.gamma_u + spec.gamma_v) - 2.0 / t * ctx.gramian().inverse_form(&s, &r)
        + 2.0 * spec.gamma_v / one_plus * (e_s / (spec.gamma_v * t) - 1.0);
    let u = assemble_input(&ctx, v, 1.0 / one_plus, &s, &r)?;
    Ok(NoveltySolution {
        u,
        mu,
        j: j1,
        feasibility: report,
        s,
        r,
        variant: NoveltyVariant::Euclidean,
    })
}

/// Minimally novel input for the average-novelty measure
/// `J₂ = v_av'ū / √(γv γu)`, where the prior `v_prior` lasts `T*`.
pub fn average_novelty_control(
    system: &LtvSystem,
    spec: &TransferSpec,
    v_prior: &ControlSignal,
    grid: &Grid,
) -> Result<NoveltySolution> {
    spec.check_against(system, grid)?;
    let t_star = spec
        .prior_horizon
        .ok_or_else(|| Error::Spec("average novelty needs the prior horizon T*".into()))?;
    if (v_prior.grid().horizon() - t_star).abs() > 1e-12 * t_star {
        return Err(Error::Shape(format!(
            "prior input spans {} but T* = {t_star}",
            v_prior.grid().horizon()
        )));
    }
    if v_prior.dim() != system.input_dim() {
        return Err(Error::Shape("prior input dimension differs from the system's".into()));
    }
    check_prior_energy(v_prior, spec.gamma_v)?;
    let v_av = v_prior.mean();
    let v_const = ControlSignal::constant(*grid, &v_av)?;
    let ctx = TransferContext::new(system, grid, &[&v_const])?;
    let s = ctx.prior_integral(0).clone();
    let r = ctx.next_leg_vector(spec);
    let t = spec.horizon;
    let prior_energy = t * v_av.norm_squared();
    let report = FeasibilityReport::from_energies(
        ctx.gramian().inverse_form(&s, &s),
        ctx.gramian().inverse_form(&r, &r),
        prior_energy,
        spec.gamma_u * t,
    );
    let s_winv_r = ctx.gramian().inverse_form(&s, &r);
    let tol = FEASIBILITY_RTOL * prior_energy.max(spec.gamma_u * t);
    if report.margin_next > tol && report.margin_prior <= tol {
        // v_av lies in the reachable input subspace: every feasible u has the same J₂
        return Err(Error::Degenerate {
            reason: "averaged prior input is fully determined by the endpoint map; \
                     every feasible input attains the same J2"
                .into(),
            value: Some(s_winv_r / (t * (spec.gamma_v * spec.gamma_u).sqrt())),
        });
    }
    let report = report.into_result()?;
    let (mu, j) = closed_form_value(spec, &report, s_winv_r, prior_energy);
    let kappa = 0.5 / (mu * (spec.gamma_v * spec.gamma_u).sqrt());
    let u = assemble_input(&ctx, &v_const, kappa, &s, &r)?;
    Ok(NoveltySolution {
        u,
        mu,
        j,
        feasibility: report,
        s,
        r,
        variant: NoveltyVariant::Average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator() -> LtvSystem {
        LtvSystem::lti(DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn mat1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn reference_prior(grid: Grid) -> ControlSignal {
        ControlSignal::sinusoid(grid, &vec1(1.0), &vec1(2f64.sqrt()), 1.0).unwrap()
    }

    #[test]
    fn novelty_of_self_and_negation() {
        let g = Grid::new(1.0, 200).unwrap();
        let v = reference_prior(g);
        let e = v.energy();
        assert!((novelty_of(&v, &v, e, e).unwrap() - 1.0).abs() < 1e-12);
        assert!((novelty_of(&v, &v.scaled(-1.0), e, e).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn novelty_of_reference_pair() {
        let g = Grid::new(1.0, 1000).unwrap();
        let v = reference_prior(g);
        let amp = 1.5f64.sqrt(); // 1.2247…, energy 0.25 + 0.75 = 1
        let u = ControlSignal::sinusoid(g, &vec1(0.5), &vec1(amp), 1.0).unwrap();
        // (1/√2)(0.5 + √2·√1.5/2)
        let expect = (0.5 + 2f64.sqrt() * amp / 2.0) / 2f64.sqrt();
        assert!((novelty_of(&v, &u, 2.0, 1.0).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.96593).abs() < 1e-5);
    }

    #[test]
    fn transfer_vectors_on_integrator() {
        let g = Grid::new(1.0, 100).unwrap();
        let one = ControlSignal::constant(g, &vec1(1.0)).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 1.0, 1.0).unwrap();
        let (s, r) = transfer_vectors(&integrator(), &spec, Some(&one), &g).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert!((r[0] - 0.5).abs() < 1e-14);

        let spec = spec.with_prior_state(vec1(0.0)).unwrap();
        let (s, _) = transfer_vectors(&integrator(), &spec, None, &g).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transfer_vectors_need_a_prior() {
        let g = Grid::new(1.0, 10).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            transfer_vectors(&integrator(), &spec, None, &g),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn free_evolution_gives_zero_r() {
        let sys = LtvSystem::lti(DMatrix::from_element(1, 1, -0.7), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let g = Grid::new(1.0, 100).unwrap();
        let phi = ltv::state_transition(&sys, 0.0, 1.0, &g).unwrap();
        let x0 = vec1(0.8);
        let spec = TransferSpec::new(x0.clone(), &phi * &x0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_prior_state(vec1(0.1))
            .unwrap();
        let (_, r) = transfer_vectors(&sys, &spec, None, &g).unwrap();
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn existence_margins_on_integrator() {
        let g = Grid::new(1.0, 10).unwrap();
        let w = ltv::controllability_gramian(&integrator(), &g).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 2.0, 1.0).unwrap();
        let rep = check_existence(&spec, &vec1(1.0), &vec1(0.5), &w).unwrap();
        assert!((rep.margin_prior - 1.0).abs() < 1e-14);
        assert!((rep.margin_next - 0.75).abs() < 1e-14);
        assert!(rep.feasible);

        let spec = TransferSpec { gamma_v: 1.0, ..spec };
        let rep = check_existence(&spec, &vec1(1.0), &vec1(0.5), &w).unwrap();
        assert!(rep.margin_prior.abs() < 1e-14);
        assert!(!rep.feasible);

        let rep = check_existence(&spec, &vec1(1.0), &vec1(0.0), &w).unwrap();
        assert_eq!(rep.margin_next, spec.gamma_u * spec.horizon);
    }

    #[test]
    fn reference_instance_closed_form() {
        let g = Grid::new(1.0, 1000).unwrap();
        let v = reference_prior(g);
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 2.0, 1.0).unwrap();
        let sol = min_novelty_control(&integrator(), &spec, &v, &g).unwrap();
        let mu = 1.0 / (2.0 * 2f64.sqrt()) * (1.0f64 / 0.75).sqrt();
        assert!((sol.mu - mu).abs() < 1e-12);
        assert!((sol.j - (0.5 + 0.75f64.sqrt()) / 2f64.sqrt()).abs() < 1e-12);
        let amp = 1.5f64.sqrt();
        for (i, t) in g.times().enumerate() {
            let expect = 0.5 + amp * (2.0 * std::f64::consts::PI * t).sin();
            assert!((sol.u.sample(i)[0] - expect).abs() < 1e-12);
        }
        assert!((sol.u.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_transfer_is_not_novel() {
        // shift-invariant system redoing the same displacement with equal energy
        let g = Grid::new(1.0, 400).unwrap();
        let sys = integrator();
        let v = reference_prior(g);
        let spec = TransferSpec::new(vec1(1.0), vec1(2.0), 1.0, 2.0, 2.0).unwrap();
        let sol = min_novelty_control(&sys, &spec, &v, &g).unwrap();
        assert!((sol.j - 1.0).abs() < 1e-12);
        assert!((sol.u.samples() - v.samples()).norm() < 1e-10);
    }

    #[test]
    fn infeasible_prior_budget_is_reported() {
        let g = Grid::new(1.0, 100).unwrap();
        let v = ControlSignal::constant(g, &vec1(1.0)).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 1.0, 1.0).unwrap();
        match min_novelty_control(&integrator(), &spec, &v, &g) {
            Err(Error::Infeasible(rep)) => assert!(rep.margin_prior.abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn prior_energy_mismatch_is_rejected() {
        let g = Grid::new(1.0, 100).unwrap();
        let v = ControlSignal::constant(g, &vec1(1.0)).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 3.0, 1.0).unwrap();
        assert!(matches!(
            min_novelty_control(&integrator(), &spec, &v, &g),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn min_energy_examples() {
        let g = Grid::new(1.0, 1000).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 1.0, 1.0).unwrap();
        let (u, e) = min_energy_control(&integrator(), &spec, &g).unwrap();
        assert!((e - 0.25).abs() < 1e-14);
        assert!(u.samples().iter().all(|x| (x - 0.5).abs() < 1e-14));

        let spec = TransferSpec::new(vec1(1.0), vec1(1.0), 1.0, 1.0, 1.0).unwrap();
        let (u, e) = min_energy_control(&integrator(), &spec, &g).unwrap();
        assert_eq!(e, 0.0);
        assert!(u.is_zero());

        let sys = LtvSystem::lti(mat1(-1.0), mat1(1.0)).unwrap();
        let spec = TransferSpec::new(vec1(0.0), vec1(1.0), 1.0, 1.0, 1.0).unwrap();
        let (u, e) = min_energy_control(&sys, &spec, &g).unwrap();
        let w = (1.0 - (-2f64).exp()) / 2.0;
        assert!((e - 1.0 / w).abs() < 1e-10);
        assert!((u.energy() - e).abs() < 1e-9 * e);
        let xf = ltv::propagate(&sys, &spec.x_0, &u, &g).unwrap().final_state();
        assert!((xf[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn euclidean_reference_value() {
        let g = Grid::new(1.0, 1000).unwrap();
        let v = reference_prior(g);
        let spec = TransferSpec::new(vec1(1.0), vec1(1.5), 1.0, 2.0, 1.0).unwrap();
        let e = euclidean_min_control(&integrator(), &spec, &v, &g).unwrap();
        let j = min_novelty_control(&integrator(), &spec, &v, &g).unwrap().j;
        assert!((e.j - (3.0 - 2.0 * 2f64.sqrt() * j)).abs() < 1e-12);
        assert!((e.j - 0.26789).abs() < 1e-4);
    }

    #[test]
    fn euclidean_distance_vanishes_for_repeat() {
        let g = Grid::new(1.0, 400).unwrap();
        let v = reference_prior(g);
        let spec = TransferSpec::new(vec1(1.0), vec1(2.0), 1.0, 2.0, 2.0).unwrap();
        let e = euclidean_min_control(&integrator(), &spec, &v, &g).unwrap();
        assert!(e.j.abs() < 1e-10);
    }

    #[test]
    fn average_variant_with_matching_constant_prior() {
        let sys = LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -0.3]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let g = Grid::new(1.0, 200).unwrap();
        let v = ControlSignal::constant_with_energy(g, &vec1(1.0), 1.0).unwrap();
        let spec = TransferSpec::new(
            DVector::from_vec(vec![0.1, 0.2]),
            DVector::from_vec(vec![0.2, 0.5]),
            1.0,
            1.0,
            1.5,
        )
        .unwrap();
        let base = min_novelty_control(&sys, &spec, &v, &g).unwrap();
        let avg = average_novelty_control(&sys, &spec.clone().with_prior_horizon(1.0).unwrap(), &v, &g).unwrap();
        assert!((base.j - avg.j).abs() < 1e-12);
        assert!((base.mu - avg.mu).abs() < 1e-12);
        assert!((base.u.samples() - avg.u.samples()).norm() < 1e-10);
    }

    #[test]
    fn average_variant_zero_mean_prior_is_degenerate() {
        let g = Grid::new(1.0, 200).unwrap();
        let gp = Grid::new(2.0, 200).unwrap();
        let v = ControlSignal::with_mean_and_energy(gp, &vec1(0.0), &vec1(1.0), 1, 1.0).unwrap();
        let sys = LtvSystem::lti(mat1(-1.0), mat1(1.0)).unwrap();
        let spec = TransferSpec::new(vec1(1.0), vec1(0.5), 1.0, 1.0, 1.0)
            .unwrap()
            .with_prior_horizon(2.0)
            .unwrap();
        match average_novelty_control(&sys, &spec, &v, &g) {
            Err(Error::Degenerate { value: Some(j), .. }) => assert!(j.abs() < 1e-10),
            other => panic!("expected degenerate, got {other:?}"),
        }
    }
}
