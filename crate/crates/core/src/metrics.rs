//! Monte-Carlo experiments over network ensembles.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ltv;
use crate::networks::{
    self, build_rate_network, realization_rng, sample_adjacency, weight_adjacency, GraphEnsembleConfig,
    GraphFamily, RateNetConfig, RateNetwork, StreamPurpose,
};
use crate::novelty_ct::{
    min_energy_control_in, min_novelty_control_in, novelty_of, optimal_novelty, ControlSignal,
    TransferContext, TransferSpec,
};
use crate::system::LtvSystem;

/// Mean and population standard deviation.
pub fn summarize(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot summarize an empty sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the average of their 1-based ranks
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation, ties averaged.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Usage(format!(
            "spearman needs two samples of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let (mx, _) = summarize(&rx)?;
    let (my, _) = summarize(&ry)?;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Usage("spearman is undefined for a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Uniform random unit vector.
pub fn random_unit(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Unit vectors `(a, b)` with `a'b = epsilon`.
pub fn sample_endpoint_pair(n: usize, epsilon: f64, rng: &mut impl Rng) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(-1.0..=1.0).contains(&epsilon) {
        return Err(Error::Spec(format!("epsilon must lie in [-1, 1], got {epsilon}")));
    }
    if n < 2 && epsilon.abs() != 1.0 {
        return Err(Error::Spec("need n >= 2 to prescribe |epsilon| < 1".into()));
    }
    let a = random_unit(n, rng);
    if n < 2 {
        return Ok((a.clone(), a * epsilon));
    }
    let w = loop {
        let w = random_unit(n, rng);
        let w = &w - &a * a.dot(&w);
        let norm = w.norm();
        if norm > 1e-8 {
            break w / norm;
        }
    };
    let b = &a * epsilon + w * (1.0 - epsilon * epsilon).sqrt();
    Ok((a, b))
}

/// Horizon, energies, endpoint overlap and ensemble size of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentProtocol {
    /// `T` in ms.
    pub horizon: f64,
    pub gamma_v: f64,
    pub gamma_u: f64,
    pub epsilon: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Simpson intervals over `[0, T]`.
    pub intervals: usize,
}

impl ExperimentProtocol {
    /// Network experiment with constant prior input.
    pub fn fig3_default() -> Self {
        Self {
            horizon: 3.0,
            gamma_v: 1.0,
            gamma_u: 1.0,
            epsilon: 0.7645,
            realizations: 100,
            seed: 0,
            intervals: 200,
        }
    }

    /// Two-leg graph-ensemble experiment with `x_0 = 0`.
    pub fn fig4_default() -> Self {
        Self {
            horizon: 0.3,
            gamma_v: 300.0,
            gamma_u: 300.0,
            epsilon: 0.7358,
            realizations: 100,
            seed: 0,
            intervals: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.horizon) || !positive(self.gamma_v) || !positive(self.gamma_u) {
            return Err(Error::Spec("horizon and energies must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Spec(format!("epsilon must lie in [-1, 1], got {}", self.epsilon)));
        }
        if self.realizations == 0 {
            return Err(Error::Spec("realizations must be >= 1".into()));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.horizon, self.intervals)
    }
}

fn format_row(out: &mut String, fields: &[String]) {
    let _ = writeln!(out, "{}", fields.join(","));
}

fn run_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).into_par_iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Feasible,
    Infeasible,
    Failed,
}

fn classify(err: &Error) -> Outcome {
    match err {
        Error::Infeasible(_) | Error::Degenerate { .. } => Outcome::Infeasible,
        _ => Outcome::Failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Config {
    pub protocol: ExperimentProtocol,
    pub network: RateNetConfig,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            protocol: ExperimentProtocol::fig3_default(),
            network: RateNetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Sample {
    pub index: usize,
    pub outcome: Outcome,
    /// Optimal novelty objective.
    pub j_novelty: f64,
    /// Objective of the minimum-energy input, normalized by its own energy.
    pub j_energy: f64,
    /// Average energy of the minimum-energy input.
    pub min_energy: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Report {
    pub samples: Vec<Fig3Sample>,
    pub n_feasible: usize,
    pub n_infeasible: usize,
    pub n_failed: usize,
    pub dominance_holds: bool,
    pub mean_gap: Option<f64>,
}

impl Fig3Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        format_row(
            &mut out,
            &["realization", "outcome", "J_novelty", "J_energy", "min_energy"].map(String::from),
        );
        for s in &self.samples {
            let outcome = serde_json::to_value(s.outcome).expect("enum serializes");
            format_row(
                &mut out,
                &[
                    s.index.to_string(),
                    outcome.as_str().unwrap_or_default().to_string(),
                    s.j_novelty.to_string(),
                    s.j_energy.to_string(),
                    s.min_energy.to_string(),
                ],
            );
        }
        out
    }

    pub fn verdict_line(&self) -> String {
        format!(
            "dominance {}: {} feasible, {} infeasible, {} failed, mean gap {}",
            if self.dominance_holds { "PASS" } else { "FAIL" },
            self.n_feasible,
            self.n_infeasible,
            self.n_failed,
            self.mean_gap.map_or("n/a".to_string(), |g| g.to_string())
        )
    }
}

fn fig3_realization(config: &Fig3Config, grid: &Grid, index: usize) -> Result<(f64, f64, f64)> {
    let p = &config.protocol;
    let i = index as u64;
    let mut net_rng = realization_rng(p.seed, StreamPurpose::Neurons, i);
    let net = build_rate_network(&config.network, &mut net_rng)?;
    let sys = net.system();
    let n = sys.state_dim();
    let (x_0, x_f) = sample_endpoint_pair(n, p.epsilon, &mut realization_rng(p.seed, StreamPurpose::Endpoints, i))?;
    let dir = random_unit(sys.input_dim(), &mut realization_rng(p.seed, StreamPurpose::Prior, i));
    let v = ControlSignal::constant_with_energy(*grid, &dir, p.gamma_v)?;
    let spec = TransferSpec::new(x_0, x_f, p.horizon, p.gamma_v, p.gamma_u)?;
    let ctx = TransferContext::new(&sys, grid, &[&v])?;
    let sol = min_novelty_control_in(&ctx, &spec, &v, 0)?;
    let (u_me, e_me) = min_energy_control_in(&ctx, &spec)?;
    let j_me = novelty_of(&v, &u_me, p.gamma_v, e_me)?;
    Ok((sol.j, j_me, e_me))
}

/// Rate networks with a constant prior input: optimal novelty against the
/// novelty of the minimum-energy input, per realization.
pub fn run_fig3_experiment(config: &Fig3Config) -> Result<Fig3Report> {
    config.protocol.validate()?;
    config.network.validate()?;
    let grid = config.protocol.grid()?;
    let samples = run_indexed(config.protocol.realizations, |index| {
        match fig3_realization(config, &grid, index) {
            Ok((j_novelty, j_energy, min_energy)) => Fig3Sample {
                index,
                outcome: Outcome::Feasible,
                j_novelty,
                j_energy,
                min_energy,
                detail: None,
            },
            Err(e) => Fig3Sample {
                index,
                outcome: classify(&e),
                j_novelty: f64::NAN,
                j_energy: f64::NAN,
                min_energy: f64::NAN,
                detail: Some(e.to_string()),
            },
        }
    });
    let feasible: Vec<_> = samples.iter().filter(|s| s.outcome == Outcome::Feasible).collect();
    let gaps: Vec<f64> = feasible.iter().map(|s| s.j_novelty - s.j_energy).collect();
    let count = |o| samples.iter().filter(|s| s.outcome == o).count();
    Ok(Fig3Report {
        n_feasible: feasible.len(),
        n_infeasible: count(Outcome::Infeasible),
        n_failed: count(Outcome::Failed),
        dominance_holds: !gaps.is_empty() && gaps.iter().all(|&g| g >= 0.0),
        mean_gap: summarize(&gaps).ok().map(|(m, _)| m),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig4Config {
    pub protocol: ExperimentProtocol,
    pub n: usize,
    /// BA attachment counts; WS uses ring degree `2 m₀` at the same point.
    pub attachments: Vec<usize>,
    pub rewiring: f64,
    pub tau_range: (f64, f64),
    pub symmetric_weights: bool,
    pub require_full_rank: bool,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Self {
            protocol: ExperimentProtocol::fig4_default(),
            n: 100,
            attachments: vec![4, 8, 12, 16, 20, 24],
            rewiring: 0.1,
            tau_range: (5.0, 10.0),
            symmetric_weights: false,
            require_full_rank: true,
        }
    }
}

impl Fig4Config {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.attachments.is_empty() {
            return Err(Error::Spec("need at least one attachment count".into()));
        }
        for &m in &self.attachments {
            self.ensemble(GraphFamily::BarabasiAlbert, m).validate()?;
            self.ensemble(GraphFamily::WattsStrogatz, m).validate()?;
        }
        check_tau(self.tau_range)
    }

    /// Graph ensemble at one grid point; each (family, m₀) gets its own seed.
    pub fn ensemble(&self, family: GraphFamily, attachment: usize) -> GraphEnsembleConfig {
        let tag = match family {
            GraphFamily::BarabasiAlbert => 1u64,
            GraphFamily::WattsStrogatz => 2u64,
        };
        let seed = self.protocol.seed ^ (tag << 56) ^ ((attachment as u64) << 40);
        let base = match family {
            GraphFamily::BarabasiAlbert => GraphEnsembleConfig::barabasi_albert(self.n, attachment, seed),
            GraphFamily::WattsStrogatz => {
                GraphEnsembleConfig::watts_strogatz(self.n, 2 * attachment, self.rewiring, seed)
            }
        };
        GraphEnsembleConfig {
            realizations: self.protocol.realizations,
            require_full_rank: self.require_full_rank,
            symmetric_weights: self.symmetric_weights,
            ..base
        }
    }
}

fn check_tau(range: (f64, f64)) -> Result<()> {
    if range.0 > 0.0 && range.0 <= range.1 && range.1.is_finite() {
        Ok(())
    } else {
        Err(Error::Spec("tau_range must satisfy 0 < lo <= hi".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig4Sample {
    pub outcome: Outcome,
    pub j: f64,
    /// `r'W⁻¹r`.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub eta: f64,
    pub family: GraphFamily,
    pub attachment: usize,
    pub mean_j: f64,
    pub std_j: f64,
    pub mean_e: f64,
    pub std_e: f64,
    pub n_feasible: usize,
    pub n_infeasible: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendVerdicts {
    pub rho_j_ba: Option<f64>,
    pub rho_j_ws: Option<f64>,
    pub rho_e_ba: Option<f64>,
    pub rho_e_ws: Option<f64>,
    pub ws_j_above_ba: bool,
    pub ws_e_below_ba: bool,
}

impl TrendVerdicts {
    pub const RHO_THRESHOLD: f64 = -0.8;

    pub fn novelty_trend(&self) -> bool {
        [self.rho_j_ba, self.rho_j_ws]
            .iter()
            .all(|r| r.is_some_and(|r| r <= Self::RHO_THRESHOLD))
    }

    pub fn energy_trend(&self) -> bool {
        [self.rho_e_ba, self.rho_e_ws]
            .iter()
            .all(|r| r.is_some_and(|r| r <= Self::RHO_THRESHOLD))
    }

    pub fn all_pass(&self) -> bool {
        self.novelty_trend() && self.energy_trend() && self.ws_j_above_ba && self.ws_e_below_ba
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub verdicts: TrendVerdicts,
    /// Per-realization samples, indexed like `rows`.
    #[serde(skip)]
    pub samples: Vec<Vec<Fig4Sample>>,
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        format_row(
            &mut out,
            &["eta", "family", "mean_J", "std_J", "mean_E", "std_E", "n_feasible", "n_infeasible"]
                .map(String::from),
        );
        for r in &self.rows {
            format_row(
                &mut out,
                &[
                    r.eta.to_string(),
                    r.family.label().to_string(),
                    r.mean_j.to_string(),
                    r.std_j.to_string(),
                    r.mean_e.to_string(),
                    r.std_e.to_string(),
                    r.n_feasible.to_string(),
                    (r.n_infeasible + r.n_failed).to_string(),
                ],
            );
        }
        out
    }

    pub fn verdict_line(&self) -> String {
        let v = &self.verdicts;
        let fmt = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{r:.3}"));
        let pf = |b: bool| if b { "PASS" } else { "FAIL" };
        format!(
            "novelty trend {} (rho BA {}, WS {}); energy trend {} (rho BA {}, WS {}); WS J >= BA J {}; WS E <= BA E {}",
            pf(v.novelty_trend()),
            fmt(v.rho_j_ba),
            fmt(v.rho_j_ws),
            pf(v.energy_trend()),
            fmt(v.rho_e_ba),
            fmt(v.rho_e_ws),
            pf(v.ws_j_above_ba),
            pf(v.ws_e_below_ba)
        )
    }
}

/// Time constants and endpoints of realization `index`; shared by every
/// grid point and family.
fn fig4_shared(config: &Fig4Config, index: u64) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let p = &config.protocol;
    let tau = networks::sample_time_constants(
        config.n,
        config.tau_range,
        &mut realization_rng(p.seed, StreamPurpose::Neurons, index),
    );
    let (x_r, x_f) =
        sample_endpoint_pair(config.n, p.epsilon, &mut realization_rng(p.seed, StreamPurpose::Endpoints, index))?;
    Ok((tau, x_r, x_f))
}

/// One realization of the two-leg transfer `x_r → 0 → x_f` on a weighted graph.
pub fn fig4_realization(
    config: &Fig4Config,
    ensemble: &GraphEnsembleConfig,
    grid: &Grid,
    index: usize,
) -> Result<(f64, f64)> {
    let p = &config.protocol;
    let (tau, x_r, x_f) = fig4_shared(config, index as u64)?;
    let adj = sample_adjacency(ensemble, index as u64)?;
    let weights = weight_adjacency(
        &adj,
        ensemble.symmetric_weights,
        &mut realization_rng(ensemble.seed, StreamPurpose::Weights, index as u64),
    );
    let sys = RateNetwork::new(tau, weights)?.system();
    let spec = TransferSpec::new(DVector::zeros(config.n), x_f, p.horizon, p.gamma_v, p.gamma_u)?
        .with_prior_state(x_r)?;
    let ctx = TransferContext::new(&sys, grid, &[])?;
    let value = optimal_novelty(&ctx, &spec)?;
    Ok((value.j, value.feasibility.e_next))
}

fn aggregate(
    family: GraphFamily,
    attachment: usize,
    eta: f64,
    samples: &[Fig4Sample],
) -> MetricRow {
    let ok: Vec<_> = samples.iter().filter(|s| s.outcome == Outcome::Feasible).collect();
    let js: Vec<f64> = ok.iter().map(|s| s.j).collect();
    let es: Vec<f64> = ok.iter().map(|s| s.energy).collect();
    let (mean_j, std_j) = summarize(&js).unwrap_or((f64::NAN, f64::NAN));
    let (mean_e, std_e) = summarize(&es).unwrap_or((f64::NAN, f64::NAN));
    MetricRow {
        eta,
        family,
        attachment,
        mean_j,
        std_j,
        mean_e,
        std_e,
        n_feasible: ok.len(),
        n_infeasible: samples.iter().filter(|s| s.outcome == Outcome::Infeasible).count(),
        n_failed: samples.iter().filter(|s| s.outcome == Outcome::Failed).count(),
    }
}

fn verdicts(rows: &[MetricRow]) -> TrendVerdicts {
    let series = |family: GraphFamily, pick: fn(&MetricRow) -> f64| {
        let (eta, val): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.family == family)
            .map(|r| (r.eta, pick(r)))
            .unzip();
        if val.iter().any(|v| !v.is_finite()) {
            None
        } else {
            spearman(&eta, &val).ok()
        }
    };
    let ba: Vec<_> = rows.iter().filter(|r| r.family == GraphFamily::BarabasiAlbert).collect();
    let ws: Vec<_> = rows.iter().filter(|r| r.family == GraphFamily::WattsStrogatz).collect();
    let paired = ba.len() == ws.len() && !ba.is_empty();
    TrendVerdicts {
        rho_j_ba: series(GraphFamily::BarabasiAlbert, |r| r.mean_j),
        rho_j_ws: series(GraphFamily::WattsStrogatz, |r| r.mean_j),
        rho_e_ba: series(GraphFamily::BarabasiAlbert, |r| r.mean_e),
        rho_e_ws: series(GraphFamily::WattsStrogatz, |r| r.mean_e),
        ws_j_above_ba: paired && ba.iter().zip(&ws).all(|(b, w)| w.mean_j >= b.mean_j),
        ws_e_below_ba: paired && ba.iter().zip(&ws).all(|(b, w)| w.mean_e <= b.mean_e),
    }
}

/// Optimal novelty and minimum transfer energy over BA and WS ensembles
/// across the edge-density grid.
pub fn run_fig4_experiment(config: &Fig4Config) -> Result<MetricReport> {
    config.validate()?;
    let grid = config.protocol.grid()?;
    let mut rows = Vec::new();
    let mut all_samples = Vec::new();
    for &m in &config.attachments {
        for family in [GraphFamily::BarabasiAlbert, GraphFamily::WattsStrogatz] {
            let ensemble = config.ensemble(family, m);
            let samples = run_indexed(config.protocol.realizations, |i| {
                match fig4_realization(config, &ensemble, &grid, i) {
                    Ok((j, energy)) => Fig4Sample {
                        outcome: Outcome::Feasible,
                        j,
                        energy,
                    },
                    Err(e) => Fig4Sample {
                        outcome: classify(&e),
                        j: f64::NAN,
                        energy: f64::NAN,
                    },
                }
            });
            let eta = ensemble.edge_count() as f64 / (config.n * (config.n - 1) / 2) as f64;
            rows.push(aggregate(family, m, eta, &samples));
            all_samples.push(samples);
        }
    }
    Ok(MetricReport {
        verdicts: verdicts(&rows),
        rows,
        samples: all_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Config {
    pub x_r: Vec<f64>,
    pub x_f: Vec<f64>,
    /// Prior input `offset + amplitude · sin(2π f t)`; it defines `x_0`.
    pub prior_offset: Vec<f64>,
    pub prior_amplitude: Vec<f64>,
    pub prior_frequency: f64,
    /// Length of each leg.
    pub leg_horizon: f64,
    pub intervals: usize,
    /// Next-leg energy budget as a multiple of its minimum energy.
    pub energy_ratio: f64,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            x_r: vec![0.0, 0.0],
            x_f: vec![-0.5, 1.0],
            prior_offset: vec![0.5, -0.5, 0.2],
            prior_amplitude: vec![1.0, 0.5, -0.8],
            prior_frequency: 0.5,
            leg_horizon: 2.0,
            intervals: 400,
            energy_ratio: 1.5,
        }
    }
}

/// Stable 2-state, 3-input system used by the demo.
pub fn fig2_system() -> LtvSystem {
    LtvSystem::lti(
        DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5]),
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]),
    )
    .expect("demo matrices are valid")
}

#[derive(Debug, Clone)]
pub struct Fig2Bundle {
    pub grid: Grid,
    /// Prior leg input, `x_r → x_0`.
    pub prior: ControlSignal,
    pub prior_states: DMatrix<f64>,
    pub novelty_input: ControlSignal,
    pub novelty_states: DMatrix<f64>,
    pub energy_input: ControlSignal,
    pub energy_states: DMatrix<f64>,
    pub x_0: DVector<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
    pub min_energy: f64,
    pub j_novelty: f64,
    pub j_energy: f64,
}

impl Fig2Bundle {
    /// `t, leg, x1_novelty, x2_novelty, x1_energy, x2_energy` over both legs.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::new();
        format_row(
            &mut out,
            &["t", "leg", "x1_novelty", "x2_novelty", "x1_energy", "x2_energy"].map(String::from),
        );
        let t_leg = self.grid.horizon();
        for (i, t) in self.grid.times().enumerate() {
            let x = self.prior_states.column(i);
            format_row(
                &mut out,
                &[t.to_string(), "1".into(), x[0].to_string(), x[1].to_string(), x[0].to_string(), x[1].to_string()],
            );
        }
        for (i, t) in self.grid.times().enumerate() {
            let a = self.novelty_states.column(i);
            let b = self.energy_states.column(i);
            format_row(
                &mut out,
                &[
                    (t + t_leg).to_string(),
                    "2".into(),
                    a[0].to_string(),
                    a[1].to_string(),
                    b[0].to_string(),
                    b[1].to_string(),
                ],
            );
        }
        out
    }

    fn input_csv(&self, next: &ControlSignal) -> String {
        let mut out = String::new();
        let mut header = vec!["t".to_string(), "leg".to_string()];
        header.extend((1..=next.dim()).map(|k| format!("u_{k}")));
        format_row(&mut out, &header);
        let t_leg = self.grid.horizon();
        for (leg, sig, offset) in [(1, &self.prior, 0.0), (2, next, t_leg)] {
            for (i, t) in self.grid.times().enumerate() {
                let mut row = vec![(t + offset).to_string(), leg.to_string()];
                row.extend(sig.sample(i).iter().map(|x| x.to_string()));
                format_row(&mut out, &row);
            }
        }
        out
    }

    pub fn novelty_input_csv(&self) -> String {
        self.input_csv(&self.novelty_input)
    }

    pub fn energy_input_csv(&self) -> String {
        self.input_csv(&self.energy_input)
    }
}

/// Two consecutive transfers on [`fig2_system`]: the prior input drives
/// `x_r` to `x_0`, then the next leg to `x_f` is solved both ways.
pub fn run_fig2_demo(config: &Fig2Config) -> Result<Fig2Bundle> {
    let sys = fig2_system();
    let vec_of = |v: &[f64], len: usize, what: &str| {
        if v.len() == len {
            Ok(DVector::from_column_slice(v))
        } else {
            Err(Error::Shape(format!("{what} must have {len} entries")))
        }
    };
    let x_r = vec_of(&config.x_r, 2, "x_r")?;
    let x_f = vec_of(&config.x_f, 2, "x_f")?;
    let offset = vec_of(&config.prior_offset, 3, "prior_offset")?;
    let amplitude = vec_of(&config.prior_amplitude, 3, "prior_amplitude")?;
    if !(config.energy_ratio > 1.0) {
        return Err(Error::Spec("energy_ratio must exceed 1".into()));
    }
    let grid = Grid::new(config.leg_horizon, config.intervals)?;
    let prior = ControlSignal::sinusoid(grid, &offset, &amplitude, config.prior_frequency)?;
    let gamma_v = prior.energy();
    if gamma_v == 0.0 {
        return Err(Error::Spec("prior input must be nonzero".into()));
    }
    let prior_states = ltv::propagate(&sys, &x_r, &prior, &grid)?.states().clone();
    let x_0 = prior_states.column(grid.intervals()).into_owned();

    let ctx = TransferContext::new(&sys, &grid, &[&prior])?;
    let spec = TransferSpec::new(x_0.clone(), x_f, config.leg_horizon, gamma_v, 1.0)?;
    let (energy_input, min_energy) = min_energy_control_in(&ctx, &spec)?;
    let gamma_u = config.energy_ratio * min_energy;
    let spec = TransferSpec { gamma_u, ..spec };
    let sol = min_novelty_control_in(&ctx, &spec, &prior, 0)?;
    let j_energy = novelty_of(&prior, &energy_input, gamma_v, min_energy)?;

    let novelty_states = ltv::propagate(&sys, &x_0, &sol.u, &grid)?.states().clone();
    let energy_states = ltv::propagate(&sys, &x_0, &energy_input, &grid)?.states().clone();
    Ok(Fig2Bundle {
        grid,
        prior,
        prior_states,
        novelty_input: sol.u,
        novelty_states,
        energy_input,
        energy_states,
        x_0,
        gamma_v,
        gamma_u,
        min_energy,
        j_novelty: sol.j,
        j_energy,
    })
}
