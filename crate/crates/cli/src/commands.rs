use std::path::Path;

use novelty_core::ltv::{controllability_gramian_with_cap, propagate, state_transition, DEFAULT_CONDITION_CAP};
use novelty_core::metrics::{
    run_fig2_demo, run_fig3_experiment, run_fig4_experiment, Fig2Config, Fig3Config, Fig4Config,
};
use novelty_core::networks::{
    build_rate_network, edge_density, realization_rng, sample_adjacency, weight_adjacency, StreamPurpose,
};
use novelty_core::novelty_ct::{
    average_novelty_control, euclidean_min_control, min_novelty_control_in, optimal_novelty,
    NoveltySolution, NoveltyVariant, TransferContext,
};
use novelty_core::novelty_dt::{min_novelty_control_dt, qp_oracle_dt_with, DtTransferSpec, OracleOptions};
use novelty_core::{ControlSignal, Error, Grid, TransferSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    self, base_dir, resolve, to_vector, DtSystemDef, GramianConfig, NetworkDef, SolveCtConfig, SolveDtConfig,
    SystemDef,
};
use crate::output::{matrix_csv, matrix_rows, series_csv, Staging};
use crate::CliError;

const ORACLE_AGREEMENT: f64 = 1e-5;
const FULL_SCALE_REALIZATIONS: usize = 1000;

/// Errors that mean "no solution for this data" rather than bad input.
pub fn is_no_solution(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible(_)
            | Error::Degenerate { .. }
            | Error::IllConditioned { .. }
            | Error::NotPositiveSemidefinite { .. }
    )
}

fn no_solution_report(e: &Error) -> Value {
    match e {
        Error::Infeasible(report) => json!({ "status": "infeasible", "report": report }),
        Error::Degenerate { reason, value } => json!({ "status": "degenerate", "reason": reason, "value": value }),
        Error::IllConditioned { estimate } => json!({ "status": "ill_conditioned", "condition_estimate": estimate }),
        Error::NotPositiveSemidefinite { pivot } => {
            json!({ "status": "not_positive_semidefinite", "pivot": pivot })
        }
        other => json!({ "status": "error", "message": other.to_string() }),
    }
}

/// Write `feasibility.json` for a solve without solution; exit code 2.
fn settle<T>(result: novelty_core::Result<T>, out: &Path, provenance: &Value) -> Result<Result<T, u8>, CliError> {
    match result {
        Ok(v) => Ok(Ok(v)),
        Err(e) if is_no_solution(&e) => {
            let mut staging = Staging::new(out, provenance.clone())?;
            staging.json("feasibility.json", no_solution_report(&e))?;
            staging.commit()?;
            eprintln!("no solution: {e}");
            Ok(Err(2))
        }
        Err(e) => Err(e.into()),
    }
}

macro_rules! settle {
    ($result:expr, $out:expr, $prov:expr) => {
        match settle($result, $out, $prov)? {
            Ok(v) => v,
            Err(code) => return Ok(code),
        }
    };
}

fn provenance(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Value, CliError> {
    let config = serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(json!({ "command": command, "seed": seed, "config": config }))
}

fn report_written(files: &[std::path::PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn times(grid: &Grid) -> impl Iterator<Item = String> + '_ {
    grid.times().map(|t| t.to_string())
}

fn rel_endpoint_error(x: &nalgebra::DVector<f64>, target: &nalgebra::DVector<f64>) -> f64 {
    (x - target).norm() / target.norm().max(1.0)
}

fn prior_signal(cfg: &SolveCtConfig, grid: Grid) -> Result<ControlSignal, CliError> {
    let def = cfg
        .prior
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("variant {:?} needs a prior input", cfg.variant)))?;
    let v = def.build(grid)?;
    if cfg.rescale_prior {
        let e = v.energy();
        if e <= 0.0 {
            return Err(CliError::Usage("cannot rescale a zero prior input".into()));
        }
        Ok(v.scaled((cfg.gamma_v / e).sqrt()))
    } else {
        Ok(v)
    }
}

pub fn solve_ct(path: &Path, out: &Path) -> Result<u8, CliError> {
    let mut cfg: SolveCtConfig = config::load(path)?;
    let sys_def: SystemDef = resolve(&cfg.system, &base_dir(path), "system")?;
    cfg.system = serde_json::to_value(&sys_def).map_err(|e| CliError::Usage(e.to_string()))?;
    let system = sys_def.build()?;
    let grid = Grid::new(cfg.horizon, cfg.intervals)?;
    let mut spec = TransferSpec::new(to_vector(&cfg.x_0), to_vector(&cfg.x_f), cfg.horizon, cfg.gamma_v, cfg.gamma_u)?;
    if let Some(x_r) = &cfg.x_r {
        spec = spec.with_prior_state(to_vector(x_r))?;
    }
    if let Some(t_star) = cfg.prior_horizon {
        spec = spec.with_prior_horizon(t_star)?;
    }
    if cfg.condition_cap.is_some() && cfg.variant != NoveltyVariant::InnerProduct {
        return Err(CliError::Usage("condition_cap applies to the inner_product variant only".into()));
    }
    let cap = cfg.condition_cap.unwrap_or(DEFAULT_CONDITION_CAP);
    let prov = provenance("solve-ct", None, &cfg)?;

    let solution: NoveltySolution = match cfg.variant {
        NoveltyVariant::InnerProduct if cfg.prior.is_none() => {
            if cfg.x_r.is_none() {
                return Err(CliError::Usage("give a prior input or the prior state x_r".into()));
            }
            let ctx = settle!(TransferContext::with_cap(&system, &grid, &[], cap), out, &prov);
            let value = settle!(optimal_novelty(&ctx, &spec), out, &prov);
            let mut staging = Staging::new(out, prov)?;
            staging.json(
                "solution.json",
                json!({
                    "variant": NoveltyVariant::InnerProduct,
                    "mu": value.mu,
                    "j": value.j,
                    "feasibility": value.feasibility,
                }),
            )?;
            println!("mu = {}, J = {}", value.mu, value.j);
            report_written(&staging.commit()?);
            return Ok(0);
        }
        NoveltyVariant::InnerProduct => {
            let v = prior_signal(&cfg, grid)?;
            let ctx = settle!(TransferContext::with_cap(&system, &grid, &[&v], cap), out, &prov);
            settle!(min_novelty_control_in(&ctx, &spec, &v, 0), out, &prov)
        }
        NoveltyVariant::Euclidean => {
            let v = prior_signal(&cfg, grid)?;
            settle!(euclidean_min_control(&system, &spec, &v, &grid), out, &prov)
        }
        NoveltyVariant::Average => {
            let t_star = cfg
                .prior_horizon
                .ok_or_else(|| CliError::Usage("the average variant needs prior_horizon".into()))?;
            let v = prior_signal(&cfg, Grid::new(t_star, cfg.intervals)?)?;
            settle!(average_novelty_control(&system, &spec, &v, &grid), out, &prov)
        }
    };

    let trajectory = propagate(&system, &spec.x_0, &solution.u, &grid)?;
    let endpoint_error = rel_endpoint_error(&trajectory.final_state(), &spec.x_f);
    let mut staging = Staging::new(out, prov)?;
    staging.json(
        "solution.json",
        json!({
            "variant": solution.variant,
            "mu": solution.mu,
            "j": solution.j,
            "feasibility": solution.feasibility,
            "s": solution.s.as_slice(),
            "r": solution.r.as_slice(),
            "energy": solution.u.energy(),
            "endpoint_rel_error": endpoint_error,
        }),
    )?;
    staging.csv("control.csv", &series_csv("t", times(&grid), solution.u.samples(), "u"))?;
    staging.csv("trajectory.csv", &series_csv("t", times(&grid), trajectory.states(), "x"))?;
    println!("mu = {}, J = {}", solution.mu, solution.j);
    report_written(&staging.commit()?);
    Ok(0)
}

pub fn solve_dt(path: &Path, out: &Path, with_oracle: bool) -> Result<u8, CliError> {
    let mut cfg: SolveDtConfig = config::load(path)?;
    let sys_def: DtSystemDef = resolve(&cfg.system, &base_dir(path), "system")?;
    cfg.system = serde_json::to_value(&sys_def).map_err(|e| CliError::Usage(e.to_string()))?;
    let system = sys_def.build()?;
    let v = cfg.prior()?;
    let spec = DtTransferSpec::new(to_vector(&cfg.x_0), to_vector(&cfg.x_f), cfg.gamma_v, cfg.gamma_u)?;
    let prov = provenance("solve-dt", None, &cfg)?;

    let sol = settle!(min_novelty_control_dt(&system, &spec, &v), out, &prov);
    let steps = || (0..system.steps()).map(|k| k.to_string());
    let mut x = spec.x_0.clone();
    for k in 0..system.steps() {
        x = system.a(k) * x + system.b(k) * sol.u.step(k);
    }
    let mut record = json!({
        "j": sol.j,
        "multipliers": sol.multipliers,
        "relaxation_tight": sol.relaxation_tight,
        "feasibility": sol.feasibility,
        "energy": sol.u.energy(),
        "endpoint_rel_error": rel_endpoint_error(&x, &spec.x_f),
    });
    let mut staging = Staging::new(out, prov)?;
    staging.csv("control.csv", &series_csv("k", steps(), sol.u.samples(), "u"))?;
    println!("J = {}", sol.j);

    let mut code = 0;
    if with_oracle {
        let options = cfg.oracle.as_ref().map_or_else(OracleOptions::default, |o| o.options());
        match qp_oracle_dt_with(&system, &spec, &v, options) {
            Ok(oracle) => {
                let diff = (oracle.u.samples() - sol.u.samples()).amax();
                println!("max disagreement: {diff:e}");
                record["oracle"] = json!({
                    "j": oracle.j,
                    "iterations": oracle.iterations,
                    "max_disagreement": diff,
                });
                staging.csv("oracle_control.csv", &series_csv("k", steps(), oracle.u.samples(), "u"))?;
                if diff > ORACLE_AGREEMENT {
                    eprintln!("oracle disagrees with the closed form by {diff:e} (> {ORACLE_AGREEMENT:e})");
                    code = 3;
                }
            }
            Err(e) => {
                eprintln!("oracle failed: {e}");
                record["oracle"] = json!({ "error": e.to_string() });
                code = 3;
            }
        }
    }
    staging.json("solution.json", record)?;
    report_written(&staging.commit()?);
    Ok(code)
}

pub fn gramian(path: &Path, out: &Path) -> Result<u8, CliError> {
    let mut cfg: GramianConfig = config::load(path)?;
    let sys_def: SystemDef = resolve(&cfg.system, &base_dir(path), "system")?;
    cfg.system = serde_json::to_value(&sys_def).map_err(|e| CliError::Usage(e.to_string()))?;
    let system = sys_def.build()?;
    let grid = Grid::new(cfg.horizon, cfg.intervals)?;
    let cap = cfg.condition_cap.unwrap_or(DEFAULT_CONDITION_CAP);
    let prov = provenance("gramian", None, &cfg)?;
    let w = settle!(controllability_gramian_with_cap(&system, &grid, cap), out, &prov);
    let phi = state_transition(&system, 0.0, cfg.horizon, &grid)?;
    let mut staging = Staging::new(out, prov)?;
    staging.json(
        "gramian.json",
        json!({
            "matrix": matrix_rows(w.matrix()),
            "condition_estimate": w.condition_estimate(),
            "pivots": w.pivots().as_slice(),
            "transition": matrix_rows(&phi),
        }),
    )?;
    staging.csv("gramian.csv", &matrix_csv(w.matrix()))?;
    println!("condition estimate = {:e}", w.condition_estimate());
    report_written(&staging.commit()?);
    Ok(0)
}

pub fn fig2(path: Option<&Path>, out: &Path) -> Result<u8, CliError> {
    let cfg: Fig2Config = path.map(config::load).transpose()?.unwrap_or_default();
    let prov = provenance("experiment fig2", None, &cfg)?;
    let bundle = settle!(run_fig2_demo(&cfg), out, &prov);
    let mut staging = Staging::new(out, prov)?;
    staging.csv("trajectory.csv", &bundle.trajectory_csv())?;
    staging.csv("novelty_input.csv", &bundle.novelty_input_csv())?;
    staging.csv("energy_input.csv", &bundle.energy_input_csv())?;
    staging.json(
        "summary.json",
        json!({
            "x_0": bundle.x_0.as_slice(),
            "gamma_v": bundle.gamma_v,
            "gamma_u": bundle.gamma_u,
            "min_energy": bundle.min_energy,
            "j_novelty": bundle.j_novelty,
            "j_energy": bundle.j_energy,
        }),
    )?;
    println!("J novelty = {}, J of minimum-energy input = {}", bundle.j_novelty, bundle.j_energy);
    report_written(&staging.commit()?);
    Ok(0)
}

pub fn fig3(path: Option<&Path>, out: &Path, seed: Option<u64>, full_scale: bool) -> Result<u8, CliError> {
    let mut cfg: Fig3Config = path.map(config::load).transpose()?.unwrap_or_default();
    if let Some(seed) = seed {
        cfg.protocol.seed = seed;
    }
    if full_scale {
        cfg.protocol.realizations = FULL_SCALE_REALIZATIONS;
    }
    cfg.protocol.validate()?;
    cfg.network.validate()?;
    let prov = provenance("experiment fig3", Some(cfg.protocol.seed), &cfg)?;
    let report = run_fig3_experiment(&cfg)?;
    let mut staging = Staging::new(out, prov)?;
    staging.csv("fig3.csv", &report.to_csv())?;
    staging.json(
        "summary.json",
        json!({
            "n_feasible": report.n_feasible,
            "n_infeasible": report.n_infeasible,
            "n_failed": report.n_failed,
            "dominance_holds": report.dominance_holds,
            "mean_gap": report.mean_gap,
            "verdict": report.verdict_line(),
        }),
    )?;
    println!("{}", report.verdict_line());
    report_written(&staging.commit()?);
    Ok(0)
}

pub fn fig4(path: Option<&Path>, out: &Path, seed: Option<u64>, full_scale: bool) -> Result<u8, CliError> {
    let mut cfg: Fig4Config = path.map(config::load).transpose()?.unwrap_or_default();
    if let Some(seed) = seed {
        cfg.protocol.seed = seed;
    }
    if full_scale {
        cfg.protocol.realizations = FULL_SCALE_REALIZATIONS;
    }
    cfg.validate()?;
    let prov = provenance("experiment fig4", Some(cfg.protocol.seed), &cfg)?;
    let report = run_fig4_experiment(&cfg)?;
    let mut staging = Staging::new(out, prov)?;
    staging.csv("fig4.csv", &report.to_csv())?;
    staging.json(
        "summary.json",
        json!({
            "rows": report.rows,
            "verdicts": report.verdicts,
            "verdict": report.verdict_line(),
        }),
    )?;
    println!("{}", report.verdict_line());
    report_written(&staging.commit()?);
    Ok(0)
}

pub fn generate_network(path: &Path, out: &Path, seed: Option<u64>) -> Result<u8, CliError> {
    let mut cfg: NetworkDef = config::load(path)?;
    match &mut cfg {
        NetworkDef::Graph { ensemble, .. } => {
            if let Some(seed) = seed {
                ensemble.seed = seed;
            }
            ensemble.validate()?;
        }
        NetworkDef::Rate { network, .. } => {
            if let Some(seed) = seed {
                network.seed = seed;
            }
            network.validate()?;
        }
    }
    match &cfg {
        NetworkDef::Graph { ensemble, realization } => {
            let prov = provenance("generate-network", Some(ensemble.seed), &cfg)?;
            let adj = sample_adjacency(ensemble, *realization)?;
            let weights = weight_adjacency(
                &adj,
                ensemble.symmetric_weights,
                &mut realization_rng(ensemble.seed, StreamPurpose::Weights, *realization),
            );
            let mut staging = Staging::new(out, prov)?;
            staging.csv("edges.txt", &adj.to_edge_list())?;
            staging.csv("weights.csv", &matrix_csv(&weights))?;
            staging.json(
                "summary.json",
                json!({
                    "family": ensemble.family,
                    "n": adj.node_count(),
                    "edges": adj.edge_count(),
                    "density": edge_density(&adj),
                    "max_degree": adj.degrees().into_iter().max(),
                    "connected": adj.is_connected(),
                    "full_rank": adj.is_full_rank(),
                }),
            )?;
            println!("{} edges, density {}", adj.edge_count(), edge_density(&adj));
            report_written(&staging.commit()?);
        }
        NetworkDef::Rate { network, realization } => {
            let prov = provenance("generate-network", Some(network.seed), &cfg)?;
            let net = build_rate_network(
                network,
                &mut realization_rng(network.seed, StreamPurpose::Neurons, *realization),
            )?;
            let mut staging = Staging::new(out, prov)?;
            staging.csv("a.csv", &matrix_csv(&net.a()))?;
            staging.csv("b.csv", &matrix_csv(&net.b()))?;
            staging.csv("weights.csv", &matrix_csv(net.weights()))?;
            staging.csv("tau.csv", &matrix_csv(&nalgebra::DMatrix::from_column_slice(network.n, 1, net.tau().as_slice())))?;
            staging.json("summary.json", json!({ "n": network.n, "n_exc": network.n_exc }))?;
            report_written(&staging.commit()?);
        }
    }
    Ok(0)
}
