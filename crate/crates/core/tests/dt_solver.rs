mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use novelty_core::novelty_ct::{min_novelty_control, TransferSpec};
use novelty_core::novelty_dt::{
    ct_dt_consistency, interval_averages, min_novelty_control_dt, novelty_of_dt, qp_oracle_dt,
    zoh_discretize, DtControlSequence, DtTransferSpec,
};
use novelty_core::{ControlSignal, DtSystem, Error, Grid, LtvSystem};
use proptest::prelude::*;
use common::random_dt_instance as random_instance;

#[test]
fn forced_single_step() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = DtSystem::lti(one.clone(), one, 1).unwrap();
    let spec = DtTransferSpec::new(DVector::zeros(1), DVector::from_element(1, 1.0), 1.0, 1.0).unwrap();
    let v = DtControlSequence::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
    let closed = min_novelty_control_dt(&sys, &spec, &v).unwrap();
    assert!((closed.u.samples()[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((closed.j - 1.0).abs() < 1e-12);
    assert!(closed.multipliers.is_none());
    let oracle = qp_oracle_dt(&sys, &spec, &v).unwrap();
    assert!((oracle.u.samples()[(0, 0)] - 1.0).abs() < 1e-9);
}

#[test]
fn two_step_against_circle_enumeration() {
    // {u : u0 + u1 = 1, u0² + u1² = 2}: u0 = (1 ± √3)/2
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = DtSystem::lti(one.clone(), one, 2).unwrap();
    let spec = DtTransferSpec::new(DVector::zeros(1), DVector::from_element(1, 1.0), 1.0, 1.0).unwrap();
    let v = DtControlSequence::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.2]))
        .unwrap()
        .with_energy(1.0)
        .unwrap();
    let roots = [(1.0 + 3f64.sqrt()) / 2.0, (1.0 - 3f64.sqrt()) / 2.0];
    let best = roots
        .iter()
        .map(|&u0| {
            let u = DtControlSequence::new(DMatrix::from_row_slice(1, 2, &[u0, 1.0 - u0])).unwrap();
            novelty_of_dt(&v, &u, 1.0, 1.0).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let sol = min_novelty_control_dt(&sys, &spec, &v).unwrap();
    assert!((sol.j - best).abs() < 1e-12);
}

#[test]
fn infeasible_budget_is_rejected_by_both_solvers() {
    let inst = random_instance(5, 2, 1, 6);
    // γu was drawn at most 4× the minimum energy
    let spec = DtTransferSpec {
        gamma_u: inst.spec.gamma_u / 8.0,
        ..inst.spec.clone()
    };
    assert!(matches!(min_novelty_control_dt(&inst.system, &spec, &inst.v), Err(Error::Infeasible(_))));
    assert!(matches!(qp_oracle_dt(&inst.system, &spec, &inst.v), Err(Error::Infeasible(_))));
}

#[test]
fn kkt_residuals_of_closed_form() {
    for seed in 0..30 {
        let n = 1 + seed as usize % 4;
        let m = 1 + seed as usize % 3;
        let p = (n + 2).max(4 + seed as usize % 12);
        let inst = random_instance(seed, n, m, p);
        let sol = min_novelty_control_dt(&inst.system, &inst.spec, &inst.v).unwrap();
        let mult = sol.multipliers.as_ref().unwrap();
        assert!(mult.gamma > 0.0);
        let c = 1.0 / (inst.spec.gamma_u * inst.spec.gamma_v).sqrt();
        let delta = DVector::from_vec(mult.delta.clone());
        let scale = inst.v.samples().amax() * c;
        for (k, g) in inst.maps.iter().enumerate() {
            let res = inst.v.step(k) * c - g.tr_mul(&delta) * p as f64 - sol.u.step(k) * (2.0 * mult.gamma);
            assert!(res.amax() <= 1e-8 * scale.max(1.0), "seed {seed}: stationarity {}", res.amax());
        }
        let slack = mult.gamma * (sol.u.energy() - inst.spec.gamma_u);
        assert!(slack.abs() <= 1e-10 * mult.gamma.max(1.0) * inst.spec.gamma_u.max(1.0));
        assert!(sol.relaxation_tight);
        let xf = common::dt_endpoint(&inst, &sol.u);
        assert!((&xf - &inst.spec.x_f).norm() <= 1e-8 * inst.spec.x_f.norm().max(1.0));
        assert!(sol.j.abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn oracle_agrees_on_fifty_instances() {
    let start = Instant::now();
    for seed in 0..50u64 {
        let n = 1 + seed as usize % 4;
        let m = 1 + (seed as usize / 4) % 3;
        let p = (n + 1).max(2 + (seed as usize * 7) % 15);
        let inst = random_instance(1000 + seed, n, m, p);
        let closed = min_novelty_control_dt(&inst.system, &inst.spec, &inst.v).unwrap();
        let oracle = qp_oracle_dt(&inst.system, &inst.spec, &inst.v).unwrap();
        let diff = (closed.u.samples() - oracle.u.samples()).amax();
        assert!(diff <= 1e-6, "seed {seed} (n={n}, m={m}, p={p}): {diff}");
        assert!((oracle.u.energy() - inst.spec.gamma_u).abs() <= 1e-6 * inst.spec.gamma_u);
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn consistency_on_integrator_reference() {
    let grid = Grid::new(1.0, 1024).unwrap();
    let sys = LtvSystem::lti(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
    let v = ControlSignal::sinusoid(
        grid,
        &DVector::from_element(1, 1.0),
        &DVector::from_element(1, 2f64.sqrt()),
        1.0,
    )
    .unwrap();
    let spec = TransferSpec::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.5), 1.0, 2.0, 1.0).unwrap();
    let table = ct_dt_consistency(&sys, &spec, &v, &grid, &[8, 16, 32, 64, 128]).unwrap();
    assert!((table.j_ct - 0.96593).abs() < 1e-4);
    assert!(table.monotone_tail(3));
    assert!(table.rows.last().unwrap().error < table.rows[0].error);
}

#[test]
fn integrator_zoh_is_exact() {
    // A = 0: each ZOH step is x ← x + h u, so the discrete problem is the
    // piecewise-constant restriction of the continuous one.
    let sys = LtvSystem::lti(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
    for p in [4, 8, 16] {
        let d = zoh_discretize(&sys, 2.0, p, 8).unwrap();
        let h = 2.0 / p as f64;
        for k in 0..p {
            assert!((d.a(k) - DMatrix::identity(2, 2)).amax() < 1e-14);
            assert!((d.b(k) - DMatrix::identity(2, 2) * h).amax() < 1e-14);
        }
    }
}

#[test]
fn zoh_matches_matrix_exponential() {
    let mut rng = common::rng(9);
    let a = common::normal_matrix(2, 2, 1.0, &mut rng) - DMatrix::identity(2, 2);
    let b = common::normal_matrix(2, 1, 1.0, &mut rng);
    let sys = LtvSystem::lti(a.clone(), b.clone()).unwrap();
    let d = zoh_discretize(&sys, 1.0, 5, 40).unwrap();
    let h = 0.2;
    // ∫₀ʰ e^{As} ds B by composite Simpson with fine steps
    let fine = 2000;
    let mut acc = DMatrix::zeros(2, 1);
    for i in 0..=fine {
        let w = if i == 0 || i == fine { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += common::expm(&a, h * i as f64 / fine as f64) * &b * w;
    }
    acc *= h / fine as f64 / 3.0;
    assert!((d.a(0) - common::expm(&a, h)).amax() < 1e-8);
    assert!((d.b(0) - acc).amax() < 1e-8);
}

#[test]
fn interval_averages_of_constant_signal() {
    let grid = Grid::new(2.0, 400).unwrap();
    let v = ControlSignal::constant(grid, &DVector::from_vec(vec![0.5, -1.0])).unwrap();
    let avg = interval_averages(&v, 8).unwrap();
    assert_eq!(avg.steps(), 8);
    for k in 0..8 {
        assert!((avg.step(k)[0] - 0.5).abs() < 1e-12);
        assert!((avg.step(k)[1] + 1.0).abs() < 1e-12);
    }
}

#[test]
fn continuous_and_discrete_agree_on_random_stable_system() {
    let mut rng = common::rng(21);
    let a = common::normal_matrix(2, 2, 0.5, &mut rng) - DMatrix::identity(2, 2) * 1.5;
    let b = common::normal_matrix(2, 1, 1.0, &mut rng);
    let sys = LtvSystem::lti(a, b).unwrap();
    let grid = Grid::new(1.0, 1024).unwrap();
    let v = ControlSignal::new(grid, common::rescale_energy(&grid, &common::random_prior_samples(&grid, 1, &mut rng), 1.0)).unwrap();
    let x0 = DVector::from_vec(vec![0.3, -0.2]);
    let xf = DVector::from_vec(vec![0.1, 0.4]);
    let probe = TransferSpec::new(x0.clone(), xf.clone(), 1.0, 1.0, 1.0).unwrap();
    let (_, e_min) = novelty_core::min_energy_control(&sys, &probe, &grid).unwrap();
    let spec = TransferSpec { gamma_u: 3.0 * e_min, ..probe };
    let j_ct = min_novelty_control(&sys, &spec, &v, &grid).unwrap().j;
    let table = ct_dt_consistency(&sys, &spec, &v, &grid, &[16, 32, 64, 128]).unwrap();
    assert!((table.j_ct - j_ct).abs() < 1e-14);
    assert!(table.monotone_tail(3));
    // first-order ZOH: halving h roughly halves the error
    let last = &table.rows[table.rows.len() - 2..];
    let ratio = last[0].error / last[1].error;
    assert!(ratio > 1.5 && ratio < 4.5, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_is_feasible_and_beats_oracle(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2, extra in 0usize..6) {
        let p = n + 1 + extra;
        let inst = random_instance(seed, n, m, p);
        let closed = min_novelty_control_dt(&inst.system, &inst.spec, &inst.v).unwrap();
        prop_assert!((closed.u.energy() - inst.spec.gamma_u).abs() <= 1e-8 * inst.spec.gamma_u);
        let xf = common::dt_endpoint(&inst, &closed.u);
        prop_assert!((&xf - &inst.spec.x_f).norm() <= 1e-8 * inst.spec.x_f.norm().max(1.0));
        let oracle = qp_oracle_dt(&inst.system, &inst.spec, &inst.v).unwrap();
        prop_assert!(closed.j >= oracle.j - 1e-9);
        prop_assert!((closed.u.samples() - oracle.u.samples()).amax() <= 1e-6);
    }
}
