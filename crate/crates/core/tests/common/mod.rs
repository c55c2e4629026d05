#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use novelty_core::novelty_dt::{DtControlSequence, DtTransferSpec};
use novelty_core::{DtSystem, Grid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `e^{A t}` by the Padé routine in nalgebra; independent of the RK4 sweeps.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    (a * t).exp()
}

/// Smooth random prior: per input a constant plus three random harmonics.
pub fn random_prior_samples(grid: &Grid, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let t_end = grid.horizon();
    let mut coeffs = Vec::new();
    for _ in 0..m {
        let c: f64 = rng.sample(StandardNormal);
        let harmonics: Vec<(f64, f64)> = (1..=3)
            .map(|_| (rng.sample::<f64, _>(StandardNormal), rng.random_range(0.0..6.3)))
            .collect();
        coeffs.push((c, harmonics));
    }
    DMatrix::from_fn(m, grid.len(), |k, i| {
        let t = grid.time(i);
        let (c, h) = &coeffs[k];
        c + h
            .iter()
            .enumerate()
            .map(|(j, (a, ph))| a * (2.0 * std::f64::consts::PI * (j + 1) as f64 * t / t_end + ph).sin())
            .sum::<f64>()
    })
}

pub fn simpson_energy(grid: &Grid, samples: &DMatrix<f64>) -> f64 {
    let w = grid.simpson_weights();
    samples
        .column_iter()
        .zip(&w)
        .map(|(c, wi)| wi * c.norm_squared())
        .sum::<f64>()
        / grid.horizon()
}

pub fn rescale_energy(grid: &Grid, samples: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    samples * (gamma / simpson_energy(grid, samples)).sqrt()
}

/// Feasible set `{z : ‖z‖² = radius², M z = r}` written as `z0 + null-space ball`.
pub struct SphereSlice {
    pub z0: DVector<f64>,
    pub radius: f64,
    null_rows: DMatrix<f64>,
}

impl SphereSlice {
    /// `None` when `r` is unreachable or the budget is below the minimum norm.
    pub fn new(m: &DMatrix<f64>, r: &DVector<f64>, radius_sq: f64) -> Option<Self> {
        let svd = m.clone().svd(true, true);
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let tol = svd.singular_values.max() * 1e-12 * m.ncols().max(m.nrows()) as f64;
        let rank: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        let mut z0 = DVector::zeros(m.ncols());
        for &i in &rank {
            z0.axpy(u.column(i).dot(r) / svd.singular_values[i], &vt.row(i).transpose(), 1.0);
        }
        if (m * &z0 - r).norm() > 1e-8 * r.norm().max(1.0) {
            return None;
        }
        let rest = radius_sq - z0.norm_squared();
        if rest <= 0.0 {
            return None;
        }
        let null_rows = DMatrix::from_rows(&rank.iter().map(|&i| vt.row(i).into_owned()).collect::<Vec<_>>());
        Some(Self {
            z0,
            radius: rest.sqrt(),
            null_rows,
        })
    }

    pub fn project_null(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.null_rows.tr_mul(&(&self.null_rows * x))
    }

    /// Closest point on the slice sphere to `x`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.project_null(&(x - &self.z0));
        let nd = d.norm();
        if nd == 0.0 {
            return self.z0.clone();
        }
        &self.z0 + d * (self.radius / nd)
    }

    pub fn random_point(&self, rng: &mut impl Rng) -> DVector<f64> {
        self.project(&(normal_vector(self.z0.len(), rng) * self.radius + &self.z0))
    }

    /// Projected gradient ascent of `g'z` from `start`.
    pub fn maximize(&self, g: &DVector<f64>, start: &DVector<f64>) -> DVector<f64> {
        let pg = self.project_null(g).norm();
        if pg == 0.0 {
            return start.clone();
        }
        let alpha = 0.5 * self.radius / pg;
        let mut z = start.clone();
        for _ in 0..20_000 {
            let next = self.project(&(&z + g * alpha));
            let step = (&next - &z).norm();
            z = next;
            if step < 1e-14 * self.radius.max(1.0) {
                break;
            }
        }
        z
    }
}

/// Brute-force optimum of the Simpson-discretized continuous problem for an
/// LTI system, with transitions from the matrix exponential.
pub struct CtOracle {
    pub u: DMatrix<f64>,
    pub j: f64,
    pub mu: f64,
    /// Objective of random feasible candidates and of every ascent run.
    pub candidates: Vec<f64>,
}

pub struct CtProblem<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub grid: Grid,
    pub v: &'a DMatrix<f64>,
    pub x0: &'a DVector<f64>,
    pub xf: &'a DVector<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
}

impl CtProblem<'_> {
    /// Weighted endpoint map: column block `i` is `√w_i e^{A(T−t_i)} B`.
    pub fn endpoint_map(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let w = self.grid.simpson_weights();
        let t_end = self.grid.horizon();
        let mut big = DMatrix::zeros(n, m * self.grid.len());
        for (i, wi) in w.iter().enumerate() {
            let g = expm(self.a, t_end - self.grid.time(i)) * self.b * wi.sqrt();
            big.view_mut((0, i * m), (n, m)).copy_from(&g);
        }
        big
    }

    pub fn free_gap(&self) -> DVector<f64> {
        self.xf - expm(self.a, self.grid.horizon()) * self.x0
    }

    /// Minimum average energy of the transfer.
    pub fn min_energy(&self) -> f64 {
        let big = self.endpoint_map();
        let r = self.free_gap();
        let pinv = big.clone().pseudo_inverse(1e-14).unwrap();
        (pinv * r).norm_squared() / self.grid.horizon()
    }

    pub fn solve(&self, starts: usize, candidates: usize, rng: &mut impl Rng) -> Option<CtOracle> {
        let m = self.b.ncols();
        let t_end = self.grid.horizon();
        let w = self.grid.simpson_weights();
        let big = self.endpoint_map();
        let r = self.free_gap();
        let slice = SphereSlice::new(&big, &r, self.gamma_u * t_end)?;
        let norm = 1.0 / (t_end * (self.gamma_v * self.gamma_u).sqrt());
        let g = DVector::from_fn(big.ncols(), |k, _| {
            let i = k / m;
            w[i].sqrt() * self.v[(k % m, i)] * norm
        });
        let mut found = Vec::new();
        for _ in 0..candidates {
            found.push(g.dot(&slice.random_point(rng)));
        }
        let mut best: Option<DVector<f64>> = None;
        for _ in 0..starts.max(1) {
            let z = slice.maximize(&g, &slice.random_point(rng));
            found.push(g.dot(&z));
            if best.as_ref().is_none_or(|b| g.dot(&z) > g.dot(b)) {
                best = Some(z);
            }
        }
        let z = best.unwrap();
        let u = DMatrix::from_fn(m, self.grid.len(), |k, i| z[i * m + k] / w[i].sqrt());
        let mu = self.recover_mu(&u);
        Some(CtOracle {
            j: g.dot(&z),
            u,
            mu,
            candidates: found,
        })
    }

    /// Least-squares fit of `v = u/κ + B'Φ'λ`; `μ = 1/(2κ√(γv γu))`.
    fn recover_mu(&self, u: &DMatrix<f64>) -> f64 {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let len = self.grid.len();
        let t_end = self.grid.horizon();
        let mut lhs = DMatrix::zeros(m * len, n + 1);
        let mut rhs = DVector::zeros(m * len);
        for i in 0..len {
            let gt = (expm(self.a, t_end - self.grid.time(i)) * self.b).transpose();
            for k in 0..m {
                let row = i * m + k;
                lhs[(row, 0)] = u[(k, i)];
                for c in 0..n {
                    lhs[(row, c + 1)] = gt[(k, c)];
                }
                rhs[row] = self.v[(k, i)];
            }
        }
        let sol = lhs.svd(true, true).solve(&rhs, 1e-14).unwrap();
        let kappa = 1.0 / sol[0];
        1.0 / (2.0 * kappa * (self.gamma_v * self.gamma_u).sqrt())
    }
}

/// Random feasible continuous instance; `γu` sits 10–300% above the minimum energy.
pub struct CtInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub grid: Grid,
    pub v: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub xf: DVector<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
}

impl CtInstance {
    pub fn random(seed: u64, n: usize, m: usize, intervals: usize) -> Self {
        let mut rng = rng(seed);
        let a = normal_matrix(n, n, 0.6, &mut rng);
        let b = normal_matrix(n, m, 1.0, &mut rng);
        let horizon = rng.random_range(0.5..2.0);
        let grid = Grid::new(horizon, intervals).unwrap();
        let gamma_v = rng.random_range(0.5..3.0);
        let v = rescale_energy(&grid, &random_prior_samples(&grid, m, &mut rng), gamma_v);
        let x0 = normal_vector(n, &mut rng);
        let xf = normal_vector(n, &mut rng);
        let mut inst = Self {
            a,
            b,
            grid,
            v,
            x0,
            xf,
            gamma_v,
            gamma_u: 1.0,
        };
        let e_min = inst.problem().min_energy();
        inst.gamma_u = e_min * rng.random_range(1.1..4.0);
        inst
    }

    pub fn problem(&self) -> CtProblem<'_> {
        CtProblem {
            a: &self.a,
            b: &self.b,
            grid: self.grid,
            v: &self.v,
            x0: &self.x0,
            xf: &self.xf,
            gamma_v: self.gamma_v,
            gamma_u: self.gamma_u,
        }
    }
}

/// Random feasible discrete instance; `γu` sits 20–300% above the minimum energy.
pub struct DtInstance {
    pub system: DtSystem,
    pub maps: Vec<DMatrix<f64>>,
    pub spec: DtTransferSpec,
    pub v: DtControlSequence,
}

/// `G_k = A_{p−1} ⋯ A_{k+1} B_k`, built by plain products.
pub fn input_maps(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let p = a.len();
    (0..p)
        .map(|k| {
            let mut g = b[k].clone();
            for a_j in &a[k + 1..p] {
                g = a_j * g;
            }
            g
        })
        .collect()
}

pub fn stacked(maps: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = maps[0].nrows();
    let m = maps[0].ncols();
    let mut big = DMatrix::zeros(n, m * maps.len());
    for (k, g) in maps.iter().enumerate() {
        big.view_mut((0, k * m), (n, m)).copy_from(g);
    }
    big
}

pub fn random_dt_instance(seed: u64, n: usize, m: usize, p: usize) -> DtInstance {
    let mut rng = rng(seed);
    let a: Vec<_> = (0..p)
        .map(|_| DMatrix::identity(n, n) + normal_matrix(n, n, 0.3, &mut rng))
        .collect();
    let b: Vec<_> = (0..p).map(|_| normal_matrix(n, m, 1.0, &mut rng)).collect();
    let maps = input_maps(&a, &b);
    let big = stacked(&maps);
    let x0 = normal_vector(n, &mut rng);
    let xf = normal_vector(n, &mut rng);
    let free = a.iter().fold(DMatrix::identity(n, n), |acc, a_k| a_k * acc);
    let r = &xf - free * &x0;
    let e_min = (big.clone().pseudo_inverse(1e-14).unwrap() * r).norm_squared() / p as f64;
    let gamma_v = rng.random_range(0.5..3.0);
    let gamma_u = e_min * rng.random_range(1.2..4.0);
    let raw = normal_matrix(m, p, 1.0, &mut rng);
    let v = DtControlSequence::new(raw).unwrap().with_energy(gamma_v).unwrap();
    DtInstance {
        system: DtSystem::new(a, b).unwrap(),
        maps,
        spec: DtTransferSpec::new(x0, xf, gamma_v, gamma_u).unwrap(),
        v,
    }
}

pub fn dt_endpoint(inst: &DtInstance, u: &DtControlSequence) -> DVector<f64> {
    let mut x = inst.spec.x_0.clone();
    for k in 0..inst.system.steps() {
        x = inst.system.a(k) * x + inst.system.b(k) * u.step(k);
    }
    x
}
