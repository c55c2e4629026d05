//! Continuous- and discrete-time linear time-varying systems.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Time-indexed matrix function used by analytic systems. Times are in ms.
pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Dynamics {
    Lti {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
    },
    /// Nodal values on a uniform grid, linearly interpolated in between.
    Tabulated {
        grid: Grid,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
    },
    Analytic {
        a: MatrixFn,
        b: MatrixFn,
    },
}

/// `dx/dt = A(t) x + B(t) u` with `x ∈ ℝⁿ`, `u ∈ ℝᵐ`.
///
/// Read-only after construction, so one instance can be shared across threads.
#[derive(Clone)]
pub struct LtvSystem {
    n: usize,
    m: usize,
    dynamics: Dynamics,
}

impl fmt::Debug for LtvSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.dynamics {
            Dynamics::Lti { .. } => "lti",
            Dynamics::Tabulated { .. } => "tabulated",
            Dynamics::Analytic { .. } => "analytic",
        };
        f.debug_struct("LtvSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("kind", &kind)
            .finish()
    }
}

fn check_finite(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if mat.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Spec(format!("{what} has non-finite entries")))
    }
}

fn check_shape(mat: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if mat.shape() != (rows, cols) {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

impl LtvSystem {
    /// Time-invariant system.
    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::Shape("system needs n >= 1 and m >= 1".into()));
        }
        check_shape(&a, n, n, "A")?;
        check_shape(&b, n, m, "B")?;
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        Ok(Self {
            n,
            m,
            dynamics: Dynamics::Lti { a, b },
        })
    }

    /// Matrices tabulated at every node of `grid`.
    pub fn tabulated(grid: Grid, a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() {
            return Err(Error::Shape(format!(
                "tabulated system needs {} samples of A and B, got {} and {}",
                grid.len(),
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        if n == 0 || m == 0 {
            return Err(Error::Shape("system needs n >= 1 and m >= 1".into()));
        }
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            check_shape(ai, n, n, &format!("A[{i}]"))?;
            check_shape(bi, n, m, &format!("B[{i}]"))?;
            check_finite(ai, &format!("A[{i}]"))?;
            check_finite(bi, &format!("B[{i}]"))?;
        }
        Ok(Self {
            n,
            m,
            dynamics: Dynamics::Tabulated { grid, a, b },
        })
    }

    /// Closures evaluated exactly wherever the integrators need them.
    pub fn analytic(n: usize, m: usize, a: MatrixFn, b: MatrixFn) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Shape("system needs n >= 1 and m >= 1".into()));
        }
        check_shape(&a(0.0), n, n, "A(0)")?;
        check_shape(&b(0.0), n, m, "B(0)")?;
        Ok(Self {
            n,
            m,
            dynamics: Dynamics::Analytic { a, b },
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.dynamics, Dynamics::Lti { .. })
    }

    /// Whether the system is defined on `[0, horizon]`.
    pub fn covers(&self, horizon: f64) -> bool {
        match &self.dynamics {
            Dynamics::Tabulated { grid, .. } => grid.covers(horizon),
            _ => true,
        }
    }

    pub fn a_at(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        match &self.dynamics {
            Dynamics::Lti { a, .. } => Cow::Borrowed(a),
            Dynamics::Tabulated { grid, a, .. } => interpolate(grid, a, t),
            Dynamics::Analytic { a, .. } => Cow::Owned(a(t)),
        }
    }

    pub fn b_at(&self, t: f64) -> Cow<'_, DMatrix<f64>> {
        match &self.dynamics {
            Dynamics::Lti { b, .. } => Cow::Borrowed(b),
            Dynamics::Tabulated { grid, b, .. } => interpolate(grid, b, t),
            Dynamics::Analytic { b, .. } => Cow::Owned(b(t)),
        }
    }

    /// Constant matrices of a time-invariant system.
    pub fn lti_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.dynamics {
            Dynamics::Lti { a, b } => Some((a, b)),
            _ => None,
        }
    }

    /// Same dynamics seen from a shifted origin, `t ↦ t + offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        if offset == 0.0 || self.is_time_invariant() {
            return self.clone();
        }
        let base = self.clone();
        let base_b = self.clone();
        Self {
            n: self.n,
            m: self.m,
            dynamics: Dynamics::Analytic {
                a: Arc::new(move |t| base.a_at(t + offset).into_owned()),
                b: Arc::new(move |t| base_b.b_at(t + offset).into_owned()),
            },
        }
    }
}

fn interpolate<'a>(grid: &Grid, samples: &'a [DMatrix<f64>], t: f64) -> Cow<'a, DMatrix<f64>> {
    let h = grid.step();
    let last = grid.intervals();
    let pos = (t / h).clamp(0.0, last as f64);
    let i = (pos.floor() as usize).min(last - 1);
    let theta = pos - i as f64;
    if theta == 0.0 {
        Cow::Borrowed(&samples[i])
    } else if theta == 1.0 {
        Cow::Borrowed(&samples[i + 1])
    } else {
        Cow::Owned(&samples[i] * (1.0 - theta) + &samples[i + 1] * theta)
    }
}

/// `x(k+1) = A(k) x(k) + B(k) u(k)` for `k = 0..p-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtSystem {
    n: usize,
    m: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl DtSystem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Spec("discrete horizon p must be >= 1".into()));
        }
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "A has {} steps but B has {}",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        if n == 0 || m == 0 {
            return Err(Error::Shape("system needs n >= 1 and m >= 1".into()));
        }
        for (k, (ak, bk)) in a.iter().zip(&b).enumerate() {
            check_shape(ak, n, n, &format!("A({k})"))?;
            check_shape(bk, n, m, &format!("B({k})"))?;
            check_finite(ak, &format!("A({k})"))?;
            check_finite(bk, &format!("B({k})"))?;
        }
        Ok(Self { n, m, a, b })
    }

    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>, steps: usize) -> Result<Self> {
        Self::new(vec![a; steps], vec![b; steps])
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// Horizon `p`.
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }
}
