//! Sampled input trajectories.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Vector-valued input sampled at every node of a [`Grid`].
///
/// Between nodes the signal is evaluated by 4-point cubic Lagrange
/// interpolation, which keeps RK4 propagation fourth order.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: Grid,
    /// One column per node.
    samples: DMatrix<f64>,
}

impl ControlSignal {
    pub fn new(grid: Grid, samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() != grid.len() {
            return Err(Error::Shape(format!(
                "signal has {} samples but the grid has {} nodes",
                samples.ncols(),
                grid.len()
            )));
        }
        if samples.nrows() == 0 {
            return Err(Error::Shape("signal dimension must be >= 1".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Spec("signal has non-finite samples".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn from_columns(grid: Grid, columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Shape("signal needs at least one sample".into()));
        }
        Self::new(grid, DMatrix::from_columns(columns))
    }

    pub fn from_fn(grid: Grid, dim: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let mut samples = DMatrix::zeros(dim, grid.len());
        for (i, t) in grid.times().enumerate() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "signal function returned length {} at t = {t}, expected {dim}",
                    v.len()
                )));
            }
            samples.set_column(i, &v);
        }
        Self::new(grid, samples)
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self {
            grid,
            samples: DMatrix::zeros(dim, grid.len()),
        }
    }

    pub fn constant(grid: Grid, value: &DVector<f64>) -> Result<Self> {
        Self::from_fn(grid, value.len(), |_| value.clone())
    }

    /// Constant input along `direction` whose average energy is `gamma`.
    pub fn constant_with_energy(grid: Grid, direction: &DVector<f64>, gamma: f64) -> Result<Self> {
        let norm = direction.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Spec("constant input needs a nonzero direction".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::Spec(format!("energy must be positive, got {gamma}")));
        }
        Self::constant(grid, &(direction * (gamma.sqrt() / norm)))
    }

    /// `offset + amplitude · sin(2π f t)`.
    pub fn sinusoid(
        grid: Grid,
        offset: &DVector<f64>,
        amplitude: &DVector<f64>,
        frequency: f64,
    ) -> Result<Self> {
        if offset.len() != amplitude.len() {
            return Err(Error::Shape("offset and amplitude lengths differ".into()));
        }
        Self::from_fn(grid, offset.len(), |t| {
            offset + amplitude * (2.0 * PI * frequency * t).sin()
        })
    }

    /// Constant-plus-sinusoid input with the given mean and average energy.
    ///
    /// The sinusoid runs `cycles` full periods over the horizon along `shape`;
    /// its amplitude is solved so the Simpson energy equals `gamma`.
    pub fn with_mean_and_energy(
        grid: Grid,
        mean: &DVector<f64>,
        shape: &DVector<f64>,
        cycles: u32,
        gamma: f64,
    ) -> Result<Self> {
        if mean.len() != shape.len() {
            return Err(Error::Shape("mean and shape lengths differ".into()));
        }
        if cycles == 0 || shape.norm() == 0.0 {
            return Err(Error::Spec("sinusoid needs a nonzero shape and cycles >= 1".into()));
        }
        let omega = 2.0 * PI * cycles as f64 / grid.horizon();
        let sin = Self::from_fn(grid, 1, |t| DVector::from_element(1, (omega * t).sin()))?;
        let ms = sin.mean()[0];
        let ms2 = sin.energy();
        // energy(mean + c shape sin) = |mean|² + 2c mean·shape ⟨sin⟩ + c² |shape|² ⟨sin²⟩
        let qa = shape.norm_squared() * ms2;
        let qb = 2.0 * mean.dot(shape) * ms;
        let qc = mean.norm_squared() - gamma;
        let disc = qb * qb - 4.0 * qa * qc;
        if qa <= 0.0 || disc < 0.0 {
            return Err(Error::Spec(format!(
                "no sinusoid reaches energy {gamma} around this mean"
            )));
        }
        let c = (-qb + disc.sqrt()) / (2.0 * qa);
        Self::from_fn(grid, mean.len(), |t| mean + shape * (c * (omega * t).sin()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> DVectorView<'_, f64> {
        self.samples.column(i)
    }

    /// Average energy `(1/T) ∫ ‖u‖² dt`.
    pub fn energy(&self) -> f64 {
        self.grid
            .integrate(self.samples.column_iter().map(|c| c.norm_squared()))
            / self.grid.horizon()
    }

    /// `∫ u'(t) v(t) dt` on the shared grid.
    pub fn inner(&self, other: &ControlSignal) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.grid.integrate(
            self.samples
                .column_iter()
                .zip(other.samples.column_iter())
                .map(|(a, b)| a.dot(&b)),
        ))
    }

    /// Time average `(1/T) ∫ u dt`.
    pub fn mean(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for (i, c) in self.samples.column_iter().enumerate() {
            acc.axpy(self.grid.simpson_weight(i), &c, 1.0);
        }
        acc / self.grid.horizon()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            samples: &self.samples * factor,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&x| x == 0.0)
    }

    pub fn check_compatible(&self, other: &ControlSignal) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Shape("signals live on different grids".into()));
        }
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "signal dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// Cubic Lagrange interpolation through the four nodes around `t`.
    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let h = self.grid.step();
        let last = self.grid.intervals();
        let pos = (t / h).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last - 1);
        if pos == i as f64 {
            return self.samples.column(i).into_owned();
        }
        // window of four nodes, shifted inward at the ends
        let start = if last < 3 { 0 } else { i.saturating_sub(1).min(last - 3) };
        let count = (last + 1).min(4);
        let mut out = DVector::zeros(self.dim());
        for j in start..start + count {
            let mut basis = 1.0;
            for k in start..start + count {
                if k != j {
                    basis *= (pos - k as f64) / (j as f64 - k as f64);
                }
            }
            out.axpy(basis, &self.samples.column(j), 1.0);
        }
        out
    }
}
