//! Moment models `g(Y_i, θ) ∈ ℝ^k` and the built-in specifications.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Declared bound `f_v(δ)` on the linearisation remainder of `v` in `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Remainder {
    /// Bilinear `v`: the remainder vanishes identically.
    Zero,
    /// Smooth `v` with curvature bound `c`: `f_v(δ) = c δ²`.
    Quadratic(f64),
}

impl Remainder {
    pub fn at(self, delta: f64) -> f64 {
        match self {
            Remainder::Zero => 0.0,
            Remainder::Quadratic(c) => c * delta * delta,
        }
    }
}

/// Per-observation moment function.
pub trait MomentModel: Send + Sync {
    /// `k`.
    fn moment_dim(&self) -> usize;

    /// `p`.
    fn param_dim(&self) -> usize;

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64>;

    /// Analytic `∂g/∂θ` (`k × p`) for one observation.
    fn moment_jacobian(&self, _row: &[f64], _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `(a, B)` with `g(row, θ) = a + B θ` for every `θ`, when the model is affine.
    fn affine_parts(&self, _row: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        None
    }

    /// Lipschitz constant of `θ ↦ v(θ, t)` uniformly over the test functions
    /// it is used with.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    fn remainder(&self) -> Remainder {
        Remainder::Quadratic(1.0)
    }

    /// Checks that the data has the columns the model reads.
    fn check_data(&self, data: &Dataset) -> Result<()>;

    fn name(&self) -> String {
        "custom".into()
    }
}

fn require_columns(data: &Dataset, cols: &[usize], what: &str) -> Result<()> {
    match cols.iter().find(|&&c| c >= data.width()) {
        Some(c) => Err(Error::config(format!(
            "{what} reads column {c} but the data has {} columns",
            data.width()
        ))),
        None => Ok(()),
    }
}

/// Instrumental-variables moments `g = z (y − x'θ)`.
#[derive(Debug, Clone)]
pub struct LinearIvModel {
    pub outcome: usize,
    pub regressors: Vec<usize>,
    pub instruments: Vec<usize>,
}

impl LinearIvModel {
    /// Uses the column named `y`, columns starting with `x` and columns
    /// starting with `z`.
    pub fn from_column_names(data: &Dataset) -> Result<Self> {
        let outcome = data
            .column_index("y")
            .ok_or_else(|| Error::config("linear IV data needs a column named 'y'"))?;
        let pick = |prefix: char| -> Vec<usize> {
            data.columns()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.starts_with(prefix))
                .map(|(i, _)| i)
                .collect()
        };
        let regressors = pick('x');
        let instruments = pick('z');
        if regressors.is_empty() || instruments.is_empty() {
            return Err(Error::config("linear IV data needs 'x*' and 'z*' columns"));
        }
        if instruments.len() < regressors.len() {
            return Err(Error::config("linear IV needs at least as many instruments as regressors"));
        }
        Ok(LinearIvModel {
            outcome,
            regressors,
            instruments,
        })
    }
}

impl MomentModel for LinearIvModel {
    fn moment_dim(&self) -> usize {
        self.instruments.len()
    }

    fn param_dim(&self) -> usize {
        self.regressors.len()
    }

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64> {
        let fitted: f64 = self.regressors.iter().zip(theta.iter()).map(|(&c, b)| row[c] * b).sum();
        let resid = row[self.outcome] - fitted;
        DVector::from_iterator(self.instruments.len(), self.instruments.iter().map(|&c| row[c] * resid))
    }

    fn moment_jacobian(&self, row: &[f64], _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.affine_parts(row)?.1)
    }

    fn affine_parts(&self, row: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let k = self.instruments.len();
        let p = self.regressors.len();
        let a = DVector::from_iterator(k, self.instruments.iter().map(|&c| row[c] * row[self.outcome]));
        let b = DMatrix::from_fn(k, p, |i, j| -row[self.instruments[i]] * row[self.regressors[j]]);
        Some((a, b))
    }

    fn remainder(&self) -> Remainder {
        Remainder::Zero
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        require_columns(data, &[self.outcome], "linear IV outcome")?;
        require_columns(data, &self.regressors, "linear IV regressors")?;
        require_columns(data, &self.instruments, "linear IV instruments")
    }

    fn name(&self) -> String {
        "linear_iv".into()
    }
}

/// Interval bounds on a mean: `g = (x − θ, θ − y)`, so that
/// `E[x] ≤ θ ≤ E[y]` is the identified set.
#[derive(Debug, Clone)]
pub struct IntervalMeanModel {
    pub lower: usize,
    pub upper: usize,
}

impl IntervalMeanModel {
    pub fn from_column_names(data: &Dataset) -> Result<Self> {
        let lower = data
            .column_index("x")
            .ok_or_else(|| Error::config("interval data needs a column named 'x'"))?;
        let upper = data
            .column_index("y")
            .ok_or_else(|| Error::config("interval data needs a column named 'y'"))?;
        Ok(IntervalMeanModel { lower, upper })
    }
}

impl MomentModel for IntervalMeanModel {
    fn moment_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![row[self.lower] - theta[0], theta[0] - row[self.upper]])
    }

    fn moment_jacobian(&self, _row: &[f64], _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]))
    }

    fn affine_parts(&self, row: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        Some((
            DVector::from_vec(vec![row[self.lower], -row[self.upper]]),
            DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
        ))
    }

    /// With unit-norm test functions, `|t'(−1, 1)'| ≤ √2`.
    fn lipschitz(&self) -> Option<f64> {
        Some(std::f64::consts::SQRT_2)
    }

    fn remainder(&self) -> Remainder {
        Remainder::Zero
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        require_columns(data, &[self.lower, self.upper], "interval mean model")
    }

    fn name(&self) -> String {
        "interval_mean".into()
    }
}

/// Affine moments `g = A θ − b + D·row`.
#[derive(Debug, Clone)]
pub struct AffineMomentModel {
    slope: DMatrix<f64>,
    offset: DVector<f64>,
    loading: DMatrix<f64>,
}

impl AffineMomentModel {
    pub fn new(slope: DMatrix<f64>, offset: DVector<f64>, loading: DMatrix<f64>) -> Result<Self> {
        let k = slope.nrows();
        if k == 0 || slope.ncols() == 0 {
            return Err(Error::config("affine model needs k ≥ 1 and p ≥ 1"));
        }
        if offset.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: offset.len(),
                context: "affine model offset",
            });
        }
        if loading.nrows() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: loading.nrows(),
                context: "affine model loading rows",
            });
        }
        if slope.iter().chain(offset.iter()).chain(loading.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("affine model has non-finite coefficients"));
        }
        Ok(AffineMomentModel { slope, offset, loading })
    }

    pub fn slope(&self) -> &DMatrix<f64> {
        &self.slope
    }
}

impl MomentModel for AffineMomentModel {
    fn moment_dim(&self) -> usize {
        self.slope.nrows()
    }

    fn param_dim(&self) -> usize {
        self.slope.ncols()
    }

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.affine_parts(row).expect("affine");
        a + b * theta
    }

    fn moment_jacobian(&self, _row: &[f64], _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.slope.clone())
    }

    fn affine_parts(&self, row: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let y = DVector::from_row_slice(&row[..self.loading.ncols()]);
        Some((&self.loading * y - &self.offset, self.slope.clone()))
    }

    /// Spectral norm of `A`, valid for test functions of Euclidean norm ≤ 1.
    fn lipschitz(&self) -> Option<f64> {
        Some(self.slope.clone().svd(false, false).singular_values.max())
    }

    fn remainder(&self) -> Remainder {
        Remainder::Zero
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.width() < self.loading.ncols() {
            return Err(Error::config(format!(
                "affine model reads {} columns but the data has {}",
                self.loading.ncols(),
                data.width()
            )));
        }
        Ok(())
    }

    fn name(&self) -> String {
        "affine".into()
    }
}

/// Scalar sieve moments for `y = h(x) + ε` with `h(x) = Σ_j θ_j φ_j(x)`:
/// `g = y − φ(x)'θ`, where `φ_0 = 1` and `φ_j(x) = cos(j π (x + 1) / 2)`.
#[derive(Debug, Clone)]
pub struct SieveIvModel {
    pub outcome: usize,
    pub regressor: usize,
    pub basis_dim: usize,
}

impl SieveIvModel {
    pub fn basis(&self, x: f64) -> DVector<f64> {
        DVector::from_fn(self.basis_dim, |j, _| {
            if j == 0 {
                1.0
            } else {
                (j as f64 * std::f64::consts::PI * (x + 1.0) / 2.0).cos()
            }
        })
    }
}

impl MomentModel for SieveIvModel {
    fn moment_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        self.basis_dim
    }

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, row[self.outcome] - self.basis(row[self.regressor]).dot(theta))
    }

    fn moment_jacobian(&self, row: &[f64], _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.affine_parts(row)?.1)
    }

    fn affine_parts(&self, row: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let phi = self.basis(row[self.regressor]);
        Some((
            DVector::from_element(1, row[self.outcome]),
            DMatrix::from_fn(1, self.basis_dim, |_, j| -phi[j]),
        ))
    }

    /// `|cos|, |sin| ≤ 1` and `‖φ(x)‖ ≤ sqrt(basis_dim)`.
    fn lipschitz(&self) -> Option<f64> {
        Some((self.basis_dim as f64).sqrt())
    }

    fn remainder(&self) -> Remainder {
        Remainder::Zero
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        require_columns(data, &[self.outcome, self.regressor], "sieve IV model")
    }

    fn name(&self) -> String {
        "sieve_iv".into()
    }
}

type MomentFn = dyn Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&[f64], &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Moment model from closures, for models outside the built-in set.
pub struct FnMomentModel {
    k: usize,
    p: usize,
    moment: Box<MomentFn>,
    jacobian: Option<Box<JacobianFn>>,
    lipschitz: Option<f64>,
    remainder: Remainder,
    columns: usize,
}

impl fmt::Debug for FnMomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMomentModel")
            .field("k", &self.k)
            .field("p", &self.p)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl FnMomentModel {
    pub fn new(
        k: usize,
        p: usize,
        moment: impl Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        FnMomentModel {
            k,
            p,
            moment: Box::new(moment),
            jacobian: None,
            lipschitz: None,
            remainder: Remainder::Quadratic(1.0),
            columns: 0,
        }
    }

    /// Minimum number of data columns the closure reads.
    pub fn with_columns(mut self, columns: usize) -> Self {
        self.columns = columns;
        self
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&[f64], &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    pub fn with_lipschitz(mut self, bound: f64) -> Self {
        self.lipschitz = Some(bound);
        self
    }

    pub fn with_remainder(mut self, remainder: Remainder) -> Self {
        self.remainder = remainder;
        self
    }
}

impl MomentModel for FnMomentModel {
    fn moment_dim(&self) -> usize {
        self.k
    }

    fn param_dim(&self) -> usize {
        self.p
    }

    fn moment(&self, row: &[f64], theta: &DVector<f64>) -> DVector<f64> {
        (self.moment)(row, theta)
    }

    fn moment_jacobian(&self, row: &[f64], theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(row, theta))
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn remainder(&self) -> Remainder {
        self.remainder
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.width() < self.columns {
            return Err(Error::config(format!(
                "model reads {} columns but the data has {}",
                self.columns,
                data.width()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn linear_iv_affine_parts_reproduce_moment() {
        let m = LinearIvModel {
            outcome: 0,
            regressors: vec![1],
            instruments: vec![2, 3],
        };
        let row = [2.0, 0.5, 1.0, -1.5];
        let theta = v(&[0.7]);
        let (a, b) = m.affine_parts(&row).unwrap();
        assert!((a + b * &theta - m.moment(&row, &theta)).amax() < 1e-15);
        assert!((m.moment(&row, &theta) - v(&[1.65, -2.475])).amax() < 1e-12);
    }

    #[test]
    fn interval_moments() {
        let m = IntervalMeanModel { lower: 0, upper: 1 };
        assert_eq!(m.moment(&[-1.0, 2.0], &v(&[0.5])), v(&[-1.5, -1.5]));
    }

    #[test]
    fn affine_model_uses_loading() {
        let m = AffineMomentModel::new(
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        )
        .unwrap();
        let im = IntervalMeanModel { lower: 0, upper: 1 };
        let row = [0.3, 1.2];
        assert_eq!(m.moment(&row, &v(&[0.1])), im.moment(&row, &v(&[0.1])));
    }

    #[test]
    fn sieve_basis_starts_with_constant() {
        let m = SieveIvModel {
            outcome: 0,
            regressor: 1,
            basis_dim: 3,
        };
        let b = m.basis(1.0);
        assert_eq!(b[0], 1.0);
        assert!((b[1] - std::f64::consts::PI.cos()).abs() < 1e-15);
    }

    #[test]
    fn remainder_values() {
        assert_eq!(Remainder::Zero.at(0.3), 0.0);
        assert!((Remainder::Quadratic(2.0).at(0.5) - 0.5).abs() < 1e-15);
    }
}
