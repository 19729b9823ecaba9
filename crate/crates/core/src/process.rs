//! Sample criteria `v_n(θ, t)` and their multiplier-bootstrap analogues.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parking_lot::Mutex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{ExponentialFamily, TestFunction, TestFunctionFamily};
use crate::linalg::seeded_rng;
use crate::moment::MomentModel;
use crate::tuning::MultiplierKind;

/// Per-observation moments at one parameter value.
#[derive(Debug, Clone)]
pub struct MomentSample {
    pub theta: DVector<f64>,
    /// `n × k`, row `i` is `g(Y_i, θ)`.
    pub values: DMatrix<f64>,
    pub mean: DVector<f64>,
}

/// `g(Y_i, θ) = a_i + B_i θ` stored for every observation.
#[derive(Debug, Clone)]
struct AffinePanel {
    intercepts: DMatrix<f64>,
    slopes: Vec<DMatrix<f64>>,
    mean_intercept: DVector<f64>,
    mean_slope: DMatrix<f64>,
}

/// Evaluates `v_n`, `m_n` and bootstrap processes for one model, dataset and
/// test-function family.
pub struct EmpiricalEvaluator<'a> {
    model: &'a dyn MomentModel,
    data: &'a Dataset,
    family: &'a TestFunctionFamily,
    affine: Option<AffinePanel>,
    cache: Mutex<Option<Arc<MomentSample>>>,
}

impl std::fmt::Debug for EmpiricalEvaluator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmpiricalEvaluator")
            .field("model", &self.model.name())
            .field("n", &self.data.n())
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl<'a> EmpiricalEvaluator<'a> {
    pub fn new(model: &'a dyn MomentModel, data: &'a Dataset, family: &'a TestFunctionFamily) -> Result<Self> {
        let k = model.moment_dim();
        let p = model.param_dim();
        if k == 0 || p == 0 {
            return Err(Error::config("moment model needs k ≥ 1 and p ≥ 1"));
        }
        match family {
            TestFunctionFamily::Exponential(e) => {
                if k != 1 {
                    return Err(Error::Dimension {
                        expected: 1,
                        actual: k,
                        context: "trigonometric families pair with scalar moments",
                    });
                }
                if let Some(&c) = e.instruments.iter().find(|&&c| c >= data.width()) {
                    return Err(Error::config(format!(
                        "instrument column {c} is outside the data ({} columns)",
                        data.width()
                    )));
                }
            }
            _ => {
                let fk = family.moment_dim().expect("vector family");
                if fk != k {
                    return Err(Error::Dimension {
                        expected: k,
                        actual: fk,
                        context: "test-function dimension",
                    });
                }
            }
        }
        model.check_data(data)?;
        let affine = build_affine(model, data)?;
        Ok(EmpiricalEvaluator {
            model,
            data,
            family,
            affine,
            cache: Mutex::new(None),
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn k(&self) -> usize {
        self.model.moment_dim()
    }

    pub fn p(&self) -> usize {
        self.model.param_dim()
    }

    pub fn model(&self) -> &'a dyn MomentModel {
        self.model
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn family(&self) -> &'a TestFunctionFamily {
        self.family
    }

    pub fn is_affine(&self) -> bool {
        self.affine.is_some()
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::Dimension {
                expected: self.p(),
                actual: theta.len(),
                context: "parameter vector",
            });
        }
        Ok(())
    }

    /// Per-observation moments at `θ`, cached for the most recent `θ`.
    pub fn sample(&self, theta: &DVector<f64>) -> Result<Arc<MomentSample>> {
        self.check_theta(theta)?;
        if let Some(s) = self.cache.lock().as_ref() {
            if &s.theta == theta {
                return Ok(Arc::clone(s));
            }
        }
        let n = self.n();
        let k = self.k();
        let mut values = DMatrix::zeros(n, k);
        for i in 0..n {
            let g = match &self.affine {
                Some(a) => a.intercepts.row(i).transpose() + &a.slopes[i] * theta,
                None => self.model.moment(self.data.row(i), theta),
            };
            if g.len() != k {
                return Err(Error::Data {
                    row: i,
                    message: format!("moment has length {} instead of {k}", g.len()),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row: i,
                    message: format!("non-finite moment at θ = {:?}", theta.as_slice()),
                });
            }
            values.set_row(i, &g.transpose());
        }
        let mean = values.row_mean().transpose();
        let sample = Arc::new(MomentSample {
            theta: theta.clone(),
            values,
            mean,
        });
        *self.cache.lock() = Some(Arc::clone(&sample));
        Ok(sample)
    }

    /// `m_n(θ)`.
    pub fn mean_moment(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        match &self.affine {
            Some(a) => Ok(&a.mean_intercept + &a.mean_slope * theta),
            None => Ok(self.sample(theta)?.mean.clone()),
        }
    }

    /// Analytic `∇m_n(θ)` when the model provides one.
    pub fn analytic_jacobian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        if let Some(a) = &self.affine {
            return Some(a.mean_slope.clone());
        }
        let mut acc = DMatrix::zeros(self.k(), self.p());
        for row in self.data.rows() {
            acc += self.model.moment_jacobian(row, theta)?;
        }
        Some(acc / self.n() as f64)
    }

    /// Gradient of `θ ↦ v_n(θ, t)`, which is constant for affine models.
    pub fn affine_gradient(&self, t: &TestFunction) -> Option<DVector<f64>> {
        let a = self.affine.as_ref()?;
        match (t, self.family) {
            (TestFunction::Vector(t), _) => Some(a.mean_slope.transpose() * self.family.weighted(t)),
            (TestFunction::Trig { zeta, kind }, TestFunctionFamily::Exponential(e)) => {
                let mut acc = DVector::zeros(self.p());
                for (i, row) in self.data.rows().enumerate() {
                    acc += a.slopes[i].row(0).transpose() * e.eval(zeta, *kind, row);
                }
                Some(acc / self.n() as f64)
            }
            _ => None,
        }
    }

    /// Upper bound on the Lipschitz constant of `θ ↦ v_n(θ, t)` over the family:
    /// the model's declared bound, or for affine models the empirical one.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        if let Some(l) = self.model.lipschitz() {
            return Some(l);
        }
        let a = self.affine.as_ref()?;
        match self.family {
            TestFunctionFamily::WeightedBall(w) => {
                let root = w.weight().clone().cholesky()?.l();
                Some((root.transpose() * &a.mean_slope).svd(false, false).singular_values.max())
            }
            TestFunctionFamily::ConePolarBall(_) => Some(a.mean_slope.clone().svd(false, false).singular_values.max()),
            TestFunctionFamily::Finite(ts) => Some(
                ts.iter()
                    .map(|t| (a.mean_slope.transpose() * t).norm())
                    .fold(0.0, f64::max),
            ),
            TestFunctionFamily::Exponential(_) => {
                let mean_abs: f64 = a.slopes.iter().map(|s| s.norm()).sum::<f64>() / self.n() as f64;
                Some(mean_abs)
            }
        }
    }

    fn trig_family(&self) -> Result<&ExponentialFamily> {
        match self.family {
            TestFunctionFamily::Exponential(e) => Ok(e),
            _ => Err(Error::Precondition(
                "trigonometric test function used with a vector family".into(),
            )),
        }
    }

    /// Per-observation pairings `⟨t, g(Y_i, θ)⟩`.
    pub fn pairings(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<Vec<f64>> {
        let s = self.sample(theta)?;
        match t {
            TestFunction::Vector(t) => {
                self.check_vector(t)?;
                let pt = self.family.weighted(t);
                Ok((&s.values * pt).iter().copied().collect())
            }
            TestFunction::Trig { zeta, kind } => {
                let e = self.trig_family()?;
                Ok(self
                    .data
                    .rows()
                    .enumerate()
                    .map(|(i, row)| s.values[(i, 0)] * e.eval(zeta, *kind, row))
                    .collect())
            }
        }
    }

    fn check_vector(&self, t: &DVector<f64>) -> Result<()> {
        if t.len() != self.k() {
            return Err(Error::Dimension {
                expected: self.k(),
                actual: t.len(),
                context: "test function",
            });
        }
        Ok(())
    }

    /// `v_n(θ, t)`.
    pub fn v_n(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<f64> {
        match t {
            TestFunction::Vector(t) => {
                self.check_vector(t)?;
                Ok(self.family.pair(t, &self.mean_moment(theta)?))
            }
            TestFunction::Trig { .. } => {
                let p = self.pairings(theta, t)?;
                Ok(p.iter().sum::<f64>() / p.len() as f64)
            }
        }
    }

    /// `𝔾*_n(θ, t) = n^{−1/2} Σ ξ_i (⟨t, g_i(θ)⟩ − v_n(θ, t))`.
    pub fn multiplier_process(&self, theta: &DVector<f64>, t: &TestFunction, draw: &MultiplierDraw) -> Result<f64> {
        if draw.xi.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                actual: draw.xi.len(),
                context: "multiplier draw length",
            });
        }
        let p = self.pairings(theta, t)?;
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let total: f64 = p.iter().zip(&draw.xi).map(|(pi, xi)| xi * (pi - mean)).sum();
        Ok(total / (self.n() as f64).sqrt())
    }

    /// Precomputes what a draw needs so that `𝔾*_n` is cheap to evaluate
    /// across many `(θ, t)`.
    pub fn prepare_draw(&self, draw: &MultiplierDraw) -> Result<ProcessDraw> {
        let n = self.n();
        if draw.xi.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: draw.xi.len(),
                context: "multiplier draw length",
            });
        }
        let xi_mean = draw.xi.iter().sum::<f64>() / n as f64;
        let scale = 1.0 / (n as f64).sqrt();
        let weights: Vec<f64> = draw.xi.iter().map(|x| (x - xi_mean) * scale).collect();
        let affine = self.affine.as_ref().map(|a| {
            let mut w0 = DVector::zeros(self.k());
            let mut w1 = DMatrix::zeros(self.k(), self.p());
            for (i, c) in weights.iter().enumerate() {
                w0 += a.intercepts.row(i).transpose() * *c;
                w1 += &a.slopes[i] * *c;
            }
            (w0, w1)
        });
        Ok(ProcessDraw {
            weights: Arc::new(weights),
            affine,
        })
    }

    /// `𝔾*_n(θ)` as a moment-space vector, so that `𝔾*_n(θ, t) = ⟨t, ·⟩`.
    pub fn process_vector(&self, theta: &DVector<f64>, draw: &ProcessDraw) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        if let Some((w0, w1)) = &draw.affine {
            return Ok(w0 + w1 * theta);
        }
        let s = self.sample(theta)?;
        Ok(s.values.transpose() * DVector::from_column_slice(&draw.weights))
    }

    /// `𝔾*_n(θ, t)` for any test function.
    pub fn process_value(&self, theta: &DVector<f64>, t: &TestFunction, draw: &ProcessDraw) -> Result<f64> {
        match t {
            TestFunction::Vector(t) => {
                self.check_vector(t)?;
                Ok(self.family.pair(t, &self.process_vector(theta, draw)?))
            }
            TestFunction::Trig { .. } => {
                let p = self.pairings(theta, t)?;
                Ok(p.iter().zip(draw.weights.iter()).map(|(a, b)| a * b).sum())
            }
        }
    }
}

fn build_affine(model: &dyn MomentModel, data: &Dataset) -> Result<Option<AffinePanel>> {
    let (k, p, n) = (model.moment_dim(), model.param_dim(), data.n());
    if model.affine_parts(data.row(0)).is_none() {
        return Ok(None);
    }
    let mut intercepts = DMatrix::zeros(n, k);
    let mut slopes = Vec::with_capacity(n);
    for (i, row) in data.rows().enumerate() {
        let (a, b) = model.affine_parts(row).ok_or_else(|| Error::Data {
            row: i,
            message: "model is affine on some rows only".into(),
        })?;
        if a.len() != k || b.nrows() != k || b.ncols() != p {
            return Err(Error::Data {
                row: i,
                message: "affine moment parts have the wrong shape".into(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: i,
                message: "non-finite moment coefficients".into(),
            });
        }
        intercepts.set_row(i, &a.transpose());
        slopes.push(b);
    }
    let mean_intercept = intercepts.row_mean().transpose();
    let mean_slope = slopes.iter().fold(DMatrix::zeros(k, p), |acc, b| acc + b) / n as f64;
    Ok(Some(AffinePanel {
        intercepts,
        slopes,
        mean_intercept,
        mean_slope,
    }))
}

/// Multipliers `ξ_1, …, ξ_n` for one bootstrap replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierDraw {
    pub xi: Vec<f64>,
    pub kind: MultiplierKind,
    pub seed: u64,
    pub index: u64,
}

impl MultiplierDraw {
    /// Draw number `index` of the stream rooted at `seed`.
    pub fn generate(n: usize, kind: MultiplierKind, seed: u64, index: u64) -> Self {
        let mut rng = seeded_rng(seed, index.wrapping_add(1));
        let xi = (0..n)
            .map(|_| match kind {
                MultiplierKind::Gaussian => rng.sample::<f64, _>(StandardNormal),
                MultiplierKind::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect();
        MultiplierDraw { xi, kind, seed, index }
    }

    pub fn zeros(n: usize) -> Self {
        MultiplierDraw {
            xi: vec![0.0; n],
            kind: MultiplierKind::Gaussian,
            seed: 0,
            index: 0,
        }
    }
}

/// A multiplier draw prepared against one evaluator.
#[derive(Debug, Clone)]
pub struct ProcessDraw {
    /// `(ξ_i − ξ̄) / √n`.
    weights: Arc<Vec<f64>>,
    /// `(Σ c_i a_i, Σ c_i B_i)` for affine models.
    affine: Option<(DVector<f64>, DMatrix<f64>)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::{FnMomentModel, IntervalMeanModel, LinearIvModel};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_data(values: &[f64]) -> Dataset {
        Dataset::new(vec!["g".into()], values.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn passthrough() -> FnMomentModel {
        FnMomentModel::new(1, 1, |row, _| DVector::from_element(1, row[0]))
    }

    #[test]
    fn v_n_is_sample_mean() {
        let data = scalar_data(&[1.0, 3.0]);
        let model = passthrough();
        let family = TestFunctionFamily::finite(vec![v(&[1.0])]).unwrap();
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        assert_eq!(ev.v_n(&v(&[0.0]), &TestFunction::Vector(v(&[1.0]))).unwrap(), 2.0);
        assert_eq!(ev.v_n(&v(&[0.0]), &TestFunction::Vector(v(&[0.0]))).unwrap(), 0.0);
    }

    #[test]
    fn two_point_multiplier_example() {
        let data = scalar_data(&[0.0, 2.0]);
        let model = passthrough();
        let family = TestFunctionFamily::finite(vec![v(&[1.0])]).unwrap();
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let draw = MultiplierDraw {
            xi: vec![1.0, -1.0],
            ..MultiplierDraw::zeros(2)
        };
        let t = TestFunction::Vector(v(&[1.0]));
        let got = ev.multiplier_process(&v(&[0.0]), &t, &draw).unwrap();
        assert!((got + 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(ev.multiplier_process(&v(&[0.0]), &t, &MultiplierDraw::zeros(2)).unwrap(), 0.0);
        let short = MultiplierDraw::zeros(3);
        assert!(ev.multiplier_process(&v(&[0.0]), &t, &short).is_err());
    }

    #[test]
    fn constant_pairings_have_zero_process() {
        let data = scalar_data(&[4.0, 4.0, 4.0]);
        let model = passthrough();
        let family = TestFunctionFamily::unit_ball(1);
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let draw = MultiplierDraw::generate(3, MultiplierKind::Gaussian, 1, 0);
        let got = ev.multiplier_process(&v(&[0.0]), &TestFunction::Vector(v(&[1.0])), &draw).unwrap();
        assert!(got.abs() < 1e-12);
    }

    fn iv_fixture() -> Dataset {
        Dataset::from_csv_str("y,x,z1,z2\n1,0.5,1,0\n2,1,0,1\n-1,0.2,1,1\n0.5,-1,2,0.5\n3,2,-1,1\n").unwrap()
    }

    #[test]
    fn linear_iv_at_zero_is_mean_zy() {
        let data = iv_fixture();
        let model = LinearIvModel::from_column_names(&data).unwrap();
        let family = TestFunctionFamily::unit_ball(2);
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let t = v(&[0.6, -0.8]);
        let zy1 = (1.0 * 1.0 + 0.0 * 2.0 + 1.0 * -1.0 + 2.0 * 0.5 + -1.0 * 3.0) / 5.0;
        let zy2 = (0.0 * 1.0 + 1.0 * 2.0 + 1.0 * -1.0 + 0.5 * 0.5 + 1.0 * 3.0) / 5.0;
        let got = ev.v_n(&v(&[0.0]), &TestFunction::Vector(t)).unwrap();
        assert!((got - (0.6 * zy1 - 0.8 * zy2)).abs() < 1e-14);
    }

    #[test]
    fn affine_and_generic_paths_agree() {
        let data = iv_fixture();
        let model = LinearIvModel::from_column_names(&data).unwrap();
        let generic = FnMomentModel::new(2, 1, {
            let m = model.clone();
            move |row, th| m.moment(row, th)
        });
        let family = TestFunctionFamily::unit_ball(2);
        let fast = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let slow = EmpiricalEvaluator::new(&generic, &data, &family).unwrap();
        assert!(fast.is_affine() && !slow.is_affine());
        let draw = MultiplierDraw::generate(5, MultiplierKind::Rademacher, 9, 3);
        let (pf, ps) = (fast.prepare_draw(&draw).unwrap(), slow.prepare_draw(&draw).unwrap());
        for th in [-1.0, 0.3, 2.0] {
            let th = v(&[th]);
            assert!((fast.mean_moment(&th).unwrap() - slow.mean_moment(&th).unwrap()).amax() < 1e-14);
            let a = fast.process_vector(&th, &pf).unwrap();
            let b = slow.process_vector(&th, &ps).unwrap();
            assert!((a - b).amax() < 1e-13);
            let t = TestFunction::Vector(v(&[0.3, 0.7]));
            let direct = slow.multiplier_process(&th, &t, &draw).unwrap();
            assert!((fast.process_value(&th, &t, &pf).unwrap() - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn linearity_in_t() {
        let data = iv_fixture();
        let model = LinearIvModel::from_column_names(&data).unwrap();
        let (t1, t2) = (v(&[1.0, 0.0]), v(&[0.2, -0.5]));
        let family = TestFunctionFamily::finite(vec![t1.clone(), t2.clone()]).unwrap();
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let th = v(&[0.4]);
        let f = |t: DVector<f64>| ev.v_n(&th, &TestFunction::Vector(t)).unwrap();
        let (a, b) = (0.3, 0.7);
        assert!((f(&t1 * a + &t2 * b) - a * f(t1.clone()) - b * f(t2.clone())).abs() < 1e-12);
    }

    #[test]
    fn non_finite_moment_names_row() {
        let data = scalar_data(&[1.0, 0.0, 2.0]);
        let model = FnMomentModel::new(1, 1, |row, _| DVector::from_element(1, 1.0 / row[0]));
        let family = TestFunctionFamily::unit_ball(1);
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        match ev.v_n(&v(&[0.0]), &TestFunction::Vector(v(&[1.0]))).unwrap_err() {
            Error::Data { row, .. } => assert_eq!(row, 1),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn bootstrap_centering_and_variance() {
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![((i * 37) % 101) as f64 / 50.0, 1.0]).collect();
        let data = Dataset::new(vec!["x".into(), "y".into()], rows).unwrap();
        let model = IntervalMeanModel { lower: 0, upper: 1 };
        let family = TestFunctionFamily::unit_ball(2);
        let ev = EmpiricalEvaluator::new(&model, &data, &family).unwrap();
        let th = v(&[0.5]);
        let t = TestFunction::Vector(v(&[0.8, 0.6]));
        let b = 2000;
        let vals: Vec<f64> = (0..b)
            .map(|i| {
                let d = MultiplierDraw::generate(n, MultiplierKind::Gaussian, 11, i);
                ev.multiplier_process(&th, &t, &d).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / b as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        assert!(mean.abs() <= 4.0 * var.sqrt() / (b as f64).sqrt());
        let p = ev.pairings(&th, &t).unwrap();
        let pm = p.iter().sum::<f64>() / n as f64;
        let target = p.iter().map(|x| (x - pm).powi(2)).sum::<f64>() / n as f64;
        assert!((var / target - 1.0).abs() < 0.15, "{var} vs {target}");
    }

    #[test]
    fn rademacher_values_and_determinism() {
        let d = MultiplierDraw::generate(100, MultiplierKind::Rademacher, 5, 2);
        assert!(d.xi.iter().all(|&x| x == 1.0 || x == -1.0));
        assert_eq!(d, MultiplierDraw::generate(100, MultiplierKind::Rademacher, 5, 2));
        assert_ne!(d.xi, MultiplierDraw::generate(100, MultiplierKind::Rademacher, 5, 3).xi);
    }

    #[test]
    fn gaussian_moments_settle() {
        let d = MultiplierDraw::generate(20_000, MultiplierKind::Gaussian, 3, 0);
        let m = d.xi.iter().sum::<f64>() / 20_000.0;
        let v = d.xi.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20_000.0;
        assert!(m.abs() < 0.03 && (v - 1.0).abs() < 0.05);
    }
}
