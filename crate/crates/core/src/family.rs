//! Test-function families `𝒯` and their pairings with moment vectors.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::derivative::k_projector;
use crate::error::{Error, Result};
use crate::geometry::{FinitelyGeneratedCone, PolarCone};

/// A single test function.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Linear functional on `ℝ^k`, paired through the family's bilinear form.
    Vector(DVector<f64>),
    /// `z ↦ cos(ζ·z)` or `z ↦ sin(ζ·z)` on the instrument columns.
    Trig { zeta: DVector<f64>, kind: TrigKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrigKind {
    Cos,
    Sin,
}

impl TrigKind {
    pub fn eval(self, arg: f64) -> f64 {
        match self {
            TrigKind::Cos => arg.cos(),
            TrigKind::Sin => arg.sin(),
        }
    }
}

impl TestFunction {
    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            TestFunction::Vector(t) => Some(t),
            TestFunction::Trig { .. } => None,
        }
    }
}

/// `{t : t'Wt ≤ 1}` paired with moments through `t'W m`, so that the
/// supremum is `‖m‖_W = sqrt(m'Wm)`.
#[derive(Debug, Clone)]
pub struct WeightedBall {
    weight: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl WeightedBall {
    pub fn new(weight: DMatrix<f64>) -> Result<Self> {
        let k = weight.nrows();
        if k == 0 || weight.ncols() != k {
            return Err(Error::config("weighting matrix must be square and nonempty"));
        }
        if weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("weighting matrix has non-finite entries"));
        }
        let scale = weight.amax().max(1e-300);
        if (&weight - weight.transpose()).amax() > 1e-12 * scale {
            return Err(Error::config("weighting matrix is not symmetric"));
        }
        let sym = (&weight + weight.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::config("weighting matrix is not positive definite"));
        }
        let eig = SymmetricEigen::new(sym.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 1e-14 * scale) {
            return Err(Error::config("weighting matrix is numerically singular"));
        }
        let root = |f: fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        };
        Ok(WeightedBall {
            sqrt: root(f64::sqrt),
            inv_sqrt: root(|l| 1.0 / l.sqrt()),
            weight: sym,
        })
    }

    pub fn identity(k: usize) -> Self {
        WeightedBall {
            weight: DMatrix::identity(k, k),
            sqrt: DMatrix::identity(k, k),
            inv_sqrt: DMatrix::identity(k, k),
        }
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn norm(&self, m: &DVector<f64>) -> f64 {
        m.dot(&(&self.weight * m)).max(0.0).sqrt()
    }
}

/// `C° ∩ {‖t‖ ≤ 1}` paired through the Euclidean inner product, so that the
/// supremum is the distance to `C`.
#[derive(Debug, Clone)]
pub struct ConeBall {
    cone: FinitelyGeneratedCone,
    polar: PolarCone,
    probes: OnceLock<Vec<DVector<f64>>>,
}

impl ConeBall {
    pub fn new(cone: FinitelyGeneratedCone) -> Self {
        ConeBall {
            polar: cone.polar(),
            cone,
            probes: OnceLock::new(),
        }
    }

    pub fn cone(&self) -> &FinitelyGeneratedCone {
        &self.cone
    }

    pub fn polar(&self) -> &PolarCone {
        &self.polar
    }
}

/// Trigonometric test functions indexed by `ζ ∈ [−L, L]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFamily {
    pub half_width: f64,
    /// Data columns holding the instruments `Z`.
    pub instruments: Vec<usize>,
    /// Grid points per index axis before refinement.
    pub grid: usize,
}

/// Cap on the index grid size of the exponential family.
pub const MAX_GRID_POINTS: usize = 1 << 20;

impl ExponentialFamily {
    pub fn new(half_width: f64, instruments: Vec<usize>, grid: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::config("exponential family index half-width must be positive"));
        }
        if instruments.is_empty() {
            return Err(Error::config("exponential family needs at least one instrument column"));
        }
        if grid < 2 {
            return Err(Error::config("exponential family grid needs at least two points per axis"));
        }
        let points = (grid as f64).powi(instruments.len() as i32);
        if points > MAX_GRID_POINTS as f64 {
            return Err(Error::config(format!(
                "exponential index grid would have {points:.0} points; at most {MAX_GRID_POINTS} are supported"
            )));
        }
        Ok(ExponentialFamily {
            half_width,
            instruments,
            grid,
        })
    }

    pub fn index_dim(&self) -> usize {
        self.instruments.len()
    }

    /// Regular grid over the index box.
    pub fn index_grid(&self) -> Vec<DVector<f64>> {
        self.grid_with(self.grid)
    }

    pub(crate) fn grid_with(&self, points: usize) -> Vec<DVector<f64>> {
        let d = self.index_dim();
        let total = points.pow(d as u32);
        let step = 2.0 * self.half_width / (points - 1) as f64;
        (0..total)
            .map(|flat| {
                let mut rem = flat;
                DVector::from_fn(d, |_, _| {
                    let j = rem % points;
                    rem /= points;
                    -self.half_width + step * j as f64
                })
            })
            .collect()
    }

    /// `t(z)` for a row of data.
    pub fn eval(&self, zeta: &DVector<f64>, kind: TrigKind, row: &[f64]) -> f64 {
        let arg: f64 = self
            .instruments
            .iter()
            .zip(zeta.iter())
            .map(|(&c, z)| row[c] * z)
            .sum();
        kind.eval(arg)
    }
}

/// The set `𝒯` of test functions.
#[derive(Debug, Clone)]
pub enum TestFunctionFamily {
    WeightedBall(WeightedBall),
    ConePolarBall(ConeBall),
    Finite(Vec<DVector<f64>>),
    Exponential(ExponentialFamily),
}

/// Closed-form (or enumerated) supremum of a vector pairing.
#[derive(Debug, Clone)]
pub struct VectorSup {
    pub value: f64,
    pub argmax: DVector<f64>,
}

impl TestFunctionFamily {
    pub fn weighted_ball(weight: DMatrix<f64>) -> Result<Self> {
        WeightedBall::new(weight).map(TestFunctionFamily::WeightedBall)
    }

    pub fn unit_ball(k: usize) -> Self {
        TestFunctionFamily::WeightedBall(WeightedBall::identity(k))
    }

    pub fn cone_polar_ball(cone: FinitelyGeneratedCone) -> Self {
        TestFunctionFamily::ConePolarBall(ConeBall::new(cone))
    }

    pub fn finite(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::config("finite test-function family must be nonempty"));
        };
        let k = first.len();
        if k == 0 {
            return Err(Error::config("test functions must have positive dimension"));
        }
        for t in &vectors {
            if t.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    actual: t.len(),
                    context: "finite family member",
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("finite family member is not finite"));
            }
        }
        Ok(TestFunctionFamily::Finite(vectors))
    }

    pub fn exponential(half_width: f64, instruments: Vec<usize>, grid: usize) -> Result<Self> {
        ExponentialFamily::new(half_width, instruments, grid).map(TestFunctionFamily::Exponential)
    }

    /// Moment dimension expected by a vector family; `None` for the
    /// trigonometric family, which pairs with scalar moments.
    pub fn moment_dim(&self) -> Option<usize> {
        match self {
            TestFunctionFamily::WeightedBall(w) => Some(w.weight.nrows()),
            TestFunctionFamily::ConePolarBall(c) => Some(c.cone.dim()),
            TestFunctionFamily::Finite(ts) => Some(ts[0].len()),
            TestFunctionFamily::Exponential(_) => None,
        }
    }

    /// `P t` where the pairing is `⟨t, m⟩ = (P t)·m`.
    pub fn weighted(&self, t: &DVector<f64>) -> DVector<f64> {
        match self {
            TestFunctionFamily::WeightedBall(w) => &w.weight * t,
            _ => t.clone(),
        }
    }

    /// Bilinear pairing of a vector test function with a moment vector.
    pub fn pair(&self, t: &DVector<f64>, m: &DVector<f64>) -> f64 {
        match self {
            TestFunctionFamily::WeightedBall(w) => t.dot(&(&w.weight * m)),
            _ => t.dot(m),
        }
    }

    pub fn contains_zero(&self) -> bool {
        match self {
            TestFunctionFamily::WeightedBall(_) | TestFunctionFamily::ConePolarBall(_) => true,
            TestFunctionFamily::Finite(ts) => ts.iter().any(|t| t.iter().all(|&v| v == 0.0)),
            TestFunctionFamily::Exponential(_) => false,
        }
    }

    /// Whether `t` is a member (vector families only).
    pub fn contains(&self, t: &DVector<f64>, tol: f64) -> bool {
        match self {
            TestFunctionFamily::WeightedBall(w) => w.norm(t) <= 1.0 + tol,
            TestFunctionFamily::ConePolarBall(c) => t.norm() <= 1.0 + tol && c.polar.contains(t, tol),
            TestFunctionFamily::Finite(ts) => ts.iter().any(|s| (s - t).amax() <= tol),
            TestFunctionFamily::Exponential(_) => false,
        }
    }

    /// Supremum of `⟨t, m⟩` over the family, in closed form.
    pub fn sup_vector(&self, m: &DVector<f64>) -> Result<VectorSup> {
        let k = self.moment_dim().ok_or_else(|| {
            Error::Precondition("vector supremum requested from the trigonometric family".into())
        })?;
        if m.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: m.len(),
                context: "moment vector",
            });
        }
        match self {
            TestFunctionFamily::WeightedBall(w) => {
                let value = w.norm(m);
                let argmax = if value > 0.0 { m / value } else { DVector::zeros(k) };
                Ok(VectorSup { value, argmax })
            }
            TestFunctionFamily::ConePolarBall(c) => {
                let residual = m - c.cone.project(m)?;
                let value = residual.norm();
                let argmax = if value > 0.0 { residual / value } else { DVector::zeros(k) };
                Ok(VectorSup { value, argmax })
            }
            TestFunctionFamily::Finite(ts) => {
                let (j, value) = ts
                    .iter()
                    .enumerate()
                    .map(|(j, t)| (j, t.dot(m)))
                    .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                Ok(VectorSup {
                    value,
                    argmax: ts[j].clone(),
                })
            }
            TestFunctionFamily::Exponential(_) => unreachable!(),
        }
    }

    /// Maximiser of `⟨t, m⟩` over family members with `J'(P t) = 0`, i.e. the
    /// test functions annihilating the image of the Jacobian `J` (`k × p`).
    ///
    /// Returns `None` for families without a closed form.
    pub fn restricted_argmax(&self, m: &DVector<f64>, jacobian: &DMatrix<f64>) -> Result<Option<DVector<f64>>> {
        match self {
            TestFunctionFamily::WeightedBall(w) => {
                let a = &w.sqrt * m;
                let projector = k_projector(&(&w.sqrt * jacobian));
                let s = projector * a;
                let norm = s.norm();
                if norm <= 1e-300 {
                    return Ok(Some(DVector::zeros(m.len())));
                }
                Ok(Some(&w.inv_sqrt * (s / norm)))
            }
            TestFunctionFamily::ConePolarBall(c) => {
                let extra = jacobian
                    .column_iter()
                    .flat_map(|col| [col.into_owned(), -col.into_owned()]);
                let enlarged = c.cone.extended(extra)?;
                let residual = m - enlarged.project(m)?;
                let norm = residual.norm();
                if norm <= 1e-300 {
                    return Ok(Some(DVector::zeros(m.len())));
                }
                Ok(Some(residual / norm))
            }
            TestFunctionFamily::Finite(_) | TestFunctionFamily::Exponential(_) => Ok(None),
        }
    }

    /// Rescales a nonzero member onto the boundary of the family, where
    /// positively homogeneous objectives attain their positive values.
    pub fn to_boundary(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        let norm = match self {
            TestFunctionFamily::WeightedBall(w) => w.norm(t),
            TestFunctionFamily::ConePolarBall(_) => t.norm(),
            _ => return None,
        };
        (norm > 1e-300).then(|| t / norm)
    }

    /// Fixed probe set used where no closed-form supremum exists.
    pub fn probes(&self) -> Vec<TestFunction> {
        match self {
            TestFunctionFamily::WeightedBall(w) => {
                let k = w.weight.nrows();
                let mut dirs = Vec::new();
                for i in 0..k {
                    for sign in [1.0, -1.0] {
                        let mut e = DVector::zeros(k);
                        e[i] = sign;
                        dirs.push(e);
                    }
                }
                if k <= 4 {
                    for mask in 0..(1usize << k) {
                        let u = DVector::from_fn(k, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
                        dirs.push(u / (k as f64).sqrt());
                    }
                }
                let mut out: Vec<TestFunction> = dirs
                    .into_iter()
                    .map(|u| TestFunction::Vector(&w.inv_sqrt * u))
                    .collect();
                out.push(TestFunction::Vector(DVector::zeros(k)));
                out
            }
            TestFunctionFamily::ConePolarBall(c) => {
                let probes = c.probes.get_or_init(|| {
                    let k = c.cone.dim();
                    let mut seeds: Vec<DVector<f64>> = c.cone.generators().iter().map(|g| -g.clone()).collect();
                    for i in 0..k {
                        for sign in [1.0, -1.0] {
                            let mut e = DVector::zeros(k);
                            e[i] = sign;
                            seeds.push(e);
                        }
                    }
                    let mut out: Vec<DVector<f64>> = vec![DVector::zeros(k)];
                    for s in seeds {
                        let p = c.polar.project(&s);
                        let n = p.norm();
                        if n > 1e-9 {
                            let u = p / n;
                            if !out.iter().any(|q| (q - &u).norm() < 1e-9) {
                                out.push(u);
                            }
                        }
                    }
                    out
                });
                probes.iter().cloned().map(TestFunction::Vector).collect()
            }
            TestFunctionFamily::Finite(ts) => ts.iter().cloned().map(TestFunction::Vector).collect(),
            TestFunctionFamily::Exponential(e) => e
                .index_grid()
                .into_iter()
                .flat_map(|zeta| {
                    [
                        TestFunction::Trig {
                            zeta: zeta.clone(),
                            kind: TrigKind::Cos,
                        },
                        TestFunction::Trig { zeta, kind: TrigKind::Sin },
                    ]
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn weighted_ball_sup_is_weighted_norm() {
        let f = TestFunctionFamily::unit_ball(2);
        let s = f.sup_vector(&v(&[3.0, 4.0])).unwrap();
        assert!((s.value - 5.0).abs() < 1e-14);
        assert!((s.argmax - v(&[0.6, 0.8])).norm() < 1e-14);

        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = TestFunctionFamily::weighted_ball(w.clone()).unwrap();
        let m = v(&[1.0, -2.0]);
        let s = f.sup_vector(&m).unwrap();
        assert!((s.value - m.dot(&(&w * &m)).sqrt()).abs() < 1e-14);
        assert!((f.pair(&s.argmax, &m) - s.value).abs() < 1e-12);
        assert!(f.contains(&s.argmax, 1e-12));
    }

    #[test]
    fn zero_moment_gives_zero_sup() {
        let m = DVector::zeros(2);
        for f in [
            TestFunctionFamily::unit_ball(2),
            TestFunctionFamily::cone_polar_ball(FinitelyGeneratedCone::orthant(2, 1.0)),
        ] {
            assert_eq!(f.sup_vector(&m).unwrap().value, 0.0);
        }
        let f = TestFunctionFamily::finite(vec![v(&[1.0, 0.0]), v(&[0.0, -1.0])]).unwrap();
        assert_eq!(f.sup_vector(&m).unwrap().value, 0.0);
    }

    #[test]
    fn cone_family_sup_is_distance() {
        let f = TestFunctionFamily::cone_polar_ball(FinitelyGeneratedCone::orthant(2, 1.0));
        let s = f.sup_vector(&v(&[1.0, -2.0])).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
        assert!((s.argmax - v(&[0.0, -1.0])).norm() < 1e-12);
    }

    #[test]
    fn invalid_families_are_rejected() {
        assert!(TestFunctionFamily::finite(vec![]).is_err());
        assert!(TestFunctionFamily::weighted_ball(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(TestFunctionFamily::weighted_ball(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(TestFunctionFamily::exponential(0.0, vec![0], 64).is_err());
    }

    #[test]
    fn restricted_argmax_annihilates_jacobian() {
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
        let f = TestFunctionFamily::weighted_ball(w.clone()).unwrap();
        let j = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.5]);
        let m = v(&[0.4, 1.0, -0.7]);
        let t = f.restricted_argmax(&m, &j).unwrap().unwrap();
        assert!((j.transpose() * (&w * &t)).amax() < 1e-12);
        assert!((f.sup_vector(&t).unwrap().value - 1.0).abs() < 1e-12);
        // brute force over the constrained ellipse slice
        let s = f.pair(&t, &m);
        let basis = {
            let wj = &w * &j;
            let a = v(&[1.0, 0.0, 0.0]);
            let b = v(&[0.0, 1.0, 0.0]);
            let c = v(&[0.0, 0.0, 1.0]);
            let mut out = Vec::new();
            for cand in [a, b, c] {
                let mut x = cand.clone() - &wj * (wj.column(0).dot(&cand) / wj.column(0).norm_squared());
                for q in &out {
                    let q: &DVector<f64> = q;
                    x -= q * q.dot(&x);
                }
                if x.norm() > 1e-8 {
                    out.push(&x / x.norm());
                }
            }
            out
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..3600 {
            let ang = i as f64 * std::f64::consts::TAU / 3600.0;
            let d = &basis[0] * ang.cos() + &basis[1] * ang.sin();
            let d = f.to_boundary(&d).unwrap();
            best = best.max(f.pair(&d, &m));
        }
        assert!(s >= best - 1e-9 && s <= best + 1e-4, "{s} vs {best}");
    }

    #[test]
    fn cone_probes_lie_in_family() {
        let gens = vec![v(&[1.0, 0.2]), v(&[0.3, 1.0])];
        let f = TestFunctionFamily::cone_polar_ball(FinitelyGeneratedCone::new(2, gens).unwrap());
        let probes = f.probes();
        assert!(probes.len() >= 3);
        for p in probes {
            assert!(f.contains(p.as_vector().unwrap(), 1e-9));
        }
    }

    #[test]
    fn exponential_grid_covers_index_box() {
        let e = ExponentialFamily::new(2.0, vec![1, 2], 5).unwrap();
        let g = e.index_grid();
        assert_eq!(g.len(), 25);
        assert!(g.iter().any(|z| (z - v(&[-2.0, -2.0])).norm() < 1e-12));
        assert!(g.iter().any(|z| (z - v(&[2.0, 2.0])).norm() < 1e-12));
        assert!((e.eval(&v(&[1.0, 0.5]), TrigKind::Cos, &[9.0, 0.3, 0.2]) - 0.4f64.cos()).abs() < 1e-15);
    }
}
