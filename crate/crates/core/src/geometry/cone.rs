use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dykstra_halfspaces, lstsq};

/// Upper bound on the number of generators a cone may carry.
pub const MAX_GENERATORS: usize = 64;

/// Cone `{V λ : λ ≥ 0}` spanned by a finite list of generators in `ℝ^k`.
///
/// An empty generator list is the trivial cone `{0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitelyGeneratedCone {
    dim: usize,
    generators: Vec<DVector<f64>>,
}

impl FinitelyGeneratedCone {
    pub fn new(dim: usize, generators: Vec<DVector<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("cone dimension must be positive"));
        }
        if generators.len() > MAX_GENERATORS {
            return Err(Error::config(format!(
                "cone has {} generators; at most {MAX_GENERATORS} are supported",
                generators.len()
            )));
        }
        for g in &generators {
            if g.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: g.len(),
                    context: "cone generator",
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("cone generator is not finite"));
            }
        }
        Ok(FinitelyGeneratedCone { dim, generators })
    }

    /// `ℝ^k_+` (sign = 1) or `ℝ^k_-` (sign = -1).
    pub fn orthant(dim: usize, sign: f64) -> Self {
        let generators = (0..dim)
            .map(|i| {
                let mut e = DVector::zeros(dim);
                e[i] = sign.signum();
                e
            })
            .collect();
        FinitelyGeneratedCone { dim, generators }
    }

    /// Cone generated by the rows of `rows`.
    pub fn from_rows(rows: &DMatrix<f64>) -> Result<Self> {
        let gens = (0..rows.nrows()).map(|i| rows.row(i).transpose()).collect();
        Self::new(rows.ncols(), gens)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    /// The same cone with extra generators appended.
    pub fn extended(&self, extra: impl IntoIterator<Item = DVector<f64>>) -> Result<Self> {
        let mut generators = self.generators.clone();
        generators.extend(extra);
        Self::new(self.dim, generators)
    }

    pub fn polar(&self) -> PolarCone {
        PolarCone {
            dim: self.dim,
            normals: self.generators.clone(),
        }
    }

    /// Nonnegative coefficients `λ` with `V λ` the projection of `x`.
    pub fn project_coefficients(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
                context: "point projected onto cone",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("cannot project a non-finite point".into()));
        }
        if self.generators.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let v = DMatrix::from_columns(&self.generators);
        nnls(&v, x)
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let coef = self.project_coefficients(x)?;
        Ok(self.combine(&coef))
    }

    fn combine(&self, coef: &DVector<f64>) -> DVector<f64> {
        self.generators
            .iter()
            .zip(coef.iter())
            .fold(DVector::zeros(self.dim), |acc, (g, &c)| acc + g * c)
    }

    /// Membership up to `tol·(1 + ‖x‖)` in Euclidean distance.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self.project(x) {
            Ok(p) => (x - p).norm() <= tol * (1.0 + x.norm()),
            Err(_) => false,
        }
    }
}

/// `C° = {y : ⟨v_j, y⟩ ≤ 0 for every generator v_j}` in halfspace form.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCone {
    dim: usize,
    normals: Vec<DVector<f64>>,
}

impl PolarCone {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.normals
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.normals.iter().all(|v| v.dot(y) <= tol * (1.0 + v.norm() * y.norm()))
    }

    /// Euclidean projection through the halfspace description only: a primal
    /// active-set method, with Dykstra's scheme as a fallback.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        if let Some(p) = self.project_active_set(y) {
            return p;
        }
        let offsets = vec![0.0; self.normals.len()];
        dykstra_halfspaces(y, &self.normals, &offsets, 1e-14, 200_000).point
    }

    fn project_active_set(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let normals: Vec<&DVector<f64>> = self.normals.iter().filter(|a| a.norm() > 0.0).collect();
        let scale = 1.0 + x.norm();
        let tol = 1e-12 * scale;
        let stack = |working: &[usize]| DMatrix::from_columns(&working.iter().map(|&j| normals[j].clone()).collect::<Vec<_>>());
        let mut y = DVector::zeros(self.dim);
        let mut working: Vec<usize> = Vec::new();
        for _ in 0..50 * (normals.len() + 1) {
            let target = if working.is_empty() {
                x.clone()
            } else {
                let a = stack(&working);
                x - &a * lstsq(&a, x)
            };
            let d = &target - &y;
            if d.norm() <= tol {
                if working.is_empty() {
                    return Some(y);
                }
                // Multipliers of y − x + Σ μ_j a_j = 0 over the working set.
                let a = stack(&working);
                let mu = lstsq(&a, &(x - &y));
                let (worst, value) = mu
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &m)| if m < acc.1 { (i, m) } else { acc });
                if value >= -1e-12 * scale {
                    return Some(y);
                }
                working.remove(worst);
                continue;
            }
            let mut step = 1.0;
            let mut blocking = None;
            for (j, a) in normals.iter().enumerate() {
                if working.contains(&j) {
                    continue;
                }
                let rate = a.dot(&d);
                if rate > 1e-15 * a.norm() * d.norm() {
                    let room = (-a.dot(&y)).max(0.0) / rate;
                    if room < step {
                        step = room;
                        blocking = Some(j);
                    }
                }
            }
            y += &d * step;
            if let Some(j) = blocking {
                working.push(j);
            }
        }
        None
    }

    /// Projection onto `C° ∩ {‖y‖ ≤ 1}`: for a cone intersected with a ball
    /// centred at the apex this is the cone projection, rescaled.
    pub fn project_ball(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.project(y);
        let n = p.norm();
        if n > 1.0 {
            p / n
        } else {
            p
        }
    }
}

/// Lawson–Hanson active-set nonnegative least squares,
/// `argmin_{λ ≥ 0} ‖A λ − b‖`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = a.ncols();
    let scale = a.abs().max() * b.norm().max(1.0);
    let tol = 1e-12 * scale.max(1e-300);
    let cap = 50 * m.max(1);
    let mut x = DVector::<f64>::zeros(m);
    let mut passive = vec![false; m];
    // Columns whose entry was immediately undone; skipped until another column enters.
    let mut blocked = vec![false; m];
    let mut iterations = 0;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_columns(&idx.iter().map(|&j| a.column(j).into_owned()).collect::<Vec<_>>());
        let s = lstsq(&sub, b);
        let mut full = DVector::zeros(m);
        for (pos, &j) in idx.iter().enumerate() {
            full[j] = s[pos];
        }
        full
    };

    loop {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..m)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(enter) = candidate else { break };
        passive[enter] = true;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::numerical(
                    format!("nonnegative least squares exceeded {cap} iterations"),
                    Some(x.iter().copied().collect()),
                ));
            }
            let s = solve_passive(&passive);
            if (0..m).filter(|&j| passive[j]).all(|j| s[j] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..m {
                if passive[j] && s[j] <= 0.0 {
                    let denom = x[j] - s[j];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            x = &x + (s - &x) * alpha;
            for j in 0..m {
                if passive[j] && x[j] <= 1e-14 * (1.0 + x.amax()) {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        if passive[enter] {
            blocked.iter_mut().for_each(|b| *b = false);
        } else {
            blocked[enter] = true;
        }
    }
    Ok(x.map(|v| v.max(0.0)))
}

/// `Π_C x`, the closest point of the cone to `x`.
pub fn project_cone(x: &DVector<f64>, cone: &FinitelyGeneratedCone) -> Result<DVector<f64>> {
    cone.project(x)
}

/// `‖x − Π_C x‖` computed from the generators.
pub fn distance_primal(x: &DVector<f64>, cone: &FinitelyGeneratedCone) -> Result<f64> {
    Ok((x - cone.project(x)?).norm())
}

/// `sup {⟨x, y⟩ : y ∈ C°, ‖y‖ ≤ 1}` computed from the halfspace description of
/// the polar by projected ascent; never touches the generator coefficients.
pub fn distance_dual(x: &DVector<f64>, cone: &FinitelyGeneratedCone) -> Result<f64> {
    if x.len() != cone.dim() {
        return Err(Error::Dimension {
            expected: cone.dim(),
            actual: x.len(),
            context: "point for dual distance",
        });
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let polar = cone.polar();
    let base_step = 1e4 / norm;
    let mut y = DVector::zeros(x.len());
    let mut best = 0.0f64;
    for k in 1..=200 {
        let step = base_step / (k as f64).sqrt();
        let next = polar.project_ball(&(&y + x * step));
        let value = x.dot(&next);
        if value > best && polar.contains(&next, 1e-9) {
            best = value;
        }
        let moved = (&next - &y).norm();
        y = next;
        if moved <= 1e-12 {
            break;
        }
    }
    Ok(best.max(0.0))
}
