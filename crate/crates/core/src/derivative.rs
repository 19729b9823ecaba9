//! Jacobians of `m_n`, the finite-difference derivative norm `ψ̂_n` and its
//! Lagrangian form `ψ̃_n`, and the projector onto the orthogonal complement
//! of a Jacobian's column space.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::TestFunction;
use crate::geometry::ProcessProbe;
use crate::optim::NelderMead;
use crate::process::EmpiricalEvaluator;
use crate::space::ParameterSpace;

#[derive(Debug, Clone, PartialEq)]
pub enum JacobianMethod {
    Analytic,
    /// Per-coordinate steps.
    CentralDifference(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct JacobianEstimate {
    /// `k × p`.
    pub matrix: DMatrix<f64>,
    pub method: JacobianMethod,
}

/// Step used for coordinate `θ_i`.
pub fn difference_step(theta_i: f64) -> f64 {
    (1e-7 * (1.0 + theta_i.abs())).max(1e-6)
}

/// Central-difference Jacobian of any vector map.
pub fn central_difference<F>(f: F, theta: &DVector<f64>) -> Result<JacobianEstimate>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let p = theta.len();
    let mut columns = Vec::with_capacity(p);
    let mut steps = Vec::with_capacity(p);
    for i in 0..p {
        let h = difference_step(theta[i]);
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[i] += h;
        down[i] -= h;
        let col = (f(&up)? - f(&down)?) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                format!("non-finite difference quotient in coordinate {i}"),
                Some(theta.as_slice().to_vec()),
            ));
        }
        columns.push(col);
        steps.push(h);
    }
    Ok(JacobianEstimate {
        matrix: DMatrix::from_columns(&columns),
        method: JacobianMethod::CentralDifference(steps),
    })
}

/// `∇m_n(θ)`: analytic when the model supplies it, central differences otherwise.
pub fn jacobian(evaluator: &EmpiricalEvaluator<'_>, theta: &DVector<f64>) -> Result<JacobianEstimate> {
    match evaluator.analytic_jacobian(theta) {
        Some(matrix) => Ok(JacobianEstimate {
            matrix,
            method: JacobianMethod::Analytic,
        }),
        None => central_difference(|x| evaluator.mean_moment(x), theta),
    }
}

/// `M = I − QQ'` with `Q` an orthonormal basis of the column space of
/// `jacobian`, built by modified Gram–Schmidt with column pivoting.
pub fn k_projector(jacobian: &DMatrix<f64>) -> DMatrix<f64> {
    let k = jacobian.nrows();
    let mut cols: Vec<DVector<f64>> = jacobian.column_iter().map(|c| c.into_owned()).collect();
    let largest = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut m = DMatrix::identity(k, k);
    if !(largest > 0.0) || !largest.is_finite() {
        return m;
    }
    let tol = 1e-10 * largest;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut remaining: Vec<usize> = (0..cols.len()).collect();
    while !remaining.is_empty() && basis.len() < k {
        let (pos, norm) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, cols[j].norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if norm <= tol {
            break;
        }
        let j = remaining.remove(pos);
        let mut q = cols[j].clone();
        // Second pass restores orthogonality lost to cancellation.
        for b in &basis {
            q -= b * b.dot(&q);
        }
        let qn = q.norm();
        if qn <= tol {
            continue;
        }
        q /= qn;
        for &r in &remaining {
            let proj = q.dot(&cols[r]);
            cols[r] -= &q * proj;
        }
        basis.push(q);
    }
    for q in &basis {
        m -= q * q.transpose();
    }
    (&m + m.transpose()) * 0.5
}

/// `inf` over probes of `‖M_{∇m(θ)} W(θ)‖`.
pub fn hilbert_upper_bound(probes: &[ProcessProbe]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Precondition("no parameter probes supplied".into()));
    }
    let mut best = f64::INFINITY;
    for probe in probes {
        if probe.jacobian.nrows() != probe.process.len() {
            return Err(Error::Dimension {
                expected: probe.process.len(),
                actual: probe.jacobian.nrows(),
                context: "jacobian rows",
            });
        }
        best = best.min((k_projector(&probe.jacobian) * &probe.process).norm());
    }
    Ok(best)
}

/// `γ(θ, t) = −‖J'(P t)‖` for affine moments at interior `θ`.
pub fn gamma_linear(jacobian: &DMatrix<f64>, weighted_t: &DVector<f64>) -> f64 {
    -(jacobian.transpose() * weighted_t).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiMode {
    Constrained,
    Lagrangian,
}

/// `ψ̂_n` / `ψ̃_n` bound to an evaluator and parameter space.
#[derive(Debug)]
pub struct PsiSurface<'s, 'a> {
    evaluator: &'s EmpiricalEvaluator<'a>,
    space: &'s ParameterSpace,
    delta: f64,
    nu: Option<f64>,
    mode: PsiMode,
}

/// Value and minimiser of one local problem.
#[derive(Debug, Clone)]
pub struct PsiValue {
    pub value: f64,
    pub point: DVector<f64>,
    /// Closed form was used.
    pub exact: bool,
}

impl<'s, 'a> PsiSurface<'s, 'a> {
    pub fn constrained(evaluator: &'s EmpiricalEvaluator<'a>, space: &'s ParameterSpace, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if space.dim() != evaluator.p() {
            return Err(Error::Dimension {
                expected: evaluator.p(),
                actual: space.dim(),
                context: "parameter space dimension",
            });
        }
        Ok(PsiSurface {
            evaluator,
            space,
            delta,
            nu: None,
            mode: PsiMode::Constrained,
        })
    }

    /// `nu = None` uses twice the Lipschitz bound.
    pub fn lagrangian(
        evaluator: &'s EmpiricalEvaluator<'a>,
        space: &'s ParameterSpace,
        delta: f64,
        nu: Option<f64>,
    ) -> Result<Self> {
        let mut s = Self::constrained(evaluator, space, delta)?;
        let lip = evaluator.lipschitz_bound().ok_or_else(|| {
            Error::config("the Lagrangian derivative norm needs a Lipschitz bound for the model")
        })?;
        let nu = nu.unwrap_or(2.0 * lip);
        if !(nu > lip) {
            return Err(Error::config(format!(
                "Lagrangian weight ν_n = {nu} must exceed the Lipschitz bound {lip}"
            )));
        }
        s.nu = Some(nu);
        s.mode = PsiMode::Lagrangian;
        Ok(s)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn mode(&self) -> PsiMode {
        self.mode
    }

    pub fn evaluator(&self) -> &'s EmpiricalEvaluator<'a> {
        self.evaluator
    }

    pub fn space(&self) -> &'s ParameterSpace {
        self.space
    }

    /// The surface's own mode.
    pub fn psi(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<f64> {
        match self.mode {
            PsiMode::Constrained => self.psi_hat(theta, t),
            PsiMode::Lagrangian => self.psi_tilde(theta, t),
        }
    }

    pub fn psi_hat(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<f64> {
        Ok(self.psi_hat_point(theta, t)?.value)
    }

    /// `inf_{θ' ∈ Θ, ‖θ' − θ‖ ≤ δ} (v_n(θ', t) − v_n(θ, t)) / δ`.
    pub fn psi_hat_point(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<PsiValue> {
        let delta = self.delta;
        let gradient = self.evaluator.affine_gradient(t);
        if let Some(g) = &gradient {
            if self.space.interior_margin(theta) >= delta {
                let norm = g.norm();
                let point = if norm > 0.0 { theta - g * (delta / norm) } else { theta.clone() };
                return Ok(PsiValue {
                    value: -norm,
                    point,
                    exact: true,
                });
            }
        }
        let base = self.base_value(theta, t, gradient.as_ref())?;
        let failure = RefCell::new(None);
        let objective = |x: &DVector<f64>| self.difference(theta, x, t, base, gradient.as_ref(), &failure);
        let project = |x: &DVector<f64>| project_ball_space(self.space, theta, delta, x);
        let mut starts = vec![theta.clone()];
        for i in 0..theta.len() {
            for sign in [1.0, -1.0] {
                let mut s = theta.clone();
                s[i] += sign * delta;
                starts.push(project(&s));
            }
        }
        let best = self.run_starts(objective, project, &starts, 0.5 * delta, &failure)?;
        Ok(clamp_nonpositive(best, theta))
    }

    /// `inf_{θ' ∈ Θ} (v_n(θ', t) − v_n(θ, t)) / δ + ν (‖θ' − θ‖ − δ)₊ / δ`.
    pub fn psi_tilde(&self, theta: &DVector<f64>, t: &TestFunction) -> Result<f64> {
        let nu = self.nu.ok_or_else(|| {
            Error::config("surface was built without a Lagrangian weight; use PsiSurface::lagrangian")
        })?;
        let delta = self.delta;
        let gradient = self.evaluator.affine_gradient(t);
        if let Some(g) = &gradient {
            if self.space.interior_margin(theta) >= delta && nu >= g.norm() {
                return Ok(-g.norm());
            }
        }
        let constrained = self.psi_hat_point(theta, t)?;
        let base = self.base_value(theta, t, gradient.as_ref())?;
        let failure = RefCell::new(None);
        let objective = |x: &DVector<f64>| {
            let hinge = ((x - theta).norm() - delta).max(0.0);
            self.difference(theta, x, t, base, gradient.as_ref(), &failure) + nu * hinge / delta
        };
        let project = |x: &DVector<f64>| self.space.project(x).unwrap_or_else(|_| x.clone());
        let mut starts = vec![constrained.point.clone(), theta.clone()];
        for i in 0..theta.len() {
            for sign in [2.0, -2.0] {
                let mut s = theta.clone();
                s[i] += sign * delta;
                starts.push(project(&s));
            }
        }
        let best = self.run_starts(objective, project, &starts, delta, &failure)?;
        Ok(best.value.min(constrained.value))
    }

    fn base_value(&self, theta: &DVector<f64>, t: &TestFunction, gradient: Option<&DVector<f64>>) -> Result<f64> {
        match gradient {
            Some(_) => Ok(0.0),
            None => self.evaluator.v_n(theta, t),
        }
    }

    fn difference(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        t: &TestFunction,
        base: f64,
        gradient: Option<&DVector<f64>>,
        failure: &RefCell<Option<Error>>,
    ) -> f64 {
        match gradient {
            Some(g) => g.dot(&(x - theta)) / self.delta,
            None => match self.evaluator.v_n(x, t) {
                Ok(v) => (v - base) / self.delta,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::INFINITY
                }
            },
        }
    }

    fn run_starts<F, P>(
        &self,
        objective: F,
        project: P,
        starts: &[DVector<f64>],
        step: f64,
        failure: &RefCell<Option<Error>>,
    ) -> Result<PsiValue>
    where
        F: Fn(&DVector<f64>) -> f64,
        P: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let mut nm = NelderMead::with_step(step);
        nm.ftol = 1e-12;
        nm.xtol = 1e-10 * self.delta;
        nm.max_evals = 2000;
        let mut best: Option<PsiValue> = None;
        for s in starts {
            let m = nm.minimize(&objective, &project, s);
            if best.as_ref().is_none_or(|b| m.value < b.value) {
                best = Some(PsiValue {
                    value: m.value,
                    point: m.x,
                    exact: false,
                });
            }
        }
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        Ok(best.expect("at least one start"))
    }
}

fn clamp_nonpositive(v: PsiValue, theta: &DVector<f64>) -> PsiValue {
    if v.value > 0.0 {
        PsiValue {
            value: 0.0,
            point: theta.clone(),
            exact: v.exact,
        }
    } else {
        v
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::config(format!("δ_n must be positive and finite, got {delta}")));
    }
    Ok(())
}

/// Alternating (Dykstra) projection onto `Θ ∩ B(center, radius)`; the result
/// is always a member of `Θ`.
fn project_ball_space(space: &ParameterSpace, center: &DVector<f64>, radius: f64, x: &DVector<f64>) -> DVector<f64> {
    let ball = |y: &DVector<f64>| {
        let d = y - center;
        let n = d.norm();
        if n <= radius {
            y.clone()
        } else {
            center + d * (radius / n)
        }
    };
    let onto_space = |y: &DVector<f64>| space.project(y).unwrap_or_else(|_| y.clone());
    let first = ball(x);
    if space.contains(&first) {
        return first;
    }
    let mut y = onto_space(&first);
    let mut p = DVector::zeros(x.len());
    let mut q = DVector::zeros(x.len());
    let mut current = x.clone();
    for _ in 0..200 {
        let a = ball(&(&current + &p));
        p = &current + &p - &a;
        y = onto_space(&(&a + &q));
        q = &a + &q - &y;
        if (&y - &current).norm() <= 1e-13 * (1.0 + radius) {
            break;
        }
        current = y.clone();
    }
    y
}
