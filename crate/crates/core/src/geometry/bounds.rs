//! Distance statistics built on cones: the sample-versus-process comparison
//! for cone criteria, the tangent-cone statistic, and the `U_n` bound.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use super::cone::FinitelyGeneratedCone;
use super::tangent::tangent_normal_cones;
use crate::error::{Error, Result};
use crate::family::TestFunctionFamily;
use crate::optim::{multistart, NelderMead};
use crate::space::ParameterSpace;

/// The convex set a moment path is required to stay in.
#[derive(Debug, Clone)]
pub enum ConvexTarget {
    Cone(FinitelyGeneratedCone),
    Set(ParameterSpace),
}

impl ConvexTarget {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            ConvexTarget::Cone(c) => c.contains(x, tol),
            ConvexTarget::Set(s) => s.dim() == x.len() && s.interior_margin(x) >= -tol,
        }
    }

    /// Distance from `x` to the tangent cone of the target at `at`.
    pub fn tangent_distance(&self, at: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        match self {
            ConvexTarget::Cone(c) => {
                if at.norm() == 0.0 {
                    return Ok((x - c.project(x)?).norm());
                }
                let t = c.extended([-at.clone()])?;
                Ok((x - t.project(x)?).norm())
            }
            ConvexTarget::Set(s) => {
                let inside = s.project(at)?;
                tangent_normal_cones(s, &inside)?.distance_to_tangent(x)
            }
        }
    }
}

/// `inf_θ d(G(θ), T_{m(θ)} C)` over the probe points `thetas`.
pub fn tangent_statistic<M, G>(moment: M, process: G, thetas: &[DVector<f64>], target: &ConvexTarget) -> Result<f64>
where
    M: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    if thetas.is_empty() {
        return Err(Error::Precondition("no parameter probes supplied".into()));
    }
    let mut best = f64::INFINITY;
    for theta in thetas {
        let m = moment(theta);
        if !target.contains(&m, 1e-8) {
            return Err(Error::Precondition(format!(
                "null configuration violated: m(θ) = {:?} lies outside the target at θ = {:?}",
                m.as_slice(),
                theta.as_slice()
            )));
        }
        best = best.min(target.tangent_distance(&m, &process(theta))?);
    }
    Ok(best)
}

/// Both sides of `r_n·inf_Θ d(m_n(θ), C) ≤ inf_{Θ₀} d(G_n(θ), C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceComparison {
    /// `r_n · inf_θ d(m_n(θ), C)` minimised over the whole space.
    pub scaled_sample: f64,
    /// `inf_θ d(G_n(θ), C)` over the supplied null points.
    pub process: f64,
}

impl DistanceComparison {
    pub fn holds(&self, tol: f64) -> bool {
        self.scaled_sample <= self.process + tol
    }
}

pub fn distance_comparison<M, G>(
    sample_moment: M,
    process: G,
    space: &ParameterSpace,
    null_thetas: &[DVector<f64>],
    cone: &FinitelyGeneratedCone,
    r_n: f64,
    seed: u64,
) -> Result<DistanceComparison>
where
    M: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    if null_thetas.is_empty() {
        return Err(Error::Precondition("no null parameter points supplied".into()));
    }
    let failure = RefCell::new(None);
    let objective = |theta: &DVector<f64>| match cone.project(&sample_moment(theta)) {
        Ok(p) => (sample_moment(theta) - p).norm(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::INFINITY
        }
    };
    let (lo, hi) = space.bounds();
    let step = 0.25 * (hi - lo).amax().max(1e-6);
    let mut starts = vec![space.center()];
    starts.extend(null_thetas.iter().cloned());
    starts.extend(space.sample(seed, 4));
    let best = multistart(objective, space, &starts, &NelderMead::with_step(step), 41, 1e-4);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let mut rhs = f64::INFINITY;
    for theta in null_thetas {
        let g = process(theta);
        rhs = rhs.min((&g - cone.project(&g)?).norm());
    }
    Ok(DistanceComparison {
        scaled_sample: r_n * best.value,
        process: rhs,
    })
}

/// Process draw at one parameter probe.
#[derive(Debug, Clone)]
pub struct ProcessProbe {
    pub theta: DVector<f64>,
    /// `W(θ)`, e.g. `r_n (m_n(θ) − m(θ))`.
    pub process: DVector<f64>,
    /// `∇m(θ)` (`k × p`).
    pub jacobian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct UnBound {
    pub value: f64,
    /// Index of the minimising probe.
    pub probe: usize,
    /// Minimising perturbation `h`.
    pub direction: DVector<f64>,
    /// Final radius bound `H`.
    pub radius: f64,
}

/// `inf_θ inf_{h ∈ S_θ, ‖h‖ ≤ H} sup_t ⟨t, W(θ) + ∇m(θ) h⟩`, with `H`
/// doubled until the value changes by less than `1e-4` relatively.
pub fn u_n_bound(
    probes: &[ProcessProbe],
    tangent_sets: &[FinitelyGeneratedCone],
    family: &TestFunctionFamily,
) -> Result<UnBound> {
    if probes.is_empty() || probes.len() != tangent_sets.len() {
        return Err(Error::Precondition(
            "u_n bound needs one tangent set per probe and at least one probe".into(),
        ));
    }
    let mut best: Option<UnBound> = None;
    for (idx, (probe, set)) in probes.iter().zip(tangent_sets).enumerate() {
        let (value, direction, radius) = inner_tangent_inf(probe, set, family)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(UnBound {
                value,
                probe: idx,
                direction,
                radius,
            });
        }
    }
    Ok(best.expect("nonempty probes"))
}

fn inner_tangent_inf(
    probe: &ProcessProbe,
    set: &FinitelyGeneratedCone,
    family: &TestFunctionFamily,
) -> Result<(f64, DVector<f64>, f64)> {
    let p = probe.jacobian.ncols();
    if set.dim() != p {
        return Err(Error::Dimension {
            expected: p,
            actual: set.dim(),
            context: "tangent set dimension",
        });
    }
    let base = family.sup_vector(&probe.process)?.value;
    let gens: Vec<&DVector<f64>> = set.generators().iter().filter(|g| g.norm() > 0.0).collect();
    if gens.is_empty() || probe.jacobian.amax() == 0.0 {
        return Ok((base, DVector::zeros(p), 0.0));
    }
    let g = gens.len();
    let basis = DMatrix::from_fn(p, g, |i, j| gens[j][i]);
    let image = &probe.jacobian * &basis;
    let failure = RefCell::new(None);
    let value_at = |lambda: &DVector<f64>| match family.sup_vector(&(&probe.process + &image * lambda)) {
        Ok(s) => s.value,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::INFINITY
        }
    };
    let mut radius = 1.0_f64.max(probe.process.norm() / image.norm().max(1e-12));
    let mut incumbent = DVector::zeros(g);
    let mut previous = base;
    for _ in 0..60 {
        let h_max = radius;
        let retract = |lambda: &DVector<f64>| {
            let l = lambda.map(|v| v.max(0.0));
            let norm = (&basis * &l).norm();
            if norm > h_max {
                l * (h_max / norm)
            } else {
                l
            }
        };
        let mut start = retract(&incumbent);
        let mut start_value = value_at(&start);
        let axis: usize = if g <= 3 { 11 } else if g <= 5 { 5 } else { 0 };
        if axis > 0 {
            let scale = h_max / gens.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
            for flat in 0..axis.pow(g as u32) {
                let mut rem = flat;
                let lam = DVector::from_fn(g, |_, _| {
                    let j = rem % axis;
                    rem /= axis;
                    scale * j as f64 / (axis - 1) as f64
                });
                let lam = retract(&lam);
                let v = value_at(&lam);
                if v < start_value {
                    start_value = v;
                    start = lam;
                }
            }
        }
        let mut nm = NelderMead::with_step(0.1 * h_max);
        nm.ftol = 1e-13;
        nm.xtol = 1e-12 * h_max.max(1.0);
        nm.max_evals = 20_000;
        let m = nm.minimize(value_at, retract, &start);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let current = m.value.min(previous);
        if m.value <= previous {
            incumbent = m.x;
        }
        if (previous - current).abs() <= 1e-4 * current.abs().max(1e-8) && radius > 1.0 {
            previous = current;
            break;
        }
        previous = current;
        radius *= 2.0;
    }
    Ok((previous, &basis * incumbent, radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn tangent_statistic_interior_path_is_zero() {
        let halfline = ConvexTarget::Cone(FinitelyGeneratedCone::new(1, vec![v(&[1.0])]).unwrap());
        let thetas: Vec<_> = (1..5).map(|i| v(&[i as f64])).collect();
        let s = tangent_statistic(|t| v(&[t[0]]), |_| v(&[-3.0]), &thetas, &halfline).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn tangent_statistic_at_vertex_is_cone_distance() {
        let orth = FinitelyGeneratedCone::orthant(2, 1.0);
        let target = ConvexTarget::Cone(orth);
        let thetas = vec![v(&[0.0]), v(&[1.0])];
        let s = tangent_statistic(|_| v(&[0.0, 0.0]), |t| v(&[-1.0 - t[0], 0.5]), &thetas, &target).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_statistic_rejects_violating_path() {
        let target = ConvexTarget::Cone(FinitelyGeneratedCone::orthant(1, 1.0));
        let err = tangent_statistic(|_| v(&[-1.0]), |_| v(&[0.0]), &[v(&[0.0])], &target).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn tangent_statistic_on_box_target_matches_face_brute_force() {
        // m(θ) = (θ, 1) runs along the top edge of the unit box.
        let unit = ParameterSpace::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let target = ConvexTarget::Set(unit);
        let thetas: Vec<_> = (0..=10).map(|i| v(&[i as f64 / 10.0])).collect();
        let moment = |t: &DVector<f64>| v(&[t[0], 1.0]);
        let process = |t: &DVector<f64>| v(&[t[0] - 0.3, 2.0 + t[0]]);
        let s = tangent_statistic(moment, process, &thetas, &target).unwrap();
        let mut brute = f64::INFINITY;
        for t in &thetas {
            let (m, g) = (moment(t), process(t));
            let mut d2 = (g[1].max(0.0)).powi(2);
            if m[0] <= 1e-12 {
                d2 += g[0].min(0.0).powi(2);
            }
            if m[0] >= 1.0 - 1e-12 {
                d2 += g[0].max(0.0).powi(2);
            }
            brute = brute.min(d2.sqrt());
        }
        assert!((s - brute).abs() < 1e-9, "{s} vs {brute}");
    }

    #[test]
    fn distance_comparison_on_shifted_orthant() {
        let cone = FinitelyGeneratedCone::orthant(2, -1.0);
        let space = ParameterSpace::boxed(vec![-1.0], vec![1.0]).unwrap();
        let sides = distance_comparison(
            |t| v(&[0.1 - t[0], t[0] - 0.2]),
            |_| v(&[0.5, -0.5]),
            &space,
            &[v(&[0.0])],
            &cone,
            10.0,
            3,
        )
        .unwrap();
        assert!(sides.scaled_sample.abs() < 1e-8);
        assert!((sides.process - 0.5).abs() < 1e-12);
        assert!(sides.holds(1e-8));
    }

    #[test]
    fn u_n_trivial_reductions() {
        let family = TestFunctionFamily::unit_ball(2);
        let probe = ProcessProbe {
            theta: v(&[0.0]),
            process: v(&[3.0, 4.0]),
            jacobian: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        };
        let zero = FinitelyGeneratedCone::new(1, vec![]).unwrap();
        let b = u_n_bound(&[probe.clone()], &[zero], &family).unwrap();
        assert!((b.value - 5.0).abs() < 1e-12);
        let flat = ProcessProbe {
            jacobian: DMatrix::zeros(2, 1),
            ..probe
        };
        let full = FinitelyGeneratedCone::new(1, vec![v(&[1.0]), v(&[-1.0])]).unwrap();
        let b = u_n_bound(&[flat], &[full], &family).unwrap();
        assert!((b.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn u_n_full_space_removes_column_space() {
        let family = TestFunctionFamily::unit_ball(2);
        let probe = ProcessProbe {
            theta: v(&[0.0]),
            process: v(&[3.0, 4.0]),
            jacobian: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        };
        let full = FinitelyGeneratedCone::new(1, vec![v(&[1.0]), v(&[-1.0])]).unwrap();
        let b = u_n_bound(&[probe.clone()], &[full], &family).unwrap();
        assert!((b.value - 4.0).abs() < 1e-6, "{}", b.value);
        let half = FinitelyGeneratedCone::new(1, vec![v(&[1.0])]).unwrap();
        let b = u_n_bound(&[probe], &[half], &family).unwrap();
        assert!((b.value - 5.0).abs() < 1e-9, "{}", b.value);
    }
}
