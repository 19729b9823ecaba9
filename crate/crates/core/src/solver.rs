//! `ℓ_n(θ) = sup_t v_n(θ, t)` and `T_n = r_n inf_θ ℓ_n(θ)`.

use std::cell::RefCell;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::{ExponentialFamily, TestFunction, TestFunctionFamily, TrigKind};
use crate::optim::{multistart, MultiStart, NelderMead};
use crate::process::EmpiricalEvaluator;
use crate::space::ParameterSpace;
use crate::tuning::TuningPolicy;

#[derive(Debug, Clone)]
pub struct InnerSupResult {
    pub value: f64,
    pub argmax: TestFunction,
    /// Closed form (as opposed to grid search and refinement).
    pub exact: bool,
}

/// `ℓ_n(θ)`.
pub fn inner_sup(evaluator: &EmpiricalEvaluator<'_>, theta: &DVector<f64>) -> Result<InnerSupResult> {
    match evaluator.family() {
        TestFunctionFamily::Exponential(e) => trig_sup(evaluator, e, theta),
        family => {
            let sup = family.sup_vector(&evaluator.mean_moment(theta)?)?;
            Ok(InnerSupResult {
                value: sup.value,
                argmax: TestFunction::Vector(sup.argmax),
                exact: true,
            })
        }
    }
}

fn trig_sup(evaluator: &EmpiricalEvaluator<'_>, family: &ExponentialFamily, theta: &DVector<f64>) -> Result<InnerSupResult> {
    let sample = evaluator.sample(theta)?;
    let data = evaluator.data();
    let n = data.n() as f64;
    let g: Vec<f64> = sample.values.column(0).iter().copied().collect();
    let z: Vec<Vec<f64>> = data
        .rows()
        .map(|row| family.instruments.iter().map(|&c| row[c]).collect())
        .collect();
    let both = |zeta: &DVector<f64>| {
        let (mut c, mut s) = (0.0, 0.0);
        for (gi, zi) in g.iter().zip(&z) {
            let arg: f64 = zi.iter().zip(zeta.iter()).map(|(a, b)| a * b).sum();
            let (sn, cs) = arg.sin_cos();
            c += gi * cs;
            s += gi * sn;
        }
        (c / n, s / n)
    };
    let one = |zeta: &DVector<f64>, kind: TrigKind| {
        let (c, s) = both(zeta);
        match kind {
            TrigKind::Cos => c,
            TrigKind::Sin => s,
        }
    };
    let mut best = (f64::NEG_INFINITY, DVector::zeros(family.index_dim()), TrigKind::Cos);
    for zeta in family.index_grid() {
        let (c, s) = both(&zeta);
        if c > best.0 {
            best = (c, zeta.clone(), TrigKind::Cos);
        }
        if s > best.0 {
            best = (s, zeta, TrigKind::Sin);
        }
    }
    let (mut value, mut zeta, kind) = best;
    let l = family.half_width;
    let mut radius = 2.0 * l / (family.grid - 1) as f64;
    for _ in 0..30 {
        let before = value;
        for j in 0..zeta.len() {
            let lo = (zeta[j] - radius).max(-l);
            let hi = (zeta[j] + radius).min(l);
            let f = |x: f64| {
                let mut trial = zeta.clone();
                trial[j] = x;
                one(&trial, kind)
            };
            let (x, v) = golden_max(f, lo, hi, 1e-7);
            if v > value {
                value = v;
                zeta[j] = x;
            }
        }
        radius *= 0.5;
        if value - before <= 1e-14 && radius < 1e-6 {
            break;
        }
    }
    Ok(InnerSupResult {
        value,
        argmax: TestFunction::Trig { zeta, kind },
        exact: false,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Multi-start settings for the outer minimisation.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub restarts: usize,
    /// Value tolerance of each simplex run.
    pub value_tol: f64,
    /// Best two restarts must agree within this for `converged`.
    pub agreement: f64,
    /// Grid points per axis for the final sanity probe (`p ≤ 2`).
    pub grid_probe: usize,
    pub max_evals: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            restarts: 16,
            value_tol: 1e-8,
            agreement: 1e-4,
            grid_probe: 41,
            max_evals: 4000,
        }
    }
}

impl SolverOptions {
    fn simplex(&self, space: &ParameterSpace) -> NelderMead {
        let (lo, hi) = space.bounds();
        let mut nm = NelderMead::with_step(0.2 * (hi - lo).amax().max(1e-8));
        nm.ftol = self.value_tol.min(1e-10);
        nm.max_evals = self.max_evals;
        nm
    }
}

/// Minimises a fallible objective over `space` from `options.restarts`
/// sampled starts; the first evaluation error aborts the search.
pub fn minimize_over<F>(f: F, space: &ParameterSpace, options: &SolverOptions, seed: u64) -> Result<MultiStart>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let failure = RefCell::new(None);
    let wrapped = |x: &DVector<f64>| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::INFINITY
        }
    };
    let starts = space.sample(seed, options.restarts.max(1));
    let grid = match space.dim() {
        1 => options.grid_probe,
        2 => options.grid_probe.min(21),
        _ => 0,
    };
    let out = multistart(wrapped, space, &starts, &options.simplex(space), grid, options.agreement);
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone)]
pub struct OuterInfResult {
    /// `r_n · inf_θ ℓ_n(θ)`.
    pub statistic: f64,
    /// `inf_θ ℓ_n(θ)`.
    pub criterion: f64,
    pub theta_hat: DVector<f64>,
    pub restarts: usize,
    pub converged: bool,
    pub r_n: f64,
}

/// `T_n` with the default solver options.
pub fn outer_inf(
    evaluator: &EmpiricalEvaluator<'_>,
    space: &ParameterSpace,
    tuning: &TuningPolicy,
    seed: u64,
) -> Result<OuterInfResult> {
    let r_n = tuning.r.at(evaluator.n());
    outer_inf_with(evaluator, space, r_n, &SolverOptions::default(), seed)
}

pub fn outer_inf_with(
    evaluator: &EmpiricalEvaluator<'_>,
    space: &ParameterSpace,
    r_n: f64,
    options: &SolverOptions,
    seed: u64,
) -> Result<OuterInfResult> {
    if space.dim() != evaluator.p() {
        return Err(Error::Dimension {
            expected: evaluator.p(),
            actual: space.dim(),
            context: "parameter space dimension",
        });
    }
    if !(r_n > 0.0) || !r_n.is_finite() {
        return Err(Error::config(format!("r_n must be positive and finite, got {r_n}")));
    }
    let best = minimize_over(|x| Ok(inner_sup(evaluator, x)?.value), space, options, seed)?;
    Ok(OuterInfResult {
        statistic: r_n * best.value,
        criterion: best.value,
        theta_hat: best.x,
        restarts: best.restart_values.len(),
        converged: best.converged,
        r_n,
    })
}
