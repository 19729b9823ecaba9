//! Penalised multiplier-bootstrap statistics, critical values, p-values and
//! the end-to-end test.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::derivative::{jacobian, PsiSurface};
use crate::error::{Error, Result};
use crate::family::{TestFunction, TestFunctionFamily};
use crate::moment::MomentModel;
use crate::process::{EmpiricalEvaluator, MultiplierDraw, ProcessDraw};
use crate::report::{Diagnostics, TestReport, Variant};
use crate::solver::{inner_sup, minimize_over, outer_inf_with, OuterInfResult, SolverOptions};
use crate::space::ParameterSpace;
use crate::tuning::{validate_tuning_for, QuantileRule, ResolvedTuning, TuningPolicy};

/// Draws from one bootstrap run.
#[derive(Debug, Clone)]
pub struct BootstrapRun {
    pub draws: Vec<f64>,
    pub variant: Variant,
    pub tuning: ResolvedTuning,
    pub seed: u64,
}

impl BootstrapRun {
    pub fn critical_value(&self, alpha: f64, rule: QuantileRule) -> Result<f64> {
        critical_value(&self.draws, alpha, rule)
    }
}

/// `(1 − α)` quantile of the draws; the conservative rule takes order
/// statistic `ceil((1 − α) B)`.
///
/// Any `B ≥ 1` is accepted here; [`run_test`] additionally requires
/// `B ≥ 1/α` so that the test can reject at all.
pub fn critical_value(draws: &[f64], alpha: f64, rule: QuantileRule) -> Result<f64> {
    check_alpha_range(alpha)?;
    if draws.is_empty() {
        return Err(Error::config("no bootstrap draws"));
    }
    if let Some(i) = draws.iter().position(|d| !d.is_finite()) {
        return Err(Error::numerical(format!("bootstrap draw {i} is not finite"), None));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    Ok(match rule {
        QuantileRule::Conservative => {
            let idx = ((1.0 - alpha) * b - 1e-9).ceil().max(1.0) as usize;
            sorted[idx.min(sorted.len()) - 1]
        }
        QuantileRule::Interpolated => {
            let h = (b - 1.0) * (1.0 - alpha);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    })
}

fn check_alpha_range(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64, b: usize) -> Result<()> {
    check_alpha_range(alpha)?;
    if (b as f64) * alpha < 1.0 - 1e-9 {
        return Err(Error::config(format!("B = {b} draws is too few for α = {alpha}; need B ≥ 1/α")));
    }
    Ok(())
}

/// `(1 + #{draws ≥ T}) / (B + 1)`.
pub fn p_value(draws: &[f64], statistic: f64) -> f64 {
    let exceed = draws.iter().filter(|&&d| d >= statistic).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// Penalised suprema over the family, shared by the full and plug-in forms.
pub struct Bootstrap<'r, 's, 'a> {
    surface: &'r PsiSurface<'s, 'a>,
    tuning: ResolvedTuning,
    probes: Vec<TestFunction>,
    /// Points on the arc between the unpenalised and the restricted maximiser.
    pub arc_points: usize,
    pub solver: SolverOptions,
}

/// Everything about `θ` that does not depend on the multiplier draw.
#[derive(Debug, Clone)]
pub struct ThetaPanel {
    pub theta: DVector<f64>,
    mean: Option<DVector<f64>>,
    jacobian: Option<DMatrix<f64>>,
    /// `(t, ψ(θ, t), v_n(θ, t))` over the static probes.
    probes: Vec<(TestFunction, f64, f64)>,
}

impl ThetaPanel {
    /// Largest `|ψ|` over the static probes.
    pub fn max_abs_psi(&self) -> f64 {
        self.probes.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }
}

impl<'r, 's, 'a> Bootstrap<'r, 's, 'a> {
    pub fn new(surface: &'r PsiSurface<'s, 'a>, tuning: ResolvedTuning) -> Self {
        Bootstrap {
            probes: surface.evaluator().family().probes(),
            surface,
            tuning,
            arc_points: 16,
            solver: SolverOptions::default(),
        }
    }

    fn evaluator(&self) -> &'s EmpiricalEvaluator<'a> {
        self.surface.evaluator()
    }

    fn family(&self) -> &'a TestFunctionFamily {
        self.evaluator().family()
    }

    pub fn panel(&self, theta: &DVector<f64>) -> Result<ThetaPanel> {
        let ev = self.evaluator();
        let vector = self.family().moment_dim().is_some();
        let mean = if vector { Some(ev.mean_moment(theta)?) } else { None };
        let jac = if vector { Some(jacobian(ev, theta)?.matrix) } else { None };
        let mut probes = Vec::with_capacity(self.probes.len());
        for t in &self.probes {
            let psi = self.surface.psi(theta, t)?;
            let v = match (&mean, t) {
                (Some(m), TestFunction::Vector(tv)) => self.family().pair(tv, m),
                _ => ev.v_n(theta, t)?,
            };
            probes.push((t.clone(), psi, v));
        }
        Ok(ThetaPanel {
            theta: theta.clone(),
            mean,
            jacobian: jac,
            probes,
        })
    }

    /// `sup_t [𝔾*_n(θ, t) + λ_n ψ(θ, t) (+ μ̃_n v_n(θ, t))]`.
    pub fn penalized_sup(&self, panel: &ThetaPanel, draw: &ProcessDraw, tilde: bool) -> Result<f64> {
        let ev = self.evaluator();
        let lambda = self.tuning.lambda_n;
        let mu_tilde = if tilde { self.tuning.mu_tilde_n } else { 0.0 };
        let theta = &panel.theta;
        let (Some(mean), Some(jac)) = (&panel.mean, &panel.jacobian) else {
            let mut best = f64::NEG_INFINITY;
            for (t, psi, v) in &panel.probes {
                best = best.max(ev.process_value(theta, t, draw)? + lambda * psi + mu_tilde * v);
            }
            return Ok(best);
        };
        let family = self.family();
        let g = ev.process_vector(theta, draw)?;
        let x = &g + mean * mu_tilde;
        let mut best = f64::NEG_INFINITY;
        for (t, psi, _) in &panel.probes {
            if let TestFunction::Vector(tv) = t {
                best = best.max(family.pair(tv, &x) + lambda * psi);
            }
        }
        let free = family.sup_vector(&x)?.argmax;
        let mut extra = vec![free.clone()];
        if let Some(restricted) = family.restricted_argmax(&x, jac)? {
            for s in 1..self.arc_points {
                let w = s as f64 / self.arc_points as f64;
                if let Some(t) = family.to_boundary(&(&restricted * (1.0 - w) + &free * w)) {
                    extra.push(t);
                }
            }
            extra.push(restricted);
        }
        for t in extra {
            let value = family.pair(&t, &x);
            if value + 1e-12 < best {
                // ψ ≤ 0, so this candidate cannot win.
                continue;
            }
            let psi = self.surface.psi(theta, &TestFunction::Vector(t))?;
            best = best.max(value + lambda * psi);
        }
        Ok(best)
    }

    /// `inf_θ μ_n ℓ_n(θ) + sup_t [𝔾*_n + λ_n ψ (+ μ̃_n v_n)]`.
    pub fn full(&self, draw: &MultiplierDraw, tilde: bool, seed: u64) -> Result<f64> {
        let ev = self.evaluator();
        let prepared = ev.prepare_draw(draw)?;
        let mu = self.tuning.mu_n;
        let objective = |theta: &DVector<f64>| {
            let ell = inner_sup(ev, theta)?.value;
            let panel = self.panel(theta)?;
            Ok(mu * ell + self.penalized_sup(&panel, &prepared, tilde)?)
        };
        Ok(minimize_over(objective, self.surface.space(), &self.solver, seed)?.value)
    }

    /// Plug-in form at a fixed panel: no outer minimisation.
    pub fn plugin(&self, panel: &ThetaPanel, draw: &MultiplierDraw, tilde: bool) -> Result<f64> {
        let prepared = self.evaluator().prepare_draw(draw)?;
        self.penalized_sup(panel, &prepared, tilde)
    }

    /// Panel at `θ̂`, after checking `ℓ_n(θ̂) ≤ inf ℓ_n + r_n^{−1}`.
    pub fn plugin_panel(&self, theta_hat: &DVector<f64>, outer: &OuterInfResult) -> Result<ThetaPanel> {
        let ell = inner_sup(self.evaluator(), theta_hat)?.value;
        let slack = 1.0 / outer.r_n;
        if ell > outer.criterion + slack {
            return Err(Error::Precondition(format!(
                "θ̂ is not a near-minimiser: ℓ_n(θ̂) = {ell} exceeds inf ℓ_n + r_n^{{−1}} = {}",
                outer.criterion + slack
            )));
        }
        self.panel(theta_hat)
    }
}

/// Full bootstrap statistic for one draw.
pub fn bootstrap_statistic_full(
    surface: &PsiSurface<'_, '_>,
    tuning: &ResolvedTuning,
    draw: &MultiplierDraw,
    tilde: bool,
    seed: u64,
) -> Result<f64> {
    Bootstrap::new(surface, tuning.clone()).full(draw, tilde, seed)
}

/// Plug-in bootstrap statistic for one draw.
pub fn bootstrap_statistic_plugin(
    surface: &PsiSurface<'_, '_>,
    outer: &OuterInfResult,
    tuning: &ResolvedTuning,
    draw: &MultiplierDraw,
    tilde: bool,
) -> Result<f64> {
    let boot = Bootstrap::new(surface, tuning.clone());
    let panel = boot.plugin_panel(&outer.theta_hat, outer)?;
    boot.plugin(&panel, draw, tilde)
}

/// Solver settings for [`run_test_with`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Outer minimisation for `T_n`.
    pub solver: SolverOptions,
    /// Outer minimisation inside the full bootstrap statistics.
    pub bootstrap_solver: SolverOptions,
    pub arc_points: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            solver: SolverOptions::default(),
            bootstrap_solver: SolverOptions {
                restarts: 4,
                ..SolverOptions::default()
            },
            arc_points: 16,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_test(
    model: &dyn MomentModel,
    data: &Dataset,
    space: &ParameterSpace,
    family: &TestFunctionFamily,
    tuning: &TuningPolicy,
    alpha: f64,
    variant: Variant,
    seed: u64,
) -> Result<TestReport> {
    run_test_with(model, data, space, family, tuning, alpha, variant, seed, &RunOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_test_with(
    model: &dyn MomentModel,
    data: &Dataset,
    space: &ParameterSpace,
    family: &TestFunctionFamily,
    tuning: &TuningPolicy,
    alpha: f64,
    variant: Variant,
    seed: u64,
    options: &RunOptions,
) -> Result<TestReport> {
    let violations = validate_tuning_for(tuning, model.remainder());
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::config(format!("tuning policy violates: {}", list.join("; "))));
    }
    check_alpha(alpha, tuning.draws)?;
    let evaluator = EmpiricalEvaluator::new(model, data, family)?;
    let n = data.n();
    let resolved = tuning.resolve(n);
    let outer = outer_inf_with(&evaluator, space, resolved.r_n, &options.solver, seed)?;
    let surface = PsiSurface::constrained(&evaluator, space, resolved.delta_n)?;
    let mut boot = Bootstrap::new(&surface, resolved.clone());
    boot.arc_points = options.arc_points;
    boot.solver = options.bootstrap_solver.clone();
    let panel = boot.plugin_panel(&outer.theta_hat, &outer)?;
    let draws: Vec<f64> = (0..tuning.draws as u64)
        .into_par_iter()
        .map(|b| {
            let draw = MultiplierDraw::generate(n, tuning.multiplier, seed, b);
            match variant {
                Variant::PluginK | Variant::PluginKtilde => boot.plugin(&panel, &draw, variant.is_tilde()),
                Variant::FullK | Variant::FullKtilde => boot.full(&draw, variant.is_tilde(), seed),
            }
        })
        .collect::<Result<_>>()?;
    let critical = critical_value(&draws, alpha, tuning.quantile)?;
    let statistic = outer.statistic;
    let argmax = match inner_sup(&evaluator, &outer.theta_hat)?.argmax {
        TestFunction::Vector(t) => t.as_slice().to_vec(),
        TestFunction::Trig { zeta, .. } => zeta.as_slice().to_vec(),
    };
    Ok(TestReport {
        statistic,
        theta_hat: outer.theta_hat.as_slice().to_vec(),
        p_value: p_value(&draws, statistic),
        reject: statistic > critical,
        critical_value: critical,
        draws,
        tuning: resolved,
        seed,
        diagnostics: Diagnostics {
            inner_argmax: argmax,
            restarts: outer.restarts,
            converged: outer.converged,
            c_gamma: tuning.c_gamma.unwrap_or(2.0 * panel.max_abs_psi()),
            variant: Some(variant),
        },
    })
}
