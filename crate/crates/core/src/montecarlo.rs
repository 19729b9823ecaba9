//! Built-in data-generating processes and simulation experiments.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_test_with, RunOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::TestFunctionFamily;
use crate::geometry::{distance_comparison, FinitelyGeneratedCone, DistanceComparison};
use crate::linalg::seeded_rng;
use crate::moment::{IntervalMeanModel, LinearIvModel, MomentModel, SieveIvModel};
use crate::process::EmpiricalEvaluator;
use crate::report::Variant;
use crate::solver::{outer_inf_with, SolverOptions};
use crate::space::ParameterSpace;
use crate::stats::{chi2_cdf, ks_statistic, EmpiricalSample};
use crate::tuning::TuningPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    /// `Z ~ N(0, I_k)`, `X = Zπ + u`, `Y = Xβ₀ + ε` with `corr(u₁, ε) = 0.5`.
    LinearGmm {
        k: usize,
        p: usize,
        beta0: Vec<f64>,
        strength: f64,
    },
    /// Independent `X ~ N(−Δ/2 + s/2, 1)` and `Y ~ N(Δ/2 − s/2, 1)`.
    IntervalMean { gap: f64, shift: f64 },
    /// `Y = h(X) + ε` with `h` in the span of the cosine sieve, `X` endogenous
    /// and `Z` a valid instrument.
    NpivSieve { sieve_dim: usize, half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn linear_gmm(k: usize, p: usize, n: usize, seed: u64) -> Self {
        DgpSpec {
            kind: DgpKind::LinearGmm {
                k,
                p,
                beta0: vec![1.0; p],
                strength: 1.0,
            },
            n,
            seed,
        }
    }

    pub fn interval_mean(gap: f64, shift: f64, n: usize, seed: u64) -> Self {
        DgpSpec {
            kind: DgpKind::IntervalMean { gap, shift },
            n,
            seed,
        }
    }

    pub fn npiv_sieve(sieve_dim: usize, half_width: f64, n: usize, seed: u64) -> Self {
        DgpSpec {
            kind: DgpKind::NpivSieve { sieve_dim, half_width },
            n,
            seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DgpKind::LinearGmm { .. } => "linear_gmm",
            DgpKind::IntervalMean { .. } => "interval_mean",
            DgpKind::NpivSieve { .. } => "npiv_sieve",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("n must be at least 2, got {}", self.n)));
        }
        match &self.kind {
            DgpKind::LinearGmm { k, p, beta0, strength } => {
                if *p == 0 || k <= p {
                    return Err(Error::config(format!("linear_gmm needs k > p ≥ 1, got k={k}, p={p}")));
                }
                if beta0.len() != *p {
                    return Err(Error::Dimension {
                        expected: *p,
                        actual: beta0.len(),
                        context: "β₀",
                    });
                }
                if !strength.is_finite() || beta0.iter().any(|b| !b.is_finite()) {
                    return Err(Error::config("linear_gmm parameters must be finite"));
                }
            }
            DgpKind::IntervalMean { gap, shift } => {
                if !(*gap >= 0.0) || !gap.is_finite() || !shift.is_finite() {
                    return Err(Error::config(format!("interval_mean needs a finite gap Δ ≥ 0, got {gap}")));
                }
            }
            DgpKind::NpivSieve { sieve_dim, half_width } => {
                if *sieve_dim == 0 {
                    return Err(Error::config("npiv_sieve needs a positive sieve dimension"));
                }
                if !(*half_width > 0.0) || !half_width.is_finite() {
                    return Err(Error::config("npiv_sieve needs a positive index half-width"));
                }
            }
        }
        Ok(())
    }

    /// Same design with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        DgpSpec { seed, ..self.clone() }
    }

    /// Parameter value at which the population moments vanish (for interval
    /// means, the midpoint of the identified set when it is nonempty).
    pub fn true_theta(&self) -> DVector<f64> {
        match &self.kind {
            DgpKind::LinearGmm { beta0, .. } => DVector::from_column_slice(beta0),
            DgpKind::IntervalMean { .. } => DVector::zeros(1),
            DgpKind::NpivSieve { sieve_dim, .. } => sieve_truth(*sieve_dim),
        }
    }

    /// `[E X, E Y]` for interval means.
    pub fn interval_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            DgpKind::IntervalMean { gap, shift } => Some((-gap / 2.0 + shift / 2.0, gap / 2.0 - shift / 2.0)),
            _ => None,
        }
    }

    pub fn space(&self) -> Result<ParameterSpace> {
        let truth = self.true_theta();
        let width = match self.kind {
            DgpKind::LinearGmm { .. } => 5.0,
            DgpKind::IntervalMean { gap, .. } => 5.0 + gap,
            DgpKind::NpivSieve { .. } => 3.0,
        };
        ParameterSpace::boxed(
            truth.iter().map(|t| t - width).collect(),
            truth.iter().map(|t| t + width).collect(),
        )
    }

    pub fn model(&self, data: &Dataset) -> Result<Box<dyn MomentModel>> {
        Ok(match &self.kind {
            DgpKind::LinearGmm { .. } => Box::new(LinearIvModel::from_column_names(data)?),
            DgpKind::IntervalMean { .. } => Box::new(IntervalMeanModel::from_column_names(data)?),
            DgpKind::NpivSieve { sieve_dim, .. } => Box::new(SieveIvModel {
                outcome: 0,
                regressor: 1,
                basis_dim: *sieve_dim,
            }),
        })
    }

    /// Test-function family used by the experiments. Linear GMM uses the
    /// two-step efficient weight, which needs the data and a first stage.
    pub fn family(&self, model: &dyn MomentModel, data: &Dataset, seed: u64) -> Result<TestFunctionFamily> {
        match &self.kind {
            DgpKind::LinearGmm { k, .. } => efficient_family(model, data, &self.space()?, *k, seed),
            DgpKind::IntervalMean { .. } => Ok(TestFunctionFamily::cone_polar_ball(FinitelyGeneratedCone::orthant(2, -1.0))),
            DgpKind::NpivSieve { half_width, .. } => TestFunctionFamily::exponential(*half_width, vec![2], 64),
        }
    }
}

fn sieve_truth(dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |j, _| {
        if j == 0 {
            0.5
        } else if j % 2 == 1 {
            1.0 / j as f64
        } else {
            -1.0 / j as f64
        }
    })
}

/// Two-step weight: identity-weighted `θ̂`, then the inverse sample
/// covariance of `g(Y_i, θ̂)`.
pub fn efficient_family(
    model: &dyn MomentModel,
    data: &Dataset,
    space: &ParameterSpace,
    k: usize,
    seed: u64,
) -> Result<TestFunctionFamily> {
    let identity = TestFunctionFamily::unit_ball(k);
    let ev = EmpiricalEvaluator::new(model, data, &identity)?;
    let first = outer_inf_with(&ev, space, 1.0, &SolverOptions::default(), seed)?;
    let sample = ev.sample(&first.theta_hat)?;
    let centered = DMatrix::from_fn(data.n(), k, |i, j| sample.values[(i, j)] - sample.mean[j]);
    let cov = centered.transpose() * &centered / data.n() as f64;
    let inverse = cov.clone().try_inverse().filter(|w| w.iter().all(|v| v.is_finite()));
    let Some(weight) = inverse else {
        return Err(Error::numerical("moment covariance is singular", None));
    };
    let weight = (&weight + weight.transpose()) * 0.5;
    TestFunctionFamily::weighted_ball(weight)
        .map_err(|e| Error::numerical(format!("efficient weight rejected: {e}"), None))
}

/// Seed for replication `rep` of a run rooted at `master`.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    seeded_rng(master, 0x7265_7000_0000 + rep).random()
}

pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed, 0x0064_6770);
    let n = spec.n;
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    match &spec.kind {
        DgpKind::LinearGmm { k, p, beta0, strength } => {
            let (k, p) = (*k, *p);
            let mut names = vec!["y".to_string()];
            names.extend((1..=p).map(|j| format!("x{j}")));
            names.extend((1..=k).map(|j| format!("z{j}")));
            let rho: f64 = 0.5;
            let rows = (0..n)
                .map(|_| {
                    let z: Vec<f64> = (0..k).map(|_| normal()).collect();
                    let u: Vec<f64> = (0..p).map(|_| normal()).collect();
                    let eps = rho * u[0] + (1.0 - rho * rho).sqrt() * normal();
                    let x: Vec<f64> = (0..p)
                        .map(|j| {
                            let fit: f64 = (0..k).filter(|i| i % p == j).map(|i| strength * z[i]).sum();
                            fit + u[j]
                        })
                        .collect();
                    let y: f64 = x.iter().zip(beta0).map(|(a, b)| a * b).sum::<f64>() + eps;
                    let mut row = vec![y];
                    row.extend(x);
                    row.extend(z);
                    row
                })
                .collect();
            Dataset::new(names, rows)
        }
        DgpKind::IntervalMean { .. } => {
            let (ex, ey) = spec.interval_bounds().expect("interval");
            let rows = (0..n).map(|_| vec![ex + normal(), ey + normal()]).collect();
            Dataset::new(vec!["x".into(), "y".into()], rows)
        }
        DgpKind::NpivSieve { sieve_dim, .. } => {
            let truth = sieve_truth(*sieve_dim);
            let basis = SieveIvModel {
                outcome: 0,
                regressor: 1,
                basis_dim: *sieve_dim,
            };
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let z = 2.0 * uniform(&mut normal) - 1.0;
                let v = 2.0 * uniform(&mut normal) - 1.0;
                let x = 0.6 * z + 0.4 * v;
                let eps = 0.5 * v + 0.3 * normal();
                let y = basis.basis(x).dot(&truth) + eps;
                rows.push(vec![y, x, z]);
            }
            Dataset::new(vec!["y".into(), "x".into(), "z".into()], rows)
        }
    }
}

/// Uniform on (0, 1) from the standard normal stream via `Φ`, keeping a
/// single generator per dataset.
fn uniform(normal: &mut impl FnMut() -> f64) -> f64 {
    let x = normal();
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    // P(a, x²) with a = 1/2 is erf(|x|).
    let v = crate::stats::regularized_gamma_p(0.5, x * x);
    if x < 0.0 {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub dgp: DgpSpec,
    pub n: usize,
    pub reps: usize,
    pub alpha: Option<f64>,
    pub rejection_rate: Option<f64>,
    pub ks_distance: Option<f64>,
    pub excluded: usize,
    pub seed: u64,
    pub runtime_seconds: f64,
    /// Per-replication statistics (`None` for excluded replications).
    #[serde(skip)]
    pub statistics: Vec<Option<f64>>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment serialisation")
    }
}

/// Settings shared by the experiments.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub reps: usize,
    pub alpha: f64,
    pub variant: Variant,
    pub tuning: TuningPolicy,
    /// Worker cap; `None` uses all available parallelism.
    pub workers: Option<usize>,
    pub options: RunOptions,
}

impl ExperimentConfig {
    pub fn new(reps: usize) -> Self {
        ExperimentConfig {
            reps,
            alpha: 0.05,
            variant: Variant::PluginK,
            tuning: TuningPolicy::monte_carlo(),
            workers: None,
            options: RunOptions::default(),
        }
    }
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::config("worker count must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs `rep` on every replication; numerical failures are excluded and
/// counted, other errors abort.
fn replicate<T: Send>(
    spec: &DgpSpec,
    reps: usize,
    workers: Option<usize>,
    rep: impl Fn(&DgpSpec, u64) -> Result<T> + Sync,
) -> Result<Vec<Option<T>>> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::config("replication count must be at least 1"));
    }
    in_pool(workers, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let seed = replication_seed(spec.seed, r);
                match rep(&spec.with_seed(seed), seed) {
                    Ok(v) => Ok(Some(v)),
                    Err(e) if e.is_numerical() => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Efficiently weighted `T_n²` across replications, compared with `χ²_{k−p}`.
pub fn null_distribution_experiment(spec: &DgpSpec, config: &ExperimentConfig) -> Result<ExperimentResult> {
    let DgpKind::LinearGmm { k, p, .. } = spec.kind else {
        return Err(Error::config("the null-distribution experiment needs the linear_gmm design"));
    };
    let start = Instant::now();
    let r = config.tuning.r;
    let stats = replicate(spec, config.reps, config.workers, |rep_spec, seed| {
        let data = generate(rep_spec)?;
        let model = rep_spec.model(&data)?;
        let space = rep_spec.space()?;
        let family = rep_spec.family(model.as_ref(), &data, seed)?;
        let ev = EmpiricalEvaluator::new(model.as_ref(), &data, &family)?;
        let outer = outer_inf_with(&ev, &space, r.at(data.n()), &config.options.solver, seed)?;
        Ok(outer.statistic * outer.statistic)
    })?;
    let kept: Vec<f64> = stats.iter().flatten().copied().collect();
    let ks = if kept.is_empty() {
        None
    } else {
        let df = (k - p) as u32;
        Some(ks_statistic(&EmpiricalSample::new(kept)?, |x| chi2_cdf(df, x)))
    };
    Ok(ExperimentResult {
        dgp: spec.clone(),
        n: spec.n,
        reps: config.reps,
        alpha: None,
        rejection_rate: None,
        ks_distance: ks,
        excluded: stats.iter().filter(|s| s.is_none()).count(),
        seed: spec.seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
        statistics: stats,
    })
}

/// Rejection frequency of the bootstrap test across replications.
pub fn size_power_experiment(spec: &DgpSpec, config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let outcomes = replicate(spec, config.reps, config.workers, |rep_spec, seed| {
        let data = generate(rep_spec)?;
        let model = rep_spec.model(&data)?;
        let space = rep_spec.space()?;
        let family = rep_spec.family(model.as_ref(), &data, seed)?;
        let report = run_test_with(
            model.as_ref(),
            &data,
            &space,
            &family,
            &config.tuning,
            config.alpha,
            config.variant,
            seed,
            &config.options,
        )?;
        Ok((report.statistic, report.reject))
    })?;
    let kept: Vec<bool> = outcomes.iter().flatten().map(|o| o.1).collect();
    let rate = if kept.is_empty() {
        None
    } else {
        Some(kept.iter().filter(|&&r| r).count() as f64 / kept.len() as f64)
    };
    Ok(ExperimentResult {
        dgp: spec.clone(),
        n: spec.n,
        reps: config.reps,
        alpha: Some(config.alpha),
        rejection_rate: rate,
        ks_distance: None,
        excluded: outcomes.iter().filter(|o| o.is_none()).count(),
        seed: spec.seed,
        runtime_seconds: start.elapsed().as_secs_f64(),
        statistics: outcomes.iter().map(|o| o.map(|x| x.0)).collect(),
    })
}

/// Sample-versus-process distance comparison across interval-mean null
/// replications; `Θ` is taken to be the identified set `[E X, E Y]`.
pub fn distance_comparison_experiment(spec: &DgpSpec, reps: usize, workers: Option<usize>) -> Result<Vec<DistanceComparison>> {
    let Some((ex, ey)) = spec.interval_bounds() else {
        return Err(Error::config("the comparison needs the interval_mean design"));
    };
    if ex > ey {
        return Err(Error::config("the comparison needs a null design with E X ≤ E Y"));
    }
    let cone = FinitelyGeneratedCone::orthant(2, -1.0);
    let space = if ey > ex {
        ParameterSpace::boxed(vec![ex], vec![ey])?
    } else {
        ParameterSpace::boxed(vec![ex - 1e-9], vec![ey + 1e-9])?
    };
    let nulls: Vec<DVector<f64>> = (0..=8).map(|i| DVector::from_element(1, ex + (ey - ex) * i as f64 / 8.0)).collect();
    let out = replicate(spec, reps, workers, |rep_spec, seed| {
        let data = generate(rep_spec)?;
        let n = data.n() as f64;
        let xbar = data.column(0).iter().sum::<f64>() / n;
        let ybar = data.column(1).iter().sum::<f64>() / n;
        let r_n = n.sqrt();
        let sample = |t: &DVector<f64>| DVector::from_vec(vec![xbar - t[0], t[0] - ybar]);
        let process = |_: &DVector<f64>| DVector::from_vec(vec![r_n * (xbar - ex), r_n * (ey - ybar)]);
        distance_comparison(sample, process, &space, &nulls, &cone, r_n, seed)
    })?;
    out.into_iter()
        .map(|o| o.ok_or_else(|| Error::numerical("replication failed", None)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gmm_moments_vanish_at_truth() {
        let spec = DgpSpec::linear_gmm(3, 1, 4000, 8);
        let data = generate(&spec).unwrap();
        let model = spec.model(&data).unwrap();
        let n = data.n() as f64;
        let th = spec.true_theta();
        let g: Vec<DVector<f64>> = data.rows().map(|r| model.moment(r, &th)).collect();
        for j in 0..3 {
            let mean = g.iter().map(|v| v[j]).sum::<f64>() / n;
            let sd = (g.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() <= 4.0 * sd / n.sqrt(), "coordinate {j}: {mean}");
        }
    }

    #[test]
    fn interval_means_straddle_zero() {
        let data = generate(&DgpSpec::interval_mean(1.0, 0.0, 500, 3)).unwrap();
        let xbar = data.column(0).iter().sum::<f64>() / 500.0;
        let ybar = data.column(1).iter().sum::<f64>() / 500.0;
        assert!(xbar < 0.0 && ybar > 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [
            DgpSpec::linear_gmm(3, 1, 50, 1),
            DgpSpec::interval_mean(1.0, 0.0, 50, 1),
            DgpSpec::npiv_sieve(3, 2.0, 50, 1),
        ] {
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            assert_ne!(generate(&spec).unwrap(), generate(&spec.with_seed(2)).unwrap());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&DgpSpec::linear_gmm(1, 1, 50, 1)).is_err());
        assert!(generate(&DgpSpec::interval_mean(-1.0, 0.0, 50, 1)).is_err());
        assert!(generate(&DgpSpec::interval_mean(1.0, 0.0, 1, 1)).is_err());
    }

    #[test]
    fn single_replication_is_well_formed() {
        let spec = DgpSpec::linear_gmm(3, 1, 200, 5);
        let r = null_distribution_experiment(&spec, &ExperimentConfig::new(1)).unwrap();
        let ks = r.ks_distance.unwrap();
        assert!((0.0..=1.0).contains(&ks));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(keys.len(), 9);
        assert!(ExperimentConfig::new(0).reps == 0 && null_distribution_experiment(&spec, &ExperimentConfig::new(0)).is_err());
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let spec = DgpSpec::interval_mean(1.0, 0.0, 100, 21);
        let mut config = ExperimentConfig::new(6);
        config.tuning.draws = 39;
        config.workers = Some(1);
        let one = size_power_experiment(&spec, &config).unwrap();
        config.workers = Some(3);
        let three = size_power_experiment(&spec, &config).unwrap();
        assert_eq!(one.statistics, three.statistics);
        assert_eq!(one.rejection_rate, three.rejection_rate);
    }

    #[test]
    fn npiv_null_test_runs() {
        let spec = DgpSpec::npiv_sieve(2, 2.0, 150, 4);
        let data = generate(&spec).unwrap();
        let model = spec.model(&data).unwrap();
        let family = spec.family(model.as_ref(), &data, 1).unwrap();
        let space = spec.space().unwrap();
        let policy = TuningPolicy {
            draws: 39,
            ..TuningPolicy::default()
        };
        let report =
            crate::bootstrap::run_test(model.as_ref(), &data, &space, &family, &policy, 0.05, Variant::PluginK, 2)
                .unwrap();
        assert!(report.statistic.is_finite() && report.draws.iter().all(|d| d.is_finite()));
    }
}
