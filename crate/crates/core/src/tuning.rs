//! Rate sequences `c·n^e` for the statistic and the bootstrap, with the
//! exponent conditions they must satisfy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::Remainder;

/// `coef · n^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub coef: f64,
    pub exponent: f64,
}

impl Rate {
    pub const fn new(coef: f64, exponent: f64) -> Self {
        Rate { coef, exponent }
    }

    pub const fn power(exponent: f64) -> Self {
        Rate { coef: 1.0, exponent }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.coef * (n as f64).powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierKind {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for MultiplierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(MultiplierKind::Gaussian),
            "rademacher" => Ok(MultiplierKind::Rademacher),
            other => Err(Error::config(format!("unknown multiplier type '{other}'"))),
        }
    }
}

/// How the critical value is read off the sorted bootstrap draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileRule {
    /// Order statistic `ceil((1 − α) B)`.
    Conservative,
    /// Linear interpolation between adjacent order statistics.
    Interpolated,
}

impl std::str::FromStr for QuantileRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservative" => Ok(QuantileRule::Conservative),
            "interpolated" => Ok(QuantileRule::Interpolated),
            other => Err(Error::config(format!("unknown quantile rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningPolicy {
    pub r: Rate,
    pub delta: Rate,
    pub lambda: Rate,
    pub mu: Rate,
    pub mu_tilde: Rate,
    /// Lagrangian weight; `None` means twice the model's Lipschitz bound.
    pub nu: Option<Rate>,
    pub multiplier: MultiplierKind,
    pub draws: usize,
    pub quantile: QuantileRule,
    /// Constant `c_γ`; `None` means twice the largest observed `|ψ̂|`.
    pub c_gamma: Option<f64>,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        TuningPolicy {
            r: Rate::power(0.5),
            delta: Rate::power(-0.25),
            lambda: Rate::power(0.125),
            mu: Rate::power(0.375),
            mu_tilde: Rate::power(0.125),
            nu: None,
            multiplier: MultiplierKind::Gaussian,
            draws: 399,
            quantile: QuantileRule::Conservative,
            c_gamma: None,
        }
    }
}

impl TuningPolicy {
    /// Default policy with the smaller draw count used inside simulation loops.
    pub fn monte_carlo() -> Self {
        TuningPolicy {
            draws: 199,
            ..Default::default()
        }
    }

    pub fn resolve(&self, n: usize) -> ResolvedTuning {
        ResolvedTuning {
            n,
            r_n: self.r.at(n),
            delta_n: self.delta.at(n),
            lambda_n: self.lambda.at(n),
            mu_n: self.mu.at(n),
            mu_tilde_n: self.mu_tilde.at(n),
            nu_n: self.nu.map(|r| r.at(n)),
            draws: self.draws,
            multiplier: self.multiplier,
        }
    }
}

/// Tuning values at a given sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedTuning {
    pub n: usize,
    pub r_n: f64,
    pub delta_n: f64,
    pub lambda_n: f64,
    pub mu_n: f64,
    pub mu_tilde_n: f64,
    pub nu_n: Option<f64>,
    pub draws: usize,
    pub multiplier: MultiplierKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningViolation {
    /// Order condition, e.g. `"λ_n = o(μ_n)"`.
    pub condition: &'static str,
    pub detail: String,
}

impl fmt::Display for TuningViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.condition, self.detail)
    }
}

/// Violated conditions for a bilinear model (`f_v ≡ 0`).
pub fn validate_tuning(policy: &TuningPolicy) -> Vec<TuningViolation> {
    validate_tuning_for(policy, Remainder::Zero)
}

/// Violated conditions given the model's remainder bound. All inequalities
/// are strict; an empty list means the policy is admissible.
pub fn validate_tuning_for(policy: &TuningPolicy, remainder: Remainder) -> Vec<TuningViolation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, condition: &'static str, detail: String| {
        if !ok {
            out.push(TuningViolation { condition, detail });
        }
    };
    let rates = [
        ("r_n", policy.r),
        ("δ_n", policy.delta),
        ("λ_n", policy.lambda),
        ("μ_n", policy.mu),
        ("μ̃_n", policy.mu_tilde),
    ];
    for (name, rate) in rates.iter().chain(policy.nu.as_ref().map(|r| ("ν_n", *r)).iter()) {
        check(
            rate.coef > 0.0 && rate.coef.is_finite() && rate.exponent.is_finite(),
            "positive finite coefficients",
            format!("{name} = {}·n^{}", rate.coef, rate.exponent),
        );
    }
    check(policy.draws >= 1, "B ≥ 1", format!("B = {}", policy.draws));
    if let Some(c) = policy.c_gamma {
        check(c > 0.0 && c.is_finite(), "c_γ > 0", format!("c_γ = {c}"));
    }

    let er = policy.r.exponent;
    let ed = policy.delta.exponent;
    let el = policy.lambda.exponent;
    let em = policy.mu.exponent;
    let emt = policy.mu_tilde.exponent;
    check(er > 0.0, "r_n → ∞", format!("e(r) = {er}"));
    check(ed < 0.0, "δ_n → 0", format!("e(δ) = {ed}"));
    check(-er < ed, "r_n^{−1} = o(δ_n)", format!("e(δ) = {ed} ≤ −e(r) = {}", -er));
    let eq = match remainder {
        Remainder::Zero => -er - ed,
        Remainder::Quadratic(_) => (-er - ed).max(ed),
    };
    check(el > 0.0, "λ_n → ∞", format!("e(λ) = {el}"));
    check(el + eq < 0.0, "λ_n·q_n = o(1)", format!("e(λ) + e(q) = {}", el + eq));
    check(el < em, "λ_n = o(μ_n)", format!("e(λ) = {el}, e(μ) = {em}"));
    check(em < er, "μ_n·r_n^{−1} = o(1)", format!("e(μ) = {em}, e(r) = {er}"));
    check(emt > 0.0, "μ̃_n → ∞", format!("e(μ̃) = {emt}"));
    check(emt < er, "μ̃_n·r_n^{−1} = o(1)", format!("e(μ̃) = {emt}, e(r) = {er}"));
    check(2.0 * el - em < 0.0, "λ_n² = o(μ_n)", format!("2e(λ) − e(μ) = {}", 2.0 * el - em));
    check(
        emt + el - em < 0.0,
        "μ̃_n·λ_n = o(μ_n)",
        format!("e(μ̃) + e(λ) − e(μ) = {}", emt + el - em),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: &TuningPolicy) -> Vec<&'static str> {
        validate_tuning(p).into_iter().map(|v| v.condition).collect()
    }

    #[test]
    fn default_policy_is_admissible() {
        assert!(validate_tuning(&TuningPolicy::default()).is_empty());
        assert!(validate_tuning(&TuningPolicy::monte_carlo()).is_empty());
    }

    #[test]
    fn equal_lambda_and_mu_flagged() {
        let p = TuningPolicy {
            lambda: Rate::power(0.25),
            mu: Rate::power(0.25),
            ..Default::default()
        };
        assert!(names(&p).contains(&"λ_n = o(μ_n)"));
    }

    #[test]
    fn fast_delta_flagged() {
        let p = TuningPolicy {
            delta: Rate::power(-0.75),
            ..Default::default()
        };
        assert!(names(&p).contains(&"r_n^{−1} = o(δ_n)"));
    }

    #[test]
    fn quadratic_remainder_tightens_q() {
        let p = TuningPolicy {
            delta: Rate::power(-0.1),
            lambda: Rate::power(0.05),
            mu: Rate::power(0.3),
            mu_tilde: Rate::power(0.05),
            ..Default::default()
        };
        assert!(!validate_tuning(&p).iter().any(|v| v.condition == "λ_n·q_n = o(1)"));
        let smooth = validate_tuning_for(&p, Remainder::Quadratic(1.0));
        assert!(smooth.is_empty(), "{smooth:?}");
        let p = TuningPolicy {
            lambda: Rate::power(0.12),
            ..p
        };
        assert!(validate_tuning_for(&p, Remainder::Quadratic(1.0))
            .iter()
            .any(|v| v.condition == "λ_n·q_n = o(1)"));
    }

    #[test]
    fn resolves_at_n() {
        let t = TuningPolicy::default().resolve(16);
        assert!((t.r_n - 4.0).abs() < 1e-12);
        assert!((t.delta_n - 0.5).abs() < 1e-12);
    }
}
