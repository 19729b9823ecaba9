//! Run settings read from `key = value` files.

use minimax_infer::bootstrap::RunOptions;
use minimax_infer::moment::Remainder;
use minimax_infer::tuning::{validate_tuning_for, Rate, TuningPolicy};

use crate::error::{CliError, Result};
use crate::keyvalue::{list, number, parse_entries, Entry};

pub const KEYS: &[&str] = &[
    "r_coef",
    "r_exp",
    "delta_coef",
    "delta_exp",
    "lambda_coef",
    "lambda_exp",
    "mu_coef",
    "mu_exp",
    "mu_tilde_coef",
    "mu_tilde_exp",
    "nu_coef",
    "nu_exp",
    "draws",
    "multiplier",
    "quantile",
    "c_gamma",
    "restarts",
    "bootstrap_restarts",
    "grid_probe",
    "arc_points",
    "exponential_grid",
    "alpha",
    "seed",
    "lower",
    "upper",
];

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub tuning: TuningPolicy,
    pub options: RunOptions,
    /// Grid points per index axis for the exponential family.
    pub exponential_grid: usize,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    /// Box bounds overriding the built-in parameter space.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Whether `draws` was set explicitly.
    pub draws_set: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            tuning: TuningPolicy::default(),
            options: RunOptions::default(),
            exponential_grid: 64,
            alpha: None,
            seed: None,
            lower: None,
            upper: None,
            draws_set: false,
        }
    }
}

fn count(e: &Entry, origin: &str, min: usize) -> Result<usize> {
    match e.value.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        _ => Err(e.fail(origin, format!("expected an integer ≥ {min}, found '{}'", e.value))),
    }
}

impl CliConfig {
    /// Parses settings and checks the tuning policy (under the default
    /// quadratic remainder; [`CliConfig::check_for`] re-checks per model).
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = CliConfig::default();
        let mut nu = (None, None);
        for e in parse_entries(text, origin)? {
            let num = || number(&e.value).map_err(|m| e.fail(origin, m));
            let t = &mut cfg.tuning;
            match e.key.as_str() {
                "r_coef" => t.r.coef = num()?,
                "r_exp" => t.r.exponent = num()?,
                "delta_coef" => t.delta.coef = num()?,
                "delta_exp" => t.delta.exponent = num()?,
                "lambda_coef" => t.lambda.coef = num()?,
                "lambda_exp" => t.lambda.exponent = num()?,
                "mu_coef" => t.mu.coef = num()?,
                "mu_exp" => t.mu.exponent = num()?,
                "mu_tilde_coef" => t.mu_tilde.coef = num()?,
                "mu_tilde_exp" => t.mu_tilde.exponent = num()?,
                "nu_coef" => nu.0 = Some(num()?),
                "nu_exp" => nu.1 = Some(num()?),
                "draws" => {
                    t.draws = count(&e, origin, 1)?;
                    cfg.draws_set = true;
                }
                "multiplier" => t.multiplier = e.value.parse().map_err(|err| e.fail(origin, err))?,
                "quantile" => t.quantile = e.value.parse().map_err(|err| e.fail(origin, err))?,
                "c_gamma" => t.c_gamma = Some(num()?),
                "restarts" => cfg.options.solver.restarts = count(&e, origin, 1)?,
                "bootstrap_restarts" => cfg.options.bootstrap_solver.restarts = count(&e, origin, 1)?,
                "grid_probe" => {
                    let g = count(&e, origin, 0)?;
                    cfg.options.solver.grid_probe = g;
                    cfg.options.bootstrap_solver.grid_probe = g;
                }
                "arc_points" => cfg.options.arc_points = count(&e, origin, 1)?,
                "exponential_grid" => cfg.exponential_grid = count(&e, origin, 2)?,
                "alpha" => {
                    let a = num()?;
                    if !(a > 0.0 && a < 1.0) {
                        return Err(e.fail(origin, format!("must lie in (0, 1), found {a}")));
                    }
                    cfg.alpha = Some(a);
                }
                "seed" => {
                    cfg.seed = Some(
                        e.value
                            .parse()
                            .map_err(|_| e.fail(origin, format!("expected an unsigned integer, found '{}'", e.value)))?,
                    )
                }
                "lower" => cfg.lower = Some(list(&e.value).map_err(|m| e.fail(origin, m))?),
                "upper" => cfg.upper = Some(list(&e.value).map_err(|m| e.fail(origin, m))?),
                _ => {
                    return Err(CliError::UnknownKey {
                        origin: origin.to_string(),
                        key: e.key.clone(),
                        line: e.line,
                    })
                }
            }
        }
        cfg.tuning.nu = match nu {
            (None, None) => None,
            (c, e) => Some(Rate::new(c.unwrap_or(1.0), e.unwrap_or(0.0))),
        };
        cfg.check_for(Remainder::Zero)?;
        Ok(cfg)
    }

    pub fn check_for(&self, remainder: Remainder) -> Result<()> {
        let violations = validate_tuning_for(&self.tuning, remainder);
        if violations.is_empty() {
            return Ok(());
        }
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(CliError::Invalid(format!("tuning policy violates {}", list.join("; "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use minimax_infer::tuning::MultiplierKind;

    #[test]
    fn parses_known_keys() {
        let cfg = CliConfig::parse("# tuning\ndraws = 99\nmultiplier = rademacher # inline\nlambda_exp=0.1\n", "cfg").unwrap();
        assert_eq!(cfg.tuning.draws, 99);
        assert_eq!(cfg.tuning.multiplier, MultiplierKind::Rademacher);
        assert_eq!(cfg.tuning.lambda.exponent, 0.1);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = CliConfig::parse("draws = 10\nbogus_key = 3\n", "cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn invalid_tuning_rejected_before_use() {
        let err = CliConfig::parse("lambda_exp = 0.5\n", "cfg").unwrap_err();
        assert!(err.to_string().contains("λ_n"), "{err}");
        assert!(CliConfig::parse("delta_exp = 0.1", "cfg").is_err());
        assert!(CliConfig::parse("draws = 0", "cfg").is_err());
        assert!(CliConfig::parse("alpha = 1.5", "cfg").is_err());
    }

    #[test]
    fn every_listed_key_is_accepted() {
        for key in KEYS {
            let value = match *key {
                "multiplier" => "gaussian",
                "quantile" => "conservative",
                "r_exp" => "0.5",
                "delta_exp" => "-0.25",
                "lambda_exp" => "0.125",
                "mu_exp" => "0.375",
                "mu_tilde_exp" => "0.125",
                "alpha" => "0.1",
                "exponential_grid" => "8",
                _ => "3",
            };
            CliConfig::parse(&format!("{key} = {value}"), "cfg").unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
