//! Test reports and their JSON form.

use serde::Serialize;

use crate::tuning::ResolvedTuning;

/// Which bootstrap statistic generated the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[serde(rename = "full_K")]
    FullK,
    #[serde(rename = "full_Ktilde")]
    FullKtilde,
    #[serde(rename = "plugin_K")]
    PluginK,
    #[serde(rename = "plugin_Ktilde")]
    PluginKtilde,
}

impl Variant {
    pub fn is_plugin(self) -> bool {
        matches!(self, Variant::PluginK | Variant::PluginKtilde)
    }

    /// Whether the `μ̃_n v_n` term is included.
    pub fn is_tilde(self) -> bool {
        matches!(self, Variant::FullKtilde | Variant::PluginKtilde)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::FullK => "full_K",
            Variant::FullKtilde => "full_Ktilde",
            Variant::PluginK => "plugin_K",
            Variant::PluginKtilde => "plugin_Ktilde",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "full_K" => Ok(Variant::FullK),
            "full_Ktilde" => Ok(Variant::FullKtilde),
            "plugin_K" => Ok(Variant::PluginK),
            "plugin_Ktilde" => Ok(Variant::PluginKtilde),
            other => Err(crate::Error::config(format!(
                "unknown variant '{other}' (expected full_K, full_Ktilde, plugin_K or plugin_Ktilde)"
            ))),
        }
    }
}

/// Solver diagnostics that are kept out of the JSON report.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Maximising test function at `θ̂`, as a coordinate list.
    pub inner_argmax: Vec<f64>,
    pub restarts: usize,
    pub converged: bool,
    /// Constant `c_γ` in effect.
    pub c_gamma: f64,
    pub variant: Option<Variant>,
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub statistic: f64,
    pub theta_hat: Vec<f64>,
    pub draws: Vec<f64>,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub tuning: ResolvedTuning,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    statistic: f64,
    theta_hat: &'a [f64],
    critical_value: f64,
    p_value: f64,
    reject: bool,
    draws: &'a [f64],
    tuning: &'a ResolvedTuning,
    seed: u64,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ReportJson {
            statistic: self.statistic,
            theta_hat: &self.theta_hat,
            critical_value: self.critical_value,
            p_value: self.p_value,
            reject: self.reject,
            draws: &self.draws,
            tuning: &self.tuning,
            seed: self.seed,
        })
        .expect("report serialisation")
    }
}
