use std::path::PathBuf;

use clap::Subcommand;
use rmw_core::optimizer::SearchConfig;
use rmw_core::sampling::Randomization;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    /// Closed-form lab and tuned bounds over an infidelity grid.
    BoundsCurve,
    /// Certification capability of the two-qubit witness, lab vs tuned.
    CapabilityFig1,
    /// Finite-shot estimates with and without randomization.
    SamplingFig2,
    /// Optimizer bounds for the MUB witness over dimensions and infidelities.
    MubSweep,
    /// Witness values under calibrated dephasing of the randomization gates.
    DephasingSweep,
    /// Witness values for the (p, q) measurement family.
    PqGrid,
    /// Visibility thresholds for the two measurement families.
    Visibility,
    /// Random checks of the misalignment inequality.
    MisalignmentAudit,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::BoundsCurve,
        ScenarioId::CapabilityFig1,
        ScenarioId::SamplingFig2,
        ScenarioId::MubSweep,
        ScenarioId::DephasingSweep,
        ScenarioId::PqGrid,
        ScenarioId::Visibility,
        ScenarioId::MisalignmentAudit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::BoundsCurve => "bounds-curve",
            ScenarioId::CapabilityFig1 => "capability-fig1",
            ScenarioId::SamplingFig2 => "sampling-fig2",
            ScenarioId::MubSweep => "mub-sweep",
            ScenarioId::DephasingSweep => "dephasing-sweep",
            ScenarioId::PqGrid => "pq-grid",
            ScenarioId::Visibility => "visibility",
            ScenarioId::MisalignmentAudit => "misalignment-audit",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Fixed dephasing exponent; calibrated to mean gate fidelity `1 - eps/10` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_total: Option<f64>,
}

/// Scenario parameters. Keys that do not apply to the chosen scenario are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioId>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomization: Option<Randomization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// `n` points spaced evenly in log scale from `a` to `b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.log10(), b.log10());
    (0..n)
        .map(|k| 10f64.powf(la + (lb - la) * k as f64 / (n - 1) as f64))
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn default_eps_grid(id: ScenarioId) -> Option<Vec<f64>> {
    match id {
        ScenarioId::BoundsCurve | ScenarioId::CapabilityFig1 | ScenarioId::DephasingSweep => {
            Some(logspace(1e-3, 0.2, 25))
        }
        ScenarioId::SamplingFig2 => Some(vec![0.001, 0.005, 0.01, 0.05, 0.1]),
        ScenarioId::MubSweep => Some(vec![0.005, 0.01, 0.05, 0.1]),
        ScenarioId::PqGrid => Some(vec![0.01, 0.05, 0.1]),
        ScenarioId::Visibility => Some(linspace(0.0, 0.1, 10)),
        ScenarioId::MisalignmentAudit => None,
    }
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> CliResult<()> {
    if grid.is_empty() {
        return Err(schema(format!("{name} must not be empty")));
    }
    if let Some(x) = grid.iter().find(|x| !(x.is_finite() && **x >= lo && **x <= hi)) {
        return Err(schema(format!("{name} entry {x} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Fills an `Option` field with a default when the scenario uses it, and
/// rejects it otherwise.
fn field<T>(value: &mut Option<T>, name: &str, used: bool, default: impl FnOnce() -> T) -> CliResult<()> {
    if used {
        if value.is_none() {
            *value = Some(default());
        }
        Ok(())
    } else if value.is_some() {
        Err(schema(format!("key `{name}` does not apply to this scenario")))
    } else {
        Ok(())
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| schema(format!("invalid config: {e}")))
    }

    /// Checks the config against `id` and fills in every default.
    pub fn resolve(mut self, id: ScenarioId) -> CliResult<Self> {
        use ScenarioId::*;
        if let Some(s) = self.scenario {
            if s != id {
                return Err(schema(format!(
                    "config is for `{}` but `{}` was requested",
                    s.as_str(),
                    id.as_str()
                )));
            }
        }
        self.scenario = Some(id);
        field(&mut self.eps_grid, "eps_grid", id != MisalignmentAudit, || {
            default_eps_grid(id).unwrap_or_default()
        })?;
        field(&mut self.dims, "dims", matches!(id, MubSweep | MisalignmentAudit), || {
            if id == MubSweep {
                vec![2, 3, 4, 5, 6]
            } else {
                vec![2, 3, 4]
            }
        })?;
        field(&mut self.shots, "shots", id == SamplingFig2, || 5000)?;
        field(&mut self.randomization, "randomization", id == SamplingFig2, || {
            Randomization::ContinuousPhase
        })?;
        field(&mut self.search, "search", id == MubSweep, SearchConfig::default)?;
        field(&mut self.lab_restarts, "lab_restarts", id == MubSweep, || 3)?;
        field(
            &mut self.noise,
            "noise",
            matches!(id, SamplingFig2 | DephasingSweep | PqGrid),
            NoiseConfig::default,
        )?;
        field(&mut self.p_grid, "p_grid", id == PqGrid, || vec![-0.01, 0.0, 0.01])?;
        field(&mut self.q_grid, "q_grid", id == PqGrid, || vec![-0.1, -0.05, 0.0, 0.05, 0.1])?;
        field(&mut self.trials, "trials", id == MisalignmentAudit, || 1000)?;
        self.validate(id)?;
        Ok(self)
    }

    fn validate(&self, id: ScenarioId) -> CliResult<()> {
        if let Some(grid) = &self.eps_grid {
            let hi = match id {
                ScenarioId::SamplingFig2 | ScenarioId::PqGrid | ScenarioId::Visibility => 0.5,
                ScenarioId::DephasingSweep => 1.0 - 1e-12,
                _ => 1.0,
            };
            check_grid("eps_grid", grid, 0.0, hi)?;
        }
        if let Some(dims) = &self.dims {
            if dims.is_empty() || dims.iter().any(|&d| d < 2) {
                return Err(schema("dims must be a nonempty list of integers >= 2"));
            }
        }
        if self.shots == Some(0) {
            return Err(schema("shots must be positive"));
        }
        if self.randomization == Some(Randomization::None) {
            return Err(schema("randomization must be continuous-phase or discrete-group"));
        }
        if let Some(search) = &self.search {
            search.validate().map_err(|e| schema(e.to_string()))?;
        }
        if self.lab_restarts == Some(0) {
            return Err(schema("lab_restarts must be positive"));
        }
        if let Some(NoiseConfig { gamma_total: Some(g) }) = &self.noise {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(schema("noise.gamma_total must be finite and nonnegative"));
            }
        }
        if let Some(p) = &self.p_grid {
            check_grid("p_grid", p, -1.0, 1.0)?;
        }
        if let Some(q) = &self.q_grid {
            check_grid("q_grid", q, -1.0, 1.0)?;
        }
        if self.trials == Some(0) {
            return Err(schema("trials must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; call on a resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
