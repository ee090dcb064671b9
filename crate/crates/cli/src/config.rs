//! Experiment configuration schema (see `schema/experiment-config.schema.json`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use puzzlelab::dists::FamilyKind;
use puzzlelab::oracles::NoiseSpec;
use puzzlelab::qsim::QUBIT_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ApproxProb,
    OwpRoundtrip,
    Keyrec,
    Pseudodet,
    Dualmode,
    Synth,
    Flatness,
    Geom,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ApproxProb => "approx-prob",
            ExperimentKind::OwpRoundtrip => "owp-roundtrip",
            ExperimentKind::Keyrec => "keyrec",
            ExperimentKind::Pseudodet => "pseudodet",
            ExperimentKind::Dualmode => "dualmode",
            ExperimentKind::Synth => "synth",
            ExperimentKind::Flatness => "flatness",
            ExperimentKind::Geom => "geom",
        }
    }
}

fn default_family() -> FamilyKind {
    FamilyKind::RandomUniversal
}

fn default_one() -> usize {
    1
}

fn default_heavy_cutoff() -> f64 {
    0.05
}

/// A single experiment run. The seed is mandatory; there are no
/// wall-clock defaults anywhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Logical register size (puzzle length / state size, per experiment).
    pub n: usize,
    /// Circuit depth for the random-universal family.
    #[serde(default)]
    pub depth: usize,
    #[serde(default = "default_family")]
    pub family: FamilyKind,
    /// Instances (draws, puzzles, Cliffords — per experiment).
    #[serde(default = "default_one")]
    pub instances: usize,
    /// Bulk trial budget (tuples, fresh-r runs, (C,x) draws).
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub samples_per_bit: usize,
    /// Probe repeats (pseudodet).
    #[serde(default)]
    pub repeats: usize,
    /// Sampler noise for synth/approx-prob oracles.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Probability-oracle multiplicative band (keyrec, dualmode).
    #[serde(default)]
    pub rel_error: f64,
    #[serde(default)]
    pub fail_prob: f64,
    /// Inverter calls per phase-estimate component (synth).
    #[serde(default)]
    pub phase_trials: usize,
    /// Heavy-output threshold (flatness); defaults to 64/2ⁿ.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_heavy_cutoff")]
    pub heavy_cutoff: f64,
    /// When set, the flatness run must keep the fraction of Cliffords
    /// with heavy mass above `heavy_cutoff` at or below this bound.
    #[serde(default)]
    pub heavy_tail_bound: Option<f64>,
    /// Circuits per pool and number of pools (dualmode).
    #[serde(default = "default_one")]
    pub pool: usize,
    #[serde(default = "default_one")]
    pub num_families: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config does not match the schema: {e}"))
    }

    /// Hash stamped into every output row for provenance.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), crate::CliError> {
        self.validate_fields().map_err(crate::CliError::schema)?;
        // Working registers included: keyrec joins two n-bit registers.
        let register = match self.experiment {
            ExperimentKind::Keyrec => 2 * self.n,
            _ => self.n,
        };
        if register > QUBIT_CAP {
            return Err(crate::CliError {
                code: crate::ExitCode::QubitCap,
                message: format!("register of {register} qubits exceeds the cap {QUBIT_CAP}"),
            });
        }
        Ok(())
    }

    fn validate_fields(&self) -> Result<(), String> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} unsupported (expected {})",
                self.schema_version,
                crate::SCHEMA_VERSION
            ));
        }
        if self.n == 0 {
            return Err("n must be positive".into());
        }
        let budgets: &[(&str, usize)] = match self.experiment {
            ExperimentKind::ApproxProb => {
                &[("instances", self.instances), ("samples_per_bit", self.samples_per_bit)]
            }
            ExperimentKind::OwpRoundtrip => &[("trials", self.trials)],
            ExperimentKind::Keyrec => &[],
            ExperimentKind::Pseudodet => &[
                ("instances", self.instances),
                ("samples_per_bit", self.samples_per_bit),
                ("repeats", self.repeats),
                ("trials", self.trials),
            ],
            ExperimentKind::Dualmode => {
                &[("trials", self.trials), ("pool", self.pool), ("num_families", self.num_families)]
            }
            ExperimentKind::Synth => &[("instances", self.instances)],
            ExperimentKind::Flatness => &[("instances", self.instances)],
            ExperimentKind::Geom => &[("trials", self.trials)],
        };
        for (name, value) in budgets {
            if *value == 0 {
                return Err(format!("{name} must be positive for {}", self.experiment.name()));
            }
        }
        if let Some(noise) = &self.noise {
            if !(0.0..1.0).contains(&noise.epsilon) {
                return Err("noise epsilon must lie in [0,1)".into());
            }
        }
        if self.rel_error < 0.0 || !(0.0..=1.0).contains(&self.fail_prob) {
            return Err("rel_error must be ≥ 0 and fail_prob in [0,1]".into());
        }
        if self.family == FamilyKind::Explicit {
            return Err("the explicit family carries a literal gate list and cannot be configured from JSON".into());
        }
        Ok(())
    }
}
