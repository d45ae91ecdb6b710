//! Experiment configuration: a strict JSON document with unknown keys
//! rejected, plus canonical hashing for reproducibility stamps.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum ExperimentKind {
    ChainTj,
    LadderTj,
    HubbardLadder,
    GoldenChain,
    Qwalk,
    Ed,
    VerifyModel,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// chain hopping / leg hopping
    #[serde(default)]
    pub t: Option<f64>,
    /// rung hopping
    #[serde(default)]
    pub t_perp: Option<f64>,
    /// interaction toward the vacuum channel (legs for ladders)
    #[serde(default)]
    pub j_vac: Option<f64>,
    /// interaction toward the nontrivial channel (chains)
    #[serde(default)]
    pub j_other: Option<f64>,
    /// rung interaction
    #[serde(default)]
    pub j_perp: Option<f64>,
    /// coin angle / Bloch polar angle for walks
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub t_max: Option<usize>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillingConfig {
    pub p: u64,
    pub q: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub dt: f64,
    pub max_sweeps: usize,
    pub xi_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default)]
    pub entropy_scan_r: Option<usize>,
    #[serde(default)]
    pub correlator_r: Option<usize>,
    #[serde(default)]
    pub fit_window: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// builtin name ("fibonacci", "ising", "fermion_z2", "hardcore_boson(8)")
    /// or a path to a model file prefixed with "file:"
    pub model: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub filling: Option<FillingConfig>,
    #[serde(default)]
    pub chemical_potential: Option<f64>,
    #[serde(default = "default_chi")]
    pub chi: usize,
    #[serde(default = "default_precision")]
    pub precision: f64,
    #[serde(default)]
    pub schedule: Option<Vec<StageConfig>>,
    #[serde(default = "default_window")]
    pub u1_window: u32,
    #[serde(default)]
    pub seed: u64,
    /// finite system length for `ed` (chain sites or ladder rungs)
    #[serde(default)]
    pub sites: Option<usize>,
    #[serde(default)]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub sweep: Option<Vec<SweepAxis>>,
}

fn default_chi() -> usize {
    64
}

fn default_precision() -> f64 {
    1e-10
}

fn default_window() -> u32 {
    10
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        use ExperimentKind::*;
        match self.experiment {
            ChainTj | LadderTj | HubbardLadder => {
                let drives = self.filling.is_some() as u8 + self.chemical_potential.is_some() as u8;
                if drives != 1 {
                    anyhow::bail!(
                        "exactly one of `filling` and `chemical_potential` must drive the density"
                    );
                }
            }
            GoldenChain | Qwalk | Ed | VerifyModel => {}
        }
        if let Some(f) = self.filling {
            if f.q == 0 || f.p > f.q {
                anyhow::bail!("filling must satisfy 0 <= p <= q, q >= 1");
            }
        }
        if self.chi == 0 {
            anyhow::bail!("chi must be positive");
        }
        if let Some(stages) = &self.schedule {
            for w in stages.windows(2) {
                if w[1].dt >= w[0].dt {
                    anyhow::bail!("schedule time steps must strictly decrease");
                }
            }
        }
        Ok(())
    }

    /// Canonical hash over the serialized config (the reproducibility stamp
    /// carried by every output row).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
