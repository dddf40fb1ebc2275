//! Run configuration: one JSON file, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::builtin::{builtin_scene, BUILTIN_NAMES};
use super::io;
use crate::drl::DdpgConfig;
use crate::eval::{Axis, AxisSpec};
use crate::mimo::{ArrayConfig, LinkBudget, PhaseSet, SPEED_OF_LIGHT};
use crate::pipeline::{CodebookMode, PipelineConfig};
use crate::scene::{FidelityKnobs, Material, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub num_antennas: usize,
    /// Element spacing as a fraction of the wavelength.
    pub spacing_wavelengths: f64,
    pub carrier_frequency_hz: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection {
            num_antennas: 8,
            spacing_wavelengths: 0.5,
            carrier_frequency_hz: 28e9,
        }
    }
}

impl ArraySection {
    pub fn to_array(&self) -> Result<ArrayConfig> {
        if self.carrier_frequency_hz.is_nan() || self.carrier_frequency_hz <= 0.0 {
            return Err(Error::Config(
                "carrier_frequency_hz must be positive".into(),
            ));
        }
        let spacing = self.spacing_wavelengths * SPEED_OF_LIGHT / self.carrier_frequency_hz;
        ArrayConfig::new(self.num_antennas, spacing, self.carrier_frequency_hz).map_err(to_config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    /// Sensing beams; `None` means `4 * num_antennas`.
    pub sensing_beams: Option<usize>,
    pub max_iters: usize,
    pub normalize: bool,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection {
            sensing_beams: None,
            max_iters: 100,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    /// Twin knobs the swept axis is applied to; `None` means the target knobs.
    pub base_knobs: Option<FidelityKnobs>,
    pub axes: Vec<AxisSpec>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection {
            base_knobs: None,
            axes: vec![
                AxisSpec {
                    axis: Axis::RayTracing,
                    values: vec![0.0, 1.0, 2.0],
                },
                AxisSpec {
                    axis: Axis::Material,
                    values: vec![-3.0, 3.0],
                },
                AxisSpec {
                    axis: Axis::Geometry,
                    values: vec![0.5],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin scene name or path to a scene file.
    pub scene: String,
    pub array: ArraySection,
    pub phase_bits: u32,
    /// Codebook size; per group in split mode.
    pub codebook: CodebookMode,
    pub link_budget: LinkBudget,
    pub clustering: ClusteringSection,
    pub ddpg: DdpgConfig,
    pub target_knobs: FidelityKnobs,
    pub twin_knobs: FidelityKnobs,
    pub sensitivity: SensitivitySection,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: "toy-manhattan".into(),
            array: ArraySection::default(),
            phase_bits: 3,
            codebook: CodebookMode::Single { n: 8 },
            link_budget: LinkBudget::default(),
            clustering: ClusteringSection::default(),
            ddpg: DdpgConfig::default(),
            target_knobs: FidelityKnobs::exact(2),
            twin_knobs: FidelityKnobs {
                max_reflection_order: 1,
                geometry_noise_sigma: 0.5,
                material_override: Some(Material::new("concrete", 6.0)),
                material_loss_delta_db: 0.0,
            },
            sensitivity: SensitivitySection::default(),
            out: PathBuf::from("twinbeam-out"),
            seed: 0,
        }
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    /// Reads a config file; missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{} line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.array.to_array()?;
        PhaseSet::new(self.phase_bits).map_err(to_config)?;
        self.link_budget.validate().map_err(to_config)?;
        self.target_knobs.validate().map_err(to_config)?;
        self.twin_knobs.validate().map_err(to_config)?;
        if let Some(k) = &self.sensitivity.base_knobs {
            k.validate().map_err(to_config)?;
        }
        if !BUILTIN_NAMES.contains(&self.scene.as_str()) && !Path::new(&self.scene).is_file() {
            return Err(Error::Config(format!(
                "scene '{}' is neither a builtin ({}) nor an existing file",
                self.scene,
                BUILTIN_NAMES.join(", ")
            )));
        }
        self.pipeline()?.validate()
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        self.array.to_array()
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let m = self.array.num_antennas;
        Ok(PipelineConfig {
            phase_bits: self.phase_bits,
            mode: self.codebook,
            sensing_beams: self.clustering.sensing_beams.unwrap_or(4 * m),
            kmeans_max_iters: self.clustering.max_iters,
            kmeans_normalize: self.clustering.normalize,
            ddpg: self.ddpg,
            seed: self.seed,
        })
    }

    pub fn load_scene(&self) -> Result<Scene> {
        if BUILTIN_NAMES.contains(&self.scene.as_str()) {
            builtin_scene(&self.scene)
        } else {
            io::load_scene(Path::new(&self.scene))
        }
    }

    pub fn sensitivity_base(&self) -> FidelityKnobs {
        self.sensitivity
            .base_knobs
            .clone()
            .unwrap_or_else(|| self.target_knobs.clone())
    }

    /// The config with every default filled in, as written next to the outputs.
    pub fn resolved(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["clustering"]["sensing_beams"] = serde_json::json!(self
            .clustering
            .sensing_beams
            .unwrap_or(4 * self.array.num_antennas));
        v
    }
}
