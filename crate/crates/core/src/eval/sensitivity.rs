//! One-knob-at-a-time twin fidelity sweep with paired seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate_learned;
use crate::mimo::{ArrayConfig, LinkBudget};
use crate::pipeline::{learn, PipelineConfig};
use crate::scene::{generate_dataset, ChannelDataset, FidelityKnobs, Scene, MAX_REFLECTION_ORDER};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Footprint jitter sigma in meters.
    Geometry,
    /// Per-bounce loss delta in dB.
    Material,
    /// Maximum reflection order.
    RayTracing,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Geometry => "geometry",
            Axis::Material => "material",
            Axis::RayTracing => "ray_tracing",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(&self, base: &FidelityKnobs, value: f64) -> Result<FidelityKnobs> {
        let mut k = base.clone();
        match self {
            Axis::Geometry => k.geometry_noise_sigma = value,
            Axis::Material => k.material_loss_delta_db = value,
            Axis::RayTracing => {
                if !(value >= 0.0 && value.fract() == 0.0 && value <= MAX_REFLECTION_ORDER as f64) {
                    return Err(Error::Config(format!(
                        "reflection order must be an integer in 0..={MAX_REFLECTION_ORDER}, got {value}"
                    )));
                }
                k.max_reflection_order = value as u32;
            }
        }
        k.validate()?;
        Ok(k)
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Axis::Geometry),
            "material" => Ok(Axis::Material),
            "ray_tracing" => Ok(Axis::RayTracing),
            other => Err(Error::Config(format!("unknown sensitivity axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub axis: Axis,
    pub value: f64,
    pub mean_snr_los: Option<f64>,
    pub mean_snr_nlos: Option<f64>,
    /// Pipeline seed shared by every point of the sweep.
    pub seed: u64,
}

/// Everything a sweep point needs besides its knob setting.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub target: &'a Scene,
    /// Knobs that produce the target (ground-truth) dataset.
    pub target_knobs: FidelityKnobs,
    /// Twin knobs that the swept axis is applied to.
    pub base_knobs: FidelityKnobs,
    pub array: ArrayConfig,
    pub link_budget: LinkBudget,
    pub pipeline: PipelineConfig,
}

/// Twin dataset from `knobs`, learned codebook(s), scored on `target_ds`.
fn run_point(
    setup: &SweepSetup<'_>,
    knobs: &FidelityKnobs,
    target_ds: &ChannelDataset,
) -> Result<(Option<f64>, Option<f64>)> {
    let twin = generate_dataset(setup.target, knobs, &setup.array, &setup.link_budget)?;
    let learned = learn(&twin, &setup.pipeline)?;
    let report = evaluate_learned(&learned, target_ds, &setup.link_budget)?;
    Ok((report.los().mean_db(), report.nlos().mean_db()))
}

/// Runs every `(axis, value)` point; identical knob settings are computed once.
pub fn sensitivity_sweep(
    setup: &SweepSetup<'_>,
    axes: &[AxisSpec],
) -> Result<Vec<SensitivityResult>> {
    if axes.is_empty() || axes.iter().all(|a| a.values.is_empty()) {
        return Err(Error::Config(
            "sensitivity sweep needs at least one axis value".into(),
        ));
    }
    setup.pipeline.validate()?;
    let target_ds = generate_dataset(
        setup.target,
        &setup.target_knobs,
        &setup.array,
        &setup.link_budget,
    )?;

    let mut points = Vec::new();
    for ax in axes {
        for &v in &ax.values {
            points.push((ax.axis, v, ax.axis.apply(&setup.base_knobs, v)?));
        }
    }
    let mut unique: Vec<FidelityKnobs> = Vec::new();
    let slot: Vec<usize> = points
        .iter()
        .map(|(_, _, k)| match unique.iter().position(|u| u == k) {
            Some(i) => i,
            None => {
                unique.push(k.clone());
                unique.len() - 1
            }
        })
        .collect();

    let outcomes = unique
        .par_iter()
        .map(|k| run_point(setup, k, &target_ds))
        .collect::<Result<Vec<_>>>()?;

    Ok(points
        .into_iter()
        .zip(slot)
        .map(|((axis, value, _), s)| SensitivityResult {
            axis,
            value,
            mean_snr_los: outcomes[s].0,
            mean_snr_nlos: outcomes[s].1,
            seed: setup.pipeline.seed,
        })
        .collect())
}
