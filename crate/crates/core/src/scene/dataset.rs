use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::Tracer;
use super::{apply_fidelity, FidelityKnobs, Scene};
use crate::mimo::{synth_channel, ArrayConfig, ChannelVector, LinkBudget};
use crate::Result;

/// Geometry of the user grid a dataset was sampled on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub ymin: f64,
    pub spacing: f64,
    pub height: f64,
}

impl GridSpec {
    /// `(ix, iy)` of a row-major user id.
    pub fn cell(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    /// Row-major grid index, stable across target and twin datasets.
    pub id: usize,
    pub position: [f64; 3],
    pub channel: ChannelVector,
}

impl ChannelRecord {
    pub fn is_los(&self) -> bool {
        self.channel.is_los
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    /// Hash of the scene that was actually traced (after fidelity knobs).
    pub scene_hash: String,
    pub array: ArrayConfig,
    pub link_budget: LinkBudget,
    pub grid: GridSpec,
    pub records: Vec<ChannelRecord>,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn channels(&self) -> Vec<ChannelVector> {
        self.records.iter().map(|r| r.channel.clone()).collect()
    }

    /// Copy of this dataset holding only the records accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&ChannelRecord) -> bool) -> ChannelDataset {
        ChannelDataset {
            scene_hash: self.scene_hash.clone(),
            array: self.array,
            link_budget: self.link_budget,
            grid: self.grid,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn outage_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.channel.is_outage())
            .count()
    }

    pub fn los_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_los()).count()
    }
}

/// Traces every grid point of `scene` after applying `knobs`.
///
/// Grid points inside a building footprint (below its roof) are skipped. The
/// perturbation seed is the scene's `rng_seed`, so target/twin pairs built from
/// the same scene are paired.
pub fn generate_dataset(
    scene: &Scene,
    knobs: &FidelityKnobs,
    cfg: &ArrayConfig,
    lb: &LinkBudget,
) -> Result<ChannelDataset> {
    cfg.validate()?;
    lb.validate()?;
    let perturbed = apply_fidelity(scene, knobs, scene.rng_seed)?.scene;
    let tracer = Tracer::new(&perturbed)?;
    let g = perturbed.user_grid;
    let grid = GridSpec {
        nx: g.nx(),
        ny: g.ny(),
        xmin: g.xmin,
        ymin: g.ymin,
        spacing: g.spacing,
        height: g.height,
    };

    let records = (0..grid.cell_count())
        .into_par_iter()
        .map(|id| {
            let (ix, iy) = grid.cell(id);
            let pos = g.point(ix, iy);
            if perturbed.inside_building(pos) {
                return Ok(None);
            }
            let paths: Vec<_> = tracer
                .trace(pos, knobs.max_reflection_order, cfg)?
                .into_iter()
                .map(|p| p.component)
                .collect();
            Ok(Some(ChannelRecord {
                id,
                position: pos,
                channel: synth_channel(cfg, &paths),
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(ChannelDataset {
        scene_hash: perturbed.hash(),
        array: *cfg,
        link_budget: *lb,
        grid,
        records,
    })
}
