//! 2.5D urban scenes: extruded rectangular buildings over flat ground.
//!
//! A [`Scene`] is the ground truth ("target") environment. A digital twin is
//! the same scene passed through [`apply_fidelity`], which perturbs building
//! footprints, swaps or shifts material losses, and is traced with a possibly
//! lower reflection order.

mod dataset;
mod geometry;
mod trace;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dataset::{generate_dataset, ChannelDataset, ChannelRecord, GridSpec};
pub use trace::{los_check, trace_paths, trace_paths_detailed, TracedPath, Tracer};

use crate::{Error, Result};

/// Highest reflection order the tracer accepts.
pub const MAX_REFLECTION_ORDER: u32 = 4;

/// Footprint extents below this (meters) are clamped after perturbation.
pub const MIN_EXTENT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    /// Power lost per specular bounce, dB.
    pub reflection_loss_db: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, reflection_loss_db: f64) -> Self {
        Material {
            name: name.into(),
            reflection_loss_db,
        }
    }

    /// Amplitude factor applied per bounce.
    pub fn amplitude_factor(&self) -> f64 {
        10f64.powf(-self.reflection_loss_db / 20.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    /// Array phase center, meters.
    pub position: [f64; 3],
    /// Azimuth of the array broadside, radians counter-clockwise from +x.
    pub boresight: f64,
}

impl BaseStation {
    /// Horizontal unit vector along the array axis (perpendicular to boresight).
    pub fn array_axis(&self) -> [f64; 3] {
        [self.boresight.sin(), -self.boresight.cos(), 0.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Building {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub height: f64,
    pub material: String,
}

impl Building {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x > self.xmin && x < self.xmax && y > self.ymin && y < self.ymax
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub spacing: f64,
    /// Receiver height above ground, meters.
    pub height: f64,
}

impl UserGrid {
    pub fn nx(&self) -> usize {
        ((self.xmax - self.xmin) / self.spacing + 1e-9).floor() as usize + 1
    }

    pub fn ny(&self) -> usize {
        ((self.ymax - self.ymin) / self.spacing + 1e-9).floor() as usize + 1
    }

    /// Position of grid cell `(ix, iy)`; `ix` runs along x.
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 3] {
        [
            self.xmin + ix as f64 * self.spacing,
            self.ymin + iy as f64 * self.spacing,
            self.height,
        ]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-9 * self.spacing.max(1.0);
        x >= self.xmin - tol && x <= self.xmax + tol && y >= self.ymin - tol && y <= self.ymax + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub bs: BaseStation,
    pub materials: Vec<Material>,
    pub buildings: Vec<Building>,
    pub user_grid: UserGrid,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for m in &self.materials {
            if !(m.reflection_loss_db >= 0.0 && m.reflection_loss_db.is_finite()) {
                return Err(Error::invalid(format!(
                    "material '{}' needs a non-negative reflection loss",
                    m.name
                )));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::invalid(format!("duplicate material '{}'", m.name)));
            }
        }
        for (i, b) in self.buildings.iter().enumerate() {
            let finite = [b.xmin, b.xmax, b.ymin, b.ymax, b.height]
                .iter()
                .all(|v| v.is_finite());
            if !finite || b.xmax <= b.xmin || b.ymax <= b.ymin || b.height <= 0.0 {
                return Err(Error::invalid(format!("building {i} is degenerate")));
            }
            if !names.contains(b.material.as_str()) {
                return Err(Error::invalid(format!(
                    "building {i} uses unknown material '{}'",
                    b.material
                )));
            }
            let [x, y, z] = self.bs.position;
            if b.contains_xy(x, y) && z < b.height {
                return Err(Error::invalid(format!(
                    "base station lies inside building {i}"
                )));
            }
        }
        let g = &self.user_grid;
        if !(g.spacing > 0.0 && g.spacing.is_finite()) {
            return Err(Error::invalid("user grid spacing must be positive"));
        }
        if !(g.xmax >= g.xmin && g.ymax >= g.ymin && g.height >= 0.0) {
            return Err(Error::invalid("user grid rectangle is inverted"));
        }
        if !self.bs.position.iter().all(|v| v.is_finite()) || !self.bs.boresight.is_finite() {
            return Err(Error::invalid("base station pose must be finite"));
        }
        Ok(())
    }

    pub fn material(&self, name: &str) -> Option<&Material> {
        self.materials.iter().find(|m| m.name == name)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scene serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Whether `(x, y, z)` lies inside any building volume.
    pub fn inside_building(&self, p: [f64; 3]) -> bool {
        self.buildings
            .iter()
            .any(|b| b.contains_xy(p[0], p[1]) && p[2] < b.height)
    }
}

/// How faithfully a twin reproduces its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityKnobs {
    pub max_reflection_order: u32,
    /// Standard deviation of the i.i.d. jitter on each footprint coordinate, meters.
    #[serde(default)]
    pub geometry_noise_sigma: f64,
    /// Replaces every building material when set.
    #[serde(default)]
    pub material_override: Option<Material>,
    /// Added to every material's per-bounce loss (after any override), floored at 0 dB.
    #[serde(default)]
    pub material_loss_delta_db: f64,
}

impl FidelityKnobs {
    /// Exact replica traced up to `order` reflections.
    pub fn exact(order: u32) -> Self {
        FidelityKnobs {
            max_reflection_order: order,
            geometry_noise_sigma: 0.0,
            material_override: None,
            material_loss_delta_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_reflection_order > MAX_REFLECTION_ORDER {
            return Err(Error::invalid(format!(
                "reflection order {} exceeds the supported maximum of {MAX_REFLECTION_ORDER}",
                self.max_reflection_order
            )));
        }
        if !(self.geometry_noise_sigma >= 0.0 && self.geometry_noise_sigma.is_finite()) {
            return Err(Error::invalid("geometry noise sigma must be non-negative"));
        }
        if !self.material_loss_delta_db.is_finite() {
            return Err(Error::invalid("material loss delta must be finite"));
        }
        if let Some(m) = &self.material_override {
            if !(m.reflection_loss_db >= 0.0 && m.reflection_loss_db.is_finite()) {
                return Err(Error::invalid(
                    "override material loss must be non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Perturbed scene plus the number of footprint extents that had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub scene: Scene,
    pub clamped: usize,
}

/// Derives a twin of `scene` according to `knobs`. The input is left untouched.
pub fn apply_fidelity(scene: &Scene, knobs: &FidelityKnobs, seed: u64) -> Result<Perturbed> {
    knobs.validate()?;
    let mut out = scene.clone();
    let mut clamped = 0;

    if knobs.geometry_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, knobs.geometry_noise_sigma)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut out.buildings {
            b.xmin += normal.sample(&mut rng);
            b.xmax += normal.sample(&mut rng);
            b.ymin += normal.sample(&mut rng);
            b.ymax += normal.sample(&mut rng);
            if clamp_extent(&mut b.xmin, &mut b.xmax) {
                clamped += 1;
            }
            if clamp_extent(&mut b.ymin, &mut b.ymax) {
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("geometry perturbation clamped {clamped} degenerate footprint extents");
        }
    }

    if let Some(m) = &knobs.material_override {
        out.materials = vec![m.clone()];
        for b in &mut out.buildings {
            b.material = m.name.clone();
        }
    }

    if knobs.material_loss_delta_db != 0.0 {
        for m in &mut out.materials {
            m.reflection_loss_db = (m.reflection_loss_db + knobs.material_loss_delta_db).max(0.0);
        }
    }

    Ok(Perturbed {
        scene: out,
        clamped,
    })
}

fn clamp_extent(lo: &mut f64, hi: &mut f64) -> bool {
    if *hi - *lo >= MIN_EXTENT {
        return false;
    }
    let mid = 0.5 * (*lo + *hi);
    *lo = mid - 0.5 * MIN_EXTENT;
    *hi = mid + 0.5 * MIN_EXTENT;
    true
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn open_scene() -> Scene {
        Scene {
            bs: BaseStation {
                position: [0.0, 0.0, 10.0],
                boresight: 0.0,
            },
            materials: vec![Material::new("concrete", 6.0)],
            buildings: vec![],
            user_grid: UserGrid {
                xmin: -50.0,
                xmax: 50.0,
                ymin: -50.0,
                ymax: 50.0,
                spacing: 10.0,
                height: 1.5,
            },
            rng_seed: 0,
        }
    }

    fn two_blocks() -> Scene {
        let mut s = open_scene();
        s.materials.push(Material::new("glass", 3.0));
        s.buildings = vec![
            Building {
                xmin: 10.0,
                xmax: 20.0,
                ymin: 10.0,
                ymax: 30.0,
                height: 25.0,
                material: "concrete".into(),
            },
            Building {
                xmin: -30.0,
                xmax: -20.0,
                ymin: -5.0,
                ymax: 5.0,
                height: 12.0,
                material: "glass".into(),
            },
        ];
        s
    }

    #[test]
    fn grid_counts() {
        let g = open_scene().user_grid;
        assert_eq!((g.nx(), g.ny()), (11, 11));
        assert_eq!(g.point(10, 0), [50.0, -50.0, 1.5]);
    }

    #[test]
    fn validation_catches_bad_scenes() {
        let mut s = two_blocks();
        assert!(s.validate().is_ok());
        s.buildings[0].material = "steel".into();
        assert!(s.validate().is_err());

        let mut s = two_blocks();
        s.buildings[1].xmax = s.buildings[1].xmin;
        assert!(s.validate().is_err());

        let mut s = two_blocks();
        s.bs.position = [15.0, 20.0, 10.0];
        assert!(s.validate().is_err());

        let mut s = two_blocks();
        s.user_grid.spacing = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_noise_no_override_is_identity() {
        let s = two_blocks();
        let p = apply_fidelity(&s, &FidelityKnobs::exact(2), 9).unwrap();
        assert_eq!(p.scene, s);
        assert_eq!(p.scene.hash(), s.hash());
        assert_eq!(p.clamped, 0);
    }

    #[test]
    fn override_sets_every_material() {
        let s = two_blocks();
        let knobs = FidelityKnobs {
            material_override: Some(Material::new("concrete", 6.0)),
            ..FidelityKnobs::exact(1)
        };
        let p = apply_fidelity(&s, &knobs, 0).unwrap();
        assert!(p.scene.buildings.iter().all(|b| b.material == "concrete"));
        assert_eq!(p.scene.materials, vec![Material::new("concrete", 6.0)]);
        assert!(p.scene.validate().is_ok());
        // the input scene is untouched
        assert_eq!(s.buildings[1].material, "glass");
    }

    #[test]
    fn loss_delta_shifts_and_floors() {
        let s = two_blocks();
        let knobs = FidelityKnobs {
            material_loss_delta_db: -4.0,
            ..FidelityKnobs::exact(1)
        };
        let p = apply_fidelity(&s, &knobs, 0).unwrap();
        assert_eq!(
            p.scene.material("concrete").unwrap().reflection_loss_db,
            2.0
        );
        assert_eq!(p.scene.material("glass").unwrap().reflection_loss_db, 0.0);
    }

    #[test]
    fn geometry_noise_is_seeded() {
        let s = two_blocks();
        let knobs = FidelityKnobs {
            geometry_noise_sigma: 0.5,
            ..FidelityKnobs::exact(1)
        };
        let a = apply_fidelity(&s, &knobs, 42).unwrap();
        let b = apply_fidelity(&s, &knobs, 42).unwrap();
        let c = apply_fidelity(&s, &knobs, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.scene, c.scene);
        assert_ne!(a.scene, s);
        let moved = (a.scene.buildings[0].xmin - s.buildings[0].xmin).abs();
        assert!(moved > 0.0 && moved < 5.0);
    }

    #[test]
    fn degenerate_footprints_are_clamped() {
        let mut s = two_blocks();
        s.buildings[1].xmin = 0.0;
        s.buildings[1].xmax = 0.01;
        let knobs = FidelityKnobs {
            geometry_noise_sigma: 5.0,
            ..FidelityKnobs::exact(1)
        };
        let mut total = 0;
        for seed in 0..20 {
            let p = apply_fidelity(&s, &knobs, seed).unwrap();
            for b in &p.scene.buildings {
                assert!(b.xmax - b.xmin >= MIN_EXTENT - 1e-12);
                assert!(b.ymax - b.ymin >= MIN_EXTENT - 1e-12);
            }
            total += p.clamped;
        }
        assert!(total > 0);
    }

    #[test]
    fn knob_validation() {
        assert!(FidelityKnobs::exact(5).validate().is_err());
        let k = FidelityKnobs {
            geometry_noise_sigma: -1.0,
            ..FidelityKnobs::exact(1)
        };
        assert!(k.validate().is_err());
    }
}
