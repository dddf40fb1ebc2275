//! Built-in scenes.

use crate::scene::{BaseStation, Building, Material, Scene, UserGrid};
use crate::{Error, Result};

pub const BUILTIN_NAMES: &[&str] = &["toy-manhattan"];

pub fn builtin_scene(name: &str) -> Result<Scene> {
    match name {
        "toy-manhattan" => Ok(toy_manhattan()),
        other => Err(Error::Config(format!(
            "unknown builtin scene '{other}' (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

fn block(xmin: f64, xmax: f64, ymin: f64, ymax: f64, height: f64, material: &str) -> Building {
    Building {
        xmin,
        xmax,
        ymin,
        ymax,
        height,
        material: material.into(),
    }
}

/// A base station looking down a north-south boulevard onto an open plaza,
/// with an east-west street canyon crossing the boulevard behind the front
/// row of blocks.
///
/// The plaza is mostly in direct view; the cross street and the plaza edges
/// hidden behind block corners are reached only by reflections.
pub fn toy_manhattan() -> Scene {
    Scene {
        bs: BaseStation {
            position: [5.0, 110.0, 20.0],
            boresight: -std::f64::consts::FRAC_PI_2,
        },
        materials: vec![
            Material::new("glass", 3.0),
            Material::new("concrete", 6.0),
            Material::new("brick", 9.0),
        ],
        buildings: vec![
            // north row, flanking the boulevard
            block(-120.0, -15.0, 55.0, 140.0, 35.0, "glass"),
            block(15.0, 120.0, 55.0, 140.0, 30.0, "concrete"),
            // middle row, flanking the plaza
            block(-120.0, -40.0, -20.0, 45.0, 25.0, "brick"),
            block(40.0, 120.0, -20.0, 45.0, 28.0, "glass"),
            // south edge of the plaza
            block(-40.0, 40.0, -30.0, -5.0, 20.0, "concrete"),
        ],
        user_grid: UserGrid {
            xmin: -100.0,
            xmax: 100.0,
            ymin: 0.0,
            ymax: 54.0,
            spacing: 4.0,
            height: 1.5,
        },
        rng_seed: 7,
    }
}
