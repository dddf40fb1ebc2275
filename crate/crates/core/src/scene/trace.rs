//! Image-method specular ray tracing over vertical building faces.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::geometry::{dot, norm, sub, Aabb, Face, Vec3};
use super::{FidelityKnobs, Scene, MAX_REFLECTION_ORDER};
use crate::mimo::{ArrayConfig, PathComponent};
use crate::{Error, Result};

/// A validated propagation path with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    /// Base station, each reflection point in order, then the user.
    pub points: Vec<[f64; 3]>,
    /// Indices of the reflecting faces (four per building, in building order).
    pub faces: Vec<usize>,
    /// Unfolded length: distance from the last image source to the user.
    pub unfolded_length: f64,
    pub component: PathComponent,
}

impl TracedPath {
    /// Sum of the physical segment lengths.
    pub fn segment_length(&self) -> f64 {
        self.points.windows(2).map(|w| norm(sub(w[1], w[0]))).sum()
    }
}

/// Precomputed faces and volumes of a scene.
pub struct Tracer<'a> {
    scene: &'a Scene,
    boxes: Vec<Aabb>,
    faces: Vec<Face>,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene) -> Result<Self> {
        scene.validate()?;
        let mut faces = Vec::with_capacity(4 * scene.buildings.len());
        for b in &scene.buildings {
            let mat = scene
                .material(&b.material)
                .ok_or_else(|| Error::invalid(format!("unknown material '{}'", b.material)))?;
            faces.extend(Face::of_building(b, mat.amplitude_factor()));
        }
        Ok(Tracer {
            scene,
            boxes: scene.buildings.iter().map(Aabb::from_building).collect(),
            faces,
        })
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    fn segment_clear(&self, a: Vec3, b: Vec3) -> bool {
        !self.boxes.iter().any(|bx| bx.blocks(a, b))
    }

    /// Direct path from the base station is unobstructed.
    pub fn is_los(&self, ue: [f64; 3]) -> bool {
        self.segment_clear(self.scene.bs.position, ue)
    }

    /// All paths with at most `max_order` reflections, ordered by reflection
    /// count and then by face sequence.
    pub fn trace(
        &self,
        ue: [f64; 3],
        max_order: u32,
        cfg: &ArrayConfig,
    ) -> Result<Vec<TracedPath>> {
        if max_order > MAX_REFLECTION_ORDER {
            return Err(Error::invalid(format!(
                "reflection order {max_order} exceeds the supported maximum of {MAX_REFLECTION_ORDER}"
            )));
        }
        if !self.scene.user_grid.contains(ue[0], ue[1]) {
            return Err(Error::OutsideGrid { x: ue[0], y: ue[1] });
        }
        let bs = self.scene.bs.position;
        let mut out = Vec::new();
        if self.is_los(ue) {
            out.push(self.make_path(vec![bs, ue], Vec::new(), norm(sub(ue, bs)), 1.0, cfg));
        }
        if max_order > 0 {
            let mut images = vec![bs];
            let mut seq = Vec::new();
            self.search(ue, max_order as usize, &mut images, &mut seq, cfg, &mut out);
        }
        out.sort_by_key(|p| p.component.interaction_count);
        Ok(out)
    }

    fn search(
        &self,
        ue: Vec3,
        max_order: usize,
        images: &mut Vec<Vec3>,
        seq: &mut Vec<usize>,
        cfg: &ArrayConfig,
        out: &mut Vec<TracedPath>,
    ) {
        let source = *images.last().expect("images start with the base station");
        for (fi, face) in self.faces.iter().enumerate() {
            if seq.last() == Some(&fi) || !face.faces_point(source) {
                continue;
            }
            images.push(face.mirror(source));
            seq.push(fi);
            if let Some(path) = self.validate(ue, images, seq, cfg) {
                out.push(path);
            }
            if seq.len() < max_order {
                self.search(ue, max_order, images, seq, cfg, out);
            }
            seq.pop();
            images.pop();
        }
    }

    /// Backtracks reflection points from the user toward the base station and
    /// checks each against its face and each segment against every building.
    fn validate(
        &self,
        ue: Vec3,
        images: &[Vec3],
        seq: &[usize],
        cfg: &ArrayConfig,
    ) -> Option<TracedPath> {
        let n = seq.len();
        let mut points = vec![[0.0; 3]; n + 2];
        points[0] = images[0];
        points[n + 1] = ue;
        let mut target = ue;
        for j in (0..n).rev() {
            let face = &self.faces[seq[j]];
            let p = face.crossing(target, images[j + 1])?;
            points[j + 1] = p;
            target = p;
        }
        for w in points.windows(2) {
            if !self.segment_clear(w[0], w[1]) {
                return None;
            }
        }
        let loss: f64 = seq
            .iter()
            .map(|&f| self.faces[f].amplitude_factor)
            .product();
        let unfolded = norm(sub(ue, images[n]));
        Some(self.make_path(points, seq.to_vec(), unfolded, loss, cfg))
    }

    fn make_path(
        &self,
        points: Vec<Vec3>,
        faces: Vec<usize>,
        length: f64,
        loss: f64,
        cfg: &ArrayConfig,
    ) -> TracedPath {
        let bs = self.scene.bs;
        let dir = sub(points[1], bs.position);
        let cos_aoa = (dot(dir, bs.array_axis()) / norm(dir)).clamp(-1.0, 1.0);
        let magnitude = cfg.wavelength() / (4.0 * PI * length) * loss;
        let component = PathComponent {
            gain: Complex64::from_polar(magnitude, -cfg.wavenumber() * length),
            angle_of_arrival: cos_aoa.acos(),
            interaction_count: faces.len() as u32,
        };
        TracedPath {
            points,
            faces,
            unfolded_length: length,
            component,
        }
    }
}

/// Whether the straight segment from the base station to `ue` clears every building.
pub fn los_check(scene: &Scene, ue: [f64; 3]) -> bool {
    let boxes: Vec<Aabb> = scene.buildings.iter().map(Aabb::from_building).collect();
    !boxes.iter().any(|b| b.blocks(scene.bs.position, ue))
}

/// Paths reaching `ue`, up to `knobs.max_reflection_order` bounces.
///
/// Only the reflection order is read from `knobs`; geometry and material
/// knobs are applied to the scene beforehand by [`super::apply_fidelity`].
pub fn trace_paths(
    scene: &Scene,
    knobs: &FidelityKnobs,
    ue: [f64; 3],
    cfg: &ArrayConfig,
) -> Result<Vec<PathComponent>> {
    Ok(trace_paths_detailed(scene, knobs, ue, cfg)?
        .into_iter()
        .map(|p| p.component)
        .collect())
}

pub fn trace_paths_detailed(
    scene: &Scene,
    knobs: &FidelityKnobs,
    ue: [f64; 3],
    cfg: &ArrayConfig,
) -> Result<Vec<TracedPath>> {
    knobs.validate()?;
    Tracer::new(scene)?.trace(ue, knobs.max_reflection_order, cfg)
}
