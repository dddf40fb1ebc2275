//! Vector helpers, building volumes and reflecting faces.

use super::Building;

pub(crate) type Vec3 = [f64; 3];

/// Slack in segment parameter space when deciding that a segment enters a box.
const INTERIOR_EPS: f64 = 1e-9;

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Building volume `[xmin,xmax] x [ymin,ymax] x [0,height]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn from_building(b: &Building) -> Self {
        Aabb {
            lo: [b.xmin, b.ymin, 0.0],
            hi: [b.xmax, b.ymax, b.height],
        }
    }

    /// True when the open segment `a -> b` passes through the box interior.
    ///
    /// Touching a face (a reflection point) or grazing along one does not count.
    pub fn blocks(&self, a: Vec3, b: Vec3) -> bool {
        let d = sub(b, a);
        let mut t_enter = 0.0f64;
        let mut t_exit = 1.0f64;
        for axis in 0..3 {
            let (lo, hi) = (self.lo[axis], self.hi[axis]);
            if d[axis].abs() < 1e-12 {
                let p = a[axis];
                let slack = 1e-9 * (hi - lo).abs().max(1.0);
                if p <= lo + slack || p >= hi - slack {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[axis];
            let (mut t0, mut t1) = ((lo - a[axis]) * inv, (hi - a[axis]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_exit - t_enter <= INTERIOR_EPS {
                return false;
            }
        }
        t_exit - t_enter > INTERIOR_EPS
    }
}

/// A vertical building face lying in the plane `coord[axis] == coord`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Face {
    /// 0 for a plane of constant x, 1 for constant y.
    pub axis: usize,
    pub coord: f64,
    /// Extent along the other horizontal axis.
    pub lo: f64,
    pub hi: f64,
    pub height: f64,
    /// +1 when the outward normal points toward increasing `axis`.
    pub outward: f64,
    pub amplitude_factor: f64,
}

impl Face {
    pub fn of_building(b: &Building, amplitude_factor: f64) -> [Face; 4] {
        let base = Face {
            axis: 0,
            coord: 0.0,
            lo: 0.0,
            hi: 0.0,
            height: b.height,
            outward: 1.0,
            amplitude_factor,
        };
        [
            Face {
                axis: 0,
                coord: b.xmin,
                lo: b.ymin,
                hi: b.ymax,
                outward: -1.0,
                ..base
            },
            Face {
                axis: 0,
                coord: b.xmax,
                lo: b.ymin,
                hi: b.ymax,
                outward: 1.0,
                ..base
            },
            Face {
                axis: 1,
                coord: b.ymin,
                lo: b.xmin,
                hi: b.xmax,
                outward: -1.0,
                ..base
            },
            Face {
                axis: 1,
                coord: b.ymax,
                lo: b.xmin,
                hi: b.xmax,
                outward: 1.0,
                ..base
            },
        ]
    }

    /// Strictly on the outward side of the face plane.
    #[inline]
    pub fn faces_point(&self, p: Vec3) -> bool {
        (p[self.axis] - self.coord) * self.outward > 1e-9
    }

    /// Mirror image of `p` across the face plane.
    #[inline]
    pub fn mirror(&self, p: Vec3) -> Vec3 {
        let mut q = p;
        q[self.axis] = 2.0 * self.coord - p[self.axis];
        q
    }

    /// Where the segment `from -> to` crosses the face plane, if it does so
    /// strictly inside the segment and within the face rectangle.
    pub fn crossing(&self, from: Vec3, to: Vec3) -> Option<Vec3> {
        let d = to[self.axis] - from[self.axis];
        if d.abs() < 1e-12 {
            return None;
        }
        let t = (self.coord - from[self.axis]) / d;
        if !(t > 1e-12 && t < 1.0 - 1e-12) {
            return None;
        }
        let mut p = lerp(from, to, t);
        p[self.axis] = self.coord;
        let other = 1 - self.axis;
        let tol = 1e-9;
        if p[other] < self.lo - tol || p[other] > self.hi + tol {
            return None;
        }
        if p[2] < 0.0 || p[2] > self.height + tol {
            return None;
        }
        Some(p)
    }
}
