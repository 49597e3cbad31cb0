//! Signed distance to a union of capsules.
//!
//! The body volume is approximated by the union of the model's bone capsules.
//! The signed distance of a query point is the minimum over capsules of
//! (distance to the bone segment − radius): negative inside, zero on the
//! surface, positive outside. The gradient is the unit vector from the
//! nearest segment point to the query, taken from the capsule attaining the
//! minimum; ties go to the lowest capsule index so results are deterministic.

use nalgebra::Vector3;

/// A capsule positioned in world space: segment `a → b` with a radius.
/// `a == b` degenerates to a sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosedCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Result of a signed-distance query against a capsule union.
#[derive(Debug, Clone, Copy)]
pub struct SdfSample {
    /// Signed distance in meters; negative inside the union.
    pub distance: f64,
    /// Unit direction of steepest increase (away from the winning capsule's
    /// axis). Well-defined everywhere except exactly on an axis, where an
    /// arbitrary fixed unit vector (+Y) is returned.
    pub gradient: Vector3<f64>,
    /// Index of the capsule attaining the minimum (lowest index on ties).
    pub capsule: usize,
}

/// Signed distance and gradient from `query` to a single capsule.
fn capsule_distance(c: &PosedCapsule, query: Vector3<f64>) -> (f64, Vector3<f64>) {
    let pa = query - c.a;
    let ba = c.b - c.a;
    let len2 = ba.dot(&ba);
    let closest = if len2 < 1e-18 {
        c.a
    } else {
        let h = (pa.dot(&ba) / len2).clamp(0.0, 1.0);
        c.a + ba * h
    };
    let diff = query - closest;
    let dist = diff.norm();
    let grad = if dist > 1e-12 {
        diff / dist
    } else {
        Vector3::y()
    };
    (dist - c.radius, grad)
}

/// Signed distance from `query` to the union of `capsules`, with gradient.
///
/// Panics if `capsules` is empty; models always carry at least one capsule.
pub fn sdf(capsules: &[PosedCapsule], query: Vector3<f64>) -> SdfSample {
    assert!(!capsules.is_empty(), "capsule union must be non-empty");
    let mut best = SdfSample {
        distance: f64::INFINITY,
        gradient: Vector3::y(),
        capsule: 0,
    };
    for (i, c) in capsules.iter().enumerate() {
        let (d, g) = capsule_distance(c, query);
        // Strict `<` keeps the lowest index on exact ties.
        if d < best.distance {
            best = SdfSample {
                distance: d,
                gradient: g,
                capsule: i,
            };
        }
    }
    best
}
