//! The canonical default body model.
//!
//! Built procedurally so the repository asset (`assets/body_model.json`) can
//! be regenerated byte-for-byte (`cargo run --example export_body_model`).
//! A ~1.7 m figure, left side on +X, facing +Z:
//!
//! * joints 0–21: pelvis/legs/spine/arms (22 body joints), 22–24 jaw and
//!   eyes, 25–39 left hand, 40–54 right hand (index/middle/pinky/ring/thumb,
//!   three joints each);
//! * surface points: rings on each major bone at that bone's capsule radius,
//!   a latitude grid on the head sphere, and a 30-point cloud per hand —
//!   655 total, ordered torso → head → legs → arms → hands;
//! * 23 capsules covering every major bone (hands and fingers excluded).
//!
//! The left/right joint layout mirrors exactly across the x = 0 plane, which
//! the synthetic mirror scenario relies on.

use nalgebra::Vector3;

use super::{BodyModel, BodyModelData, Capsule, Joint, SurfacePoint};

/// Pelvis height above the floor when standing with straight legs.
pub const PELVIS_HEIGHT: f64 = 0.93;

/// Joint indices of the canonical skeleton.
pub mod joints {
    pub const PELVIS: usize = 0;
    pub const L_HIP: usize = 1;
    pub const R_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const R_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const L_ANKLE: usize = 7;
    pub const R_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const L_FOOT: usize = 10;
    pub const R_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const L_COLLAR: usize = 13;
    pub const R_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const L_SHOULDER: usize = 16;
    pub const R_SHOULDER: usize = 17;
    pub const L_ELBOW: usize = 18;
    pub const R_ELBOW: usize = 19;
    pub const L_WRIST: usize = 20;
    pub const R_WRIST: usize = 21;
    pub const JAW: usize = 22;
    pub const L_EYE: usize = 23;
    pub const R_EYE: usize = 24;
    /// First left-hand finger joint; the 15 left-hand joints are 25..40.
    pub const L_HAND_START: usize = 25;
    /// First right-hand finger joint; the 15 right-hand joints are 40..55.
    pub const R_HAND_START: usize = 40;
}

/// Surface-point indices of the palm-center points (left, right): each sits
/// 0.10 m past its wrist along the forearm axis and is skinned rigidly to the
/// wrist, so an arm posed by two-bone IK carries it along the forearm line.
/// The synthetic handhold scenario grips dancers at these points.
pub const PALM_CENTER_POINTS: [usize; 2] = [595, 625];

/// Distance from the wrist joint to the palm-center point, along the forearm.
pub const PALM_CENTER_REACH: f64 = 0.10;

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

fn joint(name: &str, parent: Option<usize>, offset: Vector3<f64>) -> Joint {
    Joint {
        name: name.to_string(),
        parent,
        offset,
    }
}

fn build_joints() -> Vec<Joint> {
    use joints::*;
    let mut j = vec![
        joint("pelvis", None, v(0.0, 0.0, 0.0)),
        joint("left_hip", Some(PELVIS), v(0.09, -0.065, 0.0)),
        joint("right_hip", Some(PELVIS), v(-0.09, -0.065, 0.0)),
        joint("spine1", Some(PELVIS), v(0.0, 0.11, 0.0)),
        joint("left_knee", Some(L_HIP), v(0.0, -0.40, 0.0)),
        joint("right_knee", Some(R_HIP), v(0.0, -0.40, 0.0)),
        joint("spine2", Some(SPINE1), v(0.0, 0.12, 0.0)),
        joint("left_ankle", Some(L_KNEE), v(0.0, -0.40, 0.0)),
        joint("right_ankle", Some(R_KNEE), v(0.0, -0.40, 0.0)),
        joint("spine3", Some(SPINE2), v(0.0, 0.13, 0.0)),
        joint("left_foot", Some(L_ANKLE), v(0.0, -0.04, 0.13)),
        joint("right_foot", Some(R_ANKLE), v(0.0, -0.04, 0.13)),
        joint("neck", Some(SPINE3), v(0.0, 0.14, 0.0)),
        joint("left_collar", Some(SPINE3), v(0.08, 0.09, 0.0)),
        joint("right_collar", Some(SPINE3), v(-0.08, 0.09, 0.0)),
        joint("head", Some(NECK), v(0.0, 0.09, 0.01)),
        joint("left_shoulder", Some(L_COLLAR), v(0.10, 0.02, 0.0)),
        joint("right_shoulder", Some(R_COLLAR), v(-0.10, 0.02, 0.0)),
        joint("left_elbow", Some(L_SHOULDER), v(0.26, 0.0, 0.0)),
        joint("right_elbow", Some(R_SHOULDER), v(-0.26, 0.0, 0.0)),
        joint("left_wrist", Some(L_ELBOW), v(0.25, 0.0, 0.0)),
        joint("right_wrist", Some(R_ELBOW), v(-0.25, 0.0, 0.0)),
        joint("jaw", Some(HEAD), v(0.0, -0.02, 0.06)),
        joint("left_eye", Some(HEAD), v(0.03, 0.05, 0.08)),
        joint("right_eye", Some(HEAD), v(-0.03, 0.05, 0.08)),
    ];
    // Hands: (name stem, offset from wrist or previous joint).
    // Three-joint chains per finger, index/middle/pinky/ring/thumb.
    let fingers: [(&str, [Vector3<f64>; 3]); 5] = [
        ("index", [v(0.09, 0.0, 0.025), v(0.035, 0.0, 0.0), v(0.025, 0.0, 0.0)]),
        ("middle", [v(0.095, 0.0, 0.005), v(0.037, 0.0, 0.0), v(0.027, 0.0, 0.0)]),
        ("pinky", [v(0.085, 0.0, -0.035), v(0.028, 0.0, 0.0), v(0.02, 0.0, 0.0)]),
        ("ring", [v(0.09, 0.0, -0.015), v(0.033, 0.0, 0.0), v(0.024, 0.0, 0.0)]),
        ("thumb", [v(0.03, -0.01, 0.04), v(0.03, 0.0, 0.012), v(0.025, 0.0, 0.01)]),
    ];
    for (side, wrist, sign) in [("left", L_WRIST, 1.0), ("right", R_WRIST, -1.0)] {
        for (stem, offsets) in &fingers {
            for (k, off) in offsets.iter().enumerate() {
                let parent = if k == 0 { wrist } else { j.len() - 1 };
                let name = format!("{side}_{stem}{}", k + 1);
                j.push(joint(&name, Some(parent), v(sign * off.x, off.y, off.z)));
            }
        }
    }
    j
}

fn build_capsules() -> Vec<Capsule> {
    use joints::*;
    let caps: [(&str, usize, usize, f64); 23] = [
        ("torso_lower", PELVIS, SPINE1, 0.10),
        ("torso_mid", SPINE1, SPINE2, 0.105),
        ("torso_upper", SPINE2, SPINE3, 0.10),
        ("chest", SPINE3, NECK, 0.085),
        ("neck", NECK, HEAD, 0.05),
        ("head", HEAD, HEAD, 0.10),
        ("hip_left", PELVIS, L_HIP, 0.08),
        ("hip_right", PELVIS, R_HIP, 0.08),
        ("thigh_left", L_HIP, L_KNEE, 0.07),
        ("thigh_right", R_HIP, R_KNEE, 0.07),
        ("calf_left", L_KNEE, L_ANKLE, 0.055),
        ("calf_right", R_KNEE, R_ANKLE, 0.055),
        ("foot_left", L_ANKLE, L_FOOT, 0.035),
        ("foot_right", R_ANKLE, R_FOOT, 0.035),
        ("clavicle_left", SPINE3, L_COLLAR, 0.075),
        ("clavicle_right", SPINE3, R_COLLAR, 0.075),
        ("shoulder_left", L_COLLAR, L_SHOULDER, 0.06),
        ("shoulder_right", R_COLLAR, R_SHOULDER, 0.06),
        ("upper_arm_left", L_SHOULDER, L_ELBOW, 0.045),
        ("upper_arm_right", R_SHOULDER, R_ELBOW, 0.045),
        ("forearm_left", L_ELBOW, L_WRIST, 0.04),
        ("forearm_right", R_ELBOW, R_WRIST, 0.04),
        ("jaw", HEAD, JAW, 0.055),
    ];
    caps.iter()
        .map(|&(name, a, b, r)| Capsule {
            name: name.to_string(),
            joint_a: a,
            joint_b: b,
            radius: r,
        })
        .collect()
}

/// Orthonormal frame perpendicular to `d` (deterministic reference choice).
fn ring_basis(d: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let reference = if d.y.abs() < 0.9 { Vector3::y() } else { Vector3::z() };
    let e1 = d.cross(&reference).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

/// Rings of `per_ring` points around bone `a → b` at `radius`, skinned to
/// joint `a` with a partial blend toward `b` on the distal rings.
fn bone_rings(
    rest: &[Vector3<f64>],
    a: usize,
    b: usize,
    radius: f64,
    rings: usize,
    per_ring: usize,
    out: &mut Vec<SurfacePoint>,
) {
    let pa = rest[a];
    let pb = rest[b];
    let axis = pb - pa;
    let d = axis.normalize();
    let (e1, e2) = ring_basis(d);
    for k in 0..rings {
        let u = (k as f64 + 0.5) / rings as f64;
        let center = pa + axis * u;
        let weights = if u <= 0.7 {
            vec![(a, 1.0)]
        } else {
            let t = (u - 0.7) / 0.3;
            let wb = 0.5 * t;
            vec![(a, 1.0 - wb), (b, wb)]
        };
        // Stagger ring seams so points don't line up along the bone.
        let phase = 0.7 * k as f64;
        for m in 0..per_ring {
            let theta = phase + std::f64::consts::TAU * m as f64 / per_ring as f64;
            let position = center + (e1 * theta.cos() + e2 * theta.sin()) * radius;
            out.push(SurfacePoint {
                position,
                weights: weights.clone(),
            });
        }
    }
}

/// Latitude grid on the head sphere, skinned rigidly to the head.
fn head_sphere(rest: &[Vector3<f64>], out: &mut Vec<SurfacePoint>) {
    use joints::HEAD;
    let center = rest[HEAD];
    let radius = 0.10;
    for (k, phi_deg) in [30.0, 60.0, 90.0, 120.0, 150.0].iter().enumerate() {
        let phi = phi_deg * std::f64::consts::PI / 180.0;
        let phase = 0.5 * k as f64;
        for m in 0..9 {
            let theta = phase + std::f64::consts::TAU * m as f64 / 9.0;
            let dir = Vector3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin());
            out.push(SurfacePoint {
                position: center + dir * radius,
                weights: vec![(HEAD, 1.0)],
            });
        }
    }
}

/// 30 points per hand, all rigid to the wrist: the palm-center grip point on
/// the forearm axis, a palm ring, and four rows of finger-region points.
fn hand_cloud(rest: &[Vector3<f64>], wrist: usize, sign: f64, out: &mut Vec<SurfacePoint>) {
    let w = rest[wrist];
    let palm_center = w + v(sign * PALM_CENTER_REACH, 0.0, 0.0);
    out.push(SurfacePoint {
        position: palm_center,
        weights: vec![(wrist, 1.0)],
    });
    for m in 0..9 {
        let theta = std::f64::consts::TAU * m as f64 / 9.0;
        out.push(SurfacePoint {
            position: palm_center + v(sign * 0.035 * theta.cos(), 0.0, 0.035 * theta.sin()),
            weights: vec![(wrist, 1.0)],
        });
    }
    for zi in [0.03, 0.01, -0.01, -0.03] {
        for m in 0..5 {
            let x = 0.06 + 0.0225 * m as f64;
            out.push(SurfacePoint {
                position: w + v(sign * x, 0.0, zi),
                weights: vec![(wrist, 1.0)],
            });
        }
    }
}

fn build_surface(rest: &[Vector3<f64>]) -> Vec<SurfacePoint> {
    use joints::*;
    let mut out = Vec::with_capacity(super::SURFACE_POINT_COUNT);
    // (a, b, radius, rings, per_ring) — radii match the bone capsules so the
    // points lie on the capsule surface.
    let parts: [(usize, usize, f64, usize, usize); 19] = [
        (PELVIS, SPINE1, 0.10, 3, 12),
        (SPINE1, SPINE2, 0.105, 3, 12),
        (SPINE2, SPINE3, 0.10, 3, 12),
        (SPINE3, NECK, 0.085, 3, 12),
        (NECK, HEAD, 0.05, 2, 9),
        (PELVIS, L_HIP, 0.08, 2, 8),
        (PELVIS, R_HIP, 0.08, 2, 8),
        (L_HIP, L_KNEE, 0.07, 4, 10),
        (R_HIP, R_KNEE, 0.07, 4, 10),
        (L_KNEE, L_ANKLE, 0.055, 4, 9),
        (R_KNEE, R_ANKLE, 0.055, 4, 9),
        (L_ANKLE, L_FOOT, 0.035, 2, 8),
        (R_ANKLE, R_FOOT, 0.035, 2, 8),
        (L_COLLAR, L_SHOULDER, 0.06, 2, 7),
        (R_COLLAR, R_SHOULDER, 0.06, 2, 7),
        (L_SHOULDER, L_ELBOW, 0.045, 4, 9),
        (R_SHOULDER, R_ELBOW, 0.045, 4, 9),
        (L_ELBOW, L_WRIST, 0.04, 4, 9),
        (R_ELBOW, R_WRIST, 0.04, 4, 9),
    ];
    for &(a, b, r, rings, per) in parts.iter().take(5) {
        bone_rings(rest, a, b, r, rings, per, &mut out);
    }
    head_sphere(rest, &mut out);
    for &(a, b, r, rings, per) in parts.iter().skip(5) {
        bone_rings(rest, a, b, r, rings, per, &mut out);
    }
    hand_cloud(rest, L_WRIST, 1.0, &mut out);
    hand_cloud(rest, R_WRIST, -1.0, &mut out);
    out
}

/// The canonical model's serializable data.
pub fn data() -> BodyModelData {
    use joints::*;
    let joints = build_joints();
    let mut rest = vec![Vector3::zeros(); joints.len()];
    for (i, j) in joints.iter().enumerate() {
        rest[i] = match j.parent {
            None => j.offset,
            Some(p) => rest[p] + j.offset,
        };
    }
    let surface_points = build_surface(&rest);
    BodyModelData {
        fps: 30.0,
        joints,
        surface_points,
        capsules: build_capsules(),
        foot_joints: [L_ANKLE, R_ANKLE, L_FOOT, R_FOOT],
        wrists: [L_WRIST, R_WRIST],
        finger_joints: (L_HAND_START..L_HAND_START + 30).collect(),
    }
}

/// The canonical validated model.
pub fn model() -> BodyModel {
    BodyModel::new(data()).expect("canonical model must validate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{FINGER_JOINT_COUNT, JOINT_COUNT, SURFACE_POINT_COUNT};

    #[test]
    fn canonical_counts() {
        let m = model();
        assert_eq!(m.joints().len(), JOINT_COUNT);
        assert_eq!(m.surface_points().len(), SURFACE_POINT_COUNT);
        assert_eq!(m.capsules().len(), 23);
        assert_eq!(m.finger_joints().len(), FINGER_JOINT_COUNT);
    }

    #[test]
    fn shipped_json_asset_matches_the_built_in_model() {
        let shipped = include_str!("../../assets/body_model.json");
        let expected = serde_json::to_string_pretty(&data()).expect("model serializes");
        assert_eq!(
            shipped.trim_end(),
            expected.trim_end(),
            "assets/body_model.json is stale; regenerate it with the \
             export_body_model example"
        );
    }

    #[test]
    fn left_right_joints_mirror_exactly() {
        let m = model();
        for (l, r) in [
            (joints::L_HIP, joints::R_HIP),
            (joints::L_KNEE, joints::R_KNEE),
            (joints::L_ANKLE, joints::R_ANKLE),
            (joints::L_FOOT, joints::R_FOOT),
            (joints::L_COLLAR, joints::R_COLLAR),
            (joints::L_SHOULDER, joints::R_SHOULDER),
            (joints::L_ELBOW, joints::R_ELBOW),
            (joints::L_WRIST, joints::R_WRIST),
            (joints::L_EYE, joints::R_EYE),
        ] {
            let lo = m.joints()[l].offset;
            let ro = m.joints()[r].offset;
            assert_eq!(lo.x, -ro.x, "x must mirror for {}", m.joints()[l].name);
            assert_eq!(lo.y, ro.y);
            assert_eq!(lo.z, ro.z);
        }
        // Hand chains mirror index-for-index.
        for k in 0..15 {
            let lo = m.joints()[joints::L_HAND_START + k].offset;
            let ro = m.joints()[joints::R_HAND_START + k].offset;
            assert_eq!(lo.x, -ro.x);
            assert_eq!(lo.y, ro.y);
            assert_eq!(lo.z, ro.z);
        }
    }

    #[test]
    fn standing_foot_heights_sit_under_contact_threshold() {
        // With the pelvis at PELVIS_HEIGHT the ankles and toes must rest
        // below the 0.08 m floor-contact height threshold.
        let m = model();
        let ankle_y = PELVIS_HEIGHT + m.rest_positions()[joints::L_ANKLE].y;
        let toe_y = PELVIS_HEIGHT + m.rest_positions()[joints::L_FOOT].y;
        assert!((ankle_y - 0.065).abs() < 1e-12, "ankle at {ankle_y}");
        assert!((toe_y - 0.025).abs() < 1e-12, "toe at {toe_y}");
    }

    #[test]
    fn palm_center_points_sit_on_the_forearm_axis() {
        let m = model();
        let [lp, rp] = PALM_CENTER_POINTS;
        let lw = m.rest_positions()[joints::L_WRIST];
        let rw = m.rest_positions()[joints::R_WRIST];
        let left = &m.surface_points()[lp];
        let right = &m.surface_points()[rp];
        assert_eq!(left.weights, vec![(joints::L_WRIST, 1.0)]);
        assert_eq!(right.weights, vec![(joints::R_WRIST, 1.0)]);
        let expect_l = lw + Vector3::new(PALM_CENTER_REACH, 0.0, 0.0);
        let expect_r = rw + Vector3::new(-PALM_CENTER_REACH, 0.0, 0.0);
        assert!((left.position - expect_l).norm() < 1e-12);
        assert!((right.position - expect_r).norm() < 1e-12);
    }

    #[test]
    fn no_capsule_touches_finger_joints() {
        let m = model();
        for c in m.capsules() {
            assert!(!m.is_finger(c.joint_a), "{} uses finger joint", c.name);
            assert!(!m.is_finger(c.joint_b), "{} uses finger joint", c.name);
        }
    }

    #[test]
    fn surface_points_near_their_bones() {
        // Every skinned point should sit within ~2 capsule radii of some
        // capsule axis in the rest pose; catches gross placement bugs.
        let m = model();
        let caps = m.posed_capsules(&m.rest_positions().to_vec());
        for (i, sp) in m.surface_points().iter().enumerate() {
            let s = crate::body::sdf::sdf(&caps, sp.position);
            assert!(
                s.distance < 0.25,
                "surface point {i} is {:.3} m outside the capsule union",
                s.distance
            );
        }
    }
}
