//! Motion feature extractors used by the distribution metrics.
//!
//! Three fixed-length per-sequence feature vectors:
//!
//! * **kinetic** (56) — per-joint mean squared speed in (m/s)², plus the sum
//!   over joints as the last entry. Invariant to rigid transforms of the
//!   whole motion.
//! * **geometric** (16) — the fraction of frames on which each of sixteen
//!   boolean pose relations holds (names in [`geometric_feature_names`];
//!   thresholds are fixed constants documented there). Heading-dependent
//!   relations are evaluated in the dancer's own heading frame.
//! * **cross-distance** (200) — the per-frame 10×10 distance matrix between
//!   ten named joints of the leader and follower
//!   ([`CROSS_DISTANCE_JOINTS`]), reduced to the per-entry mean (first 100)
//!   and per-entry population standard deviation (last 100).
//!
//! All extractors require at least two frames.

use nalgebra::Vector3;

use crate::body::canonical::joints;
use crate::body::{PointCloudFrame, JOINT_COUNT};
use crate::error::{Error, Result};
use crate::rep::rotate_y;

pub const KINETIC_DIM: usize = JOINT_COUNT + 1;
pub const GEOMETRIC_DIM: usize = 16;
pub const CROSS_DISTANCE_DIM: usize = 200;

/// The ten joints whose pairwise leader–follower distances form the
/// cross-distance features: pelvis, knees, toes, shoulders, head, wrists.
pub const CROSS_DISTANCE_JOINTS: [usize; 10] = [
    joints::PELVIS,
    joints::L_KNEE,
    joints::R_KNEE,
    joints::L_FOOT,
    joints::R_FOOT,
    joints::L_SHOULDER,
    joints::R_SHOULDER,
    joints::HEAD,
    joints::L_WRIST,
    joints::R_WRIST,
];

/// Which feature family a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Kinetic,
    Geometric,
    CrossDistance,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Kinetic => KINETIC_DIM,
            FeatureKind::Geometric => GEOMETRIC_DIM,
            FeatureKind::CrossDistance => CROSS_DISTANCE_DIM,
        }
    }
}

/// One per-sequence feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

fn require_frames(len: usize, what: &str) -> Result<()> {
    if len < 2 {
        return Err(Error::data(format!(
            "{what} features need at least 2 frames, got {len}"
        )));
    }
    Ok(())
}

/// Per-joint mean squared speed (m/s)² over the sequence, with the sum over
/// joints appended.
pub fn kinetic_features(clouds: &[PointCloudFrame], fps: f64) -> Result<FeatureVector> {
    require_frames(clouds.len(), "kinetic")?;
    let steps = clouds.len() - 1;
    let mut values = vec![0.0; KINETIC_DIM];
    for t in 0..steps {
        for j in 0..JOINT_COUNT {
            let v = (clouds[t + 1].joints[j] - clouds[t].joints[j]) * fps;
            values[j] += v.norm_squared();
        }
    }
    for v in values.iter_mut().take(JOINT_COUNT) {
        *v /= steps as f64;
    }
    values[JOINT_COUNT] = values[..JOINT_COUNT].iter().sum();
    Ok(FeatureVector {
        kind: FeatureKind::Kinetic,
        values,
    })
}

/// Names of the sixteen boolean pose relations, in feature order.
pub fn geometric_feature_names() -> [&'static str; GEOMETRIC_DIM] {
    [
        "left_hand_above_head",
        "right_hand_above_head",
        "hands_together",
        "hands_forward",
        "left_foot_leading",
        "right_foot_leading",
        "feet_crossed",
        "wide_stance",
        "left_knee_bent",
        "right_knee_bent",
        "left_elbow_bent",
        "right_elbow_bent",
        "crouching",
        "leaning",
        "hands_low",
        "foot_raised",
    ]
}

/// Interior angle at `b` formed by `a` and `c`, radians; straight (π) for
/// degenerate geometry.
fn interior_angle(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> f64 {
    let u = a - b;
    let v = c - b;
    let nu = u.norm();
    let nv = v.norm();
    if nu < 1e-12 || nv < 1e-12 {
        return std::f64::consts::PI;
    }
    (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos()
}

/// Evaluate the sixteen boolean pose relations on one frame. `yaw` is the
/// dancer's heading, used to express forward/sideways relations in the body
/// frame.
pub fn geometric_flags(cloud: &PointCloudFrame, yaw: f64) -> [bool; GEOMETRIC_DIM] {
    use joints::*;
    let j = &cloud.joints;
    let pelvis = j[PELVIS];
    let canonical = |p: Vector3<f64>| rotate_y(p - pelvis, -yaw);
    let lw = j[L_WRIST];
    let rw = j[R_WRIST];
    let la = canonical(j[L_ANKLE]);
    let ra = canonical(j[R_ANKLE]);
    let bend = 2.2; // radians; straight is π
    let torso = j[NECK] - pelvis;
    let lean = if torso.norm() < 1e-12 {
        0.0
    } else {
        (torso.normalize().dot(&Vector3::y())).clamp(-1.0, 1.0).acos()
    };
    let ankles_apart =
        ((j[L_ANKLE].x - j[R_ANKLE].x).powi(2) + (j[L_ANKLE].z - j[R_ANKLE].z).powi(2)).sqrt();
    let l_high = j[L_ANKLE].y > 0.12;
    let r_high = j[R_ANKLE].y > 0.12;
    [
        lw.y > j[HEAD].y,
        rw.y > j[HEAD].y,
        (lw - rw).norm() < 0.3,
        canonical(lw).z > 0.25 && canonical(rw).z > 0.25,
        la.z > ra.z + 0.10,
        ra.z > la.z + 0.10,
        la.x < ra.x,
        ankles_apart > 0.35,
        interior_angle(j[L_HIP], j[L_KNEE], j[L_ANKLE]) < bend,
        interior_angle(j[R_HIP], j[R_KNEE], j[R_ANKLE]) < bend,
        interior_angle(j[L_SHOULDER], j[L_ELBOW], j[L_WRIST]) < bend,
        interior_angle(j[R_SHOULDER], j[R_ELBOW], j[R_WRIST]) < bend,
        pelvis.y < 0.75,
        lean > 0.3,
        lw.y < pelvis.y && rw.y < pelvis.y,
        l_high != r_high,
    ]
}

/// Fraction of frames on which each boolean pose relation holds.
pub fn geometric_features(clouds: &[PointCloudFrame], yaws: &[f64]) -> Result<FeatureVector> {
    require_frames(clouds.len(), "geometric")?;
    if clouds.len() != yaws.len() {
        return Err(Error::data(format!(
            "geometric features: {} frames but {} yaw values",
            clouds.len(),
            yaws.len()
        )));
    }
    let mut values = vec![0.0; GEOMETRIC_DIM];
    for (cloud, &yaw) in clouds.iter().zip(yaws) {
        for (k, &on) in geometric_flags(cloud, yaw).iter().enumerate() {
            if on {
                values[k] += 1.0;
            }
        }
    }
    for v in values.iter_mut() {
        *v /= clouds.len() as f64;
    }
    Ok(FeatureVector {
        kind: FeatureKind::Geometric,
        values,
    })
}

/// Mean and population standard deviation of every entry of the per-frame
/// 10×10 leader–follower joint distance matrix.
pub fn cross_distance_features(
    leader: &[PointCloudFrame],
    follower: &[PointCloudFrame],
) -> Result<FeatureVector> {
    require_frames(leader.len(), "cross-distance")?;
    if leader.len() != follower.len() {
        return Err(Error::data(format!(
            "cross-distance features: leader has {} frames, follower {}",
            leader.len(),
            follower.len()
        )));
    }
    let t_len = leader.len() as f64;
    // Two passes (mean, then centered spread) so constant distances give an
    // exactly tiny standard deviation instead of a √(rounding) residue.
    let mut dists = vec![0.0; 100 * leader.len()];
    let mut mean = vec![0.0; 100];
    for (t, (lc, fc)) in leader.iter().zip(follower).enumerate() {
        for (a, &ja) in CROSS_DISTANCE_JOINTS.iter().enumerate() {
            for (b, &jb) in CROSS_DISTANCE_JOINTS.iter().enumerate() {
                let d = (lc.joints[ja] - fc.joints[jb]).norm();
                dists[100 * t + 10 * a + b] = d;
                mean[10 * a + b] += d;
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= t_len;
    }
    let mut values = Vec::with_capacity(CROSS_DISTANCE_DIM);
    values.extend_from_slice(&mean);
    for k in 0..100 {
        let var = (0..leader.len())
            .map(|t| {
                let d = dists[100 * t + k] - mean[k];
                d * d
            })
            .sum::<f64>()
            / t_len;
        values.push(var.sqrt());
    }
    Ok(FeatureVector {
        kind: FeatureKind::CrossDistance,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::canonical::{self, PELVIS_HEIGHT};
    use crate::body::PoseFrame;
    use crate::data::synth::standing;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn cloud_sequence(frames: usize, seed: u64) -> Vec<PointCloudFrame> {
        let model = canonical::model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (0..JOINT_COUNT).map(|_| rng.gen_range(0.0..TAU)).collect();
        (0..frames)
            .map(|t| {
                let s = t as f64 / 30.0;
                let mut rot = vec![Vector3::zeros(); JOINT_COUNT];
                for (j, &p) in phases.iter().enumerate().skip(1) {
                    let a = 0.3 * (1.3 * s + p).sin();
                    rot[j] = Vector3::new(a, 0.4 * a, -0.2 * a);
                }
                rot[0] = Vector3::new(0.0, 0.5 * s.sin(), 0.0);
                let root = Vector3::new(0.2 * s.sin(), PELVIS_HEIGHT, 0.3 * s.cos());
                model.pose_points(&PoseFrame::new(root, rot))
            })
            .collect()
    }

    #[test]
    fn static_sequence_has_zero_kinetic_features() {
        let model = canonical::model();
        let cloud = model.pose_points(&standing(Vector3::new(0.0, PELVIS_HEIGHT, 0.0), 0.2));
        let clouds = vec![cloud; 5];
        let f = kinetic_features(&clouds, 30.0).unwrap();
        assert_eq!(f.values.len(), KINETIC_DIM);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kinetic_matches_double_loop_oracle() {
        let clouds = cloud_sequence(20, 3);
        let fps = 30.0;
        let f = kinetic_features(&clouds, fps).unwrap();
        for j in 0..JOINT_COUNT {
            let mut acc = 0.0;
            for t in 0..clouds.len() - 1 {
                let d = clouds[t + 1].joints[j] - clouds[t].joints[j];
                acc += (d * fps).norm_squared();
            }
            let oracle = acc / (clouds.len() - 1) as f64;
            assert!((f.values[j] - oracle).abs() < 1e-9, "joint {j}");
        }
        let total: f64 = f.values[..JOINT_COUNT].iter().sum();
        assert!((f.values[JOINT_COUNT] - total).abs() < 1e-12);
        assert!(f.values[JOINT_COUNT] > 0.0);
    }

    #[test]
    fn kinetic_invariant_to_rigid_transforms() {
        let clouds = cloud_sequence(15, 8);
        let q = UnitQuaternion::from_scaled_axis(Vector3::new(0.4, 1.1, -0.7));
        let shift = Vector3::new(3.0, -1.0, 2.5);
        let moved: Vec<PointCloudFrame> = clouds
            .iter()
            .map(|c| PointCloudFrame {
                joints: c.joints.iter().map(|p| q * p + shift).collect(),
                vertices: c.vertices.iter().map(|p| q * p + shift).collect(),
            })
            .collect();
        let a = kinetic_features(&clouds, 30.0).unwrap();
        let b = kinetic_features(&moved, 30.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn sequences_shorter_than_two_frames_are_rejected() {
        let clouds = cloud_sequence(1, 0);
        assert!(kinetic_features(&clouds, 30.0).is_err());
        assert!(geometric_features(&clouds, &[0.0]).is_err());
        assert!(cross_distance_features(&clouds, &clouds).is_err());
    }

    #[test]
    fn geometric_flags_fire_on_constructed_poses() {
        let model = canonical::model();
        let rest = model.pose_points(&standing(Vector3::new(0.0, PELVIS_HEIGHT, 0.0), 0.0));
        let names = geometric_feature_names();
        let idx = |n: &str| names.iter().position(|&m| m == n).unwrap();

        // Neutral standing: knees and elbows straight, hands not above head.
        let flags = geometric_flags(&rest, 0.0);
        assert!(!flags[idx("left_hand_above_head")]);
        assert!(!flags[idx("left_knee_bent")]);
        assert!(!flags[idx("right_elbow_bent")]);
        assert!(!flags[idx("crouching")]);
        assert!(!flags[idx("feet_crossed")]);
        assert!(!flags[idx("foot_raised")]);

        // Raise the left wrist above the head.
        let mut up = rest.clone();
        up.joints[joints::L_WRIST].y = up.joints[joints::HEAD].y + 0.2;
        assert!(geometric_flags(&up, 0.0)[idx("left_hand_above_head")]);

        // Cross the feet.
        let mut crossed = rest.clone();
        crossed.joints[joints::L_ANKLE].x = -0.2;
        crossed.joints[joints::R_ANKLE].x = 0.2;
        assert!(geometric_flags(&crossed, 0.0)[idx("feet_crossed")]);

        // Lift one ankle.
        let mut lifted = rest.clone();
        lifted.joints[joints::R_ANKLE].y = 0.3;
        assert!(geometric_flags(&lifted, 0.0)[idx("foot_raised")]);

        // Step the left foot forward in a rotated heading: the relation
        // must follow the body frame, not the world axes.
        let yaw = 1.3;
        let mut step = rest.clone();
        let forward = rotate_y(Vector3::new(0.0, 0.0, 0.3), yaw);
        step.joints[joints::L_ANKLE] += forward;
        let step_flags = geometric_flags(&step, yaw);
        assert!(step_flags[idx("left_foot_leading")]);
        assert!(!step_flags[idx("right_foot_leading")]);
    }

    #[test]
    fn geometric_frequencies_stay_in_unit_interval() {
        let clouds = cloud_sequence(25, 5);
        let yaws = vec![0.1; 25];
        let f = geometric_features(&clouds, &yaws).unwrap();
        assert_eq!(f.values.len(), GEOMETRIC_DIM);
        assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn frozen_offset_dancers_have_zero_distance_spread() {
        let model = canonical::model();
        let lead = model.pose_points(&standing(Vector3::new(0.0, PELVIS_HEIGHT, 0.0), 0.0));
        let mut foll = lead.clone();
        for p in foll.joints.iter_mut().chain(foll.vertices.iter_mut()) {
            p.x += 1.0;
        }
        let leads = vec![lead; 6];
        let folls = vec![foll; 6];
        let f = cross_distance_features(&leads, &folls).unwrap();
        assert_eq!(f.values.len(), CROSS_DISTANCE_DIM);
        // Means positive (pelvis-to-pelvis exactly 1 m), stds at rounding level.
        assert!((f.values[0] - 1.0).abs() < 1e-12);
        assert!(f.values[..100].iter().all(|&v| v > 0.0));
        assert!(f.values[100..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn cross_distance_matches_direct_oracle() {
        let leads = cloud_sequence(12, 1);
        let folls = cloud_sequence(12, 2);
        let f = cross_distance_features(&leads, &folls).unwrap();
        // Check one arbitrary entry (leader head to follower left wrist).
        let a = 7;
        let b = 8;
        let ds: Vec<f64> = (0..12)
            .map(|t| {
                (leads[t].joints[CROSS_DISTANCE_JOINTS[a]]
                    - folls[t].joints[CROSS_DISTANCE_JOINTS[b]])
                    .norm()
            })
            .collect();
        let mean = ds.iter().sum::<f64>() / 12.0;
        let var = ds.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / 12.0;
        assert!((f.values[10 * a + b] - mean).abs() < 1e-9);
        assert!((f.values[100 + 10 * a + b] - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn feature_names_are_unique_and_complete() {
        let names = geometric_feature_names();
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), GEOMETRIC_DIM);
        assert_eq!(FeatureKind::Kinetic.dim(), 56);
        assert_eq!(FeatureKind::Geometric.dim(), 16);
        assert_eq!(FeatureKind::CrossDistance.dim(), 200);
    }
}
