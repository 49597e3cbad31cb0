//! Skeleton, skinned surface points, and the capsule body volume.
//!
//! A [`BodyModel`] is a fixed-topology articulated body:
//!
//! * 55 joints in parent-before-child order — 22 body joints, jaw, two eyes,
//!   and 30 finger joints (15 per hand);
//! * 655 surface points, each skinned to at most two joints with convex
//!   weights, standing in for a full body mesh;
//! * a union of capsules, one per major bone (fingers excluded), that acts as
//!   a cheap signed distance proxy for the body volume.
//!
//! Poses are axis-angle per joint plus a root translation. All lengths are
//! meters; the floor is `y = 0`; a dancer with identity rotations stands in a
//! T-pose facing +Z, arms along ±X.
//!
//! The canonical model used by the rest of the crate is built procedurally by
//! [`canonical::model`] and also ships serialized as
//! `assets/body_model.json`; [`load_body_model`] reads any structurally valid
//! model file with the same schema.

pub mod canonical;
pub mod sdf;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

use crate::error::{Error, Result};
use sdf::PosedCapsule;

/// Number of joints in every model (fixed topology).
pub const JOINT_COUNT: usize = 55;
/// Number of skinned surface points in every model.
pub const SURFACE_POINT_COUNT: usize = 655;
/// Joints plus surface points; the unified "body point" index space used by
/// contact labels (indices `0..55` are joints, `55..710` surface points).
pub const POINT_COUNT: usize = JOINT_COUNT + SURFACE_POINT_COUNT;
/// Number of finger joints (15 per hand), measured wrist-relative by the
/// motion encoding.
pub const FINGER_JOINT_COUNT: usize = 30;
/// Number of foot joints carrying floor-contact labels (ankles and toes).
pub const FOOT_JOINT_COUNT: usize = 4;

/// One joint: a name, a parent (`None` only for the root at index 0), and the
/// rest-pose offset from the parent joint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
}

/// One skinned surface point: a rest-pose position and 1–2 `(joint, weight)`
/// pairs with weights summing to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: Vector3<f64>,
    pub weights: Vec<(usize, f64)>,
}

/// One body capsule spanning two joints. `joint_a == joint_b` degenerates to
/// a sphere, used for the head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Capsule {
    pub name: String,
    pub joint_a: usize,
    pub joint_b: usize,
    pub radius: f64,
}

/// The serialized face of a body model; see `docs/FORMATS.md` for the JSON
/// schema. Construct a usable model with [`BodyModel::new`], which validates
/// and precomputes rest-pose state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyModelData {
    /// Frames per second the model's motion data is authored at.
    pub fps: f64,
    pub joints: Vec<Joint>,
    pub surface_points: Vec<SurfacePoint>,
    pub capsules: Vec<Capsule>,
    /// Joints tested for floor contact: left/right ankle, left/right toe.
    pub foot_joints: [usize; 4],
    /// Left and right wrist joints; finger joints are encoded relative to
    /// these.
    pub wrists: [usize; 2],
    /// The 30 finger joints (each must descend from one of the wrists).
    pub finger_joints: Vec<usize>,
}

/// A validated body model with precomputed rest-pose joint positions.
#[derive(Debug, Clone)]
pub struct BodyModel {
    data: BodyModelData,
    /// Global joint positions in the rest pose (identity rotations, zero root
    /// translation): cumulative parent offsets.
    rest_positions: Vec<Vector3<f64>>,
    /// For each joint, the wrist it descends from, if any. Finger joints map
    /// to their own hand's wrist; everything else is `None`.
    wrist_of: Vec<Option<usize>>,
}

impl BodyModel {
    /// Validate `data` and build the model.
    ///
    /// Checks, in order: joint count is 55, parents precede children, surface
    /// point count is 655, every point has 1–2 weights over valid joints
    /// summing to 1, capsules and index lists reference valid joints, finger
    /// joints descend from a wrist, and `fps` is positive and finite.
    pub fn new(data: BodyModelData) -> Result<Self> {
        if data.joints.len() != JOINT_COUNT {
            return Err(Error::data(format!(
                "joint count must be {JOINT_COUNT}, model has {}",
                data.joints.len()
            )));
        }
        for (i, j) in data.joints.iter().enumerate() {
            match j.parent {
                None => {
                    if i != 0 {
                        return Err(Error::data(format!(
                            "joints[{i}] ({}): only the root joint (index 0) may lack a parent",
                            j.name
                        )));
                    }
                }
                Some(p) => {
                    if i == 0 {
                        return Err(Error::data(
                            "joints[0]: the root joint must not have a parent".to_string(),
                        ));
                    }
                    if p >= i {
                        return Err(Error::data(format!(
                            "joints[{i}] ({}): parent index {p} must precede the joint",
                            j.name
                        )));
                    }
                }
            }
            if !(j.offset.x.is_finite() && j.offset.y.is_finite() && j.offset.z.is_finite()) {
                return Err(Error::data(format!(
                    "joints[{i}] ({}): offset must be finite",
                    j.name
                )));
            }
        }
        if data.surface_points.len() != SURFACE_POINT_COUNT {
            return Err(Error::data(format!(
                "surface point count must be {SURFACE_POINT_COUNT}, model has {}",
                data.surface_points.len()
            )));
        }
        for (i, sp) in data.surface_points.iter().enumerate() {
            if sp.weights.is_empty() || sp.weights.len() > 2 {
                return Err(Error::data(format!(
                    "surface_points[{i}]: must have 1 or 2 skinning weights, has {}",
                    sp.weights.len()
                )));
            }
            let mut sum = 0.0;
            for &(joint, w) in &sp.weights {
                if joint >= JOINT_COUNT {
                    return Err(Error::data(format!(
                        "surface_points[{i}]: weight references joint {joint}, out of range"
                    )));
                }
                if !w.is_finite() || w <= 0.0 {
                    return Err(Error::data(format!(
                        "surface_points[{i}]: weight {w} must be finite and positive"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::data(format!(
                    "surface_points[{i}]: weights must sum to 1, got {sum}"
                )));
            }
        }
        for (i, c) in data.capsules.iter().enumerate() {
            if c.joint_a >= JOINT_COUNT || c.joint_b >= JOINT_COUNT {
                return Err(Error::data(format!(
                    "capsules[{i}] ({}): joint indices ({}, {}) out of range",
                    c.name, c.joint_a, c.joint_b
                )));
            }
            if !c.radius.is_finite() || c.radius <= 0.0 {
                return Err(Error::data(format!(
                    "capsules[{i}] ({}): radius must be finite and positive, got {}",
                    c.name, c.radius
                )));
            }
        }
        for &f in data.foot_joints.iter().chain(data.wrists.iter()) {
            if f >= JOINT_COUNT {
                return Err(Error::data(format!(
                    "foot/wrist joint index {f} out of range"
                )));
            }
        }
        if data.finger_joints.len() != FINGER_JOINT_COUNT {
            return Err(Error::data(format!(
                "finger joint list must have {FINGER_JOINT_COUNT} entries, has {}",
                data.finger_joints.len()
            )));
        }
        if !data.fps.is_finite() || data.fps <= 0.0 {
            return Err(Error::data(format!(
                "fps must be positive and finite, got {}",
                data.fps
            )));
        }

        let mut rest_positions = vec![Vector3::zeros(); JOINT_COUNT];
        for i in 0..JOINT_COUNT {
            rest_positions[i] = match data.joints[i].parent {
                None => data.joints[i].offset,
                Some(p) => rest_positions[p] + data.joints[i].offset,
            };
        }

        // Resolve which wrist (if any) each joint hangs from.
        let mut wrist_of = vec![None; JOINT_COUNT];
        for i in 0..JOINT_COUNT {
            let mut cur = i;
            while let Some(p) = data.joints[cur].parent {
                if data.wrists.contains(&p) {
                    wrist_of[i] = Some(p);
                    break;
                }
                cur = p;
            }
        }
        for &f in &data.finger_joints {
            if f >= JOINT_COUNT || wrist_of[f].is_none() {
                return Err(Error::data(format!(
                    "finger joint {f} does not descend from a wrist"
                )));
            }
        }

        Ok(BodyModel {
            data,
            rest_positions,
            wrist_of,
        })
    }

    pub fn fps(&self) -> f64 {
        self.data.fps
    }

    pub fn joints(&self) -> &[Joint] {
        &self.data.joints
    }

    pub fn surface_points(&self) -> &[SurfacePoint] {
        &self.data.surface_points
    }

    pub fn capsules(&self) -> &[Capsule] {
        &self.data.capsules
    }

    pub fn foot_joints(&self) -> [usize; 4] {
        self.data.foot_joints
    }

    pub fn wrists(&self) -> [usize; 2] {
        self.data.wrists
    }

    pub fn finger_joints(&self) -> &[usize] {
        &self.data.finger_joints
    }

    /// Global joint positions in the rest pose (identity rotations, zero root
    /// translation).
    pub fn rest_positions(&self) -> &[Vector3<f64>] {
        &self.rest_positions
    }

    /// The wrist ancestor of `joint`, if it has one.
    pub fn wrist_of(&self, joint: usize) -> Option<usize> {
        self.wrist_of[joint]
    }

    /// True if `joint` is one of the 30 finger joints.
    pub fn is_finger(&self, joint: usize) -> bool {
        self.data.finger_joints.contains(&joint)
    }

    /// Index of the first joint with the given name.
    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.data.joints.iter().position(|j| j.name == name)
    }

    /// Borrow the serializable form.
    pub fn data(&self) -> &BodyModelData {
        &self.data
    }

    /// Global joint transforms for one pose, in joint order.
    ///
    /// The root transform rotates by `pose.rotations[0]` about the root
    /// translation; each child composes its parent's transform with its rest
    /// offset and local rotation. With identity rotations and zero root
    /// translation every joint sits at its rest position.
    pub fn forward_kinematics(&self, pose: &PoseFrame) -> Vec<Isometry3<f64>> {
        let mut out = Vec::with_capacity(JOINT_COUNT);
        let root = Isometry3::from_parts(
            Translation3::from(pose.root),
            UnitQuaternion::from_scaled_axis(pose.rotations[0]),
        );
        out.push(root);
        for i in 1..JOINT_COUNT {
            let parent = self.data.joints[i].parent.expect("non-root joint has parent");
            let local = Isometry3::from_parts(
                Translation3::from(self.data.joints[i].offset),
                UnitQuaternion::from_scaled_axis(pose.rotations[i]),
            );
            out.push(out[parent] * local);
        }
        out
    }

    /// Linear-blend-skin the surface points under the given joint transforms.
    ///
    /// A point with a single weight follows that joint rigidly; identity
    /// transforms at the rest pose reproduce the authored positions exactly.
    pub fn skin(&self, transforms: &[Isometry3<f64>]) -> Vec<Vector3<f64>> {
        self.data
            .surface_points
            .iter()
            .map(|sp| {
                let mut acc = Vector3::zeros();
                for &(joint, w) in &sp.weights {
                    let local = sp.position - self.rest_positions[joint];
                    let moved =
                        transforms[joint].rotation * local + transforms[joint].translation.vector;
                    acc += w * moved;
                }
                acc
            })
            .collect()
    }

    /// Forward kinematics plus skinning: all 710 body points for one pose.
    pub fn pose_points(&self, pose: &PoseFrame) -> PointCloudFrame {
        let transforms = self.forward_kinematics(pose);
        let joints = transforms.iter().map(|t| t.translation.vector).collect();
        let vertices = self.skin(&transforms);
        PointCloudFrame { joints, vertices }
    }

    /// The body capsules placed at the given global joint positions.
    pub fn posed_capsules(&self, joint_positions: &[Vector3<f64>]) -> Vec<PosedCapsule> {
        self.data
            .capsules
            .iter()
            .map(|c| PosedCapsule {
                a: joint_positions[c.joint_a],
                b: joint_positions[c.joint_b],
                radius: c.radius,
            })
            .collect()
    }
}

/// Load a body model from a JSON file (schema in `docs/FORMATS.md`) and
/// validate it.
pub fn load_body_model(path: impl AsRef<Path>) -> Result<BodyModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let data: BodyModelData = serde_json::from_str(&text).map_err(|e| {
        Error::data(format!("{}: not a valid body model file: {e}", path.display()))
    })?;
    BodyModel::new(data)
}

/// Serialize a body model to pretty JSON.
pub fn save_body_model(model: &BodyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(model.data())
        .map_err(|e| Error::data(format!("serialize body model: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One pose: a root translation plus a per-joint axis-angle rotation (the
/// root's entry is the global orientation). Rotation magnitudes are kept in
/// `[0, 2π)` by [`PoseFrame::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub root: Vector3<f64>,
    pub rotations: Vec<Vector3<f64>>,
}

impl PoseFrame {
    /// Build a pose, normalizing every axis-angle magnitude into `[0, 2π)`.
    ///
    /// Panics if `rotations` does not have one entry per joint; motion
    /// loaders guarantee this by construction.
    pub fn new(root: Vector3<f64>, rotations: Vec<Vector3<f64>>) -> Self {
        assert_eq!(rotations.len(), JOINT_COUNT, "pose must cover all joints");
        let rotations = rotations.into_iter().map(normalize_axis_angle).collect();
        PoseFrame { root, rotations }
    }

    /// The rest pose (identity rotations) at a given root translation.
    pub fn rest(root: Vector3<f64>) -> Self {
        PoseFrame {
            root,
            rotations: vec![Vector3::zeros(); JOINT_COUNT],
        }
    }
}

/// Wrap an axis-angle vector so its magnitude lies in `[0, 2π)`; the axis is
/// preserved. Zero maps to zero.
pub fn normalize_axis_angle(v: Vector3<f64>) -> Vector3<f64> {
    let angle = v.norm();
    if angle < TAU {
        return v;
    }
    let wrapped = angle % TAU;
    v * (wrapped / angle)
}

/// All 710 body points of one posed body: 55 joint positions followed by 655
/// skinned surface points. Joint 0 is the global root position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub joints: Vec<Vector3<f64>>,
    pub vertices: Vec<Vector3<f64>>,
}

impl PointCloudFrame {
    /// Unified indexing over joints then vertices (`0..710`).
    pub fn point(&self, i: usize) -> Vector3<f64> {
        if i < JOINT_COUNT {
            self.joints[i]
        } else {
            self.vertices[i - JOINT_COUNT]
        }
    }

    /// Iterate all 710 points in unified order.
    pub fn iter_points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.joints.iter().chain(self.vertices.iter()).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> PoseFrame {
        let root = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.5..1.2),
            rng.gen_range(-1.0..1.0),
        );
        let rotations = (0..JOINT_COUNT)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                )
            })
            .collect();
        PoseFrame::new(root, rotations)
    }

    #[test]
    fn fk_identity_is_cumulative_offsets() {
        let model = canonical::model();
        let pose = PoseFrame::rest(Vector3::zeros());
        let transforms = model.forward_kinematics(&pose);
        for (i, t) in transforms.iter().enumerate() {
            let err = (t.translation.vector - model.rest_positions()[i]).norm();
            assert!(err < 1e-12, "joint {i} off rest position by {err}");
        }
    }

    #[test]
    fn fk_matches_ancestor_chain_oracle() {
        // Independent oracle: accumulate (rotation, translation) down the
        // explicit ancestor chain of each joint, without reusing the parent's
        // cached transform.
        let model = canonical::model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let pose = random_pose(&mut rng, 0.8);
            let transforms = model.forward_kinematics(&pose);
            for i in 0..JOINT_COUNT {
                // Collect the chain root..=i.
                let mut chain = vec![i];
                while let Some(p) = model.joints()[*chain.last().unwrap()].parent {
                    chain.push(p);
                }
                chain.reverse();
                let mut rot = UnitQuaternion::identity();
                let mut pos = Vector3::zeros();
                for &j in &chain {
                    let off = if j == 0 { pose.root } else { model.joints()[j].offset };
                    pos += rot * off;
                    rot *= UnitQuaternion::from_scaled_axis(pose.rotations[j]);
                }
                let err = (transforms[i].translation.vector - pos).norm();
                assert!(err < 1e-9, "joint {i}: oracle mismatch {err}");
                let rot_err = transforms[i].rotation.angle_to(&rot);
                assert!(rot_err < 1e-9, "joint {i}: rotation mismatch {rot_err}");
            }
        }
    }

    #[test]
    fn fk_translation_equivariance() {
        let model = canonical::model();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pose = random_pose(&mut rng, 0.6);
        let shift = Vector3::new(3.2, -0.4, 1.7);
        let mut shifted = pose.clone();
        shifted.root += shift;
        let a = model.forward_kinematics(&pose);
        let b = model.forward_kinematics(&shifted);
        for i in 0..JOINT_COUNT {
            let err = (b[i].translation.vector - a[i].translation.vector - shift).norm();
            assert!(err < 1e-12, "joint {i} not equivariant, err {err}");
        }
    }

    #[test]
    fn root_joint_sits_at_root_translation() {
        let model = canonical::model();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pose = random_pose(&mut rng, 1.0);
        let transforms = model.forward_kinematics(&pose);
        let err = (transforms[0].translation.vector - pose.root).norm();
        assert!(err < 1e-15);
    }

    #[test]
    fn skinning_identity_recovers_rest_positions() {
        let model = canonical::model();
        let transforms = model.forward_kinematics(&PoseFrame::rest(Vector3::zeros()));
        let skinned = model.skin(&transforms);
        for (i, (s, sp)) in skinned.iter().zip(model.surface_points()).enumerate() {
            let err = (s - sp.position).norm();
            assert!(err < 1e-12, "surface point {i} off by {err}");
        }
    }

    #[test]
    fn single_weight_point_follows_joint_rigidly() {
        let model = canonical::model();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pose = random_pose(&mut rng, 0.7);
        let transforms = model.forward_kinematics(&pose);
        let skinned = model.skin(&transforms);
        let mut checked = 0;
        for (i, sp) in model.surface_points().iter().enumerate() {
            if sp.weights.len() == 1 {
                let (j, _) = sp.weights[0];
                let local = sp.position - model.rest_positions()[j];
                let expect = transforms[j].rotation * local + transforms[j].translation.vector;
                assert!((skinned[i] - expect).norm() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 100, "canonical model should have many rigid points");
    }

    #[test]
    fn rejects_wrong_joint_count() {
        let mut data = canonical::model().data().clone();
        data.joints.pop();
        let err = BodyModel::new(data).unwrap_err();
        assert!(err.to_string().contains("joint count must be 55"));
    }

    #[test]
    fn rejects_wrong_surface_count() {
        let mut data = canonical::model().data().clone();
        data.surface_points.pop();
        let err = BodyModel::new(data).unwrap_err();
        assert!(err.to_string().contains("surface point count must be 655"));
    }

    #[test]
    fn rejects_bad_weight_sum() {
        let mut data = canonical::model().data().clone();
        data.surface_points[7].weights = vec![(3, 0.6), (4, 0.6)];
        let err = BodyModel::new(data).unwrap_err();
        assert!(err.to_string().contains("weights must sum to 1"));
    }

    #[test]
    fn rejects_parent_after_child() {
        let mut data = canonical::model().data().clone();
        data.joints[5].parent = Some(30);
        let err = BodyModel::new(data).unwrap_err();
        assert!(err.to_string().contains("must precede"));
    }

    #[test]
    fn rejects_nonpositive_fps() {
        let mut data = canonical::model().data().clone();
        data.fps = 0.0;
        let err = BodyModel::new(data).unwrap_err();
        assert!(err.to_string().contains("fps"));
    }

    #[test]
    fn axis_angle_magnitudes_wrap_below_tau() {
        let v = Vector3::new(0.0, 3.0 * std::f64::consts::PI, 0.0);
        let n = normalize_axis_angle(v);
        assert!((n.norm() - std::f64::consts::PI).abs() < 1e-12);
        // Same rotation either way.
        let qa = UnitQuaternion::from_scaled_axis(v);
        let qb = UnitQuaternion::from_scaled_axis(n);
        assert!(qa.angle_to(&qb) < 1e-12);
        // Small vectors pass through untouched.
        let small = Vector3::new(0.1, -0.2, 0.3);
        assert_eq!(normalize_axis_angle(small), small);
    }

    #[test]
    fn point_cloud_unified_indexing() {
        let model = canonical::model();
        let cloud = model.pose_points(&PoseFrame::rest(Vector3::new(0.0, 0.93, 0.0)));
        assert_eq!(cloud.point(0), cloud.joints[0]);
        assert_eq!(cloud.point(JOINT_COUNT), cloud.vertices[0]);
        assert_eq!(cloud.iter_points().count(), POINT_COUNT);
    }
}
