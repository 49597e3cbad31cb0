//! The per-frame motion representation.
//!
//! Each frame of one dancer is a 4981-channel row (layout in [`layout`]):
//!
//! | channels      | content                                              |
//! |---------------|------------------------------------------------------|
//! | `0..3`        | global root position (x, y, z)                       |
//! | `3`           | heading yaw (radians, 0 = facing +Z)                 |
//! | `4`           | yaw velocity (rad/frame, wrapped)                    |
//! | `5..7`        | planar root velocity in the heading frame (x, z)     |
//! | `7..172`      | 55 joint offsets, heading-canonical, meters          |
//! | `172..2137`   | 655 surface-point offsets, heading-canonical         |
//! | `2137..2302`  | joint offset velocities (forward differences)        |
//! | `2302..4267`  | surface-point offset velocities                      |
//! | `4267..4271`  | foot-floor contact labels (L/R ankle, L/R toe)       |
//! | `4271..4981`  | person-person contact labels, joints then vertices   |
//!
//! "Heading-canonical" means positions are taken relative to the root and
//! rotated by the inverse yaw, so the channels are invariant to where on the
//! floor the dancer stands and which way they face. Finger joints are the
//! exception: they are offset from their own hand's wrist (still yaw-rotated),
//! which keeps hand shape channels small and root-independent. Velocities are
//! forward frame differences; the last frame repeats the previous difference.
//!
//! [`encode`] converts skeletal motion (plus the partner's motion, needed for
//! person-contact labels) into this representation; [`decode`] reconstructs
//! the 710 world-space body points per frame from the root, yaw, and offset
//! channels alone (velocity and label channels are not consulted).

use nalgebra::{UnitQuaternion, Vector3};
use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use crate::body::{BodyModel, PointCloudFrame, JOINT_COUNT, POINT_COUNT, SURFACE_POINT_COUNT};
use crate::data::MotionSequence;
use crate::error::{Error, Result};
use crate::eval::music::MusicFeatures;

/// Channels per frame.
pub const CHANNELS: usize = 4981;

/// Channel layout of one representation row.
pub mod layout {
    use super::{JOINT_COUNT, SURFACE_POINT_COUNT};
    use std::ops::Range;

    pub const ROOT_POS: Range<usize> = 0..3;
    pub const YAW: usize = 3;
    pub const YAW_VEL: usize = 4;
    pub const ROOT_VEL: Range<usize> = 5..7;
    pub const JOINT_OFFSETS: Range<usize> = 7..7 + 3 * JOINT_COUNT;
    pub const VERTEX_OFFSETS: Range<usize> =
        JOINT_OFFSETS.end..JOINT_OFFSETS.end + 3 * SURFACE_POINT_COUNT;
    pub const JOINT_VEL: Range<usize> = VERTEX_OFFSETS.end..VERTEX_OFFSETS.end + 3 * JOINT_COUNT;
    pub const VERTEX_VEL: Range<usize> = JOINT_VEL.end..JOINT_VEL.end + 3 * SURFACE_POINT_COUNT;
    pub const FOOT_CONTACT: Range<usize> = VERTEX_VEL.end..VERTEX_VEL.end + 4;
    pub const PERSON_CONTACT: Range<usize> =
        FOOT_CONTACT.end..FOOT_CONTACT.end + super::POINT_COUNT;

    /// First channel of joint `j`'s offset triple.
    pub const fn joint_offset(j: usize) -> usize {
        JOINT_OFFSETS.start + 3 * j
    }

    /// First channel of surface point `v`'s offset triple.
    pub const fn vertex_offset(v: usize) -> usize {
        VERTEX_OFFSETS.start + 3 * v
    }

    /// First offset channel of unified body point `i` (`0..710`).
    pub const fn point_offset(i: usize) -> usize {
        if i < JOINT_COUNT {
            joint_offset(i)
        } else {
            vertex_offset(i - JOINT_COUNT)
        }
    }

    /// First channel of joint `j`'s velocity triple.
    pub const fn joint_vel(j: usize) -> usize {
        JOINT_VEL.start + 3 * j
    }

    /// First channel of surface point `v`'s velocity triple.
    pub const fn vertex_vel(v: usize) -> usize {
        VERTEX_VEL.start + 3 * v
    }
}

/// Contact-detection thresholds.
///
/// `foot_speed_max` is calibrated at `reference_fps`; at other frame rates
/// the per-frame threshold scales so the physical speed cutoff (m/s) stays
/// fixed. Heights and distances are frame-rate independent.
#[derive(Debug, Clone, Copy)]
pub struct ContactConfig {
    /// Max foot-joint height (m) for floor contact.
    pub foot_height_max: f64,
    /// Max foot-joint speed (m/frame at `reference_fps`) for floor contact.
    pub foot_speed_max: f64,
    /// Frame rate `foot_speed_max` is calibrated at.
    pub reference_fps: f64,
    /// Max point-to-vertex distance (m) for person-person contact.
    pub person_distance_max: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            foot_height_max: 0.08,
            foot_speed_max: 0.010,
            reference_fps: 30.0,
            person_distance_max: 0.01,
        }
    }
}

impl ContactConfig {
    /// Per-frame foot speed threshold at the given frame rate.
    pub fn foot_speed_threshold(&self, fps: f64) -> f64 {
        self.foot_speed_max * self.reference_fps / fps
    }
}

/// An encoded motion: `frames x 4981` at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSequence {
    pub fps: f64,
    pub data: Array2<f64>,
}

impl RepSequence {
    pub fn new(fps: f64, data: Array2<f64>) -> Result<Self> {
        if !fps.is_finite() || fps <= 0.0 {
            return Err(Error::data(format!("fps must be positive, got {fps}")));
        }
        if data.ncols() != CHANNELS {
            return Err(Error::data(format!(
                "representation must have {CHANNELS} channels, got {}",
                data.ncols()
            )));
        }
        Ok(RepSequence { fps, data })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// A matched leader/follower motion pair with its music track.
#[derive(Debug, Clone)]
pub struct DuetSample {
    pub leader: MotionSequence,
    pub follower: MotionSequence,
    pub music: MusicFeatures,
}

impl DuetSample {
    /// Validate that all three tracks agree on length and frame rate.
    pub fn new(
        leader: MotionSequence,
        follower: MotionSequence,
        music: MusicFeatures,
    ) -> Result<Self> {
        if leader.len() != follower.len() || leader.len() != music.len() {
            return Err(Error::data(format!(
                "duet tracks disagree on length: leader {}, follower {}, music {}",
                leader.len(),
                follower.len(),
                music.len()
            )));
        }
        if (leader.fps - follower.fps).abs() > 1e-9 || (leader.fps - music.fps).abs() > 1e-9 {
            return Err(Error::data(format!(
                "duet tracks disagree on fps: leader {}, follower {}, music {}",
                leader.fps, follower.fps, music.fps
            )));
        }
        Ok(DuetSample {
            leader,
            follower,
            music,
        })
    }

    pub fn len(&self) -> usize {
        self.leader.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leader.is_empty()
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Heading yaw of a root orientation: the angle of the rotated +Z (facing)
/// axis projected to the floor plane, zero when facing +Z, increasing toward
/// +X. Returns 0 for the degenerate case of a vertical facing axis.
pub fn yaw_of(orientation: &UnitQuaternion<f64>) -> f64 {
    let f = orientation * Vector3::z();
    if f.x.hypot(f.z) < 1e-12 {
        0.0
    } else {
        f.x.atan2(f.z)
    }
}

/// Rotate `v` about +Y by `angle`.
pub fn rotate_y(v: Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    Vector3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
}

/// Derivative of [`rotate_y`] with respect to the angle.
pub fn rotate_y_deriv(v: Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    Vector3::new(-s * v.x + c * v.z, 0.0, -c * v.x - s * v.z)
}

/// Floor-contact labels for the model's four foot joints over a point-cloud
/// sequence: a foot is in contact when it is both low (below
/// `foot_height_max`) and still (moving less than the fps-scaled speed
/// threshold per frame; the last frame reuses the previous frame's speed).
pub fn detect_foot_contact(
    points: &[PointCloudFrame],
    model: &BodyModel,
    fps: f64,
    config: &ContactConfig,
) -> Vec<[bool; 4]> {
    let t_len = points.len();
    let speed_max = config.foot_speed_threshold(fps);
    let feet = model.foot_joints();
    let mut out = vec![[false; 4]; t_len];
    for (t, labels) in out.iter_mut().enumerate() {
        for (k, &j) in feet.iter().enumerate() {
            let p = points[t].joints[j];
            let speed = if t + 1 < t_len {
                (points[t + 1].joints[j] - p).norm()
            } else if t > 0 {
                (p - points[t - 1].joints[j]).norm()
            } else {
                0.0
            };
            labels[k] = p.y < config.foot_height_max && speed < speed_max;
        }
    }
    out
}

/// Person-person contact labels for one frame: for each of the subject's 710
/// body points (joints then vertices), whether any of the partner's 655
/// surface vertices lies strictly closer than `person_distance_max`.
pub fn detect_person_contact(
    subject: &PointCloudFrame,
    partner: &PointCloudFrame,
    config: &ContactConfig,
) -> Vec<bool> {
    let limit2 = config.person_distance_max * config.person_distance_max;
    subject
        .iter_points()
        .map(|p| {
            partner
                .vertices
                .iter()
                .any(|v| (p - v).norm_squared() < limit2)
        })
        .collect()
}

/// Encode one dancer's motion, using the partner's motion for the
/// person-contact channels. Both motions must share length and frame rate.
pub fn encode(
    subject: &MotionSequence,
    partner: &MotionSequence,
    model: &BodyModel,
    config: &ContactConfig,
) -> Result<RepSequence> {
    if subject.is_empty() {
        return Err(Error::data("cannot encode an empty motion".to_string()));
    }
    if subject.len() != partner.len() {
        return Err(Error::data(format!(
            "subject and partner motion lengths differ: {} vs {}",
            subject.len(),
            partner.len()
        )));
    }
    if (subject.fps - partner.fps).abs() > 1e-9 {
        return Err(Error::data(format!(
            "subject and partner fps differ: {} vs {}",
            subject.fps, partner.fps
        )));
    }
    let t_len = subject.len();

    // Pose both dancers; the partner is only needed for contact labels.
    let subj_transforms: Vec<_> = subject
        .frames
        .par_iter()
        .map(|f| model.forward_kinematics(f))
        .collect();
    let subj_points: Vec<PointCloudFrame> = subject
        .frames
        .par_iter()
        .zip(&subj_transforms)
        .map(|(_, transforms)| {
            let joints = transforms.iter().map(|t| t.translation.vector).collect();
            let vertices = model.skin(transforms);
            PointCloudFrame { joints, vertices }
        })
        .collect();
    let partner_points: Vec<PointCloudFrame> = partner
        .frames
        .par_iter()
        .map(|f| model.pose_points(f))
        .collect();

    let foot = detect_foot_contact(&subj_points, model, subject.fps, config);
    let person: Vec<Vec<bool>> = subj_points
        .par_iter()
        .zip(&partner_points)
        .map(|(s, p)| detect_person_contact(s, p, config))
        .collect();

    let mut data = Array2::zeros((t_len, CHANNELS));
    let mut yaws = vec![0.0; t_len];
    for t in 0..t_len {
        let cloud = &subj_points[t];
        let root = cloud.joints[0];
        let yaw = yaw_of(&subj_transforms[t][0].rotation);
        yaws[t] = yaw;
        let mut row = data.row_mut(t);
        row[0] = root.x;
        row[1] = root.y;
        row[2] = root.z;
        row[layout::YAW] = yaw;
        for j in 0..JOINT_COUNT {
            let anchor = match model.wrist_of(j) {
                Some(w) if model.is_finger(j) => cloud.joints[w],
                _ => root,
            };
            let off = rotate_y(cloud.joints[j] - anchor, -yaw);
            let c = layout::joint_offset(j);
            row[c] = off.x;
            row[c + 1] = off.y;
            row[c + 2] = off.z;
        }
        for v in 0..SURFACE_POINT_COUNT {
            let off = rotate_y(cloud.vertices[v] - root, -yaw);
            let c = layout::vertex_offset(v);
            row[c] = off.x;
            row[c + 1] = off.y;
            row[c + 2] = off.z;
        }
        for (k, &on) in foot[t].iter().enumerate() {
            row[layout::FOOT_CONTACT.start + k] = if on { 1.0 } else { 0.0 };
        }
        for (i, &on) in person[t].iter().enumerate() {
            row[layout::PERSON_CONTACT.start + i] = if on { 1.0 } else { 0.0 };
        }
    }

    // Velocities: forward differences of the canonical channels; the last
    // frame repeats the previous difference (zero for single-frame clips).
    for t in 0..t_len {
        let src = if t + 1 < t_len { t } else { t.saturating_sub(1) };
        if t_len == 1 {
            break;
        }
        let yaw_vel = wrap_angle(yaws[src + 1] - yaws[src]);
        let root_a = Vector3::new(data[[src, 0]], data[[src, 1]], data[[src, 2]]);
        let root_b = Vector3::new(data[[src + 1, 0]], data[[src + 1, 1]], data[[src + 1, 2]]);
        let planar = rotate_y(root_b - root_a, -yaws[src]);
        data[[t, layout::YAW_VEL]] = yaw_vel;
        data[[t, layout::ROOT_VEL.start]] = planar.x;
        data[[t, layout::ROOT_VEL.start + 1]] = planar.z;
        for c in 0..3 * JOINT_COUNT {
            data[[t, layout::JOINT_VEL.start + c]] = data[[src + 1, layout::JOINT_OFFSETS.start + c]]
                - data[[src, layout::JOINT_OFFSETS.start + c]];
        }
        for c in 0..3 * SURFACE_POINT_COUNT {
            data[[t, layout::VERTEX_VEL.start + c]] = data
                [[src + 1, layout::VERTEX_OFFSETS.start + c]]
                - data[[src, layout::VERTEX_OFFSETS.start + c]];
        }
    }

    RepSequence::new(subject.fps, data)
}

/// Reconstruct world-space body points from the root, yaw, and offset
/// channels of each frame. Velocity and contact channels are ignored.
pub fn decode(rep: &RepSequence, model: &BodyModel) -> Result<Vec<PointCloudFrame>> {
    if rep.data.ncols() != CHANNELS {
        return Err(Error::data(format!(
            "representation must have {CHANNELS} channels, got {}",
            rep.data.ncols()
        )));
    }
    let out = (0..rep.len())
        .map(|t| decode_frame(rep.data.row(t), model))
        .collect();
    Ok(out)
}

/// Decode one frame's channels into world-space body points. The row must
/// hold [`CHANNELS`] values.
pub fn decode_frame(row: ArrayView1<f64>, model: &BodyModel) -> PointCloudFrame {
    assert_eq!(row.len(), CHANNELS, "decode_frame needs a full channel row");
    let root = Vector3::new(row[0], row[1], row[2]);
    let yaw = row[layout::YAW];
    let mut joints = vec![Vector3::zeros(); JOINT_COUNT];
    // Non-finger joints are root-anchored and must be decoded first;
    // finger joints then hang off their decoded wrist.
    for j in 0..JOINT_COUNT {
        if !model.is_finger(j) {
            let c = layout::joint_offset(j);
            let off = Vector3::new(row[c], row[c + 1], row[c + 2]);
            joints[j] = root + rotate_y(off, yaw);
        }
    }
    for &j in model.finger_joints() {
        let w = model.wrist_of(j).expect("finger joints have a wrist");
        let c = layout::joint_offset(j);
        let off = Vector3::new(row[c], row[c + 1], row[c + 2]);
        joints[j] = joints[w] + rotate_y(off, yaw);
    }
    let vertices = (0..SURFACE_POINT_COUNT)
        .map(|v| {
            let c = layout::vertex_offset(v);
            let off = Vector3::new(row[c], row[c + 1], row[c + 2]);
            root + rotate_y(off, yaw)
        })
        .collect();
    PointCloudFrame { joints, vertices }
}

/// Adjoint of [`decode_frame`]: scatter a gradient with respect to the
/// decoded points (joints first, then vertices, [`POINT_COUNT`] entries)
/// back onto the frame's channels, accumulating into `d_row`.
///
/// Gradients land on the root, yaw, and offset channels; velocity and
/// contact channels receive nothing because decoding ignores them. With
/// `offsets_only` the root and yaw stay untouched as well — used by
/// objectives that are allowed to adjust local geometry but not the global
/// trajectory.
pub fn scatter_point_gradients(
    row: ArrayView1<f64>,
    model: &BodyModel,
    d_points: &[Vector3<f64>],
    offsets_only: bool,
    mut d_row: ArrayViewMut1<f64>,
) {
    assert_eq!(row.len(), CHANNELS);
    assert_eq!(d_row.len(), CHANNELS);
    assert_eq!(d_points.len(), POINT_COUNT, "need one gradient per body point");
    let yaw = row[layout::YAW];
    let mut d_root = Vector3::zeros();
    let mut d_yaw = 0.0;
    let mut scatter = |channel: usize, total_offset: Vector3<f64>, g: Vector3<f64>,
                       d_row: &mut ArrayViewMut1<f64>,
                       extra_channel: Option<usize>| {
        let local = rotate_y(g, -yaw);
        d_row[channel] += local.x;
        d_row[channel + 1] += local.y;
        d_row[channel + 2] += local.z;
        if let Some(cw) = extra_channel {
            d_row[cw] += local.x;
            d_row[cw + 1] += local.y;
            d_row[cw + 2] += local.z;
        }
        d_root += g;
        d_yaw += g.dot(&rotate_y_deriv(total_offset, yaw));
    };
    for j in 0..JOINT_COUNT {
        let g = d_points[j];
        if g == Vector3::zeros() {
            continue;
        }
        let c = layout::joint_offset(j);
        let mut total = Vector3::new(row[c], row[c + 1], row[c + 2]);
        // A finger point also moves when its wrist offset moves.
        let wrist_channel = model.wrist_of(j).map(|w| {
            let cw = layout::joint_offset(w);
            total += Vector3::new(row[cw], row[cw + 1], row[cw + 2]);
            cw
        });
        scatter(c, total, g, &mut d_row, wrist_channel);
    }
    for v in 0..SURFACE_POINT_COUNT {
        let g = d_points[JOINT_COUNT + v];
        if g == Vector3::zeros() {
            continue;
        }
        let c = layout::vertex_offset(v);
        let off = Vector3::new(row[c], row[c + 1], row[c + 2]);
        scatter(c, off, g, &mut d_row, None);
    }
    if !offsets_only {
        d_row[layout::ROOT_POS.start] += d_root.x;
        d_row[layout::ROOT_POS.start + 1] += d_root.y;
        d_row[layout::ROOT_POS.start + 2] += d_root.z;
        d_row[layout::YAW] += d_yaw;
    }
}

/// Human-readable dump of a representation: one block per frame with named
/// channel groups. Debug aid; grows with `frames x channels`.
pub fn dump_channels(rep: &RepSequence) -> String {
    let mut s = String::new();
    let group = |out: &mut String, name: &str, vals: &[f64]| {
        let _ = write!(out, "  {name}:");
        for v in vals {
            let _ = write!(out, " {v:.6}");
        }
        let _ = writeln!(out);
    };
    let _ = writeln!(s, "rep fps={} frames={} channels={}", rep.fps, rep.len(), CHANNELS);
    for t in 0..rep.len() {
        let row = rep.data.row(t);
        let rs = row.as_slice().expect("row-major layout");
        let _ = writeln!(s, "frame {t}");
        group(&mut s, "root_pos", &rs[layout::ROOT_POS]);
        group(&mut s, "yaw", &[rs[layout::YAW]]);
        group(&mut s, "yaw_vel", &[rs[layout::YAW_VEL]]);
        group(&mut s, "root_vel", &rs[layout::ROOT_VEL]);
        group(&mut s, "joint_offsets", &rs[layout::JOINT_OFFSETS]);
        group(&mut s, "vertex_offsets", &rs[layout::VERTEX_OFFSETS]);
        group(&mut s, "joint_velocities", &rs[layout::JOINT_VEL]);
        group(&mut s, "vertex_velocities", &rs[layout::VERTEX_VEL]);
        group(&mut s, "foot_contact", &rs[layout::FOOT_CONTACT]);
        group(&mut s, "person_contact", &rs[layout::PERSON_CONTACT]);
    }
    s
}
