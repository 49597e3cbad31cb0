//! Deterministic synthetic duet scenes.
//!
//! Each scenario builds a leader/follower motion pair plus a metronome
//! music track, entirely from a seed — no external data. The scenes are
//! designed so that ground truth is known analytically and can serve as an
//! oracle for the rest of the pipeline:
//!
//! * [`Scenario::Orbit`] — the follower circles the leader at fixed radius,
//!   always facing them; exercises root travel and heading without contact.
//! * [`Scenario::Mirror`] — the follower is the exact reflection of the
//!   leader across the x = 0 plane; reflection preserves distances, so both
//!   dancers have identical speed statistics by construction.
//! * [`Scenario::Handhold`] — the dancers face each other and bring one
//!   palm pair together to a 5 mm gap over a fixed approach window, then
//!   hold; produces clean person-contact labels with zero interpenetration.
//! * [`Scenario::ApproachTouch`] — negative control: the follower presses a
//!   palm 4 cm inside the leader's chest capsule, deliberately creating
//!   penetration.
//! * [`Scenario::Walk`] — both dancers walk side by side with a planted-foot
//!   gait; the stance schedule is an exact oracle for foot-contact labels.
//!
//! The arm and leg chains are posed with a closed-form two-bone solver
//! ([`solve_two_bone`]); hands are placed through the palm-center surface
//! point so contact distances are controlled to the millimeter.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::body::canonical::{joints, PALM_CENTER_REACH, PELVIS_HEIGHT};
use crate::body::{BodyModel, PoseFrame, JOINT_COUNT};
use crate::data::{MotionSequence, Role};
use crate::error::{Error, Result};
use crate::eval::music::metronome;
use crate::rep::DuetSample;

/// Relaxed-arm drop angle from the T-pose, radians.
const ARM_DROP: f64 = 1.309;
/// Frames the handhold approach takes before the palms reach their gap.
pub const HANDHOLD_APPROACH_FRAMES: usize = 15;
/// Palm-to-palm gap held after the handhold approach, meters.
pub const HANDHOLD_GAP: f64 = 0.005;
/// Metronome beat offset so no beat sits on the clip boundary.
pub const BEAT_OFFSET_FRAMES: usize = 15;
/// Ankle height while a walking foot is planted, meters.
const ANKLE_PLANT_HEIGHT: f64 = 0.065;

/// The built-in scene family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Orbit,
    Mirror,
    Handhold,
    ApproachTouch,
    Walk,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Orbit,
        Scenario::Mirror,
        Scenario::Handhold,
        Scenario::ApproachTouch,
        Scenario::Walk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Orbit => "orbit",
            Scenario::Mirror => "mirror",
            Scenario::Handhold => "handhold",
            Scenario::ApproachTouch => "approach-touch",
            Scenario::Walk => "walk",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                Error::config(format!(
                    "unknown scenario {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Everything needed to build one deterministic scene.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub duration_s: f64,
    pub bpm: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioSpec {
            scenario,
            duration_s: 8.0,
            bpm: 120.0,
            seed: 7,
        }
    }
}

/// Build the scene described by `spec` on the given body model.
pub fn generate(spec: &ScenarioSpec, model: &BodyModel) -> Result<DuetSample> {
    if !spec.duration_s.is_finite() || spec.duration_s <= 0.0 {
        return Err(Error::config(format!(
            "scenario duration must be positive, got {}",
            spec.duration_s
        )));
    }
    let fps = model.data().fps;
    let frames = ((spec.duration_s * fps).round() as usize).max(2);
    let music = metronome(spec.bpm, frames, fps, BEAT_OFFSET_FRAMES)?;
    let beat = (fps * 60.0 / spec.bpm).max(1.0);
    let (leader, follower) = match spec.scenario {
        Scenario::Orbit => orbit(model, frames, beat, spec.seed),
        Scenario::Mirror => mirror(model, frames, beat, spec.seed),
        Scenario::Handhold => handhold(model, frames, beat),
        Scenario::ApproachTouch => approach_touch(model, frames),
        Scenario::Walk => walk(model, frames, beat),
    };
    let leader = MotionSequence::new(fps, Role::Leader, leader)?;
    let follower = MotionSequence::new(fps, Role::Follower, follower)?;
    DuetSample::new(leader, follower, music)
}

// ---------------------------------------------------------------------------
// Pose helpers
// ---------------------------------------------------------------------------

/// Which arm or leg of the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn arm(self) -> (usize, usize, usize, usize) {
        match self {
            Side::Left => (
                joints::L_COLLAR,
                joints::L_SHOULDER,
                joints::L_ELBOW,
                joints::L_WRIST,
            ),
            Side::Right => (
                joints::R_COLLAR,
                joints::R_SHOULDER,
                joints::R_ELBOW,
                joints::R_WRIST,
            ),
        }
    }

    fn leg(self) -> (usize, usize, usize) {
        match self {
            Side::Left => (joints::L_HIP, joints::L_KNEE, joints::L_ANKLE),
            Side::Right => (joints::R_HIP, joints::R_KNEE, joints::R_ANKLE),
        }
    }
}

/// Neutral standing pose: upright at `root`, heading `yaw`, arms hanging.
pub fn standing(root: Vector3<f64>, yaw: f64) -> PoseFrame {
    let mut rot = vec![Vector3::zeros(); JOINT_COUNT];
    rot[0] = Vector3::new(0.0, yaw, 0.0);
    rot[joints::L_SHOULDER] = Vector3::new(0.0, 0.0, -ARM_DROP);
    rot[joints::R_SHOULDER] = Vector3::new(0.0, 0.0, ARM_DROP);
    PoseFrame::new(root, rot)
}

/// Smooth 0→1 ramp with zero slope at both ends.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Joint index of the same body part on the opposite side (self for midline
/// joints).
pub fn mirror_partner(joint: usize) -> usize {
    use joints::*;
    match joint {
        L_HIP => R_HIP,
        R_HIP => L_HIP,
        L_KNEE => R_KNEE,
        R_KNEE => L_KNEE,
        L_ANKLE => R_ANKLE,
        R_ANKLE => L_ANKLE,
        L_FOOT => R_FOOT,
        R_FOOT => L_FOOT,
        L_COLLAR => R_COLLAR,
        R_COLLAR => L_COLLAR,
        L_SHOULDER => R_SHOULDER,
        R_SHOULDER => L_SHOULDER,
        L_ELBOW => R_ELBOW,
        R_ELBOW => L_ELBOW,
        L_WRIST => R_WRIST,
        R_WRIST => L_WRIST,
        L_EYE => R_EYE,
        R_EYE => L_EYE,
        j if (L_HAND_START..R_HAND_START).contains(&j) => j + (R_HAND_START - L_HAND_START),
        j if (R_HAND_START..JOINT_COUNT).contains(&j) => j - (R_HAND_START - L_HAND_START),
        j => j,
    }
}

/// Reflect an axis-angle rotation across the x = 0 plane.
pub fn mirror_axis_angle(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, -v.y, -v.z)
}

/// Reflect a whole pose across the x = 0 plane, swapping left and right
/// body parts. Reflection is an isometry, so all inter-point distances and
/// speeds of the mirrored motion match the original exactly.
pub fn mirror_pose(pose: &PoseFrame) -> PoseFrame {
    let root = Vector3::new(-pose.root.x, pose.root.y, pose.root.z);
    let rotations = (0..JOINT_COUNT)
        .map(|j| mirror_axis_angle(pose.rotations[mirror_partner(j)]))
        .collect();
    PoseFrame::new(root, rotations)
}

/// A world-space two-bone chain solution.
#[derive(Debug, Clone)]
pub struct TwoBoneSolution {
    /// Global rotation of the upper bone.
    pub upper_global: UnitQuaternion<f64>,
    /// Global rotation of the lower bone.
    pub lower_global: UnitQuaternion<f64>,
    /// World position of the middle joint.
    pub mid: Vector3<f64>,
    /// World position actually reached (the target, unless clamped).
    pub end: Vector3<f64>,
}

/// Global rotation carrying `rest` onto `dir` (shortest arc; for opposed
/// vectors, a half turn about an arbitrary perpendicular axis).
fn rotation_to(rest: Vector3<f64>, dir: Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&rest, &dir).unwrap_or_else(|| {
        let axis = perpendicular(rest);
        UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), PI)
    })
}

fn perpendicular(v: Vector3<f64>) -> Vector3<f64> {
    let candidate = if v.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    v.cross(&candidate)
}

/// Solve a two-bone chain from `start` so that the chain end lands on
/// `target`. Both bones point along `rest_dir` in the rest pose (true for
/// this skeleton's arms and legs). `pole` biases which way the middle joint
/// folds. Unreachable targets are clamped onto the reachable shell.
pub fn solve_two_bone(
    start: Vector3<f64>,
    target: Vector3<f64>,
    l1: f64,
    l2: f64,
    pole: Vector3<f64>,
    rest_dir: Vector3<f64>,
) -> TwoBoneSolution {
    let to_target = target - start;
    let raw_d = to_target.norm();
    let eps = 1e-6;
    let d = raw_d.clamp((l1 - l2).abs() + eps, l1 + l2 - eps);
    let u = if raw_d < 1e-12 {
        Vector3::y()
    } else {
        to_target / raw_d
    };
    let end = start + u * d;
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();
    let mut w = pole - u * pole.dot(&u);
    if w.norm() < 1e-9 {
        w = perpendicular(u);
    }
    let w = w.normalize();
    let mid = start + u * a + w * h;
    let upper_global = rotation_to(rest_dir, (mid - start).normalize());
    let lower_global = rotation_to(rest_dir, (end - mid).normalize());
    TwoBoneSolution {
        upper_global,
        lower_global,
        mid,
        end,
    }
}

/// Pose one arm so that its palm-center surface point lands on `target`.
///
/// The solve treats the forearm as extended by the palm-center reach and
/// leaves the wrist unrotated, which keeps the palm center exactly on the
/// extended forearm line — so it lands on the target to solver precision.
pub fn aim_palm(
    model: &BodyModel,
    pose: &mut PoseFrame,
    side: Side,
    target: Vector3<f64>,
    pole: Vector3<f64>,
) {
    let (collar, shoulder, elbow, wrist) = side.arm();
    let transforms = model.forward_kinematics(pose);
    let start = transforms[shoulder].translation.vector;
    let upper = model.data().joints[elbow].offset;
    let fore = model.data().joints[wrist].offset;
    let sol = solve_two_bone(
        start,
        target,
        upper.norm(),
        fore.norm() + PALM_CENTER_REACH,
        pole,
        upper.normalize(),
    );
    let parent = transforms[collar].rotation;
    pose.rotations[shoulder] = (parent.inverse() * sol.upper_global).scaled_axis();
    pose.rotations[elbow] = (sol.upper_global.inverse() * sol.lower_global).scaled_axis();
    pose.rotations[wrist] = Vector3::zeros();
}

/// Pose one leg so the ankle lands on `target`, with the foot kept flat
/// (level with the floor, pointing along the body heading `yaw`).
pub fn plant_ankle(
    model: &BodyModel,
    pose: &mut PoseFrame,
    side: Side,
    target: Vector3<f64>,
    yaw: f64,
    pole: Vector3<f64>,
) {
    let (hip, knee, ankle) = side.leg();
    let transforms = model.forward_kinematics(pose);
    let start = transforms[hip].translation.vector;
    let thigh = model.data().joints[knee].offset;
    let shin = model.data().joints[ankle].offset;
    let sol = solve_two_bone(
        start,
        target,
        thigh.norm(),
        shin.norm(),
        pole,
        thigh.normalize(),
    );
    let parent = transforms[0].rotation; // hips are children of the root
    pose.rotations[hip] = (parent.inverse() * sol.upper_global).scaled_axis();
    pose.rotations[knee] = (sol.upper_global.inverse() * sol.lower_global).scaled_axis();
    let heading = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw);
    pose.rotations[ankle] = (sol.lower_global.inverse() * heading).scaled_axis();
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

fn orbit(model: &BodyModel, frames: usize, beat: f64, seed: u64) -> (Vec<PoseFrame>, Vec<PoseFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arm_phase: f64 = rng.gen_range(0.0..TAU);
    let sway_phase: f64 = rng.gen_range(0.0..TAU);
    let radius = 1.3;
    let omega = TAU / (10.0 * model.data().fps); // one lap per ten seconds
    let mut leaders = Vec::with_capacity(frames);
    let mut followers = Vec::with_capacity(frames);
    for t in 0..frames {
        let ft = t as f64;
        // Leader: beat-locked bob with yaw sway and waving arms, in place.
        let bob = 0.03 * (1.0 - (TAU * ft / (2.0 * beat)).cos()) / 2.0;
        let yaw = 0.2 * (TAU * ft / (4.0 * beat) + sway_phase).sin();
        let mut leader = standing(Vector3::new(0.0, PELVIS_HEIGHT - bob, 0.0), yaw);
        let wave = (TAU * ft / (2.0 * beat) + arm_phase).sin();
        leader.rotations[joints::L_SHOULDER] = Vector3::new(0.3 * wave, 0.0, -ARM_DROP + 0.25 * wave);
        leader.rotations[joints::R_SHOULDER] = Vector3::new(0.3 * wave, 0.0, ARM_DROP - 0.25 * wave);
        leader.rotations[joints::L_ELBOW] = Vector3::new(0.0, 0.0, -0.4 - 0.2 * wave);
        leader.rotations[joints::R_ELBOW] = Vector3::new(0.0, 0.0, 0.4 + 0.2 * wave);
        leaders.push(leader);

        // Follower: circles the leader, always facing them.
        let phi = omega * ft;
        let pos = Vector3::new(radius * phi.sin(), PELVIS_HEIGHT, radius * phi.cos());
        let facing = -pos; // toward the leader at the origin
        let yaw_f = facing.x.atan2(facing.z);
        followers.push(standing(pos, yaw_f));
    }
    (leaders, followers)
}

fn mirror(model: &BodyModel, frames: usize, beat: f64, seed: u64) -> (Vec<PoseFrame>, Vec<PoseFrame>) {
    let _ = model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen_range(0.0..TAU);
    let lane = 0.8;
    let mut leaders = Vec::with_capacity(frames);
    let mut followers = Vec::with_capacity(frames);
    for t in 0..frames {
        let ft = t as f64;
        let theta = TAU * ft / (2.0 * beat) + phase;
        let slow = TAU * ft / (4.0 * beat) + phase;
        let bob = 0.04 * (1.0 - theta.cos()) / 2.0;
        let root = Vector3::new(-lane, PELVIS_HEIGHT - bob, 0.05 * slow.sin());
        let mut leader = standing(root, 0.0);
        // Right-arm motion; the left arm is its exact reflection, so the
        // leader's own dance is bilaterally symmetric.
        let arm = Vector3::new(0.5 * theta.sin(), 0.0, 0.8 * ARM_DROP + 0.35 * theta.cos());
        leader.rotations[joints::R_SHOULDER] = arm;
        leader.rotations[joints::L_SHOULDER] = mirror_axis_angle(arm);
        let elbow = Vector3::new(0.0, 0.0, 0.5 + 0.3 * slow.sin());
        leader.rotations[joints::R_ELBOW] = elbow;
        leader.rotations[joints::L_ELBOW] = mirror_axis_angle(elbow);
        // Midline joints only pitch, which is mirror-invariant.
        leader.rotations[joints::SPINE2] = Vector3::new(0.08 * slow.sin(), 0.0, 0.0);
        leader.rotations[joints::HEAD] = Vector3::new(0.1 * theta.sin(), 0.0, 0.0);
        followers.push(mirror_pose(&leader));
        leaders.push(leader);
    }
    (leaders, followers)
}

fn handhold(model: &BodyModel, frames: usize, beat: f64) -> (Vec<PoseFrame>, Vec<PoseFrame>) {
    let grip = Vector3::new(0.15, 1.25, 0.0);
    let stand_off = 0.45;
    let mut leaders = Vec::with_capacity(frames);
    let mut followers = Vec::with_capacity(frames);
    for t in 0..frames {
        let ft = t as f64;
        let bob = 0.01 * (TAU * ft / (4.0 * beat)).sin();
        let ramp = (ft / HANDHOLD_APPROACH_FRAMES as f64).min(1.0);
        let offset = stand_off + (HANDHOLD_GAP / 2.0 - stand_off) * ramp;

        // Leader faces +Z from z = -0.45; their left palm reaches the grip
        // point from the -Z side.
        let mut leader = standing(
            Vector3::new(0.0, PELVIS_HEIGHT + bob, -stand_off),
            0.0,
        );
        aim_palm(
            model,
            &mut leader,
            Side::Left,
            grip - Vector3::new(0.0, 0.0, offset),
            Vector3::new(0.0, -1.0, -0.3),
        );
        leaders.push(leader);

        // Follower faces -Z from z = +0.45; their right palm approaches the
        // same grip point from the +Z side, leaving a controlled gap.
        let mut follower = standing(
            Vector3::new(0.0, PELVIS_HEIGHT + bob, stand_off),
            PI,
        );
        aim_palm(
            model,
            &mut follower,
            Side::Right,
            grip + Vector3::new(0.0, 0.0, offset),
            Vector3::new(0.0, -1.0, 0.3),
        );
        followers.push(follower);
    }
    (leaders, followers)
}

fn approach_touch(model: &BodyModel, frames: usize) -> (Vec<PoseFrame>, Vec<PoseFrame>) {
    let chest_radius = model
        .data()
        .capsules
        .iter()
        .find(|c| c.name == "chest")
        .expect("body model defines a chest capsule")
        .radius;
    // 4 cm past the leader's chest surface facing the follower.
    let embedded = Vector3::new(0.0, 1.30, chest_radius - 0.04);
    let raised = Vector3::new(-0.10, 1.25, 0.40);
    let mut leaders = Vec::with_capacity(frames);
    let mut followers = Vec::with_capacity(frames);
    for t in 0..frames {
        let ft = t as f64;
        leaders.push(standing(Vector3::new(0.0, PELVIS_HEIGHT, 0.0), 0.0));
        let mut follower = standing(Vector3::new(0.0, PELVIS_HEIGHT, 0.55), PI);
        // First half: raise the arm and push the palm into the chest; then
        // hold it embedded.
        let reach = smoothstep(2.0 * ft / frames as f64);
        let target = raised + (embedded - raised) * reach;
        aim_palm(
            model,
            &mut follower,
            Side::Right,
            target,
            Vector3::new(0.0, -1.0, 0.3),
        );
        followers.push(follower);
    }
    (leaders, followers)
}

fn walk(model: &BodyModel, frames: usize, beat: f64) -> (Vec<PoseFrame>, Vec<PoseFrame>) {
    let period = ((2.0 * beat).round() as usize).max(8);
    let half = period / 2;
    let step = 0.30; // meters per step; one gait cycle covers two steps
    let cycle = 2.0 * step;
    let v = cycle / period as f64;
    let root_height = 0.90; // lowered so the planted leg keeps a knee bend
    let lift = 0.06;
    let hip_x = model.data().joints[joints::L_HIP].offset.x;

    let build = |lane: f64| -> Vec<PoseFrame> {
        (0..frames)
            .map(|t| {
                let k = (t / period) as f64;
                let phase = t % period;
                let root = Vector3::new(lane, root_height, v * t as f64);
                let mut pose = standing(root, 0.0);
                // Arms swing opposite the legs.
                let swing = (TAU * (t % period) as f64 / period as f64).sin();
                pose.rotations[joints::L_SHOULDER] = Vector3::new(0.25 * swing, 0.0, -ARM_DROP);
                pose.rotations[joints::R_SHOULDER] = Vector3::new(-0.25 * swing, 0.0, ARM_DROP);

                // Plant schedule: the left foot is planted through the first
                // half of each cycle, the right through the second.
                let left_plant_z = cycle * k + 0.5 * step;
                let right_plant_z = cycle * k + 1.5 * step;
                let (left, right) = if phase < half {
                    let phi = phase as f64 / half as f64;
                    let from = right_plant_z - cycle;
                    let swing_z = from + cycle * smoothstep(phi);
                    let swing_y = ANKLE_PLANT_HEIGHT + lift * (PI * phi).sin();
                    (
                        Vector3::new(lane + hip_x, ANKLE_PLANT_HEIGHT, left_plant_z),
                        Vector3::new(lane - hip_x, swing_y, swing_z),
                    )
                } else {
                    let phi = (phase - half) as f64 / half as f64;
                    let from = left_plant_z;
                    let swing_z = from + cycle * smoothstep(phi);
                    let swing_y = ANKLE_PLANT_HEIGHT + lift * (PI * phi).sin();
                    (
                        Vector3::new(lane + hip_x, swing_y, swing_z),
                        Vector3::new(lane - hip_x, ANKLE_PLANT_HEIGHT, right_plant_z),
                    )
                };
                let pole = Vector3::new(0.0, 0.3, 1.0); // knees fold forward
                plant_ankle(model, &mut pose, Side::Left, left, 0.0, pole);
                plant_ankle(model, &mut pose, Side::Right, right, 0.0, pole);
                pose
            })
            .collect()
    };
    (build(-0.55), build(0.55))
}

/// Exact stance schedule of the walk scenario: per frame, whether each of
/// the four foot joints (left/right ankle, left/right toe) is planted.
pub fn walk_stance_oracle(frames: usize, period: usize) -> Vec<[bool; 4]> {
    let half = period / 2;
    (0..frames)
        .map(|t| {
            let left = t % period < half;
            [left, !left, left, !left]
        })
        .collect()
}

/// Gait period (frames per full cycle) used by the walk scenario.
pub fn walk_period(bpm: f64, fps: f64) -> usize {
    let beat = (fps * 60.0 / bpm).max(1.0);
    ((2.0 * beat).round() as usize).max(8)
}
