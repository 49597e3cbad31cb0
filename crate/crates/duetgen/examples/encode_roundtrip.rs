//! Round-trip the motion representation: pose a scene, encode it to the
//! 4981-channel per-frame representation, decode it back to body points,
//! and compare against the original forward-kinematics positions. Also
//! demonstrates that the offset channels are invariant under a planar rigid
//! motion of the whole scene (the root trajectory and heading absorb it).

use duetgen::body::canonical;
use duetgen::data::synth::{generate, Scenario, ScenarioSpec};
use duetgen::data::MotionSequence;
use duetgen::rep::{self, layout, ContactConfig};
use nalgebra::{UnitQuaternion, Vector3};

fn main() -> duetgen::Result<()> {
    let model = canonical::model();
    let duet = generate(&ScenarioSpec::new(Scenario::Handhold), &model)?;
    let config = ContactConfig::default();

    let rep = rep::encode(&duet.follower, &duet.leader, &model, &config)?;
    let decoded = rep::decode(&rep, &model)?;

    let mut max_err: f64 = 0.0;
    for (frame, pose) in decoded.iter().zip(&duet.follower.frames) {
        let truth = model.pose_points(pose);
        for (a, b) in frame.joints.iter().zip(&truth.joints) {
            max_err = max_err.max((a - b).norm());
        }
        for (a, b) in frame.vertices.iter().zip(&truth.vertices) {
            max_err = max_err.max((a - b).norm());
        }
    }
    println!(
        "decode(encode(handhold follower)): {} frames, max point error {max_err:.3e} m",
        rep.len()
    );

    // Rotate and shift the whole scene; the local offset channels must not
    // move because the encoding is heading-canonical.
    let angle = 1.1;
    let shift = Vector3::new(2.0, 0.0, -3.0);
    let spin = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle);
    let transform = |m: &MotionSequence| -> MotionSequence {
        let frames = m
            .frames
            .iter()
            .map(|f| {
                let mut g = f.clone();
                g.root = spin * f.root + shift;
                let root_q = UnitQuaternion::from_scaled_axis(f.rotations[0]);
                g.rotations[0] = (spin * root_q).scaled_axis();
                g
            })
            .collect();
        MotionSequence::new(m.fps, m.role, frames).expect("still a valid motion")
    };
    let moved_rep = rep::encode(
        &transform(&duet.follower),
        &transform(&duet.leader),
        &model,
        &config,
    )?;
    let mut max_offset_diff: f64 = 0.0;
    for t in 0..rep.len() {
        for c in layout::JOINT_OFFSETS.start..layout::VERTEX_OFFSETS.end {
            max_offset_diff = max_offset_diff.max((rep.data[[t, c]] - moved_rep.data[[t, c]]).abs());
        }
    }
    println!(
        "after a {angle:.1} rad spin and ({}, {}, {}) shift: max offset channel drift {max_offset_diff:.3e}",
        shift.x, shift.y, shift.z
    );
    println!("root x moved from {:.3} to {:.3}", rep.data[[0, 0]], moved_rep.data[[0, 0]]);
    Ok(())
}
