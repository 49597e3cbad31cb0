//! Export the built-in body model as JSON — the full skeleton, surface
//! point skinning weights, and collision capsules — plus a CSV of the rest
//! pose, for use by external viewers or ports of this toolkit. The JSON
//! matches `assets/body_model.json`, which is pinned by a library test.

use duetgen::body::{canonical, JOINT_COUNT, SURFACE_POINT_COUNT};
use std::path::PathBuf;

fn main() -> duetgen::Result<()> {
    let data = canonical::data();
    let model = canonical::model();
    let out_dir = PathBuf::from("target/example-output");
    std::fs::create_dir_all(&out_dir).expect("create output directory");

    let json = serde_json::to_string_pretty(&data).expect("body model serializes");
    let json_path = out_dir.join("body_model.json");
    std::fs::write(&json_path, &json).expect("write JSON");

    let rest = model.rest_positions();
    let mut csv = String::from("joint,parent,x,y,z\n");
    for (j, joint) in data.joints.iter().enumerate() {
        let p = rest[j];
        let parent = joint
            .parent
            .map(|i| i.to_string())
            .unwrap_or_else(|| "-".to_string());
        csv.push_str(&format!("{j},{parent},{:.6},{:.6},{:.6}\n", p.x, p.y, p.z));
    }
    let csv_path = out_dir.join("rest_pose.csv");
    std::fs::write(&csv_path, csv).expect("write CSV");

    println!(
        "body model: {} joints, {} surface points, {} capsules, {} finger joints",
        JOINT_COUNT,
        SURFACE_POINT_COUNT,
        data.capsules.len(),
        data.finger_joints.len()
    );
    let (lo, hi) = rest
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    println!("rest pose spans {:.3} m below to {:.3} m above the pelvis", -lo, hi);
    println!("wrote {} ({} bytes)", json_path.display(), json.len());
    println!("wrote {}", csv_path.display());
    Ok(())
}
