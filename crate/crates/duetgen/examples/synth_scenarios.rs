//! Generate all built-in synthetic duet scenes, write them to disk, and
//! print a short profile of each: length, inter-dancer spacing, how many
//! contact labels the encoding finds, and whether the scene contains body
//! penetration (only the approach-touch negative control should).

use duetgen::body::canonical;
use duetgen::data::formats::{write_motion, write_music};
use duetgen::data::synth::{generate, Scenario, ScenarioSpec};
use duetgen::eval::metrics::{contact_metrics, ContactMetrics};
use duetgen::rep::{self, layout, ContactConfig};
use std::path::PathBuf;

fn main() -> duetgen::Result<()> {
    let model = canonical::model();
    let out_dir = PathBuf::from("target/example-output/synth");
    std::fs::create_dir_all(&out_dir).expect("create output directory");

    println!("scene            frames  min gap  contact labels  CF      PR");
    for scenario in Scenario::ALL {
        let spec = ScenarioSpec::new(scenario);
        let duet = generate(&spec, &model)?;
        write_motion(&out_dir.join(format!("{scenario}_leader.idm")), &duet.leader)?;
        write_motion(&out_dir.join(format!("{scenario}_follower.idm")), &duet.follower)?;
        write_music(&out_dir.join(format!("{scenario}_music.idf")), &duet.music)?;

        // Pose both dancers and measure spacing.
        let leader_pts: Vec<_> = duet.leader.frames.iter().map(|f| model.pose_points(f)).collect();
        let follower_pts: Vec<_> =
            duet.follower.frames.iter().map(|f| model.pose_points(f)).collect();
        let min_gap = leader_pts
            .iter()
            .zip(&follower_pts)
            .map(|(l, f)| (l.joints[0] - f.joints[0]).norm())
            .fold(f64::INFINITY, f64::min);

        // Count the person-contact labels the encoder assigns.
        let rep = rep::encode(&duet.follower, &duet.leader, &model, &ContactConfig::default())?;
        let labels: usize = (0..rep.len())
            .map(|t| {
                layout::PERSON_CONTACT
                    .clone()
                    .filter(|&c| rep.data[[t, c]] > 0.5)
                    .count()
            })
            .sum();

        let ContactMetrics { cf, pr, .. } = contact_metrics(&leader_pts, &follower_pts, &model)?;
        println!(
            "{:<16} {:>6}  {:>6.2}m  {:>14}  {:.3}  {:.4}",
            scenario.name(),
            duet.leader.len(),
            min_gap,
            labels,
            cf,
            pr
        );
    }
    println!("\nwrote .idm/.idf files to {}", out_dir.display());
    Ok(())
}
