//! Run the full metrics suite on the synthetic scenes: treat all five as a
//! "generated" set evaluated against themselves as reference. Distribution
//! distances vanish by construction; the interaction and rhythm columns
//! profile each scene.

use duetgen::body::canonical;
use duetgen::data::synth::{generate, Scenario, ScenarioSpec};
use duetgen::eval::metrics::{contact_metrics, RhythmConfig};
use duetgen::eval::report::{metrics_report, EvaluatedDuet};

fn main() -> duetgen::Result<()> {
    let model = canonical::model();
    let mut duets = Vec::new();
    let mut music = Vec::new();
    println!("scene            CF     PR      CLR    CFR    CVR");
    for scenario in Scenario::ALL {
        let duet = generate(&ScenarioSpec::new(scenario), &model)?;
        let eval = EvaluatedDuet::from_motions(&duet.leader, &duet.follower, &model)?;
        let m = contact_metrics(&eval.leader, &eval.follower, &model)?;
        println!(
            "{:<16} {:.3}  {:.4}  {:.3}  {:.3}  {:.3}",
            scenario.name(),
            m.cf,
            m.pr,
            m.clr,
            m.cfr,
            m.cvr
        );
        duets.push(eval);
        music.push(duet.music);
    }

    println!("\nfull report, scenes evaluated against themselves:");
    let report = metrics_report(&duets, &duets, &music, &model, &RhythmConfig::default())?;
    print!("{report}");
    Ok(())
}
