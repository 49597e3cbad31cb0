//! Overfit the denoiser on a single short duet and watch the training loss
//! fall. Uses a deliberately tiny model and clip so the whole run takes
//! seconds; the point is the mechanism, not the model quality.

use duetgen::body::canonical;
use duetgen::data::synth::{generate, Scenario, ScenarioSpec};
use duetgen::denoiser::{Denoiser, DenoiserConfig, DenoiserMode};
use duetgen::diffusion::train::TrainItem;
use duetgen::diffusion::{train, NoiseSchedule, TrainConfig};
use duetgen::rep::{self, ContactConfig};

fn main() -> duetgen::Result<()> {
    let model = canonical::model();
    let spec = ScenarioSpec {
        duration_s: 2.0,
        ..ScenarioSpec::new(Scenario::Orbit)
    };
    let duet = generate(&spec, &model)?;
    let cc = ContactConfig::default();
    let l_rep = rep::encode(&duet.leader, &duet.follower, &model, &cc)?;
    let f_rep = rep::encode(&duet.follower, &duet.leader, &model, &cc)?;
    let item = TrainItem::new(l_rep.data, f_rep.data, duet.music.data)?;
    println!("training item: {} frames", duet.leader.len());

    let mut denoiser = Denoiser::init(DenoiserConfig {
        model_width: 16,
        block_count: 1,
        head_count: 2,
        feedforward_width: 32,
        max_frames: duet.leader.len(),
        mode: DenoiserMode::Reactive,
        seed: 0,
        ..DenoiserConfig::default()
    })?;
    let schedule = NoiseSchedule::linear(8, 1e-4, 0.02)?;
    let config = TrainConfig {
        epochs: 80,
        learning_rate: 2e-3,
        seed: 0,
        ..TrainConfig::default()
    };

    let mut first = None;
    let mut last = None;
    train(&mut denoiser, &schedule, &model, &[item], &config, |log| {
        first.get_or_insert(log.mean.total);
        last = Some(log.mean.total);
        if (log.epoch + 1) % 10 == 0 || log.epoch == 0 {
            println!(
                "epoch {:>3}: total {:.5}  recon {:.5}  vel {:.5}  dist-matrix {:.5}",
                log.epoch + 1,
                log.mean.total,
                log.mean.recon,
                log.mean.vel,
                log.mean.dist_matrix
            );
        }
    })?;
    let (first, last) = (first.unwrap(), last.unwrap());
    println!(
        "\nmean loss fell from {first:.5} to {last:.5} ({:.1}% of the start)",
        100.0 * last / first
    );
    Ok(())
}
