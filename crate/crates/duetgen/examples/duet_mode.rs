//! Joint two-dancer generation: both streams start as noise and are
//! denoised together, each tower cross-attending to the other, conditioned
//! on music alone. Overfits a small duet-mode model on the handhold scene,
//! samples a fresh pair, and reports how much contact the generated couple
//! makes.

use duetgen::body::canonical;
use duetgen::data::synth::{generate, Scenario, ScenarioSpec};
use duetgen::denoiser::{Denoiser, DenoiserConfig, DenoiserMode};
use duetgen::diffusion::train::TrainItem;
use duetgen::diffusion::{sample_duet, train, NoiseSchedule, SampleOptions, TrainConfig};
use duetgen::eval::metrics::contact_metrics;
use duetgen::guidance::GuidanceConfig;
use duetgen::rep::{self, ContactConfig};

fn main() -> duetgen::Result<()> {
    let model = canonical::model();
    let spec = ScenarioSpec {
        duration_s: 2.0,
        ..ScenarioSpec::new(Scenario::Handhold)
    };
    let duet = generate(&spec, &model)?;
    let cc = ContactConfig::default();
    let l_rep = rep::encode(&duet.leader, &duet.follower, &model, &cc)?;
    let f_rep = rep::encode(&duet.follower, &duet.leader, &model, &cc)?;
    let gt_cf = {
        let l = rep::decode(&l_rep, &model)?;
        let f = rep::decode(&f_rep, &model)?;
        contact_metrics(&l, &f, &model)?.cf
    };
    println!("ground truth: {} frames, contact frequency {gt_cf:.3}", duet.leader.len());

    let mut denoiser = Denoiser::init(DenoiserConfig {
        model_width: 16,
        block_count: 1,
        head_count: 2,
        feedforward_width: 32,
        max_frames: duet.leader.len(),
        mode: DenoiserMode::Duet,
        seed: 0,
        ..DenoiserConfig::default()
    })?;
    let schedule = NoiseSchedule::linear(8, 1e-4, 0.02)?;
    let item = TrainItem::new(l_rep.data, f_rep.data, duet.music.data.clone())?;
    let config = TrainConfig {
        epochs: 120,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    };
    train(&mut denoiser, &schedule, &model, &[item], &config, |log| {
        if (log.epoch + 1) % 30 == 0 {
            println!("epoch {:>3}: total {:.5} recon {:.5}", log.epoch + 1, log.mean.total, log.mean.recon);
        }
    })?;

    let options = SampleOptions {
        seed: 4,
        guidance: GuidanceConfig::default(),
    };
    let (gen_l, gen_f, trace) = sample_duet(&denoiser, &schedule, &duet.music, &model, &options)?;
    println!(
        "sampled a fresh duet from noise: 2 x {} frames, {} refinement steps per stream",
        gen_l.len(),
        trace.follower.len()
    );
    let l = rep::decode(&gen_l, &model)?;
    let f = rep::decode(&gen_f, &model)?;
    let m = contact_metrics(&l, &f, &model)?;
    println!("generated pair: contact frequency {:.3}, penetration rate {:.4}", m.cf, m.pr);
    Ok(())
}
