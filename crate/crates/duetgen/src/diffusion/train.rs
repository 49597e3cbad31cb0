//! Denoiser training loop.
//!
//! Each step picks a uniform random diffusion step, corrupts the clean
//! target with [`NoiseSchedule::q_sample`], runs the network, evaluates the
//! full loss stack against the clean target, and applies one optimizer
//! update (Adam with decoupled weight decay). In duet mode both streams are
//! corrupted and each stream's losses use the partner's *ground truth* as
//! the interaction reference, which keeps masks and contact labels anchored
//! to the data even while the partner's prediction is still poor.
//!
//! Randomness is confined to one seeded generator with a fixed draw order
//! (step index, then leader noise where applicable, then follower noise),
//! so a given `(seed, data, config)` triple trains bit-for-bit identically.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{compute_losses_grad, LossBreakdown, LossWeights};
use super::{draw_noise, NoiseSchedule};
use crate::body::BodyModel;
use crate::denoiser::{Denoiser, DenoiserMode, ParamSet};
use crate::error::{Error, Result};
use crate::eval::music::MUSIC_DIM;
use crate::rep::CHANNELS;

/// One training example: encoded leader and follower streams plus music.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub leader: Array2<f64>,
    pub follower: Array2<f64>,
    pub music: Array2<f64>,
}

impl TrainItem {
    pub fn new(leader: Array2<f64>, follower: Array2<f64>, music: Array2<f64>) -> Result<Self> {
        let t_len = follower.nrows();
        if t_len == 0 {
            return Err(Error::data("training item has no frames".to_string()));
        }
        if leader.dim() != (t_len, CHANNELS) || follower.ncols() != CHANNELS {
            return Err(Error::data(format!(
                "training item streams must be {t_len} x {CHANNELS}, got leader {:?}, follower {:?}",
                leader.dim(),
                follower.dim()
            )));
        }
        if music.dim() != (t_len, MUSIC_DIM) {
            return Err(Error::data(format!(
                "training item music must be {t_len} x {MUSIC_DIM}, got {:?}",
                music.dim()
            )));
        }
        Ok(TrainItem {
            leader,
            follower,
            music,
        })
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay (applied directly to the parameters, not
    /// through the gradient moments).
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            learning_rate: 1e-4,
            weight_decay: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b >= 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Mean loss breakdown over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean: LossBreakdown,
}

struct AdamW {
    m: ParamSet,
    v: ParamSet,
    step: usize,
}

impl AdamW {
    fn new(template: &ParamSet) -> AdamW {
        AdamW {
            m: template.zeros_like(),
            v: template.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, cfg: &TrainConfig, params: &mut ParamSet, grads: &ParamSet) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate
                * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * *p);
        }
    }
}

/// Train the denoiser in place. Calls `on_epoch` after each epoch with the
/// mean loss breakdown and also returns the collected logs.
pub fn train(
    denoiser: &mut Denoiser,
    schedule: &NoiseSchedule,
    model: &BodyModel,
    items: &[TrainItem],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainLog),
) -> Result<Vec<TrainLog>> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::data("training needs at least one item".to_string()));
    }
    let max_frames = denoiser.config().max_frames;
    for (idx, item) in items.iter().enumerate() {
        if item.follower.nrows() > max_frames {
            return Err(Error::data(format!(
                "training item {idx} has {} frames, above the model's max_frames {max_frames}",
                item.follower.nrows()
            )));
        }
    }
    let duet = denoiser.config().mode == DenoiserMode::Duet;
    let mut opt = AdamW::new(denoiser.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut sum = LossBreakdown::default();
        let mut steps = 0usize;
        for item in items {
            let t_len = item.follower.nrows();
            let n = rng.gen_range(1..=schedule.len());
            let breakdown = if duet {
                let noise_l = draw_noise(&mut rng, t_len, CHANNELS);
                let x_l = schedule.q_sample(&item.leader, n, &noise_l);
                let noise_f = draw_noise(&mut rng, t_len, CHANNELS);
                let x_f = schedule.q_sample(&item.follower, n, &noise_f);
                let (out, cache) = denoiser.predict_cached(&x_l, &x_f, n, &item.music)?;
                let pred_l = out.leader.expect("duet mode produces a leader output");
                let (b_l, d_l) = compute_losses_grad(
                    &pred_l,
                    &item.leader,
                    &item.follower,
                    model,
                    &config.weights,
                )?;
                let (b_f, d_f) = compute_losses_grad(
                    &out.follower,
                    &item.follower,
                    &item.leader,
                    model,
                    &config.weights,
                )?;
                let grads = denoiser.backward(&cache, Some(&d_l), &d_f)?;
                opt.update(config, denoiser.params_mut(), &grads);
                let mut b = b_l;
                b.accumulate(&b_f);
                b.scaled(0.5)
            } else {
                let noise = draw_noise(&mut rng, t_len, CHANNELS);
                let x_f = schedule.q_sample(&item.follower, n, &noise);
                let (out, cache) = denoiser.predict_cached(&item.leader, &x_f, n, &item.music)?;
                let (b, d_f) = compute_losses_grad(
                    &out.follower,
                    &item.follower,
                    &item.leader,
                    model,
                    &config.weights,
                )?;
                let grads = denoiser.backward(&cache, None, &d_f)?;
                opt.update(config, denoiser.params_mut(), &grads);
                b
            };
            sum.accumulate(&breakdown);
            steps += 1;
        }
        let log = TrainLog {
            epoch,
            steps,
            mean: sum.scaled(1.0 / steps as f64),
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::canonical;
    use crate::denoiser::DenoiserConfig;
    use crate::rep::layout;

    fn tiny_denoiser(mode: DenoiserMode) -> Denoiser {
        Denoiser::init(DenoiserConfig {
            model_width: 8,
            block_count: 1,
            head_count: 2,
            feedforward_width: 16,
            max_frames: 16,
            mode,
            seed: 5,
            ..DenoiserConfig::default()
        })
        .unwrap()
    }

    fn toy_item(seed: u64, t_len: usize) -> TrainItem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rep = |shift: f64| {
            let mut x = Array2::zeros((t_len, CHANNELS));
            for t in 0..t_len {
                x[[t, 0]] = shift + 0.1 * (t as f64);
                x[[t, 1]] = 0.9;
                x[[t, layout::YAW]] = 0.2 * rng.gen_range(-1.0..1.0);
                for c in layout::JOINT_OFFSETS.chain(layout::VERTEX_OFFSETS) {
                    x[[t, c]] = rng.gen_range(-0.3..0.3);
                }
                let i = rng.gen_range(0..crate::body::POINT_COUNT);
                x[[t, layout::PERSON_CONTACT.start + i]] = 1.0;
            }
            x
        };
        let leader = rep(0.4);
        let follower = rep(0.0);
        let music = Array2::from_shape_simple_fn((t_len, MUSIC_DIM), || rng.gen_range(-1.0..1.0));
        TrainItem::new(leader, follower, music).unwrap()
    }

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(10, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn same_seed_trains_bitwise_identically() {
        let model = canonical::model();
        let items = vec![toy_item(1, 3)];
        let config = TrainConfig {
            epochs: 3,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut den = tiny_denoiser(DenoiserMode::Reactive);
            let logs = train(&mut den, &schedule(), &model, &items, &config, |_| {}).unwrap();
            (logs, den.params().clone())
        };
        let (logs_a, params_a) = run();
        let (logs_b, params_b) = run();
        assert_eq!(logs_a, logs_b);
        assert_eq!(params_a, params_b);
    }

    #[test]
    fn overfitting_one_item_reduces_the_mean_loss() {
        let model = canonical::model();
        let items = vec![toy_item(2, 4)];
        let config = TrainConfig {
            epochs: 30,
            learning_rate: 2e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut den = tiny_denoiser(DenoiserMode::Reactive);
        let logs = train(&mut den, &schedule(), &model, &items, &config, |_| {}).unwrap();
        let early: f64 = logs[..5].iter().map(|l| l.mean.total).sum::<f64>() / 5.0;
        let late: f64 = logs[logs.len() - 5..].iter().map(|l| l.mean.total).sum::<f64>() / 5.0;
        assert!(late < early, "mean total {early} -> {late}");
    }

    #[test]
    fn duet_training_updates_both_towers() {
        let model = canonical::model();
        let items = vec![toy_item(4, 3)];
        let config = TrainConfig {
            epochs: 2,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let mut den = tiny_denoiser(DenoiserMode::Duet);
        let before = den.params().clone();
        let logs = train(&mut den, &schedule(), &model, &items, &config, |_| {}).unwrap();
        assert_eq!(logs.len(), 2);
        assert!(logs.iter().all(|l| l.mean.is_finite()));
        // Both towers' output projections must have moved.
        let moved = |name: &str| {
            den.params()
                .iter()
                .zip(before.iter())
                .filter(|((n, _), _)| n.starts_with(name))
                .any(|((_, a), (_, b))| a != b)
        };
        assert!(moved("leader.output"));
        assert!(moved("follower.output"));
    }

    #[test]
    fn non_finite_data_aborts_training() {
        let model = canonical::model();
        let mut item = toy_item(5, 3);
        item.follower[[1, 10]] = f64::NAN;
        let mut den = tiny_denoiser(DenoiserMode::Reactive);
        let err = train(
            &mut den,
            &schedule(),
            &model,
            &[item],
            &TrainConfig::default(),
            |_| {},
        )
        .unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Numerical);
    }

    #[test]
    fn invalid_configs_and_empty_data_are_rejected() {
        let model = canonical::model();
        let mut den = tiny_denoiser(DenoiserMode::Reactive);
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&mut den, &schedule(), &model, &[toy_item(6, 2)], &bad, |_| {}).is_err());
        assert!(train(
            &mut den,
            &schedule(),
            &model,
            &[],
            &TrainConfig::default(),
            |_| {}
        )
        .is_err());
    }
}
