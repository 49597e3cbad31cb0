//! Denoising diffusion: noise schedule, forward corruption, and ancestral
//! sampling.
//!
//! The crate trains the network to predict the clean signal (`x0`) rather
//! than the added noise, so the reverse process plugs the prediction into the
//! closed-form posterior `q(x_{n-1} | x_n, x0)` at every step. Steps are
//! numbered `1..=N`; step `n = 1` returns the prediction exactly (no noise is
//! added), which makes a perfect denoiser reproduce its target bit for bit.
//!
//! The samplers here are generic over the denoiser: they take closures
//! `(x_n, n) -> x0_hat`, so tests can substitute oracles and the guidance
//! module can wrap predictions without this module knowing about either.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub mod losses;
pub mod pipeline;
pub mod train;

pub use losses::{compute_losses, compute_losses_grad, LossBreakdown, LossWeights};
pub use pipeline::{sample_duet, sample_follower, RefineTrace, SampleOptions};
pub use train::{train, TrainConfig, TrainLog};

/// Default number of diffusion steps for full-quality sampling.
pub const DEFAULT_STEPS: usize = 1000;
/// Reduced step count for fast desk-scale experiments.
pub const DESK_STEPS: usize = 50;
/// Default linear-schedule endpoints.
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Precomputed noise schedule. Index convention: `beta(n)` and
/// `alpha_bar(n)` take the 1-based step number; `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear schedule: `beta` interpolates from `beta_start` to `beta_end`
    /// across `steps` steps (a single step uses the midpoint).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
        if steps == 0 {
            return Err(Error::config("schedule needs at least one step".to_string()));
        }
        for (name, v) in [("beta_start", beta_start), ("beta_end", beta_end)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!(
                    "{name} must lie strictly between 0 and 1, got {v}"
                )));
            }
        }
        if beta_end < beta_start {
            return Err(Error::config(format!(
                "beta_end {beta_end} must not be below beta_start {beta_start}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![0.5 * (beta_start + beta_end)]
        } else {
            (0..steps)
                .map(|k| {
                    let frac = k as f64 / (steps - 1) as f64;
                    beta_start + frac * (beta_end - beta_start)
                })
                .collect()
        };
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for &beta in &betas {
            prod *= 1.0 - beta;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    /// The full-quality default: 1000 steps, linear 1e-4 to 0.02.
    pub fn default_schedule() -> NoiseSchedule {
        NoiseSchedule::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }

    /// Desk-scale schedule: 50 steps over the same beta range.
    pub fn desk() -> NoiseSchedule {
        NoiseSchedule::linear(DESK_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("desk schedule parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `beta_n` for `n` in `1..=len()`.
    pub fn beta(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.len(), "step {n} outside 1..={}", self.len());
        self.betas[n - 1]
    }

    /// Cumulative signal retention up to step `n`; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, n: usize) -> f64 {
        assert!(n <= self.len(), "step {n} outside 0..={}", self.len());
        if n == 0 {
            1.0
        } else {
            self.alpha_bars[n - 1]
        }
    }

    /// Corrupt a clean signal to step `n` with the provided unit noise:
    /// `x_n = sqrt(alpha_bar_n) x0 + sqrt(1 - alpha_bar_n) noise`.
    pub fn q_sample(&self, x0: &Array2<f64>, n: usize, noise: &Array2<f64>) -> Array2<f64> {
        assert!(n >= 1 && n <= self.len());
        assert_eq!(x0.dim(), noise.dim(), "noise shape must match the signal");
        let ab = self.alpha_bar(n);
        x0 * ab.sqrt() + noise * (1.0 - ab).sqrt()
    }

    /// Variance of the reverse-step posterior at step `n`.
    pub fn posterior_variance(&self, n: usize) -> f64 {
        assert!(n >= 1 && n <= self.len());
        if n == 1 {
            0.0
        } else {
            (1.0 - self.alpha_bar(n - 1)) / (1.0 - self.alpha_bar(n)) * self.beta(n)
        }
    }

    /// One reverse step: sample `x_{n-1}` from the posterior
    /// `q(x_{n-1} | x_n, x0_hat)`. At `n = 1` this returns `x0_hat`
    /// unchanged and ignores `noise`.
    pub fn posterior_step(
        &self,
        x0_hat: &Array2<f64>,
        x_n: &Array2<f64>,
        n: usize,
        noise: &Array2<f64>,
    ) -> Array2<f64> {
        assert!(n >= 1 && n <= self.len());
        if n == 1 {
            return x0_hat.clone();
        }
        let ab_prev = self.alpha_bar(n - 1);
        let ab = self.alpha_bar(n);
        let beta = self.beta(n);
        let alpha = 1.0 - beta;
        let coef_x0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let coef_xn = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let sigma = self.posterior_variance(n).sqrt();
        x0_hat * coef_x0 + x_n * coef_xn + noise * sigma
    }
}

fn draw_noise(rng: &mut ChaCha8Rng, frames: usize, channels: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((frames, channels), || StandardNormal.sample(rng))
}

fn check_finite(x: &Array2<f64>, what: &str, n: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "{what} produced non-finite values at diffusion step {n}"
        )))
    }
}

/// Generate one stream by ancestral sampling. `denoise(x_n, n)` predicts the
/// clean signal; `refine`, when given, post-processes each prediction (this
/// is where interaction guidance hooks in). Noise draw order is fixed —
/// initial state first, then one draw per step from `N` down to 2 — so equal
/// seeds give bitwise-equal outputs.
pub fn sample_stream(
    schedule: &NoiseSchedule,
    frames: usize,
    channels: usize,
    denoise: &mut dyn FnMut(&Array2<f64>, usize) -> Result<Array2<f64>>,
    mut refine: Option<&mut dyn FnMut(Array2<f64>, usize) -> Result<Array2<f64>>>,
    seed: u64,
) -> Result<Array2<f64>> {
    if frames == 0 || channels == 0 {
        return Err(Error::config("sampling needs at least one frame and channel".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = draw_noise(&mut rng, frames, channels);
    for n in (1..=schedule.len()).rev() {
        let mut x0_hat = denoise(&x, n)?;
        if x0_hat.dim() != x.dim() {
            return Err(Error::data(format!(
                "denoiser changed the shape at step {n}: {:?} -> {:?}",
                x.dim(),
                x0_hat.dim()
            )));
        }
        check_finite(&x0_hat, "denoiser", n)?;
        if let Some(r) = refine.as_mut() {
            x0_hat = r(x0_hat, n)?;
            check_finite(&x0_hat, "guidance", n)?;
        }
        if n == 1 {
            x = x0_hat;
        } else {
            let noise = draw_noise(&mut rng, frames, channels);
            x = schedule.posterior_step(&x0_hat, &x, n, &noise);
        }
        check_finite(&x, "posterior step", n)?;
    }
    Ok(x)
}

/// Two streams produced by duet sampling.
#[derive(Debug, Clone)]
pub struct DuetStreams {
    pub leader: Array2<f64>,
    pub follower: Array2<f64>,
}

type DuetPair = (Array2<f64>, Array2<f64>);

/// Generate both streams jointly. The denoise closure sees the current noisy
/// pair `(x_l, x_n, n)` and returns clean predictions for both. Noise order:
/// leader initial state, follower initial state, then per step leader noise
/// before follower noise.
pub fn sample_pair(
    schedule: &NoiseSchedule,
    frames: usize,
    channels: usize,
    denoise: &mut dyn FnMut(&Array2<f64>, &Array2<f64>, usize) -> Result<DuetPair>,
    mut refine: Option<&mut dyn FnMut(Array2<f64>, Array2<f64>, usize) -> Result<DuetPair>>,
    seed: u64,
) -> Result<DuetStreams> {
    if frames == 0 || channels == 0 {
        return Err(Error::config("sampling needs at least one frame and channel".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_l = draw_noise(&mut rng, frames, channels);
    let mut x_f = draw_noise(&mut rng, frames, channels);
    for n in (1..=schedule.len()).rev() {
        let (mut l0, mut f0) = denoise(&x_l, &x_f, n)?;
        if l0.dim() != x_l.dim() || f0.dim() != x_f.dim() {
            return Err(Error::data(format!(
                "denoiser changed shapes at step {n}"
            )));
        }
        check_finite(&l0, "denoiser (leader)", n)?;
        check_finite(&f0, "denoiser (follower)", n)?;
        if let Some(r) = refine.as_mut() {
            let (rl, rf) = r(l0, f0, n)?;
            check_finite(&rl, "guidance (leader)", n)?;
            check_finite(&rf, "guidance (follower)", n)?;
            l0 = rl;
            f0 = rf;
        }
        if n == 1 {
            x_l = l0;
            x_f = f0;
        } else {
            let noise_l = draw_noise(&mut rng, frames, channels);
            x_l = schedule.posterior_step(&l0, &x_l, n, &noise_l);
            let noise_f = draw_noise(&mut rng, frames, channels);
            x_f = schedule.posterior_step(&f0, &x_f, n, &noise_f);
        }
        check_finite(&x_l, "posterior step (leader)", n)?;
        check_finite(&x_f, "posterior step (follower)", n)?;
    }
    Ok(DuetStreams {
        leader: x_l,
        follower: x_f,
    })
}
