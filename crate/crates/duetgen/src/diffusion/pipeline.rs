//! End-to-end generation: denoiser + noise schedule + optional refinement.
//!
//! These helpers wire a trained [`Denoiser`] into the reverse-diffusion
//! loops of the parent module and, when enabled, apply interaction
//! refinement to every clean-signal estimate before it is renoised:
//!
//! * [`sample_follower`] — reactive generation of a follower conditioned on
//!   a given leader performance and music track;
//! * [`sample_duet`] — joint generation of both dancers from noise,
//!   conditioned on music alone, with each stream refined against the
//!   other's current estimate.

use ndarray::Array2;

use super::{sample_pair, sample_stream, NoiseSchedule};
use crate::body::BodyModel;
use crate::denoiser::{Denoiser, DenoiserMode};
use crate::error::{Error, Result};
use crate::eval::music::MusicFeatures;
use crate::guidance::{refine, GuidanceConfig, PartnerContext, RefineRecord};
use crate::rep::{RepSequence, CHANNELS};

/// Knobs shared by both generation entry points.
#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub seed: u64,
    pub guidance: GuidanceConfig,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            seed: 0,
            guidance: GuidanceConfig::default(),
        }
    }
}

/// Refinement history of a duet generation, one list per stream.
#[derive(Debug, Clone, Default)]
pub struct RefineTrace {
    pub leader: Vec<RefineRecord>,
    pub follower: Vec<RefineRecord>,
}

fn check_common(
    denoiser: &Denoiser,
    frames: usize,
    music: &MusicFeatures,
    options: &SampleOptions,
) -> Result<()> {
    options.guidance.validate()?;
    if frames == 0 {
        return Err(Error::data("cannot sample an empty sequence".to_string()));
    }
    if frames > denoiser.config().max_frames {
        return Err(Error::config(format!(
            "sequence length {frames} exceeds the denoiser's maximum of {}",
            denoiser.config().max_frames
        )));
    }
    if music.len() != frames {
        return Err(Error::data(format!(
            "music length {} does not match the requested {frames} frames",
            music.len()
        )));
    }
    Ok(())
}

/// Generate a follower for a given leader. The leader stream conditions the
/// denoiser exactly as during reactive training; refinement (when active)
/// nudges each clean estimate toward labeled contacts with the leader and
/// out of the leader's body volume. Returns the generated stream and one
/// refinement record per refined step (newest step first, matching the
/// reverse-time sampling order).
pub fn sample_follower(
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    leader: &RepSequence,
    music: &MusicFeatures,
    model: &BodyModel,
    options: &SampleOptions,
) -> Result<(RepSequence, Vec<RefineRecord>)> {
    let frames = leader.len();
    check_common(denoiser, frames, music, options)?;
    let mut records = Vec::new();
    let mut denoise = |x: &Array2<f64>, n: usize| {
        denoiser
            .predict(&leader.data, x, n, &music.data)
            .map(|out| out.follower)
    };
    let data = if options.guidance.is_noop() {
        sample_stream(schedule, frames, CHANNELS, &mut denoise, None, options.seed)?
    } else {
        let partner = PartnerContext::from_rep(&leader.data, model)?;
        let mut refine_fn = |x0: Array2<f64>, n: usize| {
            if !options.guidance.active_at(n) {
                return Ok(x0);
            }
            let (refined, record) = refine(&x0, &partner, model, &options.guidance, n)?;
            records.push(record);
            Ok(refined)
        };
        sample_stream(
            schedule,
            frames,
            CHANNELS,
            &mut denoise,
            Some(&mut refine_fn),
            options.seed,
        )?
    };
    Ok((RepSequence::new(music.fps, data)?, records))
}

/// Generate both dancers jointly from noise. Requires a duet-mode denoiser.
/// When refinement is active, each stream's clean estimate is refined
/// against the partner's pre-refinement estimate, so the two updates are
/// order-independent.
pub fn sample_duet(
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    music: &MusicFeatures,
    model: &BodyModel,
    options: &SampleOptions,
) -> Result<(RepSequence, RepSequence, RefineTrace)> {
    if denoiser.config().mode != DenoiserMode::Duet {
        return Err(Error::config(
            "joint generation needs a duet-mode denoiser; this one is reactive".to_string(),
        ));
    }
    let frames = music.len();
    check_common(denoiser, frames, music, options)?;
    let mut trace = RefineTrace::default();
    let mut denoise = |x_l: &Array2<f64>, x_f: &Array2<f64>, n: usize| {
        let out = denoiser.predict(x_l, x_f, n, &music.data)?;
        let leader = out
            .leader
            .ok_or_else(|| Error::numerical("duet denoiser produced no leader output".to_string()))?;
        Ok((leader, out.follower))
    };
    let streams = if options.guidance.is_noop() {
        sample_pair(schedule, frames, CHANNELS, &mut denoise, None, options.seed)?
    } else {
        let mut refine_fn = |l0: Array2<f64>, f0: Array2<f64>, n: usize| {
            if !options.guidance.active_at(n) {
                return Ok((l0, f0));
            }
            let leader_ctx = PartnerContext::from_rep(&f0, model)?;
            let follower_ctx = PartnerContext::from_rep(&l0, model)?;
            let (l1, l_rec) = refine(&l0, &leader_ctx, model, &options.guidance, n)?;
            let (f1, f_rec) = refine(&f0, &follower_ctx, model, &options.guidance, n)?;
            trace.leader.push(l_rec);
            trace.follower.push(f_rec);
            Ok((l1, f1))
        };
        sample_pair(
            schedule,
            frames,
            CHANNELS,
            &mut denoise,
            Some(&mut refine_fn),
            options.seed,
        )?
    };
    Ok((
        RepSequence::new(music.fps, streams.leader)?,
        RepSequence::new(music.fps, streams.follower)?,
        trace,
    ))
}
