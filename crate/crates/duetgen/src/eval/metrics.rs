//! Interaction quality metrics: contact rates, penetration, and rhythm.
//!
//! Contact metrics ([`contact_metrics`]) over an aligned duet:
//!
//! * `cf` — fraction of frames on which **any** leader/follower surface
//!   vertex pair is closer than the contact threshold (1 cm).
//! * `pr` — fraction of follower surface vertices inside the leader's
//!   capsule body (signed distance < 0), averaged over frames.
//! * `clr` / `cfr` — per-frame fraction of leader (resp. follower) surface
//!   vertices within the threshold of any of the other dancer's vertices,
//!   averaged over frames.
//! * `cvr` — the mean of `clr` and `cfr`.
//!
//! Rhythm metrics ([`rhythm_metrics`]): motion beats are local minima of
//! the smoothed mean joint-speed curve. `bas` scores how close each music
//! beat lies to the nearest follower motion beat under a Gaussian kernel;
//! `bed` does the same with leader motion beats as the reference and
//! follower beats as the query. Streams with no detectable beats score 0
//! and carry a warning instead of failing.

use rayon::prelude::*;

use crate::body::sdf::sdf;
use crate::body::{BodyModel, PointCloudFrame};
use crate::error::{Error, Result};
use crate::eval::music::MusicFeatures;

/// Cross-person contact distance threshold, meters.
pub const CONTACT_DISTANCE: f64 = 0.01;

/// Contact-rate and penetration summary of one duet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactMetrics {
    pub cf: f64,
    pub pr: f64,
    pub clr: f64,
    pub cfr: f64,
    pub cvr: f64,
}

/// Per-frame fraction of `subject` vertices within `threshold` of any
/// `other` vertex.
fn contact_fraction(subject: &PointCloudFrame, other: &PointCloudFrame, threshold: f64) -> f64 {
    let limit2 = threshold * threshold;
    let hits = subject
        .vertices
        .iter()
        .filter(|p| other.vertices.iter().any(|q| (*p - q).norm_squared() < limit2))
        .count();
    hits as f64 / subject.vertices.len() as f64
}

/// Compute all contact metrics over an aligned pair of point sequences.
/// The model supplies the leader's capsule proxy for penetration.
pub fn contact_metrics(
    leader: &[PointCloudFrame],
    follower: &[PointCloudFrame],
    model: &BodyModel,
) -> Result<ContactMetrics> {
    if leader.len() != follower.len() {
        return Err(Error::data(format!(
            "contact metrics need aligned sequences, got {} vs {} frames",
            leader.len(),
            follower.len()
        )));
    }
    if leader.is_empty() {
        return Err(Error::data("contact metrics need at least one frame".to_string()));
    }
    let per_frame: Vec<(f64, f64, f64, f64)> = leader
        .par_iter()
        .zip(follower)
        .map(|(lc, fc)| {
            let clr = contact_fraction(lc, fc, CONTACT_DISTANCE);
            let cfr = contact_fraction(fc, lc, CONTACT_DISTANCE);
            let cf = if clr > 0.0 || cfr > 0.0 { 1.0 } else { 0.0 };
            let capsules = model.posed_capsules(&lc.joints);
            let inside = fc
                .vertices
                .iter()
                .filter(|v| sdf(&capsules, **v).distance < 0.0)
                .count();
            let pr = inside as f64 / fc.vertices.len() as f64;
            (cf, pr, clr, cfr)
        })
        .collect();
    let n = per_frame.len() as f64;
    let cf = per_frame.iter().map(|m| m.0).sum::<f64>() / n;
    let pr = per_frame.iter().map(|m| m.1).sum::<f64>() / n;
    let clr = per_frame.iter().map(|m| m.2).sum::<f64>() / n;
    let cfr = per_frame.iter().map(|m| m.3).sum::<f64>() / n;
    Ok(ContactMetrics {
        cf,
        pr,
        clr,
        cfr,
        cvr: 0.5 * (clr + cfr),
    })
}

/// Parameters of the beat detector and alignment kernel.
#[derive(Debug, Clone, Copy)]
pub struct RhythmConfig {
    /// Gaussian kernel width for beat alignment, seconds.
    pub sigma_s: f64,
    /// Moving-average window (frames) applied to the speed curve.
    pub smooth_window: usize,
}

impl Default for RhythmConfig {
    fn default() -> Self {
        RhythmConfig {
            sigma_s: 0.1,
            smooth_window: 5,
        }
    }
}

/// Rhythm agreement scores plus any degenerate-input warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct RhythmMetrics {
    pub bed: f64,
    pub bas: f64,
    pub warnings: Vec<String>,
}

/// Mean joint speed per frame step (m/frame), length `frames − 1`.
fn speed_curve(clouds: &[PointCloudFrame]) -> Vec<f64> {
    (0..clouds.len().saturating_sub(1))
        .map(|t| {
            let sum: f64 = clouds[t]
                .joints
                .iter()
                .zip(&clouds[t + 1].joints)
                .map(|(a, b)| (b - a).norm())
                .sum();
            sum / clouds[t].joints.len() as f64
        })
        .collect()
}

/// Centered moving average; the window is truncated at the ends.
fn smooth(curve: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..curve.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(curve.len());
            curve[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Frames at which the smoothed mean joint-speed curve has a strict local
/// minimum (interior points only) — the "motion beats".
pub fn motion_beats(clouds: &[PointCloudFrame], config: &RhythmConfig) -> Vec<usize> {
    let curve = smooth(&speed_curve(clouds), config.smooth_window.max(1));
    (1..curve.len().saturating_sub(1))
        .filter(|&t| curve[t] < curve[t - 1] && curve[t] < curve[t + 1])
        .collect()
}

/// Mean Gaussian-kernel score of each reference beat against the nearest
/// query beat, both in seconds.
fn beat_alignment(reference: &[f64], query: &[f64], sigma: f64) -> f64 {
    let total: f64 = reference
        .iter()
        .map(|r| {
            let nearest = query
                .iter()
                .map(|q| (q - r).abs())
                .fold(f64::INFINITY, f64::min);
            (-nearest * nearest / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    total / reference.len() as f64
}

/// Beat-alignment scores: `bas` (music → follower motion) and `bed`
/// (leader motion → follower motion).
pub fn rhythm_metrics(
    music: &MusicFeatures,
    leader: &[PointCloudFrame],
    follower: &[PointCloudFrame],
    fps: f64,
    config: &RhythmConfig,
) -> RhythmMetrics {
    let to_secs = |frames: &[usize]| -> Vec<f64> { frames.iter().map(|&f| f as f64 / fps).collect() };
    let music_beats = to_secs(&music.beat_frames());
    let follower_beats = to_secs(&motion_beats(follower, config));
    let leader_beats = to_secs(&motion_beats(leader, config));

    let mut warnings = Vec::new();
    let mut note = |what: &str| warnings.push(format!("no detectable beats in {what}; score set to 0"));

    let bas = if music_beats.is_empty() || follower_beats.is_empty() {
        if music_beats.is_empty() {
            note("the music track");
        }
        if follower_beats.is_empty() {
            note("the follower motion");
        }
        0.0
    } else {
        beat_alignment(&music_beats, &follower_beats, config.sigma_s)
    };
    let bed = if leader_beats.is_empty() || follower_beats.is_empty() {
        if leader_beats.is_empty() {
            note("the leader motion");
        }
        // A follower warning was already recorded for BAS if relevant.
        0.0
    } else {
        beat_alignment(&leader_beats, &follower_beats, config.sigma_s)
    };
    RhythmMetrics { bed, bas, warnings }
}
