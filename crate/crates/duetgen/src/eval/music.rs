//! Frame-aligned music features and a deterministic metronome generator.
//!
//! Each frame carries 35 channels: a loudness envelope, 20 timbre (MFCC-like)
//! channels, 12 chroma channels, a one-hot onset-peak channel, and a one-hot
//! beat channel. Real audio analysis is out of scope; [`metronome`] fabricates
//! a plausible, fully deterministic feature track from a tempo alone, which is
//! all the synthetic pipeline and the beat-alignment metrics need.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Channels per frame.
pub const MUSIC_DIM: usize = 35;
/// Column of the loudness envelope.
pub const ENVELOPE: usize = 0;
/// Columns of the 20 timbre channels.
pub const MFCC: std::ops::Range<usize> = 1..21;
/// Columns of the 12 chroma channels.
pub const CHROMA: std::ops::Range<usize> = 21..33;
/// Column of the one-hot onset-peak channel.
pub const PEAKS: usize = 33;
/// Column of the one-hot beat channel.
pub const BEATS: usize = 34;

/// A `frames x 35` feature matrix at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicFeatures {
    pub fps: f64,
    pub data: Array2<f64>,
}

impl MusicFeatures {
    /// Validate shape, finiteness, and that the peak/beat channels are
    /// strictly binary.
    pub fn new(fps: f64, data: Array2<f64>) -> Result<Self> {
        if !fps.is_finite() || fps <= 0.0 {
            return Err(Error::data(format!("music fps must be positive, got {fps}")));
        }
        if data.ncols() != MUSIC_DIM {
            return Err(Error::data(format!(
                "music features must have {MUSIC_DIM} channels, got {}",
                data.ncols()
            )));
        }
        for (i, row) in data.outer_iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "music features non-finite at frame {i} channel {c}"
                    )));
                }
                if (c == PEAKS || c == BEATS) && v != 0.0 && v != 1.0 {
                    return Err(Error::data(format!(
                        "music channel {c} must be one-hot, frame {i} has {v}"
                    )));
                }
            }
        }
        Ok(MusicFeatures { fps, data })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Frames whose beat channel is set.
    pub fn beat_frames(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&t| self.data[[t, BEATS]] == 1.0)
            .collect()
    }

    /// Beat times in seconds.
    pub fn beat_times(&self) -> Vec<f64> {
        self.beat_frames()
            .into_iter()
            .map(|t| t as f64 / self.fps)
            .collect()
    }
}

/// Deterministic metronome features: beats every `fps * 60 / bpm` frames
/// starting at `offset_frames`, peaks on the beats, an exponentially decaying
/// envelope after each beat, slow sinusoidal timbre channels, and a chroma
/// one-hot that walks one pitch class per beat.
pub fn metronome(bpm: f64, frames: usize, fps: f64, offset_frames: usize) -> Result<MusicFeatures> {
    if !bpm.is_finite() || bpm <= 0.0 {
        return Err(Error::config(format!("bpm must be positive, got {bpm}")));
    }
    if !fps.is_finite() || fps <= 0.0 {
        return Err(Error::config(format!("fps must be positive, got {fps}")));
    }
    let frames_per_beat = fps * 60.0 / bpm;
    let mut data = Array2::zeros((frames, MUSIC_DIM));
    // Beat grid: nearest frame to each ideal beat instant.
    let mut beat_of_frame = vec![None; frames];
    let mut k = 0usize;
    loop {
        let f = (offset_frames as f64 + k as f64 * frames_per_beat).round() as usize;
        if f >= frames {
            break;
        }
        beat_of_frame[f] = Some(k);
        data[[f, BEATS]] = 1.0;
        data[[f, PEAKS]] = 1.0;
        k += 1;
    }
    let mut last_beat: Option<(usize, usize)> = None; // (frame, index)
    for t in 0..frames {
        if let Some(kb) = beat_of_frame[t] {
            last_beat = Some((t, kb));
        }
        if let Some((tb, kb)) = last_beat {
            let age = (t - tb) as f64 / frames_per_beat;
            data[[t, ENVELOPE]] = (-3.0 * age).exp();
            data[[t, CHROMA.start + kb % 12]] = 1.0;
        }
        let secs = t as f64 / fps;
        for (i, c) in MFCC.enumerate() {
            let freq = 0.5 + 0.15 * i as f64;
            let phase = 0.7 * i as f64;
            data[[t, c]] = 0.5 + 0.5 * (std::f64::consts::TAU * freq * secs + phase).sin();
        }
    }
    MusicFeatures::new(fps, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beats_every_15_frames_at_120_bpm_30_fps() {
        let m = metronome(120.0, 61, 30.0, 0).unwrap();
        assert_eq!(m.beat_frames(), vec![0, 15, 30, 45, 60]);
    }

    #[test]
    fn offset_shifts_the_grid() {
        let m = metronome(120.0, 61, 30.0, 15).unwrap();
        assert_eq!(m.beat_frames(), vec![15, 30, 45, 60]);
    }

    #[test]
    fn binary_channels_are_binary_and_envelope_bounded() {
        let m = metronome(97.0, 200, 30.0, 3).unwrap();
        for t in 0..m.len() {
            for c in [PEAKS, BEATS] {
                let v = m.data[[t, c]];
                assert!(v == 0.0 || v == 1.0);
            }
            let e = m.data[[t, ENVELOPE]];
            assert!((0.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn deterministic() {
        let a = metronome(120.0, 90, 30.0, 0).unwrap();
        let b = metronome(120.0, 90, 30.0, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_nonbinary_beat_channel() {
        let mut data = Array2::zeros((3, MUSIC_DIM));
        data[[1, BEATS]] = 0.5;
        assert!(MusicFeatures::new(30.0, data).is_err());
    }

    #[test]
    fn envelope_decays_between_beats() {
        let m = metronome(60.0, 60, 30.0, 0).unwrap();
        assert_eq!(m.data[[0, ENVELOPE]], 1.0);
        assert!(m.data[[10, ENVELOPE]] < 1.0);
        assert!(m.data[[20, ENVELOPE]] < m.data[[10, ENVELOPE]]);
    }
}
