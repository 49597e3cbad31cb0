//! Motion containers, file formats, synthetic duet scenarios, and dataset
//! splitting.
//!
//! * [`MotionSequence`] — raw skeletal motion (root translation + axis-angle
//!   rotations per frame) for one dancer.
//! * [`formats`] — the four binary file formats (motion, music features,
//!   encoded representation, denoiser checkpoint) plus a delimited-text
//!   music alternative; layouts in `docs/FORMATS.md`.
//! * [`synth`] — deterministic synthetic two-dancer scenarios with known
//!   contact schedules, used for tests, examples, and desk-scale training.
//! * [`split_dataset`] — seeded, scenario-stratified train/val/test split.

pub mod formats;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::body::PoseFrame;
use crate::error::{Error, Result};

/// Which dancer a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Leader,
    Follower,
}

/// Skeletal motion for one dancer: per-frame root translation and 55
/// axis-angle joint rotations at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub role: Role,
    pub frames: Vec<PoseFrame>,
}

impl MotionSequence {
    pub fn new(fps: f64, role: Role, frames: Vec<PoseFrame>) -> Result<Self> {
        if !fps.is_finite() || fps <= 0.0 {
            return Err(Error::data(format!("fps must be positive, got {fps}")));
        }
        Ok(MotionSequence { fps, role, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Fractions of the dataset assigned to the held-out splits; the remainder
/// trains. Defaults match the sizes this pipeline is benchmarked with.
#[derive(Debug, Clone, Copy)]
pub struct SplitRatios {
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            test_fraction: 0.1622,
            val_fraction: 0.0625,
        }
    }
}

/// Index sets produced by [`split_dataset`]; disjoint, exhaustive, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split sample indices into train/val/test, stratified by scenario label.
///
/// Totals are `round(n * fraction)`; per-stratum counts are apportioned by
/// largest remainder so every scenario is represented proportionally.
/// Assignment within a stratum is a seeded shuffle: the same `labels` and
/// `seed` always produce the same split.
pub fn split_dataset(labels: &[String], ratios: &SplitRatios, seed: u64) -> Result<Split> {
    let n = labels.len();
    if !(ratios.test_fraction >= 0.0
        && ratios.val_fraction >= 0.0
        && ratios.test_fraction + ratios.val_fraction < 1.0)
    {
        return Err(Error::config(format!(
            "split fractions must be non-negative and sum below 1, got test {} val {}",
            ratios.test_fraction, ratios.val_fraction
        )));
    }
    let total_test = (n as f64 * ratios.test_fraction).round() as usize;
    let total_val = (n as f64 * ratios.val_fraction).round() as usize;

    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        strata.entry(label.as_str()).or_default().push(i);
    }

    // Largest-remainder apportionment of a total across strata sizes.
    let sizes: Vec<usize> = strata.values().map(|v| v.len()).collect();
    let apportion = |total: usize| -> Vec<usize> {
        let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for k in 0..total.saturating_sub(assigned) {
            counts[order[k % order.len()]] += 1;
        }
        counts
    };
    let test_counts = apportion(total_test);
    let val_counts = apportion(total_val);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (s, indices) in strata.values().enumerate() {
        let mut pool = indices.clone();
        pool.shuffle(&mut rng);
        let k_test = test_counts[s].min(pool.len());
        let k_val = val_counts[s].min(pool.len() - k_test);
        split.test.extend(pool.drain(..k_test));
        split.val.extend(pool.drain(..k_val));
        split.train.extend(pool);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(spec: &[(&str, usize)]) -> Vec<String> {
        let mut out = Vec::new();
        for &(name, count) in spec {
            for _ in 0..count {
                out.push(name.to_string());
            }
        }
        out
    }

    #[test]
    fn default_ratios_on_100_samples() {
        let l = labels(&[("a", 100)]);
        let s = split_dataset(&l, &SplitRatios::default(), 7).unwrap();
        assert_eq!(s.test.len(), 16);
        assert_eq!(s.val.len(), 6);
        assert_eq!(s.train.len(), 78);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let l = labels(&[("a", 37), ("b", 22), ("c", 41)]);
        let s = split_dataset(&l, &SplitRatios::default(), 3).unwrap();
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(s.val.iter())
            .chain(s.test.iter())
            .copied()
            .collect();
        all.sort_unstable();
        let expect: Vec<usize> = (0..l.len()).collect();
        assert_eq!(all, expect);
    }

    #[test]
    fn split_is_stratified() {
        // Five scenarios of 20 samples: test quota 16 spread 3-4 per stratum.
        let l = labels(&[("a", 20), ("b", 20), ("c", 20), ("d", 20), ("e", 20)]);
        let s = split_dataset(&l, &SplitRatios::default(), 11).unwrap();
        assert_eq!(s.test.len(), 16);
        for stratum in 0..5 {
            let in_stratum = s
                .test
                .iter()
                .filter(|&&i| i / 20 == stratum)
                .count();
            assert!(
                (3..=4).contains(&in_stratum),
                "stratum {stratum} has {in_stratum} test samples"
            );
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let l = labels(&[("a", 30), ("b", 25)]);
        let s1 = split_dataset(&l, &SplitRatios::default(), 42).unwrap();
        let s2 = split_dataset(&l, &SplitRatios::default(), 42).unwrap();
        assert_eq!(s1, s2);
        let s3 = split_dataset(&l, &SplitRatios::default(), 43).unwrap();
        assert_ne!(s1, s3, "different seeds should shuffle differently");
    }

    #[test]
    fn rejects_overfull_ratios() {
        let l = labels(&[("a", 10)]);
        let r = SplitRatios {
            test_fraction: 0.7,
            val_fraction: 0.4,
        };
        assert!(split_dataset(&l, &r, 0).is_err());
    }
}
