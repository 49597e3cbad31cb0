//! Finite-difference verification of every hand-written gradient.
//!
//! Three suites cover the three gradient families in the crate:
//!
//! * [`contact_suite`] — the contact-closing objective used in refinement;
//! * [`penetration_suite`] — the capsule-penetration objective;
//! * [`denoiser_suite`] — denoiser parameter gradients on a width-8 model.
//!
//! Each suite draws random configurations from a seed, compares analytic
//! gradients against central differences, and reports the worst relative
//! error. Probes where the central difference itself is unstable (the
//! objective has a kink inside the probe interval, e.g. a nearest-vertex
//! tie) are skipped rather than counted as failures; both objectives are
//! piecewise-smooth by construction.

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::sdf::sdf;
use crate::body::{canonical, BodyModel, SURFACE_POINT_COUNT};
use crate::data::synth::standing;
use crate::data::{MotionSequence, Role};
use crate::denoiser::{Denoiser, DenoiserConfig, DenoiserMode};
use crate::error::{Error, Result};
use crate::guidance::{contact_value_grad, penetration_value_grad, PartnerContext};
use crate::rep::{decode_frame, encode, layout, ContactConfig, CHANNELS};

/// Maximum accepted relative error between analytic and numeric gradients.
pub const REL_TOL: f64 = 1e-3;

/// Outcome of one suite run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: &'static str,
    /// Random configurations exercised.
    pub configs: usize,
    /// Individual gradient entries compared.
    pub probes: usize,
    /// Probes skipped because the central difference was unstable.
    pub skipped: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.probes > 0
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} configs, {} probes ({} skipped), max rel error {:.3e}, {} failures",
            self.suite, self.configs, self.probes, self.skipped, self.max_rel_error, self.failures
        )
    }
}

/// Central difference of `eval` in channel `(t, c)` of `x`.
fn central(
    x: &mut Array2<f64>,
    t: usize,
    c: usize,
    h: f64,
    eval: &mut dyn FnMut(&Array2<f64>) -> Result<f64>,
) -> Result<f64> {
    let orig = x[[t, c]];
    x[[t, c]] = orig + h;
    let up = eval(x)?;
    x[[t, c]] = orig - h;
    let dn = eval(x)?;
    x[[t, c]] = orig;
    Ok((up - dn) / (2.0 * h))
}

struct ProbeStats {
    probes: usize,
    skipped: usize,
    failures: usize,
    max_rel_error: f64,
}

impl ProbeStats {
    fn new() -> Self {
        ProbeStats {
            probes: 0,
            skipped: 0,
            failures: 0,
            max_rel_error: 0.0,
        }
    }

    /// Compare one analytic entry against central differences at two step
    /// sizes; skip the probe if those disagree (non-smooth point).
    fn check(
        &mut self,
        x: &mut Array2<f64>,
        t: usize,
        c: usize,
        analytic: f64,
        eval: &mut dyn FnMut(&Array2<f64>) -> Result<f64>,
    ) -> Result<()> {
        let coarse = central(x, t, c, 1e-5, eval)?;
        let fine = central(x, t, c, 5e-6, eval)?;
        if (coarse - fine).abs() > 1e-4 * (1.0 + coarse.abs()) {
            self.skipped += 1;
            return Ok(());
        }
        let rel = (analytic - fine).abs() / (1.0 + fine.abs());
        self.probes += 1;
        self.max_rel_error = self.max_rel_error.max(rel);
        if rel > REL_TOL {
            self.failures += 1;
        }
        Ok(())
    }

    fn into_report(self, suite: &'static str, configs: usize) -> SuiteReport {
        SuiteReport {
            suite,
            configs,
            probes: self.probes,
            skipped: self.skipped,
            failures: self.failures,
            max_rel_error: self.max_rel_error,
        }
    }
}

/// A one-frame scene of two standing dancers at a random separation and
/// heading, with jittered offsets and random contact labels. Built through
/// the real encode path, then perturbed channel-wise.
fn random_scene(
    rng: &mut ChaCha8Rng,
    model: &BodyModel,
    min_gap: f64,
    max_gap: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let fps = model.data().fps;
    let gap = rng.gen_range(min_gap..max_gap);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let l_root = Vector3::new(0.0, 0.0, 0.0);
    let f_root = Vector3::new(gap * angle.cos(), 0.0, gap * angle.sin());
    let l_yaw = rng.gen_range(-1.0..1.0);
    let f_yaw = rng.gen_range(-1.0..1.0);
    let leader = MotionSequence::new(fps, Role::Leader, vec![standing(l_root, l_yaw); 2])?;
    let follower = MotionSequence::new(fps, Role::Follower, vec![standing(f_root, f_yaw); 2])?;
    let cc = ContactConfig::default();
    let mut l_rep = encode(&leader, &follower, model, &cc)?.data;
    let mut f_rep = encode(&follower, &leader, model, &cc)?.data;
    l_rep = l_rep.slice_move(ndarray::s![0..1, ..]);
    f_rep = f_rep.slice_move(ndarray::s![0..1, ..]);
    for rep in [&mut l_rep, &mut f_rep] {
        for c in layout::JOINT_OFFSETS.start..layout::VERTEX_OFFSETS.end {
            rep[[0, c]] += rng.gen_range(-0.02..0.02);
        }
    }
    let pc = layout::PERSON_CONTACT.start;
    for _ in 0..4 {
        l_rep[[0, pc + rng.gen_range(0..crate::body::POINT_COUNT)]] = 1.0;
    }
    for _ in 0..3 {
        f_rep[[0, pc + rng.gen_range(0..crate::body::POINT_COUNT)]] = 1.0;
    }
    Ok((l_rep, f_rep))
}

/// Verify the contact objective gradient on random two-dancer scenes.
pub fn contact_suite(configs: usize, seed: u64) -> Result<SuiteReport> {
    let model = canonical::model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ProbeStats::new();
    for _ in 0..configs {
        let (l_rep, mut x) = random_scene(&mut rng, &model, 0.2, 0.6)?;
        let partner = PartnerContext::from_rep(&l_rep, &model)?;
        let (_, grad) = contact_value_grad(&x, &partner, &model)?;
        let mut eval = |x: &Array2<f64>| Ok(contact_value_grad(x, &partner, &model)?.0);
        for _ in 0..3 {
            let c = layout::JOINT_OFFSETS.start
                + rng.gen_range(0..layout::VERTEX_OFFSETS.end - layout::JOINT_OFFSETS.start);
            let analytic = grad[[0, c]];
            stats.check(&mut x, 0, c, analytic, &mut eval)?;
        }
    }
    Ok(stats.into_report("contact gradient", configs))
}

/// Verify the penetration objective gradient, probing offset channels of
/// vertices that sit clearly inside the partner (the sigmoid mask is frozen,
/// so only strictly interior points have two-sided derivatives).
pub fn penetration_suite(configs: usize, seed: u64) -> Result<SuiteReport> {
    let model = canonical::model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sharp = 0.05;
    let mut stats = ProbeStats::new();
    for _ in 0..configs {
        // Close spacing so the standing bodies genuinely interpenetrate.
        let (l_rep, mut x) = random_scene(&mut rng, &model, 0.08, 0.3)?;
        let partner = PartnerContext::from_rep(&l_rep, &model)?;
        let frame = decode_frame(x.row(0), &model);
        let deep: Vec<usize> = {
            let posed = decode_frame(l_rep.row(0), &model);
            let capsules = model.posed_capsules(&posed.joints);
            (0..SURFACE_POINT_COUNT)
                .filter(|&v| sdf(&capsules, frame.vertices[v]).distance < -5e-3)
                .collect()
        };
        if deep.is_empty() {
            continue;
        }
        let (_, grad) = penetration_value_grad(&x, &partner, &model, sharp)?;
        let mut eval =
            |x: &Array2<f64>| Ok(penetration_value_grad(x, &partner, &model, sharp)?.0);
        for _ in 0..3 {
            let v = deep[rng.gen_range(0..deep.len())];
            let c = layout::vertex_offset(v) + rng.gen_range(0..3);
            let analytic = grad[[0, c]];
            stats.check(&mut x, 0, c, analytic, &mut eval)?;
        }
    }
    Ok(stats.into_report("penetration gradient", configs))
}

/// Verify denoiser parameter gradients on random width-8 models, half
/// reactive and half duet, against a random squared-error objective.
pub fn denoiser_suite(configs: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ProbeStats::new();
    for k in 0..configs {
        let mode = if k % 2 == 0 {
            DenoiserMode::Reactive
        } else {
            DenoiserMode::Duet
        };
        let mut den = Denoiser::init(DenoiserConfig {
            model_width: 8,
            block_count: 1,
            head_count: 2,
            feedforward_width: 16,
            max_frames: 8,
            mode,
            seed: rng.gen(),
            ..DenoiserConfig::default()
        })?;
        den.params_mut().perturb_all(&mut rng, 0.05);
        let t_len = 3;
        let step = rng.gen_range(1..50);
        let leader = Array2::from_shape_simple_fn((t_len, CHANNELS), || rng.gen_range(-1.0..1.0));
        let follower =
            Array2::from_shape_simple_fn((t_len, CHANNELS), || rng.gen_range(-1.0..1.0));
        let music = Array2::from_shape_simple_fn((t_len, crate::eval::music::MUSIC_DIM), || {
            rng.gen_range(-1.0..1.0)
        });
        let target_f =
            Array2::from_shape_simple_fn((t_len, CHANNELS), || rng.gen_range(-1.0..1.0));
        let target_l =
            Array2::from_shape_simple_fn((t_len, CHANNELS), || rng.gen_range(-1.0..1.0));

        let loss_of = |out: &crate::denoiser::DenoiserOutput| {
            let n = (t_len * CHANNELS) as f64;
            let mut loss = (&out.follower - &target_f).mapv(|v| v * v).sum() / n;
            if let Some(l) = &out.leader {
                loss += (l - &target_l).mapv(|v| v * v).sum() / n;
            }
            loss
        };
        let (out, cache) = den.predict_cached(&leader, &follower, step, &music)?;
        let n = (t_len * CHANNELS) as f64;
        let d_follower = (&out.follower - &target_f) * (2.0 / n);
        let d_leader = out.leader.as_ref().map(|l| (l - &target_l) * (2.0 / n));
        let grads = den.backward(&cache, d_leader.as_ref(), &d_follower)?;

        let total = den.params().values().count();
        for _ in 0..2 {
            let idx = rng.gen_range(0..total);
            let analytic = *grads.values().nth(idx).expect("index in range");
            let h = 1e-5;
            let mut fd = |delta: f64| -> Result<f64> {
                let slot = den.params_mut().values_mut().nth(idx).expect("index in range");
                let orig = *slot;
                *slot = orig + delta;
                let value = den.predict(&leader, &follower, step, &music).map(|o| loss_of(&o));
                let slot = den.params_mut().values_mut().nth(idx).expect("index in range");
                *slot = orig;
                value
            };
            let num = (fd(h)? - fd(-h)?) / (2.0 * h);
            let rel = (analytic - num).abs() / (1.0 + num.abs());
            stats.probes += 1;
            stats.max_rel_error = stats.max_rel_error.max(rel);
            if rel > REL_TOL {
                stats.failures += 1;
            }
        }
    }
    Ok(stats.into_report("denoiser parameter gradient", configs))
}

/// Run all three suites with `configs` random configurations each.
pub fn run_all(configs: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        contact_suite(configs, seed)?,
        penetration_suite(configs, seed.wrapping_add(1))?,
        denoiser_suite(configs, seed.wrapping_add(2))?,
    ])
}

/// Convenience: `Err(Numerical)` if any suite fails, for nonzero CLI exits.
pub fn require_all_pass(reports: &[SuiteReport]) -> Result<()> {
    let failing: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.suite)
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "gradient check failed for: {}",
            failing.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contact_suite_passes_on_small_run() {
        let report = contact_suite(6, 11).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_rel_error < REL_TOL);
    }

    #[test]
    fn penetration_suite_passes_on_small_run() {
        let report = penetration_suite(6, 12).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn denoiser_suite_passes_on_small_run() {
        let report = denoiser_suite(4, 13).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn failing_reports_are_flagged() {
        let bad = SuiteReport {
            suite: "demo",
            configs: 1,
            probes: 1,
            skipped: 0,
            failures: 1,
            max_rel_error: 0.5,
        };
        assert!(!bad.passed());
        assert!(require_all_pass(&[bad]).is_err());
    }
}
