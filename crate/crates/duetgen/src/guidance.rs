//! Interaction guidance: test-time refinement of clean-signal predictions.
//!
//! During sampling, each predicted clean signal can be nudged before the
//! next reverse-diffusion step to improve how the generated dancer relates
//! to the partner:
//!
//! * a **contact** objective pulls labeled contact points and their nearest
//!   counterpart vertices together (same measure as the contact training
//!   loss), and
//! * a **penetration** objective pushes body points out of the partner's
//!   capsule volume, scoring each penetrating point with a sigmoid of its
//!   depth.
//!
//! [`refine`] takes one descent step on the weighted sum of the two. The
//! update is restricted to the local offset channels — the root trajectory
//! and heading are left to the diffusion model — and its per-frame norm is
//! clipped so a single refinement can never teleport geometry.
//!
//! Gradient scale convention: the value reported for each objective is the
//! mean over frames, but the gradient rows are each frame's own term
//! gradient (that of frame-sum, `frames x value`). Updates therefore have
//! the same magnitude regardless of sequence length.

use nalgebra::Vector3;
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::body::sdf::{sdf, PosedCapsule};
use crate::body::{BodyModel, PointCloudFrame, JOINT_COUNT, POINT_COUNT};
use crate::denoiser::layers::sigmoid;
use crate::error::{Error, Result};
use crate::rep::{decode_frame, layout, scatter_point_gradients, CHANNELS};

/// Strength and scope of the refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Step size on the contact objective.
    pub contact_scale: f64,
    /// Step size on the penetration objective.
    pub penetration_scale: f64,
    /// Depth scale (meters) of the penetration sigmoid.
    pub sharpness: f64,
    /// Per-frame L2 cap (meters) on the applied channel update.
    pub max_update_norm: f64,
    /// Refinement runs only for diffusion steps in `step_min..=step_max`.
    pub step_min: usize,
    pub step_max: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            contact_scale: 0.1,
            penetration_scale: 5.0,
            sharpness: 0.05,
            max_update_norm: 0.05,
            step_min: 1,
            step_max: usize::MAX,
        }
    }
}

impl GuidanceConfig {
    /// No refinement at all. Samplers skip the refine call entirely in this
    /// case, guaranteeing bit-identical output to unguided sampling.
    pub fn disabled() -> Self {
        GuidanceConfig {
            contact_scale: 0.0,
            penetration_scale: 0.0,
            ..GuidanceConfig::default()
        }
    }

    pub fn is_noop(&self) -> bool {
        self.contact_scale == 0.0 && self.penetration_scale == 0.0
    }

    /// Whether refinement applies at diffusion step `n`.
    pub fn active_at(&self, n: usize) -> bool {
        !self.is_noop() && n >= self.step_min && n <= self.step_max
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("contact_scale", self.contact_scale),
            ("penetration_scale", self.penetration_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("sharpness", self.sharpness),
            ("max_update_norm", self.max_update_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.step_min > self.step_max {
            return Err(Error::config(format!(
                "step_min {} exceeds step_max {}",
                self.step_min, self.step_max
            )));
        }
        Ok(())
    }
}

struct PartnerFrame {
    points: PointCloudFrame,
    capsules: Vec<PosedCapsule>,
    labels: Vec<bool>,
}

/// The partner's decoded geometry, posed capsules, and contact labels, one
/// entry per frame. Built once per refinement target (in duet sampling, once
/// per step from the other stream's current prediction).
pub struct PartnerContext {
    frames: Vec<PartnerFrame>,
}

impl PartnerContext {
    /// Decode a partner representation into refinement-ready geometry.
    /// Contact labels are read from the person-contact channels (active
    /// above 0.5).
    pub fn from_rep(partner: &Array2<f64>, model: &BodyModel) -> Result<PartnerContext> {
        if partner.nrows() == 0 || partner.ncols() != CHANNELS {
            return Err(Error::data(format!(
                "partner representation must be frames x {CHANNELS}, got {:?}",
                partner.dim()
            )));
        }
        let pc = layout::PERSON_CONTACT.start;
        let frames = (0..partner.nrows())
            .map(|t| {
                let points = decode_frame(partner.row(t), model);
                let capsules = model.posed_capsules(&points.joints);
                let labels = (0..POINT_COUNT)
                    .map(|i| partner[[t, pc + i]] > 0.5)
                    .collect();
                PartnerFrame {
                    points,
                    capsules,
                    labels,
                }
            })
            .collect();
        Ok(PartnerContext { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn check_rep_shape(x: &Array2<f64>, partner: &PartnerContext) -> Result<()> {
    if x.dim() != (partner.len(), CHANNELS) {
        return Err(Error::data(format!(
            "refinement target must be {} x {CHANNELS} to match the partner, got {:?}",
            partner.len(),
            x.dim()
        )));
    }
    Ok(())
}

fn nearest_vertex(frame: &PointCloudFrame, p: Vector3<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (v, vert) in frame.vertices.iter().enumerate() {
        let d2 = (p - vert).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = v;
        }
    }
    (best, best_d2)
}

/// Contact objective. Per frame: squared distance from each partner point
/// labeled as touching to the nearest own vertex, plus squared distance from
/// each own labeled point (own person-contact channel > 0.5, frozen) to the
/// nearest partner vertex. Returns the frame mean and the gradient of the
/// frame sums with respect to `x`, restricted to offset channels.
pub fn contact_value_grad(
    x: &Array2<f64>,
    partner: &PartnerContext,
    model: &BodyModel,
) -> Result<(f64, Array2<f64>)> {
    check_rep_shape(x, partner)?;
    let pc = layout::PERSON_CONTACT.start;
    let mut grad = Array2::zeros(x.dim());
    let mut total = 0.0;
    for (t, pf) in partner.frames.iter().enumerate() {
        let frame = decode_frame(x.row(t), model);
        let mut d_points = vec![Vector3::zeros(); POINT_COUNT];
        for i in 0..POINT_COUNT {
            if !pf.labels[i] {
                continue;
            }
            let li = pf.points.point(i);
            let (best, d2) = nearest_vertex(&frame, li);
            total += d2;
            d_points[JOINT_COUNT + best] += (frame.vertices[best] - li) * 2.0;
        }
        for k in 0..POINT_COUNT {
            if x[[t, pc + k]] <= 0.5 {
                continue;
            }
            let fk = frame.point(k);
            let (best, d2) = nearest_vertex(&pf.points, fk);
            total += d2;
            d_points[k] += (fk - pf.points.vertices[best]) * 2.0;
        }
        scatter_point_gradients(x.row(t), model, &d_points, true, grad.row_mut(t));
    }
    Ok((total / partner.len() as f64, grad))
}

/// Penetration objective. Per frame: the mean over the 710 body points of a
/// sigmoid of penetration depth into the partner's capsule volume,
/// `sigmoid(-distance / sharpness)`, counting only points currently inside
/// (the inside set is frozen for the gradient). Returns the frame mean and
/// the gradient of the frame sums, restricted to offset channels.
pub fn penetration_value_grad(
    x: &Array2<f64>,
    partner: &PartnerContext,
    model: &BodyModel,
    sharpness: f64,
) -> Result<(f64, Array2<f64>)> {
    check_rep_shape(x, partner)?;
    if !(sharpness > 0.0) {
        return Err(Error::config(format!(
            "sharpness must be positive, got {sharpness}"
        )));
    }
    let mut grad = Array2::zeros(x.dim());
    let mut total = 0.0;
    let scale = 1.0 / POINT_COUNT as f64;
    for (t, pf) in partner.frames.iter().enumerate() {
        let frame = decode_frame(x.row(t), model);
        let mut d_points = vec![Vector3::zeros(); POINT_COUNT];
        for i in 0..POINT_COUNT {
            let s = sdf(&pf.capsules, frame.point(i));
            if s.distance >= 0.0 {
                continue;
            }
            let z = -s.distance / sharpness;
            let sig = sigmoid(z);
            total += sig * scale;
            // d sigmoid(-d/s) / d point = -sig' / s * grad(d)
            d_points[i] -= s.gradient * (sig * (1.0 - sig) * scale / sharpness);
        }
        scatter_point_gradients(x.row(t), model, &d_points, true, grad.row_mut(t));
    }
    Ok((total / partner.len() as f64, grad))
}

/// Objective values around one refinement step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    /// Diffusion step (or iteration index) the caller tagged this with.
    pub step: usize,
    pub contact_before: f64,
    pub contact_after: f64,
    pub penetration_before: f64,
    pub penetration_after: f64,
}

/// One guided descent step on the combined objective. Returns the refined
/// signal and the objective values before and after. Only offset channels
/// change; each frame's update is clipped to `max_update_norm`.
pub fn refine(
    x0: &Array2<f64>,
    partner: &PartnerContext,
    model: &BodyModel,
    config: &GuidanceConfig,
    step: usize,
) -> Result<(Array2<f64>, RefineRecord)> {
    config.validate()?;
    let (contact_before, g_con) = contact_value_grad(x0, partner, model)?;
    let (penetration_before, g_pen) =
        penetration_value_grad(x0, partner, model, config.sharpness)?;
    let mut update = Array2::zeros(x0.dim());
    Zip::from(&mut update).and(&g_con).and(&g_pen).for_each(|u, &c, &p| {
        *u = -(config.contact_scale * c + config.penetration_scale * p);
    });
    let mut refined = x0.clone();
    for t in 0..x0.nrows() {
        let row = update.row(t);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let factor = if norm > config.max_update_norm {
            config.max_update_norm / norm
        } else {
            1.0
        };
        let mut out = refined.row_mut(t);
        for (o, &u) in out.iter_mut().zip(row.iter()) {
            *o += factor * u;
        }
    }
    let (contact_after, _) = contact_value_grad(&refined, partner, model)?;
    let (penetration_after, _) =
        penetration_value_grad(&refined, partner, model, config.sharpness)?;
    Ok((
        refined,
        RefineRecord {
            step,
            contact_before,
            contact_after,
            penetration_before,
            penetration_after,
        },
    ))
}
