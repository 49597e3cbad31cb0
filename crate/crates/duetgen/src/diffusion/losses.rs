//! Training objective: channel reconstruction plus geometric and
//! interaction-aware auxiliary terms.
//!
//! All components are always computed (so logs stay comparable when a weight
//! is zeroed); the weighted sum forms `total`, whose gradient with respect to
//! the follower prediction [`compute_losses_grad`] returns. The auxiliary
//! terms operate on decoded world-space body points and their gradients are
//! scattered back to the root/yaw/offset channels through the decode adjoint.
//!
//! Non-smooth ingredients are deliberately frozen at function entry so the
//! gradient is well defined: foot-contact weights come from the prediction's
//! label channels but are treated as constants, the distance-matrix mask is
//! computed from ground truth only, and the contact term fixes both the
//! active labels (thresholded at 0.5) and the nearest-vertex choices before
//! differentiating.

use nalgebra::Vector3;
use ndarray::{Array2, Zip};

use crate::body::{BodyModel, PointCloudFrame, JOINT_COUNT, POINT_COUNT};
use crate::error::{Error, Result};
use crate::rep::{decode_frame, layout, scatter_point_gradients, wrap_angle, CHANNELS};

/// Weights for the auxiliary loss terms (reconstruction is always weight 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub vel: f64,
    pub acc: f64,
    pub foot: f64,
    pub dist_matrix: f64,
    pub rel_orient: f64,
    pub contact: f64,
    /// Ground-truth joint pairs farther apart than this (meters) are ignored
    /// by the distance-matrix term.
    pub dist_threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            vel: 1.0,
            acc: 1.0,
            foot: 0.5,
            dist_matrix: 0.5,
            rel_orient: 0.5,
            contact: 1.0,
            dist_threshold: 1.0,
        }
    }
}

impl LossWeights {
    /// All auxiliary weights zero: plain reconstruction.
    pub fn reconstruction_only() -> Self {
        LossWeights {
            vel: 0.0,
            acc: 0.0,
            foot: 0.0,
            dist_matrix: 0.0,
            rel_orient: 0.0,
            contact: 0.0,
            ..LossWeights::default()
        }
    }
}

/// Per-component loss values plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub recon: f64,
    pub vel: f64,
    pub acc: f64,
    pub foot: f64,
    pub dist_matrix: f64,
    pub rel_orient: f64,
    pub contact: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.recon += other.recon;
        self.vel += other.vel;
        self.acc += other.acc;
        self.foot += other.foot;
        self.dist_matrix += other.dist_matrix;
        self.rel_orient += other.rel_orient;
        self.contact += other.contact;
        self.total += other.total;
    }

    pub fn scaled(&self, f: f64) -> LossBreakdown {
        LossBreakdown {
            recon: self.recon * f,
            vel: self.vel * f,
            acc: self.acc * f,
            foot: self.foot * f,
            dist_matrix: self.dist_matrix * f,
            rel_orient: self.rel_orient * f,
            contact: self.contact * f,
            total: self.total * f,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.recon,
            self.vel,
            self.acc,
            self.foot,
            self.dist_matrix,
            self.rel_orient,
            self.contact,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total {:.6} | recon {:.6} vel {:.6} acc {:.6} foot {:.6} dm {:.6} ro {:.6} con {:.6}",
            self.total,
            self.recon,
            self.vel,
            self.acc,
            self.foot,
            self.dist_matrix,
            self.rel_orient,
            self.contact
        )
    }
}

/// Evaluate every loss component for a follower prediction against its
/// ground truth, with `leader` as the interaction reference.
pub fn compute_losses(
    pred: &Array2<f64>,
    gt: &Array2<f64>,
    leader: &Array2<f64>,
    model: &BodyModel,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    compute_inner(pred, gt, leader, model, weights, None)
}

/// As [`compute_losses`], additionally returning `d total / d pred`.
pub fn compute_losses_grad(
    pred: &Array2<f64>,
    gt: &Array2<f64>,
    leader: &Array2<f64>,
    model: &BodyModel,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let mut grad = Array2::zeros(pred.dim());
    let breakdown = compute_inner(pred, gt, leader, model, weights, Some(&mut grad))?;
    Ok((breakdown, grad))
}

fn decode_points(x: &Array2<f64>, model: &BodyModel) -> Vec<PointCloudFrame> {
    (0..x.nrows()).map(|t| decode_frame(x.row(t), model)).collect()
}

fn compute_inner(
    pred: &Array2<f64>,
    gt: &Array2<f64>,
    leader: &Array2<f64>,
    model: &BodyModel,
    weights: &LossWeights,
    mut grad: Option<&mut Array2<f64>>,
) -> Result<LossBreakdown> {
    let t_len = pred.nrows();
    if t_len == 0 {
        return Err(Error::data("losses need at least one frame".to_string()));
    }
    for (name, x) in [("prediction", pred), ("ground truth", gt), ("leader", leader)] {
        if x.dim() != (t_len, CHANNELS) {
            return Err(Error::data(format!(
                "{name} must be {t_len} x {CHANNELS}, got {:?}",
                x.dim()
            )));
        }
    }
    if weights.dist_threshold <= 0.0 {
        return Err(Error::config(format!(
            "dist_threshold must be positive, got {}",
            weights.dist_threshold
        )));
    }

    let pred_pts = decode_points(pred, model);
    let gt_pts = decode_points(gt, model);
    let leader_pts = decode_points(leader, model);
    // Gradient w.r.t. the decoded prediction points, weights premultiplied;
    // scattered through the decode adjoint at the end.
    let mut d_points: Vec<Vec<Vector3<f64>>> = if grad.is_some() {
        vec![vec![Vector3::zeros(); POINT_COUNT]; t_len]
    } else {
        Vec::new()
    };

    // Channel reconstruction: mean squared error over every channel.
    let recon_norm = (t_len * CHANNELS) as f64;
    let mut recon = 0.0;
    Zip::from(pred).and(gt).for_each(|&p, &g| {
        let e = p - g;
        recon += e * e;
    });
    recon /= recon_norm;
    if let Some(g) = grad.as_deref_mut() {
        Zip::from(&mut *g).and(pred).and(gt).for_each(|o, &p, &gv| {
            *o += 2.0 * (p - gv) / recon_norm;
        });
    }

    // Velocity match: first differences of the decoded points.
    let mut vel = 0.0;
    if t_len >= 2 {
        let norm = ((t_len - 1) * POINT_COUNT * 3) as f64;
        for t in 0..t_len - 1 {
            for i in 0..POINT_COUNT {
                let dp = pred_pts[t + 1].point(i) - pred_pts[t].point(i);
                let dg = gt_pts[t + 1].point(i) - gt_pts[t].point(i);
                let e = dp - dg;
                vel += e.norm_squared();
                if !d_points.is_empty() {
                    let gv = e * (2.0 * weights.vel / norm);
                    d_points[t + 1][i] += gv;
                    d_points[t][i] -= gv;
                }
            }
        }
        vel /= norm;
    }

    // Acceleration match: second differences of the decoded points.
    let mut acc = 0.0;
    if t_len >= 3 {
        let norm = ((t_len - 2) * POINT_COUNT * 3) as f64;
        for t in 0..t_len - 2 {
            for i in 0..POINT_COUNT {
                let ap = pred_pts[t + 2].point(i) - pred_pts[t + 1].point(i) * 2.0
                    + pred_pts[t].point(i);
                let ag =
                    gt_pts[t + 2].point(i) - gt_pts[t + 1].point(i) * 2.0 + gt_pts[t].point(i);
                let e = ap - ag;
                acc += e.norm_squared();
                if !d_points.is_empty() {
                    let gv = e * (2.0 * weights.acc / norm);
                    d_points[t + 2][i] += gv;
                    d_points[t + 1][i] -= gv * 2.0;
                    d_points[t][i] += gv;
                }
            }
        }
        acc /= norm;
    }

    // Foot skate: predicted foot speed weighted by the prediction's own
    // (frozen, clamped) contact labels.
    let mut foot = 0.0;
    if t_len >= 2 {
        let feet = model.foot_joints();
        let norm = ((t_len - 1) * feet.len()) as f64;
        for t in 0..t_len - 1 {
            for (k, &j) in feet.iter().enumerate() {
                let c = pred[[t, layout::FOOT_CONTACT.start + k]].clamp(0.0, 1.0);
                let v = pred_pts[t + 1].joints[j] - pred_pts[t].joints[j];
                let speed = v.norm();
                foot += c * speed;
                if !d_points.is_empty() && speed > 1e-12 {
                    let gv = v * (c * weights.foot / (speed * norm));
                    d_points[t + 1][j] += gv;
                    d_points[t][j] -= gv;
                }
            }
        }
        foot /= norm;
    }

    // Distance matrix: leader-to-follower joint distances, masked to the
    // ground-truth pairs that are closer than the threshold.
    let mut dm = 0.0;
    {
        let norm = (t_len * JOINT_COUNT * JOINT_COUNT) as f64;
        for t in 0..t_len {
            for a in 0..JOINT_COUNT {
                let la = leader_pts[t].joints[a];
                for b in 0..JOINT_COUNT {
                    let d_gt = (la - gt_pts[t].joints[b]).norm();
                    if d_gt >= weights.dist_threshold {
                        continue;
                    }
                    let diff = pred_pts[t].joints[b] - la;
                    let d_pred = diff.norm();
                    let e = d_pred - d_gt;
                    dm += e * e;
                    if !d_points.is_empty() && d_pred > 1e-12 {
                        d_points[t][b] +=
                            diff * (2.0 * e * weights.dist_matrix / (d_pred * norm));
                    }
                }
            }
        }
        dm /= norm;
    }

    // Relative orientation: wrapped leader-minus-follower yaw difference.
    let mut ro = 0.0;
    {
        for t in 0..t_len {
            let o_pred = wrap_angle(leader[[t, layout::YAW]] - pred[[t, layout::YAW]]);
            let o_gt = wrap_angle(leader[[t, layout::YAW]] - gt[[t, layout::YAW]]);
            let e = wrap_angle(o_pred - o_gt);
            ro += e * e;
            if let Some(g) = grad.as_deref_mut() {
                g[[t, layout::YAW]] -= 2.0 * e * weights.rel_orient / t_len as f64;
            }
        }
        ro /= t_len as f64;
    }

    // Contact attraction: labeled leader points pull the nearest predicted
    // follower vertex in, and the prediction's own labeled points are pulled
    // toward the nearest leader vertex.
    let mut con = 0.0;
    {
        let pc = layout::PERSON_CONTACT.start;
        for t in 0..t_len {
            let mut frame_sum = 0.0;
            for i in 0..POINT_COUNT {
                if leader[[t, pc + i]] <= 0.5 {
                    continue;
                }
                let li = leader_pts[t].point(i);
                let (best, d2) = nearest_vertex(&pred_pts[t], li);
                frame_sum += d2;
                if !d_points.is_empty() {
                    d_points[t][JOINT_COUNT + best] += (pred_pts[t].vertices[best] - li)
                        * (2.0 * weights.contact / t_len as f64);
                }
            }
            for k in 0..POINT_COUNT {
                if pred[[t, pc + k]] <= 0.5 {
                    continue;
                }
                let fk = pred_pts[t].point(k);
                let (best, d2) = nearest_vertex(&leader_pts[t], fk);
                frame_sum += d2;
                if !d_points.is_empty() {
                    d_points[t][k] += (fk - leader_pts[t].vertices[best])
                        * (2.0 * weights.contact / t_len as f64);
                }
            }
            con += frame_sum;
        }
        con /= t_len as f64;
    }

    if let Some(g) = grad.as_deref_mut() {
        for t in 0..t_len {
            scatter_point_gradients(pred.row(t), model, &d_points[t], false, g.row_mut(t));
        }
    }

    let total = recon
        + weights.vel * vel
        + weights.acc * acc
        + weights.foot * foot
        + weights.dist_matrix * dm
        + weights.rel_orient * ro
        + weights.contact * con;
    let breakdown = LossBreakdown {
        recon,
        vel,
        acc,
        foot,
        dist_matrix: dm,
        rel_orient: ro,
        contact: con,
        total,
    };
    if !breakdown.is_finite() {
        return Err(Error::numerical(format!(
            "loss evaluation produced non-finite values: {breakdown}"
        )));
    }
    Ok(breakdown)
}

/// Index and squared distance of the frame vertex nearest to `p`.
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
