//! Set-level evaluation: turning duets into feature sets and a metrics
//! report.
//!
//! A [`MetricsReport`] compares a generated set of duets against a
//! reference set. Distribution metrics (distance and diversity) are
//! computed on follower features — the follower is the generated stream
//! under evaluation — with cross-distance features taken over both dancers.
//! Contact and rhythm metrics are averaged over the generated set.

use std::fmt;

use crate::body::{BodyModel, PointCloudFrame};
use crate::data::MotionSequence;
use crate::error::{Error, Result};
use crate::eval::features::{
    cross_distance_features, geometric_features, kinetic_features,
};
use crate::eval::fid::{diversity, frechet_distance};
use crate::eval::metrics::{contact_metrics, rhythm_metrics, RhythmConfig};
use crate::eval::music::MusicFeatures;
use crate::rep::{self, layout, RepSequence};

/// One decoded duet ready for metric evaluation.
#[derive(Debug, Clone)]
pub struct EvaluatedDuet {
    pub leader: Vec<PointCloudFrame>,
    pub follower: Vec<PointCloudFrame>,
    pub leader_yaws: Vec<f64>,
    pub follower_yaws: Vec<f64>,
    pub fps: f64,
}

impl EvaluatedDuet {
    /// Decode a pair of encoded representations.
    pub fn from_reps(
        leader: &RepSequence,
        follower: &RepSequence,
        model: &BodyModel,
    ) -> Result<Self> {
        if leader.len() != follower.len() {
            return Err(Error::data(format!(
                "duet streams disagree on length: {} vs {}",
                leader.len(),
                follower.len()
            )));
        }
        let yaws = |r: &RepSequence| (0..r.len()).map(|t| r.data[[t, layout::YAW]]).collect();
        Ok(EvaluatedDuet {
            leader: rep::decode(leader, model)?,
            follower: rep::decode(follower, model)?,
            leader_yaws: yaws(leader),
            follower_yaws: yaws(follower),
            fps: leader.fps,
        })
    }

    /// Pose a pair of skeletal motions.
    pub fn from_motions(
        leader: &MotionSequence,
        follower: &MotionSequence,
        model: &BodyModel,
    ) -> Result<Self> {
        if leader.len() != follower.len() {
            return Err(Error::data(format!(
                "duet streams disagree on length: {} vs {}",
                leader.len(),
                follower.len()
            )));
        }
        let pose = |m: &MotionSequence| -> (Vec<PointCloudFrame>, Vec<f64>) {
            let clouds = m.frames.iter().map(|f| model.pose_points(f)).collect();
            let yaws = m
                .frames
                .iter()
                .map(|f| {
                    rep::yaw_of(&nalgebra::UnitQuaternion::from_scaled_axis(f.rotations[0]))
                })
                .collect();
            (clouds, yaws)
        };
        let (leader_clouds, leader_yaws) = pose(leader);
        let (follower_clouds, follower_yaws) = pose(follower);
        Ok(EvaluatedDuet {
            leader: leader_clouds,
            follower: follower_clouds,
            leader_yaws,
            follower_yaws,
            fps: leader.fps,
        })
    }

    pub fn len(&self) -> usize {
        self.leader.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leader.is_empty()
    }
}

/// All metric values for a generated set, plus evaluation warnings.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsReport {
    pub fid_k: f64,
    pub fid_g: f64,
    pub div_k: f64,
    pub div_g: f64,
    pub fid_cd: f64,
    pub div_cd: f64,
    pub cf: f64,
    pub pr: f64,
    pub clr: f64,
    pub cfr: f64,
    pub cvr: f64,
    pub bed: f64,
    pub bas: f64,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// Metric names and values in report order, for machine-readable output.
    pub fn key_values(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("fid_k", self.fid_k),
            ("fid_g", self.fid_g),
            ("div_k", self.div_k),
            ("div_g", self.div_g),
            ("fid_cd", self.fid_cd),
            ("div_cd", self.div_cd),
            ("cf", self.cf),
            ("pr", self.pr),
            ("clr", self.clr),
            ("cfr", self.cfr),
            ("cvr", self.cvr),
            ("bed", self.bed),
            ("bas", self.bas),
        ]
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric      value")?;
        for (name, value) in self.key_values() {
            writeln!(f, "{name:<10}  {value:.6}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Per-sequence feature sets of one duet collection.
fn feature_sets(duets: &[EvaluatedDuet]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut kin = Vec::with_capacity(duets.len());
    let mut geo = Vec::with_capacity(duets.len());
    let mut cd = Vec::with_capacity(duets.len());
    for d in duets {
        kin.push(kinetic_features(&d.follower, d.fps)?.values);
        geo.push(geometric_features(&d.follower, &d.follower_yaws)?.values);
        cd.push(cross_distance_features(&d.leader, &d.follower)?.values);
    }
    Ok((kin, geo, cd))
}

/// Evaluate a generated duet set against a reference set. `music` supplies
/// one track per generated duet for the rhythm metrics.
pub fn metrics_report(
    generated: &[EvaluatedDuet],
    reference: &[EvaluatedDuet],
    music: &[MusicFeatures],
    model: &BodyModel,
    rhythm: &RhythmConfig,
) -> Result<MetricsReport> {
    if music.len() != generated.len() {
        return Err(Error::data(format!(
            "need one music track per generated duet: {} tracks for {} duets",
            music.len(),
            generated.len()
        )));
    }
    let (gen_kin, gen_geo, gen_cd) = feature_sets(generated)?;
    let (ref_kin, ref_geo, ref_cd) = feature_sets(reference)?;

    let mut warnings = Vec::new();
    let mut cf = 0.0;
    let mut pr = 0.0;
    let mut clr = 0.0;
    let mut cfr = 0.0;
    let mut cvr = 0.0;
    let mut bed = 0.0;
    let mut bas = 0.0;
    for (i, duet) in generated.iter().enumerate() {
        let c = contact_metrics(&duet.leader, &duet.follower, model)?;
        cf += c.cf;
        pr += c.pr;
        clr += c.clr;
        cfr += c.cfr;
        cvr += c.cvr;
        let r = rhythm_metrics(&music[i], &duet.leader, &duet.follower, duet.fps, rhythm);
        bed += r.bed;
        bas += r.bas;
        warnings.extend(r.warnings.into_iter().map(|w| format!("duet {i}: {w}")));
    }
    let n = generated.len() as f64;

    Ok(MetricsReport {
        fid_k: frechet_distance(&gen_kin, &ref_kin)?,
        fid_g: frechet_distance(&gen_geo, &ref_geo)?,
        div_k: diversity(&gen_kin)?,
        div_g: diversity(&gen_geo)?,
        fid_cd: frechet_distance(&gen_cd, &ref_cd)?,
        div_cd: diversity(&gen_cd)?,
        cf: cf / n,
        pr: pr / n,
        clr: clr / n,
        cfr: cfr / n,
        cvr: cvr / n,
        bed: bed / n,
        bas: bas / n,
        warnings,
    })
}
