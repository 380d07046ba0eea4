//! Rigid alignment of sampled surfaces, used to certify that two immersions
//! with equal SRNF are not related by a rigid motion.

use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::Serialize;

use super::nearest::NearestIndex;
use crate::error::{Error, Result};
use crate::geom::{RigidMotion, SurfaceImmersion, Vec3};

/// Each patch needs at least this many samples for a meaningful alignment.
pub const MIN_SAMPLES_PER_PATCH: usize = 64 * 64;

/// Default non-congruence threshold as a fraction of the bounding-box diagonal.
pub const DEFAULT_THRESHOLD_RATIO: f64 = 1e-3;

const MAX_ROUNDS: usize = 60;
const MIN_ROUNDS: usize = 3;
/// Refinement rounds use every k-th sample of `f2`, keeping at most this many.
const ROUND_SAMPLES: usize = 8192;

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentReport {
    /// Motion taking `f2`'s samples closest to `f1`'s image.
    pub best_motion: RigidMotion,
    /// RMS distance of moved `f2` samples to the tangent planes of their
    /// nearest `f1` samples.
    pub rms_residual: f64,
    /// RMS distance to the nearest `f1` sample.
    pub point_rms: f64,
    pub congruent: bool,
    pub threshold: f64,
    pub rounds: usize,
}

/// Least-squares rotation and translation taking `src[k]` to `dst[k]`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> RigidMotion {
    assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - cs) * (q - cd).transpose();
    }
    // Horn's quaternion form: the top eigenvector of `n` is the rotation.
    let tr = h.trace();
    let delta = Vec3::new(h[(1, 2)] - h[(2, 1)], h[(2, 0)] - h[(0, 2)], h[(0, 1)] - h[(1, 0)]);
    let mut n = Matrix4::zeros();
    n[(0, 0)] = tr;
    n.fixed_view_mut::<1, 3>(0, 1).copy_from(&delta.transpose());
    n.fixed_view_mut::<3, 1>(1, 0).copy_from(&delta);
    n.fixed_view_mut::<3, 3>(1, 1)
        .copy_from(&(h + h.transpose() - Matrix3::identity() * tr));
    let eig = SymmetricEigen::new(n);
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let quat = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    let rotation = quat.to_rotation_matrix().into_inner();
    RigidMotion {
        rotation,
        translation: cd - rotation * cs,
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

/// Aligns `f2` to `f1` by Kabsch (sample correspondences when the layouts
/// agree, centroids otherwise) followed by nearest-neighbour refinement, and
/// declares the pair congruent when the final residual is at most `threshold`
/// (default `1e-3` times the diagonal of `f1`).
pub fn certify_noncongruent(
    f1: &SurfaceImmersion,
    f2: &SurfaceImmersion,
    threshold: Option<f64>,
) -> Result<AlignmentReport> {
    for (name, f) in [("first", f1), ("second", f2)] {
        if let Some((k, p)) = f
            .patches
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() < MIN_SAMPLES_PER_PATCH)
        {
            return Err(Error::InsufficientSamples(format!(
                "{name} surface, patch {k}: {} samples, need {MIN_SAMPLES_PER_PATCH}",
                p.len()
            )));
        }
    }
    let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD_RATIO * f1.diagonal());
    let target: Vec<Vec3> = f1.all_positions().copied().collect();
    let normals: Vec<Vec3> = crate::geom::normals(f1)?.into_iter().flatten().collect();
    let source: Vec<Vec3> = f2.all_positions().copied().collect();
    let index = NearestIndex::new(&target);
    let nearest = |p: &Vec3| index.nearest(p);

    let mut motion = if source.len() == target.len() {
        kabsch(&source, &target)
    } else {
        let n1 = target.len() as f64;
        let n2 = source.len() as f64;
        RigidMotion {
            rotation: Matrix3::identity(),
            translation: target.iter().sum::<Vec3>() / n1 - source.iter().sum::<Vec3>() / n2,
        }
    };
    let stride = source.len().div_ceil(ROUND_SAMPLES).max(1);
    let subset: Vec<Vec3> = source.iter().step_by(stride).copied().collect();
    let mut last = f64::INFINITY;
    let mut rounds = 0;
    while rounds < MAX_ROUNDS {
        let moved: Vec<Vec3> = subset.iter().map(|p| motion.apply(p)).collect();
        let pairs: Vec<usize> = moved.iter().map(&nearest).collect();
        let cur = rms(moved.iter().zip(&pairs).map(|(p, &k)| (p - target[k]).norm()));
        rounds += 1;
        let settled = (last - cur).abs() <= 1e-9 * cur || cur <= 1e-10 * f1.diagonal();
        if rounds >= MIN_ROUNDS && settled {
            break;
        }
        last = cur;
        let matched: Vec<Vec3> = pairs.iter().map(|&k| target[k]).collect();
        let step = kabsch(&moved, &matched);
        motion = RigidMotion {
            rotation: step.rotation * motion.rotation,
            translation: step.rotation * motion.translation + step.translation,
        };
    }
    let moved: Vec<Vec3> = source.iter().map(|p| motion.apply(p)).collect();
    let pairs: Vec<usize> = moved.iter().map(&nearest).collect();
    let point_rms = rms(moved.iter().zip(&pairs).map(|(p, &k)| (p - target[k]).norm()));
    let rms_residual = rms(
        moved
            .iter()
            .zip(&pairs)
            .map(|(p, &k)| (p - target[k]).dot(&normals[k])),
    );
    Ok(AlignmentReport {
        best_motion: motion,
        rms_residual,
        point_rms,
        congruent: rms_residual <= threshold,
        threshold,
        rounds,
    })
}
