//! Keypoint and instance scoring, and the two NMS schemes.
//!
//! Keypoints are scored either by the Hough map value at their position or
//! by the Expected-OKS score: the presence probability times the
//! OKS kernel averaged over the normalized Hough mass near the keypoint.
//! Instances take the mean keypoint score, then go through hard OKS-NMS or
//! soft-NMS rescoring.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::PoseInstance;
use crate::error::{Error, Result};
use crate::field::FieldGrid;
use crate::graph::COCO_KEYPOINTS;
use crate::hough::HoughMaps;

const COCO_KAPPAS: &str = include_str!("../config/coco_kappas.txt");

/// Per-keypoint OKS falloff constants `κ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OksParams {
    pub kappas: Vec<f64>,
}

impl OksParams {
    pub fn new(kappas: Vec<f64>) -> Result<Self> {
        if let Some(bad) = kappas.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::usage(format!("kappa values must be positive, got {bad}")));
        }
        Ok(Self { kappas })
    }

    /// The bundled COCO constants for the 17 person keypoints.
    pub fn coco() -> Self {
        Self::parse(COCO_KAPPAS, &COCO_KEYPOINTS).expect("bundled kappa file is valid")
    }

    /// Parses `keypoint_name value` lines; every name in `names` must
    /// appear exactly once.
    pub fn parse(text: &str, names: &[&str]) -> Result<Self> {
        let mut kappas = vec![None; names.len()];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("line {}", i + 1);
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(at(), "expected `keypoint_name value`"));
            };
            let idx = names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::parse(at(), format!("unknown keypoint `{name}`")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::parse(at(), format!("bad number `{value}`")))?;
            if kappas[idx].replace(v).is_some() {
                return Err(Error::parse(at(), format!("duplicate keypoint `{name}`")));
            }
        }
        let kappas = kappas
            .into_iter()
            .zip(names)
            .map(|(v, n)| v.ok_or_else(|| Error::parse(*n, "missing kappa")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kappas)
    }

    pub fn load(path: impl AsRef<Path>, names: &[&str]) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMethod {
    Hough,
    ExpectedOks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmsMethod {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub method: ScoringMethod,
    pub nms: NmsMethod,
    pub hard_nms_oks_threshold: f64,
    pub soft_nms_radius: f64,
    /// Lower bound on the instance scale, in pixels.
    pub scale_floor: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            method: ScoringMethod::ExpectedOks,
            nms: NmsMethod::Soft,
            hard_nms_oks_threshold: 0.5,
            soft_nms_radius: 10.0,
            scale_floor: 1.0,
        }
    }
}

/// Square root of the area of the tight box around the present keypoints,
/// never below `floor`.
pub fn instance_scale(instance: &PoseInstance, floor: f64) -> f64 {
    let mut pts = instance
        .keypoints
        .iter()
        .zip(&instance.keypoint_present)
        .filter(|(_, &present)| present)
        .map(|(p, _)| *p);
    let Some(first) = pts.next() else {
        return floor;
    };
    let (mut lo, mut hi) = (first, first);
    for p in pts {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    ((hi.x - lo.x) * (hi.y - lo.y)).sqrt().max(floor)
}

/// `s_{j,k} = h_k(y_{j,k})`, clamped to `[0, 1]`.
pub fn score_keypoints_hough(instance: &PoseInstance, hough: &HoughMaps) -> Vec<f64> {
    instance
        .keypoints
        .iter()
        .enumerate()
        .map(|(k, &p)| hough.sample(k, p).clamp(0.0, 1.0))
        .collect()
}

/// Expected-OKS keypoint scores.
///
/// The integral runs over Hough cells whose centers lie within `disk_radius`
/// of the keypoint, with the Hough mass renormalized to sum to one over those
/// cells. A disk without mass scores zero.
pub fn score_keypoints_expected_oks(
    instance: &PoseInstance,
    hough: &HoughMaps,
    heatmaps: &FieldGrid,
    oks: &OksParams,
    disk_radius: f64,
    scale_floor: f64,
) -> Vec<f64> {
    let scale = instance_scale(instance, scale_floor);
    instance
        .keypoints
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let presence = heatmaps.sample(k, y).clamp(0.0, 1.0);
            if presence == 0.0 {
                return 0.0;
            }
            let kappa = oks.kappas[k];
            let denom = 2.0 * scale * scale * kappa * kappa;
            let (mass, weighted) = disk_cells(hough, y, disk_radius).fold(
                (0.0, 0.0),
                |(m, acc), (row, col)| {
                    let h = hough.get(row, col, k).max(0.0);
                    let d2 = hough.cell_center(row, col).distance_sq(y);
                    (m + h, acc + h * (-d2 / denom).exp())
                },
            );
            if mass > 0.0 {
                (presence * weighted / mass).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

fn disk_cells(
    hough: &HoughMaps,
    center: crate::field::Point2D,
    radius: f64,
) -> impl Iterator<Item = (usize, usize)> + '_ {
    let s = hough.stride() as f64;
    let r2 = radius * radius;
    let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64 - 1.0) as usize;
    let (c0, c1) = (
        clamp(((center.x - radius) / s - 0.5).floor(), hough.width()),
        clamp(((center.x + radius) / s - 0.5).ceil(), hough.width()),
    );
    let (r0, r1) = (
        clamp(((center.y - radius) / s - 0.5).floor(), hough.height()),
        clamp(((center.y + radius) / s - 0.5).ceil(), hough.height()),
    );
    (r0..=r1)
        .flat_map(move |row| (c0..=c1).map(move |col| (row, col)))
        .filter(move |&(row, col)| hough.cell_center(row, col).distance_sq(center) <= r2)
}

/// Fills keypoint scores and sets `instance_score` to their mean.
pub fn score_instance(
    instance: &mut PoseInstance,
    method: ScoringMethod,
    hough: &HoughMaps,
    heatmaps: &FieldGrid,
    oks: &OksParams,
    scale_floor: f64,
) {
    instance.keypoint_scores = match method {
        ScoringMethod::Hough => score_keypoints_hough(instance, hough),
        ScoringMethod::ExpectedOks => score_keypoints_expected_oks(
            instance,
            hough,
            heatmaps,
            oks,
            hough.disk_radius(),
            scale_floor,
        ),
    };
    let k = instance.keypoint_scores.len().max(1) as f64;
    instance.instance_score = instance.keypoint_scores.iter().sum::<f64>() / k;
}

/// OKS between two decoded poses, using `reference`'s scale.
pub fn pose_oks(candidate: &PoseInstance, reference: &PoseInstance, oks: &OksParams, scale_floor: f64) -> f64 {
    let scale = instance_scale(reference, scale_floor);
    let area = scale * scale;
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in 0..reference.num_keypoints() {
        if !(reference.keypoint_present[k] && candidate.keypoint_present[k]) {
            continue;
        }
        let d2 = candidate.keypoints[k].distance_sq(reference.keypoints[k]);
        let kappa = oks.kappas[k];
        sum += (-d2 / (2.0 * area * kappa * kappa)).exp();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn sort_by_score(instances: &mut [PoseInstance]) {
    instances.sort_by(|a, b| b.instance_score.total_cmp(&a.instance_score));
}

/// Hard OKS-NMS: sweep in descending score order and drop any instance whose
/// OKS against an already kept one reaches `threshold`.
pub fn hard_nms(
    mut instances: Vec<PoseInstance>,
    oks: &OksParams,
    threshold: f64,
    scale_floor: f64,
) -> Vec<PoseInstance> {
    sort_by_score(&mut instances);
    let mut kept: Vec<PoseInstance> = Vec::with_capacity(instances.len());
    for inst in instances {
        if kept
            .iter()
            .all(|k| pose_oks(&inst, k, oks, scale_floor) < threshold)
        {
            kept.push(inst);
        }
    }
    kept
}

/// Soft-NMS: a keypoint contributes its score only if no higher-ranked
/// instance has its same-type keypoint within `radius`. All instances are
/// kept and re-sorted by the new score.
pub fn soft_nms_rescore(mut instances: Vec<PoseInstance>, radius: f64) -> Vec<PoseInstance> {
    sort_by_score(&mut instances);
    let r2 = radius * radius;
    let mut rescored = Vec::with_capacity(instances.len());
    for (j, inst) in instances.iter().enumerate() {
        let k = inst.num_keypoints();
        let mut sum = 0.0;
        for kp in 0..k {
            let y = inst.keypoints[kp];
            let claimed = instances[..j]
                .iter()
                .any(|other| other.keypoints[kp].distance_sq(y) <= r2);
            if !claimed {
                sum += inst.keypoint_scores[kp];
            }
        }
        rescored.push(sum / k.max(1) as f64);
    }
    for (inst, s) in instances.iter_mut().zip(rescored) {
        inst.instance_score = s;
    }
    sort_by_score(&mut instances);
    instances
}
