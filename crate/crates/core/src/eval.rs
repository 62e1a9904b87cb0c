//! COCO-style keypoint and mask evaluation for the person category.
//!
//! Matching is greedy per image in descending detection score, each ground
//! truth matched at most once per threshold. Crowd annotations are ignore
//! regions. Precision is interpolated at 101 recall points.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::{rle_iou, Rle};
use crate::scoring::OksParams;

fn person_category() -> u32 {
    1
}

/// One predicted person, in the COCO results schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    #[serde(default = "person_category")]
    pub category_id: u32,
    /// Flat `K × (x, y, score)`.
    #[serde(default)]
    pub keypoints: Vec<f64>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Rle>,
}

/// One annotated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub image_id: u64,
    #[serde(default = "person_category")]
    pub category_id: u32,
    /// Flat `K × (x, y, visibility)`, visibility in `{0, 1, 2}`.
    #[serde(default)]
    pub keypoints: Vec<f64>,
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Rle>,
}

impl GroundTruthAnnotation {
    pub fn num_labeled(&self) -> usize {
        self.keypoints
            .chunks_exact(3)
            .filter(|c| c[2] > 0.0)
            .count()
    }

    pub fn is_crowd(&self) -> bool {
        self.iscrowd != 0
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(Error::from_json)
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    parse_json(text)
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthAnnotation>> {
    let gts: Vec<GroundTruthAnnotation> = parse_json(text)?;
    for (i, g) in gts.iter().enumerate() {
        if g.keypoints.len() % 3 != 0 {
            return Err(Error::parse(format!("[{i}].keypoints"), "length is not a multiple of 3"));
        }
        if let Some(bad) = g.keypoints.chunks_exact(3).position(|c| ![0.0, 1.0, 2.0].contains(&c[2])) {
            return Err(Error::parse(
                format!("[{i}].keypoints[{}]", 3 * bad + 2),
                "visibility must be 0, 1 or 2",
            ));
        }
    }
    Ok(gts)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    parse_detections(&fs::read_to_string(path)?)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthAnnotation>> {
    parse_ground_truth(&fs::read_to_string(path)?)
}

/// Object keypoint similarity, or `None` when the annotation has no labeled
/// keypoints.
pub fn oks(det: &Detection, gt: &GroundTruthAnnotation, kappas: &OksParams) -> Option<f64> {
    let area = gt.area.max(f64::EPSILON);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, (g, d)) in gt
        .keypoints
        .chunks_exact(3)
        .zip(det.keypoints.chunks_exact(3))
        .enumerate()
    {
        if g[2] <= 0.0 {
            continue;
        }
        let (dx, dy) = (d[0] - g[0], d[1] - g[1]);
        let kappa = kappas.kappas[k];
        sum += (-(dx * dx + dy * dy) / (2.0 * area * kappa * kappa)).exp();
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Standard OKS / IoU thresholds `0.50:0.05:0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

fn recall_thresholds() -> Vec<f64> {
    (0..101).map(|i| i as f64 * 0.01).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    fn contains(self, area: f64) -> bool {
        let (lo, hi) = match self {
            AreaRange::All => (0.0, 1e10),
            AreaRange::Small => (0.0, 32.0 * 32.0),
            AreaRange::Medium => (32.0 * 32.0, 96.0 * 96.0),
            AreaRange::Large => (96.0 * 96.0, 1e10),
        };
        area >= lo && area <= hi
    }
}

enum Similarity<'a> {
    Keypoints(&'a OksParams),
    Masks,
}

/// Matching outcome of one detection at each threshold.
struct DetRecord {
    score: f64,
    matched: Vec<bool>,
    ignored: Vec<bool>,
}

fn keypoint_box_area(kps: &[f64]) -> f64 {
    let mut it = kps.chunks_exact(3);
    let Some(first) = it.next() else { return 0.0 };
    let (mut x0, mut y0, mut x1, mut y1) = (first[0], first[1], first[0], first[1]);
    for c in it {
        x0 = x0.min(c[0]);
        x1 = x1.max(c[0]);
        y0 = y0.min(c[1]);
        y1 = y1.max(c[1]);
    }
    (x1 - x0) * (y1 - y0)
}

/// Evaluates one image at one area range; returns per-detection records and
/// the number of non-ignored ground truths.
fn evaluate_image(
    gts: &[&GroundTruthAnnotation],
    dts: &[&Detection],
    sim: &Similarity,
    thresholds: &[f64],
    range: AreaRange,
) -> Result<(Vec<DetRecord>, usize)> {
    let ignore_gt: Vec<bool> = gts
        .iter()
        .map(|g| {
            g.is_crowd()
                || !range.contains(g.area)
                || matches!(sim, Similarity::Keypoints(_)) && g.num_labeled() == 0
        })
        .collect();
    // non-ignored first, stable
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&i| ignore_gt[i]);
    let gts: Vec<&GroundTruthAnnotation> = order.iter().map(|&i| gts[i]).collect();
    let ignore_gt: Vec<bool> = order.iter().map(|&i| ignore_gt[i]).collect();

    let mut sims = vec![vec![0.0; gts.len()]; dts.len()];
    for (d, det) in dts.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            sims[d][g] = match sim {
                Similarity::Keypoints(kappas) => oks(det, gt, kappas).unwrap_or(0.0),
                Similarity::Masks => match (&det.segmentation, &gt.segmentation) {
                    (Some(a), Some(b)) => rle_iou(a, b, gt.is_crowd())?,
                    _ => 0.0,
                },
            };
        }
    }

    let det_area = |det: &Detection| match sim {
        Similarity::Keypoints(_) => keypoint_box_area(&det.keypoints),
        Similarity::Masks => det.segmentation.as_ref().map_or(0.0, |r| r.area() as f64),
    };

    let mut records: Vec<DetRecord> = dts
        .iter()
        .map(|d| DetRecord {
            score: d.score,
            matched: vec![false; thresholds.len()],
            ignored: vec![false; thresholds.len()],
        })
        .collect();
    for (t, &thr) in thresholds.iter().enumerate() {
        let mut gt_taken = vec![false; gts.len()];
        for (d, det) in dts.iter().enumerate() {
            let mut best = thr.min(1.0 - 1e-10);
            let mut hit: Option<usize> = None;
            for g in 0..gts.len() {
                if gt_taken[g] && !gts[g].is_crowd() {
                    continue;
                }
                // stop once past the non-ignored block with a real match
                if hit.is_some_and(|m| !ignore_gt[m]) && ignore_gt[g] {
                    break;
                }
                if sims[d][g] < best {
                    continue;
                }
                best = sims[d][g];
                hit = Some(g);
            }
            match hit {
                Some(g) => {
                    gt_taken[g] = true;
                    records[d].matched[t] = true;
                    records[d].ignored[t] = ignore_gt[g];
                }
                None => records[d].ignored[t] = !range.contains(det_area(det)),
            }
        }
    }
    Ok((records, ignore_gt.iter().filter(|&&i| !i).count()))
}

/// Precision at the 101 recall points and final recall, per threshold;
/// `None` when there is no non-ignored ground truth.
struct Accumulated {
    ap: Vec<f64>,
    recall: Vec<f64>,
}

fn accumulate(mut records: Vec<DetRecord>, num_gt: usize, thresholds: usize) -> Option<Accumulated> {
    if num_gt == 0 {
        return None;
    }
    // stable sort, like a mergesort on negated scores
    records.sort_by(|a, b| b.score.total_cmp(&a.score));
    let rec_thrs = recall_thresholds();
    let mut ap = Vec::with_capacity(thresholds);
    let mut recall = Vec::with_capacity(thresholds);
    for t in 0..thresholds {
        let (mut tp, mut fp) = (0.0f64, 0.0f64);
        let mut rc = Vec::new();
        let mut pr = Vec::new();
        for r in records.iter().filter(|r| !r.ignored[t]) {
            if r.matched[t] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            rc.push(tp / num_gt as f64);
            pr.push(tp / (tp + fp));
        }
        recall.push(rc.last().copied().unwrap_or(0.0));
        for i in (0..pr.len().saturating_sub(1)).rev() {
            pr[i] = pr[i].max(pr[i + 1]);
        }
        let q: f64 = rec_thrs
            .iter()
            .map(|&r| {
                let idx = rc.partition_point(|&v| v < r);
                pr.get(idx).copied().unwrap_or(0.0)
            })
            .sum();
        ap.push(q / rec_thrs.len() as f64);
    }
    Some(Accumulated { ap, recall })
}

/// AP / AR summary. Entries are `-1` where no ground truth exists in the
/// bucket or the threshold is not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_small: Option<f64>,
    pub ap_medium: f64,
    pub ap_large: f64,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar_small: Option<f64>,
    pub ar_medium: f64,
    pub ar_large: f64,
    pub thresholds: Vec<f64>,
    /// AP over all areas at each threshold.
    pub ap_per_threshold: Vec<f64>,
    pub max_detections: usize,
}

impl EvalSummary {
    /// `(column, value)` pairs in report order.
    pub fn columns(&self) -> Vec<(&'static str, f64)> {
        let mut cols = vec![("AP", self.ap), ("AP.50", self.ap50), ("AP.75", self.ap75)];
        if let Some(v) = self.ap_small {
            cols.push(("AP_S", v));
        }
        cols.extend([("AP_M", self.ap_medium), ("AP_L", self.ap_large)]);
        cols.extend([("AR", self.ar), ("AR.50", self.ar50), ("AR.75", self.ar75)]);
        if let Some(v) = self.ar_small {
            cols.push(("AR_S", v));
        }
        cols.extend([("AR_M", self.ar_medium), ("AR_L", self.ar_large)]);
        cols
    }

    pub fn to_table(&self) -> String {
        let cols = self.columns();
        let header: Vec<String> = cols.iter().map(|(n, _)| format!("{n:>7}")).collect();
        let values: Vec<String> = cols.iter().map(|(_, v)| format!("{v:>7.3}")).collect();
        format!("{}\n{}\n", header.join(" "), values.join(" "))
    }
}

fn run(
    gts: &[GroundTruthAnnotation],
    dts: &[Detection],
    sim: Similarity,
    thresholds: &[f64],
    max_dets: usize,
    ranges: &[AreaRange],
) -> Result<BTreeMap<usize, Option<Accumulated>>> {
    let mut by_image: BTreeMap<u64, (Vec<&GroundTruthAnnotation>, Vec<&Detection>)> = BTreeMap::new();
    for g in gts.iter().filter(|g| g.category_id == 1) {
        by_image.entry(g.image_id).or_default().0.push(g);
    }
    for d in dts.iter().filter(|d| d.category_id == 1) {
        by_image.entry(d.image_id).or_default().1.push(d);
    }
    let mut out = BTreeMap::new();
    for (ri, &range) in ranges.iter().enumerate() {
        let mut records = Vec::new();
        let mut num_gt = 0;
        for (g, d) in by_image.values() {
            let mut d = d.clone();
            d.sort_by(|a, b| b.score.total_cmp(&a.score));
            d.truncate(max_dets);
            let (recs, n) = evaluate_image(g, &d, &sim, thresholds, range)?;
            records.extend(recs);
            num_gt += n;
        }
        out.insert(ri, accumulate(records, num_gt, thresholds.len()));
    }
    Ok(out)
}

fn summarize(
    task: &str,
    results: &BTreeMap<usize, Option<Accumulated>>,
    ranges: &[AreaRange],
    thresholds: &[f64],
    max_dets: usize,
) -> EvalSummary {
    let pick = |range: AreaRange| results[&ranges.iter().position(|&r| r == range).expect("range")].as_ref();
    let mean = |v: &[f64]| if v.is_empty() { -1.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let at = |v: &[f64], thr: f64| {
        thresholds
            .iter()
            .position(|&t| (t - thr).abs() < 1e-9)
            .map_or(-1.0, |i| v[i])
    };
    let all = pick(AreaRange::All);
    let ap_of = |r: AreaRange| pick(r).map_or(-1.0, |a| mean(&a.ap));
    let ar_of = |r: AreaRange| pick(r).map_or(-1.0, |a| mean(&a.recall));
    let has_small = ranges.contains(&AreaRange::Small);
    EvalSummary {
        task: task.to_string(),
        ap: ap_of(AreaRange::All),
        ap50: all.map_or(-1.0, |a| at(&a.ap, 0.5)),
        ap75: all.map_or(-1.0, |a| at(&a.ap, 0.75)),
        ap_small: has_small.then(|| ap_of(AreaRange::Small)),
        ap_medium: ap_of(AreaRange::Medium),
        ap_large: ap_of(AreaRange::Large),
        ar: ar_of(AreaRange::All),
        ar50: all.map_or(-1.0, |a| at(&a.recall, 0.5)),
        ar75: all.map_or(-1.0, |a| at(&a.recall, 0.75)),
        ar_small: has_small.then(|| ar_of(AreaRange::Small)),
        ar_medium: ar_of(AreaRange::Medium),
        ar_large: ar_of(AreaRange::Large),
        thresholds: thresholds.to_vec(),
        ap_per_threshold: all.map_or_else(|| vec![-1.0; thresholds.len()], |a| a.ap.clone()),
        max_detections: max_dets,
    }
}

/// Keypoint AP/AR over OKS thresholds, medium and large buckets.
pub fn keypoint_ap(
    gts: &[GroundTruthAnnotation],
    dts: &[Detection],
    kappas: &OksParams,
    oks_thresholds: &[f64],
    max_dets: usize,
) -> Result<EvalSummary> {
    for (i, d) in dts.iter().enumerate() {
        if d.keypoints.len() != 3 * kappas.kappas.len() {
            return Err(Error::parse(
                format!("[{i}].keypoints"),
                format!("expected {} values", 3 * kappas.kappas.len()),
            ));
        }
    }
    let ranges = [AreaRange::All, AreaRange::Medium, AreaRange::Large];
    let res = run(gts, dts, Similarity::Keypoints(kappas), oks_thresholds, max_dets, &ranges)?;
    Ok(summarize("keypoints", &res, &ranges, oks_thresholds, max_dets))
}

/// Mask AP/AR over IoU thresholds, small/medium/large buckets.
pub fn mask_ap(
    gts: &[GroundTruthAnnotation],
    dts: &[Detection],
    iou_thresholds: &[f64],
    max_dets: usize,
) -> Result<EvalSummary> {
    let ranges = [AreaRange::All, AreaRange::Small, AreaRange::Medium, AreaRange::Large];
    let res = run(gts, dts, Similarity::Masks, iou_thresholds, max_dets, &ranges)?;
    Ok(summarize("masks", &res, &ranges, iou_thresholds, max_dets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::rle_encode;
    use crate::segment::ImageMask;

    fn gt_kp(image_id: u64, pts: &[(f64, f64, f64)], area: f64) -> GroundTruthAnnotation {
        GroundTruthAnnotation {
            image_id,
            category_id: 1,
            keypoints: pts.iter().flat_map(|&(x, y, v)| [x, y, v]).collect(),
            area,
            iscrowd: 0,
            segmentation: None,
        }
    }

    fn det_kp(image_id: u64, pts: &[(f64, f64)], score: f64) -> Detection {
        Detection {
            image_id,
            category_id: 1,
            keypoints: pts.iter().flat_map(|&(x, y)| [x, y, 1.0]).collect(),
            score,
            segmentation: None,
        }
    }

    #[test]
    fn oks_cases() {
        let kappas = OksParams::new(vec![0.1, 0.2]).unwrap();
        let gt = gt_kp(1, &[(10.0, 10.0, 2.0), (50.0, 60.0, 2.0)], 2500.0);
        assert_eq!(oks(&det_kp(1, &[(10.0, 10.0), (50.0, 60.0)], 1.0), &gt, &kappas), Some(1.0));
        let far = oks(&det_kp(1, &[(1e9, 1e9), (-1e9, 1e9)], 1.0), &gt, &kappas).unwrap();
        assert_eq!(far, 0.0);
        // λ = 50, second keypoint off by λ·κ = 10px
        let got = oks(&det_kp(1, &[(10.0, 10.0), (50.0, 70.0)], 1.0), &gt, &kappas).unwrap();
        let want = (1.0 + (-0.5f64).exp()) / 2.0;
        assert!((got - want).abs() < 1e-12);
        assert!((want - 0.8033).abs() < 1e-4);
        // unlabeled keypoints are skipped; none labeled means undefined
        let partial = gt_kp(1, &[(10.0, 10.0, 0.0), (50.0, 60.0, 1.0)], 2500.0);
        assert_eq!(oks(&det_kp(1, &[(900.0, 0.0), (50.0, 60.0)], 1.0), &partial, &kappas), Some(1.0));
        let none = gt_kp(1, &[(10.0, 10.0, 0.0), (50.0, 60.0, 0.0)], 2500.0);
        assert_eq!(oks(&det_kp(1, &[(10.0, 10.0), (50.0, 60.0)], 1.0), &none, &kappas), None);
    }

    #[test]
    fn oks_translation_and_scale_invariant() {
        let kappas = OksParams::coco();
        let pts: Vec<(f64, f64, f64)> = (0..17).map(|k| (20.0 + 7.0 * k as f64, 40.0 + (k * k) as f64, 2.0)).collect();
        let det: Vec<(f64, f64)> = pts.iter().enumerate().map(|(k, p)| (p.0 + (k % 3) as f64, p.1 - (k % 5) as f64)).collect();
        let base = oks(&det_kp(1, &det, 1.0), &gt_kp(1, &pts, 5000.0), &kappas).unwrap();
        for (c, t) in [(1.0, 100.0), (3.0, -20.0), (0.25, 7.0)] {
            let pts2: Vec<_> = pts.iter().map(|p| (c * p.0 + t, c * p.1 + t, p.2)).collect();
            let det2: Vec<_> = det.iter().map(|p| (c * p.0 + t, c * p.1 + t)).collect();
            let v = oks(&det_kp(1, &det2, 1.0), &gt_kp(1, &pts2, 5000.0 * c * c), &kappas).unwrap();
            assert!((v - base).abs() < 1e-9);
        }
    }

    fn as_dets(gts: &[GroundTruthAnnotation]) -> Vec<Detection> {
        gts.iter()
            .map(|g| Detection {
                image_id: g.image_id,
                category_id: 1,
                keypoints: g.keypoints.chunks_exact(3).flat_map(|c| [c[0], c[1], 1.0]).collect(),
                score: 1.0,
                segmentation: g.segmentation.clone(),
            })
            .collect()
    }

    fn kp_scene() -> Vec<GroundTruthAnnotation> {
        let person = |dx: f64, img: u64| {
            gt_kp(img, &[(10.0 + dx, 10.0, 2.0), (60.0 + dx, 10.0, 2.0), (35.0 + dx, 90.0, 1.0)], 5000.0)
        };
        vec![person(0.0, 1), person(200.0, 1), person(0.0, 2)]
    }

    #[test]
    fn perfect_detections_score_one() {
        let kappas = OksParams::new(vec![0.1; 3]).unwrap();
        let gts = kp_scene();
        let s = keypoint_ap(&gts, &as_dets(&gts), &kappas, &default_thresholds(), 20).unwrap();
        assert!((s.ap - 1.0).abs() < 1e-12);
        assert!((s.ap50 - 1.0).abs() < 1e-12);
        assert!((s.ar - 1.0).abs() < 1e-12);
        assert_eq!(s.ap_large, -1.0);
    }

    #[test]
    fn empty_detections_score_zero() {
        let kappas = OksParams::new(vec![0.1; 3]).unwrap();
        let s = keypoint_ap(&kp_scene(), &[], &kappas, &default_thresholds(), 20).unwrap();
        assert_eq!(s.ap, 0.0);
    }

    #[test]
    fn one_hit_one_spurious_two_gt() {
        // PR points: (r=.5, p=1), (r=.5, p=.5) → precision 1 for the 51
        // recall thresholds 0.00..0.50, zero beyond
        let kappas = OksParams::new(vec![0.1; 3]).unwrap();
        let gts = vec![kp_scene()[0].clone(), kp_scene()[1].clone()];
        let mut dts = vec![as_dets(&gts)[0].clone()];
        dts[0].score = 0.9;
        dts.push(det_kp(1, &[(500.0, 500.0), (520.0, 500.0), (510.0, 560.0)], 0.1));
        let s = keypoint_ap(&gts, &dts, &kappas, &[0.5], 20).unwrap();
        assert!((s.ap - 51.0 / 101.0).abs() < 1e-12, "{}", s.ap);
    }

    #[test]
    fn crowd_matches_are_neither_tp_nor_fp() {
        let kappas = OksParams::new(vec![0.1; 3]).unwrap();
        let mut gts = kp_scene();
        gts.truncate(1);
        let mut crowd = kp_scene()[1].clone();
        crowd.iscrowd = 1;
        gts.push(crowd);
        let mut dts = as_dets(&gts);
        dts[1].score = 2.0; // crowd hit ranked first
        let s = keypoint_ap(&gts, &dts, &kappas, &[0.5], 20).unwrap();
        assert!((s.ap - 1.0).abs() < 1e-12);
    }

    fn rect(h: usize, w: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Rle {
        let pixels = (0..h * w).map(|i| (y0..y1).contains(&(i / w)) && (x0..x1).contains(&(i % w))).collect();
        rle_encode(&ImageMask { height: h, width: w, pixels })
    }

    fn gt_mask(rle: Rle) -> GroundTruthAnnotation {
        GroundTruthAnnotation {
            image_id: 1,
            category_id: 1,
            keypoints: vec![],
            area: rle.area() as f64,
            iscrowd: 0,
            segmentation: Some(rle),
        }
    }

    fn det_mask(rle: Rle, score: f64) -> Detection {
        Detection { image_id: 1, category_id: 1, keypoints: vec![], score, segmentation: Some(rle) }
    }

    #[test]
    fn mask_ap_cases() {
        let a = rect(60, 80, 0, 30, 0, 40);
        let gts = vec![gt_mask(a.clone())];
        let s = mask_ap(&gts, &[det_mask(a.clone(), 0.9)], &default_thresholds(), 20).unwrap();
        assert!((s.ap - 1.0).abs() < 1e-12);
        let disjoint = rect(60, 80, 40, 60, 50, 80);
        let s = mask_ap(&gts, &[det_mask(disjoint, 0.9)], &default_thresholds(), 20).unwrap();
        assert_eq!(s.ap, 0.0);
        // half-overlap: IoU = 1/3 < 0.5
        let shifted = rect(60, 80, 0, 30, 20, 60);
        let s = mask_ap(&gts, &[det_mask(shifted, 0.9)], &[0.5], 20).unwrap();
        assert_eq!(s.ap, 0.0);
    }

    #[test]
    fn proposal_budget_truncates() {
        let a = rect(60, 80, 0, 30, 0, 40);
        let gts = vec![gt_mask(a.clone())];
        let mut dts: Vec<Detection> = (0..3).map(|i| det_mask(rect(60, 80, 40, 60, 0, 10 + i), 0.9)).collect();
        dts.push(det_mask(a, 0.5));
        let s1 = mask_ap(&gts, &dts, &[0.5], 3).unwrap();
        assert_eq!(s1.ap, 0.0);
        let s2 = mask_ap(&gts, &dts, &[0.5], 4).unwrap();
        assert!(s2.ap > 0.0);
    }

    #[test]
    fn ap_non_increasing_in_threshold() {
        let kappas = OksParams::new(vec![0.1; 3]).unwrap();
        let gts = kp_scene();
        let dts: Vec<Detection> = as_dets(&gts)
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| {
                for v in d.keypoints.iter_mut().step_by(3) {
                    *v += 3.0 * i as f64;
                }
                d.score = 1.0 - 0.1 * i as f64;
                d
            })
            .collect();
        let s = keypoint_ap(&gts, &dts, &kappas, &default_thresholds(), 20).unwrap();
        assert!(s.ap_per_threshold.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.ap_per_threshold[0] > s.ap_per_threshold[9]);
    }

    #[test]
    fn schema_errors_name_the_path() {
        let err = parse_ground_truth(r#"[{"image_id": 1, "keypoints": []}]"#).unwrap_err();
        assert!(err.to_string().contains("area"), "{err}");
        let err = parse_ground_truth(r#"[{"image_id": 1, "keypoints": [1, 2, 5], "area": 3}]"#).unwrap_err();
        assert!(err.to_string().contains("[0].keypoints[2]"), "{err}");
        let err = parse_detections(r#"[{"image_id": "x", "score": 1}]"#).unwrap_err();
        assert!(err.to_string().contains("image_id"), "{err}");
    }
}
