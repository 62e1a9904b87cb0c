//! Greedy grouping of Hough seeds into person instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldGrid, Point2D};
use crate::graph::KinematicGraph;
use crate::hough::{HoughMaps, SeedCandidate};

/// One detected person.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseInstance {
    pub keypoints: Vec<Point2D>,
    /// Per-keypoint confidences, filled in by scoring.
    pub keypoint_scores: Vec<f64>,
    /// Mean keypoint score before NMS; the rescored value afterwards.
    pub instance_score: f64,
    pub seed_type: usize,
    pub seed_score: f64,
    /// Index of this instance in decode order.
    pub decode_order: usize,
    pub keypoint_present: Vec<bool>,
}

impl PoseInstance {
    pub fn num_keypoints(&self) -> usize {
        self.keypoints.len()
    }

    /// An instance at the given positions with zero scores.
    pub fn from_keypoints(keypoints: Vec<Point2D>) -> Self {
        let k = keypoints.len();
        Self {
            keypoints,
            keypoint_scores: vec![0.0; k],
            instance_score: 0.0,
            seed_type: 0,
            seed_score: 0.0,
            decode_order: 0,
            keypoint_present: vec![true; k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Seeds within this many pixels of an existing instance's keypoint of
    /// the same type are rejected.
    pub nms_radius: f64,
    /// Move each seed from its cell center by the short-range offset there.
    pub refine_seeds: bool,
    /// When positive, snap each propagated keypoint to the strongest Hough
    /// cell within this radius (if that cell beats `snap_min_score`).
    pub snap_radius: f64,
    pub snap_min_score: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            nms_radius: 10.0,
            refine_seeds: true,
            snap_radius: 0.0,
            snap_min_score: 0.01,
        }
    }
}

struct Queued(SeedCandidate);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // max-heap: higher score first, then earlier (row, col, type)
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (&self.0, &other.0);
        a.score
            .total_cmp(&b.score)
            .then(b.row.cmp(&a.row))
            .then(b.col.cmp(&a.col))
            .then(b.keypoint_type.cmp(&a.keypoint_type))
    }
}

/// Groups seeds into instances by walking the kinematic tree breadth-first
/// along the (refined) mid-range offsets.
///
/// Every instance gets all `K` keypoints. Keypoint scores are left at zero
/// for the scoring stage.
pub fn greedy_decode(
    seeds: &[SeedCandidate],
    hough: &HoughMaps,
    mid_offsets: &FieldGrid,
    short_offsets: &FieldGrid,
    graph: &KinematicGraph,
    config: &DecodeConfig,
) -> Result<Vec<PoseInstance>> {
    let k = graph.num_keypoints();
    if !(config.nms_radius > 0.0) {
        return Err(Error::usage("nms radius must be positive"));
    }
    if mid_offsets.channels() != 2 * graph.edges().len() {
        return Err(Error::mismatch(
            "mid_offsets channels",
            2 * graph.edges().len(),
            mid_offsets.channels(),
        ));
    }
    if short_offsets.channels() != 2 * k || hough.channels() != k {
        return Err(Error::mismatch(
            "keypoint channels",
            k,
            hough.channels(),
        ));
    }

    // BFS traversal per seed type, computed once
    let traversals: Vec<Vec<(usize, usize, usize)>> = (0..k).map(|r| graph.bfs_from(r)).collect();
    let r2 = config.nms_radius * config.nms_radius;

    let mut queue: BinaryHeap<Queued> = seeds.iter().copied().map(Queued).collect();
    let mut instances: Vec<PoseInstance> = Vec::new();
    // claimed positions per keypoint type, for the rejection test
    let mut claimed: Vec<Vec<Point2D>> = vec![Vec::new(); k];

    while let Some(Queued(seed)) = queue.pop() {
        let kind = seed.keypoint_type;
        let start = if config.refine_seeds {
            seed.position + short_offsets.sample_vector(kind, seed.position)
        } else {
            seed.position
        };
        if claimed[kind].iter().any(|p| p.distance_sq(start) <= r2) {
            continue;
        }
        let mut keypoints = vec![Point2D::default(); k];
        keypoints[kind] = start;
        for &(edge, from, to) in &traversals[kind] {
            let mut next = keypoints[from] + mid_offsets.sample_vector(edge, keypoints[from]);
            if config.snap_radius > 0.0 {
                if let Some(p) = snap(hough, short_offsets, to, next, config) {
                    next = p;
                }
            }
            keypoints[to] = next;
        }
        for (t, p) in keypoints.iter().enumerate() {
            claimed[t].push(*p);
        }
        instances.push(PoseInstance {
            keypoints,
            keypoint_scores: vec![0.0; k],
            instance_score: 0.0,
            seed_type: kind,
            seed_score: seed.score,
            decode_order: instances.len(),
            keypoint_present: vec![true; k],
        });
    }
    Ok(instances)
}

fn snap(
    hough: &HoughMaps,
    short: &FieldGrid,
    kind: usize,
    p: Point2D,
    config: &DecodeConfig,
) -> Option<Point2D> {
    let s = hough.stride() as f64;
    let reach = (config.snap_radius / s).ceil() as isize + 1;
    let (cu, cv) = ((p.x / s - 0.5).round() as isize, (p.y / s - 0.5).round() as isize);
    let mut best: Option<(f64, usize, usize)> = None;
    for row in (cv - reach).max(0)..=(cv + reach).min(hough.height() as isize - 1) {
        for col in (cu - reach).max(0)..=(cu + reach).min(hough.width() as isize - 1) {
            let (row, col) = (row as usize, col as usize);
            if hough.cell_center(row, col).distance(p) > config.snap_radius {
                continue;
            }
            let v = hough.get(row, col, kind);
            if v > config.snap_min_score && best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, row, col));
            }
        }
    }
    best.map(|(_, row, col)| {
        let c = hough.cell_center(row, col);
        if config.refine_seeds {
            c + short.vector_at(row, col, kind)
        } else {
            c
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::default_coco_graph;

    fn empty_fields(h: usize, w: usize) -> (HoughMaps, FieldGrid, FieldGrid) {
        let hough = HoughMaps::from_data(h, w, 17, 8, 32.0, vec![0.0; h * w * 17]).unwrap();
        (hough, FieldGrid::zeros(h, w, 64, 8), FieldGrid::zeros(h, w, 34, 8))
    }

    fn seed(x: f64, y: f64, k: usize, score: f64) -> SeedCandidate {
        SeedCandidate {
            position: Point2D::new(x, y),
            row: (y / 8.0) as usize,
            col: (x / 8.0) as usize,
            keypoint_type: k,
            score,
        }
    }

    #[test]
    fn no_seeds_no_instances() {
        let (hough, mid, short) = empty_fields(4, 4);
        let out = greedy_decode(&[], &hough, &mid, &short, &default_coco_graph(), &DecodeConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn close_same_type_seeds_merge_and_best_wins() {
        let (hough, mid, short) = empty_fields(10, 10);
        let seeds = [seed(20.0, 20.0, 3, 0.2), seed(25.0, 20.0, 3, 0.9)];
        let cfg = DecodeConfig { refine_seeds: false, ..DecodeConfig::default() };
        let out = greedy_decode(&seeds, &hough, &mid, &short, &default_coco_graph(), &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].keypoints[3], Point2D::new(25.0, 20.0));
        assert_eq!(out[0].seed_score, 0.9);
        assert!(out[0].keypoint_present.iter().all(|&p| p));
    }

    #[test]
    fn distant_seeds_start_separate_instances() {
        let (hough, mid, short) = empty_fields(10, 10);
        let seeds = [seed(20.0, 20.0, 0, 0.5), seed(60.0, 60.0, 0, 0.4)];
        let out = greedy_decode(&seeds, &hough, &mid, &short, &default_coco_graph(), &DecodeConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].decode_order, 1);
    }

    #[test]
    fn follows_mid_offsets_along_tree() {
        let g = default_coco_graph();
        let (hough, mut mid, short) = empty_fields(10, 10);
        // uniform offsets: every directed edge moves by (+3, -2)
        for v in mid.data_mut().chunks_mut(2) {
            v[0] = 3.0;
            v[1] = -2.0;
        }
        let seeds = [seed(36.0, 36.0, 0, 0.5)];
        let out = greedy_decode(&seeds, &hough, &mid, &short, &g, &DecodeConfig::default()).unwrap();
        let kp = &out[0].keypoints;
        // wrist is 3 hops from the nose: nose -> shoulder -> elbow -> wrist
        assert_eq!(kp[9], Point2D::new(45.0, 30.0));
        // ankle is 4 hops: nose -> shoulder -> hip -> knee -> ankle
        assert_eq!(kp[15], Point2D::new(48.0, 28.0));
    }

    #[test]
    fn snap_moves_to_nearby_peak_only_when_enabled() {
        let g = default_coco_graph();
        let (h, w) = (10, 10);
        let mut data = vec![0.0; h * w * 17];
        // strong left_eye peak at cell (4, 5)
        data[(4 * w + 5) * 17 + 1] = 0.5;
        let hough = HoughMaps::from_data(h, w, 17, 8, 32.0, data).unwrap();
        let mut mid = FieldGrid::zeros(h, w, 64, 8);
        // nose -> left_eye (edge 0) lands 6px off the peak center (44, 36)
        for r in 0..h {
            for c in 0..w {
                mid.set(r, c, 0, 2.0);
                mid.set(r, c, 1, 0.0);
            }
        }
        let short = FieldGrid::zeros(h, w, 34, 8);
        let seeds = [seed(36.0, 36.0, 0, 0.5)];
        let plain = greedy_decode(&seeds, &hough, &mid, &short, &g, &DecodeConfig::default()).unwrap();
        assert_eq!(plain[0].keypoints[1], Point2D::new(38.0, 36.0));
        let cfg = DecodeConfig { snap_radius: 8.0, ..DecodeConfig::default() };
        let snapped = greedy_decode(&seeds, &hough, &mid, &short, &g, &cfg).unwrap();
        assert_eq!(snapped[0].keypoints[1], Point2D::new(44.0, 36.0));
    }
}
