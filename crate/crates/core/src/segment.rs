//! Instance segmentation from person probability and long-range offsets.
//!
//! Each person cell carries an embedding `G_k(x) = x + L_k(x)`: its estimate
//! of where every keypoint of its person is. A cell joins every instance
//! whose detected keypoints are close to that estimate, relative to the
//! instance scale.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::decode::PoseInstance;
use crate::error::{Error, Result};
use crate::field::{FieldGrid, Point2D};
use crate::scoring::instance_scale;

/// Boolean cell grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    pub height: usize,
    pub width: usize,
    pub stride: u32,
    pub cells: Vec<bool>,
}

impl CellMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Cells with person probability at or above `threshold`.
pub fn person_mask(seg_prob: &FieldGrid, threshold: f64) -> CellMask {
    CellMask {
        height: seg_prob.height(),
        width: seg_prob.width(),
        stride: seg_prob.stride(),
        cells: seg_prob
            .data()
            .iter()
            .map(|&p| p as f64 >= threshold)
            .collect(),
    }
}

/// Per-cell predicted keypoint positions, `2K` channels of absolute
/// image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    pub grid: FieldGrid,
}

impl EmbeddingField {
    pub fn from_long_offsets(long: &FieldGrid) -> Self {
        let c = long.channels();
        let mut grid = long.clone();
        for row in 0..long.height() {
            for col in 0..long.width() {
                let x = long.cell_center(row, col);
                for pair in 0..c / 2 {
                    let v = x + long.vector_at(row, col, pair);
                    grid.set(row, col, 2 * pair, v.x as f32);
                    grid.set(row, col, 2 * pair + 1, v.y as f32);
                }
            }
        }
        Self { grid }
    }

    pub fn at(&self, row: usize, col: usize) -> Vec<Point2D> {
        (0..self.grid.channels() / 2)
            .map(|k| self.grid.vector_at(row, col, k))
            .collect()
    }
}

/// Keypoint weights and scale of one instance, precomputed for the
/// distance metric.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceShape {
    pub keypoints: Vec<Point2D>,
    pub weights: Vec<f64>,
    pub scale: f64,
}

impl InstanceShape {
    pub fn new(instance: &PoseInstance, heatmaps: &FieldGrid, scale_floor: f64) -> Self {
        let weights = instance
            .keypoints
            .iter()
            .enumerate()
            .map(|(k, &y)| heatmaps.sample(k, y).clamp(0.0, 1.0))
            .collect();
        Self {
            keypoints: instance.keypoints.clone(),
            weights,
            scale: instance_scale(instance, scale_floor),
        }
    }

    /// Presence-weighted mean keypoint distance, divided by the instance
    /// scale. `+∞` when every weight is zero.
    pub fn distance(&self, embedding: impl IntoIterator<Item = Point2D>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((g, y), w) in embedding.into_iter().zip(&self.keypoints).zip(&self.weights) {
            num += w * g.distance(*y);
            den += w;
        }
        if den > 0.0 {
            num / (den * self.scale)
        } else {
            f64::INFINITY
        }
    }
}

/// Embedding distance between a cell's embedding and one instance.
pub fn embedding_distance(
    embedding: &[Point2D],
    instance: &PoseInstance,
    heatmaps: &FieldGrid,
    scale_floor: f64,
) -> f64 {
    InstanceShape::new(instance, heatmaps, scale_floor).distance(embedding.iter().copied())
}

/// Non-exclusive assignment of person cells to instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMasks {
    pub person_mask: CellMask,
    /// For every cell, the instances it joined (empty for background and
    /// orphan cells).
    pub assignments: Vec<Vec<usize>>,
    pub num_instances: usize,
    /// Number of distance evaluations performed.
    pub distance_evaluations: u64,
}

impl InstanceMasks {
    /// Cell mask of instance `j`.
    pub fn instance_mask(&self, j: usize) -> CellMask {
        CellMask {
            height: self.person_mask.height,
            width: self.person_mask.width,
            stride: self.person_mask.stride,
            cells: self.assignments.iter().map(|a| a.contains(&j)).collect(),
        }
    }

    /// Person cells assigned to no instance.
    pub fn orphans(&self) -> usize {
        self.person_mask
            .cells
            .iter()
            .zip(&self.assignments)
            .filter(|(&p, a)| p && a.is_empty())
            .count()
    }
}

/// Assigns every person cell to each instance within `threshold` embedding
/// distance. Exactly `N_S × M` distances are evaluated.
pub fn assign_pixels(
    person: &CellMask,
    embedding: &EmbeddingField,
    instances: &[PoseInstance],
    heatmaps: &FieldGrid,
    threshold: f64,
    scale_floor: f64,
) -> Result<InstanceMasks> {
    let grid = &embedding.grid;
    if grid.height() != person.height || grid.width() != person.width {
        return Err(Error::usage("embedding and person mask shapes differ"));
    }
    let shapes: Vec<InstanceShape> = instances
        .iter()
        .map(|i| InstanceShape::new(i, heatmaps, scale_floor))
        .collect();
    if let Some(s) = shapes.iter().find(|s| 2 * s.keypoints.len() != grid.channels()) {
        return Err(Error::mismatch(
            "embedding channels",
            2 * s.keypoints.len(),
            grid.channels(),
        ));
    }
    let evaluations = AtomicU64::new(0);
    let w = person.width;
    let assignments: Vec<Vec<usize>> = (0..person.height * w)
        .into_par_iter()
        .map(|cell| {
            let (row, col) = (cell / w, cell % w);
            if !person.get(row, col) {
                return Vec::new();
            }
            let g: Vec<Point2D> = (0..grid.channels() / 2)
                .map(|k| grid.vector_at(row, col, k))
                .collect();
            evaluations.fetch_add(shapes.len() as u64, Ordering::Relaxed);
            shapes
                .iter()
                .enumerate()
                .filter(|(_, s)| s.distance(g.iter().copied()) <= threshold)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok(InstanceMasks {
        person_mask: person.clone(),
        assignments,
        num_instances: instances.len(),
        distance_evaluations: evaluations.into_inner(),
    })
}

/// Row-major boolean image mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMask {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<bool>,
}

impl ImageMask {
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn area(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// Nearest-neighbour upsampling of a cell mask to image resolution.
pub fn upsample_mask(mask: &CellMask, image_height: usize, image_width: usize) -> ImageMask {
    let s = mask.stride as usize;
    let mut pixels = Vec::with_capacity(image_height * image_width);
    for y in 0..image_height {
        let row = (y / s).min(mask.height.saturating_sub(1));
        for x in 0..image_width {
            let col = (x / s).min(mask.width.saturating_sub(1));
            pixels.push(mask.height > 0 && mask.width > 0 && mask.get(row, col));
        }
    }
    ImageMask {
        height: image_height,
        width: image_width,
        pixels,
    }
}

/// Full-resolution mask per instance.
pub fn masks_to_image(
    masks: &InstanceMasks,
    image_height: usize,
    image_width: usize,
) -> Vec<ImageMask> {
    (0..masks.num_instances)
        .map(|j| upsample_mask(&masks.instance_mask(j), image_height, image_width))
        .collect()
}

/// Flattened label map for visualization: each assigned cell takes the
/// instance with the smallest distance, ties to the earlier (higher scored)
/// instance. `None` marks background and orphans.
pub fn label_map(
    masks: &InstanceMasks,
    embedding: &EmbeddingField,
    instances: &[PoseInstance],
    heatmaps: &FieldGrid,
    scale_floor: f64,
) -> Vec<Option<usize>> {
    let shapes: Vec<InstanceShape> = instances
        .iter()
        .map(|i| InstanceShape::new(i, heatmaps, scale_floor))
        .collect();
    let w = masks.person_mask.width;
    masks
        .assignments
        .iter()
        .enumerate()
        .map(|(cell, set)| {
            let g = embedding.at(cell / w, cell % w);
            set.iter()
                .map(|&j| (j, shapes[j].distance(g.iter().copied())))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(j, _)| j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn person_mask_threshold_is_inclusive() {
        let seg = FieldGrid::new(1, 4, 1, 8, vec![0.0, 0.49, 0.5, 0.9]).unwrap();
        assert_eq!(person_mask(&seg, 0.5).cells, vec![false, false, true, true]);
        let zero = FieldGrid::zeros(3, 3, 1, 8);
        assert_eq!(person_mask(&zero, 0.5).count(), 0);
    }

    #[test]
    fn person_mask_matches_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seg = FieldGrid::from_fn(9, 11, 1, 8, |_, _, _| rng.random_range(0.0f32..1.0));
        let m = person_mask(&seg, 0.5);
        for r in 0..9 {
            for c in 0..11 {
                assert_eq!(m.get(r, c), seg.get(r, c, 0) >= 0.5);
            }
        }
    }

    fn square_instance(offset: Point2D, size: f64) -> PoseInstance {
        PoseInstance::from_keypoints(vec![
            offset,
            offset + Point2D::new(size, 0.0),
            offset + Point2D::new(0.0, size),
            offset + Point2D::new(size, size),
        ])
    }

    fn ones(k: usize) -> FieldGrid {
        FieldGrid::from_fn(40, 40, k, 8, |_, _, _| 1.0)
    }

    #[test]
    fn distance_zero_and_unit() {
        let inst = square_instance(Point2D::new(50.0, 60.0), 40.0);
        let heat = ones(4);
        assert_eq!(embedding_distance(&inst.keypoints, &inst, &heat, 1.0), 0.0);
        // λ = 40: every embedding point off by exactly 40px
        let off: Vec<Point2D> = inst.keypoints.iter().map(|p| *p + Point2D::new(24.0, 32.0)).collect();
        assert!((embedding_distance(&off, &inst, &heat, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_formula_with_mixed_weights() {
        let inst = square_instance(Point2D::new(100.0, 100.0), 64.0);
        // keypoint-specific weights: channel k holds (k+1)/5
        let heat = FieldGrid::from_fn(40, 40, 4, 8, |_, _, k| (k + 1) as f32 / 5.0);
        let g = vec![
            Point2D::new(103.0, 104.0),
            Point2D::new(164.0, 110.0),
            Point2D::new(90.0, 164.0),
            Point2D::new(170.0, 170.0),
        ];
        let w = [0.2, 0.4, 0.6, 0.8];
        let d = [5.0, 10.0, 10.0, (6.0f64 * 6.0 + 6.0 * 6.0).sqrt()];
        let want = (0..4).map(|k| w[k] * d[k]).sum::<f64>() / (w.iter().sum::<f64>() * 64.0);
        let got = embedding_distance(&g, &inst, &heat, 1.0);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn zero_weights_give_infinity() {
        let inst = square_instance(Point2D::new(50.0, 60.0), 40.0);
        let heat = FieldGrid::zeros(40, 40, 4, 8);
        assert_eq!(embedding_distance(&inst.keypoints, &inst, &heat, 1.0), f64::INFINITY);
    }

    #[test]
    fn missing_keypoint_is_discounted() {
        let inst = square_instance(Point2D::new(100.0, 100.0), 64.0);
        let mut heat = ones(4);
        for r in 0..40 {
            for c in 0..40 {
                heat.set(r, c, 2, 0.0);
            }
        }
        let mut g = inst.keypoints.clone();
        let base = embedding_distance(&g, &inst, &heat, 1.0);
        g[2] = Point2D::new(900.0, -400.0);
        assert_eq!(embedding_distance(&g, &inst, &heat, 1.0), base);
    }

    fn embedding_pointing_at(h: usize, w: usize, targets: &[Point2D]) -> EmbeddingField {
        let grid = FieldGrid::from_fn(h, w, 2 * targets.len(), 8, |_, _, ch| {
            let t = targets[ch / 2];
            if ch % 2 == 0 { t.x as f32 } else { t.y as f32 }
        });
        EmbeddingField { grid }
    }

    #[test]
    fn no_instances_leaves_orphans() {
        let person = person_mask(&FieldGrid::from_fn(5, 5, 1, 8, |_, _, _| 1.0), 0.5);
        let emb = embedding_pointing_at(5, 5, &[Point2D::new(1.0, 1.0); 4]);
        let out = assign_pixels(&person, &emb, &[], &ones(4), 0.25, 1.0).unwrap();
        assert_eq!(out.orphans(), 25);
        assert_eq!(out.distance_evaluations, 0);
    }

    #[test]
    fn overlapping_instances_share_a_pixel() {
        let a = square_instance(Point2D::new(100.0, 100.0), 80.0);
        let b = square_instance(Point2D::new(110.0, 100.0), 80.0);
        // halfway between: each instance is 5px away, D = 5/80
        let emb = embedding_pointing_at(3, 3, &square_instance(Point2D::new(105.0, 100.0), 80.0).keypoints);
        let person = person_mask(&FieldGrid::from_fn(3, 3, 1, 8, |r, c, _| if (r, c) == (1, 1) { 1.0 } else { 0.0 }), 0.5);
        let out = assign_pixels(&person, &emb, &[a, b], &ones(4), 0.25, 1.0).unwrap();
        assert_eq!(out.assignments[4], vec![0, 1]);
        assert_eq!(out.distance_evaluations, 2);
    }

    #[test]
    fn embedding_from_long_offsets_is_absolute() {
        let long = FieldGrid::from_fn(2, 2, 2, 8, |_, _, ch| if ch == 0 { 3.0 } else { -1.0 });
        let emb = EmbeddingField::from_long_offsets(&long);
        assert_eq!(emb.at(1, 0), vec![Point2D::new(7.0, 11.0)]);
    }

    #[test]
    fn upsample_cases() {
        let m = CellMask { height: 2, width: 2, stride: 1, cells: vec![true, false, false, true] };
        assert_eq!(upsample_mask(&m, 2, 2).pixels, m.cells);
        let m = CellMask { height: 3, width: 3, stride: 8, cells: (0..9).map(|i| i == 4).collect() };
        let img = upsample_mask(&m, 24, 24);
        assert_eq!(img.area(), 64);
        for y in 0..24 {
            for x in 0..24 {
                assert_eq!(img.get(y, x), (8..16).contains(&y) && (8..16).contains(&x));
            }
        }
    }

    #[test]
    fn upsample_matches_block_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = CellMask { height: 5, width: 7, stride: 8, cells: (0..35).map(|_| rng.random_bool(0.4)).collect() };
        let img = upsample_mask(&m, 40, 56);
        for r in 0..5 {
            for c in 0..7 {
                for dy in 0..8 {
                    for dx in 0..8 {
                        assert_eq!(img.get(r * 8 + dy, c * 8 + dx), m.get(r, c));
                    }
                }
            }
        }
    }
}
