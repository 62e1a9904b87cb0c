//! Synthetic ground-truth scenes and their ideal network outputs.
//!
//! [`render_outputs`] writes the training targets a perfect network would
//! predict for a scene: disk heatmaps, short/mid offsets toward the closest
//! instance's keypoints, long offsets over single-person mask cells, and a
//! binary person map. Optional Gaussian noise is added last from a seeded
//! generator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{grid_size, FieldGrid, ModelOutputs, Point2D};
use crate::graph::KinematicGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonSpec {
    /// `[x, y, visible]` per keypoint type; `visible > 0` marks presence.
    pub keypoints: Vec<[f64; 3]>,
    /// Body outline, `[x, y]` vertices of a simple polygon.
    pub mask_polygon: Vec<[f64; 2]>,
}

impl PersonSpec {
    pub fn keypoint(&self, k: usize) -> Option<Point2D> {
        let [x, y, v] = self.keypoints[k];
        (v > 0.0).then_some(Point2D::new(x, y))
    }

    pub fn polygon(&self) -> Vec<Point2D> {
        self.mask_polygon
            .iter()
            .map(|&[x, y]| Point2D::new(x, y))
            .collect()
    }

    /// Even-odd point-in-polygon test against the body outline.
    pub fn contains(&self, p: Point2D) -> bool {
        point_in_polygon(&self.mask_polygon, p)
    }
}

/// Per-field standard deviation of additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSigma {
    pub heatmaps: f64,
    pub short_offsets: f64,
    pub mid_offsets: f64,
    pub long_offsets: f64,
    pub seg_prob: f64,
}

impl NoiseSigma {
    pub fn is_zero(&self) -> bool {
        *self == NoiseSigma::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub persons: Vec<PersonSpec>,
    #[serde(default, skip_serializing_if = "NoiseSigma::is_zero")]
    pub noise_sigma: NoiseSigma,
    #[serde(default)]
    pub noise_seed: u64,
}

impl SceneSpec {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            persons: Vec::new(),
            noise_sigma: NoiseSigma::default(),
            noise_seed: 0,
        }
    }

    /// Checks keypoint counts, that visible keypoints lie in the image, and
    /// that every outline is a simple polygon.
    pub fn validate(&self, num_keypoints: usize) -> Result<()> {
        for (j, person) in self.persons.iter().enumerate() {
            let at = |what: &str| format!("persons[{j}].{what}");
            if person.keypoints.len() != num_keypoints {
                return Err(Error::parse(
                    at("keypoints"),
                    format!("expected {num_keypoints} keypoints, found {}", person.keypoints.len()),
                ));
            }
            for (k, kp) in person.keypoints.iter().enumerate() {
                if !kp.iter().all(|v| v.is_finite()) {
                    return Err(Error::parse(at(&format!("keypoints[{k}]")), "non-finite value"));
                }
                if let Some(p) = person.keypoint(k) {
                    if p.x < 0.0 || p.y < 0.0 || p.x > self.width as f64 || p.y > self.height as f64 {
                        return Err(Error::parse(
                            at(&format!("keypoints[{k}]")),
                            "visible keypoint outside the image",
                        ));
                    }
                }
            }
            if person.mask_polygon.len() < 3 {
                return Err(Error::parse(at("mask_polygon"), "needs at least 3 vertices"));
            }
            if !person.mask_polygon.iter().flatten().all(|v| v.is_finite()) {
                return Err(Error::parse(at("mask_polygon"), "non-finite vertex"));
            }
            if !is_simple_polygon(&person.mask_polygon) {
                return Err(Error::parse(at("mask_polygon"), "polygon self-intersects"));
            }
        }
        for (name, sigma) in [
            ("heatmaps", self.noise_sigma.heatmaps),
            ("short_offsets", self.noise_sigma.short_offsets),
            ("mid_offsets", self.noise_sigma.mid_offsets),
            ("long_offsets", self.noise_sigma.long_offsets),
            ("seg_prob", self.noise_sigma.seg_prob),
        ] {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::parse(format!("noise_sigma.{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(Error::from_json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneSpec> {
    SceneSpec::from_json(&fs::read_to_string(path)?)
}

pub fn save_scene(scene: &SceneSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scene.to_json() + "\n")?;
    Ok(())
}

/// Renders the ideal outputs for `scene` at `stride` with disk radius `R`.
pub fn render_outputs(
    scene: &SceneSpec,
    graph: &KinematicGraph,
    stride: u32,
    disk_radius: f64,
) -> Result<ModelOutputs> {
    let k = graph.num_keypoints();
    scene.validate(k)?;
    if stride == 0 {
        return Err(Error::usage("stride must be positive"));
    }
    if !(disk_radius > 0.0) {
        return Err(Error::usage("disk radius must be positive"));
    }
    let mut out = ModelOutputs::zeros(k, scene.height, scene.width, stride);
    let (gh, gw) = grid_size(scene.height, scene.width, stride);
    let probe = FieldGrid::zeros(gh, gw, 1, stride);
    let s = stride as f64;

    // closest visible instance per (type, cell) within the disk
    let mut owner: Vec<Vec<Option<(f64, usize)>>> = vec![vec![None; gh * gw]; k];
    for (j, person) in scene.persons.iter().enumerate() {
        for (kind, owners) in owner.iter_mut().enumerate() {
            let Some(y) = person.keypoint(kind) else { continue };
            for (row, col) in cells_near(y, disk_radius, s, gh, gw) {
                let d2 = probe.cell_center(row, col).distance_sq(y);
                if d2 > disk_radius * disk_radius {
                    continue;
                }
                let slot = &mut owners[row * gw + col];
                // strict < keeps the lower person index on ties
                if slot.is_none_or(|(best, _)| d2 < best) {
                    *slot = Some((d2, j));
                }
            }
        }
    }

    for row in 0..gh {
        for col in 0..gw {
            let x = probe.cell_center(row, col);
            let cell = row * gw + col;
            for kind in 0..k {
                let Some((_, j)) = owner[kind][cell] else { continue };
                let y = scene.persons[j].keypoint(kind).expect("owner is visible");
                out.heatmaps.set(row, col, kind, 1.0);
                set_vec(&mut out.short_offsets, row, col, kind, y - x);
            }
            for (edge, &(from, to)) in graph.edges().iter().enumerate() {
                let Some((_, j)) = owner[from][cell] else { continue };
                if let Some(target) = scene.persons[j].keypoint(to) {
                    set_vec(&mut out.mid_offsets, row, col, edge, target - x);
                }
            }
        }
    }

    // long offsets and segmentation from the outlines
    let mut coverage = vec![0u32; gh * gw];
    let mut body_owner = vec![usize::MAX; gh * gw];
    for (j, person) in scene.persons.iter().enumerate() {
        let poly = &person.mask_polygon;
        let (lo, hi) = poly.iter().fold(
            (Point2D::new(f64::MAX, f64::MAX), Point2D::new(f64::MIN, f64::MIN)),
            |(lo, hi), &[px, py]| {
                (
                    Point2D::new(lo.x.min(px), lo.y.min(py)),
                    Point2D::new(hi.x.max(px), hi.y.max(py)),
                )
            },
        );
        let center = (lo + hi) * 0.5;
        let reach = (hi.x - lo.x).max(hi.y - lo.y) * 0.5 * std::f64::consts::SQRT_2;
        for (row, col) in cells_near(center, reach, s, gh, gw) {
            if point_in_polygon(poly, probe.cell_center(row, col)) {
                coverage[row * gw + col] += 1;
                body_owner[row * gw + col] = j;
            }
        }
    }
    for row in 0..gh {
        for col in 0..gw {
            let cell = row * gw + col;
            if coverage[cell] == 0 {
                continue;
            }
            out.seg_prob.set(row, col, 0, 1.0);
            if coverage[cell] > 1 {
                continue;
            }
            let person = &scene.persons[body_owner[cell]];
            let x = probe.cell_center(row, col);
            for kind in 0..k {
                if let Some(y) = person.keypoint(kind) {
                    set_vec(&mut out.long_offsets, row, col, kind, y - x);
                }
            }
        }
    }

    add_noise(&mut out, &scene.noise_sigma, scene.noise_seed)?;
    Ok(out)
}

fn set_vec(grid: &mut FieldGrid, row: usize, col: usize, pair: usize, v: Point2D) {
    grid.set(row, col, 2 * pair, v.x as f32);
    grid.set(row, col, 2 * pair + 1, v.y as f32);
}

fn cells_near(
    center: Point2D,
    radius: f64,
    stride: f64,
    gh: usize,
    gw: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let span = |c: f64, n: usize| {
        let lo = ((c - radius) / stride - 0.5).floor().max(0.0) as usize;
        let hi = ((c + radius) / stride - 0.5).ceil().min(n as f64 - 1.0);
        (lo, hi)
    };
    let (c0, c1) = span(center.x, gw);
    let (r0, r1) = span(center.y, gh);
    let (c1, r1) = (c1 as isize, r1 as isize);
    (r0 as isize..=r1).flat_map(move |r| (c0 as isize..=c1).map(move |c| (r as usize, c as usize)))
}

fn add_noise(out: &mut ModelOutputs, sigma: &NoiseSigma, seed: u64) -> Result<()> {
    if sigma.is_zero() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields = [
        (&mut out.heatmaps, sigma.heatmaps, true),
        (&mut out.short_offsets, sigma.short_offsets, false),
        (&mut out.mid_offsets, sigma.mid_offsets, false),
        (&mut out.long_offsets, sigma.long_offsets, false),
        (&mut out.seg_prob, sigma.seg_prob, true),
    ];
    for (grid, s, probability) in fields {
        if s == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, s).map_err(|e| Error::usage(e.to_string()))?;
        for v in grid.data_mut() {
            let noisy = *v as f64 + normal.sample(&mut rng);
            *v = if probability {
                noisy.clamp(0.0, 1.0) as f32
            } else {
                noisy as f32
            };
        }
    }
    Ok(())
}

/// Even-odd rule; points exactly on an edge may fall either way.
pub fn point_in_polygon(poly: &[[f64; 2]], p: Point2D) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let ([xi, yi], [xj, yj]) = (poly[i], poly[j]);
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True when no two non-adjacent edges intersect.
pub fn is_simple_polygon(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let seg = |i: usize| (poly[i], poly[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let on_segment = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| {
        q[0] >= o[0].min(p[0]) && q[0] <= o[0].max(p[0]) && q[1] >= o[1].min(p[1]) && q[1] <= o[1].max(p[1])
    };
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Standing frontal pose in units of body height, centered at the origin,
/// COCO keypoint order.
const STANDING_POSE: [(f64, f64); 17] = [
    (0.0, -0.40),
    (0.04, -0.43),
    (-0.04, -0.43),
    (0.08, -0.41),
    (-0.08, -0.41),
    (0.16, -0.28),
    (-0.16, -0.28),
    (0.22, -0.10),
    (-0.22, -0.10),
    (0.25, 0.05),
    (-0.25, 0.05),
    (0.10, 0.05),
    (-0.10, 0.05),
    (0.11, 0.27),
    (-0.11, 0.27),
    (0.12, 0.48),
    (-0.12, 0.48),
];

/// A 17-keypoint person of the given pixel height, all keypoints visible,
/// with its outline taken as the keypoints' convex hull pushed outwards by
/// `margin` pixels.
pub fn standing_person(center: Point2D, height: f64, margin: f64) -> PersonSpec {
    let keypoints: Vec<Point2D> = STANDING_POSE
        .iter()
        .map(|&(x, y)| center + Point2D::new(x, y) * height)
        .collect();
    person_from_keypoints(&keypoints, margin)
}

/// Wraps keypoints (all visible) with a hull outline grown by `margin`.
pub fn person_from_keypoints(keypoints: &[Point2D], margin: f64) -> PersonSpec {
    let hull = convex_hull(keypoints);
    let centroid = hull.iter().fold(Point2D::default(), |a, p| a + *p) * (1.0 / hull.len() as f64);
    let mask_polygon = hull
        .iter()
        .map(|&p| {
            let dir = p - centroid;
            let len = dir.norm().max(1e-9);
            let q = p + dir * (margin / len);
            [q.x, q.y]
        })
        .collect();
    PersonSpec {
        keypoints: keypoints.iter().map(|p| [p.x, p.y, 2.0]).collect(),
        mask_polygon,
    }
}

/// Andrew's monotone chain, counter-clockwise, no collinear points.
fn convex_hull(points: &[Point2D]) -> Vec<Point2D> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2D, a: Point2D, b: Point2D| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2D> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2D>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Random scene of `num_persons` jittered standing people, one per slot of
/// a regular layout so that bodies never overlap and same-type keypoints of
/// different people stay more than `min_separation` pixels apart.
pub fn random_scene(
    seed: u64,
    num_persons: usize,
    width: u32,
    height: u32,
    min_separation: f64,
) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SceneSpec::empty(width, height);
    if num_persons == 0 {
        return scene;
    }
    let (w, h) = (width as f64, height as f64);
    let cols = ((num_persons as f64 * w / h).sqrt().ceil() as usize).max(1);
    let rows = num_persons.div_ceil(cols);
    let (slot_w, slot_h) = (w / cols as f64, h / rows as f64);
    let max_height = (0.8 * slot_h).min(1.4 * slot_w);

    let mut slots: Vec<usize> = (0..rows * cols).collect();
    // partial Fisher-Yates for a random subset of slots
    for i in 0..num_persons {
        let j = rng.random_range(i..slots.len());
        slots.swap(i, j);
    }
    let mut placed: Vec<Vec<Point2D>> = Vec::new();
    for &slot in &slots[..num_persons] {
        let (sr, sc) = (slot / cols, slot % cols);
        loop {
            let person_h = rng.random_range(0.7 * max_height..=max_height);
            let slack_x = (slot_w - 0.6 * person_h).max(0.0) * 0.4;
            let slack_y = (slot_h - 1.0 * person_h).max(0.0) * 0.4;
            let center = Point2D::new(
                (sc as f64 + 0.5) * slot_w + rng.random_range(-slack_x..=slack_x),
                (sr as f64 + 0.5) * slot_h + rng.random_range(-slack_y..=slack_y),
            );
            let jitter = 0.015 * person_h;
            let kps: Vec<Point2D> = STANDING_POSE
                .iter()
                .map(|&(x, y)| {
                    center
                        + Point2D::new(x, y) * person_h
                        + Point2D::new(
                            rng.random_range(-jitter..=jitter),
                            rng.random_range(-jitter..=jitter),
                        )
                })
                .collect();
            let separated = placed.iter().all(|other| {
                other
                    .iter()
                    .zip(&kps)
                    .all(|(a, b)| a.distance(*b) > min_separation)
            });
            if separated {
                scene
                    .persons
                    .push(person_from_keypoints(&kps, 0.06 * person_h));
                placed.push(kps);
                break;
            }
        }
    }
    scene
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{default_coco_graph, COCO_KEYPOINTS};
    use std::f64::consts::PI;

    fn one_point_graph() -> KinematicGraph {
        KinematicGraph::from_tree(vec!["p".into()], &[]).unwrap()
    }

    fn square(cx: f64, cy: f64, half: f64) -> Vec<[f64; 2]> {
        vec![
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ]
    }

    #[test]
    fn single_keypoint_disk_area() {
        let scene = SceneSpec {
            persons: vec![PersonSpec {
                keypoints: vec![[100.0, 100.0, 1.0]],
                mask_polygon: square(100.0, 100.0, 20.0),
            }],
            ..SceneSpec::empty(200, 200)
        };
        let out = render_outputs(&scene, &one_point_graph(), 1, 32.0).unwrap();
        let count = out.heatmaps.data().iter().filter(|&&v| v == 1.0).count() as f64;
        let area = PI * 32.0 * 32.0;
        assert!((count - area).abs() / area < 0.01, "count {count}");
        // heatmap disk centered at the keypoint
        assert_eq!(out.heatmaps.get(99, 99, 0), 1.0);
        assert_eq!(out.heatmaps.get(99, 132, 0), 0.0);
    }

    #[test]
    fn short_offsets_point_to_closest_instance() {
        let scene = SceneSpec {
            persons: vec![
                PersonSpec { keypoints: vec![[80.0, 100.0, 1.0]], mask_polygon: square(80.0, 100.0, 5.0) },
                PersonSpec { keypoints: vec![[120.0, 100.0, 1.0]], mask_polygon: square(120.0, 100.0, 5.0) },
            ],
            ..SceneSpec::empty(200, 200)
        };
        let out = render_outputs(&scene, &one_point_graph(), 1, 32.0).unwrap();
        for (row, col) in [(99usize, 90usize), (99, 98), (99, 101), (110, 110), (95, 60)] {
            let x = out.short_offsets.cell_center(row, col);
            let target = x + out.short_offsets.vector_at(row, col, 0);
            let (a, b) = (Point2D::new(80.0, 100.0), Point2D::new(120.0, 100.0));
            let want = if x.distance(a) <= x.distance(b) { a } else { b };
            assert!(target.distance(want) < 1e-4, "cell ({row},{col})");
        }
    }

    #[test]
    fn fields_satisfy_target_equations() {
        let graph = default_coco_graph();
        let scene = random_scene(3, 3, 480, 320, 20.0);
        let stride = 8;
        let out = render_outputs(&scene, &graph, stride, 32.0).unwrap();
        let probe = &out.heatmaps;
        for row in 0..probe.height() {
            for col in 0..probe.width() {
                let x = probe.cell_center(row, col);
                for k in 0..17 {
                    // independent re-evaluation: nearest keypoint of type k
                    let nearest = scene
                        .persons
                        .iter()
                        .enumerate()
                        .map(|(j, p)| (p.keypoint(k).unwrap().distance(x), j))
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .unwrap();
                    let inside = nearest.0 <= 32.0;
                    assert_eq!(probe.get(row, col, k), if inside { 1.0 } else { 0.0 });
                    if inside {
                        let y = scene.persons[nearest.1].keypoint(k).unwrap();
                        let s = out.short_offsets.vector_at(row, col, k);
                        assert!((x + s).distance(y) < 1e-3);
                    }
                }
                let owners: Vec<usize> = (0..scene.persons.len()).filter(|&j| scene.persons[j].contains(x)).collect();
                assert_eq!(out.seg_prob.get(row, col, 0), if owners.is_empty() { 0.0 } else { 1.0 });
                if owners.len() == 1 {
                    let y = scene.persons[owners[0]].keypoint(9).unwrap();
                    assert!((x + out.long_offsets.vector_at(row, col, 9)).distance(y) < 1e-3);
                } else {
                    assert_eq!(out.long_offsets.vector_at(row, col, 9), Point2D::default());
                }
            }
        }
    }

    #[test]
    fn overlap_cells_have_zero_long_offsets() {
        let scene = SceneSpec {
            persons: vec![
                PersonSpec { keypoints: vec![[90.0, 100.0, 1.0]], mask_polygon: square(90.0, 100.0, 20.0) },
                PersonSpec { keypoints: vec![[110.0, 100.0, 1.0]], mask_polygon: square(110.0, 100.0, 20.0) },
            ],
            ..SceneSpec::empty(200, 200)
        };
        let out = render_outputs(&scene, &one_point_graph(), 4, 32.0).unwrap();
        // cell centered at (98, 98) lies in both squares
        assert_eq!(out.seg_prob.get(24, 24, 0), 1.0);
        assert_eq!(out.long_offsets.vector_at(24, 24, 0), Point2D::default());
        // (78, 98) only in the first
        let x = out.long_offsets.cell_center(24, 19);
        assert_eq!(x + out.long_offsets.vector_at(24, 19, 0), Point2D::new(90.0, 100.0));
    }

    #[test]
    fn empty_scene_renders_zeros() {
        let out = render_outputs(&SceneSpec::empty(64, 48), &default_coco_graph(), 8, 32.0).unwrap();
        assert_eq!(out, ModelOutputs::zeros(17, 48, 64, 8));
    }

    #[test]
    fn noise_is_seeded() {
        let mut scene = random_scene(1, 2, 320, 240, 20.0);
        scene.noise_sigma.mid_offsets = 8.0;
        scene.noise_sigma.heatmaps = 0.1;
        scene.noise_seed = 42;
        let g = default_coco_graph();
        let a = render_outputs(&scene, &g, 8, 32.0).unwrap();
        let b = render_outputs(&scene, &g, 8, 32.0).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = a.heatmaps.value_range().unwrap();
        assert!(lo >= 0.0 && hi <= 1.0);
        scene.noise_seed = 43;
        assert_ne!(render_outputs(&scene, &g, 8, 32.0).unwrap(), a);
    }

    #[test]
    fn scene_json_round_trip_and_errors() {
        let scene = random_scene(9, 2, 320, 240, 20.0);
        assert_eq!(SceneSpec::from_json(&scene.to_json()).unwrap(), scene);
        assert_eq!(scene.to_json(), SceneSpec::from_json(&scene.to_json()).unwrap().to_json());

        let err = SceneSpec::from_json(r#"{"width": 10, "height": 10}"#).unwrap_err();
        assert!(err.to_string().contains("persons"), "{err}");

        let err = SceneSpec::from_json(
            r#"{"width": 10, "height": 10, "persons": [{"keypoints": [[1, 2]], "mask_polygon": []}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("persons[0].keypoints[0]"), "{err}");
    }

    #[test]
    fn validation_rejects_bad_scenes() {
        let mut scene = random_scene(2, 1, 320, 240, 20.0);
        assert!(scene.validate(17).is_ok());
        assert!(scene.validate(5).is_err());
        scene.persons[0].mask_polygon = vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]];
        assert!(scene.validate(17).is_err());
        let mut scene = random_scene(2, 1, 320, 240, 20.0);
        scene.persons[0].keypoints[3] = [400.0, 10.0, 2.0];
        assert!(scene.validate(17).is_err());
        scene.persons[0].keypoints[3] = [400.0, 10.0, 0.0];
        assert!(scene.validate(17).is_ok());
    }

    #[test]
    fn random_scene_properties() {
        for seed in 0..20 {
            let n = 1 + (seed as usize % 5);
            let scene = random_scene(seed, n, 640, 480, 20.0);
            assert_eq!(scene.persons.len(), n);
            assert!(scene.validate(COCO_KEYPOINTS.len()).is_ok());
            for p in &scene.persons {
                for k in 0..17 {
                    assert!(p.contains(p.keypoint(k).unwrap()));
                }
            }
        }
    }
}
