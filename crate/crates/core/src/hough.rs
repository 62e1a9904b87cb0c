//! Hough voting of heatmaps and short-range offsets, and seed extraction.
//!
//! Every cell `x_i` casts, for each keypoint type `k`, a vote of weight
//! `p_k(x_i) · s² / (π R²)` at `x_i + S_k(x_i)`. The vote is splatted onto
//! the four surrounding cells with bilinear weights, which is the adjoint of
//! [`FieldGrid::bilinear_sample`]. The `s²` cell-area factor makes the sum
//! over cells approximate the per-pixel sum, so peak heights do not depend on
//! the output stride. At stride 1 it is exactly `1 / (π R²)` per vote.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{bilinear_taps, FieldGrid, Point2D};

/// Per-keypoint Hough score maps `h_k(x)`, accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughMaps {
    height: usize,
    width: usize,
    channels: usize,
    stride: u32,
    disk_radius: f64,
    data: Vec<f64>,
}

impl HoughMaps {
    /// Wraps precomputed scores laid out like a [`FieldGrid`].
    pub fn from_data(
        height: usize,
        width: usize,
        channels: usize,
        stride: u32,
        disk_radius: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::mismatch(
                "hough data length",
                height * width * channels,
                data.len(),
            ));
        }
        if stride == 0 {
            return Err(Error::usage("stride must be positive"));
        }
        Ok(Self {
            height,
            width,
            channels,
            stride,
            disk_radius,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn disk_radius(&self) -> f64 {
        self.disk_radius
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2D {
        let s = self.stride as f64;
        Point2D::new((col as f64 + 0.5) * s, (row as f64 + 0.5) * s)
    }

    /// Bilinear read of `h_k` at an image point (clamped at the border).
    pub fn sample(&self, channel: usize, p: Point2D) -> f64 {
        bilinear_taps(self.height, self.width, self.stride, p)
            .iter()
            .map(|t| t.weight * self.get(t.row, t.col, channel))
            .sum()
    }

    /// Sum of one channel over all cells.
    pub fn channel_mass(&self, channel: usize) -> f64 {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels.max(1))
            .sum()
    }
}

/// Accumulates Hough score maps from heatmaps and short-range offsets.
pub fn accumulate_hough(
    heatmaps: &FieldGrid,
    short_offsets: &FieldGrid,
    disk_radius: f64,
) -> Result<HoughMaps> {
    if !heatmaps.same_shape(short_offsets) {
        return Err(Error::usage(
            "heatmaps and short offsets must share height, width and stride",
        ));
    }
    let k = heatmaps.channels();
    if short_offsets.channels() != 2 * k {
        return Err(Error::mismatch(
            "short_offsets channels",
            2 * k,
            short_offsets.channels(),
        ));
    }
    if !(disk_radius > 0.0 && disk_radius.is_finite()) {
        return Err(Error::usage("disk radius must be positive"));
    }
    let (h, w) = (heatmaps.height(), heatmaps.width());
    let s = heatmaps.stride() as f64;
    let norm = s * s / (PI * disk_radius * disk_radius);

    let planes: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|ch| {
            let mut acc = vec![0.0f64; h * w];
            for row in 0..h {
                for col in 0..w {
                    let p = heatmaps.get(row, col, ch) as f64;
                    if p == 0.0 {
                        continue;
                    }
                    let target = heatmaps.cell_center(row, col) + short_offsets.vector_at(row, col, ch);
                    let vote = p * norm;
                    for t in bilinear_taps(h, w, heatmaps.stride(), target) {
                        acc[t.row * w + t.col] += vote * t.weight;
                    }
                }
            }
            acc
        })
        .collect();

    let mut data = vec![0.0f64; h * w * k];
    for (ch, plane) in planes.iter().enumerate() {
        for (cell, v) in plane.iter().enumerate() {
            data[cell * k + ch] = *v;
        }
    }
    Ok(HoughMaps {
        height: h,
        width: w,
        channels: k,
        stride: heatmaps.stride(),
        disk_radius,
        data,
    })
}

/// A local maximum of `h_k` that may start a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedCandidate {
    /// Center of the maximum's cell, in image pixels.
    pub position: Point2D,
    pub row: usize,
    pub col: usize,
    pub keypoint_type: usize,
    pub score: f64,
}

/// Finds local maxima above `score_threshold` in every channel.
///
/// A cell qualifies when its value is `>=` every cell within the square
/// window of `window_radius` cells. Equal-valued cells connected through the
/// window form a plateau; a plateau yields a single seed at its first cell in
/// row-major order, and only if none of its cells has a larger neighbour.
/// Output is sorted by descending score, ties by `(row, col, channel)`.
pub fn extract_seeds(
    hough: &HoughMaps,
    score_threshold: f64,
    window_radius: usize,
) -> Vec<SeedCandidate> {
    let mut seeds: Vec<SeedCandidate> = (0..hough.channels)
        .into_par_iter()
        .flat_map_iter(|ch| channel_maxima(hough, ch, score_threshold, window_radius))
        .collect();
    seeds.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
            .then(a.keypoint_type.cmp(&b.keypoint_type))
    });
    seeds
}

fn channel_maxima(
    hough: &HoughMaps,
    ch: usize,
    threshold: f64,
    radius: usize,
) -> Vec<SeedCandidate> {
    let (h, w) = (hough.height, hough.width);
    let value = |r: usize, c: usize| hough.get(r, c, ch);
    let window = |r: usize, c: usize| {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(h - 1));
        let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(w - 1));
        (r0..=r1).flat_map(move |rr| (c0..=c1).map(move |cc| (rr, cc)))
    };
    let dominates = |r: usize, c: usize| {
        let v = value(r, c);
        window(r, c).all(|(rr, cc)| value(rr, cc) <= v)
    };

    let mut out = Vec::new();
    let mut visited = vec![false; h * w];
    let mut queue = VecDeque::new();
    for row in 0..h {
        for col in 0..w {
            let v = value(row, col);
            if visited[row * w + col] || v <= threshold || !dominates(row, col) {
                continue;
            }
            // flood the plateau of cells equal to v
            let mut is_max = true;
            let mut first = (row, col);
            visited[row * w + col] = true;
            queue.push_back((row, col));
            while let Some((r, c)) = queue.pop_front() {
                if !dominates(r, c) {
                    is_max = false;
                }
                first = first.min((r, c));
                for (rr, cc) in window(r, c) {
                    if !visited[rr * w + cc] && value(rr, cc) == v {
                        visited[rr * w + cc] = true;
                        queue.push_back((rr, cc));
                    }
                }
            }
            if is_max {
                out.push(SeedCandidate {
                    position: hough.cell_center(first.0, first.1),
                    row: first.0,
                    col: first.1,
                    keypoint_type: ch,
                    score: v,
                });
            }
        }
    }
    out
}
