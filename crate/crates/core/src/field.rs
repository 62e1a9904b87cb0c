//! Dense field grids and the cell-center coordinate convention.
//!
//! A [`FieldGrid`] stores `height × width × channels` values at an output
//! stride. Cell `(row, col)` represents the image point
//! `((col + 0.5) · stride, (row + 0.5) · stride)`. Offsets are always stored
//! in image pixels, so changing the stride never rescales field values.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2D) -> f64 {
        (self - other).norm()
    }

    pub fn distance_sq(self, other: Point2D) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2D {
    type Output = Point2D;
    fn add(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2D {
    type Output = Point2D;
    fn sub(self, rhs: Point2D) -> Point2D {
        Point2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2D {
    type Output = Point2D;
    fn mul(self, rhs: f64) -> Point2D {
        Point2D::new(self.x * rhs, self.y * rhs)
    }
}

/// One of the (up to) four cells touched by a bilinear read or splat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// Row-major, channel-minor grid of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    height: usize,
    width: usize,
    channels: usize,
    stride: u32,
    data: Vec<f32>,
}

impl FieldGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        stride: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::usage("stride must be a positive integer"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::mismatch("grid data length", expected, data.len()));
        }
        Ok(Self {
            height,
            width,
            channels,
            stride,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, stride: u32) -> Self {
        assert!(stride > 0, "stride must be positive");
        Self {
            height,
            width,
            channels,
            stride,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds a grid by evaluating `f(row, col, channel)` at every entry.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        stride: u32,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut grid = Self::zeros(height, width, channels, stride);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    let idx = grid.index(row, col, ch);
                    grid.data[idx] = f(row, col, ch);
                }
            }
        }
        grid
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_shape(&self, other: &FieldGrid) -> bool {
        self.height == other.height && self.width == other.width && self.stride == other.stride
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        let idx = self.index(row, col, channel);
        self.data[idx] = value;
    }

    /// Image-pixel position of the center of cell `(row, col)`.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> Point2D {
        let s = self.stride as f64;
        Point2D::new((col as f64 + 0.5) * s, (row as f64 + 0.5) * s)
    }

    /// Continuous cell coordinates `(col, row)` of an image point.
    #[inline]
    pub fn to_cell_coords(&self, p: Point2D) -> (f64, f64) {
        let s = self.stride as f64;
        (p.x / s - 0.5, p.y / s - 0.5)
    }

    /// Cells and bilinear weights for a read at `p`, clamped to the border.
    #[inline]
    pub(crate) fn taps(&self, p: Point2D) -> [Tap; 4] {
        bilinear_taps(self.height, self.width, self.stride, p)
    }

    /// Bilinear interpolation of `channel` at image point `p`.
    ///
    /// Points outside the grid read the border cells.
    pub fn bilinear_sample(&self, channel: usize, p: Point2D) -> Result<f64> {
        if channel >= self.channels {
            return Err(Error::usage(format!(
                "channel {channel} out of range for a grid with {} channels",
                self.channels
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::usage("cannot sample an empty grid"));
        }
        Ok(self.sample(channel, p))
    }

    #[inline]
    pub(crate) fn sample(&self, channel: usize, p: Point2D) -> f64 {
        self.taps(p)
            .iter()
            .map(|t| t.weight * self.get(t.row, t.col, channel) as f64)
            .sum()
    }

    /// Samples the offset pair stored in channels `2·pair` and `2·pair + 1`.
    #[inline]
    pub(crate) fn sample_vector(&self, pair: usize, p: Point2D) -> Point2D {
        let (cx, cy) = (2 * pair, 2 * pair + 1);
        let mut out = Point2D::default();
        for t in self.taps(p) {
            out.x += t.weight * self.get(t.row, t.col, cx) as f64;
            out.y += t.weight * self.get(t.row, t.col, cy) as f64;
        }
        out
    }

    /// Stored offset pair at a cell, as an image-pixel vector.
    #[inline]
    pub fn vector_at(&self, row: usize, col: usize, pair: usize) -> Point2D {
        Point2D::new(
            self.get(row, col, 2 * pair) as f64,
            self.get(row, col, 2 * pair + 1) as f64,
        )
    }

    /// Minimum and maximum stored values, or `None` for an empty grid.
    pub fn value_range(&self) -> Option<(f32, f32)> {
        let mut iter = self.data.iter().copied();
        let first = iter.next()?;
        Some(iter.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// Bilinear taps on a `height × width` grid at `stride`; the point is
/// clamped to the span of cell centers first, so border cells absorb
/// everything outside.
#[inline]
pub(crate) fn bilinear_taps(height: usize, width: usize, stride: u32, p: Point2D) -> [Tap; 4] {
    let s = stride as f64;
    let (c0, c1, fu) = axis_taps(p.x / s - 0.5, width);
    let (r0, r1, fv) = axis_taps(p.y / s - 0.5, height);
    [
        Tap {
            row: r0,
            col: c0,
            weight: (1.0 - fu) * (1.0 - fv),
        },
        Tap {
            row: r0,
            col: c1,
            weight: fu * (1.0 - fv),
        },
        Tap {
            row: r1,
            col: c0,
            weight: (1.0 - fu) * fv,
        },
        Tap {
            row: r1,
            col: c1,
            weight: fu * fv,
        },
    ]
}

#[inline]
fn axis_taps(coord: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let c = coord.clamp(0.0, max);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - i0 as f64)
}

/// The five field groups produced by a network (or the synthetic oracle)
/// for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    /// `K` channels of keypoint-disk probability.
    pub heatmaps: FieldGrid,
    /// `2K` channels, `(dx, dy)` per keypoint type.
    pub short_offsets: FieldGrid,
    /// `4(K−1)` channels, `(dx, dy)` per directed kinematic edge.
    pub mid_offsets: FieldGrid,
    /// `2K` channels, `(dx, dy)` per keypoint type.
    pub long_offsets: FieldGrid,
    /// One channel of person probability.
    pub seg_prob: FieldGrid,
    pub image_height: u32,
    pub image_width: u32,
}

impl ModelOutputs {
    pub fn new(
        heatmaps: FieldGrid,
        short_offsets: FieldGrid,
        mid_offsets: FieldGrid,
        long_offsets: FieldGrid,
        seg_prob: FieldGrid,
        image_height: u32,
        image_width: u32,
    ) -> Result<Self> {
        let outputs = Self {
            heatmaps,
            short_offsets,
            mid_offsets,
            long_offsets,
            seg_prob,
            image_height,
            image_width,
        };
        outputs.validate()?;
        Ok(outputs)
    }

    /// All-zero outputs for `num_keypoints` keypoint types.
    pub fn zeros(
        num_keypoints: usize,
        image_height: u32,
        image_width: u32,
        stride: u32,
    ) -> Self {
        let (gh, gw) = grid_size(image_height, image_width, stride);
        Self {
            heatmaps: FieldGrid::zeros(gh, gw, num_keypoints, stride),
            short_offsets: FieldGrid::zeros(gh, gw, 2 * num_keypoints, stride),
            mid_offsets: FieldGrid::zeros(gh, gw, mid_channels(num_keypoints), stride),
            long_offsets: FieldGrid::zeros(gh, gw, 2 * num_keypoints, stride),
            seg_prob: FieldGrid::zeros(gh, gw, 1, stride),
            image_height,
            image_width,
        }
    }

    pub fn num_keypoints(&self) -> usize {
        self.heatmaps.channels()
    }

    pub fn stride(&self) -> u32 {
        self.heatmaps.stride()
    }

    pub fn grid_height(&self) -> usize {
        self.heatmaps.height()
    }

    pub fn grid_width(&self) -> usize {
        self.heatmaps.width()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_keypoints();
        let expected = [
            ("short_offsets", &self.short_offsets, 2 * k),
            ("mid_offsets", &self.mid_offsets, mid_channels(k)),
            ("long_offsets", &self.long_offsets, 2 * k),
            ("seg_prob", &self.seg_prob, 1),
        ];
        for (name, grid, channels) in expected {
            if grid.height() != self.heatmaps.height() {
                return Err(Error::mismatch(
                    format!("{name} height"),
                    self.heatmaps.height(),
                    grid.height(),
                ));
            }
            if grid.width() != self.heatmaps.width() {
                return Err(Error::mismatch(
                    format!("{name} width"),
                    self.heatmaps.width(),
                    grid.width(),
                ));
            }
            if grid.stride() != self.heatmaps.stride() {
                return Err(Error::mismatch(
                    format!("{name} stride"),
                    self.heatmaps.stride(),
                    grid.stride(),
                ));
            }
            if grid.channels() != channels {
                return Err(Error::mismatch(
                    format!("{name} channels"),
                    channels,
                    grid.channels(),
                ));
            }
        }
        Ok(())
    }
}

/// Number of mid-range offset channels for a tree over `k` keypoint types.
pub fn mid_channels(k: usize) -> usize {
    4 * k.saturating_sub(1)
}

/// Activation grid size for an image at `stride`, rounding partial cells up.
pub fn grid_size(image_height: u32, image_width: u32, stride: u32) -> (usize, usize) {
    let s = stride.max(1);
    (
        image_height.div_ceil(s) as usize,
        image_width.div_ceil(s) as usize,
    )
}
