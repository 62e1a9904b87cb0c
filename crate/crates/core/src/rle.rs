//! Column-major run-length encoding of binary masks, COCO style: runs
//! alternate starting with background, so a mask whose first pixel is set
//! starts with a zero-length run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{CellMask, ImageMask};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn height(&self) -> usize {
        self.size[0] as usize
    }

    pub fn width(&self) -> usize {
        self.size[1] as usize
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = self.height() as u64 * self.width() as u64;
        if total != expected {
            return Err(Error::MalformedRle(format!(
                "runs cover {total} pixels, mask has {expected}"
            )));
        }
        Ok(())
    }

    /// Column-major foreground flags.
    pub(crate) fn column_major(&self) -> Result<Vec<bool>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.height() * self.width());
        let mut value = false;
        for &c in &self.counts {
            out.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        Ok(out)
    }
}

pub fn rle_encode(mask: &ImageMask) -> Rle {
    let (h, w) = (mask.height, mask.width);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(y, x);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h as u32, w as u32],
        counts,
    }
}

/// Encodes the nearest-neighbour upsampling of a cell mask without
/// materializing it.
pub fn rle_from_cell_mask(mask: &CellMask, image_height: usize, image_width: usize) -> Rle {
    let s = mask.stride.max(1) as usize;
    let empty = mask.height == 0 || mask.width == 0;
    // pixel-row segments of one cell column; the last cell row absorbs
    // everything below the grid
    let column_runs = |col: usize| -> Vec<(bool, usize)> {
        let mut runs: Vec<(bool, usize)> = Vec::new();
        let mut y = 0;
        while y < image_height {
            let row = (y / s).min(mask.height.saturating_sub(1));
            let end = if empty || row + 1 == mask.height {
                image_height
            } else {
                ((row + 1) * s).min(image_height)
            };
            let v = !empty && mask.get(row, col);
            match runs.last_mut() {
                Some((last, len)) if *last == v => *len += end - y,
                _ => runs.push((v, end - y)),
            }
            y = end;
        }
        runs
    };
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    let mut cached: Option<(usize, Vec<(bool, usize)>)> = None;
    for x in 0..image_width {
        let col = (x / s).min(mask.width.saturating_sub(1));
        if cached.as_ref().is_none_or(|(c, _)| *c != col) {
            cached = Some((col, column_runs(col)));
        }
        for &(v, len) in &cached.as_ref().expect("filled above").1 {
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += len as u32;
        }
    }
    counts.push(run);
    Rle {
        size: [image_height as u32, image_width as u32],
        counts,
    }
}

pub fn rle_decode(rle: &Rle) -> Result<ImageMask> {
    let flags = rle.column_major()?;
    let (h, w) = (rle.height(), rle.width());
    let mut pixels = vec![false; h * w];
    for x in 0..w {
        for y in 0..h {
            pixels[y * w + x] = flags[x * h + y];
        }
    }
    Ok(ImageMask {
        height: h,
        width: w,
        pixels,
    })
}

/// Intersection over union; for crowd ground truth the union is replaced by
/// the detection area.
pub fn rle_iou(dt: &Rle, gt: &Rle, gt_is_crowd: bool) -> Result<f64> {
    if dt.size != gt.size {
        return Err(Error::mismatch(
            "mask size",
            format!("{:?}", gt.size),
            format!("{:?}", dt.size),
        ));
    }
    let (a, b) = (dt.column_major()?, gt.column_major()?);
    let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count() as f64;
    let (area_a, area_b) = (dt.area() as f64, gt.area() as f64);
    let union = if gt_is_crowd {
        area_a
    } else {
        area_a + area_b - inter
    };
    Ok(if union > 0.0 { inter / union } else { 0.0 })
}
