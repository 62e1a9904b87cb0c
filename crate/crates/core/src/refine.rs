//! Recurrent refinement of mid- and long-range offsets.
//!
//! Offsets are stored relative to the cell they live in. One refinement step
//! moves the endpoint `x' = x + offset(x)` by a second field sampled at `x'`
//! and stores the new endpoint back as a relative offset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldGrid, Point2D};
use crate::graph::KinematicGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Mid-range steps through the short-range field.
    pub mid_steps_short: usize,
    /// Long-range steps through the long-range field itself.
    pub long_steps_self: usize,
    /// Long-range steps through the short-range field, after the self steps.
    pub long_steps_short: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            mid_steps_short: 2,
            long_steps_self: 2,
            long_steps_short: 2,
        }
    }
}

impl RefinementConfig {
    pub const NONE: RefinementConfig = RefinementConfig {
        mid_steps_short: 0,
        long_steps_self: 0,
        long_steps_short: 0,
    };
}

/// Refines every directed-edge channel of `mid` with the short-range field of
/// the edge's target keypoint.
pub fn refine_mid_offsets(
    mid: &FieldGrid,
    short: &FieldGrid,
    graph: &KinematicGraph,
    config: &RefinementConfig,
) -> Result<FieldGrid> {
    check_pair(mid, short)?;
    if mid.channels() != 2 * graph.edges().len() {
        return Err(Error::mismatch(
            "mid_offsets channels",
            2 * graph.edges().len(),
            mid.channels(),
        ));
    }
    if short.channels() != 2 * graph.num_keypoints() {
        return Err(Error::mismatch(
            "short_offsets channels",
            2 * graph.num_keypoints(),
            short.channels(),
        ));
    }
    if config.mid_steps_short == 0 {
        return Ok(mid.clone());
    }
    let targets: Vec<usize> = graph.edges().iter().map(|&(_, to)| to).collect();
    Ok(map_pairs(mid, |row, col, pair| {
        let x = mid.cell_center(row, col);
        let mut end = x + mid.vector_at(row, col, pair);
        for _ in 0..config.mid_steps_short {
            end = end + short.sample_vector(targets[pair], end);
        }
        end - x
    }))
}

/// Refines the long-range field: first `long_steps_self` steps through
/// itself, then `long_steps_short` steps through the short-range field.
pub fn refine_long_offsets(
    long: &FieldGrid,
    short: &FieldGrid,
    config: &RefinementConfig,
) -> Result<FieldGrid> {
    check_pair(long, short)?;
    if long.channels() != short.channels() || long.channels() % 2 != 0 {
        return Err(Error::mismatch(
            "long_offsets channels",
            short.channels(),
            long.channels(),
        ));
    }
    let mut current = long.clone();
    for _ in 0..config.long_steps_self {
        let prev = &current;
        current = map_pairs(prev, |row, col, pair| {
            let x = prev.cell_center(row, col);
            let end = x + prev.vector_at(row, col, pair);
            end + prev.sample_vector(pair, end) - x
        });
    }
    if config.long_steps_short > 0 {
        let prev = &current;
        current = map_pairs(prev, |row, col, pair| {
            let x = prev.cell_center(row, col);
            let mut end = x + prev.vector_at(row, col, pair);
            for _ in 0..config.long_steps_short {
                end = end + short.sample_vector(pair, end);
            }
            end - x
        });
    }
    Ok(current)
}

fn check_pair(a: &FieldGrid, b: &FieldGrid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::usage(
            "offset fields must share height, width and stride",
        ))
    }
}

/// Builds a grid of the same shape by evaluating `f` per `(row, col, pair)`;
/// rows are computed in parallel.
fn map_pairs<F>(like: &FieldGrid, f: F) -> FieldGrid
where
    F: Fn(usize, usize, usize) -> Point2D + Sync,
{
    let (w, c) = (like.width(), like.channels());
    let mut data = vec![0.0f32; like.data().len()];
    data.par_chunks_mut(w * c)
        .enumerate()
        .for_each(|(row, chunk)| {
            for col in 0..w {
                for pair in 0..c / 2 {
                    let v = f(row, col, pair);
                    chunk[col * c + 2 * pair] = v.x as f32;
                    chunk[col * c + 2 * pair + 1] = v.y as f32;
                }
            }
        });
    FieldGrid::new(like.height(), like.width(), c, like.stride(), data)
        .expect("same shape as input")
}
