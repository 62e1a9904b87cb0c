//! Bottom-up multi-person pose estimation and instance segmentation,
//! decoded from dense network outputs.
//!
//! The pipeline takes per-cell keypoint heatmaps, short/mid/long-range
//! offset fields and a person probability map ([`ModelOutputs`]) and
//! produces scored poses with per-instance masks. [`synth`] renders ideal
//! outputs for hand-built scenes so every stage can be checked against
//! known answers.
//!
//! ```
//! use personlab::{default_coco_graph, run_pipeline, OksParams, PipelineConfig, Point2D};
//! use personlab::synth::{render_outputs, standing_person, SceneSpec};
//!
//! let mut scene = SceneSpec::empty(200, 240);
//! scene.persons.push(standing_person(Point2D { x: 100.0, y: 120.0 }, 180.0, 8.0));
//! let graph = default_coco_graph();
//! let outputs = render_outputs(&scene, &graph, 8, 32.0).unwrap();
//! let out = run_pipeline(&outputs, &graph, &OksParams::coco(), &PipelineConfig::default()).unwrap();
//! assert_eq!(out.instances.len(), 1);
//! ```

pub mod container;
pub mod decode;
pub mod error;
pub mod eval;
pub mod field;
pub mod graph;
pub mod hough;
pub mod pipeline;
pub mod refine;
pub mod rle;
pub mod scoring;
pub mod segment;
pub mod synth;

pub use container::{decode_container, encode_container, load_container, save_container};
pub use decode::{greedy_decode, DecodeConfig, PoseInstance};
pub use error::{Error, Result};
pub use eval::{keypoint_ap, mask_ap, oks, Detection, EvalSummary, GroundTruthAnnotation};
pub use field::{FieldGrid, ModelOutputs, Point2D};
pub use graph::{default_coco_graph, KinematicGraph, COCO_KEYPOINTS};
pub use hough::{accumulate_hough, extract_seeds, HoughMaps, SeedCandidate};
pub use pipeline::{detections_to_json, run_pipeline, PipelineConfig, PipelineOutput};
pub use refine::{refine_long_offsets, refine_mid_offsets, RefinementConfig};
pub use rle::{rle_decode, rle_encode, rle_iou, Rle};
pub use scoring::{NmsMethod, OksParams, ScoringConfig, ScoringMethod};
pub use segment::{assign_pixels, CellMask, EmbeddingField, ImageMask, InstanceMasks};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/hough.md")]
    mod hough {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
