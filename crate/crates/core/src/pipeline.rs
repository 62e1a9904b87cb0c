//! The full decode: refinement, Hough voting, greedy grouping, scoring, NMS
//! and instance segmentation.

use serde::{Deserialize, Serialize};

use crate::decode::{greedy_decode, DecodeConfig, PoseInstance};
use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::field::ModelOutputs;
use crate::graph::KinematicGraph;
use crate::hough::{accumulate_hough, extract_seeds, HoughMaps};
use crate::refine::{refine_long_offsets, refine_mid_offsets, RefinementConfig};
use crate::rle::{rle_from_cell_mask, Rle};
use crate::scoring::{hard_nms, score_instance, soft_nms_rescore, NmsMethod, OksParams, ScoringMethod};
use crate::segment::{assign_pixels, person_mask, EmbeddingField, InstanceMasks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Keypoint disk radius `R`, pixels.
    pub disk_radius: f64,
    pub seed_threshold: f64,
    /// Seed local-maximum window half-size, cells.
    pub window_radius: usize,
    /// Same-type keypoint radius for seed rejection and soft-NMS, pixels.
    pub nms_radius: f64,
    pub scoring: ScoringMethod,
    pub nms: NmsMethod,
    pub hard_nms_oks_threshold: f64,
    pub seg_threshold: f64,
    pub dist_threshold: f64,
    pub refinement: RefinementConfig,
    /// Maximum detections kept per image.
    pub budget: usize,
    pub refine_seeds: bool,
    /// Snap propagated keypoints to a Hough peak within this radius; 0 = off.
    pub snap_radius: f64,
    /// Lower bound on the instance scale, pixels.
    pub scale_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            disk_radius: 32.0,
            seed_threshold: 0.01,
            window_radius: 1,
            nms_radius: 10.0,
            scoring: ScoringMethod::ExpectedOks,
            nms: NmsMethod::Soft,
            hard_nms_oks_threshold: 0.5,
            seg_threshold: 0.5,
            dist_threshold: 0.25,
            refinement: RefinementConfig::default(),
            budget: 20,
            refine_seeds: true,
            snap_radius: 0.0,
            scale_floor: 1.0,
            graph: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("disk_radius", self.disk_radius),
            ("nms_radius", self.nms_radius),
            ("scale_floor", self.scale_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("seed_threshold", self.seed_threshold),
            ("dist_threshold", self.dist_threshold),
            ("snap_radius", self.snap_radius),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.seg_threshold) {
            return Err(Error::usage("seg_threshold must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            nms_radius: self.nms_radius,
            refine_seeds: self.refine_seeds,
            snap_radius: self.snap_radius,
            ..DecodeConfig::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything the decode produces for one image.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Sorted by descending instance score, at most `budget` long.
    pub instances: Vec<PoseInstance>,
    pub masks: InstanceMasks,
    pub embedding: EmbeddingField,
    pub hough: HoughMaps,
    pub image_height: usize,
    pub image_width: usize,
}

impl PipelineOutput {
    pub fn instance_rle(&self, j: usize) -> Rle {
        rle_from_cell_mask(&self.masks.instance_mask(j), self.image_height, self.image_width)
    }

    /// Detections in the COCO results schema, with masks.
    pub fn detections(&self, image_id: u64) -> Vec<Detection> {
        self.instances
            .iter()
            .enumerate()
            .map(|(j, inst)| Detection {
                image_id,
                category_id: 1,
                keypoints: inst
                    .keypoints
                    .iter()
                    .zip(&inst.keypoint_scores)
                    .flat_map(|(p, &s)| [p.x, p.y, s])
                    .collect(),
                score: inst.instance_score.clamp(0.0, 1.0),
                segmentation: Some(self.instance_rle(j)),
            })
            .collect()
    }
}

/// Runs the full decode on one set of model outputs.
pub fn run_pipeline(
    outputs: &ModelOutputs,
    graph: &KinematicGraph,
    oks: &OksParams,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    outputs.validate()?;
    let k = outputs.num_keypoints();
    if graph.num_keypoints() != k {
        return Err(Error::mismatch("graph keypoints", k, graph.num_keypoints()));
    }
    if oks.kappas.len() != k {
        return Err(Error::mismatch("kappa count", k, oks.kappas.len()));
    }

    let (mid, long) = rayon::join(
        || refine_mid_offsets(&outputs.mid_offsets, &outputs.short_offsets, graph, &config.refinement),
        || refine_long_offsets(&outputs.long_offsets, &outputs.short_offsets, &config.refinement),
    );
    let (mid, long) = (mid?, long?);

    let hough = accumulate_hough(&outputs.heatmaps, &outputs.short_offsets, config.disk_radius)?;
    let seeds = extract_seeds(&hough, config.seed_threshold, config.window_radius);
    let mut instances = greedy_decode(
        &seeds,
        &hough,
        &mid,
        &outputs.short_offsets,
        graph,
        &config.decode_config(),
    )?;

    for inst in &mut instances {
        score_instance(inst, config.scoring, &hough, &outputs.heatmaps, oks, config.scale_floor);
    }
    let mut instances = match config.nms {
        NmsMethod::Hard => hard_nms(instances, oks, config.hard_nms_oks_threshold, config.scale_floor),
        NmsMethod::Soft => soft_nms_rescore(instances, config.nms_radius),
    };
    instances.truncate(config.budget);

    let embedding = EmbeddingField::from_long_offsets(&long);
    let person = person_mask(&outputs.seg_prob, config.seg_threshold);
    let masks = assign_pixels(
        &person,
        &embedding,
        &instances,
        &outputs.heatmaps,
        config.dist_threshold,
        config.scale_floor,
    )?;
    Ok(PipelineOutput {
        instances,
        masks,
        embedding,
        hough,
        image_height: outputs.image_height as usize,
        image_width: outputs.image_width as usize,
    })
}

/// Serialized detections; identical inputs give identical bytes.
pub fn detections_to_json(detections: &[Detection]) -> String {
    serde_json::to_string(detections).expect("detections serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Point2D;
    use crate::graph::default_coco_graph;
    use crate::synth::{render_outputs, standing_person, SceneSpec};

    #[test]
    fn default_config_dump() {
        let golden = r#"{
  "disk_radius": 32.0,
  "seed_threshold": 0.01,
  "window_radius": 1,
  "nms_radius": 10.0,
  "scoring": "expected_oks",
  "nms": "soft",
  "hard_nms_oks_threshold": 0.5,
  "seg_threshold": 0.5,
  "dist_threshold": 0.25,
  "refinement": {
    "mid_steps_short": 2,
    "long_steps_self": 2,
    "long_steps_short": 2
  },
  "budget": 20,
  "refine_seeds": true,
  "snap_radius": 0.0,
  "scale_floor": 1.0
}"#;
        assert_eq!(PipelineConfig::default().to_json(), golden);
        let back: PipelineConfig = serde_json::from_str(golden).unwrap();
        assert_eq!(back, PipelineConfig::default());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = PipelineConfig { disk_radius: 0.0, ..PipelineConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        let cfg = PipelineConfig { seg_threshold: 1.5, ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_outputs_give_no_detections() {
        let outputs = ModelOutputs::zeros(17, 64, 48, 8);
        let out = run_pipeline(&outputs, &default_coco_graph(), &OksParams::coco(), &PipelineConfig::default()).unwrap();
        assert!(out.instances.is_empty());
        assert_eq!(detections_to_json(&out.detections(1)), "[]");
    }

    fn two_people() -> ModelOutputs {
        let mut scene = SceneSpec::empty(320, 240);
        scene.persons.push(standing_person(Point2D { x: 90.0, y: 120.0 }, 180.0, 8.0));
        scene.persons.push(standing_person(Point2D { x: 230.0, y: 120.0 }, 180.0, 8.0));
        render_outputs(&scene, &default_coco_graph(), 8, 32.0).unwrap()
    }

    #[test]
    fn two_people_round_trip() {
        let outputs = two_people();
        let out = run_pipeline(&outputs, &default_coco_graph(), &OksParams::coco(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.instances.len(), 2);
        let dets = out.detections(7);
        assert!(dets.iter().all(|d| d.segmentation.as_ref().unwrap().area() > 0));
        assert_eq!(dets[0].keypoints.len(), 51);
    }

    #[test]
    fn budget_truncates() {
        let outputs = two_people();
        let cfg = PipelineConfig { budget: 1, ..PipelineConfig::default() };
        let out = run_pipeline(&outputs, &default_coco_graph(), &OksParams::coco(), &cfg).unwrap();
        assert_eq!(out.instances.len(), 1);
        assert_eq!(out.masks.num_instances, 1);
    }

    #[test]
    fn decode_is_deterministic() {
        let outputs = two_people();
        let run = || {
            let out = run_pipeline(&outputs, &default_coco_graph(), &OksParams::coco(), &PipelineConfig::default()).unwrap();
            detections_to_json(&out.detections(1))
        };
        assert_eq!(run(), run());
    }
}
