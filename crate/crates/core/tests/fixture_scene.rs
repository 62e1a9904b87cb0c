use personlab::synth::{load_scene, render_outputs, SceneSpec};
use personlab::{decode_container, default_coco_graph, encode_container};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/minimal_scene.json");

#[test]
fn fixture_parses_to_expected_scene() {
    let scene = load_scene(FIXTURE).unwrap();
    assert_eq!((scene.width, scene.height), (320, 240));
    assert_eq!(scene.persons.len(), 2);
    let first = &scene.persons[0];
    assert_eq!(first.keypoints.len(), 17);
    assert_eq!(first.keypoints[0], [90.0, 46.0, 2.0]);
    assert_eq!(first.keypoints[16], [68.4, 204.4, 2.0]);
    assert_eq!(first.mask_polygon, vec![[36.0, 28.0], [144.0, 28.0], [144.0, 217.0], [36.0, 217.0]]);
    assert!(scene.noise_sigma.is_zero());
    assert_eq!(scene.noise_seed, 0);
    scene.validate(17).unwrap();
}

#[test]
fn fixture_renders_to_loadable_container() {
    let scene = load_scene(FIXTURE).unwrap();
    let outputs = render_outputs(&scene, &default_coco_graph(), 8, 32.0).unwrap();
    let back = decode_container(&encode_container(&outputs).unwrap()).unwrap();
    assert_eq!(back, outputs);
    assert_eq!((back.grid_height(), back.grid_width()), (30, 40));
}

#[test]
fn serialization_round_trips() {
    let scene = load_scene(FIXTURE).unwrap();
    assert_eq!(SceneSpec::from_json(&scene.to_json()).unwrap(), scene);
}
