mod support;

use support::gate_cases::{check_case, random_case, rng};

#[test]
fn selection_agrees_with_oracle_on_random_frames() {
    let mut r = rng(0x6a7e);
    let (mut active, mut selected) = (0, 0);
    for i in 0..10_000 {
        let case = random_case(&mut r);
        if let Err(e) = check_case(&case) {
            panic!("case {i}: {e}");
        }
        let v = tlr_core::recognition::recognize_frame(
            &case.frame,
            &tlr_core::detection::filter_by_confidence(&case.dets, 0.5),
            &case.map,
            &tlr_core::geometry::CameraModel::default_vehicle_camera(),
            &Default::default(),
        );
        active += v.active_group.is_some() as usize;
        selected += v.selected_detection.is_some() as usize;
    }
    // the generator must exercise all three outcomes
    assert!(
        active > 3000 && selected > 1000 && active - selected > 1000,
        "{active} {selected}"
    );
}
