use selfil_web::{level_view, render_level, sampling_demo, sampling_view, Playground};

#[test]
fn level_view_reports_oracle_path() {
    let v = level_view("multi-room", 2, 4, 7).unwrap();
    assert_eq!(v.name, "MultiRoom-N2-S4");
    assert_eq!(v.solution.len() as u32, v.optimal_steps);
    assert!(v.ascii.contains('G'));
    let json: serde_json::Value =
        serde_json::from_str(&render_level("multi-room", 2, 4, 7).unwrap()).unwrap();
    assert_eq!(json["optimal_steps"], v.optimal_steps);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(render_level("maze", 2, 4, 0).is_err());
    assert!(render_level("multi-room", 1, 4, 0).is_err());
    assert!(sampling_demo("1, x", 0.5, 10, 0).is_err());
    assert!(sampling_demo("", 0.5, 10, 0).is_err());
    assert!(sampling_demo("1, -2", 0.5, 10, 0).is_err());
}

#[test]
fn playing_the_oracle_path_solves_the_level() {
    let v = level_view("multi-room", 2, 4, 11).unwrap();
    let mut game = Playground::new("multi-room", 2, 4, 11).unwrap();
    let names = [
        "left", "right", "forward", "pickup", "drop", "toggle", "done",
    ];
    for a in &v.solution {
        game.step(names.iter().position(|n| n == a).unwrap())
            .unwrap();
    }
    let f = game.frame_data();
    assert!(f.done && f.success);
    assert_eq!(f.steps, v.optimal_steps);
    let expected = 1.0 - 0.9 * v.optimal_steps as f64 / v.max_steps as f64;
    assert!((f.reward - expected).abs() < 1e-12);
    // Further presses are ignored; reset starts over.
    game.step(2).unwrap();
    assert_eq!(game.frame_data().steps, v.optimal_steps);
    game.reset().unwrap();
    let f = game.frame_data();
    assert!(!f.done);
    assert_eq!(f.steps, 0);
}

#[test]
fn sampling_view_matches_closed_form() {
    let v = sampling_view(&[1.0, 4.0], 0.5, 20_000, 3).unwrap();
    // 1^0.5 : 4^0.5 = 1 : 2
    assert!((v.probabilities[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((v.probabilities[1] - 2.0 / 3.0).abs() < 1e-12);
    let h = -(1.0f64 / 3.0) * (1.0f64 / 3.0).ln() - (2.0f64 / 3.0) * (2.0f64 / 3.0).ln();
    assert!((v.entropy - h).abs() < 1e-12);
    assert!(v.l1 < 0.03);
    assert!((v.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(
        sampling_demo("1,4", 0.5, 20_000, 3).unwrap(),
        serde_json::to_string(&v).unwrap()
    );
}
