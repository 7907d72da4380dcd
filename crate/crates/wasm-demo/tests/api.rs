use corrwalk_wasm::{branching_run, potential_path, tail_curve};

#[test]
fn operations_are_deterministic() {
    assert_eq!(potential_path("power", 0.8, 500, "11").unwrap(), potential_path("power", 0.8, 500, "11").unwrap());
    assert_eq!(branching_run("fgn", 0.7, 128, "5").unwrap(), branching_run("fgn", 0.7, 128, "5").unwrap());
    assert_ne!(potential_path("fgn", 0.8, 500, "11").unwrap(), potential_path("fgn", 0.8, 500, "12").unwrap());
}

#[test]
fn tail_curve_decays() {
    let curve = tail_curve("fgn", 0.7, 1024, 2_000, "9").unwrap();
    assert_eq!(curve.points.iter().map(|p| p.n).collect::<Vec<_>>(), vec![16, 32, 64, 128, 256, 512, 1024]);
    assert!(curve.slope < 0.0 && curve.slope > -0.6, "{}", curve.slope);
    assert!((curve.expected_slope + 0.3).abs() < 1e-12);
    let json = serde_json::to_value(&curve).unwrap();
    assert!(json["points"][0]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn branching_matches_its_environment() {
    let run = branching_run("iid", 0.5, 256, "0x2a").unwrap();
    match run.extinction_time {
        Some(t) => {
            assert_eq!(run.z[t as usize], 0);
            assert!(!run.censored);
        }
        None => assert!(run.censored),
    }
    assert_eq!(run.total, run.z.iter().sum::<u64>());
    // quenched survival to one generation is e^{V(-1)} / (e^{V(-1)} + e^{V(0)})
    assert!(run.survival[0] > 0.0 && run.survival[0] < 1.0);
}
