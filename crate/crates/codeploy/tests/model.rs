use codeploy::model::{spectral_radius, validate, CouplingSpec, ProblemSpec, SubsystemSpec};
use codeploy::bundled;

fn two(d_ab: f64, d_ba: f64) -> ProblemSpec {
    let mut spec = bundled::case2();
    spec.couplings = vec![
        CouplingSpec { dest: "A".into(), origin: "B".into(), d_coef: d_ab },
        CouplingSpec { dest: "B".into(), origin: "A".into(), d_coef: d_ba },
    ];
    spec
}

#[test]
fn case_study_validates() {
    let report = validate(&bundled::case2());
    assert!(report.is_ok(), "{:?}", report.issues);
    assert!(validate(&bundled::case3()).is_ok());
}

#[test]
fn case_study_parameters_load_from_json() {
    let spec = bundled::case2();
    let a = &spec.subsystems[0];
    assert_eq!((a.c1, a.c2, a.alpha, a.d1, a.d2_low, a.d2_high), (4.0, 5.0, 0.9, 1.0, 1.0, 2.0));
    let b = &spec.subsystems[1];
    assert_eq!((b.c1, b.c2, b.d2_low, b.d2_high), (1.0, 2.0, 1.0, 4.0));
    assert_eq!(spec.coupling_matrix(), vec![vec![0.0, 0.3], vec![0.1, 0.0]]);
}

#[test]
fn decoupled_problem_is_legal() {
    assert!(validate(&two(0.0, 0.0)).is_ok());
}

#[test]
fn strong_coupling_fails_on_spectral_radius() {
    let report = validate(&two(1.5, 1.5));
    assert!(!report.is_ok());
    assert!(report.issues.iter().any(|i| i.message.contains("spectral radius")));
}

#[test]
fn spectral_radius_matches_two_by_two_closed_form() {
    // eigenvalues of [[0, a], [b, 0]] are +-sqrt(ab)
    for &(a, b) in &[(1.5, 1.5), (0.3, 0.1), (0.9, 0.2), (2.0, 0.0)] {
        let rho = spectral_radius(&[vec![0.0, a], vec![b, 0.0]]);
        assert!((rho - (a * b).sqrt()).abs() < 1e-9, "{a} {b}: {rho}");
    }
}

#[test]
fn spectral_radius_of_a_three_cycle() {
    // cyclic permutation scaled by c has every eigenvalue of modulus c
    let c = 0.7;
    let m = vec![vec![0.0, c, 0.0], vec![0.0, 0.0, c], vec![c, 0.0, 0.0]];
    assert!((spectral_radius(&m) - c).abs() < 1e-9);
}

#[test]
fn radius_exactly_one_is_rejected() {
    assert!(!validate(&two(1.0, 1.0)).is_ok());
}

#[test]
fn each_invariant_is_reported_with_location() {
    let mut spec = bundled::case2();
    spec.subsystems[0].c1 = 0.0;
    spec.subsystems[1].alpha = 1.5;
    spec.subsystems[1].d2_low = 5.0;
    spec.subsystems[0].s_own = 0;
    spec.couplings.push(CouplingSpec { dest: "A".into(), origin: "Z".into(), d_coef: 0.1 });
    let report = validate(&spec);
    let text: Vec<String> = report.issues.iter().map(|i| format!("{} {}", i.location, i.message)).collect();
    assert!(text.iter().any(|t| t.contains("(A)") && t.contains("c1")));
    assert!(text.iter().any(|t| t.contains("(B)") && t.contains("alpha")));
    assert!(text.iter().any(|t| t.contains("(B)") && t.contains("d2_low")));
    assert!(text.iter().any(|t| t.contains("s_own")));
    assert!(text.iter().any(|t| t.contains("unknown origin")));
}

#[test]
fn duplicate_pairs_and_self_loops_are_rejected() {
    let mut spec = bundled::case2();
    spec.couplings.push(CouplingSpec { dest: "A".into(), origin: "B".into(), d_coef: 0.1 });
    spec.couplings.push(CouplingSpec { dest: "B".into(), origin: "B".into(), d_coef: 0.1 });
    let report = validate(&spec);
    assert!(report.issues.iter().any(|i| i.message.contains("duplicate coupling")));
    assert!(report.issues.iter().any(|i| i.message.contains("must differ")));
}

#[test]
fn validate_is_pure() {
    let spec = two(1.5, 1.5);
    assert_eq!(validate(&spec), validate(&spec));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = bundled::CASE2.replacen("\"seed\"", "\"colour\": 1, \"seed\"", 1);
    assert!(ProblemSpec::from_json(&text).is_err());
    let text = bundled::CASE2.replacen("\"s_own\": 8 }", "\"s_own\": 8, \"x\": 0 }", 1);
    assert!(ProblemSpec::from_json(&text).is_err());
}

#[test]
fn optional_keys_take_defaults() {
    let text = r#"{"subsystems":[{"id":"A","c1":1,"c2":2,"alpha":0.9,"d1":1,"d2_low":1,"d2_high":2,"s_own":3}],"couplings":[]}"#;
    let spec = ProblemSpec::from_json(text).unwrap();
    assert_eq!(spec.saa_fraction, 0.05);
    assert_eq!(spec.smoothing_eps, 1e-8);
    assert_eq!(spec.seed, 0);
    let back = ProblemSpec::from_json(&spec.to_json().unwrap()).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn single_subsystem_without_couplings_validates() {
    let spec = ProblemSpec::new(
        vec![SubsystemSpec {
            id: "solo".into(),
            c1: 1.0,
            c2: 1.5,
            alpha: 1.0,
            d1: 0.0,
            d2_low: 0.0,
            d2_high: 0.0,
            s_own: 1,
        }],
        vec![],
    );
    assert!(validate(&spec).is_ok());
}
