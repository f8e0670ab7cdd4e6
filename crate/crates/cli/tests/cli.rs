use std::process::{Command, Output};

fn fpkhom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpkhom"))
        .args(args)
        .output()
        .expect("run fpkhom")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn matrix_rows(out: &str) -> Vec<Vec<f64>> {
    out.lines()
        .filter(|l| l.starts_with('['))
        .map(|l| {
            l.trim_matches(|c| c == '[' || c == ']')
                .split_whitespace()
                .map(|v| v.parse().unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn usage_errors_exit_2() {
    for args in [vec!["frobnicate"], vec!["check-cordes", "identity", "--bogus"], vec![]] {
        let o = fpkhom(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("Usage"), "{args:?}: {}", stderr(&o));
    }
    for args in [
        vec!["check-cordes", "no-such-problem"],
        vec!["invariant", "identity", "--setting", "c", "--mesh", "8"],
        vec!["corrector", "identity", "--setting", "a", "--mesh", "8", "-j", "3"],
        vec!["nonhomogeneous", "identity", "--setting", "a", "--mesh", "8", "--rhs", "wave"],
    ] {
        let o = fpkhom(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("invalid value"), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn configuration_errors_exit_2() {
    let cases = [
        vec!["invariant", "identity", "--setting", "a", "--mesh", "1"],
        vec!["invariant", "setting-b-paper", "--setting", "a", "--mesh", "8"],
        vec!["check-cordes", "identity", "--grid", "1"],
        vec!["effective-matrix", "identity", "--setting", "a", "--mesh", "8", "--quad-order", "4"],
        vec!["convergence", "--config", "/nonexistent/study.json"],
    ];
    for args in cases {
        let o = fpkhom(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
}

#[test]
fn effective_matrix_identity_is_identity() {
    for setting in ["a", "b"] {
        let o = fpkhom(&["effective-matrix", "identity", "--setting", setting, "--mesh", "16"]);
        assert!(o.status.success());
        let rows = matrix_rows(&stdout(&o));
        assert_eq!(rows.len(), 2);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn check_cordes_paper_b() {
    let o = fpkhom(&["check-cordes", "setting-b-paper", "--grid", "64"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "admissible"));
    assert!(out.contains("admissible_b         true"));
}

#[test]
fn subcommands_run() {
    let runs = [
        vec!["invariant", "setting-a-paper", "--setting", "a", "--mesh", "8"],
        vec!["invariant", "setting-b-paper", "--setting", "b", "--mesh", "9"],
        vec!["corrector", "setting-a-paper", "--setting", "a", "--mesh", "8", "-j", "2"],
        vec!["corrector", "setting-b-paper", "--setting", "b", "--mesh", "8", "-j", "1"],
        vec!["nonhomogeneous", "identity", "--setting", "a", "--mesh", "8", "--rhs", "cos-mode"],
        vec!["nonhomogeneous", "setting-b-paper", "--setting", "b", "--mesh", "8", "--rhs", "constant:1,2"],
    ];
    for args in runs {
        let o = fpkhom(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        assert!(stdout(&o).contains("solve: "), "{args:?}");
    }
    let o = fpkhom(&["nonhomogeneous", "identity", "--setting", "a", "--mesh", "16", "--rhs", "cos-mode"]);
    assert!(stdout(&o).contains("l2_error"));
}

#[test]
fn convergence_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &config,
        format!(
            r#"{{"problem": "setting-a-paper", "setting": "a", "mesh_list": [4, 8, 16],
                "norms": ["L2", "abar"], "output_dir": "{}"}}"#,
            out_dir.display()
        ),
    )
    .unwrap();
    let o = fpkhom(&["convergence", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("N,h,norm,value,parity"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    let svg = std::fs::read_to_string(out_dir.join("convergence.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.matches("<polyline").count() == 4);
    assert!(stdout(&o).contains("rate L2"));
}

#[test]
fn invalid_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"problem": "identity", "setting": "a", "norms": ["L2"], "meshes": [1]}"#).unwrap();
    let o = fpkhom(&["convergence", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
