use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracspec"))
        .args(args)
        .env("FRACSPEC_THREADS", "2")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn vertex_count(path: &Path) -> usize {
    json(path)["vertices"].as_array().unwrap().len()
}

#[test]
fn sierpinski_levels_have_the_expected_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "generate",
        "--preset",
        "sierpinski",
        "--m-range",
        "0..3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut graphs: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("graph_"))
        .collect();
    graphs.sort();
    assert_eq!(
        graphs,
        [
            "graph_m0.json",
            "graph_m1.json",
            "graph_m2.json",
            "graph_m3.json"
        ]
    );
    for m in 0..4u32 {
        let want = 3 * (3usize.pow(m) + 1) / 2;
        assert_eq!(
            vertex_count(&dir.path().join(format!("graph_m{m}.json"))),
            want
        );
        assert_eq!(
            vertex_count(&dir.path().join(format!("metric_m{m}.json"))),
            want
        );
    }
    assert!(!fs::read_dir(dir.path())
        .unwrap()
        .any(|e| e.unwrap().path().extension().unwrap() == "tmp"));
}

#[test]
fn interval_second_level_is_a_path_on_five_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "generate",
        "--preset",
        "interval",
        "--m-range",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let g = json(&dir.path().join("graph_m2.json"));
    assert_eq!(g["vertices"].as_array().unwrap().len(), 5);
    assert_eq!(g["edges"].as_array().unwrap().len(), 4);
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        &["generate", "--preset", "koch", "--out", out][..],
        &[
            "generate",
            "--preset",
            "interval",
            "--m-range",
            "3..1",
            "--out",
            out,
        ],
        &["generate", "--out", out],
        &["converge", "--preset", "interval", "--k", "0", "--out", out],
        &[
            "generate", "--preset", "interval", "--case", "sideways", "--out", out,
        ],
        &["mfd-params", "--config", "/nonexistent/system.json"],
    ] {
        let o = run(args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn user_systems_are_read_from_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sys.json");
    fs::write(
        &cfg,
        r#"{"N":3,"N0":3,"theta":"1/2","r":"3/5","gamma0":[1,1,1],"gluing":[[0,1,1,0],[0,2,2,0],[1,2,2,1]]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--m-range",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(vertex_count(&out.join("graph_m2.json")), 15);
}

#[test]
fn converge_is_byte_deterministic_and_tracks_tau() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        run(&[
            "converge",
            "--preset",
            "sierpinski",
            "--m-range",
            "0..2",
            "--k",
            "3",
            "--seed",
            "11",
            "--assert",
            "--out",
            d.to_str().unwrap(),
        ])
    };
    let (oa, ob) = (args(a.path()), args(b.path()));
    assert!(
        oa.status.success(),
        "{}",
        String::from_utf8_lossy(&oa.stderr)
    );
    assert_eq!(oa.stdout, ob.stdout);
    for name in [
        "convergence.csv",
        "decay.json",
        "report_m0.json",
        "report_m1.json",
        "report_m2.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = fs::read_to_string(a.path().join("convergence.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "tau").unwrap();
    for (m, line) in csv.lines().skip(1).enumerate() {
        let tau: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!((tau - 3.0 * 1.25f64.powi(m as i32)).abs() < 1e-12);
    }
    let report = json(&a.path().join("report_m2.json"));
    assert_eq!(report["tauExact"], "75/16");
}

#[test]
fn parameter_table_lists_three_cases() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "mfd-params",
        "--preset",
        "sierpinski",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("E* = 1/5 |"));
    let rows = json(&dir.path().join("mfd_params.json"));
    let cases: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["case"].as_str().unwrap())
        .collect();
    assert_eq!(cases, ["geometric", "inverse-weight", "unit-tau"]);
    assert_eq!(rows[0]["eps_window"], serde_json::json!(["1/10", "1/2"]));
    assert_eq!(
        fs::read_to_string(dir.path().join("mfd_params.txt")).unwrap(),
        text
    );
}
