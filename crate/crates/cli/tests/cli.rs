use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mdecomp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdecomp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn labels(path: &Path) -> Vec<usize> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    serde_json::from_value(v["labels"].clone()).unwrap()
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdecomp(&["cluster", "missing.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        mdecomp(&["verify", "bogus"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn usage_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        mdecomp(&["cluster", "--tau-s", "abc"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdecomp(&["verify", "lemma24", "--trials", "2000"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v[0]["violations"], 0);
    assert!(v[0]["trials"].as_u64().unwrap() >= 2000);
}

#[test]
fn kde_rejects_multi_column_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    fs::write(&csv, "0,1\n2,3\n4,5\n").unwrap();
    let out = mdecomp(&["kde", csv.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kde requires 1-D data"));
}

#[test]
fn kde_curves_and_ise() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdecomp(
        &[
            "kde",
            "--simulate",
            "sech2",
            "--n",
            "1000",
            "--seed",
            "3",
            "--true-density",
            "sech2",
            "--plot",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("mixture ISE is lower than single"),
        "{stdout}"
    );
    let text = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,mixture,single,true"));
    let xs: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(xs.len(), 2048);
    assert!(xs.windows(2).all(|w| w[0] < w[1]));
    let svg = fs::read_to_string(dir.path().join("curves.svg")).unwrap();
    assert!(svg.contains("<polyline") && svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("href"));
}

#[test]
fn kde_no_split_has_single_curve() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let values: Vec<String> = (0..50)
        .map(|i| format!("{}", (i * 37 % 50) as f64 / 7.0))
        .collect();
    fs::write(&csv, values.join("\n")).unwrap();
    let out = mdecomp(&["kde", csv.to_str().unwrap(), "--no-split"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x,single"));
}

#[test]
fn kmeans_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    fs::write(&csv, "0,0\n1,0\n0,1\n5,5\n6,5\n").unwrap();
    let path = csv.to_str().unwrap();

    let one = dir.path().join("k1");
    assert!(mdecomp(&["kmeans", path, "--k", "1"], &one)
        .status
        .success());
    assert_eq!(labels(&one.join("labels.json")), vec![0; 5]);

    let all = dir.path().join("k5");
    assert!(mdecomp(&["kmeans", path, "--k", "5"], &all)
        .status
        .success());
    assert_eq!(labels(&all.join("labels.json")), vec![0, 1, 2, 3, 4]);

    let too_many = dir.path().join("k6");
    assert_eq!(
        mdecomp(&["kmeans", path, "--k", "6"], &too_many)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn kmeans_reports_agreement_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdecomp(
        &["kmeans", "--simulate", "logistic5", "--k", "5", "--plot"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("adjusted Rand index"));
    assert!(dir.path().join("scatter.svg").exists());
}

#[test]
fn cluster_iris_matches_published_proportions() {
    let dir = tempfile::tempdir().unwrap();
    let iris = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.data");
    let out = mdecomp(
        &[
            "cluster",
            "--iris",
            iris.to_str().unwrap(),
            "--tau-s",
            "0.05",
            "--tau-m",
            "-0.05",
            "--seed",
            "1",
            "--plot",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("k = 3\nsizes: 50:45:55\n"), "{summary}");
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("labels.json")).unwrap()).unwrap();
    for key in ["k", "labels", "events", "clusters"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["events"][0]["type"], "split");
    let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 150 + 3);
    assert!(svg.contains("columns 0 and 2"), "projection legend");
}

#[test]
fn cluster_simulated_logistic() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdecomp(
        &[
            "cluster",
            "--simulate",
            "logistic5",
            "--n",
            "100",
            "--seed",
            "7",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("k = 5\n"), "{summary}");
}

#[test]
fn simulate_then_cluster_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(
        mdecomp(&["simulate", "logistic5", "--n", "80", "--seed", "2"], &sim)
            .status
            .success()
    );
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["labels"].as_array().unwrap().len(), 400);
    let run = dir.path().join("run");
    let csv = sim.join("data.csv");
    assert!(mdecomp(&["cluster", csv.to_str().unwrap()], &run)
        .status
        .success());
    assert_eq!(labels(&run.join("labels.json")).len(), 400);
}
