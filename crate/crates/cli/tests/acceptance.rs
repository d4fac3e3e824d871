//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output; exits non-zero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mdecomp::data::{load_iris, sample_logistic_mixture_5};
use mdecomp::kde::{
    default_grid, ise, sample_sech2_bimodal, sech2_bimodal_density, silverman_bandwidth,
};
use mdecomp::kmeans::kmeans;
use mdecomp::metrics::adjusted_rand_index;
use mdecomp::stats::{moments_of, unit_ball_volume};
use mdecomp::verify::{
    check_lemma_1, check_lemma_2_4_sweep, check_spherical_covariance, check_theorem_3, compare_kl,
    sample_two_blobs, two_blob_models, DensityFamily, PartitionStrategy, RELATIVE_TOL,
};
use mdecomp::{
    min_pseudo_volume_bound, mixture_kde, pseudo_volume, split_merge_cluster, ClusteringConfig,
    CovarianceDivisor, DataMatrix, KdeConfig,
};

type Outcome = Result<String, String>;

fn iris_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.data")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pv(data: &DataMatrix, idx: &[usize]) -> f64 {
    pseudo_volume(&moments_of(data, idx, CovarianceDivisor::Unbiased).unwrap())
        .unwrap()
        .value()
}

fn iris_clusters() -> Outcome {
    let iris = load_iris(iris_path()).map_err(|e| e.to_string())?;
    let mut k3 = 0;
    let mut exact = 0;
    let mut slowest = 0.0f64;
    for seed in 0..10 {
        let t = Instant::now();
        let tree = split_merge_cluster(&iris.data, &ClusteringConfig::with_seed(seed))
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let mut sizes = tree.sizes();
        sizes.sort_unstable();
        if tree.k == 3 {
            k3 += 1;
        }
        if sizes == [45, 50, 55] {
            exact += 1;
        }
    }
    check(
        k3 >= 8 && exact >= 1 && slowest < 10.0,
        format!("k=3 on {k3}/10 seeds, 50:45:55 on {exact}/10, slowest run {slowest:.2}s"),
    )
}

fn iris_pseudo_volumes() -> Outcome {
    let iris = load_iris(iris_path()).map_err(|e| e.to_string())?;
    let labels = iris.labels.as_ref().unwrap();
    let class = |c: usize| -> Vec<usize> { (0..150).filter(|&i| labels[i] == c).collect() };
    let (v1, v2) = (class(1), class(2));
    let merged: Vec<usize> = v1.iter().chain(&v2).copied().collect();
    let true_sum = pv(&iris.data, &v1) + pv(&iris.data, &v2);
    let merged_pv = pv(&iris.data, &merged);
    let within = |x: f64, target: f64| (x - target).abs() <= 0.03 * target;

    let tree = split_merge_cluster(&iris.data, &ClusteringConfig::with_seed(0))
        .map_err(|e| e.to_string())?;
    let setosa = tree.labels[0];
    let recovered_sum: f64 = tree
        .clusters
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != setosa)
        .map(|(_, c)| c.pseudo_volume)
        .sum();
    check(
        within(true_sum, 0.01587) && within(merged_pv, 0.01799) && recovered_sum <= true_sum,
        format!(
            "true-label sum {true_sum:.6}, merged {merged_pv:.6}, recovered sum {recovered_sum:.6}"
        ),
    )
}

fn logistic_recovery_and_kmeans() -> (Outcome, Outcome) {
    let t = Instant::now();
    let (mut k5, mut reached, mut wins) = (0, 0, 0);
    let mut failures = Vec::new();
    for seed in 0..25 {
        let ds = sample_logistic_mixture_5(100, seed).unwrap();
        let truth = ds.labels.as_ref().unwrap();
        let tree = match split_merge_cluster(&ds.data, &ClusteringConfig::with_seed(seed)) {
            Ok(t) => t,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        if tree.k == 5 {
            k5 += 1;
        }
        if tree.undecomposable_count() >= 5 {
            reached += 1;
        }
        let km = kmeans(&ds.data, 5, seed).unwrap();
        let a = adjusted_rand_index(&tree.labels, truth).unwrap();
        let b = adjusted_rand_index(&km.labels, truth).unwrap();
        if a > b {
            wins += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let recovery = check(
        failures.is_empty() && k5 >= 20 && reached == 25 && secs < 30.0,
        format!(
            "k=5 in {k5}/25 runs, >=5 undecomposable after splitting in {reached}/25, {secs:.2}s total{}",
            if failures.is_empty() { String::new() } else { format!(", errors: {failures:?}") }
        ),
    );
    let kmeans = check(
        wins >= 20,
        format!("split-merge adjusted Rand above k-means in {wins}/25 paired runs"),
    );
    (recovery, kmeans)
}

fn kde_improvement() -> Outcome {
    let mut wins = 0;
    for seed in 0..25 {
        let data = sample_sech2_bimodal(1000, seed);
        let x = data.as_column().unwrap();
        let mixture = mixture_kde(x, &KdeConfig::default()).map_err(|e| e.to_string())?;
        let single = mixture_kde(x, &KdeConfig::single()).map_err(|e| e.to_string())?;
        let grid = default_grid(x, silverman_bandwidth(x).unwrap()).unwrap();
        let a = ise(&mixture, sech2_bimodal_density, &grid).unwrap();
        let b = ise(&single, sech2_bimodal_density, &grid).unwrap();
        if a < b {
            wins += 1;
        }
    }
    check(
        wins * 10 >= 25 * 9,
        format!("mixture ISE below single-bandwidth ISE in {wins}/25 runs"),
    )
}

fn subadditivity() -> Outcome {
    let reports = check_lemma_2_4_sweep(100_000, 0).map_err(|e| e.to_string())?;
    let (general, equal) = (&reports[0], &reports[1]);
    check(
        general.trials >= 100_000
            && general.violations == 0
            && equal.violations == 0
            && equal.worst_margin.abs() <= RELATIVE_TOL,
        format!("{general}; {equal}"),
    )
}

fn spherical_uniform() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for d in 1..=3 {
        let r = check_spherical_covariance(d, 1.0, 100_000, 0).map_err(|e| e.to_string())?;
        ok &= r.passed();
        details.push(r.to_string());
    }
    let cube = 1.0 / 12.0;
    let bound2 = min_pseudo_volume_bound(1.0, 2).unwrap();
    ok &= cube > bound2 && (bound2 - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15;
    let bound1 = min_pseudo_volume_bound(1.0, 1).unwrap();
    ok &= (bound1 - 1.0 / 12f64.sqrt()).abs() < 1e-12;
    let ball =
        |rng: &mut mdecomp::sampling::SeededRng| mdecomp::sampling::uniform_ball_point(rng, 3, 1.0);
    let r = check_lemma_1(ball, 1.0 / unit_ball_volume(3), 3, 100_000, 0).unwrap();
    ok &= r.passed();
    details.push(format!("cube d=2 {cube:.5} > {bound2:.5}"));
    details.push(format!("interval bound {bound1:.12} vs 1/sqrt(12)"));
    details.push(r.to_string());
    check(ok, details.join("; "))
}

fn unimodal_partitions() -> Outcome {
    let mut ok = true;
    let mut trials = 0;
    let mut worst = f64::INFINITY;
    let mut failing = Vec::new();
    for family in [DensityFamily::Gaussian, DensityFamily::LogisticElliptical] {
        for d in [1, 2, 4] {
            for strategy in [PartitionStrategy::Hyperplane, PartitionStrategy::Em] {
                let r = check_theorem_3(family, d, strategy, 50, d as u64)
                    .map_err(|e| e.to_string())?;
                trials += r.trials;
                worst = worst.min(r.worst_margin);
                if !r.passed() {
                    ok = false;
                    failing.push(r.to_string());
                }
            }
        }
    }
    check(
        ok,
        format!(
            "{trials} partitions, worst ratio {:.4} (floor 0.9){}",
            0.9 + worst,
            if failing.is_empty() {
                String::new()
            } else {
                format!(", failing: {failing:?}")
            }
        ),
    )
}

fn mixture_kl_gain() -> Outcome {
    let (single, mixture) = two_blob_models();
    let kl =
        compare_kl(sample_two_blobs, &single, &mixture, 100_000, 0).map_err(|e| e.to_string())?;
    check(
        kl.delta > 5.0 * kl.stderr,
        format!(
            "delta {:.4}, stderr {:.2e}, {:.0} standard errors",
            kl.delta,
            kl.stderr,
            kl.delta / kl.stderr
        ),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mdecomp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?} exited with {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr)
        ))
    }
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("mdecomp-acceptance-{}", std::process::id()));
    let iris = iris_path();
    let iris = iris.to_str().unwrap();
    let sim = dir.join("sim");
    run_cli(&["simulate", "logistic5", "--n", "60", "--seed", "4"], &sim)?;
    let sim_csv = sim.join("data.csv");
    let sim_csv = sim_csv.to_str().unwrap();
    let runs: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["cluster", "--iris", iris, "--seed", "3", "--plot"],
            "labels.json",
        ),
        (
            vec![
                "cluster",
                "--simulate",
                "logistic5",
                "--n",
                "100",
                "--seed",
                "7",
            ],
            "labels.json",
        ),
        (vec!["cluster", sim_csv, "--seed", "1"], "labels.json"),
        (
            vec!["kmeans", "--iris", iris, "--k", "3", "--seed", "2"],
            "labels.json",
        ),
        (
            vec!["kmeans", sim_csv, "--k", "5", "--seed", "9"],
            "labels.json",
        ),
        (
            vec![
                "kde",
                "--simulate",
                "sech2",
                "--n",
                "1000",
                "--seed",
                "3",
                "--true-density",
                "sech2",
            ],
            "curves.csv",
        ),
        (vec!["verify", "theorem4", "--seed", "5"], "report.json"),
    ];
    let mut compared = Vec::new();
    for (i, (args, file)) in runs.iter().enumerate() {
        let a = dir.join(format!("run{i}a"));
        let b = dir.join(format!("run{i}b"));
        run_cli(args, &a)?;
        run_cli(args, &b)?;
        for f in [*file, "summary.txt", "scatter.svg"] {
            let (pa, pb) = (a.join(f), b.join(f));
            if !pa.exists() && f != *file {
                continue;
            }
            let (x, y) = (std::fs::read(&pa), std::fs::read(&pb));
            match (x, y) {
                (Ok(x), Ok(y)) if x == y => compared.push(f.to_string()),
                _ => {
                    let _ = std::fs::remove_dir_all(&dir);
                    return Err(format!("{args:?}: {f} differs between runs"));
                }
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{} subcommand runs repeated, {} output files byte-identical",
        runs.len(),
        compared.len()
    ))
}

fn main() {
    let (logistic, kmeans_cmp) = logistic_recovery_and_kmeans();
    let results: Vec<(&str, Outcome)> = vec![
        ("Iris cluster count and proportions", iris_clusters()),
        ("Iris pseudo-volume figures", iris_pseudo_volumes()),
        ("logistic 5-mixture recovery", logistic),
        ("k-means inferiority", kmeans_cmp),
        ("mixture KDE improvement", kde_improvement()),
        ("subadditivity oracle", subadditivity()),
        (
            "pseudo-volume floor and uniform-ball covariance",
            spherical_uniform(),
        ),
        ("unimodal partition ratios", unimodal_partitions()),
        ("mixture KL gain", mixture_kl_gain()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
