mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mdecomp::cluster::EventKind;
use mdecomp::data::{
    load_iris, read_csv, sample_logistic_mixture_5, write_csv, write_json, write_labels_json,
    LabeledDataset,
};
use mdecomp::kde::{
    default_grid, ise, sample_sech2_bimodal, sech2_bimodal_density, silverman_bandwidth,
};
use mdecomp::kmeans::kmeans;
use mdecomp::metrics::adjusted_rand_index;
use mdecomp::verify::{run_suite, InequalityReport};
use mdecomp::{
    mixture_kde, split_merge_cluster, ClusterTree, ClusteringConfig, DataMatrix, KdeConfig,
};

#[derive(Parser)]
#[command(
    name = "mdecomp",
    version,
    about = "Pseudo-volume clustering and density estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split-merge clustering with an automatically chosen number of clusters.
    Cluster(ClusterArgs),
    /// Mixture kernel density estimate of one-dimensional data.
    Kde(KdeArgs),
    /// Lloyd's k-means with k-means++ seeding.
    Kmeans(KmeansArgs),
    /// Numerical checks of the underlying inequalities.
    Verify(VerifyArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "mdecomp-out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointSimulation {
    Logistic5,
}

#[derive(Args)]
struct Input {
    /// Numeric CSV, one point per row.
    input: Option<PathBuf>,
    /// The CSV starts with a header row.
    #[arg(long)]
    header: bool,
    /// A file in the UCI iris.data format.
    #[arg(long, conflicts_with = "input")]
    iris: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with_all = ["input", "iris"])]
    simulate: Option<PointSimulation>,
    /// Points per component for --simulate.
    #[arg(long, default_value_t = 100)]
    n: usize,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    tau_s: f64,
    #[arg(long, default_value_t = -0.05, allow_negative_numbers = true)]
    tau_m: f64,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct KmeansArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Density {
    Sech2,
}

#[derive(Args)]
struct KdeArgs {
    /// One-column numeric CSV.
    input: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, conflicts_with = "input")]
    simulate: Option<Density>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Report integrated squared errors against this density.
    #[arg(long, value_enum)]
    true_density: Option<Density>,
    /// Only the single-bandwidth estimate.
    #[arg(long)]
    no_split: bool,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    tau_s: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// lemma1, lemma24, theorem3, theorem4, spherical-cov or all.
    suite: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mdecomp-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Simulation {
    Logistic5,
    Sech2,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    which: Simulation,
    /// Points per component for logistic5, total points for sech2.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mdecomp-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Cluster(args) => cmd_cluster(args),
        Command::Kde(args) => cmd_kde(args),
        Command::Kmeans(args) => cmd_kmeans(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn load_input(input: &Input, seed: u64) -> Result<LabeledDataset> {
    if let Some(path) = &input.iris {
        return load_iris(path).with_context(|| format!("reading {}", path.display()));
    }
    if let Some(PointSimulation::Logistic5) = input.simulate {
        return Ok(sample_logistic_mixture_5(input.n, seed)?);
    }
    let Some(path) = &input.input else {
        bail!("no input: give a CSV path, --iris or --simulate");
    };
    let data =
        read_csv(path, input.header).with_context(|| format!("reading {}", path.display()))?;
    Ok(LabeledDataset::unlabeled(data))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn truth_line(ds: &LabeledDataset, labels: &[usize]) -> Result<Option<String>> {
    let Some(truth) = &ds.labels else {
        return Ok(None);
    };
    let ari = adjusted_rand_index(labels, truth)?;
    Ok(Some(format!(
        "adjusted Rand index vs known classes: {ari:.4}"
    )))
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or("-".to_string(), |r| format!("{r:.6}"))
}

fn tree_summary(tree: &ClusterTree) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "k = {}", tree.k);
    let sizes: Vec<String> = tree.sizes().iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "sizes: {}", sizes.join(":"));
    for (label, c) in tree.clusters.iter().enumerate() {
        let _ = writeln!(
            s,
            "cluster {label} (id {}): size {}, pseudo-volume {:.6e}",
            c.id, c.size, c.pseudo_volume
        );
    }
    if !tree.events.is_empty() {
        let _ = writeln!(
            s,
            "undecomposable after splitting: {}",
            tree.undecomposable_count()
        );
        let _ = writeln!(s, "events:");
    }
    for e in &tree.events {
        let kind = match e.kind {
            EventKind::Split => "split",
            EventKind::Merge => "merge",
        };
        let ids: Vec<String> = e.clusters.iter().map(ToString::to_string).collect();
        let verdict = if e.accepted { "accepted" } else { "rejected" };
        let _ = writeln!(
            s,
            "  {kind} [{}] ratio {} {verdict}",
            ids.join(", "),
            fmt_ratio(e.ratio)
        );
    }
    s
}

fn emit_tree(ds: &LabeledDataset, tree: &ClusterTree, common: &Common, title: &str) -> Result<()> {
    prepare_out(&common.out)?;
    write_labels_json(tree, common.out.join("labels.json"))?;
    let mut summary = tree_summary(tree);
    if let Some(line) = truth_line(ds, &tree.labels)? {
        let _ = writeln!(summary, "{line}");
    }
    write_text(&common.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    if common.plot {
        let (xc, yc) = svg::projection(&ds.data);
        let title = match xc {
            Some(x) => format!("{title} (columns {x} and {yc})"),
            None => title.to_string(),
        };
        write_text(
            &common.out.join("scatter.svg"),
            &svg::scatter(&ds.data, &tree.labels, &title),
        )?;
    }
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<ExitCode> {
    let ds = load_input(&args.input, args.common.seed)?;
    let cfg = ClusteringConfig {
        tau_s: args.tau_s,
        tau_m: args.tau_m,
        min_cluster_size: args.min_cluster_size,
        ..ClusteringConfig::with_seed(args.common.seed)
    };
    let tree = split_merge_cluster(&ds.data, &cfg)?;
    emit_tree(&ds, &tree, &args.common, "split-merge clusters")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_kmeans(args: KmeansArgs) -> Result<ExitCode> {
    let ds = load_input(&args.input, args.common.seed)?;
    let fit = kmeans(&ds.data, args.k, args.common.seed)?;
    let tree =
        ClusterTree::from_labels(&ds.data, &fit.labels, ClusteringConfig::default().divisor)?;
    emit_tree(&ds, &tree, &args.common, "k-means clusters")?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct KdeReport<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    mixture: Option<&'a mdecomp::KdeModel>,
    single: &'a mdecomp::KdeModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    ise_mixture: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ise_single: Option<f64>,
}

fn cmd_kde(args: KdeArgs) -> Result<ExitCode> {
    let common = &args.common;
    let data = match (&args.input, args.simulate) {
        (_, Some(Density::Sech2)) => sample_sech2_bimodal(args.n, common.seed),
        (Some(path), None) => {
            read_csv(path, args.header).with_context(|| format!("reading {}", path.display()))?
        }
        (None, None) => bail!("no input: give a CSV path or --simulate sech2"),
    };
    if data.d() != 1 {
        bail!("kde requires 1-D data, got {} columns", data.d());
    }
    let x = data.as_column()?;
    let single = mixture_kde(x, &KdeConfig::single())?;
    let mixture = if args.no_split {
        None
    } else {
        Some(mixture_kde(
            x,
            &KdeConfig {
                tau_s: args.tau_s,
                ..KdeConfig::default()
            },
        )?)
    };
    let grid = default_grid(x, silverman_bandwidth(x)?)?;
    let truth = args
        .true_density
        .map(|Density::Sech2| sech2_bimodal_density);

    let mut columns: Vec<(&str, Vec<f64>)> = Vec::new();
    if let Some(m) = &mixture {
        columns.push(("mixture", m.eval_grid(&grid)));
    }
    columns.push(("single", single.eval_grid(&grid)));
    if let Some(f) = truth {
        columns.push(("true", grid.iter().map(|&g| f(g)).collect()));
    }

    prepare_out(&common.out)?;
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|(name, _)| *name));
    let mut values = Vec::with_capacity(grid.len() * header.len());
    for (i, g) in grid.iter().enumerate() {
        values.push(*g);
        values.extend(columns.iter().map(|(_, c)| c[i]));
    }
    let table = DataMatrix::new(grid.len(), header.len(), values)?;
    write_csv(&table, Some(&header), common.out.join("curves.csv"))?;

    let mut summary = String::new();
    let _ = writeln!(summary, "n = {}", x.len());
    let _ = writeln!(
        summary,
        "single bandwidth: {:.6}",
        single.segments[0].bandwidth
    );
    if let Some(m) = &mixture {
        let _ = writeln!(summary, "mixture segments: {}", m.segments.len());
        for s in &m.segments {
            let _ = writeln!(
                summary,
                "  points {}..{}: weight {:.4}, bandwidth {:.6}",
                s.lo, s.hi, s.weight, s.bandwidth
            );
        }
    }
    let (mut ise_mixture, mut ise_single) = (None, None);
    if let Some(f) = truth {
        let e_single = ise(&single, f, &grid)?;
        let _ = writeln!(summary, "ISE single: {e_single:.6e}");
        ise_single = Some(e_single);
        if let Some(m) = &mixture {
            let e_mix = ise(m, f, &grid)?;
            let _ = writeln!(summary, "ISE mixture: {e_mix:.6e}");
            let verdict = if e_mix < e_single {
                "lower"
            } else {
                "not lower"
            };
            let _ = writeln!(summary, "mixture ISE is {verdict} than single");
            ise_mixture = Some(e_mix);
        }
    }
    write_text(&common.out.join("summary.txt"), &summary)?;
    write_json(
        &KdeReport {
            mixture: mixture.as_ref(),
            single: &single,
            ise_mixture,
            ise_single,
        },
        common.out.join("model.json"),
    )?;
    print!("{summary}");
    if common.plot {
        let series: Vec<(&str, &[f64])> = columns.iter().map(|(n, c)| (*n, c.as_slice())).collect();
        write_text(
            &common.out.join("curves.svg"),
            &svg::curves(&grid, &series, "kernel density estimates"),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let reports: Vec<InequalityReport> = run_suite(&args.suite, args.trials, args.seed)?;
    prepare_out(&args.out)?;
    write_json(&reports, args.out.join("report.json"))?;
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        println!("{failed} of {} checks reported violations", reports.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    prepare_out(&args.out)?;
    match args.which {
        Simulation::Logistic5 => {
            let ds = sample_logistic_mixture_5(args.n.unwrap_or(100), args.seed)?;
            write_csv(&ds.data, None, args.out.join("data.csv"))?;
            let labels = ds.labels.unwrap_or_default();
            write_json(
                &serde_json::json!({ "labels": labels }),
                args.out.join("truth.json"),
            )?;
            println!("wrote {} points", ds.data.n());
        }
        Simulation::Sech2 => {
            let data = sample_sech2_bimodal(args.n.unwrap_or(1000), args.seed);
            write_csv(&data, None, args.out.join("data.csv"))?;
            println!("wrote {} points", data.n());
        }
    }
    Ok(ExitCode::SUCCESS)
}
