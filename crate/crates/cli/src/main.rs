//! `pwit`: simulate invasion percolation on point sets, run verification
//! suites and export histograms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use pwit::boxes::{build_box_forest, decompose_ponds, pond_statistics, ponds_csv, BoxForest, OutletPolicy};
use pwit::gw::QVariant;
use pwit::ipc::{boxes_from_tree, run_ipc_sequential, BoxRecord, IpcTree};
use pwit::pointset::{generate, GeneratorSpec, IntervalSpec};
use pwit::stationary::{extract_ipc_minus, stabilize, StabilizationPolicy};
use pwit::statkit::{self, deterministic_sweep, lookup, run_campaign, Campaign, StatReport, REGISTRY};
use pwit::tree::{neighborhood_census, Census};
use pwit::{rng, Error};

#[derive(Parser, Debug)]
#[command(name = "pwit", version, about = "Invasion percolation on point sets and the PWIT")]
struct Cli {
    /// Base seed; replica `i` uses an independent substream of it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for replica loops (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one Poisson window and write its tree, box forest and ponds.
    Simulate(SimulateArgs),
    /// Run a verification suite and write one report per estimand.
    Verify(VerifyArgs),
    /// Turn a report into `bin,count` rows plus a reference-law sidecar.
    ExportHist(ExportArgs),
    /// Boxes and the containment forest of one window.
    Boxes(BoxesArgs),
    /// Stabilize a target range of the two-sided process and write the audit log.
    Stabilize(StabilizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Suite {
    Deterministic,
    Distributions,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Window `[0, width]`.
    #[arg(long, default_value_t = 100)]
    width: i64,
    /// Points are generated up to this height.
    #[arg(long, default_value_t = 3.0)]
    cap: f64,
    /// An outlet is certified once a later step reaching it is less likely than this.
    #[arg(long, default_value_t = 1e-6)]
    outlet_prob: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::Distributions)]
    suite: Suite,
    /// Comma-separated estimand names (default: all registered).
    #[arg(long, alias = "estimand", value_delimiter = ',')]
    estimands: Vec<String>,
    /// Replicas per estimand (default: the documented count; 10^4 windows for the deterministic suite).
    #[arg(long)]
    replicas: Option<u64>,
    /// Window width of the deterministic sweep.
    #[arg(long, default_value_t = 50)]
    width: i64,
    /// Height cap of the deterministic sweep.
    #[arg(long, default_value_t = 5.0)]
    cap: f64,
    /// Restrict the q-map adjudication to one variant.
    #[arg(long)]
    q_variant: Option<QVariant>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    /// A report written by `verify`, or a bare report.
    #[arg(long)]
    input: PathBuf,
    /// Output path (default: next to the input).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export only the report with this bin label.
    #[arg(long)]
    bin: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct BoxesArgs {
    #[arg(long, default_value_t = 100)]
    width: i64,
    #[arg(long, default_value_t = 3.0)]
    cap: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct StabilizeArgs {
    /// Target vertices `lo..hi`, inclusive.
    #[arg(long, default_value = "-32..31", allow_hyphen_values = true, value_parser = parse_range)]
    target: (i64, i64),
    /// Independent windows to stabilize.
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    /// Radius of the `IPC^-` neighbourhood census around 0.
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long, default_value_t = 3.0)]
    cap: f64,
    #[arg(long, default_value_t = 4)]
    margin_factor: u64,
    #[arg(long, default_value_t = 20)]
    max_doublings: u32,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|e| format!("bad lower end `{a}`: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("bad upper end `{b}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// Exit codes shared by all subcommands.
enum Failure {
    Statistical(String),
    Config(String),
    Kernel(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Statistical(_) => 1,
            Failure::Config(_) => 2,
            Failure::Kernel(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Statistical(m) | Failure::Config(m) | Failure::Kernel(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Config(e.to_string()),
            Error::UnknownEstimand(_)
            | Error::NonPositiveCap(_)
            | Error::EmptyInterval { .. }
            | Error::InfiniteInterval
            | Error::TooManyPoints { .. }
            | Error::BadSigma(_)
            | Error::Malformed { .. } => Failure::Config(e.to_string()),
            _ => Failure::Kernel(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("values serialize") + "\n"
}

fn csv_with_config(config: &Value, body: &str) -> String {
    format!("# config: {config}\n{body}")
}

struct Ctx {
    seed: u64,
    threads: usize,
}

impl Ctx {
    fn config(&self, command: &str, args: &impl Serialize) -> Value {
        json!({"command": command, "seed": self.seed, "threads": self.threads, "args": args})
    }
}

fn window(ctx: &Ctx, width: i64, cap: f64) -> Result<(pwit::pointset::PointSet, IpcTree), Failure> {
    if width < 1 {
        return Err(Failure::Config(format!("--width must be at least 1, got {width}")));
    }
    let interval = IntervalSpec::finite(0, width);
    let ps = generate(&GeneratorSpec::poisson(ctx.seed, interval), cap)?;
    let tree = run_ipc_sequential(&ps, interval)
        .map_err(|e| Failure::Kernel(format!("{e}; rerun with a larger --cap")))?;
    Ok((ps, tree))
}

fn tree_csv(tree: &IpcTree) -> String {
    let mut s = String::from("vertex,parent,weight,x\n");
    for n in tree.lo + 1..=tree.hi {
        let p = tree.chosen_point(n);
        let _ = writeln!(s, "{n},{},{},{}", tree.parent_of(n), p.y, p.x);
    }
    s
}

fn forest_csv(boxes: &[BoxRecord], forest: &BoxForest) -> String {
    let mut s = String::from("vertex,ell,h,top_x,top_y,parent_box,component\n");
    for b in boxes {
        let a = forest.a(b.n).map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{a},{}", b.n, b.ell, b.h, b.top_point.x, b.top_point.y, forest.component(b.n));
    }
    s
}

fn forest_json(boxes: &[BoxRecord], forest: &BoxForest) -> Value {
    json!({"boxes": boxes, "forest": forest})
}

fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<(), Failure> {
    let config = ctx.config("simulate", args);
    let (ps, tree) = window(ctx, args.width, args.cap)?;
    let boxes = boxes_from_tree(&tree);
    let forest = build_box_forest(&boxes, ps.interval());
    let bd = decompose_ponds(&ps, ps.interval(), OutletPolicy::Probability(args.outlet_prob))?;
    let ponds = pond_statistics(&bd);
    ensure_dir(&args.out)?;
    let files = match args.format {
        Format::Csv => [
            ("ipc_tree.csv", csv_with_config(&config, &tree_csv(&tree))),
            ("box_forest.csv", csv_with_config(&config, &forest_csv(&boxes, &forest))),
            ("ponds.csv", csv_with_config(&config, &ponds_csv(&ponds))),
        ],
        Format::Json => [
            ("ipc_tree.json", pretty(&json!({"config": config, "tree": tree.to_json()}))),
            ("box_forest.json", pretty(&json!({"config": config, "box_forest": forest_json(&boxes, &forest)}))),
            ("ponds.json", pretty(&json!({"config": config, "outlets": bd.outlets, "ponds": ponds}))),
        ],
    };
    let mut written = Vec::new();
    for (name, body) in &files {
        let path = args.out.join(name);
        write(&path, body)?;
        written.push(path.display().to_string());
    }
    println!("{}", json!({"config": config, "points": ps.len(), "ponds": ponds.len(), "files": written}));
    Ok(())
}

fn boxes(ctx: &Ctx, args: &BoxesArgs) -> Result<(), Failure> {
    let config = ctx.config("boxes", args);
    let (ps, tree) = window(ctx, args.width, args.cap)?;
    let boxes = boxes_from_tree(&tree);
    let forest = build_box_forest(&boxes, ps.interval());
    let body = match args.format {
        Format::Csv => csv_with_config(&config, &forest_csv(&boxes, &forest)),
        Format::Json => pretty(&json!({"config": config, "box_forest": forest_json(&boxes, &forest)})),
    };
    match &args.out {
        Some(path) => write(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn file_stem(estimand: &str) -> String {
    estimand.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn verify(ctx: &Ctx, args: &VerifyArgs) -> Result<(), Failure> {
    let config = ctx.config("verify", args);
    ensure_dir(&args.out)?;
    match args.suite {
        Suite::Deterministic => {
            if !args.estimands.is_empty() {
                return Err(Failure::Config("the deterministic suite takes no estimands".into()));
            }
            if args.width < 1 || args.cap <= 0.0 {
                return Err(Failure::Config("--width must be positive and --cap above zero".into()));
            }
            let windows = args.replicas.unwrap_or(10_000);
            let r = deterministic_sweep(windows, args.width, args.cap, ctx.seed);
            let pass = r.equivalence_ok() && r.structure_ok();
            write(&args.out.join("deterministic.json"), &pretty(&json!({"config": config, "pass": pass, "report": r})))?;
            println!("deterministic: {} ({} windows, {} exhausted)", if pass { "PASS" } else { "FAIL" }, r.windows, r.exhausted);
            if pass {
                Ok(())
            } else {
                Err(Failure::Statistical(format!("deterministic suite failed: {r:?}")))
            }
        }
        Suite::Distributions => {
            let names: Vec<String> = if args.estimands.is_empty() {
                REGISTRY.iter().map(|e| e.name.to_string()).collect()
            } else {
                args.estimands.clone()
            };
            for n in &names {
                lookup(n)?;
            }
            let mut failed = Vec::new();
            for name in &names {
                let index = REGISTRY.iter().position(|e| e.name == name).expect("looked up") as u64;
                let mut c = Campaign::documented(name, rng::derive(ctx.seed, &[index]))?;
                if let Some(r) = args.replicas {
                    c.replicas = r;
                }
                c.params.q_variant = args.q_variant;
                c.params.threads = ctx.threads;
                let out = run_campaign(&c)?;
                let pass = out.passed() && !out.reports.is_empty();
                let path = args.out.join(format!("{}.json", file_stem(name)));
                write(&path, &pretty(&json!({"config": config, "pass": pass, "outcome": out})))?;
                for r in &out.reports {
                    let bin = r.bin.as_deref().map(|b| format!(" {b}")).unwrap_or_default();
                    println!(
                        "{name}{bin}: {} {:?} {:.4} vs {} (n = {})",
                        if r.passed() { "PASS" } else { "FAIL" },
                        r.stat.kind,
                        r.stat.value,
                        r.stat.threshold,
                        r.n
                    );
                }
                for d in &out.dropped {
                    println!("{name}: dropped bin {:?} with {} samples", d.bin, d.samples);
                }
                if !pass {
                    failed.push(name.clone());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Statistical(format!("failed: {}", failed.join(", "))))
            }
        }
    }
}

/// Reports inside a `verify` output, a campaign outcome or a bare report.
fn read_reports(path: &Path) -> Result<Vec<StatReport>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let list = v.pointer("/outcome/reports").or_else(|| v.get("reports"));
    let parse = |r: &Value| {
        serde_json::from_value::<StatReport>(r.clone())
            .map_err(|e| Failure::Config(format!("{}: not a report: {e}", path.display())))
    };
    match list {
        Some(Value::Array(items)) => items.iter().map(parse).collect(),
        Some(_) => Err(Failure::Config(format!("{}: `reports` is not a list", path.display()))),
        None => Ok(vec![parse(&v)?]),
    }
}

fn export_hist(ctx: &Ctx, args: &ExportArgs) -> Result<(), Failure> {
    let config = ctx.config("export-hist", args);
    let mut reports = read_reports(&args.input)?;
    if let Some(bin) = &args.bin {
        reports.retain(|r| r.bin.as_deref() == Some(bin.as_str()));
        if reports.is_empty() {
            return Err(Failure::Config(format!("no report with bin `{bin}`")));
        }
    }
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let out = args.out.clone().unwrap_or_else(|| args.input.with_extension(format!("hist.{ext}")));
    let summary = |r: &StatReport| {
        json!({"estimand": r.estimand, "bin": r.bin, "n": r.n, "reference": r.reference, "stat": r.stat, "verdict": r.verdict})
    };
    match args.format {
        Format::Json => {
            let docs: Vec<Value> = reports
                .iter()
                .map(|r| {
                    let mut s = summary(r);
                    s["histogram"] = json!(r.histogram);
                    s
                })
                .collect();
            write(&out, &pretty(&json!({"config": config, "reports": docs})))?;
            println!("{}", out.display());
        }
        Format::Csv => {
            let paths: Vec<PathBuf> = if reports.len() <= 1 {
                vec![out.clone()]
            } else {
                let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (0..reports.len()).map(|k| out.with_file_name(format!("{stem}-{k}.csv"))).collect()
            };
            if reports.is_empty() {
                write(&paths[0], "bin,count\n")?;
            }
            for (r, p) in reports.iter().zip(&paths) {
                write(p, &r.histogram_csv())?;
            }
            let sidecar = out.with_extension("reference.json");
            let refs: Vec<Value> = reports
                .iter()
                .zip(&paths)
                .map(|(r, p)| {
                    let mut s = summary(r);
                    s["csv"] = json!(p.display().to_string());
                    s
                })
                .collect();
            write(&sidecar, &pretty(&json!({"config": config, "reports": refs})))?;
            for p in &paths {
                println!("{}", p.display());
            }
            println!("{}", sidecar.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditLine {
    replica: u64,
    vertex: i64,
    parent: i64,
    x: f64,
    y: f64,
    certificate: u32,
    parent_changes: u32,
    lundberg: f64,
    doublings: u32,
    extension_lo: i64,
}

fn stabilize_cmd(ctx: &Ctx, args: &StabilizeArgs) -> Result<(), Failure> {
    let config = ctx.config("stabilize", args);
    if args.cap <= 0.0 {
        return Err(Failure::Config(format!("--cap must be positive, got {}", args.cap)));
    }
    if args.target.0 > 0 || args.target.1 < 0 {
        return Err(Failure::Config("--target must contain vertex 0".into()));
    }
    let policy = StabilizationPolicy {
        margin_factor: args.margin_factor,
        max_doublings: args.max_doublings,
        cap: args.cap,
        ..StabilizationPolicy::default()
    };
    ensure_dir(&args.out)?;
    let results = statkit::par_map(args.replicas, ctx.threads, |i| {
        let seed = if args.replicas == 1 { ctx.seed } else { rng::replica_seed(ctx.seed, i) };
        stabilize(&GeneratorSpec::poisson(seed, IntervalSpec::integers()), args.target, &policy)
    });
    let mut audit = String::new();
    let mut census = Census::default();
    let mut windows = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        let sw = res?;
        for (k, n) in (sw.target.0..=sw.target.1).enumerate() {
            let line = AuditLine {
                replica: i as u64,
                vertex: n,
                parent: sw.parent[k],
                x: sw.chosen[k].x,
                y: sw.chosen[k].y,
                certificate: sw.certificate[k],
                parent_changes: sw.parent_changes[k],
                lundberg: sw.lundberg[k],
                doublings: sw.doublings,
                extension_lo: sw.extension_lo,
            };
            audit.push_str(&serde_json::to_string(&line).expect("audit lines serialize"));
            audit.push('\n');
        }
        let (minus, _) = extract_ipc_minus(&sw);
        census.add(neighborhood_census(&minus, 0, args.radius));
        windows.push(sw);
    }
    write(&args.out.join("stabilized.json"), &pretty(&json!({"config": config, "windows": windows})))?;
    write(&args.out.join("audit.jsonl"), &audit)?;
    write(&args.out.join("census.json"), &pretty(&json!({"config": config, "census": census.to_json()})))?;
    println!("{}", json!({"config": config, "windows": windows.len(), "out": args.out.display().to_string()}));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { seed: cli.seed, threads: cli.threads.unwrap_or_else(statkit::default_threads).max(1) };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Verify(a) => verify(&ctx, a),
        Command::ExportHist(a) => export_hist(&ctx, a),
        Command::Boxes(a) => boxes(&ctx, a),
        Command::Stabilize(a) => stabilize_cmd(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pwit: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
