use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use fracspec::exact::Surd;
use fracspec::manifold::{format_table, parameter_table};
use fracspec::metric::{LengthCase, PlanInput};
use fracspec::pcf::PcfSystem;
use fracspec::pipeline::{
    converge_level, convergence_csv, eigen_decay_ratios, fmt_num, generate, ConvergeOptions,
    QueReport,
};
use fracspec::Error;

#[derive(Parser)]
#[command(
    name = "fracspec",
    version,
    about = "Spectral approximation of pcf fractals by graphs and metric graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write level graphs and their metric graphs as JSON.
    Generate(RunArgs),
    /// Measure quasi-unitarity defects and eigenvalue convergence.
    Converge(ConvergeArgs),
    /// Print the graph-like manifold parameter table.
    MfdParams(SystemArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Built-in system: interval or sierpinski.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON file describing a pcf system.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Inclusive generation range such as `0..3`, or a single generation.
    #[arg(long, default_value = "0..3")]
    m_range: String,
    /// Length scaling: geometric, inverse-weight or unit-tau.
    #[arg(long)]
    case: Option<String>,
    /// Length ratio per generation, e.g. `3/5` or `sqrt(1/5)`.
    #[arg(long)]
    lambda: Option<String>,
    /// Generation-0 length of the unit-conductance edge.
    #[arg(long)]
    ell00: Option<String>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Target element size of the metric-graph mesh.
    #[arg(long)]
    mesh: Option<f64>,
    /// Number of eigenvalues compared.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Exit with status 4 if a measured defect exceeds its bound.
    #[arg(long = "assert")]
    assert_bounds: bool,
}

enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
    Violation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Violation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(s) | Failure::Numeric(s) | Failure::Io(s) | Failure::Violation(s) => s,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::SingularSystem(_)
            | Error::SolverFailure(_)
            | Error::DomainError(_)
            | Error::CompatibilityViolation { .. }
            | Error::IncompatibleWeights { .. } => Failure::Numeric(msg),
            _ => Failure::Config(msg),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_system(args: &SystemArgs) -> Outcome<PcfSystem> {
    match (&args.preset, &args.config) {
        (Some(name), None) => Ok(PcfSystem::preset(name)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Ok(PcfSystem::from_json(&value)?)
        }
        (None, None) => Err(Failure::Config(
            "one of --preset or --config is required".into(),
        )),
        (Some(_), Some(_)) => Err(Failure::Config(
            "--preset and --config are exclusive".into(),
        )),
    }
}

fn parse_range(text: &str) -> Outcome<Vec<u32>> {
    let bad = || Failure::Config(format!("bad generation range {text:?}"));
    let (lo, hi) = match text.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (text, text),
    };
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if hi < lo {
        return Err(Failure::Config(format!("empty generation range {text:?}")));
    }
    Ok((lo..=hi).collect())
}

fn plan_input(args: &RunArgs) -> Outcome<PlanInput> {
    let surd = |s: &Option<String>| s.as_deref().map(str::parse::<Surd>).transpose();
    let lambda = surd(&args.lambda)?;
    let ell00 = surd(&args.ell00)?;
    let case = match &args.case {
        Some(c) => c.parse::<LengthCase>()?,
        None if lambda.is_some() || ell00.is_some() => LengthCase::Custom,
        None => LengthCase::Geometric,
    };
    Ok(PlanInput {
        case,
        lambda,
        ell00,
    })
}

fn out_dir(args: &SystemArgs) -> Outcome<PathBuf> {
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("fracspec-out"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Outcome<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> Outcome<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::Numeric(e.to_string()))?;
    text.push('\n');
    write_atomic(path, &text)
}

fn cmd_generate(args: &RunArgs) -> Outcome<()> {
    let sys = load_system(&args.system)?;
    let ms = parse_range(&args.m_range)?;
    let input = plan_input(args)?;
    let dir = out_dir(&args.system)?;
    let counts = ms
        .par_iter()
        .map(|&m| -> Outcome<(u32, usize, usize)> {
            let g = generate(&sys, m, &input)?;
            write_json(&dir.join(format!("graph_m{m}.json")), &g.graph_json())?;
            write_json(&dir.join(format!("metric_m{m}.json")), &g.metric_json())?;
            Ok((m, g.mg.num_vertices(), g.mg.num_edges()))
        })
        .collect::<Outcome<Vec<_>>>()?;
    for (m, v, e) in counts {
        println!("m={m}: {v} vertices, {e} edges");
    }
    Ok(())
}

fn cmd_converge(args: &ConvergeArgs) -> Outcome<()> {
    let run = &args.run;
    let sys = load_system(&run.system)?;
    let ms = parse_range(&run.m_range)?;
    let input = plan_input(run)?;
    if args.k == 0 {
        return Err(Failure::Config("--k must be at least 1".into()));
    }
    if let Some(h) = args.mesh {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Failure::Config(format!("--mesh must be positive, got {h}")));
        }
    }
    let dir = out_dir(&run.system)?;
    let opts = ConvergeOptions {
        mesh: args.mesh,
        k: args.k,
        seed: args.seed,
    };
    let reports = ms
        .par_iter()
        .map(|&m| -> Outcome<QueReport> {
            let r = converge_level(&sys, m, &input, &opts)?;
            let value = serde_json::to_value(&r).map_err(|e| Failure::Numeric(e.to_string()))?;
            write_json(&dir.join(format!("report_m{m}.json")), &value)?;
            Ok(r)
        })
        .collect::<Outcome<Vec<_>>>()?;

    write_atomic(&dir.join("convergence.csv"), &convergence_csv(&reports))?;
    let ratios = eigen_decay_ratios(&reports);
    let fitted: Vec<Value> = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| json!({ "k": i + 1, "ratio": r }))
        .collect();
    write_json(
        &dir.join("decay.json"),
        &json!({ "eigenvalueDiffDecay": fitted }),
    )?;

    let mut violated = Vec::new();
    for r in &reports {
        println!(
            "m={}: delta={} jpj={} jjp={} opDefect={} hausdorff={}",
            r.m,
            fmt_num(r.delta_theoretical),
            fmt_num(r.measured.jpj),
            fmt_num(r.measured.jjp),
            fmt_num(r.measured.op_defect),
            fmt_num(r.eigen.hausdorff),
        );
        for c in r.violations() {
            violated.push(format!(
                "m={} {}: {} > {}",
                r.m,
                c.name,
                fmt_num(c.measured),
                fmt_num(c.bound)
            ));
        }
    }
    for (i, r) in ratios.iter().enumerate() {
        match r {
            Some(r) => println!("lambda_{} diff decay ratio {}", i + 1, fmt_num(*r)),
            None => println!("lambda_{} diff decay ratio unavailable", i + 1),
        }
    }
    for v in &violated {
        eprintln!("bound violated: {v}");
    }
    if args.assert_bounds && !violated.is_empty() {
        return Err(Failure::Violation(format!(
            "{} bound violation(s)",
            violated.len()
        )));
    }
    Ok(())
}

fn cmd_mfd_params(args: &SystemArgs) -> Outcome<()> {
    let sys = load_system(args)?;
    let rows = parameter_table(&sys)?;
    let table = format_table(&rows);
    print!("{table}");
    if args.out.is_some() {
        let dir = out_dir(args)?;
        write_atomic(&dir.join("mfd_params.txt"), &table)?;
        let value = Value::Array(rows.iter().map(|r| r.to_json()).collect());
        write_json(&dir.join("mfd_params.json"), &value)?;
    }
    Ok(())
}

fn init_threads() -> Outcome<()> {
    let Ok(text) = std::env::var("FRACSPEC_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .map_err(|_| Failure::Config(format!("FRACSPEC_THREADS={text:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Converge(a) => cmd_converge(a),
        Command::MfdParams(a) => cmd_mfd_params(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
