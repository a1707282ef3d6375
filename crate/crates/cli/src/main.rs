//! `qo2`: exact diagonalization, DMRG, parameter sweeps and finite-size-scaling
//! analysis for the truncated quantum O(2) chain.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qo2::analyze::{run_analysis, write_report, AnalysisSpec};
use qo2::mps::DmrgSettings;
use qo2::observables::{measure_point, EngineConfig, ObservablePoint, DEFAULT_DELTA};
use qo2::sweep::{run_plan, RecordStore, RunOptions, SweepPlan};
use qo2::synth::SynthSpec;
use qo2::{fmt12, ChainSpec, Error, ModelVariant, CODE_VERSION};

const USAGE: u8 = 1;
const SOLVER: u8 = 2;
const ANALYSIS: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qo2", version, about = "Fidelity susceptibility and entanglement derivatives of the truncated quantum O(2) chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact diagonalization of a short chain: E0, S_vN, chi_F and S'.
    Ed(PointArgs),
    /// DMRG ground states at D and D + delta.
    Dmrg {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 1e-10)]
        epsilon: f64,
        #[arg(long, default_value_t = 1024)]
        max_bond: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate every grid point of a sweep plan into a record store.
    Sweep(SweepArgs),
    /// Peaks, crossings and scaling fits from a record store.
    Analyze {
        /// Analysis spec (TOML).
        spec: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic record store from closed-form scaling laws.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export every record of a store, sorted, as CSV.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PointArgs {
    #[arg(long, default_value = "u", value_parser = ["u", "ladder", "u-jz"])]
    variant: String,
    #[arg(long, allow_hyphen_values = true)]
    jz: Option<f64>,
    #[arg(long = "S")]
    spin: u32,
    #[arg(long = "L")]
    length: usize,
    #[arg(long = "D", allow_hyphen_values = true)]
    d: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Directory for `point.json` and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep plan (TOML).
    plan: PathBuf,
    /// Record store directory; defaults to the plan's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    window: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many new points.
    #[arg(long)]
    stop_after: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure { code: USAGE, message: e.to_string() }
    }

    /// Input problems are usage errors; everything else gets `code`.
    fn from_error(e: Error, code: u8) -> Self {
        let code = match e {
            Error::InvalidSpec(_) | Error::InvalidInput(_) | Error::Parse { .. } | Error::EmptySector { .. } => USAGE,
            _ => code,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    let argv: Vec<String> = std::env::args().collect();
    match command {
        Command::Ed(p) => {
            let spec = point_spec(&p)?;
            let point = measure_point(&spec, p.delta, &EngineConfig::Ed).map_err(|e| Failure::from_error(e, SOLVER))?;
            print_point(&point);
            if let Some(out) = &p.out {
                write_point(out, &point, &argv, json!({ "engine": "ed" }), None)?;
            }
            Ok(())
        }
        Command::Dmrg { point: p, epsilon, max_bond, seed } => {
            let spec = point_spec(&p)?;
            let mut settings = DmrgSettings { epsilon, max_bond, ..DmrgSettings::default() };
            if let Some(s) = seed {
                settings.seed = s;
            }
            settings.validate().map_err(Failure::usage)?;
            let engine = EngineConfig::Dmrg(settings.clone());
            let point = measure_point(&spec, p.delta, &engine).map_err(|e| Failure::from_error(e, SOLVER))?;
            print_point(&point);
            if let Some(out) = &p.out {
                write_point(out, &point, &argv, serde_json::to_value(&engine).unwrap_or_default(), Some(settings.seed))?;
            }
            Ok(())
        }
        Command::Sweep(args) => sweep(args, &argv),
        Command::Analyze { spec, store, out } => {
            let analysis = AnalysisSpec::load(&spec).map_err(Failure::usage)?;
            let store = RecordStore::open_existing(&store).map_err(|e| Failure::from_error(e, ANALYSIS))?;
            let report = run_analysis(&store, &analysis).map_err(|e| Failure::from_error(e, ANALYSIS))?;
            let files = write_report(&report, &out).map_err(|e| Failure::from_error(e, ANALYSIS))?;
            write_manifest(&out, &argv, json!({ "analysis": analysis, "store": store.root() }), None)?;
            print!("{}", qo2::analyze::report_text(&report));
            println!("\nwrote {} report files to {}", files.len(), out.display());
            Ok(())
        }
        Command::Synth { spec, out } => {
            let synth = SynthSpec::load(&spec).map_err(Failure::usage)?;
            let store = RecordStore::open(&out).map_err(|e| Failure::from_error(e, SOLVER))?;
            let n = synth.write(&store).map_err(|e| Failure::from_error(e, SOLVER))?;
            write_manifest(&out, &argv, json!({ "synth": synth }), None)?;
            println!("wrote {n} synthetic records to {}", out.display());
            Ok(())
        }
        Command::Export { store, out } => {
            let store = RecordStore::open_existing(&store).map_err(|e| Failure::from_error(e, ANALYSIS))?;
            let records = qo2::sweep::sorted(store.load_all().map_err(|e| Failure::from_error(e, ANALYSIS))?);
            let path = out.unwrap_or_else(|| store.root().join("compact.csv"));
            qo2::sweep::write_csv(&records, &path).map_err(|e| Failure::from_error(e, ANALYSIS))?;
            println!("exported {} records to {}", records.len(), path.display());
            Ok(())
        }
    }
}

fn point_spec(p: &PointArgs) -> Result<ChainSpec, Failure> {
    let variant = ModelVariant::from_tag(&p.variant, p.jz).map_err(Failure::usage)?;
    if !(p.delta > 0.0 && p.delta.is_finite()) {
        return Err(Failure::usage(format!("--delta must be positive, got {}", p.delta)));
    }
    ChainSpec::new(variant, p.spin, p.length, p.d).map_err(Failure::usage)
}

fn print_point(p: &ObservablePoint) {
    println!("variant    {}", p.spec.variant.label());
    println!("S          {}", p.spec.spin.value());
    println!("L          {}", p.spec.length);
    println!("D          {}", fmt12(p.spec.d));
    println!("delta      {}", fmt12(p.delta));
    println!("E0         {}", fmt12(p.energy));
    println!("S_vN       {}", fmt12(p.entropy));
    println!("fidelity   {}", fmt12(p.fidelity));
    println!("1-F        {}", fmt12(p.infidelity));
    println!("chi_F      {}", fmt12(p.chi_f));
    println!("S'_vN      {}", fmt12(p.entropy_derivative));
    if p.quality.max_bond > 0 {
        println!("max_bond   {}", p.quality.max_bond);
        println!("converged  {}", p.quality.converged);
    }
}

fn write_point(
    dir: &Path,
    point: &ObservablePoint,
    argv: &[String],
    config: serde_json::Value,
    seed: Option<u64>,
) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure { code: SOLVER, message: e.to_string() })?;
    let text = serde_json::to_string_pretty(point).map_err(|e| Failure { code: SOLVER, message: e.to_string() })?;
    std::fs::write(dir.join("point.json"), text).map_err(|e| Failure { code: SOLVER, message: e.to_string() })?;
    write_manifest(dir, argv, config, seed)
}

fn write_manifest(dir: &Path, argv: &[String], config: serde_json::Value, seed: Option<u64>) -> Result<(), Failure> {
    let manifest = json!({
        "code_version": CODE_VERSION,
        "argv": argv,
        "seed": seed,
        "config": config,
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    let io = |e: std::io::Error| Failure { code: SOLVER, message: format!("cannot write manifest: {e}") };
    std::fs::create_dir_all(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text).map_err(io)
}

fn sweep(args: SweepArgs, argv: &[String]) -> Result<(), Failure> {
    let mut plan = SweepPlan::load(&args.plan).map_err(Failure::usage)?;
    if let Some(step) = args.grid_step {
        plan.grid_step = step;
    }
    if let Some(delta) = args.delta {
        plan.delta = delta;
    }
    if let Some(w) = &args.window {
        plan.window = [w[0], w[1]];
    }
    match (&mut plan.engine, args.epsilon, args.seed) {
        (EngineConfig::Dmrg(s), eps, seed) => {
            if let Some(e) = eps {
                s.epsilon = e;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
        }
        (EngineConfig::Ed, Some(_), _) => return Err(Failure::usage("--epsilon applies to DMRG plans only")),
        (EngineConfig::Ed, None, _) => {}
    }
    plan.validate().map_err(Failure::usage)?;
    if args.workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    let root = args
        .out
        .clone()
        .or_else(|| plan.output.clone())
        .ok_or_else(|| Failure::usage("no store directory: pass --out or set 'output' in the plan"))?;
    let store = RecordStore::open(&root).map_err(|e| Failure::from_error(e, SOLVER))?;
    let seed = match &plan.engine {
        EngineConfig::Dmrg(s) => Some(s.seed),
        EngineConfig::Ed => None,
    };
    write_manifest(&root, argv, json!({ "plan": plan, "workers": args.workers, "resume": args.resume }), seed)?;
    let opts = RunOptions { workers: args.workers, resume: args.resume, stop_after: args.stop_after };
    let summary = run_plan(&plan, &store, &opts).map_err(|e| Failure::from_error(e, SOLVER))?;
    println!(
        "plan {}: {} points, {} present, {} pending, {} computed, {} not converged, {} failed",
        summary.plan_id,
        summary.total,
        summary.already_present,
        summary.pending,
        summary.computed,
        summary.not_converged,
        summary.failed.len()
    );
    for f in &summary.failed {
        eprintln!("  failed L = {} D = {}: {}", f.length, fmt12(f.d), f.error);
    }
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: SOLVER, message: format!("{} points failed", summary.failed.len()) })
    }
}
