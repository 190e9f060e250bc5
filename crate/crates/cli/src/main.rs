use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vmono::catalog::Catalog;
use vmono_cli::output::{self, Format};
use vmono_cli::suite::{self, RunSpec, TheoremId};
use vmono_cli::{CliError, THREADS_ENV};

#[derive(Parser)]
#[command(name = "vmono", version, about = "Check geometric inequalities on sampled catalog surfaces")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the surface catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run theorems on surfaces over a resolution ladder.
    Run(RunArgs),
    /// Re-render a saved report bundle.
    Report {
        /// Directory holding `reports.json`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: Format,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// Names, kinds and curvatures of the catalog surfaces.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Surface names (comma separated); all catalog surfaces by default.
    #[arg(long, value_delimiter = ',')]
    surfaces: Vec<String>,
    /// Theorem ids (comma separated); every applicable theorem by default.
    #[arg(long, value_delimiter = ',')]
    theorems: Vec<TheoremId>,
    /// Nodes per parameter axis, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    resolutions: Vec<usize>,
    /// Write `reports.json` (and the chosen format) here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: Format,
    /// Multiplies every report tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Radii per axis of the monotonicity grids.
    #[arg(long, default_value_t = 10)]
    grid: usize,
    /// Ball refinement depth.
    #[arg(long)]
    depth: Option<u32>,
    /// Catalog file to use instead of the bundled one.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("vmono: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Catalog { action: CatalogAction::List } => {
            for e in Catalog::bundled().entries() {
                println!("{:<22} {:<20} b={:<5} dim={}", e.name, format!("{:?}", e.kind), e.b, e.dim);
            }
            Ok(0)
        }
        Command::Run(args) => run(args),
        Command::Report { input, format } => {
            let path = input.join("reports.json");
            let json = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            print!("{}", output::render(&json, format)?);
            Ok(0)
        }
    }
}

fn load_catalog(path: Option<&Path>) -> Result<Catalog, CliError> {
    match path {
        None => Ok(Catalog::bundled()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Catalog::from_toml(&text).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn run(args: RunArgs) -> Result<u8, CliError> {
    let catalog = load_catalog(args.catalog.as_deref())?;
    let mut spec = RunSpec::default_suite(&catalog);
    if !args.surfaces.is_empty() {
        spec.surfaces = args.surfaces;
    }
    if !args.theorems.is_empty() {
        spec.theorems = args.theorems;
        spec.only_applicable = false;
    }
    if !args.resolutions.is_empty() {
        spec.resolutions = args.resolutions;
    }
    spec.tol_scale = args.tol_scale;
    spec.grid = args.grid;
    if let Some(d) = args.depth {
        spec.refine.max_depth = d;
    }
    let bundle = suite::run(&spec, &catalog)?;
    let json = output::to_json(&bundle)?;
    let rendered = output::render(&json, args.format)?;
    match args.out {
        Some(dir) => {
            let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
            fs::create_dir_all(&dir).map_err(io)?;
            fs::write(dir.join("reports.json"), &json).map_err(io)?;
            if args.format != Format::Json {
                fs::write(dir.join(format!("reports.{}", args.format.extension())), &rendered).map_err(io)?;
            }
        }
        None => print!("{rendered}"),
    }
    let violations = bundle.violations();
    if violations > 0 {
        eprintln!("vmono: {violations} violation(s) under satisfied hypotheses");
        return Ok(1);
    }
    Ok(0)
}
