//! `canonplan`: plan a cellular network on a canonical domain.
//!
//! Subcommands mirror the pipeline phases so the expensive parameter solve
//! can be cached and reused: `solve-map` runs the solve alone, `plan` runs
//! all four phases, `analyze` sweeps the uniform canonical load over site
//! counts, and `emit` regenerates plot data from a finished run directory.
//!
//! Exit codes: 0 success, 2 validation/input error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use canonplan::pipeline::{
    analyze_sweep, emit_plot_data, run_pipeline, sha256_hex, AnalyzeOptions, EmitKind,
    PipelineError, RunOptions, ALPHA_TABLE_FILE, MANIFEST_FILE, STRIPMAP_FILE,
};
use canonplan::scenario::{Scenario, ScenarioError};
use canonplan::scmap::{solve_strip_parameters, MapOptions, StripMap};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "CANONPLAN_OUT";

#[derive(Parser)]
#[command(
    name = "canonplan",
    version,
    about = "Plans cellular networks by conformally mapping a polygonal \
             service area onto a canonical rectangle"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario document (JSON)
    scenario: PathBuf,
    /// Output directory (default: scenario's out_dir, then $CANONPLAN_OUT/<name>,
    /// then runs/<name>)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the polygon-to-rectangle map and cache it as stripmap.json
    SolveMap {
        #[command(flatten)]
        common: ScenarioArg,
    },
    /// Run the full four-phase pipeline and write all artifacts
    Plan {
        #[command(flatten)]
        common: ScenarioArg,
        /// Seed for the internal Monte-Carlo self-check (default: derived
        /// from the scenario digest)
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's grid resolution
        #[arg(long)]
        grid: Option<usize>,
        /// Comma-separated plot-data kinds to emit: mapping-grid,
        /// load-pattern, cdf, sites (default: all)
        #[arg(long, value_delimiter = ',')]
        emit: Option<Vec<String>>,
        /// Reuse a cached stripmap.json instead of re-solving
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Sweep the uniform canonical load over the scenario's site counts
    Analyze {
        #[command(flatten)]
        common: ScenarioArg,
        /// Override the scenario's grid resolution
        #[arg(long)]
        grid: Option<usize>,
        /// Reuse a cached stripmap.json instead of re-solving
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Regenerate plot data from an existing run directory
    Emit {
        /// Directory holding a previous run's artifacts
        run_dir: PathBuf,
        /// Comma-separated kinds to regenerate (default: all)
        #[arg(long, value_delimiter = ',')]
        kind: Option<Vec<String>>,
        /// Destination directory (default: the run directory itself)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Numerical { .. } => ExitCode::from(3),
                PipelineError::Scenario(_) | PipelineError::Io { .. } => ExitCode::from(2),
            }
        }
    }
}

/// Reads, hashes, and validates the scenario document.
fn load_scenario(path: &Path) -> Result<(Scenario, String, PathBuf), PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let sc = Scenario::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((sc, sha256_hex(&bytes), base))
}

/// `--out` wins, then the scenario's own `out_dir`, then the environment
/// root, then `runs/`; the last two get a per-scenario subdirectory.
fn resolve_out_dir(flag: Option<PathBuf>, sc: &Scenario, scenario_path: &Path) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Some(dir) = &sc.out_dir {
        return PathBuf::from(dir);
    }
    let name = sc
        .name
        .clone()
        .or_else(|| {
            scenario_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "scenario".to_string());
    match std::env::var(OUT_ENV) {
        Ok(root) if !root.is_empty() => PathBuf::from(root).join(name),
        _ => PathBuf::from("runs").join(name),
    }
}

fn parse_kinds(raw: Option<Vec<String>>) -> Result<Option<Vec<EmitKind>>, PipelineError> {
    let Some(raw) = raw else { return Ok(None) };
    let mut kinds = Vec::with_capacity(raw.len());
    for s in raw {
        let kind = s
            .parse::<EmitKind>()
            .map_err(ScenarioError::Invalid)?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(Some(kinds))
}

fn load_cached_map(path: Option<PathBuf>) -> Result<Option<StripMap>, PipelineError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    let map = StripMap::from_json(&text)
        .map_err(|e| ScenarioError::Invalid(format!("cached map {}: {e}", path.display())))?;
    Ok(Some(map))
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.cmd {
        Cmd::SolveMap { common } => {
            let (sc, _, _) = load_scenario(&common.scenario)?;
            let quad = sc.quadrilateral()?;
            let map = solve_strip_parameters(&quad, &MapOptions::default()).map_err(|e| {
                PipelineError::Numerical {
                    phase: "map",
                    cause: e.to_string(),
                }
            })?;
            let out_dir = resolve_out_dir(common.out, &sc, &common.scenario);
            fs::create_dir_all(&out_dir).map_err(|source| PipelineError::Io {
                path: out_dir.clone(),
                source,
            })?;
            let path = out_dir.join(STRIPMAP_FILE);
            let json = map
                .to_json()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            fs::write(&path, json).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            println!("module m(Q) = {:.9}", map.module());
            println!("map cached at {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Plan {
            common,
            seed,
            grid,
            emit,
            map,
        } => {
            let (sc, hash, base) = load_scenario(&common.scenario)?;
            let out_dir = resolve_out_dir(common.out, &sc, &common.scenario);
            let opts = RunOptions {
                out_dir: out_dir.clone(),
                base_dir: base,
                scenario_sha256: hash,
                seed,
                grid,
                emit: parse_kinds(emit)?,
                cached_map: load_cached_map(map)?,
            };
            let man = run_pipeline(&sc, &opts)?;
            if let Some(m) = man.module {
                println!("module m(Q) = {m:.9}");
            }
            if let Some(note) = &man.snap_note {
                println!("{note}");
            }
            if let (Some(a), Some(c)) = (man.alpha_c, man.correlation) {
                println!("uniform canonical load = {a:.6}");
                println!("canonical-physical load correlation = {c:.6}");
            }
            match &man.failure {
                Some(f) => {
                    eprintln!("phase {} failed: {}", f.phase, f.cause);
                    eprintln!(
                        "partial artifacts and {} retained in {}",
                        MANIFEST_FILE,
                        out_dir.display()
                    );
                    Ok(ExitCode::from(3))
                }
                None => {
                    println!(
                        "{} artifacts in {}",
                        man.files.len() + 1,
                        out_dir.display()
                    );
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Cmd::Analyze { common, grid, map } => {
            let (sc, _, _) = load_scenario(&common.scenario)?;
            let out_dir = resolve_out_dir(common.out, &sc, &common.scenario);
            let rows = analyze_sweep(
                &sc,
                &AnalyzeOptions {
                    out_dir: out_dir.clone(),
                    grid,
                    cached_map: load_cached_map(map)?,
                },
            )?;
            let feasible = rows.iter().filter(|r| r.alpha_c.is_some()).count();
            println!(
                "{} rows ({} feasible) in {}",
                rows.len(),
                feasible,
                out_dir.join(ALPHA_TABLE_FILE).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Emit { run_dir, kind, out } => {
            let kinds = parse_kinds(kind)?.unwrap_or_else(|| EmitKind::ALL.to_vec());
            let out_dir = out.unwrap_or_else(|| run_dir.clone());
            for kind in kinds {
                let path = emit_plot_data(&run_dir, kind, &out_dir)?;
                println!("{kind}: {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
