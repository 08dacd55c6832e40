//! The four-phase planning pipeline and its emitted artifacts.
//!
//! A run walks: (1) load or derive the demand field; (2) solve the conformal
//! map and its module; (3) place the site lattice on the planning rectangle,
//! dimensioning it first when a target load is given; (4) map the sites back
//! into the polygon, solve all three load patterns, and compare the domains.
//! Every artifact is written as soon as it exists, so a failed run keeps its
//! partial results, and the closing manifest records a content digest for
//! each file plus the failing phase and cause if any.
//!
//! All output is deterministic: the internal Monte-Carlo self-check draws
//! from a stream seeded by the scenario digest (overridable), and every
//! numeric path reduces in a fixed order regardless of thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{place_lattice, LinkModel, TorusLattice};
use crate::demand::{
    demand_cdf, field_from_csv, field_from_export, induced_density, preset_density, DemandField,
    Traffic,
};
use crate::geometry::{Point, Quadrilateral, RectangleDomain};
use crate::loadcoupling::{
    canonical_uniform_load, compare_domains, dimension_network, ComparisonInputs,
    FixedPointOptions, LoadError, ScenarioResult,
};
use crate::scenario::{DemandSource, Scenario, ScenarioError};
use crate::scmap::{solve_strip_parameters, ConformalMapPair, MapOptions, StripMap};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STRIPMAP_FILE: &str = "stripmap.json";
pub const DEMAND_GRID_FILE: &str = "demand_grid.csv";
pub const DEMAND_HEADER_FILE: &str = "demand_header.json";
pub const LATTICE_FILE: &str = "lattice.json";
pub const LOADS_PERIODIC_FILE: &str = "loads_periodic.csv";
pub const LOADS_CANONICAL_FILE: &str = "loads_canonical.csv";
pub const LOADS_PHYSICAL_FILE: &str = "loads_physical.csv";
pub const RESULT_FILE: &str = "scenario_result.json";
pub const ALPHA_TABLE_FILE: &str = "alpha_table.csv";

/// Samples drawn for the seeded round-trip self-check of the solved map.
const ROUNDTRIP_SAMPLES: usize = 200;
/// Relative round-trip error (against the rectangle diameter) that fails
/// the map phase.
const ROUNDTRIP_TOL: f64 = 1e-6;
/// Quantile resolution of the emitted demand CDF.
const CDF_BINS: usize = 200;
/// Grid curves per axis in the mapping-grid emission.
const GRID_LINES: usize = 11;
/// Samples along each emitted grid curve.
const LINE_SAMPLES: usize = 121;
/// Relative inset keeping emitted curves inside the open rectangle.
const EDGE_MARGIN: f64 = 1e-3;
/// Bisection tolerance for swept uniform loads.
const ALPHA_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical failure in {phase}: {cause}")]
    Numerical { phase: &'static str, cause: String },
}

fn io_err(path: PathBuf) -> impl FnOnce(std::io::Error) -> PipelineError {
    move |source| PipelineError::Io { path, source }
}

fn num_err<E: std::fmt::Display>(phase: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Numerical {
        phase,
        cause: e.to_string(),
    }
}

/// Plot-data kinds the pipeline can emit next to its core artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmitKind {
    MappingGrid,
    LoadPattern,
    Cdf,
    Sites,
}

impl EmitKind {
    pub const ALL: [EmitKind; 4] = [
        EmitKind::MappingGrid,
        EmitKind::LoadPattern,
        EmitKind::Cdf,
        EmitKind::Sites,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            EmitKind::MappingGrid => "mapping_grid.csv",
            EmitKind::LoadPattern => "load_pattern.csv",
            EmitKind::Cdf => "cdf.csv",
            EmitKind::Sites => "sites.csv",
        }
    }
}

impl std::fmt::Display for EmitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EmitKind::MappingGrid => "mapping-grid",
            EmitKind::LoadPattern => "load-pattern",
            EmitKind::Cdf => "cdf",
            EmitKind::Sites => "sites",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EmitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mapping-grid" => Ok(EmitKind::MappingGrid),
            "load-pattern" => Ok(EmitKind::LoadPattern),
            "cdf" => Ok(EmitKind::Cdf),
            "sites" => Ok(EmitKind::Sites),
            other => Err(format!(
                "unknown emit kind {other:?} (expected mapping-grid, load-pattern, cdf, or sites)"
            )),
        }
    }
}

/// Per-invocation knobs around a scenario document.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Root for resolving relative file references in the scenario.
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the scenario document; keys the default RNG seed and
    /// is echoed into the manifest.
    pub scenario_sha256: String,
    /// Explicit RNG seed; the default derives from the scenario digest.
    pub seed: Option<u64>,
    /// Override of the scenario's grid resolution.
    pub grid: Option<usize>,
    /// Plot-data kinds to emit; `None` emits all of them.
    pub emit: Option<Vec<EmitKind>>,
    /// Previously solved map to reuse instead of re-running the parameter
    /// solve; must match the scenario polygon exactly.
    pub cached_map: Option<StripMap>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>, scenario_sha256: impl Into<String>) -> Self {
        Self {
            out_dir: out_dir.into(),
            base_dir: PathBuf::from("."),
            scenario_sha256: scenario_sha256.into(),
            seed: None,
            grid: None,
            emit: None,
            cached_map: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

/// Wall-clock seconds per phase; phases that never ran stay at zero. These
/// are the only fields that differ between reruns of one scenario.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub demand_s: f64,
    pub map_s: f64,
    pub canonical_s: f64,
    pub compare_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseFailure {
    pub phase: String,
    pub cause: String,
}

/// The closing record of one pipeline run: headline results, timings, and a
/// content digest for every artifact the run wrote (the manifest itself is
/// excluded — it cannot contain its own digest).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub grid: usize,
    /// Solved conformal module m(Q).
    pub module: Option<f64>,
    /// Aspect ratio of the planning rectangle (module times the scenario's
    /// mismatch factor).
    pub planned_aspect: Option<f64>,
    /// Worst relative error of the seeded round-trip self-check.
    pub roundtrip_rel_worst: Option<f64>,
    pub sites_requested: Option<usize>,
    pub target_load: Option<f64>,
    /// Realized site count after lattice snapping / dimensioning.
    pub sites_planned: Option<usize>,
    pub snap_note: Option<String>,
    pub alpha_c: Option<f64>,
    pub correlation: Option<f64>,
    pub phases: PhaseTimings,
    pub files: BTreeMap<String, FileDigest>,
    pub failure: Option<PhaseFailure>,
}

impl RunManifest {
    fn new(scenario_sha256: String, seed: u64, grid: usize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_sha256,
            seed,
            grid,
            module: None,
            planned_aspect: None,
            roundtrip_rel_worst: None,
            sites_requested: None,
            target_load: None,
            sites_planned: None,
            snap_note: None,
            alpha_c: None,
            correlation: None,
            phases: PhaseTimings::default(),
            files: BTreeMap::new(),
            failure: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::Numerical {
            phase: "manifest",
            cause: e.to_string(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("hex formatting cannot fail");
    }
    out
}

/// Default seed: the leading 64 bits of the scenario digest.
fn seed_from_hash(hex: &str) -> u64 {
    let head: String = hex.chars().take(16).collect();
    u64::from_str_radix(&head, 16).unwrap_or(0)
}

/// Writes one artifact and records its digest.
fn put(
    man: &mut RunManifest,
    dir: &Path,
    name: &str,
    content: &str,
) -> Result<(), PipelineError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(io_err(path))?;
    man.files.insert(
        name.to_string(),
        FileDigest {
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len() as u64,
        },
    );
    Ok(())
}

/// Runs the full pipeline for one scenario.
///
/// Input problems (bad documents, unreadable demand files, mismatched map
/// caches) surface as `Err`; numerical failures inside the phases are
/// recorded in the returned manifest's `failure` field instead, with all
/// artifacts produced up to that point retained and digested.
pub fn run_pipeline(sc: &Scenario, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    let quad = sc.quadrilateral()?;
    let traffic = sc.traffic()?;
    let lm = sc.link_model()?;
    let grid = opts.grid.unwrap_or(sc.grid);
    if grid < 16 {
        return Err(ScenarioError::Invalid(format!(
            "grid override {grid} too coarse (need >= 16)"
        ))
        .into());
    }
    let emit = opts.emit.clone().unwrap_or_else(|| EmitKind::ALL.to_vec());
    let seed = opts.seed.unwrap_or_else(|| seed_from_hash(&opts.scenario_sha256));

    // Pre-flight: demand read from disk is an input, so its problems are
    // validation errors, not phase failures.
    let csv_field = match sc.demand_source() {
        DemandSource::Csv(rel) => {
            let path = opts.base_dir.join(&rel);
            let text = fs::read_to_string(&path).map_err(io_err(path.clone()))?;
            let field = field_from_csv(&text, &quad.polygon, grid, traffic)
                .map_err(|e| ScenarioError::Invalid(format!("demand csv {rel}: {e}")))?;
            Some(field)
        }
        DemandSource::Preset(_) => None,
    };
    if let Some(cache) = &opts.cached_map {
        let same = cache.quad().polygon.vertices() == quad.polygon.vertices()
            && cache.quad().corners() == quad.corners();
        if !same {
            return Err(ScenarioError::Invalid(
                "cached map was solved for a different polygon".to_string(),
            )
            .into());
        }
    }
    fs::create_dir_all(&opts.out_dir).map_err(io_err(opts.out_dir.clone()))?;

    let mut man = RunManifest::new(opts.scenario_sha256.clone(), seed, grid);
    man.sites_requested = sc.sites.l;
    man.target_load = sc.sites.target_load;

    let ctx = Ctx {
        sc,
        quad: &quad,
        traffic,
        lm,
        grid,
        emit: &emit,
        seed,
        out_dir: &opts.out_dir,
        cached_map: opts.cached_map.as_ref(),
    };
    match run_phases(&ctx, csv_field, &mut man) {
        Ok(()) => {}
        Err(PipelineError::Numerical { phase, cause }) => {
            man.failure = Some(PhaseFailure {
                phase: phase.to_string(),
                cause,
            });
        }
        Err(e) => return Err(e),
    }

    let manifest_path = opts.out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, man.to_json()).map_err(io_err(manifest_path.clone()))?;
    Ok(man)
}

struct Ctx<'a> {
    sc: &'a Scenario,
    quad: &'a Quadrilateral,
    traffic: Traffic,
    lm: LinkModel,
    grid: usize,
    emit: &'a [EmitKind],
    seed: u64,
    out_dir: &'a Path,
    cached_map: Option<&'a StripMap>,
}

impl Ctx<'_> {
    fn wants(&self, kind: EmitKind) -> bool {
        self.emit.contains(&kind)
    }
}

fn run_phases(
    ctx: &Ctx,
    csv_field: Option<DemandField>,
    man: &mut RunManifest,
) -> Result<(), PipelineError> {
    // The declared order is demand, map, canonical, compare; the induced
    // demand source is derived from the solved map, so the map phase runs
    // first in that one configuration.
    let induced = ctx.sc.demand_source() == DemandSource::Preset(crate::scenario::DemandSourceKind::Induced);
    let (pair, field) = if induced {
        let pair = phase_map(ctx, man)?;
        let field = phase_demand(ctx, Some(&pair), None, man)?;
        (pair, field)
    } else {
        let field = phase_demand(ctx, None, csv_field, man)?;
        let pair = phase_map(ctx, man)?;
        (pair, field)
    };
    let lat = phase_canonical(ctx, pair.module(), man)?;
    phase_compare(ctx, &pair, &lat, &field, man)
}

/// Phase 1: build the demand field and its exports.
fn phase_demand(
    ctx: &Ctx,
    pair: Option<&ConformalMapPair>,
    csv_field: Option<DemandField>,
    man: &mut RunManifest,
) -> Result<DemandField, PipelineError> {
    let t0 = Instant::now();
    let field = match (ctx.sc.demand_source(), csv_field) {
        (_, Some(field)) => field,
        (DemandSource::Preset(kind), None) => match Scenario::fixed_preset(kind) {
            Some(preset) => preset_density(preset, &ctx.quad.polygon, ctx.grid, ctx.traffic)
                .map_err(num_err("demand"))?,
            None => induced_density(
                pair.expect("map phase precedes induced demand"),
                ctx.grid,
                ctx.traffic,
            )
            .map_err(num_err("demand"))?,
        },
        (DemandSource::Csv(_), None) => unreachable!("csv demand is loaded pre-flight"),
    };
    put(man, ctx.out_dir, DEMAND_GRID_FILE, &field.to_csv())?;
    put(man, ctx.out_dir, DEMAND_HEADER_FILE, &field.header_json())?;
    if ctx.wants(EmitKind::Cdf) {
        put(man, ctx.out_dir, EmitKind::Cdf.file_name(), &cdf_csv(&field))?;
    }
    man.phases.demand_s = t0.elapsed().as_secs_f64();
    Ok(field)
}

/// Phase 2: solve (or reuse) the map, self-check it, export it.
fn phase_map(ctx: &Ctx, man: &mut RunManifest) -> Result<ConformalMapPair, PipelineError> {
    let t0 = Instant::now();
    let map = match ctx.cached_map {
        Some(m) => m.clone(),
        None => solve_strip_parameters(ctx.quad, &MapOptions::default())
            .map_err(num_err("map"))?,
    };
    let pair = ConformalMapPair::new(map).map_err(num_err("map"))?;
    man.module = Some(pair.module());
    put(man, ctx.out_dir, STRIPMAP_FILE, &pair.stripmap().to_json().map_err(num_err("map"))?)?;

    let worst = roundtrip_check(&pair, ctx.seed).map_err(|cause| PipelineError::Numerical {
        phase: "map",
        cause,
    })?;
    man.roundtrip_rel_worst = Some(worst);

    if ctx.wants(EmitKind::MappingGrid) {
        put(
            man,
            ctx.out_dir,
            EmitKind::MappingGrid.file_name(),
            &mapping_grid_csv(&pair)?,
        )?;
    }
    man.phases.map_s = t0.elapsed().as_secs_f64();
    Ok(pair)
}

/// Phase 3: build the planning rectangle and its site lattice, dimensioning
/// when the scenario gives a target load instead of a count.
fn phase_canonical(
    ctx: &Ctx,
    module: f64,
    man: &mut RunManifest,
) -> Result<TorusLattice, PipelineError> {
    let t0 = Instant::now();
    let area = ctx.quad.polygon.area();
    let planned_aspect = module * ctx.sc.aspect_mismatch;
    man.planned_aspect = Some(planned_aspect);
    let w = (area / planned_aspect).sqrt();
    let rect = RectangleDomain::new(w, area / w).map_err(num_err("canonical"))?;

    let lat = match (ctx.sc.sites.l, ctx.sc.sites.target_load) {
        (Some(l), None) => {
            let lat = place_lattice(&rect, l, ctx.sc.tiling).map_err(num_err("canonical"))?;
            let (lw, lh) = lat.grid_shape();
            man.snap_note = Some(format!(
                "requested L={l}, lattice realizes {} ({lw}x{lh})",
                lat.len()
            ));
            lat
        }
        (None, Some(target)) => {
            let (l, alpha, lat) = dimension_network(
                target,
                &rect,
                ctx.traffic.volume(),
                &ctx.lm,
                ctx.sc.tiling,
                ctx.grid,
                ctx.sc.max_sites,
            )
            .map_err(num_err("canonical"))?;
            let (lw, lh) = lat.grid_shape();
            man.snap_note = Some(format!(
                "target load {target} reached at L={l} ({lw}x{lh}), uniform load {alpha:.6}"
            ));
            lat
        }
        _ => unreachable!("validated: exactly one of l / target_load"),
    };
    man.sites_planned = Some(lat.len());
    put(man, ctx.out_dir, LATTICE_FILE, &lat.export_json())?;
    man.phases.canonical_s = t0.elapsed().as_secs_f64();
    Ok(lat)
}

/// Phase 4: map the lattice back, solve the three load patterns, compare.
fn phase_compare(
    ctx: &Ctx,
    pair: &ConformalMapPair,
    lat: &TorusLattice,
    field: &DemandField,
    man: &mut RunManifest,
) -> Result<(), PipelineError> {
    let t0 = Instant::now();
    let canonical_sites = lat.scaled_sites();
    let physical_sites =
        map_sites_back(pair, lat, &canonical_sites).map_err(num_err("compare"))?;
    if ctx.wants(EmitKind::Sites) {
        put(
            man,
            ctx.out_dir,
            EmitKind::Sites.file_name(),
            &sites_csv(&canonical_sites, &physical_sites),
        )?;
    }

    let result = compare_domains(&ComparisonInputs {
        lattice: lat,
        physical_sites: &physical_sites,
        polygon: &ctx.quad.polygon,
        demand: field,
        lm: &ctx.lm,
        module: pair.module(),
        grid: ctx.grid,
        opts: FixedPointOptions::default(),
    })
    .map_err(num_err("compare"))?;

    man.alpha_c = Some(result.alpha_c);
    man.correlation = Some(result.correlation);
    put(man, ctx.out_dir, LOADS_PERIODIC_FILE, &result.canonical_periodic.to_csv())?;
    put(man, ctx.out_dir, LOADS_CANONICAL_FILE, &result.canonical_nonperiodic.to_csv())?;
    put(man, ctx.out_dir, LOADS_PHYSICAL_FILE, &result.physical.to_csv())?;
    put(man, ctx.out_dir, RESULT_FILE, &result.summary_json())?;
    if ctx.wants(EmitKind::LoadPattern) {
        put(
            man,
            ctx.out_dir,
            EmitKind::LoadPattern.file_name(),
            &load_pattern_csv(&result),
        )?;
    }
    man.phases.compare_s = t0.elapsed().as_secs_f64();
    Ok(())
}

/// Carries planning-rectangle sites through the map into the polygon. The
/// rectangle is traversed in normalized coordinates, so a deliberately
/// mismatched planning aspect squeezes onto the true canonical rectangle
/// before inversion.
fn map_sites_back(
    pair: &ConformalMapPair,
    lat: &TorusLattice,
    canonical_sites: &[Point],
) -> Result<Vec<Point>, crate::scmap::ScMapError> {
    let target = lat.target_rectangle();
    let mq = pair.module();
    canonical_sites
        .iter()
        .map(|p| {
            let w = Complex64::new(p.x / target.w(), p.y / target.h() * mq);
            pair.map_inverse(w).map(Point::from)
        })
        .collect()
}

/// Seeded Monte-Carlo round-trip check: forward(inverse(w)) must return to w
/// within `ROUNDTRIP_TOL` of the rectangle diameter.
fn roundtrip_check(pair: &ConformalMapPair, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mq = pair.module();
    let diam = (1.0 + mq * mq).sqrt();
    let mut worst = 0.0f64;
    for _ in 0..ROUNDTRIP_SAMPLES {
        let u = rng.gen_range(EDGE_MARGIN..1.0 - EDGE_MARGIN);
        let v = rng.gen_range(EDGE_MARGIN..1.0 - EDGE_MARGIN) * mq;
        let w = Complex64::new(u, v);
        let zeta = pair.map_inverse(w).map_err(|e| e.to_string())?;
        let back = pair.map_forward(zeta).map_err(|e| e.to_string())?;
        worst = worst.max((back - w).norm() / diam);
    }
    if worst > ROUNDTRIP_TOL {
        Err(format!(
            "round-trip self-check failed: relative error {worst:.3e} exceeds {ROUNDTRIP_TOL:.0e}"
        ))
    } else {
        Ok(worst)
    }
}

/// Images of canonical grid lines under the inverse map, as plottable CSV.
fn mapping_grid_csv(pair: &ConformalMapPair) -> Result<String, PipelineError> {
    let mq = pair.module();
    let mut out = String::from("axis,line,u,v,x,y\n");
    let level = |i: usize| i as f64 / (GRID_LINES + 1) as f64;
    let along = |i: usize| {
        EDGE_MARGIN + (1.0 - 2.0 * EDGE_MARGIN) * i as f64 / (LINE_SAMPLES - 1) as f64
    };
    for li in 1..=GRID_LINES {
        let u = level(li);
        for si in 0..LINE_SAMPLES {
            let v = along(si) * mq;
            let z = pair
                .map_inverse(Complex64::new(u, v))
                .map_err(num_err("map"))?;
            writeln!(out, "u,{li},{u},{v},{},{}", z.re, z.im).expect("string write");
        }
    }
    for li in 1..=GRID_LINES {
        let v = level(li) * mq;
        for si in 0..LINE_SAMPLES {
            let u = along(si);
            let z = pair
                .map_inverse(Complex64::new(u, v))
                .map_err(num_err("map"))?;
            writeln!(out, "v,{li},{u},{v},{},{}", z.re, z.im).expect("string write");
        }
    }
    Ok(out)
}

fn cdf_csv(field: &DemandField) -> String {
    let mut out = String::from("density,cdf\n");
    for (d, p) in demand_cdf(field, CDF_BINS) {
        writeln!(out, "{d},{p}").expect("string write");
    }
    out
}

fn sites_csv(canonical: &[Point], physical: &[Point]) -> String {
    let mut out = String::from("cell,canonical_x,canonical_y,physical_x,physical_y\n");
    for (i, (c, p)) in canonical.iter().zip(physical).enumerate() {
        writeln!(out, "{i},{},{},{},{}", c.x, c.y, p.x, p.y).expect("string write");
    }
    out
}

/// The three load patterns side by side, one row per cell.
fn load_pattern_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("cell,periodic,canonical_nonperiodic,physical\n");
    for i in 0..result.physical.len() {
        writeln!(
            out,
            "{i},{},{},{}",
            result.canonical_periodic.loads()[i],
            result.canonical_nonperiodic.loads()[i],
            result.physical.loads()[i]
        )
        .expect("string write");
    }
    out
}

/// Canonical-only analysis: the uniform torus load over a site-count sweep.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub out_dir: PathBuf,
    pub grid: Option<usize>,
    pub cached_map: Option<StripMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaRow {
    pub beta: f64,
    pub l_requested: usize,
    /// Site count the tiling realized; `None` when no lattice fits.
    pub l_realized: Option<usize>,
    /// Uniform torus load; `None` when the demand cannot be carried.
    pub alpha_c: Option<f64>,
}

/// Sweeps the uniform canonical load over the scenario's site counts (and
/// exponents, when given), writing the table next to returning it.
///
/// The rectangle is the scenario's explicit `canonical_rect` when present;
/// otherwise the planning rectangle is derived from the polygon's solved
/// module, exactly as the pipeline would build it.
pub fn analyze_sweep(
    sc: &Scenario,
    opts: &AnalyzeOptions,
) -> Result<Vec<AlphaRow>, PipelineError> {
    let grid = opts.grid.unwrap_or(sc.grid);
    if grid < 16 {
        return Err(ScenarioError::Invalid(format!(
            "grid override {grid} too coarse (need >= 16)"
        ))
        .into());
    }
    let sweep = sc
        .l_sweep
        .clone()
        .ok_or_else(|| ScenarioError::Invalid("analysis needs l_sweep".to_string()))?;
    let betas = sc.beta_sweep.clone().unwrap_or_else(|| vec![sc.link.beta]);
    let traffic = sc.traffic()?;

    let rect = match sc.canonical_rectangle()? {
        Some(rect) => rect,
        None => {
            let quad = sc.quadrilateral()?;
            let map = match &opts.cached_map {
                Some(m) => m.clone(),
                None => solve_strip_parameters(&quad, &MapOptions::default())
                    .map_err(num_err("analysis"))?,
            };
            let area = quad.polygon.area();
            let planned_aspect = map.module() * sc.aspect_mismatch;
            let w = (area / planned_aspect).sqrt();
            RectangleDomain::new(w, area / w).map_err(num_err("analysis"))?
        }
    };

    let mut rows = Vec::with_capacity(betas.len() * sweep.len());
    for &beta in &betas {
        let lm = LinkModel::new(beta, sc.link.sigma2, sc.traffic.b_sys_hz, sc.traffic.r_min_bps)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        for &l in &sweep {
            let lat = match place_lattice(&rect, l, sc.tiling) {
                Ok(lat) => lat,
                Err(_) => {
                    rows.push(AlphaRow {
                        beta,
                        l_requested: l,
                        l_realized: None,
                        alpha_c: None,
                    });
                    continue;
                }
            };
            let alpha = match canonical_uniform_load(&lat, traffic.volume(), &lm, grid, ALPHA_TOL)
            {
                Ok(a) => Some(a),
                Err(LoadError::InfeasibleDemand { .. }) => None,
                Err(e) => return Err(num_err("analysis")(e)),
            };
            rows.push(AlphaRow {
                beta,
                l_requested: l,
                l_realized: Some(lat.len()),
                alpha_c: alpha,
            });
        }
    }

    fs::create_dir_all(&opts.out_dir).map_err(io_err(opts.out_dir.clone()))?;
    let path = opts.out_dir.join(ALPHA_TABLE_FILE);
    fs::write(&path, alpha_table_csv(&rows)).map_err(io_err(path))?;
    Ok(rows)
}

fn alpha_table_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("beta,l_requested,l_realized,alpha_c,status\n");
    for r in rows {
        let realized = r.l_realized.map(|l| l.to_string()).unwrap_or_default();
        let (alpha, status) = match r.alpha_c {
            Some(a) => (format!("{a}"), "ok"),
            None => (String::new(), "infeasible"),
        };
        writeln!(out, "{},{},{realized},{alpha},{status}", r.beta, r.l_requested)
            .expect("string write");
    }
    out
}

/// Regenerates one plot-data file from a completed (or partial) run
/// directory, byte-identical to what the run itself emitted.
pub fn emit_plot_data(
    run_dir: &Path,
    kind: EmitKind,
    out_dir: &Path,
) -> Result<PathBuf, PipelineError> {
    let read = |name: &str| -> Result<String, PipelineError> {
        let path = run_dir.join(name);
        fs::read_to_string(&path).map_err(io_err(path))
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir.to_path_buf()))?;
    let out_path = out_dir.join(kind.file_name());

    let content = match kind {
        EmitKind::MappingGrid => {
            let map = StripMap::from_json(&read(STRIPMAP_FILE)?).map_err(num_err("emit"))?;
            let pair = ConformalMapPair::new(map).map_err(num_err("emit"))?;
            mapping_grid_csv(&pair)?
        }
        EmitKind::Cdf => {
            let field = field_from_export(&read(DEMAND_HEADER_FILE)?, &read(DEMAND_GRID_FILE)?)
                .map_err(num_err("emit"))?;
            cdf_csv(&field)
        }
        EmitKind::Sites => {
            #[derive(Deserialize)]
            struct LatticeHeader {
                target_w: f64,
                target_h: f64,
                scaled_sites: Vec<Point>,
            }
            let lat: LatticeHeader = serde_json::from_str(&read(LATTICE_FILE)?)
                .map_err(|e| num_err("emit")(e.to_string()))?;
            let map = StripMap::from_json(&read(STRIPMAP_FILE)?).map_err(num_err("emit"))?;
            let pair = ConformalMapPair::new(map).map_err(num_err("emit"))?;
            let mq = pair.module();
            let physical: Vec<Point> = lat
                .scaled_sites
                .iter()
                .map(|p| {
                    let w = Complex64::new(p.x / lat.target_w, p.y / lat.target_h * mq);
                    pair.map_inverse(w).map(Point::from)
                })
                .collect::<Result<_, _>>()
                .map_err(num_err("emit"))?;
            sites_csv(&lat.scaled_sites, &physical)
        }
        EmitKind::LoadPattern => {
            let periodic = load_column(&read(LOADS_PERIODIC_FILE)?)?;
            let canonical = load_column(&read(LOADS_CANONICAL_FILE)?)?;
            let physical = load_column(&read(LOADS_PHYSICAL_FILE)?)?;
            if periodic.len() != canonical.len() || canonical.len() != physical.len() {
                return Err(PipelineError::Numerical {
                    phase: "emit",
                    cause: "load files disagree on cell count".to_string(),
                });
            }
            let mut out = String::from("cell,periodic,canonical_nonperiodic,physical\n");
            for (i, ((p, c), f)) in periodic.iter().zip(&canonical).zip(&physical).enumerate() {
                writeln!(out, "{i},{p},{c},{f}").expect("string write");
            }
            out
        }
    };
    fs::write(&out_path, &content).map_err(io_err(out_path.clone()))?;
    Ok(out_path)
}

/// Extracts the `load` column of a per-cell CSV verbatim, preserving the
/// exact decimal text.
fn load_column(csv: &str) -> Result<Vec<String>, PipelineError> {
    let mut out = Vec::new();
    for line in csv.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let col = line.split(',').nth(1).ok_or_else(|| PipelineError::Numerical {
            phase: "emit",
            cause: format!("malformed load row {line:?}"),
        })?;
        out.push(col.to_string());
    }
    Ok(out)
}
