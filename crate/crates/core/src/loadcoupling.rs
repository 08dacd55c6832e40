//! Cell-load coupling: the fixed point tying every cell's bandwidth load to
//! its neighbors' interference, solved on periodic and plain domains, the
//! uniform-load analysis that drives dimensioning, and the canonical-versus-
//! physical load-pattern comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{place_lattice, CanonicalError, LinkModel, Tiling, TorusLattice};
use crate::demand::DemandField;
use crate::geometry::{
    torus_distance, voronoi_in_polygon, voronoi_on_torus, CellPartition, GeometryError, Point,
    Polygon, RectangleDomain,
};
use crate::numerics::CompensatedSum;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what} (got {value})")]
    Domain { what: &'static str, value: f64 },
    #[error("load iteration did not converge within {iterations} sweeps (sup-norm step {step:.3e})")]
    NoConvergence {
        iterations: usize,
        step: f64,
        last: Vec<f64>,
        previous: Vec<f64>,
    },
    #[error("demand volume {volume} is infeasible on this lattice (required share {required:.4} at full load)")]
    InfeasibleDemand { volume: f64, required: f64 },
    #[error("no site count up to {cap} reaches target load {target} (best achieved {achieved:.4})")]
    TargetUnreachable { cap: usize, target: f64, achieved: f64 },
    #[error("cell counts disagree: expected {expected}, got {got}")]
    CellCountMismatch { expected: usize, got: usize },
    #[error("demand field grid does not match the partition grid")]
    GridMismatch,
}

/// Per-cell converged loads: the fraction of system bandwidth each cell
/// spends. Entries live in [0, 1]; `clamped` marks cells whose raw demand
/// exceeded the whole band; `boundary` marks cells touching the domain
/// boundary (all-false until classified).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadVector {
    loads: Vec<f64>,
    clamped: Vec<bool>,
    boundary: Vec<bool>,
    uniform: Option<f64>,
}

impl LoadVector {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    /// The common load when the pattern is flat (periodic symmetric runs).
    pub fn uniform(&self) -> Option<f64> {
        self.uniform
    }

    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_load(&self) -> f64 {
        if self.loads.is_empty() {
            return 0.0;
        }
        self.loads.iter().sum::<f64>() / self.loads.len() as f64
    }

    /// Marks the flat-pattern value when max - min is below `spread`.
    pub fn detect_uniform(&mut self, spread: f64) -> Option<f64> {
        let max = self.loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.loads.iter().copied().fold(f64::INFINITY, f64::min);
        self.uniform = (max - min < spread).then(|| self.mean_load());
        self.uniform
    }

    pub fn set_boundary(&mut self, flags: Vec<bool>) -> Result<(), LoadError> {
        if flags.len() != self.loads.len() {
            return Err(LoadError::CellCountMismatch {
                expected: self.loads.len(),
                got: flags.len(),
            });
        }
        self.boundary = flags;
        Ok(())
    }

    /// Mean loads split by the boundary flag: (boundary cells, interior
    /// cells). A class with no members reports NaN.
    pub fn boundary_interior_means(&self) -> (f64, f64) {
        let mut b = (0.0, 0usize);
        let mut i = (0.0, 0usize);
        for (l, &flag) in self.loads.iter().zip(&self.boundary) {
            if flag {
                b = (b.0 + l, b.1 + 1);
            } else {
                i = (i.0 + l, i.1 + 1);
            }
        }
        (b.0 / b.1 as f64, i.0 / i.1 as f64)
    }

    /// CSV rows `cell,load,clamped,boundary`, one per cell in index order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,load,clamped,boundary\n");
        for l in 0..self.loads.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                l, self.loads[l], self.clamped[l], self.boundary[l]
            ));
        }
        out
    }
}

/// One cell's load: bandwidth demanded over bandwidth available, clamped to
/// the full band with a flag. Exactly filling the band is not a clamp.
pub fn cell_load(v_l: f64, b_l: f64, b_sys: f64) -> Result<(f64, bool), LoadError> {
    if !(b_sys > 0.0) {
        return Err(LoadError::Domain {
            what: "system bandwidth must be positive",
            value: b_sys,
        });
    }
    if !(v_l >= 0.0) {
        return Err(LoadError::Domain {
            what: "cell user volume must be nonnegative",
            value: v_l,
        });
    }
    if !(b_l >= 0.0) {
        return Err(LoadError::Domain {
            what: "cell mean user bandwidth must be nonnegative",
            value: b_l,
        });
    }
    let raw = v_l * b_l / b_sys;
    if raw > 1.0 {
        Ok((1.0, true))
    } else {
        Ok((raw, false))
    }
}

/// Which geometry the interference travels through.
#[derive(Debug, Clone)]
pub enum CouplingDomain {
    /// Wrapped distances on the torus over this rectangle.
    Torus(RectangleDomain),
    /// Plain Euclidean distances.
    Plane,
}

#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    /// Sup-norm step size at which the sweep stops.
    pub tol: f64,
    pub max_iterations: usize,
    /// Noise multiplier applied in cells flagged by `boundary_cells`;
    /// 1.0 leaves the noise floor untouched everywhere.
    pub boundary_sigma2_mult: f64,
    pub boundary_cells: Option<Vec<bool>>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 500,
            boundary_sigma2_mult: 1.0,
            boundary_cells: None,
        }
    }
}

/// Relative slack under which a sample counts as equidistant to two sites.
/// Samples this close to a cell edge get split between the tied cells, so
/// congruent cells accumulate identical integrals instead of whole-sample
/// differences from index-order tie-breaking.
const TIE_SLACK: f64 = 1e-12;

/// One synchronous sweep: every cell's raw load from the previous loads.
/// Returns the unclamped per-cell bandwidth shares.
///
/// The serving site is the nearest one under `dist` (the partition's own
/// rule); samples within `TIE_SLACK` of a tie are shared equally among the
/// tied cells, each share seeing its own serving exclusion.
fn sweep<F>(
    dist: &F,
    sites: &[Point],
    partition: &CellPartition,
    density: &[f64],
    volume: f64,
    lm: &LinkModel,
    sigma2_by_cell: &[f64],
    loads: &[f64],
) -> Vec<f64>
where
    F: Fn(Point, Point) -> f64 + Sync + ?Sized,
{
    let n_sites = sites.len();
    let (nx, ny) = (partition.nx, partition.ny);
    let d_area = partition.element_area();
    let beta = lm.beta;

    // Rows in parallel, each producing its own per-cell accumulator; the
    // row results are folded in row order so the sum is deterministic.
    let rows: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut num = vec![0.0; n_sites];
            let mut dists = vec![0.0; n_sites];
            let mut powers = vec![0.0; n_sites];
            for i in 0..nx {
                if partition.assignment[j * nx + i] < 0 {
                    continue;
                }
                let delta = density[j * nx + i];
                if delta == 0.0 {
                    continue;
                }
                let p = partition.sample_point(i, j);
                let mut d_min = f64::INFINITY;
                for (l, s) in sites.iter().enumerate() {
                    let d = dist(p, *s);
                    dists[l] = d;
                    powers[l] = d.powf(-beta);
                    if d < d_min {
                        d_min = d;
                    }
                }
                let tie = d_min * (1.0 + TIE_SLACK);
                let k = dists.iter().filter(|&&d| d <= tie).count();
                let share = delta / k as f64;
                for s in 0..n_sites {
                    if dists[s] > tie {
                        continue;
                    }
                    let p_star = powers[s];
                    if p_star.is_infinite() {
                        continue; // on the site itself: zero bandwidth needed
                    }
                    let mut interference = 0.0;
                    for (l, &pw) in powers.iter().enumerate() {
                        if l != s {
                            interference += loads[l] * pw;
                        }
                    }
                    let gamma = p_star / (interference + sigma2_by_cell[s]);
                    num[s] += share * lm.user_bandwidth(gamma);
                }
            }
            num
        })
        .collect();

    let mut acc = vec![CompensatedSum::default(); n_sites];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            a.add(v);
        }
    }
    acc.into_iter()
        .map(|a| volume * a.value() * d_area / lm.b_sys)
        .collect()
}

/// Converges the coupled per-cell loads by synchronous sweeps from the
/// full-load start, clamping each load at the whole band. The full-load
/// start makes the monotone iteration settle downward onto the largest
/// fixed point, so reruns are bit-identical.
pub fn load_fixed_point(
    sites: &[Point],
    partition: &CellPartition,
    density: &[f64],
    volume: f64,
    lm: &LinkModel,
    domain: &CouplingDomain,
    opts: &FixedPointOptions,
) -> Result<LoadVector, LoadError> {
    if partition.n_sites != sites.len() {
        return Err(LoadError::CellCountMismatch {
            expected: partition.n_sites,
            got: sites.len(),
        });
    }
    if density.len() != partition.nx * partition.ny {
        return Err(LoadError::GridMismatch);
    }
    if !(volume >= 0.0) {
        return Err(LoadError::Domain {
            what: "demand volume must be nonnegative",
            value: volume,
        });
    }
    let sigma2_by_cell: Vec<f64> = match (&opts.boundary_cells, opts.boundary_sigma2_mult) {
        (_, m) if !(m >= 1.0) => {
            return Err(LoadError::Domain {
                what: "boundary noise multiplier must be >= 1",
                value: m,
            });
        }
        (None, m) if m != 1.0 => {
            return Err(LoadError::Domain {
                what: "boundary noise multiplier needs boundary flags",
                value: m,
            });
        }
        (Some(flags), m) => {
            if flags.len() != sites.len() {
                return Err(LoadError::CellCountMismatch {
                    expected: sites.len(),
                    got: flags.len(),
                });
            }
            flags
                .iter()
                .map(|&b| if b { lm.sigma2 * m } else { lm.sigma2 })
                .collect()
        }
        (None, _) => vec![lm.sigma2; sites.len()],
    };

    let run = |dist: &(dyn Fn(Point, Point) -> f64 + Sync)| -> Result<LoadVector, LoadError> {
        let mut prev = vec![1.0; sites.len()];
        for it in 1..=opts.max_iterations {
            let raw = sweep(
                dist,
                sites,
                partition,
                density,
                volume,
                lm,
                &sigma2_by_cell,
                &prev,
            );
            let next: Vec<f64> = raw.iter().map(|&r| r.min(1.0)).collect();
            let step = next
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if step <= opts.tol {
                let clamped = raw.iter().map(|&r| r > 1.0).collect();
                return Ok(LoadVector {
                    boundary: vec![false; next.len()],
                    loads: next,
                    clamped,
                    uniform: None,
                });
            }
            if it == opts.max_iterations {
                return Err(LoadError::NoConvergence {
                    iterations: it,
                    step,
                    last: next,
                    previous: prev,
                });
            }
            prev = next;
        }
        unreachable!("loop always returns")
    };

    match domain {
        CouplingDomain::Torus(rect) => run(&|a, b| torus_distance(a, b, rect)),
        CouplingDomain::Plane => run(&|a: Point, b: Point| a.dist(b)),
    }
}

/// Per-sample (serving power, interference sum, weight) over one fundamental
/// cell of the lattice, for the uniform-load self-consistency. Samples tied
/// between the cell and a neighbor carry fractional weight, mirroring the
/// tie-splitting of the full sweep so the scalar and vector solvers agree.
fn fundamental_cell_powers(
    lat: &TorusLattice,
    beta: f64,
    grid: usize,
) -> (Vec<(f64, f64, f64)>, f64) {
    let rect = lat.native_rectangle();
    let sites = lat.sites();
    let (dx, dy) = (rect.w() / grid as f64, rect.h() / grid as f64);
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..grid)
        .into_par_iter()
        .map(|j| {
            let mut row = Vec::new();
            let mut dists = vec![0.0; sites.len()];
            for i in 0..grid {
                let p = Point::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                let mut d_min = f64::INFINITY;
                for (k, s) in sites.iter().enumerate() {
                    let d = torus_distance(p, *s, rect);
                    dists[k] = d;
                    if d < d_min {
                        d_min = d;
                    }
                }
                let tie = d_min * (1.0 + TIE_SLACK);
                if dists[0] > tie {
                    continue;
                }
                let k_tied = dists.iter().filter(|&&d| d <= tie).count();
                let p_star = dists[0].powf(-beta);
                if p_star.is_infinite() {
                    continue; // the site itself needs no bandwidth
                }
                let mut others = 0.0;
                for &d in &dists[1..] {
                    others += d.powf(-beta);
                }
                row.push((p_star, others, 1.0 / k_tied as f64));
            }
            row
        })
        .collect();
    let mut samples = Vec::new();
    for row in rows {
        samples.extend(row);
    }
    (samples, dx * dy)
}

/// The common load every cell of the symmetric torus carries: the scalar
/// alpha solving alpha = (V / B_sys) (1/|R|) * integral over one cell of
/// b_u(gamma(r; alpha)) dr, found by bisection on (1e-6, 1]. The symmetric
/// layout means one fundamental cell carries the whole statistic.
pub fn canonical_uniform_load(
    lat: &TorusLattice,
    volume: f64,
    lm: &LinkModel,
    grid: usize,
    tol: f64,
) -> Result<f64, LoadError> {
    if !(volume > 0.0) {
        return Err(LoadError::Domain {
            what: "demand volume must be positive",
            value: volume,
        });
    }
    if grid < 8 {
        return Err(LoadError::Domain {
            what: "uniform-load grid too coarse",
            value: grid as f64,
        });
    }
    let (samples, d_area) = fundamental_cell_powers(lat, lm.beta, grid);
    if samples.is_empty() {
        return Err(LoadError::Domain {
            what: "fundamental cell captured no grid samples",
            value: 0.0,
        });
    }
    let area = lat.native_rectangle().area();
    let scale = volume * d_area / (lm.b_sys * area);
    let rhs = |alpha: f64| -> f64 {
        let mut acc = CompensatedSum::default();
        for &(p_star, others, weight) in &samples {
            let gamma = p_star / (alpha * others + lm.sigma2);
            acc.add(weight * lm.user_bandwidth(gamma));
        }
        scale * acc.value()
    };

    let (mut lo, mut hi) = (1e-6, 1.0);
    let f_hi = rhs(hi) - hi;
    if f_hi > 0.0 {
        return Err(LoadError::InfeasibleDemand {
            volume,
            required: rhs(1.0),
        });
    }
    if rhs(lo) - lo <= 0.0 {
        // Root at or below the bracket floor: the network is barely loaded.
        return Ok(lo);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rhs(mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest feasible site count whose uniform canonical load stays at or
/// under `target`. Counts the tiling cannot realize exactly are skipped,
/// as are counts whose load exceeds the whole band. The scan walks upward
/// and stops at the first hit, so the result is the exact minimum even
/// where lattice-shape snapping makes the load non-monotone.
pub fn dimension_network(
    target: f64,
    rect: &RectangleDomain,
    volume: f64,
    lm: &LinkModel,
    tiling: Tiling,
    grid: usize,
    cap: usize,
) -> Result<(usize, f64, TorusLattice), LoadError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(LoadError::Domain {
            what: "target load must lie in (0, 1]",
            value: target,
        });
    }
    let mut any_candidate = false;
    let mut achieved = f64::INFINITY;
    for l in 1..=cap {
        let lat = match place_lattice(rect, l, tiling) {
            Ok(lat) if lat.len() == l => lat,
            _ => continue, // the tiling cannot realize this count exactly
        };
        any_candidate = true;
        let alpha = match canonical_uniform_load(&lat, volume, lm, grid, 1e-12) {
            Ok(a) => a,
            Err(LoadError::InfeasibleDemand { .. }) => continue,
            Err(e) => return Err(e),
        };
        achieved = achieved.min(alpha);
        if alpha <= target {
            return Ok((l, alpha, lat));
        }
    }
    if !any_candidate {
        return Err(LoadError::Domain {
            what: "no feasible site count under the cap",
            value: cap as f64,
        });
    }
    Err(LoadError::TargetUnreachable {
        cap,
        target,
        achieved,
    })
}

/// Flags cells whose nearest-neighbor link crosses the torus seam: exactly
/// the cells that sit on the domain boundary once the wrap is removed.
/// Lattices two or fewer cells wide in either direction wrap entirely
/// through the seam, so every cell is a boundary cell there.
pub fn boundary_cells(lat: &TorusLattice) -> Vec<bool> {
    let sites = lat.sites();
    let rect = lat.native_rectangle();
    let n = sites.len();
    let (l_w, l_h) = lat.grid_shape();
    if n <= 1 || l_w <= 2 || l_h <= 2 {
        return vec![true; n];
    }
    let mut pitch = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            pitch = pitch.min(torus_distance(sites[i], sites[j], rect));
        }
    }
    let mut flags = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d_t = torus_distance(sites[i], sites[j], rect);
            if d_t > pitch * (1.0 + 1e-6) {
                continue;
            }
            let d_e = sites[i].dist(sites[j]);
            if d_e > d_t * (1.0 + 1e-6) {
                flags[i] = true;
                flags[j] = true;
            }
        }
    }
    flags
}

/// Pearson correlation by index. Errors on fewer than two cells or a flat
/// pattern (zero variance has no direction to correlate).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, LoadError> {
    if a.len() != b.len() {
        return Err(LoadError::CellCountMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(LoadError::Domain {
            what: "correlation needs at least two cells",
            value: a.len() as f64,
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x - ma, y - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(LoadError::Domain {
            what: "correlation undefined for a flat load pattern",
            value: 0.0,
        });
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Everything compare_domains needs from an already-run pipeline.
pub struct ComparisonInputs<'a> {
    pub lattice: &'a TorusLattice,
    /// Mapped site positions in the physical polygon, same cell order as
    /// the lattice sites.
    pub physical_sites: &'a [Point],
    pub polygon: &'a Polygon,
    pub demand: &'a DemandField,
    pub lm: &'a LinkModel,
    /// Aspect ratio the canonical rectangle would need for a perfect fit.
    pub module: f64,
    pub grid: usize,
    pub opts: FixedPointOptions,
}

/// Summary statistics of one converged load pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub boundary_mean: f64,
    pub interior_mean: f64,
    pub clamped_cells: usize,
}

impl LoadStats {
    fn of(v: &LoadVector) -> Self {
        let (boundary_mean, interior_mean) = v.boundary_interior_means();
        Self {
            min: v.loads().iter().copied().fold(f64::INFINITY, f64::min),
            mean: v.mean_load(),
            max: v.max_load(),
            boundary_mean,
            interior_mean,
            clamped_cells: v.clamped().iter().filter(|&&c| c).count(),
        }
    }
}

/// The three load patterns of one scenario and how well the canonical
/// analysis predicts the physical one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub canonical_periodic: LoadVector,
    pub canonical_nonperiodic: LoadVector,
    pub physical: LoadVector,
    /// Pearson correlation between the non-periodic canonical and physical
    /// per-cell loads, matched by cell identity.
    pub correlation: f64,
    /// Relative gap between the planning rectangle's aspect ratio and the
    /// aspect the polygon actually maps to.
    pub module_match: f64,
    /// The symmetric-torus load level.
    pub alpha_c: f64,
    /// Whether alpha_c bounds every non-periodic canonical cell load.
    pub worst_case_bound_holds: bool,
}

impl ScenarioResult {
    /// JSON summary: the headline numbers plus per-domain statistics.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            alpha_c: f64,
            correlation: f64,
            module_match: f64,
            worst_case_bound_holds: bool,
            cells: usize,
            canonical_periodic: &'a LoadStats,
            canonical_nonperiodic: &'a LoadStats,
            physical: &'a LoadStats,
        }
        let stats = [
            LoadStats::of(&self.canonical_periodic),
            LoadStats::of(&self.canonical_nonperiodic),
            LoadStats::of(&self.physical),
        ];
        serde_json::to_string_pretty(&Summary {
            alpha_c: self.alpha_c,
            correlation: self.correlation,
            module_match: self.module_match,
            worst_case_bound_holds: self.worst_case_bound_holds,
            cells: self.physical.len(),
            canonical_periodic: &stats[0],
            canonical_nonperiodic: &stats[1],
            physical: &stats[2],
        })
        .expect("summary serialization cannot fail")
    }
}

fn rect_polygon(rect: &RectangleDomain) -> Polygon {
    Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(rect.w(), 0.0),
        Point::new(rect.w(), rect.h()),
        Point::new(0.0, rect.h()),
    ])
    .expect("axis rectangle is a valid polygon")
}

/// Runs the three load analyses of one scenario — symmetric torus,
/// canonical rectangle without wrap, physical polygon — and correlates the
/// two non-periodic patterns cell by cell.
pub fn compare_domains(inp: &ComparisonInputs) -> Result<ScenarioResult, LoadError> {
    let lat = inp.lattice;
    let n = lat.len();
    if inp.physical_sites.len() != n {
        return Err(LoadError::CellCountMismatch {
            expected: n,
            got: inp.physical_sites.len(),
        });
    }
    let volume = inp.demand.volume();
    let boundary = boundary_cells(lat);

    // symmetric torus: native rectangle, wrapped metric, uniform demand
    let native = lat.native_rectangle();
    let torus_part = voronoi_on_torus(native, lat.sites(), inp.grid)?;
    let uniform_native = vec![1.0 / native.area(); inp.grid * inp.grid];
    let mut periodic = load_fixed_point(
        lat.sites(),
        &torus_part,
        &uniform_native,
        volume,
        inp.lm,
        &CouplingDomain::Torus(native.clone()),
        &inp.opts,
    )?;
    let alpha_c = match periodic.detect_uniform(1e-6) {
        Some(a) => a,
        None => periodic.mean_load(), // clamp saturation can dent the symmetry
    };
    periodic.set_boundary(vec![false; n])?;

    // canonical rectangle, no wrap: scaled sites on the planning rectangle
    let target = lat.target_rectangle();
    let target_poly = rect_polygon(target);
    let scaled = lat.scaled_sites();
    let rect_part = voronoi_in_polygon(&target_poly, &scaled, inp.grid)?;
    let uniform_target = vec![1.0 / target.area(); inp.grid * inp.grid];
    let mut nonperiodic = load_fixed_point(
        &scaled,
        &rect_part,
        &uniform_target,
        volume,
        inp.lm,
        &CouplingDomain::Plane,
        &inp.opts,
    )?;
    nonperiodic.set_boundary(boundary.clone())?;

    // physical polygon with the mapped sites and the real demand field
    let (fnx, fny) = inp.demand.grid_shape();
    if (fnx, fny) != (inp.grid, inp.grid) {
        return Err(LoadError::GridMismatch);
    }
    let phys_part = voronoi_in_polygon(inp.polygon, inp.physical_sites, inp.grid)?;
    let o = inp.demand.origin();
    let (sdx, sdy) = inp.demand.spacing();
    let align = (o.x - phys_part.x0).abs() + (o.y - phys_part.y0).abs();
    let spacing = (sdx - phys_part.dx).abs() + (sdy - phys_part.dy).abs();
    if align > 1e-9 * (sdx + sdy) || spacing > 1e-12 * (sdx + sdy) {
        return Err(LoadError::GridMismatch);
    }
    let mut physical = load_fixed_point(
        inp.physical_sites,
        &phys_part,
        inp.demand.density(),
        volume,
        inp.lm,
        &CouplingDomain::Plane,
        &inp.opts,
    )?;
    physical.set_boundary(boundary)?;

    let correlation = pearson(nonperiodic.loads(), physical.loads())?;
    let aspect = target.h() / target.w();
    let module_match = (aspect - inp.module).abs() / inp.module;
    let worst_case_bound_holds = alpha_c >= nonperiodic.max_load();

    Ok(ScenarioResult {
        canonical_periodic: periodic,
        canonical_nonperiodic: nonperiodic,
        physical,
        correlation,
        module_match,
        alpha_c,
        worst_case_bound_holds,
    })
}
