//! Acceptance suite: one test per release criterion, each ending in a single
//! `criterion NN <name>: PASS (...)` line with the measured margins (visible
//! under `--nocapture`; the test name itself carries the pass/fail verdict).
//!
//! Oracles here are deliberately independent re-derivations: a weighted
//! finite-difference Laplace solve for the module, composite-Simpson
//! inversion of the elliptic integral, brute-force image minima for the
//! torus metric, and a scalar bisection for the coupled-load fixed point.
//! Heavy artifacts (solved maps, full pipeline runs) are cached in
//! process-wide statics so overlapping criteria share them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use canonplan::canonical::{place_lattice, LinkModel, Tiling};
use canonplan::demand::{
    induced_density, patch_conservation_check, preset_density, DemandField, Patch,
};
use canonplan::geometry::{
    torus_distance, voronoi_in_polygon, voronoi_on_torus, Point, Polygon, Quadrilateral,
    RectangleDomain,
};
use canonplan::loadcoupling::{
    canonical_uniform_load, load_fixed_point, CouplingDomain, FixedPointOptions,
};
use canonplan::pipeline::{analyze_sweep, run_pipeline, AnalyzeOptions, RunOptions, RESULT_FILE};
use canonplan::scenario::{DemandSource, DemandSourceKind, Scenario};
use canonplan::scmap::{conformal_module, solve_strip_parameters, ConformalMapPair, MapOptions};

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario_doc(name: &str) -> String {
    let path = scenario_dir().join(format!("{name}.json"));
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn rect_quad(w: f64, h: f64) -> Quadrilateral {
    let poly = Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h),
        Point::new(0.0, h),
    ])
    .unwrap();
    Quadrilateral::new(poly, [0, 1, 2, 3]).unwrap()
}

/// The reentrant benchmark hexagon whose module is known in closed form.
fn l_shape() -> Quadrilateral {
    let poly = Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(2.0, 0.0),
        Point::new(2.0, 1.0),
        Point::new(1.0, 1.0),
        Point::new(1.0, 2.0),
        Point::new(0.0, 2.0),
    ])
    .unwrap();
    Quadrilateral::new(poly, [0, 1, 4, 5]).unwrap()
}

// ---------------------------------------------------------------- caches

type MapSlot = Arc<OnceLock<Arc<ConformalMapPair>>>;

fn map_for(name: &str) -> Arc<ConformalMapPair> {
    static MAPS: OnceLock<Mutex<HashMap<String, MapSlot>>> = OnceLock::new();
    let slot = {
        let mut maps = MAPS.get_or_init(Default::default).lock().unwrap();
        maps.entry(name.to_string()).or_default().clone()
    };
    slot.get_or_init(|| {
        let sc = Scenario::from_json(&scenario_doc(name)).unwrap();
        let quad = sc.quadrilateral().unwrap();
        let map = solve_strip_parameters(&quad, &MapOptions::default())
            .unwrap_or_else(|e| panic!("solve {name}: {e}"));
        Arc::new(ConformalMapPair::new(map).unwrap())
    })
    .clone()
}

struct PlanOutcome {
    result: serde_json::Value,
    _keep: tempfile::TempDir,
}

type PlanSlot = Arc<OnceLock<Arc<PlanOutcome>>>;

/// Full pipeline run of a shipped scenario, optionally with the tiling
/// swapped or a deliberate planning-aspect mismatch applied.
fn planned(name: &str, tiling: Option<&str>, mismatch: Option<f64>) -> Arc<PlanOutcome> {
    static PLANS: OnceLock<Mutex<HashMap<String, PlanSlot>>> = OnceLock::new();
    let key = format!("{name}|{}|{:?}", tiling.unwrap_or("shipped"), mismatch);
    let slot = {
        let mut plans = PLANS.get_or_init(Default::default).lock().unwrap();
        plans.entry(key.clone()).or_default().clone()
    };
    slot.get_or_init(|| {
        let mut doc: serde_json::Value = serde_json::from_str(&scenario_doc(name)).unwrap();
        if let Some(t) = tiling {
            doc["tiling"] = t.into();
        }
        if let Some(m) = mismatch {
            doc["aspect_mismatch"] = m.into();
        }
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let sc = Scenario::from_json(&text).unwrap();
        let keep = tempfile::tempdir().unwrap();
        let dir = keep.path().join("run");
        let mut opts = RunOptions::new(&dir, sha_hex(text.as_bytes()));
        opts.base_dir = scenario_dir();
        let man = run_pipeline(&sc, &opts).unwrap_or_else(|e| panic!("pipeline {key}: {e}"));
        assert!(
            man.failure.is_none(),
            "pipeline {key} failed in a phase: {:?}",
            man.failure
        );
        let result =
            serde_json::from_str(&fs::read_to_string(dir.join(RESULT_FILE)).unwrap()).unwrap();
        Arc::new(PlanOutcome {
            result,
            _keep: keep,
        })
    })
    .clone()
}

fn demand_of(sc: &Scenario, pair: &ConformalMapPair, grid: usize) -> DemandField {
    let traffic = sc.traffic().unwrap();
    match sc.demand_source() {
        DemandSource::Preset(DemandSourceKind::Induced) => {
            induced_density(pair, grid, traffic).unwrap()
        }
        DemandSource::Preset(kind) => {
            let preset = Scenario::fixed_preset(kind).unwrap();
            preset_density(preset, &pair.quad().polygon, grid, traffic).unwrap()
        }
        DemandSource::Csv(_) => panic!("shipped scenarios use presets"),
    }
}

// ------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_rectangle_module_exactness() {
    let cases = [(1.0, 1.0), (2.0, 1.0), (1.0, 3.0), (5.0, 2.0), (0.7, 1.9)];
    let mut worst = 0.0_f64;
    for (w, h) in cases {
        let m = conformal_module(&rect_quad(w, h)).unwrap();
        let err = (m - h / w).abs();
        worst = worst.max(err);
        assert!(
            err < 1e-8,
            "module of {w}x{h} rectangle: {m} vs exact {}",
            h / w
        );
    }
    println!(
        "criterion 01 rectangle-module-exactness: PASS (worst |error| {worst:.2e} over {} rectangles incl. unit square)",
        cases.len()
    );
}

// ------------------------------------------------------------- criterion 2

/// Independent module oracle: weighted 5-point Laplace solve on the L-shape.
///
/// Node weights follow the square-element (bilinear) energy so Neumann edges
/// carry half weight; the Dirichlet energy of the potential that is 0 on the
/// bottom side and 1 on the top side equals 1/module. Conjugate gradients on
/// the free nodes; everything is dense-grid scalar code on purpose — no
/// shared machinery with the map solver.
fn l_shape_fd_module(cells: usize) -> f64 {
    let n = cells + 1;
    let h = 2.0 / cells as f64;
    let eps = 1e-12;
    let coord = |k: usize| k as f64 * h;
    let node_in: Vec<bool> = (0..n * n)
        .map(|v| !(coord(v % n) > 1.0 + eps && coord(v / n) > 1.0 + eps))
        .collect();
    let sq_in = |j: isize, i: isize| -> f64 {
        if j < 0 || i < 0 || j >= cells as isize || i >= cells as isize {
            return 0.0;
        }
        let (j, i) = (j as usize, i as usize);
        let ok = node_in[j * n + i]
            && node_in[j * n + i + 1]
            && node_in[(j + 1) * n + i]
            && node_in[(j + 1) * n + i + 1];
        if ok {
            1.0
        } else {
            0.0
        }
    };
    // edge weights: horizontal (j,i)-(j,i+1), vertical (j,i)-(j+1,i)
    let mut wh = vec![0.0; n * (n - 1)];
    let mut wv = vec![0.0; (n - 1) * n];
    for j in 0..n {
        for i in 0..n - 1 {
            wh[j * (n - 1) + i] = 0.5 * (sq_in(j as isize - 1, i as isize) + sq_in(j as isize, i as isize));
        }
    }
    for j in 0..n - 1 {
        for i in 0..n {
            wv[j * n + i] = 0.5 * (sq_in(j as isize, i as isize - 1) + sq_in(j as isize, i as isize));
        }
    }
    let mut deg = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n - 1 {
            let w = wh[j * (n - 1) + i];
            deg[j * n + i] += w;
            deg[j * n + i + 1] += w;
        }
    }
    for j in 0..n - 1 {
        for i in 0..n {
            let w = wv[j * n + i];
            deg[j * n + i] += w;
            deg[(j + 1) * n + i] += w;
        }
    }
    let mut fixed = vec![false; n * n];
    let mut u0 = vec![0.0; n * n];
    for i in 0..n {
        fixed[i] = true; // bottom side, potential 0
        if coord(i) <= 1.0 + eps {
            fixed[(n - 1) * n + i] = true; // top side, potential 1
            u0[(n - 1) * n + i] = 1.0;
        }
    }
    let free: Vec<bool> = (0..n * n)
        .map(|v| node_in[v] && !fixed[v] && deg[v] > 0.0)
        .collect();
    // graph Laplacian applied to a vector that is zero outside `mask`
    let apply = |x: &[f64], mask: &[bool], out: &mut [f64]| {
        for (o, (&d, &xi)) in out.iter_mut().zip(deg.iter().zip(x.iter())) {
            *o = d * xi;
        }
        for j in 0..n {
            for i in 0..n - 1 {
                let w = wh[j * (n - 1) + i];
                let (a, b) = (j * n + i, j * n + i + 1);
                if mask[b] {
                    out[a] -= w * x[b];
                }
                if mask[a] {
                    out[b] -= w * x[a];
                }
            }
        }
        for j in 0..n - 1 {
            for i in 0..n {
                let w = wv[j * n + i];
                let (a, b) = (j * n + i, (j + 1) * n + i);
                if mask[b] {
                    out[a] -= w * x[b];
                }
                if mask[a] {
                    out[b] -= w * x[a];
                }
            }
        }
    };
    // right-hand side: weighted sum of fixed neighbours, on free nodes only
    let mut b = vec![0.0; n * n];
    let mut scratch = vec![0.0; n * n];
    apply(&u0, &fixed, &mut scratch);
    for v in 0..n * n {
        b[v] = if free[v] { -scratch[v] } else { 0.0 };
    }
    let mut x = vec![0.0; n * n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let stop = rs * 1e-20;
    let mut ap = vec![0.0; n * n];
    for _ in 0..20_000 {
        if rs < stop {
            break;
        }
        apply(&p, &free, &mut ap);
        for v in 0..n * n {
            if !free[v] {
                ap[v] = 0.0;
            }
        }
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / pap;
        let mut rs2 = 0.0;
        for v in 0..n * n {
            x[v] += alpha * p[v];
            r[v] -= alpha * ap[v];
            rs2 += r[v] * r[v];
        }
        let beta = rs2 / rs;
        for v in 0..n * n {
            p[v] = r[v] + beta * p[v];
        }
        rs = rs2;
    }
    let u: Vec<f64> = (0..n * n)
        .map(|v| if fixed[v] { u0[v] } else { x[v] })
        .collect();
    let mut energy = 0.0;
    for j in 0..n {
        for i in 0..n - 1 {
            let d = u[j * n + i + 1] - u[j * n + i];
            energy += wh[j * (n - 1) + i] * d * d;
        }
    }
    for j in 0..n - 1 {
        for i in 0..n {
            let d = u[(j + 1) * n + i] - u[j * n + i];
            energy += wv[j * n + i] * d * d;
        }
    }
    1.0 / energy
}

#[test]
fn criterion_02_module_matches_laplace_oracle() {
    let sc_module = conformal_module(&l_shape()).unwrap();
    let fd_module = l_shape_fd_module(480);
    let rel = ((fd_module - sc_module) / sc_module).abs();
    assert!(
        rel < 1e-3,
        "map solver {sc_module} vs finite-difference oracle {fd_module} (rel {rel:.2e})"
    );
    println!(
        "criterion 02 module-vs-laplace-oracle: PASS (map {sc_module:.8}, 480^2-cell Dirichlet-energy oracle {fd_module:.8}, rel {rel:.2e})"
    );
}

// ------------------------------------------------------------- criterion 3

#[test]
fn criterion_03_roundtrip_fidelity() {
    let mut report = Vec::new();
    for name in ["square", "district6", "district8"] {
        let pair = map_for(name);
        let rect = pair.canonical_rectangle();
        let diam = rect.w().hypot(rect.h());
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let w0 = Complex64::new(
                rng.gen_range(1e-3..1.0 - 1e-3) * rect.w(),
                rng.gen_range(1e-3..1.0 - 1e-3) * rect.h(),
            );
            let zeta = pair.map_inverse(w0).unwrap();
            let back = pair.map_forward(zeta).unwrap();
            worst = worst.max((back - w0).norm());
        }
        assert!(
            worst < 1e-6 * diam,
            "{name}: worst round-trip error {worst:.3e} vs bound {:.3e}",
            1e-6 * diam
        );
        report.push(format!("{name} {:.1e}", worst / diam));
    }
    println!(
        "criterion 03 round-trip-fidelity: PASS (1000 interior points/scenario, worst rel errors: {})",
        report.join(", ")
    );
}

// ------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_angles_preserved() {
    let mut worst = 0.0_f64;
    for name in ["district6", "district8"] {
        let pair = map_for(name);
        let rect = pair.canonical_rectangle();
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);
        let eps = 1e-5;
        for _ in 0..50 {
            // crossing point away from the rectangle corners and boundary
            let w0 = Complex64::new(
                rng.gen_range(0.1..0.9) * rect.w(),
                rng.gen_range(0.1..0.9) * rect.h(),
            );
            let t1 = rng.gen_range(0.0..PI);
            let gap = rng.gen_range(0.3..PI - 0.3);
            let t2 = t1 + gap;
            let tangent = |theta: f64| -> Complex64 {
                let dir = Complex64::new(theta.cos(), theta.sin());
                let a = pair.map_inverse(w0 + eps * dir).unwrap();
                let b = pair.map_inverse(w0 - eps * dir).unwrap();
                a - b
            };
            let measured = (tangent(t2) / tangent(t1)).arg();
            let err = (measured - gap).abs();
            worst = worst.max(err);
            assert!(
                err < 1e-4,
                "{name}: angle {gap:.4} rad mapped to {measured:.4} rad at {w0}"
            );
        }
    }
    println!(
        "criterion 04 conformality: PASS (50 crossing curve pairs per mapped district, worst angle defect {worst:.1e} rad)"
    );
}

// ------------------------------------------------------------- criterion 5

/// Composite-Simpson value of the first-kind elliptic integral.
fn elliptic_f_simpson(phi: f64, m: f64, panels: usize) -> f64 {
    let f = |t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt();
    let h = phi / panels as f64;
    let mut acc = f(0.0) + f(phi);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn criterion_05_elliptic_inversion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0005);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let m = rng.gen_range(0.0..=0.99);
        let kk = elliptic_f_simpson(0.5 * PI, m, 8192);
        let kappa = rng.gen::<f64>() * kk;
        // invert the defining integral by bisection on the amplitude
        let (mut lo, mut hi) = (0.0_f64, 0.5 * PI);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if elliptic_f_simpson(mid, m, 8192) < kappa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = (0.5 * (lo + hi)).sin();
        let lib = canonplan::numerics::jacobi_sn(kappa, m).unwrap();
        let err = (lib - oracle).abs();
        worst = worst.max(err);
        assert!(err <= 1e-9, "sn({kappa}, {m}) = {lib} vs inverted integral {oracle}");
    }
    println!(
        "criterion 05 elliptic-oracle: PASS (100 random (kappa, m) pairs, worst |sn - oracle| {worst:.1e})"
    );
}

// ------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_torus_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0006);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let rect = RectangleDomain::new(rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)).unwrap();
        let a = Point::new(rng.gen::<f64>() * rect.w(), rng.gen::<f64>() * rect.h());
        let b = Point::new(rng.gen::<f64>() * rect.w(), rng.gen::<f64>() * rect.h());
        let d = torus_distance(a, b, &rect);
        let mut brute = f64::INFINITY;
        for kx in -1..=1 {
            for ky in -1..=1 {
                let dx = a.x - b.x + kx as f64 * rect.w();
                let dy = a.y - b.y + ky as f64 * rect.h();
                brute = brute.min(dx.hypot(dy));
            }
        }
        let err = (d - brute).abs();
        worst = worst.max(err);
        assert!(err <= 1e-12, "wrap distance {d} vs 3x3-image minimum {brute}");
    }
    let rect = RectangleDomain::new(3.0, 2.0).unwrap();
    for _ in 0..10_000 {
        let mut p = || Point::new(rng.gen::<f64>() * rect.w(), rng.gen::<f64>() * rect.h());
        let (a, b, c) = (p(), p(), p());
        let lhs = torus_distance(a, c, &rect);
        let rhs = torus_distance(a, b, &rect) + torus_distance(b, c, &rect);
        assert!(lhs <= rhs + 1e-12, "triangle inequality: {lhs} > {rhs}");
    }
    println!(
        "criterion 06 torus-metric: PASS (10^4 pairs vs brute force, worst gap {worst:.1e}; 10^4 triangle inequalities)"
    );
}

// ------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_hex_lattice_identities() {
    let rects = [(6.84, 4.90), (1.0, 0.663), (3.0, 2.0), (1.0, 1.117), (2.0, 5.0)];
    let counts = [8, 36, 100, 112, 180];
    let mut checked = 0;
    let mut worst_id = 0.0_f64;
    for (w, h) in rects {
        let rect = RectangleDomain::new(w, h).unwrap();
        for l in counts {
            let Ok(lat) = place_lattice(&rect, l, Tiling::Hexagonal) else {
                continue;
            };
            let lr = lat.len() as f64;
            let area = rect.area();
            let r_expect = (2.0 * area / (3.0 * SQRT3 * lr)).sqrt();
            let rel_r = ((lat.cell_radius() - r_expect) / r_expect).abs();
            let rel_area = (lr * 1.5 * SQRT3 * lat.cell_radius().powi(2) - area).abs() / area;
            worst_id = worst_id.max(rel_r).max(rel_area);
            assert!(rel_r < 1e-9, "cell radius identity off by {rel_r:.2e}");
            assert!(rel_area < 1e-9, "area identity off by {rel_area:.2e}");
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} feasible lattices generated");
    // grid-measured torus Voronoi areas: all cells congruent, so every area
    // equals |R|/L up to the sampling resolution h * perimeter
    let mut worst_rel = 0.0_f64;
    for (w, h, l, grid) in [(6.84, 4.90, 100, 420), (3.0, 2.0, 8, 360)] {
        let rect = RectangleDomain::new(w, h).unwrap();
        let lat = place_lattice(&rect, l, Tiling::Hexagonal).unwrap();
        let native = lat.native_rectangle();
        let part = voronoi_on_torus(native, lat.sites(), grid).unwrap();
        let expect = native.area() / lat.len() as f64;
        let hh = (native.w() / grid as f64).max(native.h() / grid as f64);
        let tol = 2.0 * hh * 6.0 * lat.cell_radius();
        for (cell, &a) in part.areas.iter().enumerate() {
            let err = (a - expect).abs();
            worst_rel = worst_rel.max(err / expect);
            assert!(
                err <= tol,
                "cell {cell}: grid area {a} vs |R|/L {expect} (tol {tol:.2e})"
            );
        }
    }
    println!(
        "criterion 07 hex-lattice-identities: PASS ({checked} lattices, worst identity error {worst_id:.1e}; torus Voronoi areas within grid tolerance, worst rel dev {worst_rel:.1e})"
    );
}

// ------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_canonical_load_monotone_in_sites_and_pathloss() {
    let sc = Scenario::from_json(&scenario_doc("capacity_sweep")).unwrap();
    let keep = tempfile::tempdir().unwrap();
    let rows = analyze_sweep(
        &sc,
        &AnalyzeOptions {
            out_dir: keep.path().to_path_buf(),
            grid: None,
            cached_map: None,
        },
    )
    .unwrap();
    assert_eq!(rows.len(), 28, "expected the full 4x7 sweep");
    let mut table: HashMap<(u64, usize), f64> = HashMap::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut ls: Vec<usize> = Vec::new();
    for row in &rows {
        assert_eq!(
            row.l_realized,
            Some(row.l_requested),
            "beta {} L {} did not snap exactly",
            row.beta,
            row.l_requested
        );
        let alpha = row
            .alpha_c
            .unwrap_or_else(|| panic!("beta {} L {} infeasible", row.beta, row.l_requested));
        table.insert((row.beta.to_bits(), row.l_requested), alpha);
        if !betas.contains(&row.beta) {
            betas.push(row.beta);
        }
        if !ls.contains(&row.l_requested) {
            ls.push(row.l_requested);
        }
    }
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ls.sort_unstable();
    for &beta in &betas {
        for pair in ls.windows(2) {
            let (a, b) = (
                table[&(beta.to_bits(), pair[0])],
                table[&(beta.to_bits(), pair[1])],
            );
            assert!(
                a > b,
                "load not strictly decreasing in L at beta {beta}: alpha({}) = {a} <= alpha({}) = {b}",
                pair[0],
                pair[1]
            );
        }
    }
    for &l in &ls {
        for pair in betas.windows(2) {
            let (a, b) = (
                table[&(pair[0].to_bits(), l)],
                table[&(pair[1].to_bits(), l)],
            );
            assert!(
                a > b,
                "load not strictly decreasing in path-loss exponent at L {l}"
            );
        }
    }
    println!(
        "criterion 08 capacity-sweep-monotone: PASS (28/28 feasible, strictly decreasing in L per beta and in beta per L)"
    );
}

// ------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_fixed_point_matches_scalar_oracle() {
    // two-cell toy network, plain metric: the fixed point must match an
    // independently coded scalar bisection on the same samples
    let rect = RectangleDomain::new(2.0, 1.0).unwrap();
    let poly = Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(2.0, 0.0),
        Point::new(2.0, 1.0),
        Point::new(0.0, 1.0),
    ])
    .unwrap();
    let lat = place_lattice(&rect, 2, Tiling::Rectangular).unwrap();
    let sites = lat.sites().to_vec();
    assert_eq!(sites.len(), 2);
    let grid = 200;
    let part = voronoi_in_polygon(&poly, &sites, grid).unwrap();
    let density = vec![1.0 / rect.area(); grid * grid];
    let lm = LinkModel::new(3.0, 1e-2, 5e6, 1e5).unwrap();
    let volume = 140.0;
    let opts = FixedPointOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let solved = load_fixed_point(
        &sites,
        &part,
        &density,
        volume,
        &lm,
        &CouplingDomain::Plane,
        &opts,
    )
    .unwrap();
    let d_area = part.element_area();
    let g = |alpha: f64| -> f64 {
        let mut acc = 0.0;
        for (p, cell) in part.samples() {
            if cell != 0 {
                continue;
            }
            let d0 = p.dist(sites[0]);
            let d1 = p.dist(sites[1]);
            let gamma = d0.powf(-3.0) / (alpha * d1.powf(-3.0) + 1e-2);
            acc += density[0] * lm.user_bandwidth(gamma) * d_area;
        }
        volume * acc / 5e6
    };
    assert!(g(1.0) <= 1.0, "toy network must be feasible");
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let gap = (solved.loads()[0] - oracle).abs();
    assert!(
        gap < 1e-8,
        "fixed point {} vs scalar oracle {oracle}",
        solved.loads()[0]
    );

    // symmetric periodic torus: per-cell loads must be flat
    let rect2 = RectangleDomain::new(3.0, 2.0).unwrap();
    let lat2 = place_lattice(&rect2, 8, Tiling::Hexagonal).unwrap();
    let native = lat2.native_rectangle();
    let g2 = 120;
    let part2 = voronoi_on_torus(native, lat2.sites(), g2).unwrap();
    let density2 = vec![1.0 / native.area(); g2 * g2];
    let lm2 = LinkModel::new(3.0, 0.0, 5e6, 1e5).unwrap();
    let v2 = load_fixed_point(
        lat2.sites(),
        &part2,
        &density2,
        60.0,
        &lm2,
        &CouplingDomain::Torus(native.clone()),
        &FixedPointOptions::default(),
    )
    .unwrap();
    let min = v2.loads().iter().copied().fold(f64::INFINITY, f64::min);
    let spread = v2.max_load() - min;
    assert!(spread < 1e-6, "symmetric torus load spread {spread:.2e}");
    let scalar = canonical_uniform_load(&lat2, 60.0, &lm2, g2, 1e-12).unwrap();
    assert!(
        (v2.mean_load() - scalar).abs() < 1e-6,
        "vector mean {} vs scalar solver {scalar}",
        v2.mean_load()
    );
    println!(
        "criterion 09 load-fixed-point-oracle: PASS (two-cell gap {gap:.1e}; symmetric torus spread {spread:.1e})"
    );
}

// ------------------------------------------------------------ criterion 10

#[test]
fn criterion_10_uniform_load_bounds_nonperiodic_cells() {
    let mut min_margin = f64::INFINITY;
    let mut runs = Vec::new();
    for (name, other) in [("district6", "hexagonal"), ("district8", "rectangular")] {
        for tiling in [None, Some(other)] {
            let out = planned(name, tiling, None);
            let r = &out.result;
            let alpha_c = r["alpha_c"].as_f64().unwrap();
            let np_max = r["canonical_nonperiodic"]["max"].as_f64().unwrap();
            assert_eq!(
                r["worst_case_bound_holds"],
                serde_json::Value::Bool(true),
                "{name} ({}) bound flag",
                tiling.unwrap_or("shipped")
            );
            assert!(
                alpha_c >= np_max,
                "{name} ({}): alpha_c {alpha_c} < nonperiodic max {np_max}",
                tiling.unwrap_or("shipped")
            );
            let margin = (alpha_c - np_max) / alpha_c;
            min_margin = min_margin.min(margin);
            runs.push(format!(
                "{name}/{} {:.1}%",
                tiling.unwrap_or("shipped"),
                100.0 * margin
            ));
        }
    }
    println!(
        "criterion 10 worst-case-bound: PASS (alpha_c >= max nonperiodic load on both districts x both tilings; margins {})",
        runs.join(", ")
    );
}

// ------------------------------------------------------------ criterion 11

#[test]
fn criterion_11_correlation_tracks_module_match() {
    let mut report = Vec::new();
    for (name, tiling) in [("district6", None), ("district8", Some("rectangular"))] {
        let base = planned(name, tiling, None);
        let r = &base.result;
        assert_eq!(
            r["module_match"].as_f64().unwrap(),
            0.0,
            "{name}: planning rectangle must match the module exactly"
        );
        let corr = r["correlation"].as_f64().unwrap();
        assert!(corr >= 0.9, "{name}: correlation {corr} below 0.9");
        let mis = planned(name, tiling, Some(1.25));
        let corr_mis = mis.result["correlation"].as_f64().unwrap();
        assert!(
            corr_mis < corr,
            "{name}: 25% aspect mismatch did not lower the correlation ({corr} -> {corr_mis})"
        );
        report.push(format!("{name} {corr:.4} -> {corr_mis:.4}"));
    }
    println!(
        "criterion 11 load-correlation: PASS (rect tiling, exact module match, Pearson >= 0.9; 25% mismatch strictly lower: {})",
        report.join("; ")
    );
}

// ------------------------------------------------------------ criterion 12

#[test]
fn criterion_12_demand_transfer_conserves_mass() {
    let mut worst_patch = 0.0_f64;
    let mut chis = Vec::new();
    let threshold = ChiSquared::new(99.0).unwrap().inverse_cdf(0.99);
    for name in ["square", "district6", "district8"] {
        let pair = map_for(name);
        let sc = Scenario::from_json(&scenario_doc(name)).unwrap();
        let field = demand_of(&sc, &pair, sc.grid);
        let polygon = &pair.quad().polygon;
        let (lo, hi) = polygon.bounding_box();
        let span = (hi.x - lo.x).min(hi.y - lo.y);
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0012);

        // 20 random interior discs: demand inside the disc vs the canonical
        // area fraction of its forward image
        let mut used = 0;
        while used < 20 {
            let radius = rng.gen_range(0.04..0.12) * span;
            let c = Point::new(
                lo.x + rng.gen::<f64>() * (hi.x - lo.x),
                lo.y + rng.gen::<f64>() * (hi.y - lo.y),
            );
            if !polygon.contains(c) || polygon.distance_to_boundary(c) <= radius * 1.05 {
                continue;
            }
            let (lhs, rhs) =
                patch_conservation_check(&pair, &field, Patch::Disc { center: c, radius }, 512)
                    .unwrap();
            let err = (lhs - rhs).abs();
            worst_patch = worst_patch.max(err);
            assert!(
                err < 1e-3,
                "{name}: patch at ({:.2},{:.2}) r={radius:.2}: demand {lhs:.6} vs image fraction {rhs:.6}",
                c.x,
                c.y
            );
            used += 1;
        }

        // pushforward uniformity: i.i.d. draws from the demand field
        // (element by mass, uniform jitter within the element, re-jittering
        // the rare draw that lands outside the polygon), forward-mapped and
        // chi-square tested against uniform 10x10 bins
        let probs = field.element_probabilities();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let total = acc;
        let n_draw = 50_000usize;
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for _ in 0..n_draw {
            let u = rng.gen::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c < u).min(probs.len() - 1);
            *counts.entry(idx).or_insert(0) += 1;
        }
        let mut sampled: Vec<(usize, u32)> = counts.into_iter().collect();
        sampled.sort_unstable(); // row-major order keeps forward maps warm
        let rect = pair.canonical_rectangle();
        let (nx, _) = field.grid_shape();
        let c00 = field.sample_point(0, 0);
        let dx = field.sample_point(1, 0).x - c00.x;
        let dy = field.sample_point(0, 1).y - c00.y;
        let mut bins = [[0u64; 10]; 10];
        let mut w_prev: Option<Complex64> = None;
        let mut mapped = 0u64;
        for (idx, count) in sampled {
            let c = field.sample_point(idx % nx, idx / nx);
            for _ in 0..count {
                let mut image = None;
                for _attempt in 0..16 {
                    let p = Point::new(
                        c.x + (rng.gen::<f64>() - 0.5) * dx,
                        c.y + (rng.gen::<f64>() - 0.5) * dy,
                    );
                    if !polygon.contains(p) {
                        continue;
                    }
                    let zeta = Complex64::new(p.x, p.y);
                    let w = match w_prev {
                        Some(w0) => pair.map_forward_from(zeta, w0),
                        None => pair.map_forward(zeta),
                    };
                    if let Ok(w) = w {
                        image = Some(w);
                        break;
                    }
                }
                let Some(w) = image else {
                    continue; // element sliver outside the polygon
                };
                w_prev = Some(w);
                let bx = ((w.re / rect.w() * 10.0).floor() as isize).clamp(0, 9) as usize;
                let by = ((w.im / rect.h() * 10.0).floor() as isize).clamp(0, 9) as usize;
                bins[by][bx] += 1;
                mapped += 1;
            }
        }
        assert!(
            mapped as f64 >= 0.998 * n_draw as f64,
            "{name}: too many unmapped samples ({mapped}/{n_draw})"
        );
        let expect = mapped as f64 / 100.0;
        let chi2: f64 = bins
            .iter()
            .flatten()
            .map(|&o| {
                let d = o as f64 - expect;
                d * d / expect
            })
            .sum();
        assert!(
            chi2 < threshold,
            "{name}: pushforward not uniform, chi2 {chi2:.1} >= {threshold:.1} (99 df, 0.01 significance)"
        );
        chis.push(format!("{name} {chi2:.1}"));
    }
    println!(
        "criterion 12 demand-conservation: PASS (60 patches, worst |gap| {worst_patch:.1e}; pushforward chi-square vs {threshold:.1}: {})",
        chis.join(", ")
    );
}

// ------------------------------------------------------------ criterion 13

#[test]
fn criterion_13_repeated_runs_byte_identical() {
    let text = scenario_doc("square");
    let sc = Scenario::from_json(&text).unwrap();
    let sha = sha_hex(text.as_bytes());
    let keep = tempfile::tempdir().unwrap();
    let dirs = [keep.path().join("a"), keep.path().join("b")];
    for dir in &dirs {
        let mut opts = RunOptions::new(dir, sha.clone());
        opts.base_dir = scenario_dir();
        let man = run_pipeline(&sc, &opts).unwrap();
        assert!(man.failure.is_none());
    }
    let mut names: Vec<String> = fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut csvs = 0;
    for name in &names {
        if name == "manifest.json" {
            continue; // wall-clock phase timings differ by design
        }
        let a = fs::read(dirs[0].join(name)).unwrap();
        let b = fs::read(dirs[1].join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between reruns");
        if name.ends_with(".csv") {
            csvs += 1;
        }
    }
    assert!(csvs >= 6, "expected the full CSV artifact set, saw {csvs}");
    println!(
        "criterion 13 deterministic-artifacts: PASS ({csvs} CSV artifacts byte-identical across independent reruns, {} files total)",
        names.len()
    );
}
