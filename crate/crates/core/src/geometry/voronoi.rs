//! Grid-sampled Voronoi partitions, on the flat torus or clipped to a polygon.

use rayon::prelude::*;

use super::{torus_distance, GeometryError, Point, Polygon, RectangleDomain};

/// Which distance the partition (and later the interference model) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Metric {
    /// Wrapped distances on the torus.
    Periodic,
    /// Plain Euclidean distances, no wrap.
    Euclidean,
}

/// A cell partition sampled on a uniform grid. `assignment` is row-major
/// (`j * nx + i`), `-1` marking samples outside the domain. Areas are
/// grid-measured: `count * dx * dy`, so they sum to the grid-measured domain
/// area by construction.
#[derive(Debug, Clone)]
pub struct CellPartition {
    pub n_sites: usize,
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub assignment: Vec<i32>,
    pub areas: Vec<f64>,
}

impl CellPartition {
    pub fn element_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn sample_point(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Grid-measured domain area (sum of cell areas).
    pub fn domain_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Iterates in-domain samples as (point, cell index).
    pub fn samples(&self) -> impl Iterator<Item = (Point, usize)> + '_ {
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).filter_map(move |i| {
                let a = self.assignment[j * self.nx + i];
                (a >= 0).then(|| (self.sample_point(i, j), a as usize))
            })
        })
    }
}

fn validate_sites(sites: &[Point], n_grid: usize) -> Result<(), GeometryError> {
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    if n_grid < 2 {
        return Err(GeometryError::GridTooCoarse { n_grid });
    }
    Ok(())
}

fn assign_rows<F>(nx: usize, ny: usize, nearest: F) -> Vec<i32>
where
    F: Fn(usize, usize) -> i32 + Sync,
{
    // parallel over rows, each row filled sequentially: deterministic output
    let mut assignment = vec![0i32; nx * ny];
    assignment
        .par_chunks_mut(nx)
        .enumerate()
        .for_each(|(j, row)| {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = nearest(i, j);
            }
        });
    assignment
}

fn areas_from_assignment(assignment: &[i32], n_sites: usize, element: f64) -> Vec<f64> {
    let mut counts = vec![0usize; n_sites];
    for &a in assignment {
        if a >= 0 {
            counts[a as usize] += 1;
        }
    }
    counts.into_iter().map(|c| c as f64 * element).collect()
}

/// Nearest-site partition of the torus. Ties go to the lowest site index
/// (strict `<` comparison while scanning sites in order).
pub fn voronoi_on_torus(
    rect: &RectangleDomain,
    sites: &[Point],
    n_grid: usize,
) -> Result<CellPartition, GeometryError> {
    validate_sites(sites, n_grid)?;
    for (k, s) in sites.iter().enumerate() {
        if !(0.0..rect.w()).contains(&s.x) || !(0.0..rect.h()).contains(&s.y) {
            return Err(GeometryError::SiteOutsideDomain { site: k });
        }
    }
    let (nx, ny) = (n_grid, n_grid);
    let (dx, dy) = (rect.w() / nx as f64, rect.h() / ny as f64);
    let nearest = |i: usize, j: usize| -> i32 {
        let p = Point::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
        let mut best = f64::INFINITY;
        let mut arg = 0i32;
        for (k, s) in sites.iter().enumerate() {
            let d = torus_distance(p, *s, rect);
            if d < best {
                best = d;
                arg = k as i32;
            }
        }
        arg
    };
    let assignment = assign_rows(nx, ny, nearest);
    let areas = areas_from_assignment(&assignment, sites.len(), dx * dy);
    Ok(CellPartition {
        n_sites: sites.len(),
        nx,
        ny,
        x0: 0.0,
        y0: 0.0,
        dx,
        dy,
        assignment,
        areas,
    })
}

/// Euclidean nearest-site partition restricted to a polygon. Samples outside
/// the polygon are marked `-1`; sites may lie anywhere (cells are nonempty
/// only where they win some in-polygon sample).
pub fn voronoi_in_polygon(
    polygon: &Polygon,
    sites: &[Point],
    n_grid: usize,
) -> Result<CellPartition, GeometryError> {
    validate_sites(sites, n_grid)?;
    let (lo, hi) = polygon.bounding_box();
    let (nx, ny) = (n_grid, n_grid);
    let dx = (hi.x - lo.x) / nx as f64;
    let dy = (hi.y - lo.y) / ny as f64;
    let nearest = |i: usize, j: usize| -> i32 {
        let p = Point::new(
            lo.x + (i as f64 + 0.5) * dx,
            lo.y + (j as f64 + 0.5) * dy,
        );
        if !polygon.contains(p) {
            return -1;
        }
        let mut best = f64::INFINITY;
        let mut arg = 0i32;
        for (k, s) in sites.iter().enumerate() {
            let d = p.dist(*s);
            if d < best {
                best = d;
                arg = k as i32;
            }
        }
        arg
    };
    let assignment = assign_rows(nx, ny, nearest);
    let areas = areas_from_assignment(&assignment, sites.len(), dx * dy);
    Ok(CellPartition {
        n_sites: sites.len(),
        nx,
        ny,
        x0: lo.x,
        y0: lo.y,
        dx,
        dy,
        assignment,
        areas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_sites_split_torus_in_half() {
        let r = RectangleDomain::new(4.0, 2.0).unwrap();
        let sites = [Point::new(1.0, 1.0), Point::new(3.0, 1.0)];
        let part = voronoi_on_torus(&r, &sites, 200).unwrap();
        assert_relative_eq!(part.areas[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(part.areas[1], 4.0, epsilon = 1e-12);
        assert_relative_eq!(part.domain_area(), r.area(), epsilon = 1e-9);
    }

    #[test]
    fn polygon_partition_covers_polygon_area() {
        let p = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        let sites = [Point::new(0.5, 0.5), Point::new(1.5, 0.5), Point::new(0.5, 1.5)];
        let n = 400;
        let part = voronoi_in_polygon(&p, &sites, n).unwrap();
        let tol = 2.0 / (n as f64); // boundary-cell discretization
        assert_relative_eq!(part.domain_area(), p.area(), max_relative = tol);
        assert_relative_eq!(
            part.areas.iter().sum::<f64>(),
            part.domain_area(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn tie_break_prefers_lower_index() {
        // duplicate sites: all samples must go to site 0
        let r = RectangleDomain::new(1.0, 1.0).unwrap();
        let sites = [Point::new(0.5, 0.5), Point::new(0.5, 0.5)];
        let part = voronoi_on_torus(&r, &sites, 50).unwrap();
        assert_relative_eq!(part.areas[0], 1.0, epsilon = 1e-12);
        assert_eq!(part.areas[1], 0.0);
    }

    #[test]
    fn rejects_empty_sites_and_out_of_domain() {
        let r = RectangleDomain::new(1.0, 1.0).unwrap();
        assert!(voronoi_on_torus(&r, &[], 10).is_err());
        assert!(voronoi_on_torus(&r, &[Point::new(1.5, 0.5)], 10).is_err());
    }
}
