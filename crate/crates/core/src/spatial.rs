//! Uniform bucket grid for fixed-radius neighbor queries.

use crate::geom::Vec2;

/// Buckets point indices into square cells of side `cell`. A radius query
/// with `r <= cell` only needs the 3x3 block around the query cell.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    cell: f64,
    origin: Vec2,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    /// Builds a grid over the points whose index satisfies `keep`.
    pub fn build(points: &[Vec2], cell: f64, keep: impl Fn(usize) -> bool) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for (i, p) in points.iter().enumerate() {
            if keep(i) {
                any = true;
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        if !any {
            return SpatialGrid { cell, origin: Vec2::ZERO, cols: 1, rows: 1, buckets: vec![Vec::new()] };
        }
        let cols = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let rows = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut grid = SpatialGrid { cell, origin: lo, cols, rows, buckets: vec![Vec::new(); cols * rows] };
        for (i, p) in points.iter().enumerate() {
            if keep(i) {
                let (cx, cy) = grid.cell_of(*p);
                grid.buckets[cy as usize * cols + cx as usize].push(i);
            }
        }
        grid
    }

    fn cell_of(&self, p: Vec2) -> (i64, i64) {
        (((p.x - self.origin.x) / self.cell).floor() as i64, ((p.y - self.origin.y) / self.cell).floor() as i64)
    }

    /// Calls `f(j, dist_sq)` for every indexed point within `radius` of `q`
    /// (boundary inclusive). Requires `radius <= cell`.
    pub fn for_each_within(&self, points: &[Vec2], q: Vec2, radius: f64, mut f: impl FnMut(usize, f64)) {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let r2 = radius * radius;
        let (cx, cy) = self.cell_of(q);
        for dy in -1..=1 {
            let y = cy + dy;
            if y < 0 || y >= self.rows as i64 {
                continue;
            }
            for dx in -1..=1 {
                let x = cx + dx;
                if x < 0 || x >= self.cols as i64 {
                    continue;
                }
                for &j in &self.buckets[y as usize * self.cols + x as usize] {
                    let d2 = points[j].dist_sq(q);
                    if d2 <= r2 {
                        f(j, d2);
                    }
                }
            }
        }
    }
}
