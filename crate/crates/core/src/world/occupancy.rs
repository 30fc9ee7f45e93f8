use std::collections::VecDeque;
use std::io::Write;

use super::{Bounds, SensorScan, WorldConfig};
use crate::geometry::Pose2;

const LOG_ODDS_FREE: f64 = -0.85;
const LOG_ODDS_OCCUPIED: f64 = 2.0;
const LOG_ODDS_CLAMP: f64 = 10.0;

/// Log-odds occupancy grid. Cells never touched by a scan stay at exactly
/// zero log-odds (p = 0.5) and are flagged unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    log_odds: Vec<f64>,
    known: Vec<bool>,
    bounds: Bounds,
    extensions: usize,
}

impl OccupancyGrid {
    /// Grid covering `bounds` exactly (rounded up to whole cells).
    pub fn new(bounds: Bounds, cell_size: f64) -> Self {
        let nx = (bounds.width() / cell_size).ceil().max(1.0) as usize;
        let ny = (bounds.height() / cell_size).ceil().max(1.0) as usize;
        Self {
            origin: [bounds.min_x, bounds.min_y],
            cell_size,
            nx,
            ny,
            log_odds: vec![0.0; nx * ny],
            known: vec![false; nx * ny],
            bounds,
            extensions: 0,
        }
    }

    pub fn for_world(config: &WorldConfig) -> Self {
        Self::new(config.bounds(), config.cell_size)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Number of times the grid had to grow because a pose left it.
    pub fn extensions(&self) -> usize {
        self.extensions
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fx = ((p[0] - self.origin[0]) / self.cell_size).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn log_odds(&self, ix: usize, iy: usize) -> f64 {
        self.log_odds[self.idx(ix, iy)]
    }

    pub fn is_known(&self, ix: usize, iy: usize) -> bool {
        self.known[self.idx(ix, iy)]
    }

    pub fn probability(&self, ix: usize, iy: usize) -> f64 {
        1.0 / (1.0 + (-self.log_odds(ix, iy)).exp())
    }

    /// Occupancy probability at a world point; 0.5 outside the grid.
    pub fn probability_at(&self, p: [f64; 2]) -> f64 {
        self.cell_of(p).map_or(0.5, |(ix, iy)| self.probability(ix, iy))
    }

    pub fn in_bounds(&self, ix: usize, iy: usize) -> bool {
        self.bounds.contains(self.cell_center(ix, iy))
    }

    /// Sets a cell directly. Intended for fixtures.
    pub fn set_log_odds(&mut self, ix: usize, iy: usize, value: f64) {
        let i = self.idx(ix, iy);
        self.log_odds[i] = value.clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP);
        self.known[i] = true;
    }

    fn extend_to(&mut self, p: [f64; 2]) {
        let cs = self.cell_size;
        let pad_lo_x = ((self.origin[0] - p[0]) / cs).ceil().max(0.0) as usize;
        let pad_lo_y = ((self.origin[1] - p[1]) / cs).ceil().max(0.0) as usize;
        let max_x = self.origin[0] + self.nx as f64 * cs;
        let max_y = self.origin[1] + self.ny as f64 * cs;
        let pad_hi_x = ((p[0] - max_x) / cs).floor().max(-1.0) as i64 + 1;
        let pad_hi_y = ((p[1] - max_y) / cs).floor().max(-1.0) as i64 + 1;
        let (pad_hi_x, pad_hi_y) = (pad_hi_x.max(0) as usize, pad_hi_y.max(0) as usize);
        let nx = self.nx + pad_lo_x + pad_hi_x;
        let ny = self.ny + pad_lo_y + pad_hi_y;
        let mut log_odds = vec![0.0; nx * ny];
        let mut known = vec![false; nx * ny];
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let dst = (iy + pad_lo_y) * nx + ix + pad_lo_x;
                log_odds[dst] = self.log_odds[self.idx(ix, iy)];
                known[dst] = self.known[self.idx(ix, iy)];
            }
        }
        self.origin = [self.origin[0] - pad_lo_x as f64 * cs, self.origin[1] - pad_lo_y as f64 * cs];
        self.nx = nx;
        self.ny = ny;
        self.log_odds = log_odds;
        self.known = known;
        self.extensions += 1;
    }

    /// Marks every cell whose center lies within sensor range of `pose` as
    /// free, except cells holding an observed landmark, which are marked
    /// occupied. Landmarks do not occlude, so no ray casting is needed.
    pub fn update(&mut self, pose: &Pose2, scan: &SensorScan, config: &WorldConfig) {
        debug_assert!(pose.is_finite());
        if self.cell_of(pose.position()).is_none() {
            self.extend_to(pose.position());
        }
        let range = config.sensor_range;
        let occupied: Vec<usize> = scan
            .iter()
            .filter_map(|m| {
                let a = pose.theta + m.bearing;
                self.cell_of([pose.x + m.range * a.cos(), pose.y + m.range * a.sin()])
            })
            .map(|(ix, iy)| self.idx(ix, iy))
            .collect();
        let cs = self.cell_size;
        let lo_x = (((pose.x - range - self.origin[0]) / cs).floor().max(0.0)) as usize;
        let lo_y = (((pose.y - range - self.origin[1]) / cs).floor().max(0.0)) as usize;
        let hi_x = ((((pose.x + range - self.origin[0]) / cs).ceil()) as usize).min(self.nx);
        let hi_y = ((((pose.y + range - self.origin[1]) / cs).ceil()) as usize).min(self.ny);
        for iy in lo_y..hi_y {
            for ix in lo_x..hi_x {
                let c = self.cell_center(ix, iy);
                if pose.distance_to(c) > range {
                    continue;
                }
                let i = self.idx(ix, iy);
                let delta = if occupied.contains(&i) { LOG_ODDS_OCCUPIED } else { LOG_ODDS_FREE };
                self.log_odds[i] = (self.log_odds[i] + delta).clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP);
                self.known[i] = true;
            }
        }
        // Landmark cells whose center sits just outside the disk.
        for &i in &occupied {
            if !self.known[i] || self.log_odds[i] < 0.0 {
                self.log_odds[i] = (self.log_odds[i].max(0.0) + LOG_ODDS_OCCUPIED).min(LOG_ODDS_CLAMP);
                self.known[i] = true;
            }
        }
    }

    /// Shannon entropy of the in-bounds cells, in bits.
    pub fn entropy_bits(&self) -> f64 {
        let mut h = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if !self.in_bounds(ix, iy) {
                    continue;
                }
                let p = self.probability(ix, iy);
                if p > 0.0 && p < 1.0 {
                    h -= p * p.log2() + (1.0 - p) * (1.0 - p).log2();
                }
            }
        }
        h
    }

    pub fn in_bounds_cells(&self) -> usize {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| self.in_bounds(ix, iy))
            .count()
    }

    /// Plain-text export: two header lines, then one row of probabilities per
    /// grid row, lowest y first.
    pub fn write_matrix<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# origin {} {}", self.origin[0], self.origin[1])?;
        writeln!(w, "# cell_size {}", self.cell_size)?;
        for iy in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|ix| self.probability(ix, iy).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Fraction of in-bounds cells that have been observed.
pub fn coverage_fraction(grid: &OccupancyGrid, bounds: &Bounds) -> f64 {
    let (nx, ny) = grid.dims();
    let (mut total, mut seen) = (0usize, 0usize);
    for iy in 0..ny {
        for ix in 0..nx {
            if bounds.contains(grid.cell_center(ix, iy)) {
                total += 1;
                if grid.is_known(ix, iy) {
                    seen += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        seen as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frontier {
    pub x: f64,
    pub y: f64,
    /// Cells in the boundary segment this waypoint represents.
    pub cluster_size: usize,
}

impl Frontier {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

pub type FrontierSet = Vec<Frontier>;

/// Free cells with an unknown 4-neighbour, grouped into 8-connected clusters.
/// Clusters below `min_cluster_cells` are dropped; clusters above
/// `max_frontier_cells` are split into compact segments. Each segment yields
/// one waypoint at its cell nearest the segment centroid.
pub fn detect_frontiers(grid: &OccupancyGrid, config: &WorldConfig) -> FrontierSet {
    let (nx, ny) = grid.dims();
    let free = |ix: usize, iy: usize| grid.is_known(ix, iy) && grid.log_odds(ix, iy) < 0.0;
    let unknown = |ix: i64, iy: i64| {
        ix >= 0
            && iy >= 0
            && (ix as usize) < nx
            && (iy as usize) < ny
            && grid.in_bounds(ix as usize, iy as usize)
            && !grid.is_known(ix as usize, iy as usize)
    };
    let mut boundary = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            if !grid.in_bounds(ix, iy) || !free(ix, iy) {
                continue;
            }
            let (x, y) = (ix as i64, iy as i64);
            if unknown(x - 1, y) || unknown(x + 1, y) || unknown(x, y - 1) || unknown(x, y + 1) {
                boundary[iy * nx + ix] = true;
            }
        }
    }

    let mut visited = vec![false; nx * ny];
    let mut frontiers = Vec::new();
    for start in 0..nx * ny {
        if !boundary[start] || visited[start] {
            continue;
        }
        let mut cluster = Vec::new();
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(i) = queue.pop_front() {
            cluster.push(i);
            let (ix, iy) = ((i % nx) as i64, (i / nx) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                        continue;
                    }
                    let j = jy as usize * nx + jx as usize;
                    if boundary[j] && !visited[j] {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if cluster.len() < config.min_cluster_cells {
            continue;
        }
        let points: Vec<[f64; 2]> = cluster.iter().map(|&i| grid.cell_center(i % nx, i / nx)).collect();
        for segment in split_cluster(&points, config.max_frontier_cells) {
            if segment.is_empty() {
                continue;
            }
            let n = segment.len() as f64;
            let cx = segment.iter().map(|&k| points[k][0]).sum::<f64>() / n;
            let cy = segment.iter().map(|&k| points[k][1]).sum::<f64>() / n;
            let best = segment
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = (points[a][0] - cx).powi(2) + (points[a][1] - cy).powi(2);
                    let db = (points[b][0] - cx).powi(2) + (points[b][1] - cy).powi(2);
                    da.total_cmp(&db)
                })
                .expect("non-empty segment");
            frontiers.push(Frontier { x: points[best][0], y: points[best][1], cluster_size: segment.len() });
        }
    }
    frontiers
}

/// Deterministic k-means split with farthest-point seeding.
fn split_cluster(points: &[[f64; 2]], max_cells: usize) -> Vec<Vec<usize>> {
    let k = points.len().div_ceil(max_cells);
    if k <= 1 {
        return vec![(0..points.len()).collect()];
    }
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut centers = vec![points[0]];
    let mut nearest: Vec<f64> = points.iter().map(|&p| d2(p, points[0])).collect();
    while centers.len() < k {
        let far = (0..points.len()).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b])).unwrap();
        centers.push(points[far]);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(d2(*p, points[far]));
        }
    }
    let mut assign = vec![0usize; points.len()];
    for _ in 0..8 {
        for (i, &p) in points.iter().enumerate() {
            assign[i] = (0..k).min_by(|&a, &b| d2(p, centers[a]).total_cmp(&d2(p, centers[b]))).unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64; 2]> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let n = members.len() as f64;
                *center = [members.iter().map(|p| p[0]).sum::<f64>() / n, members.iter().map(|p| p[1]).sum::<f64>() / n];
            }
        }
    }
    let mut segments = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        segments[a].push(i);
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Measurement;
    use std::f64::consts::PI;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    #[test]
    fn fresh_grid_is_unknown() {
        let g = OccupancyGrid::for_world(&cfg());
        assert_eq!(g.dims(), (40, 40));
        assert_eq!(g.probability(3, 4), 0.5);
        assert_eq!(coverage_fraction(&g, &g.bounds()), 0.0);
        assert!(detect_frontiers(&g, &cfg()).is_empty());
        assert!((g.entropy_bits() - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn disk_update_frees_cells_and_marks_landmark() {
        let c = cfg();
        let mut g = OccupancyGrid::for_world(&c);
        let pose = Pose2::new(20.0, 20.0, 0.0);
        let scan = vec![Measurement { landmark_id: 0, range: 3.0, bearing: PI / 2.0 }];
        g.update(&pose, &scan, &c);
        let lm = g.cell_of([20.0, 23.0]).unwrap();
        assert!(g.probability(lm.0, lm.1) > 0.5);
        let (nx, ny) = g.dims();
        for iy in 0..ny {
            for ix in 0..nx {
                let inside = pose.distance_to(g.cell_center(ix, iy)) <= 5.0;
                if (ix, iy) == lm {
                    continue;
                }
                assert_eq!(g.is_known(ix, iy), inside);
                if inside {
                    assert!(g.probability(ix, iy) < 0.5);
                }
            }
        }
        // Analytic disk area over world area, up to cell quantization.
        let cov = coverage_fraction(&g, &g.bounds());
        let expected = PI * 25.0 / 1600.0;
        assert!((cov - expected).abs() < 0.2 * expected, "{cov} vs {expected}");
    }

    #[test]
    fn repeated_scans_saturate() {
        let c = cfg();
        let mut g = OccupancyGrid::for_world(&c);
        let pose = Pose2::new(10.0, 10.0, 0.0);
        for _ in 0..40 {
            g.update(&pose, &vec![], &c);
        }
        let before = g.clone();
        g.update(&pose, &vec![], &c);
        assert_eq!(g, before);
        assert_eq!(g.log_odds(10, 10), -10.0);
    }

    #[test]
    fn single_disk_has_boundary_frontiers() {
        let c = cfg();
        let mut g = OccupancyGrid::for_world(&c);
        g.update(&Pose2::new(20.0, 20.0, 0.0), &vec![], &c);
        let f = detect_frontiers(&g, &c);
        assert!(!f.is_empty());
        for fr in &f {
            let d = fr.position();
            let r = (d[0] - 20.0).hypot(d[1] - 20.0);
            assert!(r > 3.0 && r <= 5.0, "frontier at radius {r}");
        }
    }

    #[test]
    fn fully_free_grid_has_no_frontiers() {
        let c = WorldConfig::square(6.0);
        let mut g = OccupancyGrid::for_world(&c);
        for iy in 0..6 {
            for ix in 0..6 {
                g.set_log_odds(ix, iy, -1.0);
            }
        }
        assert!(detect_frontiers(&g, &c).is_empty());
        assert_eq!(coverage_fraction(&g, &g.bounds()), 1.0);
    }

    #[test]
    fn half_observed_two_cell_grid() {
        let mut g = OccupancyGrid::new(Bounds::from_size(2.0, 1.0), 1.0);
        g.set_log_odds(0, 0, -1.0);
        assert_eq!(coverage_fraction(&g, &g.bounds()), 0.5);
    }

    #[test]
    fn grid_extends_when_pose_leaves() {
        let c = WorldConfig::square(10.0);
        let mut g = OccupancyGrid::for_world(&c);
        g.update(&Pose2::new(-3.2, 12.5, 0.0), &vec![], &c);
        assert_eq!(g.extensions(), 1);
        assert!(g.cell_of([-3.2, 12.5]).is_some());
        // Coverage still only counts the world rectangle.
        let cov = coverage_fraction(&g, &c.bounds());
        assert!(cov > 0.0 && cov < 1.0);
    }

    #[test]
    fn matrix_export_header() {
        let g = OccupancyGrid::new(Bounds::from_size(2.0, 2.0), 1.0);
        let mut out = Vec::new();
        g.write_matrix(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "# origin 0 0\n# cell_size 1\n0.5 0.5\n0.5 0.5\n");
    }
}
