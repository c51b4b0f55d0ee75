//! Exact k-nearest neighbours of 3D points on a uniform grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Grid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    start: Vec<usize>,
    items: Vec<u32>,
}

impl Grid {
    fn build(points: &[[f64; 3]], per_cell: f64) -> Grid {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-12)).collect();
        let volume = ext.iter().product::<f64>();
        let cells_wanted = (points.len() as f64 / per_cell).max(1.0);
        let mut cell = (volume / cells_wanted).cbrt();
        // flat point sets: fall back to the largest extent
        let max_ext = ext.iter().cloned().fold(0.0, f64::max);
        if !(cell.is_finite() && cell > max_ext * 1e-6) {
            cell = max_ext / cells_wanted.cbrt().max(1.0);
        }
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(1 << 10));
        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            start: Vec::new(),
            items: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.coord(p))).collect();
        let mut start = vec![0usize; ncells + 1];
        for &k in &keys {
            start[k + 1] += 1;
        }
        for i in 0..ncells {
            start[i + 1] += start[i];
        }
        let mut cursor = start.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[cursor[k]] = i as u32;
            cursor[k] += 1;
        }
        grid.start = start;
        grid.items = items;
        grid
    }

    fn coord(&self, p: &[f64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn key(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let k = self.key(c);
        &self.items[self.start[k]..self.start[k + 1]]
    }

    /// Distance from `p` to the outside of the block of cells within
    /// Chebyshev radius `r` of `center`.
    fn block_clearance(&self, p: &[f64; 3], center: [usize; 3], r: usize) -> f64 {
        let mut d = f64::INFINITY;
        for a in 0..3 {
            let lo_cell = center[a] as i64 - r as i64;
            let hi_cell = center[a] + r + 1;
            if lo_cell > 0 {
                d = d.min(p[a] - (self.origin[a] + lo_cell as f64 * self.cell));
            }
            if hi_cell < self.dims[a] {
                d = d.min(self.origin[a] + hi_cell as f64 * self.cell - p[a]);
            }
        }
        d.max(0.0)
    }

    fn covers_all(&self, center: [usize; 3], r: usize) -> bool {
        (0..3).all(|a| center[a] <= r && center[a] + r + 1 >= self.dims[a])
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

/// For each point, its `k` nearest other points by Euclidean distance,
/// closest first, ties broken by lower index. The relation is directed.
pub fn knn_graph(points: &[[f64; 3]], k: usize) -> Result<Vec<Vec<u32>>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if n <= k {
        return Err(Error::validation(format!(
            "kNN needs more than k = {k} points, got {n}"
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("kNN input has non-finite coordinates"));
    }
    let grid = Grid::build(points, 2.0);
    let out = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let p = &points[i];
            let center = grid.coord(p);
            let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
            let mut r = 0usize;
            loop {
                visit_shell(&grid, center, r, |j| {
                    if j as usize == i {
                        return;
                    }
                    let cand = Candidate {
                        dist2: dist2(p, &points[j as usize]),
                        index: j,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                });
                if grid.covers_all(center, r) {
                    break;
                }
                if heap.len() == k {
                    let clear = grid.block_clearance(p, center, r);
                    if heap.peek().unwrap().dist2 < clear * clear {
                        break;
                    }
                }
                r += 1;
            }
            let mut v = heap.into_sorted_vec();
            v.truncate(k);
            v.into_iter().map(|c| c.index).collect()
        })
        .collect();
    Ok(out)
}

/// Calls `f` on every item in cells at Chebyshev distance exactly `r`.
fn visit_shell(grid: &Grid, center: [usize; 3], r: usize, mut f: impl FnMut(u32)) {
    let lo = |a: usize| center[a].saturating_sub(r);
    let hi = |a: usize| (center[a] + r).min(grid.dims[a] - 1);
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                let ring = [x, y, z]
                    .iter()
                    .zip(center)
                    .map(|(&c, m)| c.abs_diff(m))
                    .max()
                    .unwrap();
                if ring != r {
                    continue;
                }
                for &j in grid.cell_items([x, y, z]) {
                    f(j);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[[f64; 3]], k: usize) -> Vec<Vec<u32>> {
        (0..points.len())
            .map(|i| {
                let mut c: Vec<(f64, usize)> = (0..points.len())
                    .filter(|&j| j != i)
                    .map(|j| (dist2(&points[i], &points[j]), j))
                    .collect();
                c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                c.iter().take(k).map(|&(_, j)| j as u32).collect()
            })
            .collect()
    }

    #[test]
    fn collinear_points() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        assert_eq!(knn_graph(&pts, 1).unwrap(), vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn duplicates_break_ties_by_index() {
        let pts = [[1.0, 1.0, 1.0]; 5];
        let g = knn_graph(&pts, 2).unwrap();
        assert_eq!(g[0], vec![1, 2]);
        assert_eq!(g[1], vec![0, 2]);
        assert_eq!(g[4], vec![0, 1]);
    }

    #[test]
    fn too_few_points() {
        assert!(knn_graph(&[[0.0; 3]; 3], 3).is_err());
        assert!(knn_graph(&[[0.0; 3]; 3], 0).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (n, k) in [(200, 8), (57, 5), (300, 16)] {
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>() * 3.0, rng.random::<f64>() * 0.2])
                .collect();
            assert_eq!(knn_graph(&pts, k).unwrap(), brute(&pts, k));
        }
    }

    #[test]
    fn clustered_and_planar_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<[f64; 3]> = (0..150)
            .map(|i| {
                let off = if i % 2 == 0 { -10.0 } else { 10.0 };
                [off + rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.1, 0.0]
            })
            .collect();
        pts.push([0.0, 0.0, 0.0]);
        pts.push([0.0, 0.0, 0.0]);
        assert_eq!(knn_graph(&pts, 7).unwrap(), brute(&pts, 7));
    }
}
