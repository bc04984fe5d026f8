//! Dyadic cube systems on the periodic torus `[0,1)^d`.
//!
//! The root cube is the whole torus. A grid of depth `L` resolves cubes down to
//! level `L`, whose `2^{dL}` leaf cubes are the cells every grid function is
//! sampled on. Cells are indexed row-major with axis 0 most significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Largest supported `d·L`, i.e. at most `2^24` cells.
pub const MAX_CELL_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicGrid {
    dim: usize,
    depth: u32,
}

/// A dyadic cube `2^{-level}([0,1)^d + coords)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub level: u32,
    pub coords: [u32; MAX_DIM],
}

impl Cube {
    pub const ROOT: Cube = Cube { level: 0, coords: [0; MAX_DIM] };

    pub fn new(level: u32, coords: &[u32]) -> Self {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Cube { level, coords: c }
    }

    /// Interval `[start, end)` of a cube in `d = 1`.
    pub fn interval(&self) -> (f64, f64) {
        let len = 0.5_f64.powi(self.level as i32);
        let a = self.coords[0] as f64 * len;
        (a, a + len)
    }
}

impl DyadicGrid {
    pub fn new(dim: usize, depth: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if dim as u32 * depth > MAX_CELL_BITS {
            return Err(Error::InvalidParameter(format!(
                "grid with d={dim}, L={depth} exceeds 2^{MAX_CELL_BITS} cells"
            )));
        }
        Ok(DyadicGrid { dim, depth })
    }

    /// One-dimensional torus grid with `2^depth` cells.
    pub fn line(depth: u32) -> Self {
        Self::new(1, depth).expect("valid 1-d grid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cell_count(&self) -> usize {
        1usize << (self.dim as u32 * self.depth)
    }

    pub fn cell_measure(&self) -> f64 {
        0.5_f64.powi((self.dim as u32 * self.depth) as i32)
    }

    pub fn root(&self) -> Cube {
        Cube::ROOT
    }

    pub fn measure(&self, q: &Cube) -> f64 {
        0.5_f64.powi((self.dim as u32 * q.level) as i32)
    }

    /// Number of cells inside a cube.
    pub fn cells_in(&self, q: &Cube) -> usize {
        1usize << (self.dim as u32 * (self.depth - q.level))
    }

    pub fn side(&self, level: u32) -> u32 {
        1u32 << level
    }

    pub fn cubes_at_level(&self, level: u32) -> usize {
        1usize << (self.dim as u32 * level)
    }

    pub fn contains_cube(&self, q: &Cube) -> bool {
        q.level <= self.depth
            && q.coords[..self.dim].iter().all(|&c| c < self.side(q.level))
            && q.coords[self.dim..].iter().all(|&c| c == 0)
    }

    pub fn cell_coords(&self, cell: usize) -> [u32; MAX_DIM] {
        let bits = self.depth;
        let mask = (1usize << bits) - 1;
        let mut c = [0; MAX_DIM];
        for a in 0..self.dim {
            let shift = bits as usize * (self.dim - 1 - a);
            c[a] = ((cell >> shift) & mask) as u32;
        }
        c
    }

    pub fn cell_index(&self, coords: &[u32; MAX_DIM]) -> usize {
        let mut idx = 0usize;
        for &c in &coords[..self.dim] {
            idx = (idx << self.depth) | c as usize;
        }
        idx
    }

    /// Cell centre in `[0,1)^d`.
    pub fn cell_midpoint(&self, cell: usize) -> [f64; MAX_DIM] {
        let c = self.cell_coords(cell);
        let h = 0.5_f64.powi(self.depth as i32);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = (c[a] as f64 + 0.5) * h;
        }
        x
    }

    pub fn cube_of_cell(&self, cell: usize, level: u32) -> Cube {
        let c = self.cell_coords(cell);
        let shift = self.depth - level;
        let mut out = [0; MAX_DIM];
        for a in 0..self.dim {
            out[a] = c[a] >> shift;
        }
        Cube { level, coords: out }
    }

    /// Linear index of a cube among the cubes of its level.
    pub fn cube_index(&self, q: &Cube) -> usize {
        let mut idx = 0usize;
        for &c in &q.coords[..self.dim] {
            idx = (idx << q.level) | c as usize;
        }
        idx
    }

    pub fn cube_from_index(&self, level: u32, index: usize) -> Cube {
        let mask = (1usize << level) - 1;
        let mut c = [0; MAX_DIM];
        for a in 0..self.dim {
            let shift = level as usize * (self.dim - 1 - a);
            c[a] = ((index >> shift) & mask) as u32;
        }
        Cube { level, coords: c }
    }

    /// True when `inner ⊆ outer`.
    pub fn contains(&self, outer: &Cube, inner: &Cube) -> bool {
        if inner.level < outer.level {
            return false;
        }
        let shift = inner.level - outer.level;
        (0..self.dim).all(|a| inner.coords[a] >> shift == outer.coords[a])
    }

    pub fn children(&self, q: &Cube) -> Result<Vec<Cube>> {
        if q.level >= self.depth {
            return Err(Error::ResolutionExhausted { level: q.level, depth: self.depth });
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for mask in 0..(1u32 << self.dim) {
            let mut c = [0; MAX_DIM];
            for a in 0..self.dim {
                // axis 0 varies slowest, matching row-major cell order
                let bit = (mask >> (self.dim - 1 - a)) & 1;
                c[a] = (q.coords[a] << 1) | bit;
            }
            out.push(Cube { level: q.level + 1, coords: c });
        }
        Ok(out)
    }

    pub fn parent(&self, q: &Cube) -> Option<Cube> {
        if q.level == 0 {
            return None;
        }
        let mut c = [0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = q.coords[a] >> 1;
        }
        Some(Cube { level: q.level - 1, coords: c })
    }

    /// All dyadic subcubes of `q`, including `q`, ordered by level.
    pub fn descendants(&self, q: &Cube) -> Vec<Cube> {
        let mut out = vec![*q];
        let mut start = 0;
        while start < out.len() {
            let end = out.len();
            for i in start..end {
                if let Ok(ch) = self.children(&out[i]) {
                    out.extend(ch);
                }
            }
            start = end;
        }
        out
    }

    /// Every cube of the grid, ordered by level then linear index.
    pub fn all_cubes(&self) -> Vec<Cube> {
        (0..=self.depth)
            .flat_map(|level| (0..self.cubes_at_level(level)).map(move |i| (level, i)))
            .map(|(level, i)| self.cube_from_index(level, i))
            .collect()
    }

    /// The chain of cubes containing `cell`, from the root (index 0) to the cell itself.
    pub fn ancestors_of_cell(&self, cell: usize) -> Vec<Cube> {
        (0..=self.depth).map(|l| self.cube_of_cell(cell, l)).collect()
    }

    /// Cells of `q` in ascending order.
    pub fn cells(&self, q: &Cube) -> Vec<usize> {
        let span = 1u32 << (self.depth - q.level);
        if self.dim == 1 {
            let start = (q.coords[0] * span) as usize;
            return (start..start + span as usize).collect();
        }
        let mut out = Vec::with_capacity(self.cells_in(q));
        let mut offs = [0u32; MAX_DIM];
        loop {
            let mut c = [0; MAX_DIM];
            for a in 0..self.dim {
                c[a] = q.coords[a] * span + offs[a];
            }
            out.push(self.cell_index(&c));
            // odometer over offsets, last axis fastest
            let mut a = self.dim;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                offs[a] += 1;
                if offs[a] < span {
                    break;
                }
                offs[a] = 0;
            }
        }
    }

    /// Cells of `3Q`: the union of `Q` and its `3^d - 1` neighbours of equal size,
    /// wrapping around the torus. `3Q₀ = Q₀`.
    pub fn triple_cells(&self, q: &Cube) -> Vec<usize> {
        if q.level == 0 {
            return (0..self.cell_count()).collect();
        }
        let side = self.side(q.level) as i64;
        let mut out = Vec::new();
        let neighbours = 3usize.pow(self.dim as u32);
        for code in 0..neighbours {
            let mut c = [0u32; MAX_DIM];
            let mut rest = code;
            for a in 0..self.dim {
                let off = (rest % 3) as i64 - 1;
                rest /= 3;
                c[a] = (q.coords[a] as i64 + off).rem_euclid(side) as u32;
            }
            out.extend(self.cells(&Cube { level: q.level, coords: c }));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Maximal cubes of `𝒟(q)` satisfying `pred`: an antichain covering every
    /// cube of `𝒟(q)` on which `pred` holds.
    pub fn maximal_cubes<F>(&self, q: &Cube, mut pred: F) -> Vec<Cube>
    where
        F: FnMut(&Cube) -> bool,
    {
        let mut out = Vec::new();
        let mut stack = vec![*q];
        while let Some(c) = stack.pop() {
            if pred(&c) {
                out.push(c);
            } else if let Ok(ch) = self.children(&c) {
                stack.extend(ch.into_iter().rev());
            }
        }
        out.sort();
        out
    }

    /// Reduces a list of cubes to its maximal elements (dropping any cube contained
    /// in another listed cube) and removes duplicates.
    pub fn maximal_among(&self, cubes: &[Cube]) -> Vec<Cube> {
        let mut sorted: Vec<Cube> = cubes.to_vec();
        sorted.sort();
        sorted.dedup();
        let mut out: Vec<Cube> = Vec::new();
        for c in sorted {
            if !out.iter().any(|o| self.contains(o, &c)) {
                out.push(c);
            }
        }
        out
    }

    /// Per-cube values for every cube of the grid, computed from per-cell values
    /// by repeated child averaging. `result[level][cube_index]`.
    pub fn level_averages(&self, cell_values: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(cell_values.len(), self.cell_count());
        let mut levels = vec![Vec::new(); self.depth as usize + 1];
        levels[self.depth as usize] = cell_values.to_vec();
        let fan = 1usize << self.dim;
        for level in (0..self.depth).rev() {
            let finer = &levels[level as usize + 1];
            let count = self.cubes_at_level(level);
            let mut cur = vec![0.0; count];
            for (idx, slot) in cur.iter_mut().enumerate() {
                let q = self.cube_from_index(level, idx);
                let ch = self.children(&q).expect("level below depth");
                let s: f64 = ch.iter().map(|c| finer[self.cube_index(c)]).sum();
                *slot = s / fan as f64;
            }
            levels[level as usize] = cur;
        }
        levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_children_bisect_the_line() {
        let g = DyadicGrid::line(3);
        let ch = g.children(&g.root()).unwrap();
        assert_eq!(ch.len(), 2);
        assert_eq!(ch[0].interval(), (0.0, 0.5));
        assert_eq!(ch[1].interval(), (0.5, 1.0));
        for c in &ch {
            assert_eq!(g.parent(c), Some(g.root()));
        }
    }

    #[test]
    fn leaf_children_exhaust_resolution() {
        let g = DyadicGrid::line(2);
        let leaf = Cube::new(2, &[3]);
        assert!(matches!(g.children(&leaf), Err(Error::ResolutionExhausted { level: 2, depth: 2 })));
    }

    #[test]
    fn leaf_predicate_returns_all_cells() {
        let g = DyadicGrid::line(4);
        let leaves = g.maximal_cubes(&g.root(), |c| c.level == 4);
        assert_eq!(leaves.len(), 16);
        let mut cells: Vec<usize> = leaves.iter().flat_map(|c| g.cells(c)).collect();
        cells.sort();
        assert_eq!(cells, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn triple_wraps_on_the_line() {
        let g = DyadicGrid::line(3);
        let q = Cube::new(2, &[0]); // [0, 1/4)
        let cells = g.triple_cells(&q);
        // [3/4,1) ∪ [0,1/2) on an 8-cell grid
        assert_eq!(cells, vec![0, 1, 2, 3, 6, 7]);
        assert_eq!(g.triple_cells(&g.root()).len(), 8);
    }

    #[test]
    fn triple_of_level_one_is_the_torus() {
        let g = DyadicGrid::line(3);
        assert_eq!(g.triple_cells(&Cube::new(1, &[1])).len(), 8);
    }

    #[test]
    fn triple_in_two_dimensions_has_nine_cubes() {
        let g = DyadicGrid::new(2, 3).unwrap();
        let q = Cube::new(2, &[0, 0]);
        let cells = g.triple_cells(&q);
        assert_eq!(cells.len(), 9 * g.cells_in(&q));
        let measure = cells.len() as f64 * g.cell_measure();
        assert!((measure - (9.0 * g.measure(&q)).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn cells_of_a_two_dimensional_cube() {
        let g = DyadicGrid::new(2, 2).unwrap();
        let q = Cube::new(1, &[1, 0]);
        // rows 2..4, columns 0..2 of a 4x4 grid
        assert_eq!(g.cells(&q), vec![8, 9, 12, 13]);
        for c in g.cells(&q) {
            assert_eq!(g.cube_of_cell(c, 1), q);
        }
    }

    #[test]
    fn cube_index_round_trips() {
        let g = DyadicGrid::new(2, 3).unwrap();
        for level in 0..=3 {
            for i in 0..g.cubes_at_level(level) {
                let q = g.cube_from_index(level, i);
                assert!(g.contains_cube(&q));
                assert_eq!(g.cube_index(&q), i);
            }
        }
    }

    #[test]
    fn children_partition_measure() {
        let g = DyadicGrid::new(2, 4).unwrap();
        for q in g.all_cubes().into_iter().filter(|q| q.level < 4) {
            let ch = g.children(&q).unwrap();
            let total: f64 = ch.iter().map(|c| g.measure(c)).sum();
            assert_eq!(total, g.measure(&q));
            let mut cells: Vec<usize> = ch.iter().flat_map(|c| g.cells(c)).collect();
            cells.sort();
            assert_eq!(cells, g.cells(&q));
            for c in &ch {
                assert_eq!(g.parent(c), Some(q));
            }
        }
    }

    #[test]
    fn maximal_cubes_is_idempotent() {
        let g = DyadicGrid::line(5);
        let picked = g.maximal_cubes(&g.root(), |c| c.level >= 2 && c.coords[0] % 3 == 0);
        let again = g.maximal_among(&picked);
        assert_eq!(picked, again);
    }

    #[test]
    fn level_averages_match_direct_means() {
        let g = DyadicGrid::new(2, 3).unwrap();
        let vals: Vec<f64> = (0..g.cell_count()).map(|i| (i * 7 % 11) as f64).collect();
        let avg = g.level_averages(&vals);
        for q in g.all_cubes() {
            let cells = g.cells(&q);
            let direct: f64 = cells.iter().map(|&c| vals[c]).sum::<f64>() / cells.len() as f64;
            assert!((avg[q.level as usize][g.cube_index(&q)] - direct).abs() < 1e-12);
        }
    }
}
