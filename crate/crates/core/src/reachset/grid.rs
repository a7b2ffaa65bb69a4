//! Rectangular state-space grids and marked-cell bitmaps.

use crate::dynamics::{State, StateBox};
use std::io::Write;
use std::sync::Arc;

/// Axis-aligned rectangular grid over a window; points on shared faces are
/// assigned to the lower-index cell, points on the outer boundary to the
/// adjacent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lower: State,
    pub upper: State,
    pub cells: [usize; 3],
    pub dim: usize,
}

impl Grid {
    pub fn new_2d(lower: [f64; 2], upper: [f64; 2], nx: usize, ny: usize) -> Arc<Self> {
        assert!(lower[0] < upper[0] && lower[1] < upper[1], "lower < upper");
        assert!(nx > 0 && ny > 0, "cells_per_axis must be positive");
        Arc::new(Grid {
            lower: [lower[0], lower[1], 0.0],
            upper: [upper[0], upper[1], 0.0],
            cells: [nx, ny, 1],
            dim: 2,
        })
    }

    pub fn new_3d(lower: [f64; 3], upper: [f64; 3], n: [usize; 3]) -> Arc<Self> {
        for i in 0..3 {
            assert!(lower[i] < upper[i], "lower < upper");
            assert!(n[i] > 0, "cells_per_axis must be positive");
        }
        Arc::new(Grid {
            lower,
            upper,
            cells: n,
            dim: 3,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn min_cell_edge(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.cell_width(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn window(&self) -> StateBox {
        StateBox {
            lower: self.lower,
            upper: self.upper,
            dim: self.dim,
        }
    }

    fn axis_index(&self, axis: usize, v: f64) -> Option<usize> {
        let lo = self.lower[axis];
        let hi = self.upper[axis];
        let n = self.cells[axis];
        if v < lo || v > hi {
            return None;
        }
        if v == lo {
            return Some(0);
        }
        // shared faces go to the lower-index cell
        let t = (v - lo) / self.cell_width(axis);
        let ceil = t.ceil();
        let idx = if ceil == t { t as usize - 1 } else { t as usize };
        Some(idx.min(n - 1))
    }

    /// Flattened cell index of a point, or `None` outside the window.
    pub fn cell_of(&self, p: &State) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for axis in 0..self.dim {
            let i = self.axis_index(axis, p[axis])?;
            idx += i * stride;
            stride *= self.cells[axis];
        }
        Some(idx)
    }

    /// Per-axis indices of a flattened cell index.
    pub fn coords_of(&self, cell: usize) -> [usize; 3] {
        let mut rest = cell;
        let mut out = [0usize; 3];
        for axis in 0..self.dim {
            out[axis] = rest % self.cells[axis];
            rest /= self.cells[axis];
        }
        out
    }

    pub fn index_of_coords(&self, coords: &[usize; 3]) -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for axis in 0..self.dim {
            idx += coords[axis] * stride;
            stride *= self.cells[axis];
        }
        idx
    }

    pub fn center(&self, cell: usize) -> State {
        let coords = self.coords_of(cell);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.lower[axis] + (coords[axis] as f64 + 0.5) * self.cell_width(axis);
        }
        p
    }

    /// Representative points of a cell: the center plus the `2^dim` corners
    /// pulled `pull` of the way toward the center.
    pub fn representatives(&self, cell: usize, pull: f64) -> Vec<State> {
        let coords = self.coords_of(cell);
        let center = self.center(cell);
        let mut reps = Vec::with_capacity(1 + (1 << self.dim));
        reps.push(center);
        for mask in 0..(1usize << self.dim) {
            let mut p = [0.0; 3];
            for axis in 0..self.dim {
                let w = self.cell_width(axis);
                let corner = self.lower[axis]
                    + (coords[axis] as f64 + if mask >> axis & 1 == 1 { 1.0 } else { 0.0 }) * w;
                p[axis] = corner + (center[axis] - corner) * pull;
            }
            reps.push(p);
        }
        reps
    }
}

/// A set of grid cells stored as a bitmap, with set algebra closed over a
/// shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    grid: Arc<Grid>,
    words: Vec<u64>,
    count: usize,
}

impl CellSet {
    pub fn empty(grid: &Arc<Grid>) -> Self {
        let n = grid.n_cells();
        CellSet {
            grid: Arc::clone(grid),
            words: vec![0; n.div_ceil(64)],
            count: 0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.words[cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn contains_point(&self, p: &State) -> bool {
        self.grid.cell_of(p).map_or(false, |c| self.contains(c))
    }

    /// Inserts a cell; returns true if it was newly marked.
    pub fn insert(&mut self, cell: usize) -> bool {
        debug_assert!(cell < self.grid.n_cells());
        let w = &mut self.words[cell / 64];
        let bit = 1u64 << (cell % 64);
        if *w & bit == 0 {
            *w |= bit;
            self.count += 1;
            true
        } else {
            false
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    fn check_same_grid(&self, other: &CellSet) {
        assert!(
            self.grid == other.grid,
            "cell-set algebra requires a shared grid"
        );
    }

    fn recount(&mut self) {
        self.count = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        self.check_same_grid(other);
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        out.recount();
        out
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.check_same_grid(other);
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
        out.recount();
        out
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        self.check_same_grid(other);
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        out.recount();
        out
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.check_same_grid(other);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        self.check_same_grid(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// Chebyshev dilation by `n` cells.
    pub fn dilate(&self, n: usize) -> CellSet {
        if n == 0 {
            return self.clone();
        }
        let g = &self.grid;
        let mut out = CellSet::empty(g);
        let r = n as isize;
        for cell in self.iter() {
            let c = g.coords_of(cell);
            let mut offs = vec![[0isize; 3]];
            for axis in 0..g.dim {
                let mut next = Vec::with_capacity(offs.len() * (2 * n + 1));
                for o in &offs {
                    for d in -r..=r {
                        let mut oo = *o;
                        oo[axis] = d;
                        next.push(oo);
                    }
                }
                offs = next;
            }
            for o in offs {
                let mut ok = true;
                let mut cc = [0usize; 3];
                for axis in 0..g.dim {
                    let v = c[axis] as isize + o[axis];
                    if v < 0 || v >= g.cells[axis] as isize {
                        ok = false;
                        break;
                    }
                    cc[axis] = v as usize;
                }
                if ok {
                    out.insert(g.index_of_coords(&cc));
                }
            }
        }
        out
    }

    /// Writes the cell list as CSV lines `i,j[,k],cx,cy[,cz]`, sorted
    /// lexicographically by the index tuple.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        let mut rows: Vec<[usize; 3]> = self.iter().map(|c| g.coords_of(c)).collect();
        rows.sort_unstable_by(|a, b| a[..g.dim].cmp(&b[..g.dim]));
        for coords in rows {
            let cell = g.index_of_coords(&coords);
            let center = g.center(cell);
            if g.dim == 2 {
                writeln!(
                    w,
                    "{},{},{},{}",
                    coords[0], coords[1], center[0], center[1]
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    coords[0], coords[1], coords[2], center[0], center[1], center[2]
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_mapping_faces_go_to_lower_cell() {
        let g = Grid::new_2d([0.0, 0.0], [1.0, 1.0], 10, 10);
        assert_eq!(g.cell_of(&[0.05, 0.05, 0.0]), Some(0));
        // interior shared face x = 0.1 belongs to cell index 0 along x
        assert_eq!(g.cell_of(&[0.1, 0.05, 0.0]), Some(0));
        assert_eq!(g.cell_of(&[0.1 + 1e-12, 0.05, 0.0]), Some(1));
        // outer boundary points belong to the adjacent cells
        assert_eq!(g.cell_of(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(g.cell_of(&[1.0, 1.0, 0.0]), Some(99));
        assert_eq!(g.cell_of(&[1.0 + 1e-12, 0.5, 0.0]), None);
        assert_eq!(g.cell_of(&[-0.1, 0.5, 0.0]), None);
    }

    #[test]
    fn coords_round_trip() {
        let g = Grid::new_2d([-0.2, -0.6], [1.2, 0.6], 150, 150);
        for cell in [0usize, 1, 149, 150, 11249, 22499] {
            assert_eq!(g.index_of_coords(&g.coords_of(cell)), cell);
            let c = g.center(cell);
            assert_eq!(g.cell_of(&c), Some(cell));
        }
        assert_eq!(g.n_cells(), 22500);
    }

    #[test]
    fn representatives_stay_inside() {
        let g = Grid::new_2d([0.0, 0.0], [1.0, 1.0], 4, 4);
        for cell in 0..16 {
            let reps = g.representatives(cell, 0.1);
            assert_eq!(reps.len(), 5);
            for r in reps {
                assert_eq!(g.cell_of(&r), Some(cell), "rep {:?} of cell {}", r, cell);
            }
        }
    }

    #[test]
    fn set_algebra() {
        let g = Grid::new_2d([0.0, 0.0], [1.0, 1.0], 8, 8);
        let mut a = CellSet::empty(&g);
        let mut b = CellSet::empty(&g);
        for c in [1usize, 2, 3] {
            a.insert(c);
        }
        for c in [3usize, 4] {
            b.insert(c);
        }
        assert_eq!(a.len(), 3);
        assert!(!a.insert(2));
        assert_eq!(a.union(&b).len(), 5);
        assert_eq!(a.intersection(&b).len(), 1);
        assert_eq!(a.difference(&b).len(), 2);
        assert!(a.intersection(&b).is_subset(&a));
        assert!(!a.is_disjoint(&b));
        assert!(a.difference(&b).is_disjoint(&b));
        let cells: Vec<usize> = a.iter().collect();
        assert_eq!(cells, vec![1, 2, 3]);
    }

    #[test]
    fn dilation() {
        let g = Grid::new_2d([0.0, 0.0], [1.0, 1.0], 8, 8);
        let mut a = CellSet::empty(&g);
        a.insert(g.index_of_coords(&[3, 3, 0]));
        let d = a.dilate(1);
        assert_eq!(d.len(), 9);
        // corner cells clip at the boundary
        let mut c = CellSet::empty(&g);
        c.insert(0);
        assert_eq!(c.dilate(1).len(), 4);
    }

    #[test]
    fn csv_sorted_lexicographically() {
        let g = Grid::new_2d([0.0, 0.0], [1.0, 1.0], 4, 4);
        let mut s = CellSet::empty(&g);
        // insert in scrambled order: (i,j) = (2,1), (0,3), (2,0)
        s.insert(g.index_of_coords(&[2, 1, 0]));
        s.insert(g.index_of_coords(&[0, 3, 0]));
        s.insert(g.index_of_coords(&[2, 0, 0]));
        let csv = s.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("0,3,"));
        assert!(lines[1].starts_with("2,0,"));
        assert!(lines[2].starts_with("2,1,"));
        assert_eq!(lines[1], "2,0,0.625,0.125");
    }
}
