//! Grid functions valued in `Eⁿ` with `E = (ℝᵐ, ℓʳ)`.
//!
//! Storage is cell-major: the value of component `i` at `cell` occupies
//! `values[(cell·n + i)·m .. (cell·n + i + 1)·m]`.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cube, DyadicGrid};
use crate::norms::lr_norm;

const BINARY_MAGIC: &[u8; 4] = b"CBDG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: DyadicGrid,
    outer: usize,
    inner: usize,
    inner_exponent: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: DyadicGrid, outer: usize, inner: usize, inner_exponent: f64, values: Vec<f64>) -> Result<Self> {
        if outer == 0 || inner == 0 {
            return Err(Error::InvalidParameter("value dimensions must be positive".into()));
        }
        if !(inner_exponent >= 1.0) {
            return Err(Error::InvalidParameter(format!("inner exponent {inner_exponent} < 1")));
        }
        let expected = grid.cell_count() * outer * inner;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} values for {} cells × {outer} × {inner}, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, outer, inner, inner_exponent, values })
    }

    pub fn zeros(grid: DyadicGrid, outer: usize, inner: usize, inner_exponent: f64) -> Self {
        let len = grid.cell_count() * outer * inner;
        Self::new(grid, outer, inner, inner_exponent, vec![0.0; len]).expect("consistent zero function")
    }

    pub fn scalar(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, 1, 2.0, values)
    }

    /// Builds an `ℝⁿ`-valued function from `n` scalar component arrays.
    pub fn from_components(grid: DyadicGrid, comps: &[Vec<f64>]) -> Result<Self> {
        let n = comps.len();
        let cells = grid.cell_count();
        if n == 0 || comps.iter().any(|c| c.len() != cells) {
            return Err(Error::DimensionMismatch("component arrays must each cover every cell".into()));
        }
        let mut values = vec![0.0; cells * n];
        for (i, comp) in comps.iter().enumerate() {
            for (cell, v) in comp.iter().enumerate() {
                values[cell * n + i] = *v;
            }
        }
        Self::new(grid, n, 1, 2.0, values)
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn outer_dim(&self) -> usize {
        self.outer
    }

    pub fn inner_dim(&self) -> usize {
        self.inner
    }

    pub fn inner_exponent(&self) -> f64 {
        self.inner_exponent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same data, reinterpreted with another inner norm exponent.
    pub fn with_inner_exponent(mut self, r: f64) -> Self {
        assert!(r >= 1.0);
        self.inner_exponent = r;
        self
    }

    /// The `n·m` values at a cell.
    pub fn block(&self, cell: usize) -> &[f64] {
        let w = self.outer * self.inner;
        &self.values[cell * w..(cell + 1) * w]
    }

    /// The `E`-value of component `i` at `cell`.
    pub fn value(&self, cell: usize, i: usize) -> &[f64] {
        let start = (cell * self.outer + i) * self.inner;
        &self.values[start..start + self.inner]
    }

    pub fn value_mut(&mut self, cell: usize, i: usize) -> &mut [f64] {
        let start = (cell * self.outer + i) * self.inner;
        &mut self.values[start..start + self.inner]
    }

    /// `‖f_i(x)‖_E`.
    pub fn pointwise_norm(&self, cell: usize, i: usize) -> f64 {
        lr_norm(self.value(cell, i), self.inner_exponent)
    }

    /// Component `i` as an `E`-valued function (`n = 1`).
    pub fn component(&self, i: usize) -> GridFunction {
        let cells = self.grid.cell_count();
        let mut values = Vec::with_capacity(cells * self.inner);
        for cell in 0..cells {
            values.extend_from_slice(self.value(cell, i));
        }
        GridFunction { grid: self.grid, outer: 1, inner: self.inner, inner_exponent: self.inner_exponent, values }
    }

    /// `‖f_i‖_{avL^p(S;E)}` over an arbitrary cell set `S` (normalised by `|S|`).
    pub fn local_norm_cells(&self, i: usize, cells: &[usize], p: f64) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let sum: f64 = cells.iter().map(|&c| self.pointwise_norm(c, i).powf(p)).sum();
        (sum / cells.len() as f64).powf(1.0 / p)
    }

    /// `‖f_i‖_{avL^p(Q;E)} = (|Q|⁻¹ Σ_{x∈Q} |cell|·‖f_i(x)‖_E^p)^{1/p}`.
    pub fn local_norm(&self, i: usize, q: &Cube, p: f64) -> f64 {
        self.local_norm_cells(i, &self.grid.cells(q), p)
    }

    /// `‖f_i‖_{L^p(S;E)}` with the cell measure of the grid.
    pub fn lp_norm_cells(&self, i: usize, cells: &[usize], p: f64) -> f64 {
        let h = self.grid.cell_measure();
        let sum: f64 = cells.iter().map(|&c| h * self.pointwise_norm(c, i).powf(p)).sum();
        sum.powf(1.0 / p)
    }

    /// `1_S f`.
    pub fn restrict(&self, cells: &[usize]) -> GridFunction {
        let mut out = GridFunction::zeros(self.grid, self.outer, self.inner, self.inner_exponent);
        for &c in cells {
            let w = self.outer * self.inner;
            out.values[c * w..(c + 1) * w].copy_from_slice(self.block(c));
        }
        out
    }

    /// Applies an `k×n` matrix on the outer index: `(R f)_i = Σ_j R_ij f_j`.
    pub fn map_outer(&self, r: &DMatrix<f64>) -> Result<GridFunction> {
        if r.ncols() != self.outer {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, function has {} components",
                r.ncols(),
                self.outer
            )));
        }
        let k = r.nrows();
        let cells = self.grid.cell_count();
        let mut values = vec![0.0; cells * k * self.inner];
        for cell in 0..cells {
            for i in 0..k {
                let dst = (cell * k + i) * self.inner;
                for j in 0..self.outer {
                    let coef = r[(i, j)];
                    if coef == 0.0 {
                        continue;
                    }
                    let src = self.value(cell, j);
                    for (d, s) in values[dst..dst + self.inner].iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        GridFunction::new(self.grid, k, self.inner, self.inner_exponent, values)
    }

    /// Pointwise product with a scalar function.
    pub fn scale_by(&self, weights: &[f64]) -> GridFunction {
        let mut out = self.clone();
        let w = self.outer * self.inner;
        for (cell, s) in weights.iter().enumerate() {
            for v in &mut out.values[cell * w..(cell + 1) * w] {
                *v *= s;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        let cells = self.grid.cell_count();
        let mut best = 0.0_f64;
        for cell in 0..cells {
            let sq: f64 = (0..self.outer).map(|i| self.pointwise_norm(cell, i).powi(2)).sum();
            best = best.max(sq.sqrt());
        }
        best
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    // --- serialization -------------------------------------------------------

    /// CSV layout: a header line `d,L,n,m,r`, one line with those values, then one
    /// row of `n·m` values per cell in cell order. `r` may be `inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,L,n,m,r")?;
        writeln!(
            w,
            "{},{},{},{},{}",
            self.grid.dim(),
            self.grid.depth(),
            self.outer,
            self.inner,
            format_exponent(self.inner_exponent)
        )?;
        for cell in 0..self.grid.cell_count() {
            let row: Vec<String> = self.block(cell).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines.next().ok_or_else(|| Error::Format(format!("missing {what}")))?.map_err(Error::from)
        };
        let head = next("header")?;
        if head.trim() != "d,L,n,m,r" {
            return Err(Error::Format(format!("unexpected header `{}`", head.trim())));
        }
        let shape = next("shape line")?;
        let parts: Vec<&str> = shape.trim().split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Format("shape line needs 5 fields".into()));
        }
        let int = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
        let d = int(parts[0])?;
        let depth = int(parts[1])? as u32;
        let n = int(parts[2])?;
        let m = int(parts[3])?;
        let rexp = parse_exponent(parts[4])?;
        let grid = DyadicGrid::new(d, depth)?;
        let mut values = Vec::with_capacity(grid.cell_count() * n * m);
        for cell in 0..grid.cell_count() {
            let line = next(&format!("row for cell {cell}"))?;
            let row: Vec<f64> = line
                .trim()
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("cell {cell}: `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            if row.len() != n * m {
                return Err(Error::Format(format!("cell {cell}: expected {} values, got {}", n * m, row.len())));
            }
            values.extend(row);
        }
        GridFunction::new(grid, n, m, rexp, values)
    }

    /// Binary layout: magic `CBDG`, `u32` d, L, n, m, `f64` r, then `f64` values,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        for v in [self.grid.dim() as u32, self.grid.depth(), self.outer as u32, self.inner as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.inner_exponent.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut u = [0u8; 4];
        let mut header = [0u32; 4];
        for h in &mut header {
            r.read_exact(&mut u)?;
            *h = u32::from_le_bytes(u);
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let rexp = f64::from_le_bytes(b);
        let grid = DyadicGrid::new(header[0] as usize, header[1])?;
        let (n, m) = (header[2] as usize, header[3] as usize);
        let len = grid.cell_count() * n * m;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        GridFunction::new(grid, n, m, rexp, values)
    }
}

pub(crate) fn format_exponent(r: f64) -> String {
    if r.is_infinite() {
        "inf".to_string()
    } else {
        format!("{r:?}")
    }
}

pub(crate) fn parse_exponent(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>().map_err(|e| Error::Format(format!("exponent `{t}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(depth: u32) -> DyadicGrid {
        DyadicGrid::line(depth)
    }

    #[test]
    fn constant_has_constant_local_norms() {
        let g = line(4);
        let f = GridFunction::scalar(g, vec![-3.0; 16]).unwrap();
        for q in g.all_cubes() {
            for p in [1.0, 2.0, 3.5] {
                assert!((f.local_norm(0, &q, p) - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_indicator_norms() {
        let g = line(3);
        let vals: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let f = GridFunction::scalar(g, vals).unwrap();
        let q = g.root();
        assert!((f.local_norm(0, &q, 1.0) - 0.5).abs() < 1e-15);
        assert!((f.local_norm(0, &q, 2.0) - 0.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn averaged_and_plain_norms_differ_by_measure_power() {
        let g = line(5);
        let vals: Vec<f64> = (0..32).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let f = GridFunction::scalar(g, vals).unwrap();
        for q in g.all_cubes() {
            let cells = g.cells(&q);
            for p in [1.0, 2.0, 3.0] {
                let av = f.local_norm(0, &q, p);
                let plain = f.lp_norm_cells(0, &cells, p);
                let scaled = av * g.measure(&q).powf(1.0 / p);
                assert!((scaled - plain).abs() <= 1e-12 * plain.max(1e-300));
            }
        }
    }

    #[test]
    fn vector_values_use_inner_norm() {
        let g = line(1);
        let f = GridFunction::new(g, 1, 2, f64::INFINITY, vec![3.0, -4.0, 1.0, 0.5]).unwrap();
        assert_eq!(f.pointwise_norm(0, 0), 4.0);
        let f2 = f.clone().with_inner_exponent(2.0);
        assert_eq!(f2.pointwise_norm(0, 0), 5.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(GridFunction::scalar(line(2), vec![0.0; 3]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let g = DyadicGrid::new(2, 2).unwrap();
        let vals: Vec<f64> = (0..16 * 2 * 3).map(|i| (i as f64).sin()).collect();
        let f = GridFunction::new(g, 2, 3, f64::INFINITY, vals).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(GridFunction::read_csv(&buf[..]).unwrap(), f);
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        assert_eq!(GridFunction::read_binary(&bin[..]).unwrap(), f);
    }

    #[test]
    fn csv_rejects_short_rows() {
        let text = "d,L,n,m,r\n1,1,1,2,2\n1,2\n3\n";
        assert!(matches!(GridFunction::read_csv(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn map_outer_applies_matrix() {
        let g = line(1);
        let f = GridFunction::from_components(g, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let rf = f.map_outer(&r).unwrap();
        assert_eq!(rf.value(0, 0), &[2.0]);
        assert_eq!(rf.value(0, 1), &[4.0]);
        assert_eq!(rf.value(1, 1), &[6.0]);
    }
}
