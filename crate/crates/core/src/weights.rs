//! Matrix weights on the grid: `A₂` and `A∞` characteristics, generators and
//! weighted norms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{Cube, DyadicGrid};
use crate::linalg::{is_symmetric, min_eigenvalue, rotation2, spectral_norm, sym_exp, sym_inv, sym_pow, sym_sqrt};
use crate::norms::lr_norm;

pub const DEFAULT_DIRECTION_COUNT: usize = 64;

/// Symmetric positive-definite `n×n` matrix per cell, with the inverse field cached.
#[derive(Clone, Debug)]
pub struct MatrixWeight {
    grid: DyadicGrid,
    n: usize,
    mats: Vec<DMatrix<f64>>,
    inv: Vec<DMatrix<f64>>,
}

impl MatrixWeight {
    pub fn new(grid: DyadicGrid, n: usize, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != grid.cell_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for {} cells",
                mats.len(),
                grid.cell_count()
            )));
        }
        let mut inv = Vec::with_capacity(mats.len());
        for (cell, m) in mats.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidWeight { cell, reason: format!("expected {n}×{n} block") });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidWeight { cell, reason: "non-finite entry".into() });
            }
            if !is_symmetric(m, 1e-10) {
                return Err(Error::InvalidWeight { cell, reason: "not symmetric".into() });
            }
            if min_eigenvalue(m) <= 0.0 {
                return Err(Error::InvalidWeight { cell, reason: "not positive definite".into() });
            }
            inv.push(sym_inv(m));
        }
        Ok(MatrixWeight { grid, n, mats, inv })
    }

    /// `w(x)·I_n` from a positive scalar field.
    pub fn scalar(grid: DyadicGrid, n: usize, w: &[f64]) -> Result<Self> {
        Self::new(grid, n, w.iter().map(|v| DMatrix::identity(n, n) * *v).collect())
    }

    pub fn identity(grid: DyadicGrid, n: usize) -> Self {
        Self::scalar(grid, n, &vec![1.0; grid.cell_count()]).expect("identity is SPD")
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn at(&self, cell: usize) -> &DMatrix<f64> {
        &self.mats[cell]
    }

    pub fn inverse_at(&self, cell: usize) -> &DMatrix<f64> {
        &self.inv[cell]
    }

    pub fn inverse(&self) -> MatrixWeight {
        MatrixWeight { grid: self.grid, n: self.n, mats: self.inv.clone(), inv: self.mats.clone() }
    }

    /// Cellwise `W^t`.
    pub fn power(&self, t: f64) -> Vec<DMatrix<f64>> {
        self.mats.iter().map(|m| sym_pow(m, t)).collect()
    }

    /// The scalar weight `x ↦ e·W(x)e`.
    pub fn directional(&self, e: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(e);
        self.mats.iter().map(|m| v.dot(&(m * &v))).collect()
    }

    /// `⟨W⟩_Q` for every cube, indexed `[level][cube_index]`.
    pub fn cube_averages(&self) -> Vec<Vec<DMatrix<f64>>> {
        let n = self.n;
        let levels = self.grid.depth() as usize + 1;
        let mut out: Vec<Vec<DMatrix<f64>>> =
            (0..levels).map(|l| vec![DMatrix::zeros(n, n); self.grid.cubes_at_level(l as u32)]).collect();
        for i in 0..n {
            for j in 0..=i {
                let entry: Vec<f64> = self.mats.iter().map(|m| m[(i, j)]).collect();
                let avg = self.grid.level_averages(&entry);
                for (l, row) in avg.iter().enumerate() {
                    for (q, v) in row.iter().enumerate() {
                        out[l][q][(i, j)] = *v;
                        out[l][q][(j, i)] = *v;
                    }
                }
            }
        }
        out
    }
}

/// `(sup_Q |⟨W⟩_Q^{1/2}⟨V⟩_Q^{1/2}|², argmax cube)`.
pub fn a2_characteristic_at(w: &MatrixWeight, v: &MatrixWeight) -> Result<(f64, Cube)> {
    if w.n != v.n || w.grid != v.grid {
        return Err(Error::DimensionMismatch("weights on different grids or dimensions".into()));
    }
    let aw = w.cube_averages();
    let av = v.cube_averages();
    let mut best = (f64::NEG_INFINITY, w.grid.root());
    for (l, (rw, rv)) in aw.iter().zip(&av).enumerate() {
        for (q, (mw, mv)) in rw.iter().zip(rv).enumerate() {
            let s = spectral_norm(&(sym_sqrt(mw) * sym_sqrt(mv)));
            if s * s > best.0 {
                best = (s * s, w.grid.cube_from_index(l as u32, q));
            }
        }
    }
    Ok(best)
}

/// `[W,V]_{A₂}`.
pub fn a2_characteristic(w: &MatrixWeight, v: &MatrixWeight) -> Result<f64> {
    a2_characteristic_at(w, v).map(|r| r.0)
}

/// `[W]_{A₂} = [W, W⁻¹]_{A₂}`.
pub fn a2(w: &MatrixWeight) -> f64 {
    a2_characteristic(w, &w.inverse()).expect("same grid")
}

/// Exact dyadic `[w]_{A∞} = sup_Q w(Q)⁻¹ ∫_Q M(1_Q w)`.
///
/// Only subcubes of `Q` matter in `M(1_Q w)` on `Q`: a larger cube `Q'` has
/// average `w(Q)/|Q'| < ⟨w⟩_Q`. So `M(1_Q w)(x)` is the maximum of the
/// ancestor averages of `x` between its cell and `Q`.
pub fn ainfty_scalar(grid: &DyadicGrid, w: &[f64]) -> Result<f64> {
    if w.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch("scalar weight length".into()));
    }
    if let Some(cell) = w.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeight { cell, reason: "scalar weight must be positive".into() });
    }
    let avg = grid.level_averages(w);
    let depth = grid.depth() as usize;
    // integral of the truncated maximal function, accumulated per cube
    let mut integral: Vec<Vec<f64>> = (0..=depth).map(|l| vec![0.0; grid.cubes_at_level(l as u32)]).collect();
    for cell in 0..grid.cell_count() {
        let mut running = 0.0_f64;
        for l in (0..=depth).rev() {
            let q = grid.cube_of_cell(cell, l as u32);
            let idx = grid.cube_index(&q);
            running = running.max(avg[l][idx]);
            integral[l][idx] += running;
        }
    }
    let mut best = 1.0_f64;
    for l in 0..=depth {
        let cells_in = (grid.cell_count() / grid.cubes_at_level(l as u32)) as f64;
        for (idx, s) in integral[l].iter().enumerate() {
            // both ∫M and w(Q) carry the same cell measure
            best = best.max(s / (avg[l][idx] * cells_in));
        }
    }
    Ok(best)
}

/// Prefix-nested unit directions: coordinate axes first, then a
/// low-discrepancy sequence. Taking more directions only appends.
pub fn direction_sequence(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..n.min(count))
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut j = 1u64;
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1_5ec7);
    while out.len() < count {
        let d = match n {
            1 => break,
            2 => {
                let t = std::f64::consts::PI * radical_inverse(j, 2);
                vec![t.cos(), t.sin()]
            }
            3 => {
                let z = 1.0 - 2.0 * radical_inverse(j, 2);
                let phi = 2.0 * std::f64::consts::PI * radical_inverse(j, 3);
                let rho = (1.0 - z * z).max(0.0).sqrt();
                vec![rho * phi.cos(), rho * phi.sin(), z]
            }
            _ => {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let s = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / s).collect()
            }
        };
        j += 1;
        out.push(d);
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `max_e [e·We]_{A∞}` over the first `direction_count` nested directions;
/// a lower estimate of `[W]_{A∞}`.
pub fn ainfty_matrix(w: &MatrixWeight, direction_count: usize) -> Result<f64> {
    let mut best = 1.0_f64;
    for e in direction_sequence(w.n, direction_count.max(w.n)) {
        best = best.max(ainfty_scalar(&w.grid, &w.directional(&e))?);
    }
    Ok(best)
}

/// Scalar power weight `|x - x₀|^α` with torus distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub alpha: f64,
    /// Centre `x₀`, the same value on every axis.
    #[serde(default)]
    pub center: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Identity {
        n: usize,
    },
    /// `|x - x₀|^α · I_n`.
    ScalarPower {
        alpha: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        n: usize,
    },
    Diagonal {
        entries: Vec<PowerSpec>,
    },
    /// `W = Uᵀ Λ U` in the plane, `U(x)` the rotation by `θ₀ + slope·x₁`.
    BloomRotated {
        lambda: [PowerSpec; 2],
        #[serde(default)]
        theta0: f64,
        #[serde(default)]
        slope: f64,
    },
    /// `exp(S(x))` for a seeded smooth symmetric Fourier field `S`.
    RandomLogsmooth {
        n: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
        seed: u64,
    },
}

fn one() -> usize {
    1
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_modes() -> usize {
    3
}

impl WeightSpec {
    pub fn dim(&self) -> usize {
        match self {
            WeightSpec::Identity { n } | WeightSpec::ScalarPower { n, .. } | WeightSpec::RandomLogsmooth { n, .. } => *n,
            WeightSpec::Diagonal { entries } => entries.len(),
            WeightSpec::BloomRotated { .. } => 2,
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightSpec::Identity { n } => format!("identity(n={n})"),
            WeightSpec::ScalarPower { alpha, center, n } => format!("scalar_power(alpha={alpha},center={center},n={n})"),
            WeightSpec::Diagonal { entries } => {
                let a: Vec<String> = entries.iter().map(|e| format!("{}", e.alpha)).collect();
                format!("diagonal(alpha=[{}])", a.join(","))
            }
            WeightSpec::BloomRotated { lambda, theta0, slope } => {
                format!("bloom_rotated(alpha=[{},{}],theta0={theta0},slope={slope})", lambda[0].alpha, lambda[1].alpha)
            }
            WeightSpec::RandomLogsmooth { n, amplitude, modes, seed } => {
                format!("random_logsmooth(n={n},amplitude={amplitude},modes={modes},seed={seed})")
            }
        }
    }
}

/// A generated weight plus warnings about parameters outside the `A₂` range.
#[derive(Clone, Debug)]
pub struct GeneratedWeight {
    pub weight: MatrixWeight,
    pub flags: Vec<String>,
}

fn torus_distance(grid: &DyadicGrid, cell: usize, center: f64) -> f64 {
    let x = grid.cell_midpoint(cell);
    let mut s = 0.0;
    for xa in x.iter().take(grid.dim()) {
        let d = (xa - center).rem_euclid(1.0);
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s.sqrt()
}

fn power_field(grid: &DyadicGrid, spec: &PowerSpec, flags: &mut Vec<String>) -> Result<Vec<f64>> {
    let d = grid.dim() as f64;
    if !(spec.alpha > -d && spec.alpha < d) {
        flags.push(format!(
            "alpha = {} is outside (-{d}, {d}): not in A_2, the characteristic may blow up with L",
            spec.alpha
        ));
    }
    let w: Vec<f64> = (0..grid.cell_count()).map(|c| torus_distance(grid, c, spec.center).powf(spec.alpha)).collect();
    if let Some(cell) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidWeight { cell, reason: "power weight vanishes or blows up at a cell midpoint".into() });
    }
    Ok(w)
}

pub fn make_weight(spec: &WeightSpec, grid: DyadicGrid) -> Result<GeneratedWeight> {
    let mut flags = Vec::new();
    let cells = grid.cell_count();
    let weight = match spec {
        WeightSpec::Identity { n } => MatrixWeight::identity(grid, positive(*n)?),
        WeightSpec::ScalarPower { alpha, center, n } => {
            let w = power_field(&grid, &PowerSpec { alpha: *alpha, center: *center }, &mut flags)?;
            MatrixWeight::scalar(grid, positive(*n)?, &w)?
        }
        WeightSpec::Diagonal { entries } => {
            let n = positive(entries.len())?;
            let fields = entries.iter().map(|e| power_field(&grid, e, &mut flags)).collect::<Result<Vec<_>>>()?;
            let mats = (0..cells)
                .map(|c| DMatrix::from_diagonal(&DVector::from_iterator(n, fields.iter().map(|f| f[c]))))
                .collect();
            MatrixWeight::new(grid, n, mats)?
        }
        WeightSpec::BloomRotated { lambda, theta0, slope } => {
            let l0 = power_field(&grid, &lambda[0], &mut flags)?;
            let l1 = power_field(&grid, &lambda[1], &mut flags)?;
            let mats = (0..cells)
                .map(|c| {
                    let u = rotation2(theta0 + slope * grid.cell_midpoint(c)[0]);
                    let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![l0[c], l1[c]]));
                    let m = u.transpose() * lam * u;
                    (&m + m.transpose()) * 0.5
                })
                .collect();
            MatrixWeight::new(grid, 2, mats)?
        }
        WeightSpec::RandomLogsmooth { n, amplitude, modes, seed } => {
            let n = positive(*n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut terms = Vec::new();
            for j in 1..=*modes {
                let freq: Vec<f64> = (0..grid.dim()).map(|_| rng.random_range(-(j as i64)..=j as i64) as f64).collect();
                let mut sym = || {
                    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    (&a + a.transpose()) * (0.5 * amplitude / j as f64)
                };
                let (c, s) = (sym(), sym());
                terms.push((freq, c, s));
            }
            let mats = (0..cells)
                .map(|cell| {
                    let x = grid.cell_midpoint(cell);
                    let mut field = DMatrix::zeros(n, n);
                    for (freq, c, s) in &terms {
                        let phase: f64 = 2.0 * std::f64::consts::PI * freq.iter().zip(x.iter()).map(|(k, xa)| k * xa).sum::<f64>();
                        field += c * phase.cos() + s * phase.sin();
                    }
                    sym_exp(&field)
                })
                .collect();
            MatrixWeight::new(grid, n, mats)?
        }
    };
    Ok(GeneratedWeight { weight, flags })
}

fn positive(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("weight dimension must be positive".into()));
    }
    Ok(n)
}

/// `‖W^{1/p} f⃗‖_{L^p(𝕋; Eⁿ)}` with `‖v⃗‖_{Eⁿ} = (Σ_i ‖v_i‖_E²)^{1/2}`.
pub fn weighted_norm(f: &GridFunction, w: &MatrixWeight, p: f64) -> Result<f64> {
    if f.outer_dim() != w.n || f.grid() != &w.grid {
        return Err(Error::DimensionMismatch("function and weight disagree".into()));
    }
    let roots = w.power(1.0 / p);
    let n = w.n;
    let m = f.inner_dim();
    let r = f.inner_exponent();
    let h = w.grid.cell_measure();
    let mut acc = 0.0;
    let mut comp = vec![0.0; m];
    for (cell, root) in roots.iter().enumerate() {
        let mut sq = 0.0;
        for i in 0..n {
            comp.fill(0.0);
            for j in 0..n {
                let c = root[(i, j)];
                for (o, v) in comp.iter_mut().zip(f.value(cell, j)) {
                    *o += c * v;
                }
            }
            sq += lr_norm(&comp, r).powi(2);
        }
        acc += h * sq.sqrt().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// The weight battery used by the consistency checks: identities, power
/// weights, diagonal and rotated forms, and seeded log-smooth fields.
pub fn default_battery() -> Vec<WeightSpec> {
    let mut out = vec![WeightSpec::Identity { n: 1 }, WeightSpec::Identity { n: 2 }];
    for alpha in [-0.8, -0.5, -0.2, 0.2, 0.5, 0.8] {
        out.push(WeightSpec::ScalarPower { alpha, center: 0.0, n: 1 });
    }
    for (a, b) in [(-0.5, 0.5), (0.3, -0.7), (0.8, 0.1), (-0.3, -0.6)] {
        out.push(WeightSpec::Diagonal {
            entries: vec![PowerSpec { alpha: a, center: 0.0 }, PowerSpec { alpha: b, center: 0.3 }],
        });
    }
    for (k, (a, b, slope)) in [(0.5, -0.5, 0.0), (0.5, -0.5, 3.0), (-0.7, 0.7, 6.0), (0.2, 0.9, 1.5), (-0.4, 0.4, 12.0)]
        .into_iter()
        .enumerate()
    {
        out.push(WeightSpec::BloomRotated {
            lambda: [PowerSpec { alpha: a, center: 0.0 }, PowerSpec { alpha: b, center: 0.5 }],
            theta0: 0.3 * k as f64,
            slope,
        });
    }
    for seed in 0..7 {
        out.push(WeightSpec::RandomLogsmooth { n: 2, amplitude: 1.0, modes: 3, seed });
    }
    for seed in 0..4 {
        out.push(WeightSpec::RandomLogsmooth { n: 3, amplitude: 0.7, modes: 2, seed: 100 + seed });
    }
    for seed in 0..3 {
        out.push(WeightSpec::RandomLogsmooth { n: 1, amplitude: 1.5, modes: 4, seed: 200 + seed });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(depth: u32) -> DyadicGrid {
        DyadicGrid::line(depth)
    }

    #[test]
    fn identity_has_unit_characteristics() {
        let g = line(5);
        let w = MatrixWeight::identity(g, 2);
        assert!((a2(&w) - 1.0).abs() < 1e-12);
        assert!((ainfty_matrix(&w, 16).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cell_a2() {
        let g = line(1);
        let t = 5.0;
        let w = MatrixWeight::scalar(g, 1, &[1.0, t]).unwrap();
        let expect = (1.0 + t) / 2.0 * (1.0 + 1.0 / t) / 2.0;
        assert!((a2(&w) - expect).abs() < 1e-12);
    }

    #[test]
    fn two_cell_ainfty() {
        // M(1_Q w) = max(w(x), (1+t)/2) on Q₀, so ∫M = (max(1,a) + max(t,a))/2 with a = (1+t)/2
        let g = line(1);
        for t in [0.25, 1.0, 3.0, 10.0] {
            let a = (1.0 + t) / 2.0;
            let expect = (f64::max(1.0, a) + f64::max(t, a)) / (1.0 + t);
            assert!((ainfty_scalar(&g, &[1.0, t]).unwrap() - expect).abs() < 1e-12);
        }
    }

    fn brute_ainfty(g: &DyadicGrid, w: &[f64]) -> f64 {
        let mut best: f64 = 1.0;
        for q in g.all_cubes() {
            let cells = g.cells(&q);
            let mass: f64 = cells.iter().map(|c| w[*c]).sum();
            let mut int = 0.0;
            for &x in &cells {
                let mut mx: f64 = 0.0;
                for sub in g.descendants(&q).into_iter().chain(std::iter::once(q)) {
                    let sc = g.cells(&sub);
                    if sc.contains(&x) {
                        mx = mx.max(sc.iter().map(|c| w[*c]).sum::<f64>() / sc.len() as f64);
                    }
                }
                int += mx;
            }
            best = best.max(int / mass);
        }
        best
    }

    #[test]
    fn ainfty_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for depth in 2..5 {
            let g = line(depth);
            let w: Vec<f64> = (0..g.cell_count()).map(|_| rng.random::<f64>() * 5.0 + 0.01).collect();
            assert!((ainfty_scalar(&g, &w).unwrap() - brute_ainfty(&g, &w)).abs() < 1e-10);
        }
        let g2 = DyadicGrid::new(2, 2).unwrap();
        let w: Vec<f64> = (0..g2.cell_count()).map(|_| rng.random::<f64>() + 0.1).collect();
        assert!((ainfty_scalar(&g2, &w).unwrap() - brute_ainfty(&g2, &w)).abs() < 1e-10);
    }

    #[test]
    fn diagonal_ainfty_reduces_to_entries() {
        let g = line(6);
        let spec = WeightSpec::Diagonal {
            entries: vec![PowerSpec { alpha: 0.6, center: 0.0 }, PowerSpec { alpha: -0.4, center: 0.25 }],
        };
        let w = make_weight(&spec, g).unwrap().weight;
        let a = ainfty_scalar(&g, &w.directional(&[1.0, 0.0])).unwrap();
        let b = ainfty_scalar(&g, &w.directional(&[0.0, 1.0])).unwrap();
        assert_eq!(ainfty_matrix(&w, 2).unwrap(), a.max(b));
    }

    #[test]
    fn direction_sequence_is_nested() {
        for n in 1..=4 {
            let short = direction_sequence(n, 10);
            let long = direction_sequence(n, 40);
            assert_eq!(&long[..short.len()], &short[..]);
            for d in &long {
                assert!((d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_matrix_a2_matches_scalar_entries() {
        let g = line(6);
        let spec = WeightSpec::Diagonal {
            entries: vec![PowerSpec { alpha: 0.5, center: 0.0 }, PowerSpec { alpha: -0.3, center: 0.5 }],
        };
        let w = make_weight(&spec, g).unwrap().weight;
        let s0 = MatrixWeight::scalar(g, 1, &w.directional(&[1.0, 0.0])).unwrap();
        let s1 = MatrixWeight::scalar(g, 1, &w.directional(&[0.0, 1.0])).unwrap();
        let m = a2(&w);
        assert!((m - a2(&s0).max(a2(&s1))).abs() < 1e-10);
    }

    #[test]
    fn power_weight_stable_below_critical_exponent() {
        let spec = WeightSpec::ScalarPower { alpha: 0.5, center: 0.0, n: 1 };
        let a8 = a2(&make_weight(&spec, line(8)).unwrap().weight);
        let a10 = a2(&make_weight(&spec, line(10)).unwrap().weight);
        assert!((a10 / a8 - 1.0).abs() < 0.1, "{a8} {a10}");
    }

    #[test]
    fn power_weight_diverges_at_critical_exponent() {
        let spec = WeightSpec::ScalarPower { alpha: 1.0, center: 0.0, n: 1 };
        let mut prev = 0.0;
        for depth in 6..=12 {
            let gw = make_weight(&spec, line(depth)).unwrap();
            assert!(!gw.flags.is_empty());
            let a = a2(&gw.weight);
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn non_spd_rejected() {
        let g = line(1);
        let bad = vec![DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])];
        assert!(matches!(MatrixWeight::new(g, 2, bad), Err(Error::InvalidWeight { cell: 1, .. })));
    }

    #[test]
    fn weighted_norm_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let g = line(5);
        let f = GridFunction::from_components(g, &[
            (0..32).map(|_| rng.random::<f64>() - 0.5).collect(),
            (0..32).map(|_| rng.random::<f64>() - 0.5).collect(),
        ])
        .unwrap();
        let id = MatrixWeight::identity(g, 2);
        let plain: f64 = (0..32)
            .map(|c| g.cell_measure() * (f.value(c, 0)[0].powi(2) + f.value(c, 1)[0].powi(2)).powf(1.5))
            .sum::<f64>()
            .powf(1.0 / 3.0);
        assert!((weighted_norm(&f, &id, 3.0).unwrap() - plain).abs() < 1e-12);

        let w = make_weight(&WeightSpec::RandomLogsmooth { n: 2, amplitude: 1.0, modes: 2, seed: 4 }, g).unwrap().weight;
        let quad: f64 = (0..32)
            .map(|c| {
                let v = DVector::from_vec(vec![f.value(c, 0)[0], f.value(c, 1)[0]]);
                g.cell_measure() * v.dot(&(w.at(c) * &v))
            })
            .sum();
        assert!((weighted_norm(&f, &w, 2.0).unwrap().powi(2) - quad).abs() < 1e-10);

        let s: Vec<f64> = (0..32).map(|_| rng.random::<f64>() + 0.2).collect();
        let ws = MatrixWeight::scalar(g, 1, &s).unwrap();
        let f1 = f.component(0);
        let direct: f64 =
            (0..32).map(|c| g.cell_measure() * s[c] * f1.value(c, 0)[0].abs().powf(1.5)).sum::<f64>().powf(1.0 / 1.5);
        assert!((weighted_norm(&f1, &ws, 1.5).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn battery_obeys_ainfty_a2_bound() {
        let g = line(7);
        let battery = default_battery();
        assert!(battery.len() >= 30);
        for spec in &battery {
            let w = make_weight(spec, g).unwrap().weight;
            let ai = ainfty_matrix(&w, DEFAULT_DIRECTION_COUNT).unwrap();
            let a = a2(&w);
            assert!(a >= 1.0 - 1e-12, "{}", spec.label());
            assert!(ai <= 4.0 * a, "{}: {ai} vs {a}", spec.label());
            let inv = w.inverse();
            for c in 0..g.cell_count() {
                assert!((w.at(c) * inv.at(c) - DMatrix::identity(w.dim(), w.dim())).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn averages_square_root_round_trip() {
        let g = line(4);
        let w = make_weight(&WeightSpec::RandomLogsmooth { n: 3, amplitude: 1.0, modes: 2, seed: 9 }, g).unwrap().weight;
        for row in w.cube_averages() {
            for m in row {
                let s = sym_sqrt(&m);
                assert!((&s * &s - &m).amax() < 1e-10 * m.amax().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn a2_symmetric_under_swap(seed in 0u64..1000, slope in -5.0f64..5.0) {
            let g = line(4);
            let w = make_weight(&WeightSpec::RandomLogsmooth { n: 2, amplitude: 0.8, modes: 2, seed }, g).unwrap().weight;
            let v = make_weight(&WeightSpec::BloomRotated {
                lambda: [PowerSpec { alpha: 0.3, center: 0.0 }, PowerSpec { alpha: -0.3, center: 0.5 }],
                theta0: 0.0, slope }, g).unwrap().weight;
            let wv = a2_characteristic(&w, &v).unwrap();
            let vw = a2_characteristic(&v, &w).unwrap();
            prop_assert!((wv - vw).abs() <= 1e-10 * wv.max(1.0));
        }

        #[test]
        fn scalar_ainfty_at_least_one(vals in prop::collection::vec(0.01f64..10.0, 16)) {
            let g = line(4);
            let a = ainfty_scalar(&g, &vals).unwrap();
            prop_assert!(a >= 1.0);
            let w = MatrixWeight::scalar(g, 1, &vals).unwrap();
            prop_assert!(a <= 4.0 * a2(&w) + 1e-12);
        }
    }
}
