//! Discrete singular integral operators, their bilinear forms, the
//! single-scale exceptional-set step and the recursive convex-body domination
//! pipeline, plus the matrix-weighted norm experiments built on them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bodies::{dot, ConvexBody, Normalization};
use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{Cube, DyadicGrid};
use crate::john::{mvee, DEFAULT_MVEE_TOL};
use crate::linalg::{spectral_norm, top_singular};
use crate::norms::{dual_exponent, duality_map, lr_norm};
use crate::sparse::{holds, verify_sparse, SparseCheck, SparseFamily, SparseMember};
use crate::weights::{a2, a2_characteristic, ainfty_matrix, MatrixWeight, DEFAULT_DIRECTION_COUNT};

/// Largest grid handled with dense kernel matrices.
pub const MAX_KERNEL_CELLS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// `K(x,y) = cot(π(x−y))` on cell midpoints, zero on the diagonal (`d = 1`).
    HilbertPeriodic,
    /// Odd kernel `c·h(t)/t^d` with `t` the torus distance and the smooth cutoff
    /// `h(t) = (1−2t)_+^{1+δ}`; `d = 1` uses the sign of `x−y`, `d = 2` the first
    /// coordinate of the wrapped difference over its length.
    DiniSmooth {
        #[serde(default = "unit")]
        c: f64,
        #[serde(default = "half")]
        delta: f64,
    },
}

fn unit() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

impl OperatorSpec {
    pub fn label(&self) -> String {
        match self {
            OperatorSpec::HilbertPeriodic => "hilbert_periodic".into(),
            OperatorSpec::DiniSmooth { c, delta } => format!("dini_smooth(c={c},delta={delta})"),
        }
    }
}

/// Dense kernel operator `Tf(x) = Σ_y |cell|·K(x,y) f(y)`, acting componentwise
/// on vector- and `E`-valued functions.
#[derive(Clone, Debug)]
pub struct KernelOperator {
    grid: DyadicGrid,
    spec: OperatorSpec,
    kernel: DMatrix<f64>,
}

/// Wrapped difference `x − y` on each axis, in `[-1/2, 1/2)`.
fn wrapped(grid: &DyadicGrid, x: usize, y: usize) -> [f64; 3] {
    let a = grid.cell_midpoint(x);
    let b = grid.cell_midpoint(y);
    let mut out = [0.0; 3];
    for k in 0..grid.dim() {
        out[k] = (a[k] - b[k] + 0.5).rem_euclid(1.0) - 0.5;
    }
    out
}

pub fn torus_distance(grid: &DyadicGrid, x: usize, y: usize) -> f64 {
    wrapped(grid, x, y).iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl KernelOperator {
    pub fn new(spec: OperatorSpec, grid: DyadicGrid) -> Result<Self> {
        let n = grid.cell_count();
        if n > MAX_KERNEL_CELLS {
            return Err(Error::InvalidParameter(format!(
                "{n} cells exceed the dense kernel limit of {MAX_KERNEL_CELLS}"
            )));
        }
        let d = grid.dim();
        let kernel = match &spec {
            OperatorSpec::HilbertPeriodic => {
                if d != 1 {
                    return Err(Error::InvalidParameter("hilbert_periodic needs d = 1".into()));
                }
                DMatrix::from_fn(n, n, |x, y| {
                    if x == y {
                        0.0
                    } else {
                        let s = wrapped(&grid, x, y)[0];
                        1.0 / (std::f64::consts::PI * s).tan()
                    }
                })
            }
            OperatorSpec::DiniSmooth { c, delta } => {
                if d > 2 {
                    return Err(Error::InvalidParameter("dini_smooth supports d ≤ 2".into()));
                }
                if !(*delta > 0.0) || !(*c > 0.0) {
                    return Err(Error::InvalidParameter("dini_smooth needs c > 0 and delta > 0".into()));
                }
                DMatrix::from_fn(n, n, |x, y| {
                    if x == y {
                        return 0.0;
                    }
                    let w = wrapped(&grid, x, y);
                    let t = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let cutoff = (1.0 - 2.0 * t).max(0.0).powf(1.0 + delta);
                    let odd = if d == 1 { w[0].signum() } else { w[0] / t };
                    c * odd * cutoff / t.powi(d as i32)
                })
            }
        };
        Ok(KernelOperator { grid, spec, kernel })
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `max |K(x,y)|·dist(x,y)^d` over off-diagonal pairs.
    pub fn size_constant(&self) -> f64 {
        let n = self.grid.cell_count();
        let d = self.grid.dim() as i32;
        let mut best = 0.0_f64;
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    best = best.max(self.kernel[(x, y)].abs() * torus_distance(&self.grid, x, y).powi(d));
                }
            }
        }
        best
    }

    /// `‖T‖_{L²→L²}`.
    pub fn l2_norm(&self) -> f64 {
        spectral_norm(&(&self.kernel * self.grid.cell_measure()))
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let all: Vec<usize> = (0..self.grid.cell_count()).collect();
        let values = self.apply_on(f, &all, &all);
        GridFunction::new(self.grid, f.outer_dim(), f.inner_dim(), f.inner_exponent(), values).expect("shape preserved")
    }

    /// `T(1_S f)` at the target cells, as `targets.len()` blocks of `n·m` values.
    pub fn apply_on(&self, f: &GridFunction, sources: &[usize], targets: &[usize]) -> Vec<f64> {
        let w = f.outer_dim() * f.inner_dim();
        let h = self.grid.cell_measure();
        let mut out = vec![0.0; targets.len() * w];
        for (t, &x) in targets.iter().enumerate() {
            let dst = &mut out[t * w..(t + 1) * w];
            for &y in sources {
                let k = self.kernel[(x, y)];
                if k == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(f.block(y)) {
                    *d += h * k * s;
                }
            }
        }
        out
    }
}

fn same_shape(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid() != g.grid() || f.outer_dim() != g.outer_dim() || f.inner_dim() != g.inner_dim() {
        return Err(Error::DimensionMismatch("f and g differ in grid or value shape".into()));
    }
    Ok(())
}

/// `t(f⃗,g⃗) = Σ_i ⟨T f_i, g_i⟩`, the `E`/`E*` pairing summed over components.
pub fn bilinear_form(t: &KernelOperator, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    same_shape(f, g)?;
    let all: Vec<usize> = (0..t.grid.cell_count()).collect();
    Ok(local_form(t, f, g, &all, &all))
}

/// `t(1_S f⃗, 1_R g⃗)` for source cells `S` and target cells `R`.
pub fn local_form(t: &KernelOperator, f: &GridFunction, g: &GridFunction, sources: &[usize], targets: &[usize]) -> f64 {
    let tf = t.apply_on(f, sources, targets);
    let w = f.outer_dim() * f.inner_dim();
    let h = t.grid.cell_measure();
    targets
        .iter()
        .enumerate()
        .map(|(k, &x)| h * tf[k * w..(k + 1) * w].iter().zip(g.block(x)).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// `a_Q = t(1_{3Q} f⃗, 1_Q g⃗)`.
pub fn cube_form(t: &KernelOperator, f: &GridFunction, g: &GridFunction, q: &Cube) -> f64 {
    local_form(t, f, g, &t.grid.triple_cells(q), &t.grid.cells(q))
}

/// Per-subcube quantities of the single-scale step on `Q`: the `3Q'` averages
/// of `‖f‖_E` and the truncation maxima `max_{ξ∈Q'} ‖T(1_{3Q∖3Q'} f)(ξ)‖_E`.
struct SubcubeData {
    cubes: Vec<Cube>,
    averages: Vec<f64>,
    truncations: Vec<f64>,
}

fn subcube_data(t: &KernelOperator, q: &Cube, f: &GridFunction) -> SubcubeData {
    let grid = &t.grid;
    let m = f.inner_dim();
    let r = f.inner_exponent();
    let triple = grid.triple_cells(q);
    let mut in_triple = vec![false; grid.cell_count()];
    for &c in &triple {
        in_triple[c] = true;
    }
    let qcells = grid.cells(q);
    let whole = t.apply_on(f, &triple, &qcells);
    let position = |cell: usize| qcells.binary_search(&cell).expect("cell of Q");

    let mut cubes = vec![*q];
    cubes.extend(grid.descendants(q));
    let mut averages = Vec::with_capacity(cubes.len());
    let mut truncations = Vec::with_capacity(cubes.len());
    for c in &cubes {
        let tc = grid.triple_cells(c);
        averages.push(f.local_norm_cells(0, &tc, 1.0));
        if c == q {
            truncations.push(0.0);
            continue;
        }
        let ccells = grid.cells(c);
        let nested = tc.iter().all(|x| in_triple[*x]);
        let part = if nested {
            let inner = t.apply_on(f, &tc, &ccells);
            let mut diff = vec![0.0; inner.len()];
            for (k, &x) in ccells.iter().enumerate() {
                let p = position(x);
                for j in 0..m {
                    diff[k * m + j] = whole[p * m + j] - inner[k * m + j];
                }
            }
            diff
        } else {
            let rest: Vec<usize> = triple.iter().copied().filter(|x| tc.binary_search(x).is_err()).collect();
            t.apply_on(f, &rest, &ccells)
        };
        let mx = (0..ccells.len()).map(|k| lr_norm(&part[k * m..(k + 1) * m], r)).fold(0.0, f64::max);
        truncations.push(mx);
    }
    SubcubeData { cubes, averages, truncations }
}

/// `M_{T,Q} f` on the cells of `Q` (in `grid.cells(Q)` order): the maximum over
/// dyadic `Q'` with `x ∈ Q' ⊆ Q` of `max_{ξ∈Q'} ‖T(1_{3Q∖3Q'} f)(ξ)‖_E`.
pub fn grand_truncation(t: &KernelOperator, q: &Cube, f: &GridFunction) -> Result<Vec<f64>> {
    if f.outer_dim() != 1 {
        return Err(Error::DimensionMismatch("grand truncation takes a single component".into()));
    }
    let data = subcube_data(t, q, f);
    Ok(chain_maximum(&t.grid, q, &data.cubes, &data.truncations))
}

fn chain_maximum(grid: &DyadicGrid, q: &Cube, cubes: &[Cube], values: &[f64]) -> Vec<f64> {
    let qcells = grid.cells(q);
    let mut out = vec![0.0_f64; qcells.len()];
    for (c, v) in cubes.iter().zip(values) {
        for x in grid.cells(c) {
            let k = qcells.binary_search(&x).expect("subcube cell");
            out[k] = out[k].max(*v);
        }
    }
    out
}

/// Smallest `λ` among the values with at most `allowed` values strictly above it.
fn quantile_threshold(values: &[f64], allowed: usize) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() - 1 - allowed.min(s.len() - 1)]
}

/// Scalar exceptional cubes of one component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarExceptional {
    pub cubes: Vec<Cube>,
    pub lambda_average: f64,
    pub lambda_truncation: f64,
    /// `Σ|Q̂_k| / |Q|`.
    pub mass_fraction: f64,
}

/// Thresholds at the `(1−ε/2)`-quantiles over `Q` of the `3Q'` maximal
/// function and of `M_{T,Q} f`; the exceptional cubes are the maximal `Q' ⊆ Q`
/// on which either quantity exceeds its threshold.
pub fn scalar_exceptional(t: &KernelOperator, q: &Cube, f: &GridFunction, eps: f64) -> ScalarExceptional {
    let grid = &t.grid;
    let data = subcube_data(t, q, f);
    let psi1 = chain_maximum(grid, q, &data.cubes, &data.averages);
    let psi2 = chain_maximum(grid, q, &data.cubes, &data.truncations);
    let allowed = (eps * psi1.len() as f64 / 2.0).floor() as usize;
    let l1 = quantile_threshold(&psi1, allowed);
    let l2 = quantile_threshold(&psi2, allowed);
    let flagged: Vec<Cube> = data
        .cubes
        .iter()
        .zip(data.averages.iter().zip(&data.truncations))
        .filter(|(_, (a, b))| **a > l1 || **b > l2)
        .map(|(c, _)| *c)
        .collect();
    let cubes = grid.maximal_among(&flagged);
    let mass: usize = cubes.iter().map(|c| grid.cells_in(c)).sum();
    ScalarExceptional {
        cubes,
        lambda_average: l1,
        lambda_truncation: l2,
        mass_fraction: mass as f64 / grid.cells_in(q) as f64,
    }
}

/// One rounded coordinate of the vector single-scale step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordinateStep {
    pub exceptional: ScalarExceptional,
    /// `‖f_i‖_{avL¹(3Q;E)}` and `‖g_i‖_{avL¹(Q;E*)}`.
    pub f_norm: f64,
    pub g_norm: f64,
    /// `|t_Q(f_i,g_i) − Σ_j t_{Q_j}(f_i,g_i)|` with the final cubes `Q_j`.
    pub residual: f64,
    /// `residual / (‖f_i‖‖g_i‖|Q|)`, 0 when the denominator vanishes.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingleScale {
    pub cube: Cube,
    /// Maximal cubes among all coordinates' exceptional cubes.
    pub exceptional: Vec<Cube>,
    pub coordinates: Vec<CoordinateStep>,
    pub rank: usize,
    pub sandwich_ratio: f64,
    pub mvee_flagged: bool,
    /// `a_Q` and `|a_Q − Σ_j a_{Q_j}|` for the vector data.
    pub a_q: f64,
    pub residual: f64,
    /// `⟨⟨f⃗⟩⟩_{avL¹(3Q)} · ⟨⟨g⃗⟩⟩_{avL¹(Q)}`.
    pub dot: f64,
    pub dot_exact: bool,
    pub mass_fraction: f64,
}

impl SingleScale {
    pub fn max_constant(&self) -> f64 {
        self.coordinates.iter().map(|c| c.constant).fold(0.0, f64::max)
    }
}

/// Single-scale step on `Q`: round `K = ⟨⟨f⃗⟩⟩_{avL¹(3Q)}`, run the scalar
/// step on each rounded coordinate `f_i = (R_K f⃗)_i`, `g_i = (R_K^{-t} g⃗)_i`
/// (within the span of `K` when it is degenerate), and keep the maximal cubes.
pub fn single_scale(
    t: &KernelOperator,
    q: &Cube,
    f: &GridFunction,
    g: &GridFunction,
    eps: f64,
    mvee_tol: f64,
) -> Result<SingleScale> {
    same_shape(f, g)?;
    let grid = t.grid;
    let n = f.outer_dim();
    if !(eps > 0.0 && eps < 1.0) || n as f64 * eps >= 1.0 {
        return Err(Error::InvalidParameter(format!("ε = {eps} must satisfy 0 < nε < 1 with n = {n}")));
    }
    let triple = grid.triple_cells(q);
    let qcells = grid.cells(q);
    let kf = ConvexBody::of_function(f, &triple, 1.0, Normalization::Averaged)?;
    let kg = ConvexBody::of_function(g, &qcells, 1.0, Normalization::Averaged)?;
    let d = dot(&kf, &kg)?;
    let a_q = cube_form(t, f, g, q);
    let ell = mvee(&kf, mvee_tol)?;
    if ell.rank() == 0 {
        return Ok(SingleScale {
            cube: *q,
            exceptional: Vec::new(),
            coordinates: Vec::new(),
            rank: 0,
            sandwich_ratio: 1.0,
            mvee_flagged: false,
            a_q,
            residual: a_q.abs(),
            dot: d.value,
            dot_exact: d.exact,
            mass_fraction: 0.0,
        });
    }
    let frame = ell.frame()?;
    let fr = f.map_outer(&frame.forward)?;
    let gr = g.map_outer(&frame.dual)?;
    let k = ell.rank();

    let comps: Vec<(GridFunction, GridFunction)> = (0..k).map(|i| (fr.component(i), gr.component(i))).collect();
    let exceptional_sets: Vec<ScalarExceptional> =
        comps.iter().map(|(fi, _)| scalar_exceptional(t, q, fi, eps)).collect();
    let all: Vec<Cube> = exceptional_sets.iter().flat_map(|e| e.cubes.iter().copied()).collect();
    let exceptional = grid.maximal_among(&all);

    let measure = grid.measure(q);
    let mut coordinates = Vec::with_capacity(k);
    for ((fi, gi), ex) in comps.iter().zip(exceptional_sets) {
        let mut diff = cube_form(t, fi, gi, q);
        for c in &exceptional {
            diff -= cube_form(t, fi, gi, c);
        }
        let f_norm = fi.local_norm_cells(0, &triple, 1.0);
        let g_norm = gi.local_norm_cells(0, &qcells, 1.0);
        let denom = f_norm * g_norm * measure;
        let constant = if denom > 0.0 { diff.abs() / denom } else { 0.0 };
        coordinates.push(CoordinateStep { exceptional: ex, f_norm, g_norm, residual: diff.abs(), constant });
    }
    let mut residual = a_q;
    for c in &exceptional {
        residual -= cube_form(t, f, g, c);
    }
    let mass: usize = exceptional.iter().map(|c| grid.cells_in(c)).sum();
    Ok(SingleScale {
        cube: *q,
        exceptional,
        coordinates,
        rank: k,
        sandwich_ratio: ell.sandwich_ratio,
        mvee_flagged: ell.flagged,
        a_q,
        residual: residual.abs(),
        dot: d.value,
        dot_exact: d.exact,
        mass_fraction: mass as f64 / grid.cells_in(q) as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub mvee_tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { epsilon: 0.05, mvee_tol: DEFAULT_MVEE_TOL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    pub operator: String,
    pub n: usize,
    pub m: usize,
    pub inner_exponent: String,
    pub epsilon: f64,
    /// `ε_n = nε`; the family is `(1−ε_n)`-sparse.
    pub epsilon_n: f64,
    pub mvee_tol: f64,
    pub family: SparseFamily,
    pub sparse_check: SparseCheck,
    pub generations: usize,
    /// Largest measured scalar single-scale constant over cubes and coordinates.
    pub c_scalar: f64,
    /// Largest measured sandwich ratio of the rounding ellipsoids.
    pub sandwich_max: f64,
    pub mvee_flagged: usize,
    /// `C_n = c·n^{3/2}·max(1+ε_mvee, ρ_max/√n)`.
    pub c_n: f64,
    /// Largest `|a_S − Σ a_R| / (|S|·dot_S)` over the family.
    pub c_vector: f64,
    /// `|t(f⃗,g⃗)|`.
    pub lhs: f64,
    /// `Σ_S |S| ⟨⟨f⃗⟩⟩_{avL¹(3S)}·⟨⟨g⃗⟩⟩_{avL¹(S)}`.
    pub sparse_form: f64,
    pub rhs: f64,
    pub verdict_ratio: f64,
    pub dominated: bool,
    pub dots_exact: bool,
    /// `|a_{Q₀} − Σ_S (a_S − Σ_{R child of S} a_R)|`.
    pub telescoping_error: f64,
    /// `max_S |a_S| / (‖T‖₂ n m 3^{d/2} ‖f⃗‖_∞ ‖g⃗‖_∞ |S|)`; at most 1.
    pub limit_ratio: f64,
    /// Largest exceptional mass fraction per cube, against `nε`.
    pub max_mass_fraction: f64,
    pub steps: Vec<SingleScale>,
}

fn entry_sup(f: &GridFunction) -> f64 {
    f.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Recursive domination: starting from the torus root, each cube's children are
/// its vector exceptional cubes, so the telescoping sum closes exactly at the
/// leaves and `|t(f⃗,g⃗)| ≤ Σ_S |a_S − Σ_R a_R| ≤ C_n Σ_S |S| dot_S`.
pub fn cbd_pipeline(t: &KernelOperator, f: &GridFunction, g: &GridFunction, cfg: &PipelineConfig) -> Result<DominationReport> {
    same_shape(f, g)?;
    let grid = t.grid;
    let n = f.outer_dim();
    let m = f.inner_dim();
    if n as f64 * cfg.epsilon >= 0.5 || !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("need 0 < nε < 1/2, got n = {n}, ε = {}", cfg.epsilon)));
    }
    let eta = 1.0 - n as f64 * cfg.epsilon;
    let total = bilinear_form(t, f, g)?;
    let mut steps = Vec::new();
    let mut members = Vec::new();
    let mut generations = 0;
    if !(f.is_zero() || g.is_zero()) {
        let mut level = vec![grid.root()];
        while !level.is_empty() {
            generations += 1;
            let mut next = Vec::new();
            for q in level {
                let step = single_scale(t, &q, f, g, cfg.epsilon, cfg.mvee_tol)?;
                let mut covered = vec![false; grid.cell_count()];
                for c in &step.exceptional {
                    for x in grid.cells(c) {
                        covered[x] = true;
                    }
                }
                let witness = grid.cells(&q).into_iter().filter(|x| !covered[*x]).collect();
                members.push(SparseMember { cube: q, witness, value: step.dot });
                next.extend(step.exceptional.iter().copied());
                steps.push(step);
            }
            level = next;
        }
    }
    members.sort_by(|a, b| a.cube.cmp(&b.cube));
    let family = SparseFamily { members, eta, provenance: "cbd_pipeline".into() };
    let sparse_check = verify_sparse(&grid, &family);

    let c_scalar = steps.iter().map(SingleScale::max_constant).fold(0.0, f64::max);
    let sandwich_max = steps.iter().map(|s| s.sandwich_ratio).fold(1.0, f64::max);
    let nf = n as f64;
    let c_n = c_scalar * nf.powf(1.5) * (1.0 + cfg.mvee_tol).max(sandwich_max / nf.sqrt());
    let sparse_form: f64 = steps.iter().map(|s| grid.measure(&s.cube) * s.dot).sum();
    let rhs = c_n * sparse_form;
    let lhs = total.abs();
    let c_vector = steps
        .iter()
        .map(|s| {
            let denom = grid.measure(&s.cube) * s.dot;
            if denom > 0.0 {
                s.residual / denom
            } else if s.residual > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let signed_sum: f64 = steps
        .iter()
        .map(|s| {
            let children: f64 = s.exceptional.iter().map(|c| cube_form(t, f, g, c)).sum();
            s.a_q - children
        })
        .sum();
    let telescoping_error = if steps.is_empty() { total.abs() } else { (total - signed_sum).abs() };
    let scale = t.l2_norm() * nf * m as f64 * 3f64.powf(grid.dim() as f64 / 2.0) * entry_sup(f) * entry_sup(g);
    let limit_ratio = steps
        .iter()
        .map(|s| if scale > 0.0 { s.a_q.abs() / (scale * grid.measure(&s.cube)) } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(DominationReport {
        operator: t.spec.label(),
        n,
        m,
        inner_exponent: crate::norms::format_exponent(f.inner_exponent()),
        epsilon: cfg.epsilon,
        epsilon_n: nf * cfg.epsilon,
        mvee_tol: cfg.mvee_tol,
        sparse_check,
        generations,
        c_scalar,
        sandwich_max,
        mvee_flagged: steps.iter().filter(|s| s.mvee_flagged).count(),
        c_n,
        c_vector,
        lhs,
        sparse_form,
        rhs,
        verdict_ratio: if lhs == 0.0 { 0.0 } else { lhs / rhs },
        dominated: holds(lhs, rhs),
        dots_exact: steps.iter().all(|s| s.dot_exact),
        telescoping_error,
        limit_ratio,
        max_mass_fraction: steps.iter().map(|s| s.mass_fraction).fold(0.0, f64::max),
        family,
        steps,
    })
}

/// `L̃` and its bound target for a sparse family and a weight pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LtildeReport {
    pub norm: f64,
    pub a2_wv: f64,
    pub ainfty_w: f64,
    pub ainfty_v: f64,
    /// `norm / ([W,V]_{A₂}[W]_{A∞}[V]_{A∞})^{1/2}`.
    pub ratio: f64,
}

/// Dense matrix of `L̃h(x) = Σ_{Q∈S} 1_Q(x) ⨏_{3Q} |V^{1/2}(x)W^{1/2}(y)| h(y) dy`
/// acting on cell values.
pub fn ltilde_matrix(grid: &DyadicGrid, cubes: &[Cube], w: &MatrixWeight, v: &MatrixWeight) -> DMatrix<f64> {
    let n = grid.cell_count();
    let mut coef = DMatrix::<f64>::zeros(n, n);
    for q in cubes {
        let triple = grid.triple_cells(q);
        let c = 1.0 / triple.len() as f64;
        for x in grid.cells(q) {
            for &y in &triple {
                coef[(x, y)] += c;
            }
        }
    }
    let wr = w.power(0.5);
    let vr = v.power(0.5);
    let scalar = w.dim() == 1;
    DMatrix::from_fn(n, n, |x, y| {
        let c: f64 = coef[(x, y)];
        if c == 0.0 {
            0.0
        } else if scalar {
            c * (vr[x][(0, 0)] * wr[y][(0, 0)]).abs()
        } else {
            c * spectral_norm(&(&vr[x] * &wr[y]))
        }
    })
}

pub fn ltilde_opnorm(grid: &DyadicGrid, cubes: &[Cube], w: &MatrixWeight, v: &MatrixWeight) -> Result<LtildeReport> {
    let norm = if cubes.is_empty() { 0.0 } else { spectral_norm(&ltilde_matrix(grid, cubes, w, v)) };
    let a2_wv = a2_characteristic(w, v)?;
    let ainfty_w = ainfty_matrix(w, DEFAULT_DIRECTION_COUNT)?;
    let ainfty_v = ainfty_matrix(v, DEFAULT_DIRECTION_COUNT)?;
    let ratio = norm / (a2_wv * ainfty_w * ainfty_v).sqrt();
    Ok(LtildeReport { norm, a2_wv, ainfty_w, ainfty_v, ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedNormBounds {
    /// Lower bound of `‖T‖_{L²(W;Eⁿ)}`; the exact norm when `exact`.
    pub lower: f64,
    pub exact: bool,
    pub a2: f64,
    /// `lower / [W]_{A₂}^{3/2}`.
    pub ratio: f64,
}

/// Matrix of `W^{1/2} T W^{-1/2}` on `ℝ^{cells·n}`, block `(x,y)` equal to
/// `|cell|·K(x,y)·W^{1/2}(x)W^{-1/2}(y)`.
pub fn conjugated_matrix(t: &KernelOperator, w: &MatrixWeight) -> DMatrix<f64> {
    let cells = t.grid.cell_count();
    let n = w.dim();
    let h = t.grid.cell_measure();
    let up = w.power(0.5);
    let down = w.power(-0.5);
    let mut out = DMatrix::zeros(cells * n, cells * n);
    for x in 0..cells {
        for y in 0..cells {
            let k = t.kernel[(x, y)];
            if k == 0.0 {
                continue;
            }
            let block = &up[x] * &down[y] * (h * k);
            out.view_mut((x * n, y * n), (n, n)).copy_from(&block);
        }
    }
    out
}

/// Norm of `T ⊗ I` on `L²(W; Eⁿ)` with `E = (ℝᵐ, ℓʳ)` and the `ℓ²` combination on `Eⁿ`.
/// For `r = 2` (or `m = 1`) the norm is the largest singular value of the
/// conjugated matrix; otherwise a dual ascent gives a lower bound.
pub fn weighted_opnorm_bounds(t: &KernelOperator, w: &MatrixWeight, m: usize, r: f64, seed: u64) -> Result<WeightedNormBounds> {
    if w.grid() != t.grid() {
        return Err(Error::DimensionMismatch("weight and operator grids differ".into()));
    }
    let b = conjugated_matrix(t, w);
    let a2w = a2(w);
    let exact = m == 1 || r == 2.0;
    let lower = if exact {
        spectral_norm(&b)
    } else {
        blocked_lr_ascent(&b, t.grid.cell_measure(), m, r, seed)
    };
    Ok(WeightedNormBounds { lower, exact, a2: a2w, ratio: lower / a2w.powf(1.5) })
}

/// Dual ascent for `sup ⟨S u, v⟩` with `u` in `L²(ℓ²_n(ℓʳ_m))` and `v` in its dual,
/// `S = B ⊗ I_m`. Starts from the top singular vector and seeded random vectors.
fn blocked_lr_ascent(b: &DMatrix<f64>, h: f64, m: usize, r: f64, seed: u64) -> f64 {
    let rows = b.nrows();
    let size = rows * m;
    let rd = dual_exponent(r);
    let apply = |u: &[f64], transpose: bool| -> Vec<f64> {
        let mut out = vec![0.0; size];
        for k in 0..m {
            let col = DVector::from_iterator(rows, (0..rows).map(|a| u[a * m + k]));
            let res = if transpose { b.transpose() * col } else { b * col };
            for a in 0..rows {
                out[a * m + k] = res[a];
            }
        }
        out
    };
    // norming element: given z measured in the exponent `s`, returns a unit vector
    // in the conjugate exponent with pairing h·Σ = norm of z
    let norming = |z: &[f64], s: f64| -> Vec<f64> {
        let norms: Vec<f64> = (0..rows).map(|a| lr_norm(&z[a * m..(a + 1) * m], s)).collect();
        let total = (h * norms.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut out = vec![0.0; size];
        if total == 0.0 {
            return out;
        }
        let mut j = vec![0.0; m];
        for a in 0..rows {
            if norms[a] == 0.0 {
                continue;
            }
            duality_map(&z[a * m..(a + 1) * m], s, &mut j);
            for k in 0..m {
                out[a * m + k] = norms[a] * j[k] / total;
            }
        }
        out
    };
    let pair = |u: &[f64], v: &[f64]| -> f64 { h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() };
    let norm_in = |u: &[f64], s: f64| -> f64 {
        (h * (0..rows).map(|a| lr_norm(&u[a * m..(a + 1) * m], s).powi(2)).sum::<f64>()).sqrt()
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let (_, _, vtop) = top_singular(b);
    for k in 0..m {
        let mut u = vec![0.0; size];
        for a in 0..rows {
            u[a * m + k] = vtop[a];
        }
        starts.push(u);
    }
    let mut all = vec![0.0; size];
    for a in 0..rows {
        for k in 0..m {
            all[a * m + k] = vtop[a];
        }
    }
    starts.push(all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        starts.push((0..size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }

    let mut best = 0.0_f64;
    for s in starts {
        let nu = norm_in(&s, r);
        if nu == 0.0 {
            continue;
        }
        let mut u: Vec<f64> = s.iter().map(|x| x / nu).collect();
        let mut prev = 0.0;
        for _ in 0..200 {
            let su = apply(&u, false);
            let v = norming(&su, r);
            let val = pair(&su, &v) / (norm_in(&u, r) * norm_in(&v, rd)).max(f64::MIN_POSITIVE);
            best = best.max(val);
            if val <= prev * (1.0 + 1e-12) {
                break;
            }
            prev = val;
            let z = apply(&v, true);
            u = norming(&z, rd);
        }
    }
    best
}

/// Lower bound of `‖A‖_{L^p→L^p}` for the matrix operator `Af(x) = Σ_y A(x,y) f(y)`
/// on cell functions with measure `h`: exact singular value for `p = 2`,
/// otherwise a multi-start power ascent. Returns the value and the attaining
/// pair `(f, g)` with `‖f‖_p = ‖g‖_{p'} = 1`.
pub fn lp_norm_lower_bound(a: &DMatrix<f64>, h: f64, p: f64, seed: u64) -> (f64, Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let pd = dual_exponent(p);
    let lp = |v: &[f64], s: f64| (h * v.iter().map(|x| x.abs().powf(s)).sum::<f64>()).powf(1.0 / s);
    let normed = |z: &[f64], s: f64| -> Vec<f64> {
        // unit vector in L^{s'} norming z ∈ L^s
        let nz = lp(z, s);
        if nz == 0.0 {
            return vec![0.0; z.len()];
        }
        z.iter().map(|x| x.signum() * (x.abs() / nz).powf(s - 1.0)).collect()
    };
    let (sigma, u, v) = top_singular(a);
    if p == 2.0 {
        let f: Vec<f64> = v.iter().map(|x| x / h.sqrt()).collect();
        let g: Vec<f64> = u.iter().map(|x| x / h.sqrt()).collect();
        return (sigma, f, g);
    }
    let mut starts = vec![v.as_slice().to_vec()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..6 {
        starts.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let mut best = (0.0, vec![0.0; n], vec![0.0; n]);
    for s in starts {
        let ns = lp(&s, p);
        if ns == 0.0 {
            continue;
        }
        let mut f: Vec<f64> = s.iter().map(|x| x / ns).collect();
        let mut prev = 0.0;
        for _ in 0..300 {
            let af = a * DVector::from_column_slice(&f);
            let g = normed(af.as_slice(), p);
            let val = h * af.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>() / (lp(&f, p) * lp(&g, pd));
            if val > best.0 {
                best = (val, f.clone(), g.clone());
            }
            if val <= prev * (1.0 + 1e-12) {
                break;
            }
            prev = val;
            let z = a.transpose() * DVector::from_column_slice(&g);
            f = normed(z.as_slice(), pd);
        }
    }
    best
}

/// Seeded function with entries uniform in `[-1, 1]`.
pub fn random_function<R: Rng + ?Sized>(grid: DyadicGrid, n: usize, m: usize, r: f64, rng: &mut R) -> GridFunction {
    let values = (0..grid.cell_count() * n * m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    GridFunction::new(grid, n, m, r, values).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use crate::sparse::{stopping_family, PairFormConfig, PairTable};
    use crate::weights::{make_weight, WeightSpec};
    use rand::Rng;

    fn hilbert(depth: u32) -> KernelOperator {
        KernelOperator::new(OperatorSpec::HilbertPeriodic, DyadicGrid::line(depth)).unwrap()
    }

    #[test]
    fn hilbert_is_antisymmetric_and_kills_constants() {
        let t = hilbert(6);
        assert!((t.kernel() + t.kernel().transpose()).amax() < 1e-12);
        let one = GridFunction::scalar(*t.grid(), vec![1.0; 64]).unwrap();
        assert!(t.apply(&one).values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn dini_size_bound() {
        for d in [1usize, 2] {
            let grid = DyadicGrid::new(d, if d == 1 { 6 } else { 3 }).unwrap();
            let t = KernelOperator::new(OperatorSpec::DiniSmooth { c: 2.0, delta: 0.5 }, grid).unwrap();
            assert!(t.size_constant() <= 2.0 + 1e-12);
            assert!((t.kernel() + t.kernel().transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn hilbert_rejects_higher_dimension() {
        let grid = DyadicGrid::new(2, 2).unwrap();
        assert!(KernelOperator::new(OperatorSpec::HilbertPeriodic, grid).is_err());
    }

    #[test]
    fn bilinear_scalar_is_plain_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let t = hilbert(5);
        let f = random_function(*t.grid(), 1, 1, 2.0, &mut rng);
        let g = random_function(*t.grid(), 1, 1, 2.0, &mut rng);
        let tf = t.apply(&f);
        let direct: f64 = (0..32).map(|x| tf.values()[x] * g.values()[x] / 32.0).sum();
        assert!((bilinear_form(&t, &f, &g).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn basis_independence_and_transpose_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let t = hilbert(5);
        for _ in 0..20 {
            let f = random_function(*t.grid(), 3, 2, 3.0, &mut rng);
            let g = random_function(*t.grid(), 3, 2, 1.5, &mut rng);
            let base = bilinear_form(&t, &f, &g).unwrap();
            let u = random_orthogonal(3, &mut rng);
            let ut = u.transpose();
            let rotated = bilinear_form(&t, &f.map_outer(&ut).unwrap(), &g.map_outer(&ut).unwrap()).unwrap();
            assert!((base - rotated).abs() < 1e-12);
            let r = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
            let lhs = bilinear_form(&t, &f.map_outer(&r).unwrap(), &g).unwrap();
            let rhs = bilinear_form(&t, &f, &g.map_outer(&r.transpose()).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_of_a_spike() {
        let t = hilbert(5);
        let grid = *t.grid();
        let q = Cube::new(2, &[0]);
        // spike in the right neighbour of Q, inside 3Q
        let spike_cell = 15;
        let mut v = vec![0.0; 32];
        v[spike_cell] = 3.0;
        let f = GridFunction::scalar(grid, v).unwrap();
        let got = grand_truncation(&t, &q, &f).unwrap();
        let qcells = grid.cells(&q);
        let mut subs = vec![q];
        subs.extend(grid.descendants(&q));
        for (k, &x) in qcells.iter().enumerate() {
            let mut expect = 0.0_f64;
            for c in subs.iter().filter(|c| grid.cells(c).contains(&x)) {
                if grid.triple_cells(c).contains(&spike_cell) {
                    continue;
                }
                for xi in grid.cells(c) {
                    expect = expect.max((grid.cell_measure() * t.kernel()[(xi, spike_cell)] * 3.0).abs());
                }
            }
            assert!((got[k] - expect).abs() < 1e-12, "cell {x}");
        }
    }

    #[test]
    fn truncation_grows_with_the_cube_for_spikes() {
        let t = hilbert(5);
        let grid = *t.grid();
        for spike in [0, 7, 12, 20, 31] {
            let mut v = vec![0.0; 32];
            v[spike] = 1.0;
            let f = GridFunction::scalar(grid, v).unwrap();
            let small = Cube::new(3, &[1]);
            let big = grid.parent(&small).unwrap();
            let ms = grand_truncation(&t, &small, &f).unwrap();
            let mb = grand_truncation(&t, &big, &f).unwrap();
            let bc = grid.cells(&big);
            for (k, x) in grid.cells(&small).into_iter().enumerate() {
                let kb = bc.binary_search(&x).unwrap();
                assert!(mb[kb] >= ms[k] - 1e-15);
            }
        }
    }

    #[test]
    fn empty_annulus_at_the_top_cube() {
        let t = hilbert(3);
        let grid = *t.grid();
        let f = GridFunction::scalar(grid, vec![0.0; 8]).unwrap();
        let m = grand_truncation(&t, &grid.root(), &f).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_data_single_scale() {
        let t = hilbert(5);
        let z = GridFunction::zeros(*t.grid(), 2, 1, 2.0);
        let s = single_scale(&t, &t.grid().root(), &z, &z, 0.05, 1e-6).unwrap();
        assert!(s.exceptional.is_empty());
        assert_eq!(s.residual, 0.0);
        assert_eq!(s.max_constant(), 0.0);
    }

    #[test]
    fn constant_data_respects_mass_budget() {
        let t = hilbert(8);
        let one = GridFunction::scalar(*t.grid(), vec![1.0; 256]).unwrap();
        for eps in [0.05, 0.2] {
            let ex = scalar_exceptional(&t, &t.grid().root(), &one, eps);
            assert!(ex.mass_fraction <= eps);
        }
    }

    #[test]
    fn degenerate_body_reduces_to_the_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let t = hilbert(7);
        let grid = *t.grid();
        let base: Vec<f64> = (0..128).map(|_| rng.random::<f64>() - 0.5).collect();
        let f = GridFunction::from_components(grid, &[base.clone(), base.iter().map(|v| 2.0 * v).collect()]).unwrap();
        let g = random_function(grid, 2, 1, 2.0, &mut rng);
        let q = grid.root();
        let vec_run = single_scale(&t, &q, &f, &g, 0.1, 1e-6).unwrap();
        assert_eq!(vec_run.rank, 1);
        let s = 5f64.sqrt();
        let proj = DMatrix::from_row_slice(1, 2, &[1.0 / s, 2.0 / s]);
        let f1 = f.map_outer(&proj).unwrap();
        let g1 = g.map_outer(&proj).unwrap();
        let scalar_run = single_scale(&t, &q, &f1, &g1, 0.1, 1e-6).unwrap();
        assert_eq!(vec_run.exceptional, scalar_run.exceptional);
        assert!((vec_run.max_constant() - scalar_run.max_constant()).abs() < 1e-9);
        assert!((vec_run.residual - scalar_run.residual).abs() < 1e-9);
    }

    #[test]
    fn pipeline_on_zero_data() {
        let t = hilbert(6);
        let z = GridFunction::zeros(*t.grid(), 1, 1, 2.0);
        let rep = cbd_pipeline(&t, &z, &z, &PipelineConfig::default()).unwrap();
        assert!(rep.family.is_empty());
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.dominated);
    }

    #[test]
    fn pipeline_dominates_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let t = hilbert(7);
        for (n, m, r) in [(1, 1, 2.0), (2, 1, 2.0), (2, 2, f64::INFINITY)] {
            let f = random_function(*t.grid(), n, m, r, &mut rng);
            let g = random_function(*t.grid(), n, m, dual_exponent(r), &mut rng);
            let rep = cbd_pipeline(&t, &f, &g, &PipelineConfig::default()).unwrap();
            assert!(rep.sparse_check.ok, "{:?}", rep.sparse_check);
            assert!(rep.dominated, "n={n} ratio {}", rep.verdict_ratio);
            assert!(rep.telescoping_error < 1e-10);
            assert!(rep.limit_ratio <= 1.0);
            assert!(rep.max_mass_fraction <= rep.epsilon_n + 1e-15);
            assert!(rep.c_vector <= rep.c_n * (1.0 + 1e-9) || !rep.dots_exact);
        }
    }

    #[test]
    fn pipeline_rejects_large_epsilon() {
        let t = hilbert(4);
        let f = GridFunction::zeros(*t.grid(), 2, 1, 2.0);
        assert!(cbd_pipeline(&t, &f, &f, &PipelineConfig { epsilon: 0.3, mvee_tol: 1e-6 }).is_err());
    }

    #[test]
    fn ltilde_identity_root_is_averaging() {
        let grid = DyadicGrid::line(5);
        let w = MatrixWeight::identity(grid, 2);
        let rep = ltilde_opnorm(&grid, &[grid.root()], &w, &w).unwrap();
        assert!((rep.norm - 1.0).abs() < 1e-12);
        assert_eq!(ltilde_opnorm(&grid, &[], &w, &w).unwrap().norm, 0.0);
    }

    #[test]
    fn ltilde_power_weight_ratio_is_finite() {
        let grid = DyadicGrid::line(6);
        let w = make_weight(&WeightSpec::ScalarPower { alpha: 0.5, center: 0.0, n: 1 }, grid).unwrap().weight;
        let v = w.inverse();
        let trace: Vec<f64> = (0..grid.cell_count()).map(|c| v.at(c)[(0, 0)]).collect();
        let fv = GridFunction::scalar(grid, trace).unwrap();
        let one = GridFunction::scalar(grid, vec![1.0; grid.cell_count()]).unwrap();
        let table = PairTable::compute(&fv, &one, 1.0, 1.0).unwrap();
        let fam = stopping_family(&grid, &table, &PairFormConfig::new(1, 1.0, 1.0).unwrap());
        let rep = ltilde_opnorm(&grid, &fam.cubes(), &w, &v).unwrap();
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
    }

    #[test]
    fn identity_weight_gives_unweighted_norm() {
        let t = hilbert(6);
        let w = MatrixWeight::identity(*t.grid(), 1);
        let b = weighted_opnorm_bounds(&t, &w, 1, 2.0, 0).unwrap();
        assert!(b.exact);
        assert!((b.lower - t.l2_norm()).abs() < 1e-10);
    }

    #[test]
    fn linf_lower_bound_within_envelope() {
        let t = hilbert(5);
        let w = make_weight(&WeightSpec::ScalarPower { alpha: 0.4, center: 0.0, n: 1 }, *t.grid()).unwrap().weight;
        let exact = weighted_opnorm_bounds(&t, &w, 2, 2.0, 1).unwrap();
        let approx = weighted_opnorm_bounds(&t, &w, 2, f64::INFINITY, 1).unwrap();
        assert!(!approx.exact);
        assert!(approx.lower <= exact.lower * 2f64.sqrt() + 1e-9);
        assert!(approx.lower >= exact.lower / 2f64.sqrt() - 1e-9);
    }

    #[test]
    fn lp_lower_bound_matches_svd_at_two_and_is_attained() {
        let t = hilbert(5);
        let a = t.kernel() * t.grid().cell_measure();
        let (v2, _, _) = lp_norm_lower_bound(&a, t.grid().cell_measure(), 2.0, 0);
        assert!((v2 - t.l2_norm()).abs() < 1e-12);
        let (v3, f, g) = lp_norm_lower_bound(&a, t.grid().cell_measure(), 3.0, 0);
        let h = t.grid().cell_measure();
        let af = &a * DVector::from_column_slice(&f);
        let pairing: f64 = h * af.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
        assert!((pairing - v3).abs() < 1e-9 * v3);
    }
}
