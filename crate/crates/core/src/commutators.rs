//! Generalized commutators `f ↦ Σᵢ aᵢ·T(bᵢ f)`: symbol pairs, mixed-norm
//! constants, oscillation of powers, and two-sided `L^p` norm reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bodies::{dot, ConvexBody, Normalization};
use crate::domination::{cbd_pipeline, lp_norm_lower_bound, KernelOperator, PipelineConfig};
use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{Cube, DyadicGrid};
use crate::norms::dual_exponent;
use crate::sparse::holds;

/// Largest order accepted for iterated commutators.
pub const MAX_ITERATED_ORDER: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolKind {
    /// `a⃗(x)·b⃗(y) = b(x) − b(y)`.
    Classical,
    /// `(b(x) − b(y))^k`.
    Iterated { k: usize },
    /// `(b¹(x) − b¹(y))(b²(x) − b²(y))`.
    Mixed,
    /// `b(x)^α b(y)^β − b(x)^β b(y)^α`.
    Power { alpha: f64, beta: f64 },
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolPair {
    pub kind: SymbolKind,
    pub grid: DyadicGrid,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// The multipliers the pair was built from (`b`, or `b¹, b²`).
    pub sources: Vec<Vec<f64>>,
}

fn binomial(k: usize, i: usize) -> f64 {
    (0..i).fold(1.0, |acc, j| acc * (k - j) as f64 / (j + 1) as f64)
}

fn check_len(grid: &DyadicGrid, v: &[f64]) -> Result<()> {
    if v.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch(format!("multiplier has {} values, grid has {} cells", v.len(), grid.cell_count())));
    }
    Ok(())
}

impl SymbolPair {
    pub fn classical(grid: DyadicGrid, b: Vec<f64>) -> Result<Self> {
        check_len(&grid, &b)?;
        let ones = vec![1.0; b.len()];
        Ok(SymbolPair {
            kind: SymbolKind::Classical,
            grid,
            a: vec![b.clone(), vec![-1.0; b.len()]],
            b: vec![ones, b.clone()],
            sources: vec![b],
        })
    }

    /// `aᵢ = C(k,i) b^{k−i}`, `bᵢ = (−b)^i`.
    pub fn iterated(grid: DyadicGrid, b: Vec<f64>, k: usize) -> Result<Self> {
        check_len(&grid, &b)?;
        if k == 0 || k > MAX_ITERATED_ORDER {
            return Err(Error::InvalidParameter(format!("iterated order k = {k} outside 1..={MAX_ITERATED_ORDER}")));
        }
        let a = (0..=k).map(|i| b.iter().map(|v| binomial(k, i) * v.powi((k - i) as i32)).collect()).collect();
        let bb = (0..=k).map(|i| b.iter().map(|v| (-v).powi(i as i32)).collect()).collect();
        Ok(SymbolPair { kind: SymbolKind::Iterated { k }, grid, a, b: bb, sources: vec![b] })
    }

    /// `a⃗ = (b¹b², −b¹, −b², 1)`, `b⃗ = (1, b², b¹, b¹b²)`.
    pub fn mixed(grid: DyadicGrid, b1: Vec<f64>, b2: Vec<f64>) -> Result<Self> {
        check_len(&grid, &b1)?;
        check_len(&grid, &b2)?;
        let prod: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| x * y).collect();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let ones = vec![1.0; b1.len()];
        Ok(SymbolPair {
            kind: SymbolKind::Mixed,
            grid,
            a: vec![prod.clone(), neg(&b1), neg(&b2), ones.clone()],
            b: vec![ones, b2.clone(), b1.clone(), prod],
            sources: vec![b1, b2],
        })
    }

    /// `a⃗ = (b^α, −b^β)`, `b⃗ = (b^β, b^α)` for `b ≥ 0`, `α, β ≥ 0`, `α + β ≤ 1`.
    pub fn power(grid: DyadicGrid, b: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        check_len(&grid, &b)?;
        check_power_params(&b, alpha, beta)?;
        let pw = |e: f64| b.iter().map(|v| v.powf(e)).collect::<Vec<_>>();
        Ok(SymbolPair {
            kind: SymbolKind::Power { alpha, beta },
            grid,
            a: vec![pw(alpha), pw(beta).iter().map(|v| -v).collect()],
            b: vec![pw(beta), pw(alpha)],
            sources: vec![b],
        })
    }

    pub fn custom(grid: DyadicGrid, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::DimensionMismatch("a⃗ and b⃗ need the same positive length".into()));
        }
        for v in a.iter().chain(&b) {
            check_len(&grid, v)?;
        }
        Ok(SymbolPair { kind: SymbolKind::Custom, grid, a, b, sources: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `a⃗(x)·b⃗(y)`.
    pub fn kernel(&self, x: usize, y: usize) -> f64 {
        self.a.iter().zip(&self.b).map(|(a, b)| a[x] * b[y]).sum()
    }

    /// The closed form the pair was built to reproduce, when there is one.
    pub fn closed_form(&self, x: usize, y: usize) -> Option<f64> {
        let s = &self.sources;
        match self.kind {
            SymbolKind::Classical => Some(s[0][x] - s[0][y]),
            SymbolKind::Iterated { k } => Some((s[0][x] - s[0][y]).powi(k as i32)),
            SymbolKind::Mixed => Some((s[0][x] - s[0][y]) * (s[1][x] - s[1][y])),
            SymbolKind::Power { alpha, beta } => {
                let b = &s[0];
                Some(b[x].powf(alpha) * b[y].powf(beta) - b[x].powf(beta) * b[y].powf(alpha))
            }
            SymbolKind::Custom => None,
        }
    }

    /// `b⃗f` and `a⃗g` as vector functions.
    pub fn lift(&self, f: &[f64], g: &[f64]) -> Result<(GridFunction, GridFunction)> {
        let bf: Vec<Vec<f64>> = self.b.iter().map(|b| b.iter().zip(f).map(|(x, y)| x * y).collect()).collect();
        let ag: Vec<Vec<f64>> = self.a.iter().map(|a| a.iter().zip(g).map(|(x, y)| x * y).collect()).collect();
        Ok((GridFunction::from_components(self.grid, &bf)?, GridFunction::from_components(self.grid, &ag)?))
    }

    /// Matrix of `f ↦ Σᵢ aᵢ T(bᵢ f)` on cell values.
    pub fn operator_matrix(&self, t: &KernelOperator) -> DMatrix<f64> {
        let h = t.grid().cell_measure();
        let k = t.kernel();
        let n = k.nrows();
        DMatrix::from_fn(n, n, |x, y| h * k[(x, y)] * self.kernel(x, y))
    }
}

fn check_power_params(b: &[f64], alpha: f64, beta: f64) -> Result<()> {
    if alpha < 0.0 || beta < 0.0 || alpha + beta > 1.0 {
        return Err(Error::InvalidParameter(format!("need α, β ≥ 0 and α + β ≤ 1, got α = {alpha}, β = {beta}")));
    }
    if b.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("power symbols need b ≥ 0".into()));
    }
    Ok(())
}

/// `Σᵢ aᵢ·T(bᵢ f)` for scalar `f`.
pub fn apply_generalized(t: &KernelOperator, pair: &SymbolPair, f: &GridFunction) -> Result<GridFunction> {
    if f.outer_dim() != 1 || f.inner_dim() != 1 {
        return Err(Error::DimensionMismatch("generalized commutators act on scalar functions".into()));
    }
    let mut out = vec![0.0; f.values().len()];
    for (a, b) in pair.a.iter().zip(&pair.b) {
        let bf = GridFunction::scalar(*f.grid(), b.iter().zip(f.values()).map(|(x, y)| x * y).collect())?;
        let tb = t.apply(&bf);
        for ((o, av), tv) in out.iter_mut().zip(a).zip(tb.values()) {
            *o += av * tv;
        }
    }
    GridFunction::scalar(*f.grid(), out)
}

fn power_mean(values: impl Iterator<Item = f64>, count: usize, s: f64) -> f64 {
    (values.map(|v| v.abs().powf(s)).sum::<f64>() / count as f64).powf(1.0 / s)
}

/// Both iterated averages of `|F|` over `X × Y`: `s` in `x`, `t` in `y`.
/// Returns `(x inside, y inside)` orders.
pub fn mixed_norms<F: Fn(usize, usize) -> f64>(f: F, xs: &[usize], ys: &[usize], s: f64, t: f64) -> (f64, f64) {
    let x_inner = power_mean(ys.iter().map(|&y| power_mean(xs.iter().map(|&x| f(x, y)), xs.len(), s)), ys.len(), t);
    let y_inner = power_mean(xs.iter().map(|&x| power_mean(ys.iter().map(|&y| f(x, y)), ys.len(), t)), xs.len(), s);
    (x_inner, y_inner)
}

/// `‖F‖_{avL^{(s,t)}_min(X×Y)}`: the smaller of the two iteration orders.
pub fn mixed_min_norm<F: Fn(usize, usize) -> f64>(f: F, xs: &[usize], ys: &[usize], s: f64, t: f64) -> f64 {
    let (a, b) = mixed_norms(f, xs, ys, s, t);
    a.min(b)
}

/// `(⨏_Q |b − ⟨b⟩_Q|^s)^{1/s}`.
pub fn oscillation(b: &[f64], cells: &[usize], s: f64) -> f64 {
    let mean = cells.iter().map(|&c| b[c]).sum::<f64>() / cells.len() as f64;
    power_mean(cells.iter().map(|&c| b[c] - mean), cells.len(), s)
}

/// BMO norm with mean centring, over every dyadic cube.
pub fn bmo_mean(grid: &DyadicGrid, b: &[f64], s: f64) -> f64 {
    grid.all_cubes().iter().map(|q| oscillation(b, &grid.cells(q), s)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolConstants {
    pub s: f64,
    pub t: f64,
    /// `sup_Q ‖a⃗(x)·b⃗(y)‖_{avL^{(s,t)}_min(Q×Q)}`.
    pub a_st: f64,
    /// Same supremum over the rectangles `Q × 3Q` (`x ∈ Q`, `y ∈ 3Q`).
    pub a_st_dilated: f64,
    /// BMO-mean norms (exponent `s`) of the source multipliers.
    pub bmo: Vec<f64>,
    /// Mixed pairs only.
    pub s_s: Option<f64>,
    pub t_s: Option<f64>,
    /// `A_s ≤ 2(T_s + S_s)`, checked on every cube (mixed pairs with `s = t`).
    pub mixed_bound_ok: Option<bool>,
    pub mixed_bound_worst: Option<f64>,
}

/// Exhaustive constants over all dyadic cubes.
pub fn a_st_constants(pair: &SymbolPair, s: f64, t: f64) -> Result<SymbolConstants> {
    if !(s > 1.0 && t > 1.0) || s.is_infinite() || t.is_infinite() {
        return Err(Error::InvalidParameter(format!("need s, t ∈ (1, ∞), got s = {s}, t = {t}")));
    }
    let grid = pair.grid;
    let ker = |x: usize, y: usize| pair.kernel(x, y);
    let mut a_st = 0.0_f64;
    let mut a_dil = 0.0_f64;
    let mut s_s = 0.0_f64;
    let mut t_s = 0.0_f64;
    let mut worst = 0.0_f64;
    let mut ok = true;
    let mixed = pair.kind == SymbolKind::Mixed;
    for q in grid.all_cubes() {
        let cells = grid.cells(&q);
        let triple = grid.triple_cells(&q);
        let aq = mixed_min_norm(ker, &cells, &cells, s, t);
        a_st = a_st.max(aq);
        a_dil = a_dil.max(mixed_min_norm(ker, &cells, &triple, s, t));
        if mixed {
            let (b1, b2) = (&pair.sources[0], &pair.sources[1]);
            let sq = oscillation(b1, &cells, s) * oscillation(b2, &cells, s);
            let m1 = cells.iter().map(|&c| b1[c]).sum::<f64>() / cells.len() as f64;
            let m2 = cells.iter().map(|&c| b2[c]).sum::<f64>() / cells.len() as f64;
            let tq = power_mean(cells.iter().map(|&c| (b1[c] - m1) * (b2[c] - m2)), cells.len(), s);
            s_s = s_s.max(sq);
            t_s = t_s.max(tq);
            if s == t {
                let bound = 2.0 * (tq + sq);
                ok &= holds(aq, bound);
                if bound > 0.0 {
                    worst = worst.max(aq / bound);
                }
            }
        }
    }
    let check = mixed && s == t;
    Ok(SymbolConstants {
        s,
        t,
        a_st,
        a_st_dilated: a_dil,
        bmo: pair.sources.iter().map(|b| bmo_mean(&grid, b, s)).collect(),
        s_s: mixed.then_some(s_s),
        t_s: mixed.then_some(t_s),
        mixed_bound_ok: check.then_some(ok),
        mixed_bound_worst: check.then_some(worst),
    })
}

/// `|u^δ − v^δ|·max(u,v)^{1−δ} ≤ |u − v|` up to `1e-12·(u+v)` rounding.
pub fn elementary_inequality_holds(u: f64, v: f64, delta: f64) -> bool {
    let lhs = (u.powf(delta) - v.powf(delta)).abs() * u.max(v).powf(1.0 - delta);
    lhs <= (u - v).abs() + 1e-12 * (u + v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerCheck {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    /// Largest `|B(x,y)| / |b(x) − b(y)|^{α+β}` over cell pairs.
    pub pointwise_worst: f64,
    pub pointwise_ok: bool,
    /// Largest `(⨏⨏_{Q×Q}|B|^p)^{1/p} / (2·osc_p(b,Q))^{α+β}` over cubes.
    pub integrated_worst: f64,
    pub integrated_ok: bool,
    /// `sup_Q (⨏⨏|B|^p)^{1/p}` and `(2‖b‖_{BMO^p})^{α+β}`.
    pub integrated_sup: f64,
    pub bmo_bound: f64,
}

/// Pointwise and integrated control of `B(x,y) = b(x)^α b(y)^β − b(x)^β b(y)^α`
/// by the oscillation of `b ≥ 0`.
pub fn bmo_power_check(grid: &DyadicGrid, b: &[f64], alpha: f64, beta: f64, p: f64) -> Result<PowerCheck> {
    check_len(grid, b)?;
    check_power_params(b, alpha, beta)?;
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidParameter(format!("exponent p = {p} outside [1, ∞)")));
    }
    let e = alpha + beta;
    let big = |x: usize, y: usize| b[x].powf(alpha) * b[y].powf(beta) - b[x].powf(beta) * b[y].powf(alpha);
    let n = grid.cell_count();
    let mut pw_worst = 0.0_f64;
    let mut pw_ok = true;
    for x in 0..n {
        for y in 0..n {
            let lhs = big(x, y).abs();
            let rhs = (b[x] - b[y]).abs().powf(e);
            pw_ok &= lhs <= rhs + 1e-12 * (b[x] + b[y] + 1.0);
            if rhs > 0.0 {
                pw_worst = pw_worst.max(lhs / rhs);
            }
        }
    }
    let mut int_worst = 0.0_f64;
    let mut int_ok = true;
    let mut sup = 0.0_f64;
    for q in grid.all_cubes() {
        let cells = grid.cells(&q);
        let lhs = power_mean(cells.iter().flat_map(|&x| cells.iter().map(move |&y| (x, y))).map(|(x, y)| big(x, y)), cells.len().pow(2), p);
        let rhs = (2.0 * oscillation(b, &cells, p)).powf(e);
        sup = sup.max(lhs);
        int_ok &= holds(lhs, rhs);
        if rhs > 0.0 {
            int_worst = int_worst.max(lhs / rhs);
        }
    }
    let bmo_bound = (2.0 * bmo_mean(grid, b, p)).powf(e);
    int_ok &= holds(sup, bmo_bound);
    Ok(PowerCheck {
        alpha,
        beta,
        p,
        pointwise_worst: pw_worst,
        pointwise_ok: pw_ok,
        integrated_worst: int_worst,
        integrated_ok: int_ok,
        integrated_sup: sup,
        bmo_bound,
    })
}

/// Dyadic rescaled maximal function `M_u f = sup_{Q∋x} (⨏_Q |f|^u)^{1/u}`.
pub fn rescaled_maximal(grid: &DyadicGrid, f: &[f64], u: f64) -> Vec<f64> {
    let powered: Vec<f64> = f.iter().map(|v| v.abs().powf(u)).collect();
    let levels = grid.level_averages(&powered);
    (0..f.len())
        .map(|c| {
            (0..=grid.depth())
                .map(|l| levels[l as usize][grid.cube_index(&grid.cube_of_cell(c, l))])
                .fold(0.0, f64::max)
                .powf(1.0 / u)
        })
        .collect()
}

/// Doob's bound `((p/u)')^{1/u}` for `‖M_u‖_{L^p}`, `p > u`.
pub fn maximal_bound(u: f64, p: f64) -> f64 {
    dual_exponent(p / u).powf(1.0 / u)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximalCheck {
    pub exponent: f64,
    pub p: f64,
    pub ratio: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn maximal_check(grid: &DyadicGrid, f: &[f64], u: f64, p: f64) -> MaximalCheck {
    let h = grid.cell_measure();
    let lp = |v: &[f64]| (h * v.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p);
    let nf = lp(f);
    let ratio = if nf == 0.0 { 0.0 } else { lp(&rescaled_maximal(grid, f, u)) / nf };
    let bound = maximal_bound(u, p);
    MaximalCheck { exponent: u, p, ratio, bound, ok: holds(ratio, bound) }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub kind: SymbolKind,
    pub n: usize,
    pub p: f64,
    pub constants: SymbolConstants,
    /// Lower bound of `‖a⃗·T b⃗‖_{L^p→L^p}`, attained at a normalized pair `(f*, g*)`.
    pub lower: f64,
    /// Domination constant and sparse form of the pipeline run on `(b⃗f*, a⃗g*)`.
    pub c_n: f64,
    pub sparse_form: f64,
    /// `|⟨T(b⃗f*), a⃗g*⟩|` against `C_n·sparse_form`.
    pub form: f64,
    pub form_bound: f64,
    pub dominated: bool,
    /// `C_n Σ_S |S| A(S×3S)·‖f*‖_{avL^{t'}(3S)}‖g*‖_{avL^{s'}(S)}`.
    pub upper: f64,
    /// Largest `dot_S / (A(S×3S)‖f*‖‖g*‖)` over the family; at most 1.
    pub mixed_holder_worst: f64,
    pub maximal: Vec<MaximalCheck>,
    pub pass: bool,
}

/// Two-sided audit of the `L^p` norm of `a⃗·T b⃗`, `p ∈ (t', s)`.
pub fn lp_commutator_report(t: &KernelOperator, pair: &SymbolPair, s: f64, tt: f64, p: f64, seed: u64) -> Result<CommutatorReport> {
    let lo = dual_exponent(tt);
    if !(p > lo && p < s) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (t', s) = ({lo}, {s})")));
    }
    if *t.grid() != pair.grid {
        return Err(Error::DimensionMismatch("operator and symbols live on different grids".into()));
    }
    let grid = pair.grid;
    let constants = a_st_constants(pair, s, tt)?;
    let h = grid.cell_measure();
    let (lower, f, g) = lp_norm_lower_bound(&pair.operator_matrix(t), h, p, seed);
    let (bf, ag) = pair.lift(&f, &g)?;
    let rep = cbd_pipeline(t, &bf, &ag, &PipelineConfig::default())?;
    let sd = dual_exponent(s);
    let ff = GridFunction::scalar(grid, f.clone())?;
    let gg = GridFunction::scalar(grid, g.clone())?;
    let mut upper = 0.0;
    let mut holder_worst = 0.0_f64;
    for step in &rep.steps {
        let q: &Cube = &step.cube;
        let cells = grid.cells(q);
        let triple = grid.triple_cells(q);
        let a = mixed_min_norm(|x, y| pair.kernel(x, y), &cells, &triple, s, tt);
        let bound = a * ff.local_norm_cells(0, &triple, lo) * gg.local_norm_cells(0, &cells, sd);
        // direct dot of the two bodies, as in the sparse form
        let kf = ConvexBody::of_function(&bf, &triple, 1.0, Normalization::Averaged)?;
        let kg = ConvexBody::of_function(&ag, &cells, 1.0, Normalization::Averaged)?;
        let d = dot(&kf, &kg)?.value;
        if bound > 0.0 {
            holder_worst = holder_worst.max(d / bound);
        } else if d > 0.0 {
            holder_worst = f64::INFINITY;
        }
        upper += grid.measure(q) * bound;
    }
    upper *= rep.c_n;
    let maximal = vec![maximal_check(&grid, &f, lo, p), maximal_check(&grid, &g, sd, dual_exponent(p))];
    let pass = holds(lower, upper)
        && rep.dominated
        && holds(holder_worst, 1.0)
        && maximal.iter().all(|m| m.ok)
        && constants.mixed_bound_ok.unwrap_or(true);
    Ok(CommutatorReport {
        kind: pair.kind.clone(),
        n: pair.len(),
        p,
        constants,
        lower,
        c_n: rep.c_n,
        sparse_form: rep.sparse_form,
        form: rep.lhs,
        form_bound: rep.rhs,
        dominated: rep.dominated,
        upper,
        mixed_holder_worst: holder_worst,
        maximal,
        pass,
    })
}

/// Nonnegative multiplier of BMO type: a positive combination of
/// `|log dist(x, cⱼ)|` over a few centres.
pub fn log_distance_multiplier<R: rand::Rng + ?Sized>(grid: &DyadicGrid, centres: usize, rng: &mut R) -> Vec<f64> {
    let pts: Vec<([f64; 3], f64)> = (0..centres)
        .map(|_| {
            let mut c = [0.0; 3];
            for v in c.iter_mut().take(grid.dim()) {
                *v = rng.random::<f64>();
            }
            (c, 0.2 + rng.random::<f64>())
        })
        .collect();
    (0..grid.cell_count())
        .map(|cell| {
            let x = grid.cell_midpoint(cell);
            pts.iter()
                .map(|(c, amp)| {
                    let d2: f64 = (0..grid.dim())
                        .map(|k| {
                            let w = (x[k] - c[k] + 0.5).rem_euclid(1.0) - 0.5;
                            w * w
                        })
                        .sum();
                    amp * d2.sqrt().max(grid.cell_measure().powf(1.0 / grid.dim() as f64) / 2.0).ln().abs()
                })
                .sum()
        })
        .collect()
}
