//! Sparse families, the sparse form, the pair maximal function and the
//! stopping-time construction that links them.

use rand::Rng;
use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::bodies::{dot, ConvexBody, Normalization};
use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{Cube, DyadicGrid};

/// Relative slack for floating-point comparisons of inequalities that hold exactly.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMember {
    pub cube: Cube,
    /// Witness cells `E(Q) ⊆ Q`, sorted.
    pub witness: Vec<usize>,
    /// `a_Q` when the construction computed one.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseFamily {
    pub members: Vec<SparseMember>,
    pub eta: f64,
    pub provenance: String,
}

fn ranges(cells: &[usize]) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = Vec::new();
    for &c in cells {
        match out.last_mut() {
            Some(r) if r[1] == c => r[1] = c + 1,
            _ => out.push([c, c + 1]),
        }
    }
    out
}

#[derive(Serialize)]
struct MemberRecord<'a> {
    level: u32,
    coords: &'a [u32],
    witness: Vec<[usize; 2]>,
    a_q: f64,
}

impl Serialize for SparseFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let members: Vec<MemberRecord> = self
            .members
            .iter()
            .map(|m| MemberRecord {
                level: m.cube.level,
                coords: &m.cube.coords,
                witness: ranges(&m.witness),
                a_q: m.value,
            })
            .collect();
        let mut st = s.serialize_struct("SparseFamily", 3)?;
        st.serialize_field("eta", &self.eta)?;
        st.serialize_field("provenance", &self.provenance)?;
        st.serialize_field("members", &members)?;
        st.end()
    }
}

impl SparseFamily {
    pub fn cubes(&self) -> Vec<Cube> {
        self.members.iter().map(|m| m.cube).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseCheck {
    pub ok: bool,
    /// `min_Q |E(Q)|/|Q|` (1 for an empty family).
    pub min_ratio: f64,
    /// First pair of members with intersecting witnesses.
    pub overlap: Option<(usize, usize)>,
    /// First member whose witness leaves its cube.
    pub escaped: Option<usize>,
}

/// Checks disjointness of witnesses, `E(Q) ⊆ Q`, and `|E(Q)| ≥ η|Q|`.
pub fn verify_sparse(grid: &DyadicGrid, family: &SparseFamily) -> SparseCheck {
    let mut owner = vec![usize::MAX; grid.cell_count()];
    let mut overlap = None;
    let mut escaped = None;
    let mut min_ratio = 1.0_f64;
    for (k, m) in family.members.iter().enumerate() {
        for &c in &m.witness {
            if escaped.is_none() && !grid.contains(&m.cube, &grid.cube_of_cell(c, grid.depth())) {
                escaped = Some(k);
            }
            if owner[c] != usize::MAX {
                overlap.get_or_insert((owner[c], k));
            } else {
                owner[c] = k;
            }
        }
        min_ratio = min_ratio.min(m.witness.len() as f64 / grid.cells_in(&m.cube) as f64);
    }
    let ok = overlap.is_none() && escaped.is_none() && min_ratio >= family.eta;
    SparseCheck { ok, min_ratio, overlap, escaped }
}

/// `a_Q = ⟨⟨f⃗⟩⟩_{avL^p(Q)} · ⟨⟨g⃗⟩⟩_{avL^q(Q)}` with its exactness flag.
pub fn pair_value(f: &GridFunction, g: &GridFunction, cells: &[usize], p: f64, q: f64) -> Result<(f64, bool)> {
    let a = ConvexBody::of_function(f, cells, p, Normalization::Averaged)?;
    let b = ConvexBody::of_function(g, cells, q, Normalization::Averaged)?;
    let d = dot(&a, &b)?;
    Ok((d.value, d.exact))
}

/// `a_Q` for every cube of the grid, indexed `[level][cube_index]`.
#[derive(Clone, Debug)]
pub struct PairTable {
    values: Vec<Vec<f64>>,
    pub exact: bool,
}

impl PairTable {
    pub fn compute(f: &GridFunction, g: &GridFunction, p: f64, q: f64) -> Result<Self> {
        if f.grid() != g.grid() || f.outer_dim() != g.outer_dim() {
            return Err(Error::DimensionMismatch("pair functions disagree in grid or dimension".into()));
        }
        let grid = f.grid();
        let mut exact = true;
        let mut values = Vec::new();
        for level in 0..=grid.depth() {
            let mut row = Vec::with_capacity(grid.cubes_at_level(level));
            for idx in 0..grid.cubes_at_level(level) {
                let cube = grid.cube_from_index(level, idx);
                let (v, e) = pair_value(f, g, &grid.cells(&cube), p, q)?;
                exact &= e;
                row.push(v);
            }
            values.push(row);
        }
        Ok(PairTable { values, exact })
    }

    pub fn get(&self, grid: &DyadicGrid, q: &Cube) -> f64 {
        self.values[q.level as usize][grid.cube_index(q)]
    }
}

/// `Σ_{Q∈S} |Q| · a_Q`, with every dot recomputed.
pub fn sparse_form(
    grid: &DyadicGrid,
    cubes: &[Cube],
    f: &GridFunction,
    g: &GridFunction,
    p: f64,
    q: f64,
) -> Result<(f64, bool)> {
    let mut total = 0.0;
    let mut exact = true;
    for c in cubes {
        let (v, e) = pair_value(f, g, &grid.cells(c), p, q)?;
        total += grid.measure(c) * v;
        exact &= e;
    }
    Ok((total, exact))
}

/// `‖sup_Q 1_Q a_Q‖_{L¹}` from a table, taking the maximum over each cell's ancestor chain.
pub fn pair_maximal_l1(grid: &DyadicGrid, table: &PairTable) -> f64 {
    let h = grid.cell_measure();
    (0..grid.cell_count())
        .map(|cell| {
            (0..=grid.depth())
                .map(|l| table.get(grid, &grid.cube_of_cell(cell, l)))
                .fold(0.0_f64, f64::max)
                * h
        })
        .sum()
}

/// Exponents, threshold `A` and sparseness target `δ` of the stopping construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairFormConfig {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub threshold: f64,
}

impl PairFormConfig {
    /// Default `δ = 1/2` and `A = (2·n^{max(1,r)+r/2}/(1-δ))^{1/r}`.
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        Self::with_delta(n, p, q, 0.5)
    }

    pub fn with_delta(n: usize, p: f64, q: f64, delta: f64) -> Result<Self> {
        if !(p >= 1.0 && q >= 1.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponents p={p}, q={q} must lie in [1,∞)")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("δ = {delta} not in (0,1)")));
        }
        let r = 1.0 / (1.0 / p + 1.0 / q);
        let threshold = (2.0 * disjoint_power_constant(n, r) / (1.0 - delta)).powf(1.0 / r);
        Ok(PairFormConfig { p, q, delta, threshold })
    }

    pub fn r(&self) -> f64 {
        1.0 / (1.0 / self.p + 1.0 / self.q)
    }

    /// Whether `n^{max(1,r)+r/2}/A^r ≤ 1-δ`.
    pub fn admissible(&self, n: usize) -> bool {
        self.threshold > 1.0 && disjoint_power_constant(n, self.r()) / self.threshold.powf(self.r()) <= 1.0 - self.delta
    }
}

/// `n^{max(r,1)+r/2}`.
pub fn disjoint_power_constant(n: usize, r: f64) -> f64 {
    (n as f64).powf(r.max(1.0) + r / 2.0)
}

/// Stopping family: `S'(Q)` = maximal strict subcubes `Q'` with `a_{Q'} > A·a_Q`,
/// recursively from the root. Witnesses are `Q` minus its stopping children.
pub fn stopping_family(grid: &DyadicGrid, table: &PairTable, cfg: &PairFormConfig) -> SparseFamily {
    let mut members = Vec::new();
    let mut queue = vec![grid.root()];
    while let Some(q) = queue.pop() {
        let aq = table.get(grid, &q);
        let children = if aq > 0.0 {
            grid.maximal_cubes(&q, |c| *c != q && table.get(grid, c) > cfg.threshold * aq)
        } else {
            Vec::new()
        };
        let mut covered = vec![false; grid.cell_count()];
        for c in &children {
            for cell in grid.cells(c) {
                covered[cell] = true;
            }
        }
        let witness: Vec<usize> = grid.cells(&q).into_iter().filter(|c| !covered[*c]).collect();
        members.push(SparseMember { cube: q, witness, value: aq });
        queue.extend(children.into_iter().rev());
    }
    members.sort_by(|a, b| a.cube.cmp(&b.cube));
    SparseFamily { members, eta: cfg.delta, provenance: "stopping_family".into() }
}

/// For every cube, the ratio `a_Q / (A·a_S)` with `S` the minimal member containing
/// `Q`; returns the worst ratio (≤ 1 when the stopping property holds).
pub fn stopping_audit(grid: &DyadicGrid, table: &PairTable, family: &SparseFamily, threshold: f64) -> f64 {
    let mut worst = 0.0_f64;
    for q in grid.all_cubes() {
        let aq = table.get(grid, &q);
        let s = family
            .members
            .iter()
            .filter(|m| grid.contains(&m.cube, &q))
            .max_by_key(|m| m.cube.level)
            .expect("the root is always a member");
        let bound = threshold * table.get(grid, &s.cube);
        let ratio = if aq == 0.0 {
            0.0
        } else if bound == 0.0 {
            f64::INFINITY
        } else {
            aq / bound
        };
        worst = worst.max(ratio);
    }
    worst
}

/// A random `η`-sparse family: each chosen cube picks random disjoint strict
/// subcubes covering at most `(1-η)` of it, and recursion continues into them.
pub fn random_sparse_family<R: Rng + ?Sized>(grid: &DyadicGrid, eta: f64, rng: &mut R) -> SparseFamily {
    let mut members = Vec::new();
    let mut queue = vec![grid.root()];
    while let Some(q) = queue.pop() {
        let subs = grid.descendants(&q);
        let budget = ((1.0 - eta) * grid.cells_in(&q) as f64).floor() as usize;
        let mut chosen: Vec<Cube> = Vec::new();
        let mut used = 0usize;
        if !subs.is_empty() {
            for _ in 0..4 {
                let c = subs[rng.random_range(0..subs.len())];
                let size = grid.cells_in(&c);
                let clash = chosen.iter().any(|o| grid.contains(o, &c) || grid.contains(&c, o));
                if !clash && used + size <= budget {
                    used += size;
                    chosen.push(c);
                }
            }
        }
        let mut covered = vec![false; grid.cell_count()];
        for c in &chosen {
            for cell in grid.cells(c) {
                covered[cell] = true;
            }
        }
        let witness = grid.cells(&q).into_iter().filter(|c| !covered[*c]).collect();
        members.push(SparseMember { cube: q, witness, value: 0.0 });
        queue.extend(chosen);
    }
    members.sort_by(|a, b| a.cube.cmp(&b.cube));
    SparseFamily { members, eta, provenance: "random".into() }
}

/// Both sides of the sparse/maximal equivalence for one input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub threshold: f64,
    pub family_size: usize,
    pub family_eta: f64,
    /// `Σ_{S} a_S |S|` over the stopping family.
    pub sparse_form: f64,
    /// `‖sup_Q 1_Q a_Q‖_{L¹}`.
    pub maximal_l1: f64,
    /// `sparse_form ≤ maximal_l1 / δ`.
    pub easy_pass: bool,
    /// `maximal_l1 ≤ A · sparse_form`.
    pub hard_pass: bool,
    pub easy_ratio: f64,
    pub hard_ratio: f64,
    pub exact: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

pub fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + ROUNDING_SLACK) + f64::MIN_POSITIVE
}

pub fn equivalence_report(f: &GridFunction, g: &GridFunction, cfg: &PairFormConfig) -> Result<(EquivalenceReport, SparseFamily)> {
    let grid = *f.grid();
    let table = PairTable::compute(f, g, cfg.p, cfg.q)?;
    let family = stopping_family(&grid, &table, cfg);
    let form: f64 = family.members.iter().map(|m| m.value * grid.measure(&m.cube)).sum();
    let maximal = pair_maximal_l1(&grid, &table);
    let check = verify_sparse(&grid, &family);
    let easy_rhs = maximal / cfg.delta;
    let hard_rhs = cfg.threshold * form;
    let report = EquivalenceReport {
        n: f.outer_dim(),
        p: cfg.p,
        q: cfg.q,
        delta: cfg.delta,
        threshold: cfg.threshold,
        family_size: family.len(),
        family_eta: check.min_ratio,
        sparse_form: form,
        maximal_l1: maximal,
        easy_pass: check.ok && holds(form, easy_rhs),
        hard_pass: holds(maximal, hard_rhs),
        easy_ratio: ratio(form, easy_rhs),
        hard_ratio: ratio(maximal, hard_rhs),
        exact: table.exact,
    };
    Ok((report, family))
}

/// `(Σ_i (A_i·B_i)^r, n^{max(r,1)+r/2} (A·B)^r)` for disjoint `Q_i ⊆ Q` with
/// unnormalised `L^p`/`L^q` bodies, plus exactness of all dots.
pub fn disjoint_subcube_bound(
    grid: &DyadicGrid,
    f: &GridFunction,
    g: &GridFunction,
    p: f64,
    q: f64,
    parent: &Cube,
    subcubes: &[Cube],
) -> Result<(f64, f64, bool)> {
    let r = 1.0 / (1.0 / p + 1.0 / q);
    let plain = |cells: &[usize]| -> Result<(f64, bool)> {
        let a = ConvexBody::of_function(f, cells, p, Normalization::Plain)?;
        let b = ConvexBody::of_function(g, cells, q, Normalization::Plain)?;
        let d = dot(&a, &b)?;
        Ok((d.value, d.exact))
    };
    let mut lhs = 0.0;
    let mut exact = true;
    for c in subcubes {
        if !grid.contains(parent, c) {
            return Err(Error::InvalidParameter("subcube outside the parent cube".into()));
        }
        let (v, e) = plain(&grid.cells(c))?;
        lhs += v.powf(r);
        exact &= e;
    }
    let (whole, e) = plain(&grid.cells(parent))?;
    Ok((lhs, disjoint_power_constant(f.outer_dim(), r) * whole.powf(r), exact && e))
}

/// `(Σ|Q_i|, n^{max(r,1)+r/2}/A^r · |Q|)` for the maximal subcubes `Q_i ⊊ Q`
/// with `a_{Q_i} ≥ A·a_Q`.
pub fn stopping_measure_bound(grid: &DyadicGrid, table: &PairTable, parent: &Cube, n: usize, p: f64, q: f64, threshold: f64) -> (f64, f64) {
    let r = 1.0 / (1.0 / p + 1.0 / q);
    let a0 = table.get(grid, parent);
    let selected = grid.maximal_cubes(parent, |c| c != parent && a0 > 0.0 && table.get(grid, c) >= threshold * a0);
    let lhs: f64 = selected.iter().map(|c| grid.measure(c)).sum();
    (lhs, disjoint_power_constant(n, r) / threshold.powf(r) * grid.measure(parent))
}
