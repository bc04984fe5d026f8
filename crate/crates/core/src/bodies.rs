//! Convex bodies `⟨⟨f⃗⟩⟩_{X} ⊂ ℝⁿ` of vector-valued grid functions.
//!
//! A body is stored by its atoms: one per cell of the underlying region, each
//! carrying a weight `w_x` and the `n×m` block `f⃗(x)`. For `X = avL^p(S; E)` with
//! `E = (ℝᵐ, ℓʳ)` the support function is
//!
//! ```text
//! h(u) = ( Σ_x w_x ‖Σ_i u_i f_i(x)‖_E^p )^{1/p}
//! ```
//!
//! with `w_x = 1/#S` (averaged) or `w_x = |cell|` (plain `L^p`). All geometry
//! goes through `support` and `maximizer`; vertex lists are only produced for
//! zonotopes, where they are cheap.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::linalg::{spectral_norm, sym_sqrt};
use crate::norms::{duality_map, lr_norm};

/// Largest generator count for which zonotope vertices are enumerated by signs.
pub const SIGN_ENUMERATION_LIMIT: usize = 16;

/// Dual-ascent stopping rule: relative improvement threshold and sweep cap.
pub const ASCENT_TOL: f64 = 1e-12;
pub const ASCENT_MAX_SWEEPS: usize = 200;
const ASCENT_RANDOM_STARTS: usize = 8;
const ASCENT_SEED: u64 = 0x05ee_dd07;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `avL^p(S)`: weights `1/#S`.
    Averaged,
    /// `L^p(S)`: weights `|cell|`.
    Plain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexBody {
    dim: usize,
    inner: usize,
    exponent: f64,
    inner_exponent: f64,
    weights: Vec<f64>,
    values: Vec<f64>,
}

/// Right endpoint of the Minkowski dot product `A·B = [-c, c]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotProduct {
    pub value: f64,
    /// `false` when `value` is an ascent lower bound rather than the exact maximum.
    pub exact: bool,
}

impl ConvexBody {
    pub fn from_atoms(
        dim: usize,
        inner: usize,
        exponent: f64,
        inner_exponent: f64,
        weights: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || inner == 0 {
            return Err(Error::InvalidParameter("body dimensions must be positive".into()));
        }
        if !(exponent >= 1.0) || exponent.is_infinite() {
            return Err(Error::InvalidParameter(format!("body exponent {exponent} not in [1,∞)")));
        }
        if values.len() != weights.len() * dim * inner {
            return Err(Error::DimensionMismatch("atom values do not match weights".into()));
        }
        Ok(ConvexBody { dim, inner, exponent, inner_exponent, weights, values })
    }

    /// `⟨⟨f⃗⟩⟩_{avL^p(S;E)}` or `⟨⟨f⃗⟩⟩_{L^p(S;E)}` over the cell set `S`.
    pub fn of_function(f: &GridFunction, cells: &[usize], p: f64, norm: Normalization) -> Result<Self> {
        let n = f.outer_dim();
        let m = f.inner_dim();
        let w = match norm {
            Normalization::Averaged => 1.0 / cells.len().max(1) as f64,
            Normalization::Plain => f.grid().cell_measure(),
        };
        let mut values = Vec::with_capacity(cells.len() * n * m);
        for &c in cells {
            values.extend_from_slice(f.block(c));
        }
        Self::from_atoms(n, m, p, f.inner_exponent(), vec![w; cells.len()], values)
    }

    /// The zonotope `Σ_k [-g_k, g_k]`.
    pub fn zonotope(dim: usize, generators: &[Vec<f64>]) -> Result<Self> {
        if generators.iter().any(|g| g.len() != dim) {
            return Err(Error::DimensionMismatch("generator length differs from dimension".into()));
        }
        let values: Vec<f64> = generators.iter().flatten().copied().collect();
        Self::from_atoms(dim, 1, 1.0, 2.0, vec![1.0; generators.len()], values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn inner_exponent(&self) -> f64 {
        self.inner_exponent
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0) || self.weights.iter().all(|w| *w == 0.0)
    }

    fn atom(&self, k: usize) -> &[f64] {
        let w = self.dim * self.inner;
        &self.values[k * w..(k + 1) * w]
    }

    /// `v = Σ_i u_i f_i(x)` for atom `k`.
    fn contract(&self, k: usize, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let a = self.atom(k);
        for (i, ui) in u.iter().enumerate() {
            if *ui == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&a[i * self.inner..(i + 1) * self.inner]) {
                *o += ui * v;
            }
        }
    }

    /// `h_K(u)`.
    pub fn support(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.dim, "direction dimension");
        let mut v = vec![0.0; self.inner];
        let p = self.exponent;
        let mut acc = 0.0;
        for k in 0..self.atom_count() {
            self.contract(k, u, &mut v);
            let nv = lr_norm(&v, self.inner_exponent);
            acc += self.weights[k] * if p == 1.0 { nv } else { nv.powf(p) };
        }
        if p == 1.0 {
            acc
        } else {
            acc.powf(1.0 / p)
        }
    }

    /// A point `x ∈ K` with `u·x = h_K(u)`, from the closed-form dual optimiser.
    pub fn maximizer(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim, "direction dimension");
        let m = self.inner;
        let p = self.exponent;
        let r = self.inner_exponent;
        let mut v = vec![0.0; m];
        let mut j = vec![0.0; m];
        let mut point = vec![0.0; self.dim];
        let h = if p == 1.0 { 1.0 } else { self.support(u) };
        if h == 0.0 {
            return point;
        }
        for k in 0..self.atom_count() {
            self.contract(k, u, &mut v);
            let nv = lr_norm(&v, r);
            let scale = if p == 1.0 {
                1.0
            } else if nv == 0.0 {
                continue;
            } else {
                (nv / h).powf(p - 1.0)
            };
            duality_map(&v, r, &mut j);
            let a = self.atom(k);
            let wk = self.weights[k] * scale;
            for (i, pi) in point.iter_mut().enumerate() {
                let fi = &a[i * m..(i + 1) * m];
                *pi += wk * fi.iter().zip(&j).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        point
    }

    /// `R·K`, with `R` a `k×n` matrix acting on the outer index.
    pub fn linear_image(&self, r: &DMatrix<f64>) -> Result<Self> {
        if r.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!("matrix has {} columns, body has dimension {}", r.ncols(), self.dim)));
        }
        let k = r.nrows();
        let m = self.inner;
        let mut values = vec![0.0; self.atom_count() * k * m];
        for a in 0..self.atom_count() {
            let src = self.atom(a);
            let dst = &mut values[a * k * m..(a + 1) * k * m];
            for i in 0..k {
                for j in 0..self.dim {
                    let c = r[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    for t in 0..m {
                        dst[i * m + t] += c * src[j * m + t];
                    }
                }
            }
        }
        Self::from_atoms(k, m, self.exponent, self.inner_exponent, self.weights.clone(), values)
    }

    /// Generators when the body is a zonotope (`p = 1` and `E = ℝ` or `E = ℓ¹`).
    pub fn zonotope_generators(&self) -> Option<Vec<Vec<f64>>> {
        if self.exponent != 1.0 || !(self.inner == 1 || self.inner_exponent == 1.0) {
            return None;
        }
        let mut gens = Vec::new();
        for k in 0..self.atom_count() {
            let a = self.atom(k);
            for t in 0..self.inner {
                let g: Vec<f64> = (0..self.dim).map(|i| self.weights[k] * a[i * self.inner + t]).collect();
                if g.iter().any(|x| *x != 0.0) {
                    gens.push(g);
                }
            }
        }
        Some(gens)
    }

    /// Gram matrix `G` with `h(u)² = uᵀGu` when the body is an ellipsoid
    /// (`p = 2` and `E = ℝ` or `E = ℓ²`).
    pub fn ellipsoid_gram(&self) -> Option<DMatrix<f64>> {
        if self.exponent != 2.0 || !(self.inner == 1 || self.inner_exponent == 2.0) {
            return None;
        }
        let n = self.dim;
        let m = self.inner;
        let mut g = DMatrix::zeros(n, n);
        for k in 0..self.atom_count() {
            let a = self.atom(k);
            for i in 0..n {
                for j in 0..=i {
                    let s: f64 = (0..m).map(|t| a[i * m + t] * a[j * m + t]).sum();
                    g[(i, j)] += self.weights[k] * s;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(j, i)] = g[(i, j)];
            }
        }
        Some(g)
    }

    /// A finite set `V` with `K = conv(±V)`, when one is cheaply available:
    /// the interval endpoint for `n = 1`, zonogon vertices for planar
    /// zonotopes, and sign sums for zonotopes with few generators.
    pub fn vertex_candidates(&self) -> Option<Vec<Vec<f64>>> {
        if self.dim == 1 {
            return Some(vec![vec![self.support(&[1.0])]]);
        }
        let gens = self.zonotope_generators()?;
        if gens.is_empty() {
            return Some(vec![vec![0.0; self.dim]]);
        }
        if self.dim == 2 {
            return Some(zonogon_half_vertices(&gens));
        }
        if gens.len() <= SIGN_ENUMERATION_LIMIT {
            return Some(sign_sums(&gens));
        }
        None
    }

    /// Dumps the atom table as CSV: `weight,f[0][0],...,f[n-1][m-1]`.
    pub fn write_atoms_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = vec!["weight".to_string()];
        for i in 0..self.dim {
            for t in 0..self.inner {
                head.push(format!("f{i}_{t}"));
            }
        }
        writeln!(w, "{}", head.join(","))?;
        for k in 0..self.atom_count() {
            let mut row = vec![format!("{:?}", self.weights[k])];
            row.extend(self.atom(k).iter().map(|v| format!("{v:?}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Vertices of the zonogon `Σ[-g_k, g_k]` along one half of its boundary; the
/// other half is their negation.
pub fn zonogon_half_vertices(gens: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut g: Vec<[f64; 2]> = gens
        .iter()
        .filter(|v| v[0] != 0.0 || v[1] != 0.0)
        .map(|v| if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) { [-v[0], -v[1]] } else { [v[0], v[1]] })
        .collect();
    g.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
    let mut cur = [0.0, 0.0];
    for v in &g {
        cur[0] -= v[0];
        cur[1] -= v[1];
    }
    let mut out = Vec::with_capacity(g.len() + 1);
    out.push(cur.to_vec());
    for v in &g {
        cur[0] += 2.0 * v[0];
        cur[1] += 2.0 * v[1];
        out.push(cur.to_vec());
    }
    out
}

/// `Σ_k s_k g_k` over all sign patterns with `s_0 = +1`.
fn sign_sums(gens: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = gens[0].len();
    let k = gens.len();
    let mut out = Vec::with_capacity(1 << (k - 1));
    for mask in 0..(1usize << (k - 1)) {
        let mut v = gens[0].clone();
        for (j, g) in gens.iter().enumerate().skip(1) {
            let s = if (mask >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 };
            for t in 0..n {
                v[t] += s * g[t];
            }
        }
        out.push(v);
    }
    out
}

fn dot_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minkowski dot product `max{a·b : a ∈ A, b ∈ B}`.
///
/// Exact when either body has cheap vertex candidates, when both are
/// ellipsoids, or when `n = 1`; otherwise a multi-start alternating dual
/// ascent gives a lower bound and `exact` is `false`.
pub fn dot(a: &ConvexBody, b: &ConvexBody) -> Result<DotProduct> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!("bodies in ℝ^{} and ℝ^{}", a.dim, b.dim)));
    }
    if a.is_zero() || b.is_zero() {
        return Ok(DotProduct { value: 0.0, exact: true });
    }
    if a.dim == 1 {
        return Ok(DotProduct { value: a.support(&[1.0]) * b.support(&[1.0]), exact: true });
    }
    let va = a.vertex_candidates();
    let vb = b.vertex_candidates();
    let pick = match (&va, &vb) {
        (Some(x), Some(y)) => Some(if x.len() <= y.len() { (x, b) } else { (y, a) }),
        (Some(x), None) => Some((x, b)),
        (None, Some(y)) => Some((y, a)),
        (None, None) => None,
    };
    if let Some((verts, other)) = pick {
        let value = verts.iter().map(|v| other.support(v)).fold(0.0_f64, f64::max);
        return Ok(DotProduct { value, exact: true });
    }
    if let (Some(ga), Some(gb)) = (a.ellipsoid_gram(), b.ellipsoid_gram()) {
        let value = spectral_norm(&(sym_sqrt(&gb) * sym_sqrt(&ga)));
        return Ok(DotProduct { value, exact: true });
    }
    Ok(DotProduct { value: dot_ascent(a, b, &[]), exact: false })
}

/// Alternating dual ascent for `max a·b`, started from `±eᵢ`, a fixed set of
/// seeded random directions and any caller-supplied directions for `A`.
pub fn dot_ascent(a: &ConvexBody, b: &ConvexBody, extra_starts: &[Vec<f64>]) -> f64 {
    let n = a.dim;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            starts.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ASCENT_SEED);
    for _ in 0..ASCENT_RANDOM_STARTS {
        starts.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    starts.extend(extra_starts.iter().cloned());

    let mut best = 0.0_f64;
    for d in &starts {
        let mut pa = a.maximizer(d);
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..ASCENT_MAX_SWEEPS {
            let pb = b.maximizer(&pa);
            let next_a = a.maximizer(&pb);
            let val = dot_vec(&next_a, &pb);
            best = best.max(val).max(dot_vec(&pa, &pb));
            pa = next_a;
            if val - prev <= ASCENT_TOL * val.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            prev = val;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DyadicGrid;
    use crate::linalg::random_orthogonal;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_gens(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
    }

    /// Exhaustive maximum of `(Σ s g)·(Σ t h)` over all sign pairs.
    fn sign_pair_oracle(ga: &[Vec<f64>], gb: &[Vec<f64>]) -> f64 {
        let sums = |g: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let n = g[0].len();
            (0..1usize << g.len())
                .map(|mask| {
                    let mut v = vec![0.0; n];
                    for (j, gj) in g.iter().enumerate() {
                        let s = if (mask >> j) & 1 == 1 { -1.0 } else { 1.0 };
                        for t in 0..n {
                            v[t] += s * gj[t];
                        }
                    }
                    v
                })
                .collect()
        };
        let sa = sums(ga);
        let sb = sums(gb);
        let mut best = f64::NEG_INFINITY;
        for x in &sa {
            for y in &sb {
                best = best.max(dot_vec(x, y));
            }
        }
        best
    }

    #[test]
    fn interval_body_support() {
        let g = DyadicGrid::line(3);
        let f = GridFunction::scalar(g, vec![1.0; 8]).unwrap();
        let k = ConvexBody::of_function(&f, &g.cells(&g.root()), 1.0, Normalization::Averaged).unwrap();
        for u in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            assert!((k.support(&[u]) - f64::abs(u)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_component_support() {
        let g = DyadicGrid::line(3);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0 - 0.5).collect();
        let f = GridFunction::from_components(g, &[vec![1.0; 8], x]).unwrap();
        let k = ConvexBody::of_function(&f, &g.cells(&g.root()), 1.0, Normalization::Averaged).unwrap();
        assert!((k.support(&[1.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn maximizer_attains_support_for_all_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (p, r) in [(1.0, 2.0), (2.0, 2.0), (1.5, 3.0), (1.0, f64::INFINITY), (3.0, 1.0)] {
            let atoms = 7;
            let values: Vec<f64> = (0..atoms * 3 * 2).map(|_| rng.random::<f64>() - 0.5).collect();
            let k = ConvexBody::from_atoms(3, 2, p, r, vec![0.3; atoms], values).unwrap();
            for _ in 0..20 {
                let u: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
                let x = k.maximizer(&u);
                let h = k.support(&u);
                assert!((dot_vec(&u, &x) - h).abs() < 1e-12 * h.max(1.0), "p={p} r={r}");
                // x lies in K: no direction separates it
                for _ in 0..10 {
                    let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
                    assert!(dot_vec(&w, &x) <= k.support(&w) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn n1_dot_is_product_of_norms() {
        let g = DyadicGrid::line(3);
        let f = GridFunction::scalar(g, (0..8).map(|i| i as f64 - 2.0).collect()).unwrap();
        let h = GridFunction::scalar(g, (0..8).map(|i| (i as f64).cos()).collect()).unwrap();
        let cells = g.cells(&g.root());
        let a = ConvexBody::of_function(&f, &cells, 1.0, Normalization::Averaged).unwrap();
        let b = ConvexBody::of_function(&h, &cells, 2.0, Normalization::Averaged).unwrap();
        let d = dot(&a, &b).unwrap();
        let expect = f.local_norm(0, &g.root(), 1.0) * h.local_norm(0, &g.root(), 2.0);
        assert!(d.exact);
        assert!((d.value - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_body_dot_is_zero() {
        let a = ConvexBody::zonotope(2, &[vec![0.0, 0.0]]).unwrap();
        let b = ConvexBody::zonotope(2, &[vec![1.0, 2.0]]).unwrap();
        assert_eq!(dot(&a, &b).unwrap(), DotProduct { value: 0.0, exact: true });
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = ConvexBody::zonotope(2, &[vec![1.0, 0.0]]).unwrap();
        let b = ConvexBody::zonotope(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(dot(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn planar_dot_matches_sign_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let ga = random_gens(&mut rng, 2, 6);
            let gb = random_gens(&mut rng, 2, 6);
            let a = ConvexBody::zonotope(2, &ga).unwrap();
            let b = ConvexBody::zonotope(2, &gb).unwrap();
            let oracle = sign_pair_oracle(&ga, &gb);
            let exact = dot(&a, &b).unwrap();
            assert!(exact.exact);
            assert!((exact.value - oracle).abs() < 1e-10);
            let asc = dot_ascent(&a, &b, &[]);
            assert!((asc - oracle).abs() < 1e-10, "ascent {asc} vs oracle {oracle}");
        }
    }

    #[test]
    fn three_dimensional_dot_matches_sign_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let ga = random_gens(&mut rng, 3, 5);
            let gb = random_gens(&mut rng, 3, 6);
            let a = ConvexBody::zonotope(3, &ga).unwrap();
            let b = ConvexBody::zonotope(3, &gb).unwrap();
            let d = dot(&a, &b).unwrap();
            assert!(d.exact);
            assert!((d.value - sign_pair_oracle(&ga, &gb)).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipsoid_dot_matches_ascent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let va: Vec<f64> = (0..9 * 3).map(|_| rng.random::<f64>() - 0.5).collect();
            let vb: Vec<f64> = (0..5 * 3).map(|_| rng.random::<f64>() - 0.5).collect();
            let a = ConvexBody::from_atoms(3, 1, 2.0, 2.0, vec![0.2; 9], va).unwrap();
            let b = ConvexBody::from_atoms(3, 1, 2.0, 2.0, vec![0.5; 5], vb).unwrap();
            let exact = dot(&a, &b).unwrap();
            assert!(exact.exact);
            let asc = dot_ascent(&a, &b, &[]);
            assert!(asc <= exact.value + 1e-12);
            assert!((asc - exact.value).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_image_is_unchanged() {
        let k = ConvexBody::zonotope(2, &[vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
        let img = k.linear_image(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(img, k);
        let scaled = k.linear_image(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((scaled.support(&[1.0, 0.0]) - 2.0 * k.support(&[1.0, 0.0])).abs() < 1e-15);
    }

    #[test]
    fn image_support_is_transpose_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let values: Vec<f64> = (0..10 * 3 * 2).map(|_| rng.random::<f64>() - 0.5).collect();
        let k = ConvexBody::from_atoms(3, 2, 1.5, 3.0, vec![0.1; 10], values).unwrap();
        let r = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let img = k.linear_image(&r).unwrap();
        for _ in 0..50 {
            let u = nalgebra::DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5);
            let rtu = r.transpose() * &u;
            assert!((img.support(u.as_slice()) - k.support(rtu.as_slice())).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_is_invariant_under_contragredient_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let a = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 7)).unwrap();
            let b = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 5)).unwrap();
            let r = random_orthogonal(2, &mut rng) * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                0.2 + rng.random::<f64>() * 3.0,
                0.2 + rng.random::<f64>() * 3.0,
            ]));
            let rit = r.clone().try_inverse().unwrap().transpose();
            let lhs = dot(&a.linear_image(&r).unwrap(), &b.linear_image(&rit).unwrap()).unwrap().value;
            let rhs = dot(&a, &b).unwrap().value;
            assert!((lhs - rhs).abs() < 1e-9 * rhs.max(1.0));
        }
    }

    #[test]
    fn dot_below_coordinate_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..30 {
            let a = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 5)).unwrap();
            let b = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 5)).unwrap();
            let q = random_orthogonal(2, &mut rng);
            let mut expansion = 0.0;
            for j in 0..2 {
                let e: Vec<f64> = q.column(j).iter().copied().collect();
                expansion += a.support(&e) * b.support(&e);
            }
            assert!(dot(&a, &b).unwrap().value <= expansion + 1e-12);
        }
    }

    #[test]
    fn adding_atoms_never_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let base = random_gens(&mut rng, 2, 4);
        let mut more = base.clone();
        more.extend(random_gens(&mut rng, 2, 3));
        let a = ConvexBody::zonotope(2, &base).unwrap();
        let a2 = ConvexBody::zonotope(2, &more).unwrap();
        let b = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 4)).unwrap();
        for _ in 0..50 {
            let u = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            assert!(a2.support(&u) >= a.support(&u));
        }
        assert!(dot(&a2, &b).unwrap().value >= dot(&a, &b).unwrap().value);
    }

    #[test]
    fn atom_dump_has_one_row_per_atom() {
        let k = ConvexBody::zonotope(2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        k.write_atoms_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("weight,f0_0,f1_0"));
    }

    proptest! {
        #[test]
        fn support_is_sublinear(
            vals in prop::collection::vec(-1.0f64..1.0, 24),
            u in prop::collection::vec(-2.0f64..2.0, 2),
            v in prop::collection::vec(-2.0f64..2.0, 2),
            p in prop::sample::select(vec![1.0, 1.5, 2.0, 4.0]),
            r in prop::sample::select(vec![1.0, 2.0, f64::INFINITY]),
        ) {
            let k = ConvexBody::from_atoms(2, 2, p, r, vec![1.0 / 6.0; 6], vals).unwrap();
            let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let hu = k.support(&u);
            let hv = k.support(&v);
            prop_assert!(k.support(&uv) <= hu + hv + 1e-12);
            let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
            prop_assert!((k.support(&u2) - 2.0 * hu).abs() <= 1e-12 * hu.max(1.0));
        }

        #[test]
        fn dot_is_symmetric_and_nonnegative(
            ga in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..8),
            gb in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..8),
        ) {
            let a = ConvexBody::zonotope(2, &ga).unwrap();
            let b = ConvexBody::zonotope(2, &gb).unwrap();
            let ab = dot(&a, &b).unwrap().value;
            let ba = dot(&b, &a).unwrap().value;
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        }
    }
}
