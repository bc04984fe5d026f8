//! Ellipsoid rounding of symmetric convex bodies.
//!
//! `mvee` returns an ellipsoid `ℰ ⊆ K` with `K ⊆ ρ·ℰ` and `ρ ≤ √k(1+ε)` on the
//! `k`-dimensional span of `K`. It works on a symmetric point cloud `P ⊂ K`:
//! the centred Khachiyan iteration (with away steps) produces weights `λ` and
//! the second-moment matrix `X = Σ λ_j p_j p_jᵀ`. Because `Σλ_j = 1`,
//!
//! ```text
//! h_{E_X}(u)² = uᵀXu = Σ λ_j (u·p_j)² ≤ max_j (u·p_j)² ≤ h_K(u)²,
//! ```
//!
//! so `E_X = {x : xᵀX⁻¹x ≤ 1}` is inscribed in `K` for any weights, and the
//! stopping rule `max_j p_jᵀX⁻¹p_j ≤ k(1+ε)²` gives `conv(P) ⊆ √k(1+ε)E_X`.
//! This is the inscribed half of the Löwner ellipsoid `L = √k·E_X`.
//! When `P` is only a direction-net sample, the outer inclusion is pushed to
//! all of `K` by adding points found through fixed-point search in the rounded
//! coordinates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bodies::ConvexBody;
use crate::error::{Error, Result};
use crate::linalg::{sym_inv, sym_pow};

pub const DEFAULT_MVEE_TOL: f64 = 1e-6;
/// Eigenvalues below this multiple of the largest are treated as degenerate.
pub const RANK_TOL: f64 = 1e-10;
/// Zonotopes with at most this many generators are rounded from their full vertex set.
pub const EXACT_CLOUD_GENERATORS: usize = 12;
const KHACHIYAN_MAX_ITERS: usize = 100_000;
const REFINE_ROUNDS: usize = 12;
const REFINE_STEPS: usize = 25;
const NET_SEED: u64 = 0x10_4e;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ellipsoid {
    dim: usize,
    /// Orthonormal `n×k` basis of the span.
    #[serde(skip)]
    basis: DMatrix<f64>,
    /// Second-moment matrix `X` in span coordinates: `ℰ = {By : yᵀX⁻¹y ≤ 1}`.
    #[serde(skip)]
    moment: DMatrix<f64>,
    /// Measured `ρ` with the cloud inside `ρ·ℰ`.
    pub sandwich_ratio: f64,
    /// Whether the cloud was the full extreme-point set of `K` (or `K` itself is an ellipsoid).
    pub exact_cloud: bool,
    /// Set when `sandwich_ratio > √k(1+ε)`.
    pub flagged: bool,
}

/// Linear maps taking `K` to a body in `ℝᵏ` whose inscribed ellipsoid is the unit ball.
#[derive(Clone, Debug)]
pub struct RoundedFrame {
    /// `k×n` map `X^{-1/2}Bᵀ` applied to `f⃗`.
    pub forward: DMatrix<f64>,
    /// `k×n` map `X^{1/2}Bᵀ` applied to `g⃗`; `forwardᵀ·dual = BBᵀ`.
    pub dual: DMatrix<f64>,
    /// Orthogonal projector `BBᵀ` onto the span.
    pub projector: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn zero(dim: usize) -> Self {
        Ellipsoid {
            dim,
            basis: DMatrix::zeros(dim, 0),
            moment: DMatrix::zeros(0, 0),
            sandwich_ratio: 1.0,
            exact_cloud: true,
            flagged: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P` with `ℰ = {x ∈ span : xᵀPx ≤ 1}` (pseudo-inverse of `BXBᵀ`).
    pub fn shape_matrix(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.dim, self.dim);
        }
        &self.basis * sym_inv(&self.moment) * self.basis.transpose()
    }

    /// `h_ℰ(u) = √(uᵀBXBᵀu)`.
    pub fn support(&self, u: &[f64]) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let y = self.basis.transpose() * DVector::from_column_slice(u);
        (y.dot(&(&self.moment * &y))).max(0.0).sqrt()
    }

    /// `R_K` on the span plus identity on its complement; maps `ℰ` onto the unit ball of the span.
    pub fn round_transform(&self) -> Result<DMatrix<f64>> {
        let f = self.frame()?;
        let complement = DMatrix::identity(self.dim, self.dim) - &f.projector;
        Ok(&self.basis * &f.forward + complement)
    }

    /// `R_K^{-t}`, the contragredient of `round_transform`.
    pub fn round_transform_dual(&self) -> Result<DMatrix<f64>> {
        let f = self.frame()?;
        let complement = DMatrix::identity(self.dim, self.dim) - &f.projector;
        Ok(&self.basis * &f.dual + complement)
    }

    pub fn frame(&self) -> Result<RoundedFrame> {
        if self.rank() == 0 {
            return Err(Error::ZeroBody);
        }
        let bt = self.basis.transpose();
        Ok(RoundedFrame {
            forward: sym_pow(&self.moment, -0.5) * &bt,
            dual: sym_pow(&self.moment, 0.5) * &bt,
            projector: &self.basis * &bt,
        })
    }
}

/// Symmetric point cloud in `K` and whether `conv(±cloud) = K`.
pub fn support_cloud(k: &ConvexBody) -> (Vec<Vec<f64>>, bool) {
    let n = k.dim();
    let small_zonotope = k
        .zonotope_generators()
        .is_some_and(|g| n <= 2 || g.len() <= EXACT_CLOUD_GENERATORS);
    if n == 1 || small_zonotope {
        if let Some(v) = k.vertex_candidates() {
            return (v, true);
        }
    }
    let cloud = direction_net(n).iter().map(|u| k.maximizer(u)).collect();
    (cloud, false)
}

/// Deterministic unit directions covering the half sphere: equal angles for
/// `n = 2`, a Fibonacci lattice for `n = 3`, seeded Gaussians beyond.
pub fn direction_net(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0]],
        2 => (0..720)
            .map(|j| {
                let t = std::f64::consts::PI * j as f64 / 720.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let count = 2048;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (j as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let phi = golden * j as f64;
                    vec![rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let count = (4usize.pow(n as u32) * n).max(2048);
            let mut rng = ChaCha8Rng::seed_from_u64(NET_SEED + n as u64);
            (0..count)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / s).collect()
                })
                .collect()
        }
    }
}

/// Orthonormal basis of the span of `points`, by the second-moment eigenbasis.
fn span_basis(points: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    for p in points {
        let v = DVector::from_column_slice(p);
        s += &v * v.transpose();
    }
    gram_span(&s)
}

fn gram_span(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let keep: Vec<usize> = if max > 0.0 {
        (0..n).filter(|&i| eig.eigenvalues[i] > RANK_TOL * max).collect()
    } else {
        Vec::new()
    };
    let mut b = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        b.set_column(c, &eig.eigenvectors.column(i));
    }
    b
}

/// Centred minimum-volume enclosing ellipsoid weights for a full-rank cloud in
/// `ℝᵏ`. Returns `(X, max_j p_jᵀX⁻¹p_j)`.
///
/// Away-step Khachiyan iterations run on a small working set; the most
/// violated cloud points are added until the whole cloud meets the tolerance.
/// Dense samples of smooth bodies make plain iterations crawl, since many
/// points are nearly active.
pub fn khachiyan(points: &[DVector<f64>], tol: f64) -> (DMatrix<f64>, f64) {
    let k = points[0].len();
    let kf = k as f64;
    let target = kf * (1.0 + tol) * (1.0 + tol);
    let inner_target = kf * (1.0 + 0.5 * tol) * (1.0 + 0.5 * tol);

    let mut active = initial_working_set(points);
    let mut weights = vec![1.0 / active.len() as f64; active.len()];
    let mut last = (DMatrix::zeros(k, k), f64::INFINITY);
    for _ in 0..KHACHIYAN_OUTER_ITERS {
        let subset: Vec<&DVector<f64>> = active.iter().map(|&j| &points[j]).collect();
        weights = away_step_khachiyan(&subset, weights, inner_target);
        let x = weighted_moment(&subset, &weights);
        let xi = sym_inv(&x);
        let m: Vec<f64> = points.iter().map(|p| p.dot(&(&xi * p))).collect();
        let mmax = m.iter().copied().fold(0.0, f64::max);
        last = (x, mmax);
        if mmax <= target {
            break;
        }
        // keep supporting points, then add the worst offenders
        let mut keep: Vec<(usize, f64)> =
            active.iter().zip(&weights).filter(|(_, w)| **w > 0.0).map(|(j, w)| (*j, *w)).collect();
        let mut order: Vec<usize> = (0..points.len()).filter(|j| m[*j] > inner_target).collect();
        order.sort_by(|a, b| m[*b].total_cmp(&m[*a]));
        let fresh = order.into_iter().filter(|j| !keep.iter().any(|(a, _)| a == j)).take(WORKING_SET_GROWTH);
        let added: Vec<usize> = fresh.collect();
        if added.is_empty() {
            break;
        }
        let share = 0.5 / added.len() as f64;
        for (_, w) in keep.iter_mut() {
            *w *= 0.5;
        }
        keep.extend(added.into_iter().map(|j| (j, share)));
        active = keep.iter().map(|(j, _)| *j).collect();
        weights = keep.iter().map(|(_, w)| *w).collect();
    }
    last
}

const KHACHIYAN_OUTER_ITERS: usize = 500;
const WORKING_SET_GROWTH: usize = 4;

/// Greedy spanning start: repeatedly take the longest residual after
/// projecting out the directions already chosen.
fn initial_working_set(points: &[DVector<f64>]) -> Vec<usize> {
    let k = points[0].len();
    let mut chosen = Vec::new();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for _ in 0..k {
        let mut best = (usize::MAX, 0.0);
        for (j, p) in points.iter().enumerate() {
            let mut r = p.clone();
            for d in &dirs {
                r -= d * d.dot(p);
            }
            let nr = r.norm();
            if nr > best.1 {
                best = (j, nr);
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        let mut r = points[best.0].clone();
        for d in &dirs {
            r -= d * d.dot(&points[best.0]);
        }
        dirs.push(r.normalize());
        chosen.push(best.0);
    }
    chosen
}

fn weighted_moment(points: &[&DVector<f64>], u: &[f64]) -> DMatrix<f64> {
    let k = points[0].len();
    let mut x = DMatrix::zeros(k, k);
    for (p, w) in points.iter().zip(u) {
        if *w > 0.0 {
            x += *p * p.transpose() * *w;
        }
    }
    x
}

/// Todd–Yıldırım iterations with toward and away steps on a fixed point set.
fn away_step_khachiyan(points: &[&DVector<f64>], mut u: Vec<f64>, target: f64) -> Vec<f64> {
    let kf = points[0].len() as f64;
    let mut m = vec![0.0; points.len()];
    let mut x = weighted_moment(points, &u);
    for it in 0..KHACHIYAN_MAX_ITERS {
        if it % 64 == 63 {
            x = weighted_moment(points, &u);
        }
        let xi = match x.clone().cholesky() {
            Some(c) => c.inverse(),
            None => sym_inv(&x),
        };
        let (mut jmax, mut mmax) = (0, f64::NEG_INFINITY);
        let (mut jmin, mut mmin) = (0, f64::INFINITY);
        for (j, p) in points.iter().enumerate() {
            m[j] = p.dot(&(&xi * *p));
            if m[j] > mmax {
                mmax = m[j];
                jmax = j;
            }
            if u[j] > 0.0 && m[j] < mmin {
                mmin = m[j];
                jmin = j;
            }
        }
        if mmax <= target {
            break;
        }
        let (j, tau) = if kf - mmin > mmax - kf && mmin > 1.0 {
            let raw = (mmin - kf) / (kf * (mmin - 1.0));
            let cap = -u[jmin] / (1.0 - u[jmin]).max(1e-300);
            (jmin, raw.max(cap))
        } else {
            (jmax, (mmax - kf) / (kf * (mmax - 1.0)))
        };
        if !tau.is_finite() || tau == 0.0 {
            break;
        }
        for w in u.iter_mut() {
            *w *= 1.0 - tau;
        }
        u[j] = (u[j] + tau).max(0.0);
        let p = points[j];
        x = x * (1.0 - tau) + p * p.transpose() * tau;
    }
    u
}

/// Inscribed ellipsoid `ℰ ⊆ K` with `K ⊆ ρℰ`, `ρ` reported.
pub fn mvee(k: &ConvexBody, tol: f64) -> Result<Ellipsoid> {
    if !(tol > 0.0 && tol <= 0.1) {
        return Err(Error::InvalidParameter(format!("MVEE tolerance {tol} not in (0, 0.1]")));
    }
    let n = k.dim();
    if k.is_zero() {
        return Ok(Ellipsoid::zero(n));
    }
    if let Some(g) = k.ellipsoid_gram() {
        let basis = gram_span(&g);
        if basis.ncols() == 0 {
            return Ok(Ellipsoid::zero(n));
        }
        let moment = basis.transpose() * &g * &basis;
        return Ok(Ellipsoid { dim: n, basis, moment, sandwich_ratio: 1.0, exact_cloud: true, flagged: false });
    }
    let (mut cloud, exact) = support_cloud(k);
    let basis = span_basis(&cloud, n);
    let rank = basis.ncols();
    if rank == 0 {
        return Ok(Ellipsoid::zero(n));
    }
    let project = |p: &[f64]| basis.transpose() * DVector::from_column_slice(p);
    let mut proj: Vec<DVector<f64>> = cloud.iter().map(|p| project(p)).collect();
    let (mut moment, mut mmax) = khachiyan(&proj, tol);

    let mut worst = mmax;
    if !exact {
        for _ in 0..REFINE_ROUNDS {
            let xi = sym_inv(&moment);
            let mut added = Vec::new();
            worst = mmax;
            let threshold = mmax * (1.0 + 1e-9);
            for start in proj.iter().step_by((proj.len() / 64).max(1)) {
                // ascent of yᵀX⁻¹y over K by linearisation
                let mut y = start.clone();
                for _ in 0..REFINE_STEPS {
                    let dir = &basis * (&xi * &y);
                    let next = project(&k.maximizer(dir.as_slice()));
                    let mv = next.dot(&(&xi * &next));
                    let prev = y.dot(&(&xi * &y));
                    y = next;
                    if mv <= prev * (1.0 + 1e-12) {
                        break;
                    }
                }
                let my = y.dot(&(&xi * &y));
                worst = worst.max(my);
                if my > threshold {
                    added.push(y);
                }
            }
            if added.is_empty() {
                break;
            }
            for y in added {
                cloud.push((&basis * &y).as_slice().to_vec());
                proj.push(y);
            }
            let (m2, mm2) = khachiyan(&proj, tol);
            moment = m2;
            mmax = mm2;
            worst = mmax;
        }
    }
    let sandwich_ratio = worst.max(mmax).sqrt();
    let flagged = sandwich_ratio > (rank as f64).sqrt() * (1.0 + tol);
    Ok(Ellipsoid { dim: n, basis, moment, sandwich_ratio, exact_cloud: exact, flagged })
}

/// `max_u h_K(u)/h_ℰ(u)` and `min_u` of the same over the given directions;
/// directions where `h_ℰ` vanishes are skipped.
pub fn sandwich_sweep(k: &ConvexBody, e: &Ellipsoid, directions: &[Vec<f64>]) -> (f64, f64) {
    let mut hi = 0.0_f64;
    let mut lo = f64::INFINITY;
    let scale = directions.iter().map(|u| e.support(u)).fold(0.0, f64::max);
    for u in directions {
        let he = e.support(u);
        if he <= 1e-12 * scale {
            continue;
        }
        let r = k.support(u) / he;
        hi = hi.max(r);
        lo = lo.min(r);
    }
    if lo == f64::INFINITY {
        lo = 1.0;
    }
    (hi, lo)
}

/// `720` equal-angle directions for `n = 2`, otherwise the rounding net.
pub fn sweep_directions(n: usize) -> Vec<Vec<f64>> {
    direction_net(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::dot;
    use crate::function::GridFunction;
    use crate::grid::DyadicGrid;
    use crate::bodies::Normalization;
    use rand::Rng;

    fn random_gens(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
    }

    #[test]
    fn cross_polytope_rounds_to_disk() {
        let k = ConvexBody::zonotope(2, &[vec![0.5, 0.5], vec![0.5, -0.5]]).unwrap();
        // square with vertices (±1,0),(0,±1)
        let e = mvee(&k, 1e-8).unwrap();
        let p = e.shape_matrix();
        assert!((p - DMatrix::identity(2, 2) * 2.0).amax() < 1e-6);
        assert!((e.sandwich_ratio - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn segment_is_rank_one() {
        let k = ConvexBody::zonotope(2, &[vec![1.0, 2.0]]).unwrap();
        let e = mvee(&k, 1e-6).unwrap();
        assert_eq!(e.rank(), 1);
        let b = e.basis().column(0);
        assert!((b[0] * 2.0 - b[1]).abs() < 1e-12);
        let pr = e.frame().unwrap().projector;
        assert!((&pr * &pr - &pr).amax() < 1e-12);
        assert!((&pr - pr.transpose()).amax() < 1e-15);
    }

    #[test]
    fn zero_body_has_rank_zero() {
        let k = ConvexBody::zonotope(2, &[vec![0.0, 0.0]]).unwrap();
        let e = mvee(&k, 1e-6).unwrap();
        assert_eq!(e.rank(), 0);
        assert!(matches!(e.round_transform(), Err(Error::ZeroBody)));
    }

    #[test]
    fn bad_tolerance_rejected() {
        let k = ConvexBody::zonotope(1, &[vec![1.0]]).unwrap();
        assert!(mvee(&k, 0.5).is_err());
        assert!(mvee(&k, 0.0).is_err());
    }

    #[test]
    fn round_transform_of_diagonal_ellipsoid() {
        // h(u)² = uᵀGu with G = diag(1/4, 1) gives P = diag(4, 1)
        let k = ConvexBody::from_atoms(2, 1, 2.0, 2.0, vec![1.0, 1.0], vec![0.5, 0.0, 0.0, 1.0]).unwrap();
        let e = mvee(&k, 1e-6).unwrap();
        let r = e.round_transform().unwrap();
        assert!((r - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).amax() < 1e-12);
        let unit = ConvexBody::from_atoms(2, 1, 2.0, 2.0, vec![1.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = mvee(&unit, 1e-6).unwrap().round_transform().unwrap();
        assert!((r - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn rounded_ellipsoid_maps_into_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, 6)).unwrap();
        let e = mvee(&k, 1e-6).unwrap();
        let r = e.round_transform().unwrap();
        let p = e.shape_matrix();
        let bound = 3.0 / p.symmetric_eigenvalues().min().sqrt();
        let mut accepted = 0;
        while accepted < 1000 {
            let x = DVector::from_fn(2, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * bound);
            if x.dot(&(&p * &x)) <= 1.0 {
                accepted += 1;
                assert!((&r * &x).norm() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn random_zonogon_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dirs = sweep_directions(2);
        for _ in 0..50 {
            let count = rng.random_range(1..=10);
            let k = ConvexBody::zonotope(2, &random_gens(&mut rng, 2, count)).unwrap();
            let e = mvee(&k, 1e-6).unwrap();
            let (hi, lo) = sandwich_sweep(&k, &e, &dirs);
            let bound = (e.rank() as f64).sqrt() * (1.0 + 1e-6);
            assert!(hi <= bound + 1e-9, "hi {hi}");
            assert!(lo >= 1.0 - 1e-9, "lo {lo}");
            assert!(!e.flagged);
        }
    }

    #[test]
    fn net_cloud_sandwich_for_non_polytopal_bodies() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (n, p, r) in [(2, 1.0, f64::INFINITY), (3, 1.5, 3.0), (2, 3.0, 1.0)] {
            let atoms = 12;
            let values: Vec<f64> = (0..atoms * n * 2).map(|_| rng.random::<f64>() - 0.5).collect();
            let k = ConvexBody::from_atoms(n, 2, p, r, vec![1.0 / atoms as f64; atoms], values).unwrap();
            let e = mvee(&k, 1e-6).unwrap();
            let (hi, lo) = sandwich_sweep(&k, &e, &sweep_directions(n));
            assert!(lo >= 1.0 - 1e-9);
            assert!(hi <= e.sandwich_ratio * (1.0 + 1e-9), "hi {hi} reported {}", e.sandwich_ratio);
            assert!(hi <= (n as f64).sqrt() * 1.01);
        }
    }

    #[test]
    fn coordinate_bound_after_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let g = DyadicGrid::line(3);
        for _ in 0..20 {
            let f = GridFunction::from_components(g, &[
                (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
            ])
            .unwrap();
            let h = GridFunction::from_components(g, &[
                (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
            ])
            .unwrap();
            let cells = g.cells(&g.root());
            let kf = ConvexBody::of_function(&f, &cells, 1.0, Normalization::Averaged).unwrap();
            let kg = ConvexBody::of_function(&h, &cells, 1.0, Normalization::Averaged).unwrap();
            let e = mvee(&kf, 1e-6).unwrap();
            let fr = e.frame().unwrap();
            let ff = f.map_outer(&fr.forward).unwrap();
            let gg = h.map_outer(&fr.dual).unwrap();
            let bound = 2f64.sqrt() * (1.0 + 1e-6);
            let mut sum = 0.0;
            for i in 0..fr.forward.nrows() {
                let a = ff.local_norm(i, &g.root(), 1.0);
                assert!(a <= bound + 1e-9);
                sum += a * gg.local_norm(i, &g.root(), 1.0);
            }
            let d = dot(&kf, &kg).unwrap();
            assert!(d.exact);
            assert!(sum <= 2f64.powf(1.5) * (1.0 + 1e-6) * d.value + 1e-12);
        }
    }
}
