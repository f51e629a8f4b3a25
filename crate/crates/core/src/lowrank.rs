//! Dense complex SVD, rank-`r` truncation and the fixed-rank tangent-space
//! projector.
//!
//! The SVD is one-sided (Hestenes) Jacobi: columns of the working matrix are
//! rotated pairwise until mutually orthogonal, at which point their norms are
//! the singular values. At the Hankel sizes used here (at most a few dozen
//! rows) it is accurate to working precision and needs no blocking.

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::CMatrix;

const MAX_SWEEPS: usize = 80;

/// Leading singular triplets `X ≈ U diag(σ) Vᴴ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankFactorization {
    /// `n1 × r`, orthonormal columns.
    pub u: CMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `n2 × r`, orthonormal columns.
    pub v: CMatrix,
}

impl RankFactorization {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(σ) Vᴴ`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut us = self.u.clone();
        for (mut col, &s) in us.columns_mut().into_iter().zip(&self.sigma) {
            col *= Complex64::new(s, 0.0);
        }
        us.dot(&adjoint(&self.v))
    }

    fn truncated(mut self, r: usize) -> Self {
        self.sigma.truncate(r);
        self.u = self.u.slice(s![.., ..r]).to_owned();
        self.v = self.v.slice(s![.., ..r]).to_owned();
        self
    }
}

/// Conjugate transpose.
pub fn adjoint(x: &CMatrix) -> CMatrix {
    x.t().mapv(|z| z.conj())
}

pub fn frobenius(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn columns(x: &CMatrix) -> Vec<Vec<Complex64>> {
    x.columns().into_iter().map(|c| c.to_vec()).collect()
}

fn from_columns(rows: usize, cols: &[Vec<Complex64>]) -> CMatrix {
    Array2::from_shape_fn((rows, cols.len()), |(i, j)| cols[j][i])
}

/// Removes from `w` its components along `basis` (two passes).
fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for b in basis {
            let proj = cdot(b, w);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= proj * bi;
            }
        }
    }
}

/// Canonical basis vector with the largest component outside `basis`,
/// orthonormalized against it.
fn complement_vector(n: usize, basis: &[Vec<Complex64>]) -> Vec<Complex64> {
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for i in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[i] = Complex64::new(1.0, 0.0);
        orthogonalize(&mut e, basis);
        let nrm = norm(&e);
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, e));
        }
    }
    let (nrm, mut e) = best.expect("n > 0");
    for z in &mut e {
        *z /= nrm;
    }
    e
}

/// Full thin SVD with `min(n1, n2)` triplets, singular values sorted
/// non-increasing.
pub fn svd(x: &CMatrix) -> Result<RankFactorization> {
    let (n1, n2) = x.dim();
    if n1 == 0 || n2 == 0 {
        return Err(Error::Shape {
            expected: 1,
            got: 0,
        });
    }
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite entry in SVD input".into()));
    }
    if n1 < n2 {
        let f = svd(&adjoint(x))?;
        return Ok(RankFactorization {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        });
    }
    let rows = n1;
    let k = n2;
    let mut a = columns(x);
    let mut v: Vec<Vec<Complex64>> = (0..k)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); k];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let tol = f64::EPSILON * rows as f64;
    // columns below this squared norm are numerically zero; rotating them
    // against each other only shuffles roundoff
    let floor = (f64::EPSILON * frobenius(x)).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = a[p].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let beta = a[q].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let gamma = cdot(&a[p], &a[q]);
                let g = gamma.norm();
                if g == 0.0 || alpha <= floor || beta <= floor || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                let ph = phase.conj();
                rotate(&mut a, p, q, c, sn, ph);
                rotate(&mut v, p, q, c, sn, ph);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(f64, usize)> = a.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));
    let smax = order[0].0;
    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut v_cols = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    for &(s, j) in &order {
        let col = if s > smax * 1e-14 && s > f64::MIN_POSITIVE {
            let mut c: Vec<Complex64> = a[j].iter().map(|z| z / s).collect();
            // tiny re-orthogonalization against earlier columns
            orthogonalize(&mut c, &u_cols);
            let n = norm(&c);
            c.iter_mut().for_each(|z| *z /= n);
            c
        } else {
            complement_vector(rows, &u_cols)
        };
        u_cols.push(col);
        v_cols.push(v[j].clone());
        sigma.push(s);
    }
    Ok(RankFactorization {
        u: from_columns(rows, &u_cols),
        sigma,
        v: from_columns(k, &v_cols),
    })
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, ph: Complex64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = *y * ph;
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

fn check_rank(x: &CMatrix, r: usize) -> Result<()> {
    let max = x.nrows().min(x.ncols());
    if r == 0 || r > max {
        Err(Error::RankOutOfRange { rank: r, max })
    } else {
        Ok(())
    }
}

/// The `r` dominant singular triplets of `x`.
pub fn truncated_svd(x: &CMatrix, r: usize) -> Result<RankFactorization> {
    check_rank(x, r)?;
    Ok(svd(x)?.truncated(r))
}

/// Best rank-`r` approximation `T_r(x)` in Frobenius norm.
pub fn project_fixed_rank(x: &CMatrix, r: usize) -> Result<CMatrix> {
    Ok(truncated_svd(x, r)?.reconstruct())
}

/// `P_T(X) = U Uᴴ X + X V Vᴴ − U Uᴴ X V Vᴴ`, the orthogonal projection onto the
/// tangent space of the rank-`r` manifold at `U Σ Vᴴ`.
pub fn tangent_project(x: &CMatrix, basis: &RankFactorization) -> Result<CMatrix> {
    let (n1, n2) = x.dim();
    if basis.u.nrows() != n1 || basis.v.nrows() != n2 {
        return Err(Error::Shape {
            expected: basis.u.nrows() * basis.v.nrows(),
            got: n1 * n2,
        });
    }
    let uh = adjoint(&basis.u);
    let vh = adjoint(&basis.v);
    let uhx = uh.dot(x);
    let left = basis.u.dot(&uhx);
    let xv = x.dot(&basis.v);
    let right = xv.dot(&vh);
    let both = basis.u.dot(&uhx.dot(&basis.v)).dot(&vh);
    Ok(left + right - both)
}

/// Orthonormal `Q` with `span(Q) ⊇ span(Y)` and `Q ⟂ basis`, plus `R = Qᴴ Y`.
fn qr_against(y: &CMatrix, basis: &CMatrix, scale: f64) -> (CMatrix, CMatrix) {
    let n = y.nrows();
    let base = columns(basis);
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(y.ncols());
    for col in y.columns() {
        let mut w = col.to_vec();
        orthogonalize(&mut w, &base);
        orthogonalize(&mut w, &q);
        let nrm = norm(&w);
        if nrm > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            w.iter_mut().for_each(|z| *z /= nrm);
            q.push(w);
        } else {
            let all: Vec<Vec<Complex64>> = base.iter().chain(q.iter()).cloned().collect();
            q.push(complement_vector(n, &all));
        }
    }
    let qm = from_columns(n, &q);
    let r = adjoint(&qm).dot(y);
    (qm, r)
}

/// Rank-`r` truncation of `P_T(x)` computed on the `2r × 2r` core of the
/// factored tangent vector `[U Q₁] M [V Q₂]ᴴ` instead of a dense SVD.
///
/// Falls back to the dense path when `2r` exceeds either dimension.
pub fn truncate_tangent(x: &CMatrix, basis: &RankFactorization, r: usize) -> Result<RankFactorization> {
    check_rank(x, r)?;
    let (n1, n2) = x.dim();
    let k = basis.rank();
    if basis.u.nrows() != n1 || basis.v.nrows() != n2 {
        return Err(Error::Shape {
            expected: basis.u.nrows() * basis.v.nrows(),
            got: n1 * n2,
        });
    }
    if 2 * k > n1.min(n2) || r > 2 * k {
        return truncated_svd(&tangent_project(x, basis)?, r);
    }
    let u = &basis.u;
    let v = &basis.v;
    let core = adjoint(u).dot(x).dot(v);
    let y1 = x.dot(v) - u.dot(&core);
    let y2 = adjoint(x).dot(u) - v.dot(&adjoint(&core));
    let scale = frobenius(x);
    let (q1, r1) = qr_against(&y1, u, scale);
    let (q2, r2) = qr_against(&y2, v, scale);
    let mut m = Array2::zeros((2 * k, 2 * k));
    m.slice_mut(s![..k, ..k]).assign(&core);
    m.slice_mut(s![..k, k..]).assign(&adjoint(&r2));
    m.slice_mut(s![k.., ..k]).assign(&r1);
    let inner = truncated_svd(&m, r)?;
    let mut left = Array2::zeros((n1, 2 * k));
    left.slice_mut(s![.., ..k]).assign(u);
    left.slice_mut(s![.., k..]).assign(&q1);
    let mut right = Array2::zeros((n2, 2 * k));
    right.slice_mut(s![.., ..k]).assign(v);
    right.slice_mut(s![.., k..]).assign(&q2);
    Ok(RankFactorization {
        u: left.dot(&inner.u),
        sigma: inner.sigma,
        v: right.dot(&inner.v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> CMatrix {
        Array2::from_shape_fn((n1, n2), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn is_orthonormal(q: &CMatrix) -> bool {
        let g = adjoint(q).dot(q);
        let eye = Array2::from_shape_fn(g.dim(), |(i, j)| c(if i == j { 1.0 } else { 0.0 }));
        max_diff(&g, &eye) < 1e-10
    }

    #[test]
    fn diagonal_rank_one() {
        let x = ndarray::arr2(&[[c(3.0), c(0.0)], [c(0.0), c(1.0)]]);
        let f = truncated_svd(&x, 1).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-14);
        let expect = ndarray::arr2(&[[c(3.0), c(0.0)], [c(0.0), c(0.0)]]);
        assert!(max_diff(&f.reconstruct(), &expect) < 1e-14);
    }

    #[test]
    fn full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n1, n2) in [(11, 11), (10, 11), (11, 10), (1, 4), (16, 16)] {
            let x = random(&mut rng, n1, n2);
            let f = truncated_svd(&x, n1.min(n2)).unwrap();
            assert!(max_diff(&f.reconstruct(), &x) < 1e-10 * frobenius(&x));
            assert!(is_orthonormal(&f.u) && is_orthonormal(&f.v));
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_out_of_range() {
        let x = Array2::from_elem((3, 4), c(1.0));
        assert!(matches!(truncated_svd(&x, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(truncated_svd(&x, 4), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn zero_and_rank_deficient_inputs_keep_orthonormal_factors() {
        let z = Array2::<Complex64>::zeros((5, 5));
        let f = truncated_svd(&z, 3).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert!(is_orthonormal(&f.u) && is_orthonormal(&f.v));
        let ones = Array2::from_elem((4, 6), c(1.0));
        let f = truncated_svd(&ones, 3).unwrap();
        assert!((f.sigma[0] - 24f64.sqrt()).abs() < 1e-12);
        assert!(is_orthonormal(&f.u) && is_orthonormal(&f.v));
    }

    #[test]
    fn repeated_low_rank_truncation_converges() {
        // re-truncating an exactly rank-r product leaves roundoff-level columns
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, r) in [(3, 1), (11, 2), (10, 3)] {
            let mut x = random(&mut rng, n, r).dot(&random(&mut rng, r, n + 1));
            for _ in 0..50 {
                x = truncated_svd(&x, r).unwrap().reconstruct();
            }
            let f = svd(&x).unwrap();
            assert!(f.sigma[r] <= 1e-13 * f.sigma[0]);
            assert!(is_orthonormal(&f.u) && is_orthonormal(&f.v));
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut x = Array2::from_elem((3, 3), c(1.0));
        x[[1, 1]] = c(f64::NAN);
        assert!(matches!(svd(&x), Err(Error::Numeric(_))));
    }

    #[test]
    fn tangent_projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = random(&mut rng, 11, 11);
        let basis = truncated_svd(&base, 2).unwrap();
        // identity on U A Vᴴ
        let a = random(&mut rng, 2, 2);
        let on = basis.u.dot(&a).dot(&adjoint(&basis.v));
        assert!(max_diff(&tangent_project(&on, &basis).unwrap(), &on) < 1e-12);
        // idempotent, non-expansive
        let x = random(&mut rng, 11, 11);
        let p = tangent_project(&x, &basis).unwrap();
        let pp = tangent_project(&p, &basis).unwrap();
        assert!(max_diff(&p, &pp) < 1e-10);
        assert!(frobenius(&p) <= frobenius(&x) + 1e-12);
        assert!(svd(&p).unwrap().sigma[4] < 1e-10 * frobenius(&p));
        // linear
        let y = random(&mut rng, 11, 11);
        let lin = tangent_project(&(&x * c(2.0) + &y), &basis).unwrap();
        let sep = tangent_project(&x, &basis).unwrap() * c(2.0) + tangent_project(&y, &basis).unwrap();
        assert!(max_diff(&lin, &sep) < 1e-12);
        // full basis is the identity map
        let full = svd(&base).unwrap();
        assert!(max_diff(&tangent_project(&x, &full).unwrap(), &x) < 1e-12);
    }

    #[test]
    fn structured_truncation_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n1, n2, r) in [(11, 11, 2), (10, 11, 3), (11, 11, 1), (16, 16, 5), (8, 9, 4)] {
            let basis = truncated_svd(&random(&mut rng, n1, n2), r).unwrap();
            let x = random(&mut rng, n1, n2);
            let dense = truncated_svd(&tangent_project(&x, &basis).unwrap(), r).unwrap();
            let fast = truncate_tangent(&x, &basis, r).unwrap();
            assert!(max_diff(&dense.reconstruct(), &fast.reconstruct()) < 1e-10);
            for (a, b) in dense.sigma.iter().zip(&fast.sigma) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(is_orthonormal(&fast.u) && is_orthonormal(&fast.v));
        }
    }

    #[test]
    fn structured_truncation_with_degenerate_complement() {
        // x in the span of the basis: both complement blocks vanish
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = truncated_svd(&random(&mut rng, 11, 11), 2).unwrap();
        let x = basis.u.dot(&random(&mut rng, 2, 2)).dot(&adjoint(&basis.v));
        let fast = truncate_tangent(&x, &basis, 2).unwrap();
        assert!(max_diff(&fast.reconstruct(), &x) < 1e-12);
        assert!(is_orthonormal(&fast.u) && is_orthonormal(&fast.v));
    }

    #[test]
    fn eckart_young_against_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 11, 11);
        let best = frobenius(&(&x - &project_fixed_rank(&x, 2).unwrap()));
        for _ in 0..100 {
            let b = random(&mut rng, 11, 2).dot(&random(&mut rng, 2, 11));
            assert!(best <= frobenius(&(&x - &b)));
        }
    }
}
