//! Hankel lift `H`, its anti-diagonal-averaging inverse `H†`, and the
//! observed-entry bookkeeping shared by the solvers and the network.
//!
//! Conventions (also recorded in `docs/FORMATS.md`):
//!
//! - `n1 = n2 = (m+1)/2` for odd `m`; `n1 = m/2`, `n2 = n1 + 1` for even `m`.
//! - Matrices flatten row-major; entry `(i, j)` (0-based) holds `x[i + j]`.
//! - A stacked signal is `[re(x) ‖ im(x)]` (length `2m`); a Hankel vector is the
//!   flattened real-part Hankel matrix followed by the imaginary-part one
//!   (length `2 n1 n2`).
//! - `phi` lists observed positions of the Hankel vector in ascending order,
//!   so all real-segment positions precede all imaginary-segment ones.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::array::ArrayConfig;
use crate::error::{check_len, Error, Result};

pub type CMatrix = Array2<Complex64>;

/// Hankel shape for an `m`-element array.
pub fn hankel_dims(m: usize) -> (usize, usize) {
    if m % 2 == 1 {
        let n = m.div_ceil(2);
        (n, n)
    } else {
        (m / 2, m / 2 + 1)
    }
}

/// Index machinery for one array configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelIndexMap {
    m: usize,
    n1: usize,
    n2: usize,
    mask: Vec<bool>,
    theta: Vec<(usize, usize)>,
    phi: Vec<usize>,
    anti_diag_len: Vec<usize>,
    /// Stacked-signal row feeding each Hankel-vector row.
    lift_src: Vec<usize>,
}

impl HankelIndexMap {
    pub fn new(config: &ArrayConfig) -> Self {
        let m = config.m();
        let (n1, n2) = hankel_dims(m);
        let mask = config.mask();
        let mut anti_diag_len = vec![0usize; m];
        let mut theta = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                anti_diag_len[i + j] += 1;
                if mask[i + j] {
                    theta.push((i, j));
                }
            }
        }
        let nn = n1 * n2;
        let mut lift_src = Vec::with_capacity(2 * nn);
        for seg in 0..2 {
            for i in 0..n1 {
                for j in 0..n2 {
                    lift_src.push(seg * m + i + j);
                }
            }
        }
        let phi = (0..2 * nn)
            .filter(|&p| mask[lift_src[p] % m])
            .collect();
        Self {
            m,
            n1,
            n2,
            mask,
            theta,
            phi,
            anti_diag_len,
            lift_src,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Length of a Hankel vector, `2 n1 n2`.
    pub fn hankel_len(&self) -> usize {
        2 * self.n1 * self.n2
    }

    /// Length of the observed-entry vector, `2 |Θ|`.
    pub fn observed_len(&self) -> usize {
        self.phi.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Observed Hankel entries `(i, j)`, 0-based, row-major order.
    pub fn theta(&self) -> &[(usize, usize)] {
        &self.theta
    }

    pub fn phi(&self) -> &[usize] {
        &self.phi
    }

    pub fn anti_diag_len(&self) -> &[usize] {
        &self.anti_diag_len
    }

    /// Stacked-signal row that each Hankel-vector row copies.
    pub fn lift_src(&self) -> &[usize] {
        &self.lift_src
    }

    /// 0/1 mask over a stacked signal of length `2m`.
    pub fn stacked_mask(&self) -> Vec<f64> {
        self.mask
            .iter()
            .chain(self.mask.iter())
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Same as [`HankelIndexMap::new`].
pub fn build_index_map(config: &ArrayConfig) -> HankelIndexMap {
    HankelIndexMap::new(config)
}

/// `H(x)[i][j] = x[i + j]`.
pub fn lift(x: &[Complex64], map: &HankelIndexMap) -> Result<CMatrix> {
    check_len(map.m, x.len())?;
    Ok(Array2::from_shape_fn((map.n1, map.n2), |(i, j)| x[i + j]))
}

/// Anti-diagonal averaging; a left inverse of [`lift`] and its
/// Moore–Penrose pseudo-inverse.
pub fn inverse(x: &CMatrix, map: &HankelIndexMap) -> Result<Vec<Complex64>> {
    if x.dim() != (map.n1, map.n2) {
        return Err(Error::Shape {
            expected: map.n1 * map.n2,
            got: x.len(),
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); map.m];
    for ((i, j), v) in x.indexed_iter() {
        out[i + j] += v;
    }
    for (o, &len) in out.iter_mut().zip(&map.anti_diag_len) {
        *o /= len as f64;
    }
    Ok(out)
}

pub fn complex_to_stacked(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|v| v.re).chain(x.iter().map(|v| v.im)).collect()
}

pub fn stacked_to_complex(v: &[f64]) -> Result<Vec<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::Shape {
            expected: v.len() + 1,
            got: v.len(),
        });
    }
    let m = v.len() / 2;
    Ok((0..m).map(|k| Complex64::new(v[k], v[m + k])).collect())
}

/// Flattened, real/imag-stacked Hankel matrix (length `2 n1 n2`).
#[derive(Clone, Debug, PartialEq)]
pub struct HankelVector(pub Vec<f64>);

/// Lift of a stacked signal: each segment lifted and flattened row-major.
pub fn stacked_lift(x: &[f64], map: &HankelIndexMap) -> Result<HankelVector> {
    check_len(2 * map.m, x.len())?;
    Ok(HankelVector(map.lift_src.iter().map(|&s| x[s]).collect()))
}

/// Segment-wise anti-diagonal averaging back to a stacked signal.
pub fn stacked_inverse(v: &HankelVector, map: &HankelIndexMap) -> Result<Vec<f64>> {
    check_len(map.hankel_len(), v.0.len())?;
    let mut out = vec![0.0; 2 * map.m];
    for (&s, &val) in map.lift_src.iter().zip(&v.0) {
        out[s] += val;
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o /= map.anti_diag_len[k % map.m] as f64;
    }
    Ok(out)
}

/// Gathers the entries of `v` at the positions `phi`.
pub fn extract_observed(v: &HankelVector, map: &HankelIndexMap) -> Result<Vec<f64>> {
    check_len(map.hankel_len(), v.0.len())?;
    Ok(map.phi.iter().map(|&p| v.0[p]).collect())
}

/// Scatters `u` into a zero Hankel vector at the positions `phi`.
pub fn embed_observed(u: &[f64], map: &HankelIndexMap) -> Result<HankelVector> {
    check_len(map.phi.len(), u.len())?;
    let mut out = vec![0.0; map.hankel_len()];
    for (&p, &val) in map.phi.iter().zip(u) {
        out[p] = val;
    }
    Ok(HankelVector(out))
}

// Batched forms. Rows index features, columns index samples.

pub fn lift_batch(x: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    debug_assert_eq!(x.nrows(), 2 * map.m);
    x.select(ndarray::Axis(0), &map.lift_src)
}

/// Adjoint of [`lift_batch`]: sums each anti-diagonal.
pub fn lift_adjoint_batch(v: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    let mut out = Array2::zeros((2 * map.m, v.ncols()));
    for (row, &s) in v.rows().into_iter().zip(&map.lift_src) {
        let mut dst = out.row_mut(s);
        dst += &row;
    }
    out
}

pub fn inverse_batch(v: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    let mut out = lift_adjoint_batch(v, map);
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        row /= map.anti_diag_len[k % map.m] as f64;
    }
    out
}

/// Adjoint of [`inverse_batch`]: `g[t] / len[t]` copied onto anti-diagonal `t`.
pub fn inverse_adjoint_batch(g: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    let mut scaled = g.to_owned();
    for (k, mut row) in scaled.rows_mut().into_iter().enumerate() {
        row /= map.anti_diag_len[k % map.m] as f64;
    }
    lift_batch(scaled.view(), map)
}

pub fn extract_batch(v: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    v.select(ndarray::Axis(0), &map.phi)
}

pub fn embed_batch(u: ArrayView2<f64>, map: &HankelIndexMap) -> Array2<f64> {
    let mut out = Array2::zeros((map.hankel_len(), u.ncols()));
    for (row, &p) in u.rows().into_iter().zip(&map.phi) {
        out.row_mut(p).assign(&row);
    }
    out
}
