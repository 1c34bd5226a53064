//! Smallest-magnitude eigenvalues of nonsymmetric banded Jacobians.
//!
//! Shift-invert subspace iteration on the LU factors followed by a
//! Rayleigh–Ritz projection; the projected problem is small and dense.

use nalgebra::{Complex, DMatrix, Schur};
use thiserror::Error;

use crate::banded::{BandedError, BandedLu, BandedMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error(transparent)]
    Linear(#[from] BandedError),
    #[error("projected eigenproblem did not converge")]
    ProjectionFailure,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Sorted by modulus, ascending.
    pub values: Vec<Complex<f64>>,
    /// Orthonormal basis of the iterated subspace; reusable as a warm start.
    pub basis: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize(vs: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut seed = 0x9e37_79b9_7f4a_7c15_u64;
    for v in vs.drain(..) {
        let mut v = v;
        for _pass in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let mut nrm = dot(&v, &v).sqrt();
        if !(nrm > 1e-300) || !nrm.is_finite() {
            // replace a collapsed column by a fresh deterministic vector
            v = pseudo_random_vector(v.len(), &mut seed);
            for q in &out {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            nrm = dot(&v, &v).sqrt();
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        out.push(v);
    }
    *vs = out;
}

fn pseudo_random_vector(n: usize, state: &mut u64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // xorshift64*
            *state ^= *state >> 12;
            *state ^= *state << 25;
            *state ^= *state >> 27;
            let r = state.wrapping_mul(0x2545_f491_4f6c_dd1d);
            (r >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn ritz_values(mat: &BandedMatrix, basis: &[Vec<f64>]) -> Result<Vec<Complex<f64>>, SpectrumError> {
    let p = basis.len();
    let images: Vec<Vec<f64>> = basis.iter().map(|q| mat.matvec(q)).collect();
    let h = DMatrix::from_fn(p, p, |i, j| dot(&basis[i], &images[j]));
    let schur = Schur::try_new(h, 1e-14, 10_000).ok_or(SpectrumError::ProjectionFailure)?;
    let mut vals: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(vals)
}

/// The `k` eigenvalues of `mat` closest to zero. `lu` must factor `mat`.
pub fn smallest_magnitude_eigenvalues(
    mat: &BandedMatrix,
    lu: &BandedLu,
    k: usize,
    warm: Option<&[Vec<f64>]>,
) -> Result<Spectrum, SpectrumError> {
    let n = mat.dim();
    let k = k.min(n);
    let p = (k + 4).min(n);
    let mut seed = 0x2545_f491_4f6c_dd1d_u64 ^ n as u64;
    let mut basis: Vec<Vec<f64>> = match warm {
        Some(w) if w.len() == p && w.iter().all(|v| v.len() == n) => w.to_vec(),
        _ => (0..p).map(|_| pseudo_random_vector(n, &mut seed)).collect(),
    };
    orthonormalize(&mut basis);
    let mut prev: Vec<Complex<f64>> = Vec::new();
    let mut values = Vec::new();
    for iter in 0..400 {
        let mut next = Vec::with_capacity(p);
        for q in &basis {
            next.push(lu.solve(q)?);
        }
        basis = next;
        orthonormalize(&mut basis);
        if iter < 2 && warm.is_none() {
            continue;
        }
        values = ritz_values(mat, &basis)?;
        values.truncate(k);
        if prev.len() == values.len() {
            let scale = values.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
            let change = values
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).norm() / a.norm().max(1e-3 * scale))
                .fold(0.0, f64::max);
            if change < 1e-10 {
                break;
            }
        }
        prev = values.clone();
    }
    Ok(Spectrum { values, basis })
}

/// Approximate null vector of a nearly singular matrix by inverse iteration,
/// normalized to unit Euclidean length.
pub fn near_null_vector(lu: &BandedLu, start: Option<&[f64]>) -> Result<Vec<f64>, BandedError> {
    let n = lu.dim();
    let mut seed = 0x5851_f42d_4c95_7f2d_u64;
    let mut x = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => pseudo_random_vector(n, &mut seed),
    };
    for _ in 0..6 {
        x = lu.solve(&x)?;
        let nrm = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(x)
}
