//! Row-major band storage, partial-pivoting LU and banded Cholesky.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandedError {
    #[error("singular matrix: pivot {pivot:e} at column {column} is below 1e-14 of its row scale {scale:e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        scale: f64,
    },
    #[error("matrix is not positive definite (failed at row {row})")]
    NotPositiveDefinite { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

const PIVOT_RTOL: f64 = 1e-14;

/// Square band matrix. Row `i` stores columns `i - kl ..= i + ku`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.offset(i, j);
        self.data[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.offset(i, j);
        self.data[k] += value;
    }

    /// Column range stored for row `i`.
    fn row_cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_cols(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in self.row_cols(i) {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_cols(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn from_dense(rows: &[Vec<f64>], kl: usize, ku: usize) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n, kl, ku);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m.set(i, j, v);
                }
            }
        }
        m
    }

    /// LU factorization with partial pivoting. The upper factor carries
    /// bandwidth `kl + ku` to absorb row interchanges.
    pub fn lu(&self) -> Result<BandedLu, BandedError> {
        let n = self.n;
        let kl = self.kl;
        let kuu = self.ku + self.kl;
        let w = kl + kuu + 1;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let mut f = vec![0.0; n * w];
        let mut scale = vec![0.0_f64; n];
        for i in 0..n {
            for j in self.row_cols(i) {
                let v = self.get(i, j);
                f[idx(i, j)] = v;
                scale[i] = scale[i].max(v.abs());
            }
        }
        let mut piv = vec![0usize; n];
        let mut sign = 1.0_f64;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = f[idx(k, k)].abs();
            for i in k + 1..=last {
                let v = f[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let col_end = (k + kuu).min(n - 1);
            if p != k {
                sign = -sign;
                for j in k..=col_end {
                    f.swap(idx(k, j), idx(p, j));
                }
                scale.swap(k, p);
            }
            let pivot = f[idx(k, k)];
            if pivot.abs() <= PIVOT_RTOL * scale[k] || pivot == 0.0 {
                return Err(BandedError::SingularMatrix {
                    column: k,
                    pivot,
                    scale: scale[k],
                });
            }
            if pivot < 0.0 {
                sign = -sign;
            }
            for i in k + 1..=last {
                let l = f[idx(i, k)] / pivot;
                f[idx(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=col_end {
                        f[idx(i, j)] -= l * f[idx(k, j)];
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            kuu,
            f,
            piv,
            det_sign: sign as i8,
        })
    }

    /// Banded Cholesky for symmetric positive definite matrices (`kl == ku`).
    pub fn cholesky(&self) -> Result<BandedCholesky, BandedError> {
        let n = self.n;
        let k = self.kl.max(self.ku);
        let mut l = vec![vec![0.0; k + 1]; n];
        // l[i][d] holds L(i, i - d)
        for i in 0..n {
            for d in (0..=k.min(i)).rev() {
                let j = i - d;
                let mut s = self.get(i, j);
                for t in 1..=k {
                    if d + t > k || t > j {
                        break;
                    }
                    s -= l[i][d + t] * l[j][t];
                }
                if d == 0 {
                    if !(s > 0.0) {
                        return Err(BandedError::NotPositiveDefinite { row: i });
                    }
                    l[i][0] = s.sqrt();
                } else {
                    l[i][d] = s / l[j][0];
                }
            }
        }
        Ok(BandedCholesky { n, k, l })
    }
}

/// Factorization returned by [`BandedMatrix::lu`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    kuu: usize,
    f: Vec<f64>,
    piv: Vec<usize>,
    det_sign: i8,
}

impl BandedLu {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.f[i * (self.kl + self.kuu + 1) + (j + self.kl - i)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Sign of `det(A)`.
    pub fn det_sign(&self) -> i8 {
        self.det_sign
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, BandedError> {
        if rhs.len() != self.n {
            return Err(BandedError::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let n = self.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    x[i] -= self.at(i, k) * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + self.kuu).min(n - 1) {
                s -= self.at(k, j) * x[j];
            }
            x[k] = s / self.at(k, k);
        }
        Ok(x)
    }

    /// Magnitude of the smallest pivot of the upper factor.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n).map(|k| self.at(k, k).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Factor `L` of `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    k: usize,
    l: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for d in 1..=self.k.min(i) {
                s -= self.l[i][d] * y[i - d];
            }
            y[i] = s / self.l[i][0];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for d in 1..=self.k {
                let r = i + d;
                if r >= self.n {
                    break;
                }
                s -= self.l[r][d] * y[r];
            }
            y[i] = s / self.l[i][0];
        }
        y
    }
}

/// Solves `mat x = rhs` by banded LU.
pub fn solve_banded(mat: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>, BandedError> {
    mat.lu()?.solve(rhs)
}
