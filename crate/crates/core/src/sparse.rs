//! Symmetric sparse matrices and an envelope Cholesky solver.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Square matrix in compressed sparse row form with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee order of the first `count` unknowns (couplings to
/// later unknowns are ignored); unknowns `count..n` are appended unchanged.
/// Entry `p` of the result is the original index placed at position `p`.
pub fn rcm_ordering(a: &CsrMatrix, count: usize) -> Vec<usize> {
    let neighbors = |i: usize| a.row(i).map(|(j, _)| j).filter(move |&j| j < count && j != i);
    let degree: Vec<usize> = (0..count).map(|i| neighbors(i).count()).collect();
    let mut visited = vec![false; count];
    let mut order = Vec::with_capacity(a.n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (eccentricity, a node of minimum degree in the last level)
        let mut dist = vec![usize::MAX; count];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(i) = q.pop_front() {
            last = i;
            for j in neighbors(i) {
                if !visited[j] && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    q.push_back(j);
                }
            }
        }
        let ecc = dist[last];
        let far = (0..count)
            .filter(|&j| dist[j] == ecc)
            .min_by_key(|&j| (degree[j], j))
            .unwrap_or(last);
        (ecc, far)
    };

    while order.len() < count {
        let seed = (0..count).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        // pseudo-peripheral start
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let i = order[head];
            head += 1;
            let mut next: Vec<usize> = neighbors(i).filter(|&j| !visited[j]).collect();
            next.sort_unstable_by_key(|&j| (degree[j], j));
            next.dedup();
            for j in next {
                if !visited[j] {
                    visited[j] = true;
                    order.push(j);
                }
            }
        }
    }
    order.reverse();
    order.extend(count..a.n);
    order
}

/// Envelope (variable band) Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut inv_perm = vec![0; n];
        for (p, &i) in perm.iter().enumerate() {
            inv_perm[i] = p;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for p in 0..n {
            for (j, _) in a.row(perm[p]) {
                let q = inv_perm[j];
                if q < first[p] {
                    first[p] = q;
                }
            }
        }
        let mut start = vec![0; n + 1];
        for p in 0..n {
            start[p + 1] = start[p] + (p - first[p] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for p in 0..n {
            for (j, v) in a.row(perm[p]) {
                let q = inv_perm[j];
                if q <= p {
                    values[start[p] + q - first[p]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let len = j - k0;
                let ri = &values[si + k0 - fi..si + k0 - fi + len];
                let rj = &values[sj + k0 - fj..sj + k0 - fj + len];
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let djj = values[sj + j - fj];
                let idx = si + j - fi;
                values[idx] = (values[idx] - dot) / djj;
            }
            let row = &values[si..si + i - fi];
            let sq: f64 = row.iter().map(|x| x * x).sum();
            let d = values[si + i - fi] - sq;
            if !(d > 0.0) {
                return Err(Error::Factorization { pivot: perm[i], value: d });
            }
            values[si + i - fi] = d.sqrt();
        }
        Ok(Self { n, perm, inv_perm, first, start, values })
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|p| b[self.perm[p]]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.values[si..si + i - fi];
            let dot: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.values[si + i - fi];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            y[i] /= self.values[si + i - fi];
            let yi = y[i];
            for (k, &l) in self.values[si..si + i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        (0..n).map(|i| y[self.inv_perm[i]]).collect()
    }
}

/// Factored symmetric positive definite system with iterative refinement.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    pub matrix: CsrMatrix,
    chol: SkylineCholesky,
    norm: f64,
}

/// Normwise backward-error target of [`SpdSolver::solve`].
pub const SOLVE_TOLERANCE: f64 = 1e-10;

impl SpdSolver {
    /// Factors `matrix`, reordering its first `ordered` unknowns.
    pub fn new(matrix: CsrMatrix, ordered: usize) -> Result<Self> {
        let perm = rcm_ordering(&matrix, ordered);
        let chol = SkylineCholesky::factor(&matrix, perm)?;
        let norm = matrix.inf_norm();
        Ok(Self { matrix, chol, norm })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    /// Solves `A x = b` and refines until the residual is below
    /// [`SOLVE_TOLERANCE`] relative to `‖A‖‖x‖ + ‖b‖`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bn = inf(b);
        if bn == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.chol.solve(b);
        let mut rel = f64::INFINITY;
        for _ in 0..6 {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = inf(&r) / (self.norm * inf(&x) + bn);
            if rel <= SOLVE_TOLERANCE * 1e-2 {
                return Ok(x);
            }
            let d = self.chol.solve(&r);
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += di;
            }
        }
        if rel <= SOLVE_TOLERANCE {
            Ok(x)
        } else {
            Err(Error::SolveAccuracy(rel))
        }
    }
}

pub(crate) fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
