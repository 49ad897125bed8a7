//! Compressed sparse row storage and unpreconditioned conjugate gradients.

use super::AgfemError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a symmetric matrix from upper-triangle triplets `(i, j, v)` with
    /// `i <= j`. Duplicates are summed in input order.
    pub fn from_upper_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut upper: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len() / 2);
        for (i, j, v) in triplets {
            debug_assert!(i <= j);
            match upper.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => upper.push((i, j, v)),
            }
        }
        let mut counts = vec![0usize; n];
        for &(i, j, _) in &upper {
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let nnz = row_ptr[n];
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        let mut next = row_ptr[..n].to_vec();
        // Lower entries of row j arrive in increasing i before its upper entries.
        for &(i, j, v) in &upper {
            if i != j {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        for &(i, j, v) in &upper {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let triplets = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| a[i][j] != 0.0)
            .map(|(i, j)| (i, j, a[i][j]))
            .collect();
        Self::from_upper_triplets(n, triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_upper_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    /// `max |A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Converged,
    MaxIterations,
    /// `p . A p <= 0` was met.
    Indefinite,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub status: CgStatus,
}

impl CgOutcome {
    pub fn converged(&self) -> bool {
        self.status == CgStatus::Converged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unpreconditioned CG from a zero initial guess, stopping at
/// `|r| / |b| <= tol`.
pub fn cg_solve(matrix: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome, AgfemError> {
    if !(tol > 0.0) {
        return Err(AgfemError::InvalidTolerance(tol));
    }
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(AgfemError::DimensionMismatch {
            matrix: n,
            rhs: rhs.len(),
        });
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            status: CgStatus::Converged,
        });
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let mut status = CgStatus::MaxIterations;
    while iterations < max_iter {
        matrix.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            status = CgStatus::Indefinite;
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            rr = rr_new;
            status = CgStatus::Converged;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Ok(CgOutcome {
        solution: x,
        iterations,
        relative_residual: rr.sqrt() / b_norm,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gaussian elimination with partial pivoting.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let out = cg_solve(&CsrMatrix::identity(6), &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0], 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged());
        assert_eq!(out.solution, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]);
    }

    #[test]
    fn zero_rhs() {
        let out = cg_solve(&CsrMatrix::identity(3), &[0.0; 3], 1e-8, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.solution, vec![0.0; 3]);
    }

    #[test]
    fn spd_system_matches_direct_solve() {
        let a = vec![
            vec![4.0, 1.0, 0.0, 0.5, 0.0],
            vec![1.0, 5.0, 1.0, 0.0, 0.2],
            vec![0.0, 1.0, 3.0, 1.0, 0.0],
            vec![0.5, 0.0, 1.0, 6.0, 1.5],
            vec![0.0, 0.2, 0.0, 1.5, 2.5],
        ];
        let b = vec![1.0, -2.0, 0.5, 3.0, 1.0];
        let direct = gauss_solve(a.clone(), b.clone());
        let out = cg_solve(&CsrMatrix::from_dense(&a), &b, 1e-14, 100).unwrap();
        assert!(out.converged());
        for (x, y) in out.solution.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn flags_indefinite_and_max_iterations() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let out = cg_solve(&a, &[0.0, 1.0], 1e-10, 10).unwrap();
        assert_eq!(out.status, CgStatus::Indefinite);
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let out = cg_solve(&a, &[1.0, 0.0], 1e-10, 1).unwrap();
        assert_eq!(out.status, CgStatus::MaxIterations);
        assert!(cg_solve(&a, &[1.0, 0.0], 0.0, 1).is_err());
        assert!(cg_solve(&a, &[1.0], 1e-8, 1).is_err());
    }

    #[test]
    fn csr_layout_is_row_sorted_and_symmetric() {
        let m = CsrMatrix::from_upper_triplets(
            3,
            vec![(0, 2, 1.0), (0, 0, 2.0), (1, 2, -1.0), (0, 2, 0.5), (2, 2, 1.0)],
        );
        for i in 0..3 {
            let cols: Vec<usize> = m.row(i).map(|(j, _)| j).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(m.get(2, 0), 1.5);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.max_asymmetry(), 0.0);
    }
}
