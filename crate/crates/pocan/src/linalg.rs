//! Dense linear solvers: exact rational Gaussian elimination for the
//! qualitative and certified paths, `f64` LU with one step of iterative
//! refinement for the fast paths. Systems here are small (at most a few
//! hundred unknowns), so dense elimination is the right tool.

use crate::numeric::Rat;
use num_traits::{One, Signed, Zero};

/// Exact solution of `a x = b`; `None` if `a` is singular.
pub fn solve_exact(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    assert!(a.iter().all(|row| row.len() == n) && b.len() == n);
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        // Pivot on the largest entry to keep intermediate fractions tame.
        let pivot = (col..n).filter(|&r| !m[r][col].is_zero()).max_by(|&x, &y| {
            m[x][col].abs().cmp(&m[y][col].abs())
        })?;
        m.swap(col, pivot);
        let inv = m[col][col].clone().recip();
        for c in col..=n {
            m[col][c] = &m[col][c] * &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let sub = &f * &m[col][c];
                    m[r][c] = &m[r][c] - sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Rank of a rational matrix (not necessarily square).
pub fn rank_exact(a: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = m[rank][col].clone().recip();
        for c in col..cols {
            m[rank][c] = &m[rank][c] * &inv;
        }
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..cols {
                    let sub = &f * &m[rank][c];
                    m[r][c] = &m[r][c] - sub;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Identity matrix of rationals.
pub fn identity(n: usize) -> Vec<Vec<Rat>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect())
        .collect()
}

/// LU factorization with partial pivoting. Returns `None` for a matrix that
/// is singular to working precision.
pub struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &[Vec<f64>]) -> Option<Lu> {
        let n = a.len();
        let mut lu: Vec<Vec<f64>> = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot, mag) = (col..n)
                .map(|r| (r, lu[r][col].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))?;
            if mag < 1e-300 {
                return None;
            }
            lu.swap(col, pivot);
            perm.swap(col, pivot);
            for r in col + 1..n {
                let f = lu[r][col] / lu[col][col];
                lu[r][col] = f;
                for c in col + 1..n {
                    lu[r][c] -= f * lu[col][c];
                }
            }
        }
        Some(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                x[r] -= self.lu[r][c] * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] -= self.lu[r][c] * x[c];
            }
            x[r] /= self.lu[r][r];
        }
        x
    }
}

/// Solve `a x = b` in `f64` with one step of iterative refinement.
pub fn solve_f64(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b);
    // One refinement pass mops up most of the elimination rounding.
    let mut residual = vec![0.0; b.len()];
    for (r, res) in residual.iter_mut().enumerate() {
        let mut acc = b[r];
        for (c, xc) in x.iter().enumerate() {
            acc -= a[r][c] * xc;
        }
        *res = acc;
    }
    let correction = lu.solve(&residual);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;

    #[test]
    fn exact_solver_solves_and_detects_singularity() {
        let a = vec![vec![rat(2, 1), rat(1, 1)], vec![rat(1, 1), rat(3, 1)]];
        let b = vec![rat(5, 1), rat(10, 1)];
        let x = solve_exact(&a, &b).unwrap();
        assert_eq!(x, vec![rat(1, 1), rat(3, 1)]);

        let sing = vec![vec![rat(1, 1), rat(2, 1)], vec![rat(2, 1), rat(4, 1)]];
        assert!(solve_exact(&sing, &b).is_none());
        assert_eq!(rank_exact(&sing), 1);
    }

    #[test]
    fn f64_solver_matches_exact() {
        let a = vec![
            vec![4.0, -2.0, 1.0],
            vec![-2.0, 4.0, -2.0],
            vec![1.0, -2.0, 4.0],
        ];
        let b = vec![11.0, -16.0, 17.0];
        let x = solve_f64(&a, &b).unwrap();
        let expect = [1.0, -2.0, 3.0];
        for (got, want) in x.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(Lu::factor(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }
}
