//! Dense Gaussian elimination over a [`Scalar`].

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Pivot choice: exact scalars take the first nonzero entry (bit growth is
/// not helped by magnitude), inexact ones the largest.
fn pivot_row<S: Scalar>(m: &[Vec<S>], col: usize, from: usize) -> Option<usize> {
    if S::is_exact() {
        (from..m.len()).find(|&r| !m[r][col].is_zero())
    } else {
        (from..m.len())
            .filter(|&r| !m[r][col].approx_zero())
            .max_by(|&a, &b| m[a][col].magnitude().total_cmp(&m[b][col].magnitude()))
    }
}

/// Solves `a · x = b` for square, nonsingular `a`.
pub fn solve<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid(format!("system is not square ({n} rows)")));
    }
    for col in 0..n {
        let p = pivot_row(&a, col, col).ok_or(Error::SingularMatrix)?;
        a.swap(col, p);
        b.swap(col, p);
        let inv = S::one() / a[col][col].clone();
        for v in &mut a[col][col..] {
            *v = v.clone() * inv.clone();
        }
        b[col] = b[col].clone() * inv;
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (i, row) in rest.iter_mut().enumerate() {
            let f = row[col].clone();
            if f.is_zero() {
                continue;
            }
            for j in col..n {
                row[j] = row[j].clone() - f.clone() * pivot[j].clone();
            }
            b[col + 1 + i] = b[col + 1 + i].clone() - f * b[col].clone();
        }
    }
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut v = b[i].clone();
        for j in i + 1..n {
            v = v - a[i][j].clone() * x[j].clone();
        }
        x[i] = v;
    }
    Ok(x)
}

pub fn determinant<S: Scalar>(mut a: Vec<Vec<S>>) -> S {
    let n = a.len();
    let mut det = S::one();
    for col in 0..n {
        let Some(p) = pivot_row(&a, col, col) else { return S::zero() };
        if p != col {
            a.swap(col, p);
            det = -det;
        }
        let piv = a[col][col].clone();
        det = det * piv.clone();
        for i in col + 1..n {
            let f = a[i][col].clone() / piv.clone();
            if f.is_zero() {
                continue;
            }
            let (top, rest) = a.split_at_mut(i);
            for (v, p) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use crate::Rational;
    use num_traits::Zero;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        ratio(n, 1)
    }

    #[test]
    fn small_system() {
        let a = vec![vec![r(2), r(1)], vec![r(1), r(3)]];
        let x = solve(a.clone(), vec![r(3), r(5)]).unwrap();
        assert_eq!(x, vec![ratio(4, 5), ratio(7, 5)]);
        assert_eq!(determinant(a), r(5));
    }

    #[test]
    fn singular() {
        let a = vec![vec![r(1), r(2)], vec![r(2), r(4)]];
        assert!(matches!(solve(a.clone(), vec![r(1), r(1)]), Err(Error::SingularMatrix)));
        assert_eq!(determinant(a), r(0));
    }

    proptest! {
        #[test]
        fn solution_satisfies_system(entries in proptest::collection::vec(-9i64..10, 9), rhs in proptest::collection::vec(-9i64..10, 3)) {
            let a: Vec<Vec<Rational>> = entries.chunks(3).map(|c| c.iter().map(|&v| r(v)).collect()).collect();
            let b: Vec<Rational> = rhs.iter().map(|&v| r(v)).collect();
            match solve(a.clone(), b.clone()) {
                Ok(x) => {
                    for (row, bi) in a.iter().zip(&b) {
                        let lhs: Rational = row.iter().zip(&x).map(|(p, q)| p * q).sum();
                        prop_assert_eq!(&lhs, bi);
                    }
                    prop_assert!(!determinant(a).is_zero());
                }
                Err(_) => prop_assert!(determinant(a).is_zero()),
            }
        }
    }
}
