//! Counting satisfying assignments of a bipartite positive 2-CNF with an
//! oracle for `Pr(Q)`, where
//! `Q = (R(x) | !S(x,y) | T(y)) & (!R(x) | S(x,y) | !T(y))`.
//!
//! For `Φ = ∧_{(i,j)∈E} (X_i ∨ Y_j)` over `X_1..X_n, Y_1..Y_n` the gadget
//! database sets `Pr(R(i)) = x`, `Pr(T(j)) = y` and `Pr(S(i,j))` to `a` on
//! edges and `b` elsewhere. Grouping assignments `θ` by `k = |R|`, `l = |T|`,
//! `p` (edges with both ends true) and `q` (edges with both ends false):
//!
//! ```text
//! Pr(Q) = (1-b)^(n²) (1-x)^n (1-y)^n Σ N(k,l,p,q) A^p B^q X^k Y^l C^(kl)
//! A = a/b   B = (1-a)/(1-b)   X = x/((1-x)(1-b)^n)   Y = y/((1-y)(1-b)^n)
//! C = b(1-b)
//! ```
//!
//! Evaluating the oracle on `(n+1)²(m+1)²` parameter points gives a square
//! linear system in the counts `N`; `#Φ = Σ_{k,l,p} N(k,l,p,0)`.
//!
//! Points are built on a product grid of `(A, B, X, Y)` values and mapped
//! back: `b = (1-B)/(A-B)`, `a = A·b`, `x = X(1-b)^n / (1 + X(1-b)^n)`, and
//! likewise `y`. With `A > 1` and `0 < B < 1` all four land in `(0,1)`. In
//! terms of `A` and `B`, `C = (A-1)(1-B)/(A-B)²`.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::fol::CnfQuery;
use crate::ground::pr_oracle;
use crate::io::parse_query;
use crate::linalg::{determinant, solve};
use crate::pdb::Pdb;
use crate::scalar::{ratio, Scalar};
use crate::{Error, Rational, Result};

pub const REDUCTION_QUERY: &str = "(R(x) | !S(x,y) | T(y)) & (!R(x) | S(x,y) | !T(y))";
/// Grid constructions tried before giving up.
pub const GRID_ATTEMPTS: usize = 8;

pub fn reduction_query() -> CnfQuery {
    parse_query(REDUCTION_QUERY).expect("reduction query parses")
}

/// `∧_{(i,j)∈E} (X_i ∨ Y_j)`, edges 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pp2Cnf {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Pp2Cnf {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Pp2Cnf> {
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        if edges.is_empty() {
            return Err(Error::Invalid("formula needs at least one edge".into()));
        }
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i == 0 || j == 0 || i > n || j > n) {
            return Err(Error::Invalid(format!("edge {i}-{j} outside 1..={n}")));
        }
        Ok(Pp2Cnf { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Satisfying assignments by enumeration of all `2^(2n)`.
    pub fn brute_force_count(&self) -> u64 {
        let n = self.n;
        let mut count = 0;
        for xs in 0u64..(1 << n) {
            for ys in 0u64..(1 << n) {
                if self.edges.iter().all(|&(i, j)| xs >> (i - 1) & 1 == 1 || ys >> (j - 1) & 1 == 1) {
                    count += 1;
                }
            }
        }
        count
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetParams {
    pub x: Rational,
    pub y: Rational,
    pub a: Rational,
    pub b: Rational,
}

/// Transformed coordinates of a parameter point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coords {
    pub a: Rational,
    pub b: Rational,
    pub x: Rational,
    pub y: Rational,
    pub c: Rational,
}

impl GadgetParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: &Rational| v.is_positive() && *v < Rational::one();
        for (name, v) in [("x", &self.x), ("y", &self.y), ("a", &self.a), ("b", &self.b)] {
            if !unit(v) {
                return Err(Error::ProbabilityOutOfRange { what: name.into(), value: v.to_string() });
            }
        }
        if self.a == self.b {
            return Err(Error::Invalid("a = b makes the parameter map singular".into()));
        }
        Ok(())
    }

    pub fn coords(&self, n: usize) -> Coords {
        let nb = self.b.complement();
        let nbn = nb.ipow(n as u64);
        Coords {
            a: &self.a / &self.b,
            b: self.a.complement() / &nb,
            x: &self.x / (self.x.complement() * &nbn),
            y: &self.y / (self.y.complement() * &nbn),
            c: &self.b * &nb,
        }
    }

    /// Inverse of [`GadgetParams::coords`] on the free coordinates.
    pub fn from_coords(big_a: &Rational, big_b: &Rational, big_x: &Rational, big_y: &Rational, n: usize) -> GadgetParams {
        let b = (Rational::one() - big_b) / (big_a - big_b);
        let a = big_a * &b;
        let nbn = b.complement().ipow(n as u64);
        let lift = |v: &Rational| {
            let t = v * &nbn;
            &t / (Rational::one() + &t)
        };
        GadgetParams { x: lift(big_x), y: lift(big_y), a, b }
    }

    /// Jacobian of `(x, y, a, b) ↦ (A, B, X, Y)`, rows `A, B, X, Y`, columns
    /// `a, b, x, y`.
    pub fn jacobian(&self, n: usize) -> Vec<Vec<Rational>> {
        let (x, y, a, b) = (&self.x, &self.y, &self.a, &self.b);
        let nb = b.complement();
        let nbn = nb.ipow(n as u64);
        let nbn1 = nb.ipow(n as u64 + 1);
        let nn = ratio(n as i64, 1);
        let z = Rational::zero();
        vec![
            vec![Rational::one() / b, -(a / (b * b)), z.clone(), z.clone()],
            vec![-(Rational::one() / &nb), a.complement() / (&nb * &nb), z.clone(), z.clone()],
            vec![
                z.clone(),
                &nn * x / (x.complement() * &nbn1),
                Rational::one() / (x.complement().ipow(2) * &nbn),
                z.clone(),
            ],
            vec![z.clone(), &nn * y / (y.complement() * &nbn1), z, Rational::one() / (y.complement().ipow(2) * &nbn)],
        ]
    }

    /// `(b-a) / ((1-y)²(1-x)² b² (1-b)^(2(n+1)))`.
    pub fn jacobian_det_formula(&self, n: usize) -> Rational {
        let den = self.y.complement().ipow(2)
            * self.x.complement().ipow(2)
            * self.b.ipow(2)
            * self.b.complement().ipow(2 * (n as u64 + 1));
        (&self.b - &self.a) / den
    }
}

pub fn build_gadget(phi: &Pp2Cnf, gp: &GadgetParams) -> Result<Pdb> {
    gp.validate()?;
    let n = phi.n;
    let mut db = Pdb::with_size(n);
    db.declare("R", 1)?;
    db.declare("T", 1)?;
    db.declare("S", 2)?;
    for i in 0..n as u32 {
        db.set_prob_idx("R", vec![i], gp.x.clone())?;
        db.set_prob_idx("T", vec![i], gp.y.clone())?;
        for j in 0..n as u32 {
            let on_edge = phi.edges.contains(&(i as usize + 1, j as usize + 1));
            db.set_prob_idx("S", vec![i, j], if on_edge { gp.a.clone() } else { gp.b.clone() })?;
        }
    }
    Ok(db)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub params: GadgetParams,
    pub coords: Coords,
}

/// A product grid of `(m+1)` values of `A` and of `B` and `(n+1)` values of
/// `X` and of `Y`, shifted by `attempt`.
pub fn grid_attempt(n: usize, m: usize, attempt: usize) -> Vec<GridPoint> {
    let t = attempt as i64;
    let big_a: Vec<Rational> = (0..=m as i64).map(|u| ratio(2 + u + t, 1)).collect();
    let big_b: Vec<Rational> = (0..=m as i64).map(|v| ratio(1, v + 2 + t)).collect();
    let big_x: Vec<Rational> = (0..=n as i64).map(|w| ratio(w + 1 + t, 1)).collect();
    let big_y: Vec<Rational> = (0..=n as i64).map(|z| ratio(2 * z + 1 + t, 2)).collect();
    product_grid(&big_a, &big_b, &big_x, &big_y, n)
}

/// Every combination of the given coordinate values, mapped to parameters.
pub fn product_grid(big_a: &[Rational], big_b: &[Rational], big_x: &[Rational], big_y: &[Rational], n: usize) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(big_a.len() * big_b.len() * big_x.len() * big_y.len());
    for a in big_a {
        for b in big_b {
            for x in big_x {
                for y in big_y {
                    let params = GadgetParams::from_coords(a, b, x, y, n);
                    let coords = params.coords(n);
                    out.push(GridPoint { params, coords });
                }
            }
        }
    }
    out
}

/// Checks every point is a valid parameter setting, `C ≠ 0`, a nonzero
/// Jacobian, and that the grid has `m+1` distinct `A` and `B` values and
/// `n+1` distinct `X` and `Y` values.
pub fn validate_grid(points: &[GridPoint], n: usize, m: usize) -> Result<()> {
    if points.len() != (n + 1).pow(2) * (m + 1).pow(2) {
        return Err(Error::Invalid(format!("grid has {} points", points.len())));
    }
    for p in points {
        p.params.validate()?;
        if p.coords.c.is_zero() || p.params.jacobian_det_formula(n).is_zero() {
            return Err(Error::Invalid("degenerate grid point".into()));
        }
    }
    let tuples: BTreeSet<_> = points.iter().map(|p| (&p.coords.a, &p.coords.b, &p.coords.x, &p.coords.y)).collect();
    if tuples.len() != points.len() {
        return Err(Error::Invalid("grid repeats a point".into()));
    }
    let distinct = |f: fn(&Coords) -> &Rational| points.iter().map(|p| f(&p.coords).clone()).collect::<BTreeSet<_>>().len();
    if distinct(|c| &c.a) != m + 1 || distinct(|c| &c.b) != m + 1 {
        return Err(Error::Invalid("A and B need m+1 distinct values each".into()));
    }
    if distinct(|c| &c.x) != n + 1 || distinct(|c| &c.y) != n + 1 {
        return Err(Error::Invalid("X and Y need n+1 distinct values each".into()));
    }
    Ok(())
}

pub fn choose_grid(n: usize, m: usize) -> Result<Vec<GridPoint>> {
    let points = grid_attempt(n, m, 0);
    validate_grid(&points, n, m)?;
    Ok(points)
}

/// Unknown order: `(k, l, p, q)` lexicographic over `0..=n`² × `0..=m`².
fn unknowns(n: usize, m: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for k in 0..=n {
        for l in 0..=n {
            for p in 0..=m {
                for q in 0..=m {
                    out.push((k, l, p, q));
                }
            }
        }
    }
    out
}

pub fn system_row(c: &Coords, n: usize, m: usize) -> Vec<Rational> {
    unknowns(n, m)
        .into_iter()
        .map(|(k, l, p, q)| {
            c.a.ipow(p as u64) * c.b.ipow(q as u64) * c.x.ipow(k as u64) * c.y.ipow(l as u64) * c.c.ipow((k * l) as u64)
        })
        .collect()
}

/// `(1-b)^(n²) (1-x)^n (1-y)^n`.
pub fn prefactor(gp: &GadgetParams, n: usize) -> Rational {
    gp.b.complement().ipow((n * n) as u64) * gp.x.complement().ipow(n as u64) * gp.y.complement().ipow(n as u64)
}

pub fn system_matrix(points: &[GridPoint], n: usize, m: usize) -> Vec<Vec<Rational>> {
    points.par_iter().map(|p| system_row(&p.coords, n, m)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountTable {
    pub n: usize,
    pub m: usize,
    pub counts: BTreeMap<(usize, usize, usize, usize), BigInt>,
    /// Grid attempt that produced a nonsingular system.
    pub attempt: usize,
}

impl CountTable {
    pub fn total(&self) -> BigInt {
        self.counts.values().sum()
    }

    /// `Σ_{k,l,p} N(k,l,p,0)`.
    pub fn sharp_phi(&self) -> BigInt {
        self.counts.iter().filter(|((_, _, _, q), _)| *q == 0).map(|(_, v)| v).sum()
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (&(usize, usize, usize, usize), &BigInt)> {
        self.counts.iter().filter(|(_, v)| !v.is_zero())
    }
}

pub type Oracle<'a> = dyn Fn(&CnfQuery, &Pdb) -> Result<Rational> + Sync + 'a;

/// How the assembled system is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolveMethod {
    /// Tensor Vandermonde solves in `(X, Y)` per `(A, B)` point, division by
    /// `C^(kl)`, then tensor Vandermonde solves in `(A, B)` per `(k, l)`.
    #[default]
    Staged,
    /// Elimination on the full `(n+1)²(m+1)²` system.
    Full,
}

/// Queries `oracle` on the gadget database at every grid point, solves for
/// `N` exactly and checks the result is a table of non-negative integers.
pub fn recover_counts(phi: &Pp2Cnf, oracle: &Oracle<'_>) -> Result<CountTable> {
    recover_counts_with(phi, oracle, SolveMethod::Staged)
}

pub fn recover_counts_with(phi: &Pp2Cnf, oracle: &Oracle<'_>, method: SolveMethod) -> Result<CountTable> {
    let (n, m) = (phi.n, phi.m());
    let q = reduction_query();
    for attempt in 0..GRID_ATTEMPTS {
        let points = grid_attempt(n, m, attempt);
        if validate_grid(&points, n, m).is_err() {
            continue;
        }
        let rhs: Vec<Rational> = points
            .par_iter()
            .map(|p| {
                let db = build_gadget(phi, &p.params)?;
                Ok(oracle(&q, &db)? / prefactor(&p.params, n))
            })
            .collect::<Result<_>>()?;
        let sol = match method {
            SolveMethod::Full => solve(system_matrix(&points, n, m), rhs),
            SolveMethod::Staged => solve_staged(&points, &rhs, n, m),
        };
        let sol = match sol {
            Ok(s) => s,
            Err(Error::SingularMatrix) => continue,
            Err(e) => return Err(e),
        };
        let mut counts = BTreeMap::new();
        for (key, v) in unknowns(n, m).into_iter().zip(sol) {
            if !v.is_integer() || v.is_negative() {
                return Err(Error::NonIntegralSolution(format!("N{key:?} = {v}")));
            }
            counts.insert(key, v.to_integer());
        }
        return Ok(CountTable { n, m, counts, attempt });
    }
    Err(Error::GridExhausted(GRID_ATTEMPTS))
}

/// Coefficients `c[k][l]` of `Σ c[k][l] s^k t^l` taking `values[i][j]` at
/// `(ss[i], ts[j])`.
fn tensor_vandermonde(ss: &[Rational], ts: &[Rational], values: Vec<Vec<Rational>>) -> Result<Vec<Vec<Rational>>> {
    let vander = |pts: &[Rational]| -> Vec<Vec<Rational>> {
        pts.iter().map(|t| (0..pts.len()).map(|d| t.ipow(d as u64)).collect()).collect()
    };
    let (vs, vt) = (vander(ss), vander(ts));
    let partial: Vec<Vec<Rational>> = values.into_iter().map(|row| solve(vt.clone(), row)).collect::<Result<_>>()?;
    let mut out = vec![vec![Rational::zero(); ts.len()]; ss.len()];
    for l in 0..ts.len() {
        let col = solve(vs.clone(), partial.iter().map(|r| r[l].clone()).collect())?;
        for (k, v) in col.into_iter().enumerate() {
            out[k][l] = v;
        }
    }
    Ok(out)
}

/// Staged solve for a grid laid out as [`product_grid`] produces it. The
/// result is in the same unknown order as [`system_row`].
#[allow(clippy::needless_range_loop)]
fn solve_staged(points: &[GridPoint], rhs: &[Rational], n: usize, m: usize) -> Result<Vec<Rational>> {
    let (d_ab, d_xy) = (m + 1, n + 1);
    let at = |ia: usize, ib: usize, ix: usize, iy: usize| ((ia * d_ab + ib) * d_xy + ix) * d_xy + iy;
    let axis_a: Vec<Rational> = (0..d_ab).map(|i| points[at(i, 0, 0, 0)].coords.a.clone()).collect();
    let axis_b: Vec<Rational> = (0..d_ab).map(|i| points[at(0, i, 0, 0)].coords.b.clone()).collect();
    let axis_x: Vec<Rational> = (0..d_xy).map(|i| points[at(0, 0, i, 0)].coords.x.clone()).collect();
    let axis_y: Vec<Rational> = (0..d_xy).map(|i| points[at(0, 0, 0, i)].coords.y.clone()).collect();
    for ia in 0..d_ab {
        for ib in 0..d_ab {
            for ix in 0..d_xy {
                for iy in 0..d_xy {
                    let c = &points[at(ia, ib, ix, iy)].coords;
                    if c.a != axis_a[ia] || c.b != axis_b[ib] || c.x != axis_x[ix] || c.y != axis_y[iy] {
                        return Err(Error::Invalid("grid is not a product grid".into()));
                    }
                }
            }
        }
    }
    // inner[ia][ib][k][l] = Σ_{p,q} N(k,l,p,q) A^p B^q
    let inner: Vec<Vec<Vec<Vec<Rational>>>> = (0..d_ab)
        .into_par_iter()
        .map(|ia| {
            (0..d_ab)
                .map(|ib| {
                    let values = (0..d_xy).map(|ix| (0..d_xy).map(|iy| rhs[at(ia, ib, ix, iy)].clone()).collect()).collect();
                    let mut coef = tensor_vandermonde(&axis_x, &axis_y, values)?;
                    let c = &points[at(ia, ib, 0, 0)].coords.c;
                    for (k, row) in coef.iter_mut().enumerate() {
                        for (l, v) in row.iter_mut().enumerate() {
                            *v = &*v / c.ipow((k * l) as u64);
                        }
                    }
                    Ok(coef)
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(points.len());
    for k in 0..d_xy {
        for l in 0..d_xy {
            let values = (0..d_ab).map(|ia| (0..d_ab).map(|ib| inner[ia][ib][k][l].clone()).collect()).collect();
            let n_kl = tensor_vandermonde(&axis_a, &axis_b, values)?;
            out.extend(n_kl.into_iter().flatten());
        }
    }
    Ok(out)
}

/// `#Φ` through the reduction, with the ground oracle answering `Pr(Q)`.
pub fn count_pp2cnf(phi: &Pp2Cnf) -> Result<BigInt> {
    Ok(recover_counts(phi, &|q, db| pr_oracle(q, db))?.sharp_phi())
}

/// Exact determinant of the assembled system for the default grid.
pub fn grid_determinant(n: usize, m: usize) -> Result<Rational> {
    let points = choose_grid(n, m)?;
    Ok(determinant(system_matrix(&points, n, m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gadget_rows() {
        let phi = Pp2Cnf::new(2, [(1, 1)]).unwrap();
        let gp = GadgetParams { x: ratio(1, 2), y: ratio(1, 3), a: ratio(1, 4), b: ratio(1, 5) };
        let db = build_gadget(&phi, &gp).unwrap();
        assert_eq!(db.relation("R").unwrap().rows().count(), 2);
        assert_eq!(db.relation("T").unwrap().rows().count(), 2);
        assert_eq!(db.relation("S").unwrap().rows().count(), 4);
        assert_eq!(db.relation("S").unwrap().prob(&[0, 0]), &ratio(1, 4));
        assert_eq!(db.relation("S").unwrap().prob(&[1, 0]), &ratio(1, 5));
        assert!(Pp2Cnf::new(2, []).is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        for p in choose_grid(2, 2).unwrap() {
            let back = GadgetParams::from_coords(&p.coords.a, &p.coords.b, &p.coords.x, &p.coords.y, 2);
            assert_eq!(back, p.params);
            let c = &p.coords;
            let expected = (&c.a - Rational::one()) * c.b.complement() / (&c.a - &c.b).ipow(2);
            assert_eq!(c.c, expected);
        }
    }

    #[test]
    fn jacobian_formula_matches_matrix() {
        for p in choose_grid(1, 1).unwrap() {
            let det = determinant(p.params.jacobian(1));
            assert_eq!(det, p.params.jacobian_det_formula(1));
            assert!(!det.is_zero());
        }
    }

    #[test]
    fn duplicated_values_rejected() {
        let (two, half) = (ratio(2, 1), ratio(1, 2));
        let xs = [ratio(1, 1), ratio(2, 1)];
        let points = product_grid(&[two.clone(), two.clone()], &[half.clone(), ratio(1, 3)], &xs, &xs, 1);
        assert!(validate_grid(&points, 1, 1).is_err());
        let points = product_grid(&[two, ratio(3, 1)], &[half.clone(), ratio(1, 3)], &xs, &xs, 1);
        assert!(validate_grid(&points, 1, 1).is_ok());
        let mut points = points;
        points[1] = points[0].clone();
        assert!(validate_grid(&points, 1, 1).is_err());
    }

    #[test]
    fn smallest_system_is_nonsingular() {
        assert_eq!(choose_grid(1, 1).unwrap().len(), 16);
        assert!(!grid_determinant(1, 1).unwrap().is_zero());
    }

    #[test]
    fn single_edge() {
        let phi = Pp2Cnf::new(1, [(1, 1)]).unwrap();
        let table = recover_counts(&phi, &|q, db| pr_oracle(q, db)).unwrap();
        assert_eq!(table.total(), BigInt::from(4));
        assert_eq!(table.sharp_phi(), BigInt::from(3));
    }

    #[test]
    fn diagonal_edges() {
        let phi = Pp2Cnf::new(2, [(1, 1), (2, 2)]).unwrap();
        let table = recover_counts(&phi, &|q, db| pr_oracle(q, db)).unwrap();
        assert_eq!(table.total(), BigInt::from(16));
        assert_eq!(table.sharp_phi(), BigInt::from(phi.brute_force_count()));
        let full = recover_counts_with(&phi, &|q, db| pr_oracle(q, db), SolveMethod::Full).unwrap();
        assert_eq!(full, table);
    }

    #[test]
    fn complete_bipartite() {
        let phi = Pp2Cnf::new(2, [(1, 1), (1, 2), (2, 1), (2, 2)]).unwrap();
        let table = recover_counts(&phi, &|q, db| pr_oracle(q, db)).unwrap();
        assert_eq!(table.sharp_phi(), BigInt::from(phi.brute_force_count()));
        assert_eq!(table.total(), BigInt::from(16));
    }
}
