//! Symmetric permutation-invariant measures on `{0,1}^n`: the coefficients
//! `a_kj`, the lower-triangular system for `xi`, the matching base and the
//! matching count.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use serde::Serialize;
use std::ops::{Div, Mul, Sub};

use crate::bitset::Bitset;
use crate::config_space::{Configuration, SiteSet, SpaceSpec};
use crate::error::{input, Error, Result};
use crate::rcr::{EtaConfig, RcrBase, MAX_SUPPORT};

fn falling(from: u64, steps: u64) -> BigUint {
    (0..steps).fold(BigUint::one(), |acc, i| acc * BigUint::from(from - i))
}

fn binomial(n: u64, k: u64) -> BigUint {
    falling(n, k) / falling(k, k)
}

/// `a_kj = k!(n-k)! / (j!(k-j)!(n-k-j)!) = C(k,j) (n-k)!/(n-k-j)!`.
/// Zero when `j > k`; `k > n/2` is rejected.
pub fn akj(n: usize, k: usize, j: usize) -> Result<BigUint> {
    if k > n / 2 {
        return input(format!("a_kj needs k <= n/2 (n={n}, k={k})"));
    }
    if j > k {
        return Ok(BigUint::zero());
    }
    let (n, k, j) = (n as u64, k as u64, j as u64);
    Ok(binomial(k, j) * falling(n - k, j))
}

/// Solution of `p_k = sum_{j<=k} a_kj xi_j` for `k = 0..=n/2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiSolution<T> {
    pub n: usize,
    pub p: Vec<T>,
    pub xi: Vec<T>,
    pub exact: bool,
    pub min: T,
}

fn forward<T>(n: usize, p: &[T], lift: impl Fn(&BigUint) -> T) -> Result<Vec<T>>
where
    T: Clone + Zero + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let m = n / 2;
    if p.len() != m + 1 {
        return input(format!("expected {} level weights, got {}", m + 1, p.len()));
    }
    if p[0].is_zero() {
        return Err(Error::SingularNormalization("p_0 = 0".into()));
    }
    let mut xi: Vec<T> = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let mut r = p[k].clone();
        for (j, x) in xi.iter().enumerate() {
            r = r - lift(&akj(n, k, j)?) * x.clone();
        }
        xi.push(r / lift(&akj(n, k, k)?));
    }
    Ok(xi)
}

/// Float forward substitution.
pub fn solve_xi(n: usize, p: &[f64]) -> Result<XiSolution<f64>> {
    if p.iter().any(|v| !v.is_finite()) {
        return input("level weights must be finite");
    }
    let xi = forward(n, p, |a| a.to_f64().unwrap_or(f64::INFINITY))?;
    let min = xi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(XiSolution {
        n,
        p: p.to_vec(),
        xi,
        exact: false,
        min,
    })
}

/// Rational forward substitution.
pub fn solve_xi_exact(n: usize, p: &[BigRational]) -> Result<XiSolution<BigRational>> {
    let xi = forward(n, p, |a| BigRational::from_integer(a.clone().into()))?;
    let min = xi.iter().min().cloned().unwrap_or_else(BigRational::zero);
    Ok(XiSolution {
        n,
        p: p.to_vec(),
        xi,
        exact: true,
        min,
    })
}

/// Levels `p_k = x^{k(n-k)}` of the folded zero-field Curie-Weiss measure.
pub fn cw_levels(n: usize, x: f64) -> Vec<f64> {
    (0..=n / 2).map(|k| x.powi((k * (n - k)) as i32)).collect()
}

pub fn cw_levels_exact(n: usize, x: &BigRational) -> Vec<BigRational> {
    (0..=n / 2)
        .map(|k| Pow::pow(x, (k * (n - k)) as u32))
        .collect()
}

pub fn solve_xi_x(n: usize, x: f64) -> Result<XiSolution<f64>> {
    if !(x.is_finite() && x > 0.0) {
        return input("x must be positive and finite");
    }
    solve_xi(n, &cw_levels(n, x))
}

pub fn solve_xi_x_exact(n: usize, x: &BigRational) -> Result<XiSolution<BigRational>> {
    if !x.is_positive() {
        return input("x must be positive");
    }
    solve_xi_exact(n, &cw_levels_exact(n, x))
}

/// Every set of pairwise-disjoint site pairs on `n` sites, each as a list of
/// pairs `(i, j)` with `i < j`.
fn all_matchings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(free: u32, n: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        let Some(i) = (0..n).find(|&i| free >> i & 1 == 1) else {
            out.push(cur.clone());
            return;
        };
        let rest = free & !(1 << i);
        rec(rest, n, cur, out);
        for j in i + 1..n {
            if rest >> j & 1 == 1 {
                cur.push((i, j));
                rec(rest & !(1 << j), n, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(((1u64 << n) - 1) as u32, n, &mut Vec::new(), &mut out);
    out
}

/// Number of matchings of `K_n` (telephone numbers).
fn matching_total(n: usize) -> usize {
    let (mut a, mut b) = (1usize, 1usize);
    for k in 1..n {
        let c = b.saturating_add(k.saturating_mul(a));
        a = b;
        b = c;
    }
    b
}

/// The base putting weight `xi_j` on each matching with `j` pairs, every
/// matched pair forced to opposite values.
pub fn matching_base_on(space: &SpaceSpec, xi: &[f64]) -> Result<RcrBase> {
    if !space.is_binary() {
        return input("the matching base needs a two-letter space");
    }
    if xi.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return input("xi must be finite and nonnegative");
    }
    let n = space.n();
    if matching_total(n) > MAX_SUPPORT {
        return Err(Error::Cap(format!("matching base on {n} sites")));
    }
    let opposite = Bitset::from_indices(4, [1, 2]);
    let mut support = Vec::new();
    for m in all_matchings(n) {
        let w = xi.get(m.len()).copied().unwrap_or(0.0);
        if w == 0.0 {
            continue;
        }
        let mut eta = EtaConfig::inactive(space);
        for (i, j) in m {
            eta.set(SiteSet::from_iter([i, j]), opposite.clone())?;
        }
        support.push((eta, w));
    }
    if support.is_empty() {
        return input("xi has no positive entry");
    }
    RcrBase::explicit(space, support)
}

pub fn matching_base(n: usize, xi: &[f64]) -> Result<RcrBase> {
    matching_base_on(&SpaceSpec::binary(n)?, xi)
}

/// Number of `j`-pair matchings joining ones of `omega` to zeros of `omega`.
/// Configurations with more ones than zeros are flipped first.
pub fn count_matchings(omega: &Configuration, j: usize) -> Result<u128> {
    let digits = omega.digits();
    if digits.iter().any(|&d| d > 1) {
        return input("count_matchings needs a binary configuration");
    }
    let ones = digits.iter().filter(|&&d| d == 1).count();
    let (small, large) = if 2 * ones > digits.len() {
        (digits.len() - ones, ones)
    } else {
        (ones, digits.len() - ones)
    };
    if j > small {
        return Ok(0);
    }
    fn rec(i: usize, small: usize, used: &mut Vec<bool>, left: usize) -> u128 {
        if left == 0 {
            return 1;
        }
        if small - i < left {
            return 0;
        }
        let mut total = rec(i + 1, small, used, left);
        for z in 0..used.len() {
            if !used[z] {
                used[z] = true;
                total += rec(i + 1, small, used, left - 1);
                used[z] = false;
            }
        }
        total
    }
    Ok(rec(0, small, &mut vec![false; large], j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Measure;
    use crate::rcr::validate_rcr;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn akj_examples() {
        for n in 0..12 {
            for k in 0..=n / 2 {
                assert_eq!(akj(n, k, 0).unwrap(), BigUint::one());
            }
        }
        assert_eq!(akj(4, 1, 1).unwrap(), 3u32.into());
        assert_eq!(akj(4, 2, 1).unwrap(), 4u32.into());
        assert_eq!(akj(4, 2, 2).unwrap(), 2u32.into());
        assert_eq!(akj(4, 1, 2).unwrap(), BigUint::zero());
        assert!(akj(4, 3, 0).is_err());
    }

    #[test]
    fn akj_matches_factorial_form() {
        let fact = |m: u64| falling(m, m);
        for n in 0..=20usize {
            for k in 0..=n / 2 {
                for j in 0..=k {
                    let (nn, kk, jj) = (n as u64, k as u64, j as u64);
                    let direct =
                        fact(kk) * fact(nn - kk) / (fact(jj) * fact(kk - jj) * fact(nn - kk - jj));
                    assert_eq!(akj(n, k, j).unwrap(), direct);
                }
            }
        }
    }

    #[test]
    fn xi_zero_is_one() {
        for n in 1..=20 {
            for x in [r(1, 1), r(11, 10), r(3, 2), r(7, 1)] {
                assert_eq!(solve_xi_x_exact(n, &x).unwrap().xi[0], r(1, 1));
            }
        }
    }

    #[test]
    fn xi_at_one_is_first_unit_vector() {
        // p_k = 1 for every k forces xi_1 (n - 1) = 0.
        for n in 2..=20 {
            let s = solve_xi_x_exact(n, &r(1, 1)).unwrap();
            assert_eq!(s.xi[0], r(1, 1));
            assert!(s.xi[1..].iter().all(Zero::is_zero));
        }
    }

    #[test]
    fn n4_symbolic_solution() {
        for x in [1.0f64, 1.3, 2.0, 5.0] {
            let s = solve_xi_x(4, x).unwrap();
            let xi1 = (x.powi(3) - 1.0) / 3.0;
            let xi2 = (x.powi(4) - 1.0 - 4.0 * xi1) / 2.0;
            assert!((s.xi[1] - xi1).abs() < 1e-12 * x.powi(4));
            assert!((s.xi[2] - xi2).abs() < 1e-12 * x.powi(4));
        }
    }

    #[test]
    fn solution_reproduces_levels() {
        for n in 1..=20 {
            for x in [1.0, 1.1, 1.25, 1.5, 2.0, 3.0] {
                let s = solve_xi_x(n, x).unwrap();
                for k in 0..=n / 2 {
                    let sum: f64 = (0..=k)
                        .map(|j| akj(n, k, j).unwrap().to_f64().unwrap() * s.xi[j])
                        .sum();
                    assert!((sum - s.p[k]).abs() <= 1e-12 * s.p[k].abs().max(1.0) * 1e3);
                }
            }
            let e = solve_xi_x_exact(n, &r(5, 2)).unwrap();
            for k in 0..=n / 2 {
                let sum: BigRational = (0..=k)
                    .map(|j| BigRational::from_integer(akj(n, k, j).unwrap().into()) * &e.xi[j])
                    .sum();
                assert_eq!(sum, e.p[k]);
            }
        }
    }

    #[test]
    fn singular_normalisation() {
        assert!(matches!(
            solve_xi(4, &[0.0, 1.0, 1.0]),
            Err(Error::SingularNormalization(_))
        ));
        assert!(solve_xi(4, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn below_one_goes_negative() {
        assert!(solve_xi_x_exact(4, &r(1, 2)).unwrap().min.is_negative());
    }

    #[test]
    fn count_examples() {
        let s = SpaceSpec::binary(4).unwrap();
        let w = Configuration::from_digits(&s, vec![1, 1, 0, 0]).unwrap();
        assert_eq!(count_matchings(&w, 0).unwrap(), 1);
        assert_eq!(count_matchings(&w, 1).unwrap(), 4);
        assert_eq!(count_matchings(&w, 2).unwrap(), 2);
        assert_eq!(count_matchings(&w, 3).unwrap(), 0);
        let w = Configuration::from_digits(&s, vec![1, 1, 1, 0]).unwrap();
        assert_eq!(count_matchings(&w, 1).unwrap(), 3);
    }

    #[test]
    fn matching_totals() {
        for n in 0..=10 {
            assert_eq!(all_matchings(n).len(), matching_total(n));
        }
        assert_eq!(matching_total(8), 764);
    }

    #[test]
    fn matching_base_examples() {
        let nu = matching_base(2, &[1.0, 1.0]).unwrap();
        let sup = nu.support().unwrap();
        assert_eq!(sup.len(), 2);
        assert!(sup
            .iter()
            .all(|(_, w)| (w / nu.normalizer() - 0.5).abs() < 1e-15));
        let nu = matching_base(5, &[1.0, 0.0, 0.0]).unwrap();
        let sup = nu.support().unwrap();
        assert_eq!(sup.len(), 1);
        assert!(sup[0].0.active().is_empty());
        assert!(matching_base(3, &[1.0, -0.1]).is_err());
        assert!(matching_base(3, &[0.0, 0.0]).is_err());
    }

    fn level_measure(n: usize, p: &[f64]) -> Measure {
        let s = SpaceSpec::binary(n).unwrap();
        let w = (0..s.size())
            .map(|i| {
                let k = (i as u32).count_ones() as usize;
                p[k.min(n - k)]
            })
            .collect();
        Measure::from_weights(&s, w).unwrap()
    }

    #[test]
    fn matching_base_validates_cw_levels() {
        for n in 1..=8 {
            for x in [1.0, 1.5, std::f64::consts::E] {
                let s = solve_xi_x(n, x).unwrap();
                let nu = matching_base(n, &s.xi).unwrap();
                let mu = level_measure(n, &s.p);
                let rep = validate_rcr(&nu, &mu, 1e-10).unwrap();
                assert!(rep.pass, "n={n} x={x} {rep:?}");
            }
        }
    }
}
