//! The combinatorial starting distance `q0(n, d, M)` built from derangement
//! numbers.
//!
//! All arithmetic is exact: `M^d` overflows machine integers long before the
//! sizes of practical interest (`30^55`), and a single rounding error would
//! change the returned distance.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundQuery {
    pub n: usize,
    pub d: usize,
    pub m: u32,
}

impl BoundQuery {
    pub fn new(n: usize, d: usize, m: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("run size n must be >= 1".into()));
        }
        if d == 0 || m < 2 {
            return Err(Error::InvalidLattice { d, m });
        }
        Ok(Self { n, d, m })
    }
}

/// Derangement number `D_l`, via `D_l = l * D_{l-1} + (-1)^l` with `D_0 = 1`.
pub fn derangement(l: u32) -> BigUint {
    let mut value = BigUint::one();
    for i in 1..=l {
        value *= i;
        if i % 2 == 0 {
            value += 1u32;
        } else {
            // i * D_{i-1} >= 1 for every odd i, so this never underflows.
            value -= 1u32;
        }
    }
    value
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `sum_{l=0}^{k-1} C(d, l) D_l`, the denominator of the bound for distance `k`.
pub fn sphere_sum(d: usize, k: usize) -> BigUint {
    (0..k)
        .map(|l| binomial(d as u64, l as u64) * derangement(l as u32))
        .sum()
}

/// Result of evaluating the bound, with the intermediate quantities the CLI
/// prints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Q0 {
    pub q0: usize,
    /// `M^d`.
    pub lattice_size: BigUint,
    /// Denominator at `k = q0`.
    pub sphere_sum: BigUint,
    /// False when even `k = 1` fails, i.e. `n > M^d`.
    pub condition_met: bool,
}

/// Largest `k` in `1..=d` with `M^d >= n * sum_{l<k} C(d,l) D_l`, or 1 when
/// no `k` qualifies.
pub fn q0(query: BoundQuery) -> Q0 {
    let lattice = BigUint::from(query.m).pow(query.d as u32);
    let n = BigUint::from(query.n);
    let mut sum = BigUint::zero();
    let mut best: Option<(usize, BigUint)> = None;
    for k in 1..=query.d {
        let l = k - 1;
        sum += binomial(query.d as u64, l as u64) * derangement(l as u32);
        // The denominator only grows with k, so the first failure is final.
        if &n * &sum <= lattice {
            best = Some((k, sum.clone()));
        } else {
            break;
        }
    }
    match best {
        Some((k, s)) => Q0 { q0: k, lattice_size: lattice, sphere_sum: s, condition_met: true },
        None => Q0 { q0: 1, lattice_size: lattice, sphere_sum: BigUint::one(), condition_met: false },
    }
}

/// Shorthand for `q0(query).q0`.
pub fn q0_value(n: usize, d: usize, m: u32) -> Result<usize> {
    Ok(q0(BoundQuery::new(n, d, m)?).q0)
}

/// Upper bound on the maximin distance from the pair-agreement count
/// (the q-ary Plotkin argument). Every column contributes at least
/// `S = sum_levels C(c_k, 2)` agreeing pairs with level counts as even as
/// possible, and each of the `C(n, 2)` pairs may agree in at most `d - q`
/// columns, so `C(n,2) (d - q) >= d S`. Reduces to the pigeonhole
/// observation (`q <= d - 1` once `n > M`).
pub fn agreement_upper_bound(n: usize, d: usize, m: u32) -> usize {
    if n < 2 {
        return d;
    }
    let (n64, m64) = (n as u64, m as u64);
    let (base, rem) = (n64 / m64, n64 % m64);
    let pairs_per_column = (m64 - rem) * base * base.saturating_sub(1) / 2 + rem * (base + 1) * base / 2;
    let total_pairs = n64 * (n64 - 1) / 2;
    let mut q = d as u64;
    while q > 0 && total_pairs * (d as u64 - q) < d as u64 * pairs_per_column {
        q -= 1;
    }
    q as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    /// `l! * sum_{i=0}^{l} (-1)^i / i!`, evaluated term by term as
    /// `(-1)^i * l!/i!`.
    fn derangement_by_sum(l: u32) -> BigInt {
        let mut total = BigInt::zero();
        for i in 0..=l {
            let mut term = BigInt::one();
            for f in (i + 1)..=l {
                term *= f;
            }
            if i % 2 == 1 {
                term = -term;
            }
            total += term;
        }
        total
    }

    fn q0_oracle(n: usize, d: usize, m: u32) -> usize {
        let lattice = BigInt::from(m).pow(d as u32);
        let mut best = 1;
        for k in 1..=d {
            let mut s = BigInt::zero();
            for l in 0..k {
                let c: BigInt = (0..l as u64).fold(BigInt::one(), |acc, i| acc * (d as u64 - i) / (i + 1));
                s += c * derangement_by_sum(l as u32);
            }
            if lattice >= BigInt::from(n) * s {
                best = k;
            }
        }
        best
    }

    #[test]
    fn derangement_examples() {
        assert_eq!(derangement(0), BigUint::from(1u32));
        assert_eq!(derangement(1), BigUint::from(0u32));
        assert_eq!(derangement(4), BigUint::from(9u32));
        for l in 0..30 {
            assert_eq!(BigInt::from(derangement(l)), derangement_by_sum(l), "l = {l}");
        }
    }

    #[test]
    fn sphere_sum_identity() {
        // sum_{l=0}^{d} C(d,l) D_l = d!
        for d in 1..12usize {
            let fact: BigUint = (1..=d as u32).map(BigUint::from).product();
            assert_eq!(sphere_sum(d, d + 1), fact);
        }
    }

    #[test]
    fn q0_worked_example() {
        let r = q0(BoundQuery::new(4, 3, 2).unwrap());
        assert_eq!(r.q0, 2);
        assert_eq!(r.sphere_sum, BigUint::from(1u32));
        assert_eq!(r.lattice_size, BigUint::from(8u32));
    }

    #[test]
    fn q0_matches_direct_evaluation() {
        for n in 1..25 {
            for d in 1..9 {
                for m in 2..7 {
                    assert_eq!(q0_value(n, d, m).unwrap(), q0_oracle(n, d, m), "({n},{d},{m})");
                }
            }
        }
        // The larger instance from the initial-design study.
        assert_eq!(q0_value(50, 15, 10).unwrap(), q0_oracle(50, 15, 10));
        assert_eq!(q0_value(50, 15, 10).unwrap(), 15);
    }

    #[test]
    fn q0_is_d_for_small_runs_when_d_at_most_m() {
        for m in 2..9u32 {
            for d in 1..=m as usize {
                for n in 1..=m as usize {
                    assert_eq!(q0_value(n, d, m).unwrap(), d, "({n},{d},{m})");
                }
            }
        }
        assert_eq!(q0_value(8, 10, 10).unwrap(), 10);
    }

    #[test]
    fn q0_formula_can_fall_below_d_when_d_exceeds_m() {
        // Binary lattice with four factors: the sphere sum at k = 4 is 15 and 2 * 15 > 16.
        assert_eq!(q0_value(2, 4, 2).unwrap(), 3);
    }

    #[test]
    fn q0_falls_back_to_one() {
        let r = q0(BoundQuery::new(9, 3, 2).unwrap());
        assert_eq!(r.q0, 1);
        assert!(!r.condition_met);
        let r = q0(BoundQuery::new(8, 3, 2).unwrap());
        assert!(r.condition_met);
    }

    #[test]
    fn q0_monotone() {
        for d in 1..10 {
            for m in 2..8u32 {
                let mut prev = usize::MAX;
                for n in 1..40 {
                    let q = q0_value(n, d, m).unwrap();
                    assert!(q <= prev);
                    prev = q;
                }
            }
            for n in 1..30 {
                let mut prev = 0;
                for m in 2..10u32 {
                    let q = q0_value(n, d, m).unwrap();
                    assert!(q >= prev);
                    prev = q;
                }
            }
        }
    }

    #[test]
    fn q0_handles_huge_lattices() {
        let q = q0_value(50, 55, 30).unwrap();
        assert!((1..=55).contains(&q));
        assert_eq!(q, q0_oracle(50, 55, 30));
    }

    #[test]
    fn agreement_bound_examples() {
        // 5 binary points of length 3 cannot all be at distance 2.
        assert_eq!(agreement_upper_bound(5, 3, 2), 1);
        assert_eq!(agreement_upper_bound(4, 3, 2), 2);
        // Pigeonhole: n > M forbids distance d.
        assert_eq!(agreement_upper_bound(11, 10, 10), 9);
        assert_eq!(agreement_upper_bound(10, 10, 10), 10);
        assert_eq!(agreement_upper_bound(20, 8, 5), 6);
        assert_eq!(agreement_upper_bound(2, 7, 2), 7);
    }

    #[test]
    fn query_validation() {
        assert!(BoundQuery::new(0, 3, 2).is_err());
        assert!(BoundQuery::new(2, 0, 2).is_err());
        assert!(BoundQuery::new(2, 3, 1).is_err());
    }
}
