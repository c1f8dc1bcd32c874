//! Breeding-rate profiles `c: ℕ → ℝ⁺`, nonincreasing, stored as a finite
//! table followed by a constant tail `c(+∞)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile<T> {
    table: Vec<T>,
    tail: T,
}

impl<T: Scalar> RateProfile<T> {
    /// `c(k) = table[k]` for tabulated `k`, `tail` beyond.
    pub fn from_table(table: Vec<T>, tail: T) -> Result<Self> {
        let Some(&lambda) = table.first() else {
            return Err(Error::InvalidParameter("profile table is empty".into()));
        };
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = c(0) must be positive, got {lambda}")));
        }
        if !(tail >= T::zero()) {
            return Err(Error::InvalidParameter(format!("tail must be nonnegative, got {tail}")));
        }
        for (i, w) in table.windows(2).enumerate() {
            if !(w[1] <= w[0]) {
                return Err(Error::NonMonotoneProfile { index: i + 1 });
            }
        }
        if !(tail <= *table.last().unwrap()) {
            return Err(Error::NonMonotoneProfile { index: table.len() });
        }
        let mut p = Self { table, tail };
        p.normalize();
        Ok(p)
    }

    /// Branching random walk: `c ≡ λ`.
    pub fn constant(lambda: T) -> Result<Self> {
        Self::from_table(vec![lambda], lambda)
    }

    /// Contact process: `c = λ·𝟙{0}`.
    pub fn contact(lambda: T) -> Result<Self> {
        Self::from_table(vec![lambda], T::zero())
    }

    /// `c(k) = high` for `k < threshold`, `low` afterwards.
    pub fn step(high: T, threshold: usize, low: T) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::InvalidParameter("step threshold must be >= 1".into()));
        }
        Self::from_table(vec![high; threshold], low)
    }

    // Drop trailing entries equal to the tail so equal functions compare equal.
    fn normalize(&mut self) {
        while self.table.len() > 1 && *self.table.last().unwrap() == self.tail {
            self.table.pop();
        }
    }

    pub fn rate(&self, k: u32) -> T {
        self.table.get(k as usize).copied().unwrap_or(self.tail)
    }

    /// `λ = c(0)`.
    pub fn lambda(&self) -> T {
        self.table[0]
    }

    /// `c(+∞)`.
    pub fn tail(&self) -> T {
        self.tail
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    /// Index from which `c` is constant.
    pub fn tabulated_len(&self) -> usize {
        self.table.len()
    }

    /// `c_n = c·𝟙_{[0, n-1]}`.
    pub fn truncate(&self, n: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
        }
        let table = (0..n).map(|k| self.rate(k)).collect();
        Self::from_table(table, T::zero())
    }

    /// Largest occupancy a target site can reach through births, if finite:
    /// the first `k` with `c(k) = 0`.
    pub fn occupancy_cap(&self) -> Option<u32> {
        (0..=self.table.len() as u32).find(|&k| self.rate(k) == T::zero())
    }

    /// `k̄ = min{k : c(k) < threshold}`.
    pub fn first_below(&self, threshold: T) -> Option<u32> {
        (0..=self.table.len() as u32).find(|&k| self.rate(k) < threshold)
    }

    /// `self(k) ≤ other(k)` for all `k ≥ offset`, tails included.
    pub fn dominated_from(&self, other: &Self, offset: u32) -> bool {
        let end = self.table.len().max(other.table.len()) as u32 + 1;
        (offset..end.max(offset + 1)).all(|k| self.rate(k) <= other.rate(k)) && self.tail <= other.tail
    }

    pub fn le_pointwise(&self, other: &Self) -> bool {
        self.dominated_from(other, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_brw() {
        let c = RateProfile::constant(2.0).unwrap();
        assert!((0..10).all(|k| c.rate(k) == 2.0));
        assert_eq!(c.tail(), 2.0);
        assert_eq!(c.lambda(), 2.0);
        assert_eq!(c.occupancy_cap(), None);
    }

    #[test]
    fn contact_profile() {
        let c = RateProfile::contact(4.0).unwrap();
        assert_eq!(c.rate(0), 4.0);
        assert!((1..10).all(|k| c.rate(k) == 0.0));
        assert_eq!(c.occupancy_cap(), Some(1));
    }

    #[test]
    fn step_profile() {
        let c = RateProfile::step(8.0, 3, 0.5).unwrap();
        let v: Vec<f64> = (0..6).map(|k| c.rate(k)).collect();
        assert_eq!(v, vec![8.0, 8.0, 8.0, 0.5, 0.5, 0.5]);
        assert_eq!(c.first_below(1.0), Some(3));
    }

    #[test]
    fn invalid_profiles() {
        assert_eq!(
            RateProfile::from_table(vec![1.0, 2.0], 0.0).unwrap_err(),
            Error::NonMonotoneProfile { index: 1 }
        );
        assert!(RateProfile::from_table(vec![1.0], 2.0).is_err());
        assert!(RateProfile::constant(0.0).is_err());
        assert!(RateProfile::constant(-1.0).is_err());
        assert!(RateProfile::<f64>::from_table(vec![], 0.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let c = RateProfile::constant(2.0).unwrap();
        assert_eq!(c.truncate(1).unwrap(), RateProfile::contact(2.0).unwrap());
        let s = RateProfile::step(8.0, 3, 0.5).unwrap();
        let t = s.truncate(6).unwrap();
        assert_eq!(t.rate(5), 0.5);
        assert_eq!(t.rate(6), 0.0);
        assert_eq!(t.tail(), 0.0);
        assert_eq!(s.truncate(5).unwrap().truncate(3).unwrap(), s.truncate(3).unwrap());
        assert!(s.truncate(0).is_err());
    }

    #[test]
    fn equal_floor_compatibility() {
        let c = RateProfile::step(3.0, 2, 0.5).unwrap();
        assert!(c.dominated_from(&c, 1));
        let smaller = RateProfile::step(3.0, 1, 0.5).unwrap();
        assert!(smaller.dominated_from(&c, 0));
        assert!(!c.dominated_from(&smaller, 0));
        // agree from index 2 onwards
        assert!(c.dominated_from(&smaller, 2));
    }

    fn arb_profile() -> impl Strategy<Value = RateProfile<f64>> {
        (prop::collection::vec(0.0f64..5.0, 1..8), 0.0f64..1.0).prop_map(|(mut v, tail_frac)| {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v[0] += 0.1;
            let tail = v.last().unwrap() * tail_frac;
            RateProfile::from_table(v, tail).unwrap()
        })
    }

    proptest! {
        #[test]
        fn truncations_are_ordered(c in arb_profile(), n in 1u32..12) {
            let cn = c.truncate(n).unwrap();
            let cn1 = c.truncate(n + 1).unwrap();
            prop_assert!(cn.le_pointwise(&c));
            prop_assert!(cn.le_pointwise(&cn1));
            for k in 0..20 {
                prop_assert!(cn.rate(k + 1) <= cn.rate(k));
            }
        }

        #[test]
        fn nested_truncation(c in arb_profile(), a in 1u32..10, b in 1u32..10) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert_eq!(c.truncate(hi).unwrap().truncate(lo).unwrap(), c.truncate(lo).unwrap());
        }
    }
}
