//! Coalitions of players as bit masks, subset enumeration and exact
//! combinatorial tables.
//!
//! Player `i` (1-indexed, as in all external I/O) lives at bit `i - 1`.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest player count a coalition mask can represent.
pub const MAX_PLAYERS: usize = 64;

/// Largest player count for operations that touch the full 2^d lattice.
pub const MAX_LATTICE_PLAYERS: usize = 25;

/// Largest `n` in the exact binomial table.
pub const MAX_BINOM_N: u32 = 64;

/// A subset of `[d]` stored as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    /// The grand coalition `[d]`.
    pub fn full(d: usize) -> Self {
        debug_assert!(d <= MAX_PLAYERS);
        if d == 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << d) - 1)
        }
    }

    pub fn singleton(bit: usize) -> Self {
        Coalition(1u64 << bit)
    }

    /// Builds a coalition from 1-indexed player numbers.
    pub fn from_players(players: &[usize], d: usize) -> Result<Self> {
        let mut bits = 0u64;
        for &p in players {
            if p == 0 || p > d {
                return Err(Error::domain(format!("player {p} outside 1..={d}")));
            }
            bits |= 1u64 << (p - 1);
        }
        Ok(Coalition(bits))
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, bit: usize) -> bool {
        self.0 >> bit & 1 == 1
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & other.0 == self.0
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub fn fits(self, d: usize) -> bool {
        d >= 64 || self.0 >> d == 0
    }

    pub fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    pub fn intersection(self, other: Coalition) -> Coalition {
        Coalition(self.0 & other.0)
    }

    pub fn difference(self, other: Coalition) -> Coalition {
        Coalition(self.0 & !other.0)
    }

    pub fn with(self, bit: usize) -> Coalition {
        Coalition(self.0 | 1u64 << bit)
    }

    pub fn without(self, bit: usize) -> Coalition {
        Coalition(self.0 & !(1u64 << bit))
    }

    /// Complement within `[d]`.
    pub fn complement(self, d: usize) -> Coalition {
        Coalition(!self.0 & Coalition::full(d).0)
    }

    /// Bit positions (0-indexed) in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(b)
            }
        })
    }

    /// Sorted 1-indexed player numbers.
    pub fn players(self) -> Vec<usize> {
        self.members().map(|b| b + 1).collect()
    }

    /// All subsets of `self`, including the empty set and `self`, in
    /// ascending mask order.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(Coalition(cur))
        })
    }

    /// Drops bit `bit` and shifts higher bits down by one.
    pub fn remove_position(self, bit: usize) -> Coalition {
        let low = self.0 & ((1u64 << bit) - 1);
        let high = (self.0 >> (bit + 1)) << bit;
        Coalition(low | high)
    }

    /// Inverse of [`Coalition::remove_position`]: opens an empty slot at `bit`.
    pub fn insert_position(self, bit: usize) -> Coalition {
        let low = self.0 & ((1u64 << bit) - 1);
        let high = (self.0 >> bit) << (bit + 1);
        Coalition(low | high)
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        f.write_str("}")
    }
}

impl Serialize for Coalition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.players().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Coalition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let players = Vec::<usize>::deserialize(deserializer)?;
        let mut bits = 0u64;
        for p in players {
            if p == 0 || p > MAX_PLAYERS {
                return Err(serde::de::Error::custom(format!(
                    "player {p} outside 1..={MAX_PLAYERS}"
                )));
            }
            let bit = 1u64 << (p - 1);
            if bits & bit != 0 {
                return Err(serde::de::Error::custom(format!("player {p} listed twice")));
            }
            bits |= bit;
        }
        Ok(Coalition(bits))
    }
}

/// Exact binomial coefficients for `n <= 64` plus log-factorials.
pub struct BinomialTable {
    rows: Vec<Vec<u64>>,
    log_fact: Vec<f64>,
}

const LOG_FACT_LEN: usize = 1024;

impl BinomialTable {
    fn build() -> Self {
        let n_max = MAX_BINOM_N as usize;
        let mut rows: Vec<Vec<u64>> = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mut row = vec![1u64; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        let mut log_fact = vec![0.0f64; LOG_FACT_LEN];
        for k in 1..LOG_FACT_LEN {
            log_fact[k] = log_fact[k - 1] + (k as f64).ln();
        }
        BinomialTable { rows, log_fact }
    }

    pub fn global() -> &'static BinomialTable {
        static TABLE: OnceLock<BinomialTable> = OnceLock::new();
        TABLE.get_or_init(BinomialTable::build)
    }

    pub fn get(&self, n: u32, k: i64) -> Result<u64> {
        if n > MAX_BINOM_N {
            return Err(Error::domain(format!(
                "binomial table covers n <= {MAX_BINOM_N}, got {n}"
            )));
        }
        if k < 0 || k > n as i64 {
            return Ok(0);
        }
        Ok(self.rows[n as usize][k as usize])
    }

    /// `ln(n!)`.
    pub fn ln_factorial(&self, n: usize) -> f64 {
        assert!(n < LOG_FACT_LEN, "log-factorial table covers n < {LOG_FACT_LEN}");
        self.log_fact[n]
    }
}

/// `C(n, k)` with the generalized convention `C(n, k) = 0` outside `0..=n`.
pub fn binom(n: u32, k: i64) -> Result<u64> {
    BinomialTable::global().get(n, k)
}

/// Floating-point `C(n, k)`; zero outside `0..=n`. Panics for `n > 64`.
pub fn binom_f64(n: usize, k: i64) -> f64 {
    binom(n as u32, k).expect("binomial argument within table") as f64
}

pub fn ln_factorial(n: usize) -> f64 {
    BinomialTable::global().ln_factorial(n)
}

/// `d_l = sum_{j<=l} C(d, j)`, the number of coalitions of size at most `l`.
pub fn subset_count(d: usize, order: usize) -> Result<usize> {
    if d > MAX_PLAYERS || order > d {
        return Err(Error::domain(format!(
            "subset_count needs 0 <= l <= d <= {MAX_PLAYERS}, got d={d}, l={order}"
        )));
    }
    let mut total: u128 = 0;
    for j in 0..=order {
        total += binom(d as u32, j as i64)? as u128;
    }
    usize::try_from(total).map_err(|_| Error::domain("subset count overflows usize"))
}

/// Every coalition of size at most `max_size`, ordered by size then mask.
///
/// The full lattice is capped at `d <= 25`; larger player counts are
/// accepted as long as the output stays within 2^25 entries.
pub fn enumerate_subsets(d: usize, max_size: usize) -> Result<Vec<Coalition>> {
    if d > MAX_PLAYERS || max_size > d {
        return Err(Error::domain(format!(
            "enumerate_subsets needs 0 <= max_size <= d <= {MAX_PLAYERS}, got d={d}, max_size={max_size}"
        )));
    }
    let total = subset_count(d, max_size)?;
    if total > 1usize << MAX_LATTICE_PLAYERS {
        return Err(Error::domain(format!(
            "{total} coalitions exceed the 2^{MAX_LATTICE_PLAYERS} lattice cap"
        )));
    }
    let mut out = Vec::with_capacity(total);
    for size in 0..=max_size {
        out.extend(masks_of_size(d, size));
    }
    Ok(out)
}

/// Coalitions of exactly `size` players among `d`, ascending by mask
/// (Gosper's hack).
pub fn masks_of_size(d: usize, size: usize) -> impl Iterator<Item = Coalition> {
    let limit: u128 = 1u128 << d;
    let mut next: Option<u64> = if size > d {
        None
    } else if size == 0 {
        Some(0)
    } else {
        Some(((1u128 << size) - 1) as u64)
    };
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur as u128 + c as u128;
            let succ = (((r as u64 ^ cur) >> 2) / c) as u128 | r;
            if succ >= limit {
                None
            } else {
                Some(succ as u64)
            }
        };
        Some(Coalition(cur))
    })
}

/// The regression basis `S_l`: coalitions of size at most `l` with a fast
/// position lookup.
#[derive(Debug, Clone)]
pub struct SubsetBasis {
    d: usize,
    order: usize,
    subsets: Vec<Coalition>,
    positions: HashMap<u64, usize>,
}

impl SubsetBasis {
    pub fn new(d: usize, order: usize) -> Result<Self> {
        let subsets = enumerate_subsets(d, order)?;
        let positions = subsets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.bits(), i))
            .collect();
        Ok(SubsetBasis {
            d,
            order,
            subsets,
            positions,
        })
    }

    pub fn players(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Coalition] {
        &self.subsets
    }

    pub fn position(&self, s: Coalition) -> Option<usize> {
        self.positions.get(&s.bits()).copied()
    }

    /// Basis positions of every `T ⊆ s` with `|T| <= l`.
    pub fn positions_within(&self, s: Coalition) -> Vec<usize> {
        if s.size() <= 20 && (1usize << s.size()) <= self.len() {
            s.subsets()
                .filter(|t| t.size() <= self.order)
                .map(|t| self.positions[&t.bits()])
                .collect()
        } else {
            self.subsets
                .iter()
                .enumerate()
                .filter(|(_, t)| t.is_subset_of(s))
                .map(|(i, _)| i)
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumerate_small_lattices() {
        let two = enumerate_subsets(2, 2).unwrap();
        let bits: Vec<u64> = two.iter().map(|c| c.bits()).collect();
        assert_eq!(bits, vec![0b00, 0b01, 0b10, 0b11]);

        let three = enumerate_subsets(3, 1).unwrap();
        assert_eq!(three.len(), 4);
        assert_eq!(three[0], Coalition::EMPTY);
        assert_eq!(three[3].players(), vec![3]);

        assert_eq!(enumerate_subsets(11, 2).unwrap().len(), 67);
    }

    #[test]
    fn enumeration_is_size_then_mask_sorted() {
        let all = enumerate_subsets(6, 6).unwrap();
        assert_eq!(all.len(), 64);
        for w in all.windows(2) {
            assert!((w[0].size(), w[0].bits()) < (w[1].size(), w[1].bits()));
        }
    }

    #[test]
    fn enumerate_rejects_bad_arguments() {
        assert!(matches!(enumerate_subsets(3, 4), Err(Error::Domain(_))));
        assert!(matches!(enumerate_subsets(65, 1), Err(Error::Domain(_))));
        assert!(matches!(enumerate_subsets(30, 30), Err(Error::Domain(_))));
        // Large d is fine while the output stays small.
        assert_eq!(enumerate_subsets(40, 2).unwrap().len(), 1 + 40 + 780);
    }

    #[test]
    fn full_lattice_counts() {
        for d in 0..=12 {
            assert_eq!(enumerate_subsets(d, d).unwrap().len(), 1 << d);
            assert_eq!(subset_count(d, d).unwrap(), 1 << d);
            assert_eq!(subset_count(d, 0).unwrap(), 1);
        }
        assert_eq!(subset_count(11, 2).unwrap(), 67);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binom(11, 2).unwrap(), 55);
        assert_eq!(binom(5, -1).unwrap(), 0);
        assert_eq!(binom(5, 6).unwrap(), 0);
        assert_eq!(binom(20, 10).unwrap(), 184_756);
        assert_eq!(binom(64, 32).unwrap(), 1_832_624_140_942_590_534);
        assert!(binom(65, 2).is_err());
    }

    #[test]
    fn binomial_identities() {
        for n in 0..=64u32 {
            for k in 0..=n as i64 {
                assert_eq!(binom(n, k).unwrap(), binom(n, n as i64 - k).unwrap());
            }
        }
        // Vandermonde: C(m+n, r) = sum_k C(m, k) C(n, r-k)
        for (m, n, r) in [(5u32, 7u32, 6i64), (10, 10, 10), (20, 13, 17)] {
            let lhs = binom(m + n, r).unwrap();
            let rhs: u64 = (0..=r)
                .map(|k| binom(m, k).unwrap() * binom(n, r - k).unwrap())
                .sum();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn log_factorial_matches_product() {
        let direct: f64 = (1..=20).map(|k| (k as f64).ln()).sum();
        assert!((ln_factorial(20) - direct).abs() < 1e-12);
        assert_eq!(ln_factorial(0), 0.0);
    }

    #[test]
    fn subset_relation_agrees_with_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let d = rng.gen_range(1..=20);
            let a = Coalition::from_bits(rng.gen::<u64>() & Coalition::full(d).bits());
            let b = Coalition::from_bits(rng.gen::<u64>() & Coalition::full(d).bits());
            let elementwise = a.members().all(|i| b.contains(i));
            assert_eq!(a.is_subset_of(b), elementwise);
        }
    }

    #[test]
    fn subsets_iterator_covers_powerset() {
        let s = Coalition::from_players(&[1, 3, 4], 5).unwrap();
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|t| t.is_subset_of(s)));
        assert_eq!(Coalition::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn position_shifts_round_trip() {
        let s = Coalition::from_bits(0b1011_0110);
        for bit in 0..8 {
            let opened = s.insert_position(bit);
            assert!(!opened.contains(bit));
            assert_eq!(opened.remove_position(bit), s);
        }
    }

    #[test]
    fn json_is_one_indexed_player_list() {
        let s = Coalition::from_players(&[1, 3], 4).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        assert_eq!(serde_json::to_string(&Coalition::EMPTY).unwrap(), "[]");
        let back: Coalition = serde_json::from_str("[3,1]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Coalition>("[0]").is_err());
        assert!(serde_json::from_str::<Coalition>("[2,2]").is_err());
    }

    #[test]
    fn basis_lookup() {
        let basis = SubsetBasis::new(4, 2).unwrap();
        assert_eq!(basis.len(), 11);
        for (i, s) in basis.subsets().iter().enumerate() {
            assert_eq!(basis.position(*s), Some(i));
        }
        let s = Coalition::from_players(&[1, 2, 4], 4).unwrap();
        assert_eq!(basis.positions_within(s).len(), 1 + 3 + 3);
    }
}
