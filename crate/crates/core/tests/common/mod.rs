//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use interaction_core::coalition::Coalition;
use interaction_core::game::ValueFunction;
use interaction_core::index::InteractionIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_table(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..1usize << d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_game(d: usize, rng: &mut ChaCha8Rng) -> ValueFunction {
    ValueFunction::table(d, random_table(d, rng)).unwrap()
}

pub fn table_of(v: &ValueFunction) -> Vec<f64> {
    let d = v.players();
    (0..1u64 << d).map(|m| v.eval(Coalition::from_bits(m)).unwrap()).collect()
}

/// Möbius coefficients by direct inclusion-exclusion over subsets.
pub fn brute_mobius(table: &[f64]) -> Vec<f64> {
    (0..table.len())
        .map(|s| {
            let mut acc = 0.0;
            let mut sub = s;
            loop {
                let sign = if (s.count_ones() - sub.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * table[sub];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & s;
            }
            acc
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        factorial(n) / (factorial(k) * factorial(n - k))
    }
}

/// Shapley values by averaging marginal contributions over all `d!`
/// orderings.
pub fn shapley_by_permutations(table: &[f64], d: usize) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..d).collect();
    let mut phi = vec![0.0; d];
    let mut count = 0usize;
    loop {
        let mut prefix = 0usize;
        for &i in &perm {
            phi[i] += table[prefix | 1 << i] - table[prefix];
            prefix |= 1 << i;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    phi.iter().map(|x| x / count as f64).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `Σ_{T ⊇ S} k(|S|, |T|) a(T)` by brute force over the full Möbius table.
pub fn mobius_kernel_index(
    a: &[f64],
    index: &InteractionIndex,
    kernel: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    index
        .subsets()
        .iter()
        .map(|s| {
            (0..a.len())
                .filter(|t| t & s.bits() as usize == s.bits() as usize)
                .map(|t| kernel(s.size(), t.count_ones() as usize) * a[t])
                .sum()
        })
        .collect()
}

/// Shapley interaction from Möbius coefficients.
pub fn shapley_interaction_oracle(a: &[f64], index: &InteractionIndex) -> Vec<f64> {
    mobius_kernel_index(a, index, |s, t| 1.0 / (t - s + 1) as f64)
}

pub fn banzhaf_interaction_oracle(a: &[f64], index: &InteractionIndex) -> Vec<f64> {
    mobius_kernel_index(a, index, |s, t| 0.5f64.powi((t - s) as i32))
}

pub fn shapley_taylor_oracle(a: &[f64], index: &InteractionIndex) -> Vec<f64> {
    let l = index.order();
    mobius_kernel_index(a, index, |s, t| {
        if s < l {
            if s == t { 1.0 } else { 0.0 }
        } else {
            1.0 / binom(t, l)
        }
    })
}

/// Applies a player permutation (`perm[i]` is the new bit of player bit
/// `i`) to a coalition.
pub fn permute(s: Coalition, perm: &[usize]) -> Coalition {
    s.members().fold(Coalition::EMPTY, |acc, i| acc.with(perm[i]))
}

pub fn permuted_game(table: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for (m, x) in table.iter().enumerate() {
        out[permute(Coalition::from_bits(m as u64), perm).index()] = *x;
    }
    out
}

/// The same game with a dummy player appended as the highest bit.
pub fn with_dummy(table: &[f64]) -> Vec<f64> {
    let n = table.len();
    (0..2 * n).map(|m| table[m % n]).collect()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{k}]: {x} vs {y} (tol {tol})");
    }
}
