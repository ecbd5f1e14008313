//! Brute-force reference computations. These deliberately avoid every fast
//! path used by the main routines and are only meant for small agent sets.

use super::game::CharacteristicGame;
use super::values::PayoffVector;

/// Largest agent set the permutation oracle will enumerate.
pub const MAX_PERMUTATION_AGENTS: usize = 8;

/// Average marginal contribution over all `n!` arrival orders.
pub fn shapley_by_permutations(v: &CharacteristicGame) -> PayoffVector {
    let n = v.n_agents();
    assert!(
        n <= MAX_PERMUTATION_AGENTS,
        "permutation oracle limited to {MAX_PERMUTATION_AGENTS} agents"
    );
    let mut order: Vec<usize> = (0..n).collect();
    let mut totals = vec![0.0; n];
    let mut count = 0u64;
    permute(&mut order, 0, &mut |perm| {
        let mut mask = 0usize;
        for &agent in perm {
            let before = v.value_of_bits(mask);
            mask |= 1 << agent;
            totals[agent] += v.value_of_bits(mask) - before;
        }
        count += 1;
    });
    PayoffVector(totals.into_iter().map(|t| t / count as f64).collect())
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// All set partitions of the members of `mask`, each as a list of block masks.
pub fn set_partitions(mask: usize) -> Vec<Vec<usize>> {
    let members: Vec<usize> = (0..usize::BITS as usize)
        .filter(|i| mask & (1 << i) != 0)
        .collect();
    let mut out = Vec::new();
    let mut blocks: Vec<usize> = Vec::new();
    grow_partitions(&members, 0, &mut blocks, &mut out);
    out
}

fn grow_partitions(members: &[usize], k: usize, blocks: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k == members.len() {
        out.push(blocks.clone());
        return;
    }
    let bit = 1usize << members[k];
    for b in 0..blocks.len() {
        blocks[b] |= bit;
        grow_partitions(members, k + 1, blocks, out);
        blocks[b] &= !bit;
    }
    blocks.push(bit);
    grow_partitions(members, k + 1, blocks, out);
    blocks.pop();
}

/// Superadditive cover by explicit enumeration of coalition structures.
pub fn cover_by_partitions(v: &CharacteristicGame) -> Vec<f64> {
    (0..=v.grand_mask())
        .map(|c| {
            if c == 0 {
                return 0.0;
            }
            set_partitions(c)
                .iter()
                .map(|p| p.iter().map(|&b| v.value_of_bits(b)).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Banzhaf index by listing every coalition that excludes the agent.
pub fn banzhaf_by_enumeration(v: &CharacteristicGame) -> PayoffVector {
    let n = v.n_agents();
    let phi = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            let mut total = 0.0;
            let mut count = 0.0;
            for s in 0..=v.grand_mask() {
                if s & bit == 0 {
                    total += v.value_of_bits(s | bit) - v.value_of_bits(s);
                    count += 1.0;
                }
            }
            total / count
        })
        .collect();
    PayoffVector(phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        // B(1..5) = 1, 2, 5, 15, 52
        for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52)] {
            assert_eq!(set_partitions((1 << n) - 1).len(), bell);
        }
    }

    #[test]
    fn permutation_oracle_on_additive_game() {
        let v = CharacteristicGame::additive(&[1.0, 2.0, 3.0]).unwrap();
        let phi = shapley_by_permutations(&v);
        assert!(phi.max_abs_diff(&PayoffVector(vec![1.0, 2.0, 3.0])) < 1e-12);
    }
}
