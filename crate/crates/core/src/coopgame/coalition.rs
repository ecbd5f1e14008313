use std::fmt;

use crate::error::{Error, Result};

/// Largest agent set a coalition bitmask may describe.
pub const MAX_AGENTS: usize = 24;

/// A subset of the agents `0..n_agents`, bit `i` set when agent `i` is a member.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionId {
    bits: u32,
    n_agents: u8,
}

impl CoalitionId {
    pub fn new(bits: u32, n_agents: usize) -> Result<Self> {
        if n_agents > MAX_AGENTS {
            return Err(Error::invalid(format!(
                "n_agents = {n_agents} exceeds the coalition limit {MAX_AGENTS}"
            )));
        }
        if (bits as u64) >= (1u64 << n_agents) {
            return Err(Error::invalid(format!(
                "bitmask {bits:#b} does not fit {n_agents} agents"
            )));
        }
        Ok(Self {
            bits,
            n_agents: n_agents as u8,
        })
    }

    pub fn from_members(members: &[usize], n_agents: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &m in members {
            if m >= n_agents {
                return Err(Error::OutOfRange {
                    what: "agent",
                    index: m,
                    len: n_agents,
                });
            }
            bits |= 1 << m;
        }
        Self::new(bits, n_agents)
    }

    pub fn grand(n_agents: usize) -> Result<Self> {
        Self::new(((1u64 << n_agents) - 1) as u32, n_agents)
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn index(self) -> usize {
        self.bits as usize
    }

    pub fn n_agents(self) -> usize {
        self.n_agents as usize
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < self.n_agents() && self.bits & (1 << agent) != 0
    }

    pub fn is_subset_of(self, other: CoalitionId) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.n_agents()).filter(move |&i| bits & (1 << i) != 0)
    }
}

impl fmt::Debug for CoalitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// Iterates `sub` over every subset of `mask`, including `mask` and 0.
pub(crate) fn submasks(mask: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_and_len() {
        let c = CoalitionId::from_members(&[0, 2], 3).unwrap();
        assert_eq!(c.bits(), 0b101);
        assert_eq!(c.len(), 2);
        assert_eq!(c.members().collect::<Vec<_>>(), vec![0, 2]);
        assert!(c.contains(2) && !c.contains(1));
    }

    #[test]
    fn rejects_oversized_mask() {
        assert!(CoalitionId::new(8, 3).is_err());
        assert!(CoalitionId::new(0, 25).is_err());
        assert!(CoalitionId::from_members(&[3], 3).is_err());
    }

    #[test]
    fn submask_enumeration_is_complete() {
        let mut subs: Vec<usize> = submasks(0b1011).collect();
        subs.sort();
        assert_eq!(subs, vec![0, 1, 2, 3, 8, 9, 10, 11]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), vec![0]);
    }
}
