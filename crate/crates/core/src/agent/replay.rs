use std::collections::{BTreeMap, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentAction, EncodedState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EncodedState,
    pub action: AgentAction,
    pub priority: f64,
}

/// Bounded FIFO of transitions for one UAV count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> Option<&Transition> {
        self.items.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn max_priority(&self) -> Option<f64> {
        self.items.iter().map(|t| t.priority).reduce(f64::max)
    }

    /// Appends with the current maximum priority (1 when empty), evicting the
    /// oldest entry at capacity.
    pub fn push(&mut self, state: EncodedState, action: AgentAction) {
        let priority = self.max_priority().unwrap_or(1.0);
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(Transition { state, action, priority });
    }

    /// Draws `batch` indices with replacement, `P(k) ∝ p_k^exponent`.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, exponent: f64, rng: &mut R) -> Option<Vec<usize>> {
        if self.items.is_empty() || batch == 0 {
            return None;
        }
        let weights: Vec<f64> = self.items.iter().map(|t| t.priority.powf(exponent)).collect();
        let dist = WeightedIndex::new(&weights).ok()?;
        Some((0..batch).map(|_| dist.sample(rng)).collect())
    }

    pub fn set_priority(&mut self, idx: usize, priority: f64) {
        if let Some(t) = self.items.get_mut(idx) {
            t.priority = priority;
        }
    }
}

/// One replay buffer per UAV count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayPool {
    capacity: usize,
    buffers: BTreeMap<usize, ReplayBuffer>,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, buffers: BTreeMap::new() }
    }

    /// Returns the buffer for `m`, creating it if needed.
    pub fn select(&mut self, m: usize) -> &mut ReplayBuffer {
        let cap = self.capacity;
        self.buffers.entry(m).or_insert_with(|| ReplayBuffer::new(cap))
    }

    pub fn buffer(&self, m: usize) -> Option<&ReplayBuffer> {
        self.buffers.get(&m)
    }

    pub fn store(&mut self, m: usize, state: EncodedState, action: AgentAction) {
        self.select(m).push(state, action);
    }

    /// Sizes of all buffers keyed by UAV count.
    pub fn sizes(&self) -> BTreeMap<usize, usize> {
        self.buffers.iter().map(|(&m, b)| (m, b.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item(tag: f64) -> (EncodedState, AgentAction) {
        (
            EncodedState { data_norm: tag, cycles_norm: 0.0, gains: vec![] },
            AgentAction { association: 0, fraction: 0.5 },
        )
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        for t in [1.0, 2.0, 3.0] {
            let (s, a) = item(t);
            b.push(s, a);
        }
        let tags: Vec<f64> = b.iter().map(|t| t.state.data_norm).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
    }

    #[test]
    fn new_items_get_max_priority() {
        let mut b = ReplayBuffer::new(4);
        let (s, a) = item(0.0);
        b.push(s.clone(), a);
        assert_eq!(b.get(0).unwrap().priority, 1.0);
        b.set_priority(0, 7.5);
        b.push(s, a);
        assert_eq!(b.get(1).unwrap().priority, 7.5);
    }

    #[test]
    fn buffers_are_isolated() {
        let mut p = ReplayPool::new(8);
        let (s, a) = item(0.0);
        p.store(2, s.clone(), a);
        p.store(3, s.clone(), a);
        p.store(3, s, a);
        assert_eq!(p.buffer(2).unwrap().len(), 1);
        assert_eq!(p.buffer(3).unwrap().len(), 2);
    }

    #[test]
    fn dominant_priority_dominates() {
        let mut b = ReplayBuffer::new(10);
        for _ in 0..10 {
            let (s, a) = item(0.0);
            b.push(s, a);
        }
        b.set_priority(3, 1e6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = b.sample(1000, 1.0, &mut rng).unwrap();
        assert!(draws.iter().filter(|&&i| i == 3).count() > 990);
        assert!(ReplayBuffer::new(3).sample(4, 0.6, &mut rng).is_none());
    }
}
