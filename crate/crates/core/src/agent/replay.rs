use std::sync::Arc;

use rand::Rng;

use super::{AgentError, Result};
use crate::render::StateImage;

/// One interaction. Images are shared between consecutive transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Arc<StateImage>,
    pub a: usize,
    pub r: i32,
    pub s_next: Arc<StateImage>,
}

/// Fixed-capacity ring; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayPool {
    capacity: usize,
    ring: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayPool { capacity, ring: Vec::new(), next: 0, inserted: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.ring.len() < self.capacity {
            self.ring.push(t);
        } else {
            self.ring[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions pushed since creation, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.ring[i]
    }

    /// `n` uniform draws with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.ring.is_empty() {
            return Err(AgentError::EmptyPool);
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.ring.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.ring[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(a: usize) -> Transition {
        let img = Arc::new(StateImage::filled(2, 0));
        Transition { s: img.clone(), a, r: 1, s_next: img }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut pool = ReplayPool::new(3);
        for a in 0..5 {
            pool.push(t(a));
        }
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.inserted(), 5);
        let mut held: Vec<_> = (0..3).map(|i| pool.get(i).a).collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
    }

    #[test]
    fn degenerate_pool() {
        let mut pool = ReplayPool::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(pool.sample(4, &mut rng), Err(AgentError::EmptyPool)));
        pool.push(t(7));
        let batch = pool.sample(5, &mut rng).unwrap();
        assert_eq!(batch.len(), 5);
        assert!(batch.iter().all(|x| x.a == 7));
    }

    #[test]
    fn uniform_chi_square() {
        let mut pool = ReplayPool::new(64);
        for a in 0..64 {
            pool.push(t(a % 33));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let mut counts = [0f64; 64];
        for i in pool.sample_indices(draws, &mut rng).unwrap() {
            counts[i] += 1.0;
        }
        let e = draws as f64 / 64.0;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        // Upper 1% point of chi-square with 63 degrees of freedom.
        assert!(chi2 < 92.01, "chi2 = {chi2}");
    }
}
