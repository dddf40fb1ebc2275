use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![],
            action: vec![],
            reward: r,
            next_state: vec![],
        }
    }

    #[test]
    fn overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let mut r: Vec<f64> = b.iter().map(|x| x.reward).collect();
        r.sort_by(f64::total_cmp);
        assert_eq!(r, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_covers_all_items() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..4 {
            b.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = b.sample(400, &mut rng);
        assert_eq!(s.len(), 400);
        for i in 0..4 {
            assert!(s.iter().any(|x| x.reward == i as f64));
        }
        assert!(ReplayBuffer::new(2).sample(3, &mut rng).is_empty());
    }
}
