use rand::Rng;

/// Fixed-capacity ring of `(s, a, r, s', done)` transitions in flat storage.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    len: usize,
    cursor: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
}

/// A sampled minibatch, row-major per field.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub size: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    /// 1.0 where the episode truly ended (no bootstrap), else 0.0.
    pub dones: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            state_dim,
            action_dim,
            capacity,
            len: 0,
            cursor: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], reward: f64, next_state: &[f64], done: bool) {
        assert_eq!(state.len(), self.state_dim);
        assert_eq!(next_state.len(), self.state_dim);
        assert_eq!(action.len(), self.action_dim);
        let i = self.cursor;
        let (sd, ad) = (self.state_dim, self.action_dim);
        if self.len < self.capacity {
            // storage grows until the ring is full
            self.states.resize((i + 1) * sd, 0.0);
            self.next_states.resize((i + 1) * sd, 0.0);
            self.actions.resize((i + 1) * ad, 0.0);
            self.rewards.push(0.0);
            self.dones.push(0.0);
        }
        self.states[i * sd..(i + 1) * sd].copy_from_slice(state);
        self.next_states[i * sd..(i + 1) * sd].copy_from_slice(next_state);
        self.actions[i * ad..(i + 1) * ad].copy_from_slice(action);
        self.rewards[i] = reward;
        self.dones[i] = if done { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Stored state `i`, counting from the oldest retained transition.
    pub fn state(&self, i: usize) -> &[f64] {
        let slot = self.slot(i);
        &self.states[slot * self.state_dim..(slot + 1) * self.state_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        let slot = self.slot(i);
        &self.next_states[slot * self.state_dim..(slot + 1) * self.state_dim]
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[self.slot(i)]
    }

    fn slot(&self, i: usize) -> usize {
        assert!(i < self.len);
        if self.len < self.capacity {
            i
        } else {
            (self.cursor + i) % self.capacity
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        assert!(self.len > 0, "cannot sample an empty buffer");
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            size,
            states: Vec::with_capacity(size * sd),
            actions: Vec::with_capacity(size * ad),
            rewards: Vec::with_capacity(size),
            next_states: Vec::with_capacity(size * sd),
            dones: Vec::with_capacity(size),
        };
        for _ in 0..size {
            let i = rng.random_range(0..self.len);
            b.states.extend_from_slice(&self.states[i * sd..(i + 1) * sd]);
            b.actions.extend_from_slice(&self.actions[i * ad..(i + 1) * ad]);
            b.rewards.push(self.rewards[i]);
            b.next_states.extend_from_slice(&self.next_states[i * sd..(i + 1) * sd]);
            b.dones.push(self.dones[i]);
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring_evicts_oldest() {
        let cap = 10;
        let extra = 4;
        let mut buf = ReplayBuffer::new(1, 1, cap);
        for i in 0..cap + extra {
            buf.push(&[i as f64], &[0.0], i as f64, &[0.0], false);
        }
        assert_eq!(buf.len(), cap);
        let kept: Vec<f64> = (0..cap).map(|i| buf.reward(i)).collect();
        assert_eq!(kept, (extra..cap + extra).map(|i| i as f64).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = buf.sample(200, &mut rng);
        assert!(b.rewards.iter().all(|&r| r >= extra as f64));
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut buf = ReplayBuffer::new(1, 1, 4);
        for i in 0..4 {
            buf.push(&[0.0], &[0.0], i as f64, &[0.0], false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = buf.sample(40_000, &mut rng);
        for v in 0..4 {
            let n = b.rewards.iter().filter(|&&r| r == v as f64).count();
            assert!((n as f64 / 10_000.0 - 1.0).abs() < 0.05);
        }
    }
}
