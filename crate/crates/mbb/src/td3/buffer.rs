use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// One off-policy transition. `reward` is the state-indexed reward of the
/// state acted from, with the discounted arrival reward folded in when `s2`
/// is terminal, so `y = r + γ(1−done)·(bootstrap)` reproduces the return
/// convention Σ γ^t r(s_t) without a special terminal case.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

/// Uniform-replay ring buffer; once full, new transitions overwrite the
/// oldest. Sampling draws only from filled entries.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    slots: Vec<Transition>,
    capacity: usize,
    /// Total insertions ever; `min(inserted, capacity)` entries are live.
    inserted: usize,
}

/// Column-major view of a sampled minibatch, shaped for batched net passes.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Vec<f64>,
    pub s2: Array2<f64>,
    pub done: Vec<bool>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer { slots: Vec::with_capacity(capacity.min(1 << 20)), capacity, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.inserted.min(self.capacity)
    }

    pub fn is_empty(&self) -> bool {
        self.inserted == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.inserted % self.capacity] = t;
        }
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.slots.iter()
    }

    /// Uniform sample with replacement over the filled entries.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha12Rng) -> TransitionBatch {
        let n = self.len();
        assert!(n > 0, "cannot sample from an empty replay buffer");
        let obs_dim = self.slots[0].s.len();
        let act_dim = self.slots[0].a.len();
        let mut s = Array2::zeros((batch, obs_dim));
        let mut a = Array2::zeros((batch, act_dim));
        let mut r = Vec::with_capacity(batch);
        let mut s2 = Array2::zeros((batch, obs_dim));
        let mut done = Vec::with_capacity(batch);
        for row in 0..batch {
            let t = &self.slots[rng.random_range(0..n)];
            for (j, &x) in t.s.iter().enumerate() {
                s[[row, j]] = x;
            }
            for (j, &x) in t.a.iter().enumerate() {
                a[[row, j]] = x;
            }
            for (j, &x) in t.s2.iter().enumerate() {
                s2[[row, j]] = x;
            }
            r.push(t.r);
            done.push(t.done);
        }
        TransitionBatch { s, a, r, s2, done }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(tag: f64) -> Transition {
        Transition { s: vec![tag, 0.0], a: vec![0.0], r: tag, s2: vec![tag, 1.0], done: false }
    }

    #[test]
    fn ring_overwrites_oldest_entries() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..6 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 4);
        let mut tags: Vec<f64> = buf.iter().map(|x| x.r).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn sampling_draws_only_filled_entries() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..3 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let batch = buf.sample(64, &mut rng);
        assert_eq!(batch.len(), 64);
        for &r in &batch.r {
            assert!(r == 0.0 || r == 1.0 || r == 2.0, "sampled unfilled slot: {r}");
        }
    }

    #[test]
    fn partial_fill_reports_length() {
        let mut buf = ReplayBuffer::new(10);
        assert!(buf.is_empty());
        buf.push(t(0.0));
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.capacity(), 10);
    }

    #[test]
    fn batch_rows_mirror_source_transition() {
        let mut buf = ReplayBuffer::new(8);
        buf.push(Transition {
            s: vec![1.0, 2.0],
            a: vec![0.5],
            r: -3.0,
            s2: vec![4.0, 5.0],
            done: true,
        });
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let b = buf.sample(2, &mut rng);
        for row in 0..2 {
            assert_eq!(b.s[[row, 0]], 1.0);
            assert_eq!(b.s[[row, 1]], 2.0);
            assert_eq!(b.a[[row, 0]], 0.5);
            assert_eq!(b.r[row], -3.0);
            assert_eq!(b.s2[[row, 1]], 5.0);
            assert!(b.done[row]);
        }
    }
}
