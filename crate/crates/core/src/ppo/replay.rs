use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

/// Additive floor on `|advantage|` so every stored transition can be drawn.
pub const PRIORITY_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub done: bool,
    pub value: f64,
    pub advantage: f64,
    pub ret: f64,
    pub priority: f64,
    /// Update round in which the transition was collected.
    pub round: u64,
}

/// Overflow transitions, sampled with probability proportional to
/// priority. Insertion order is the total order `(round, worker, step)`.
#[derive(Debug, Clone, Default)]
pub struct PrioritizedReplay {
    items: Vec<Transition>,
}

impl PrioritizedReplay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn push(&mut self, t: Transition) {
        self.items.push(t);
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        self.items.extend(ts);
    }

    /// Keeps only transitions collected in `round` or the one before.
    pub fn drop_stale(&mut self, round: u64) {
        self.items.retain(|t| t.round + 1 >= round);
    }

    /// `n` indices drawn with replacement, weight = priority.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return vec![];
        }
        let dist = WeightedIndex::new(self.items.iter().map(|t| t.priority)).expect("priorities are positive");
        (0..n).map(|_| dist.sample(rng)).collect()
    }
}

pub fn priority(advantage: f64) -> f64 {
    advantage.abs() + PRIORITY_EPS
}
