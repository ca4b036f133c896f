use crate::scenario::OpponentSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hash::{Hash, Hasher};

/// Seed offset so the opponent stream differs from other per-episode RNGs.
const OPPONENT_STREAM: u64 = 0x6f70_706f_6e65_6e74;

/// Adversary that forces tensed lines out at random times.
///
/// Each step it is eligible (budget left, own cooldown elapsed, at least
/// one target still connected) it attacks with the configured probability,
/// picking a connected target with probability proportional to `ρ + 0.01`.
#[derive(Debug, Clone)]
pub struct Opponent {
    schedule: OpponentSchedule,
    budget_left: Option<u32>,
    cooldown: u32,
    attacks: u32,
    rng: ChaCha8Rng,
}

impl Opponent {
    pub fn new(schedule: OpponentSchedule, seed: u64) -> Self {
        Opponent {
            budget_left: schedule.budget,
            schedule,
            cooldown: 0,
            attacks: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ OPPONENT_STREAM),
        }
    }

    pub fn schedule(&self) -> &OpponentSchedule {
        &self.schedule
    }

    pub fn attacks(&self) -> u32 {
        self.attacks
    }

    pub fn budget_left(&self) -> Option<u32> {
        self.budget_left
    }

    pub(super) fn tick(&mut self) {
        self.cooldown = self.cooldown.saturating_sub(1);
    }

    /// One decision. `rho` and `connected` are indexed by line id.
    pub fn act(&mut self, rho: &[f64], connected: &[bool]) -> Option<usize> {
        if self.budget_left == Some(0) || self.cooldown > 0 || self.schedule.probability <= 0.0 {
            return None;
        }
        let candidates: Vec<usize> =
            self.schedule.targets.iter().copied().filter(|&l| connected.get(l) == Some(&true)).collect();
        if candidates.is_empty() {
            return None;
        }
        if self.rng.random::<f64>() >= self.schedule.probability {
            return None;
        }
        let weights: Vec<f64> = candidates.iter().map(|&l| rho.get(l).copied().unwrap_or(0.0) + 0.01).collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        let mut chosen = *candidates.last().unwrap();
        for (&l, &w) in candidates.iter().zip(&weights) {
            if u < w {
                chosen = l;
                break;
            }
            u -= w;
        }
        if let Some(b) = self.budget_left.as_mut() {
            *b -= 1;
        }
        self.cooldown = self.schedule.cooldown;
        self.attacks += 1;
        Some(chosen)
    }

    pub(super) fn hash_state<H: Hasher>(&self, h: &mut H) {
        self.budget_left.hash(h);
        self.cooldown.hash(h);
        self.attacks.hash(h);
        self.rng.get_word_pos().hash(h);
    }
}
