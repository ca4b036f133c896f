use super::features::featurize;
use super::nn::Mlp;
use crate::controller::{Proposal, Propose};
use crate::environment::Observation;
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        NetworkShape { actor_hidden: vec![1000, 1000, 1000], critic_hidden: vec![64] }
    }
}

/// Output-layer gain of the actor; small so the initial policy is close to
/// uniform.
const ACTOR_OUTPUT_GAIN: f64 = 0.01;
const CRITIC_OUTPUT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("state has {got} features, network expects {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("no action is allowed")]
    NothingAllowed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, n_actions: usize, shape: &NetworkShape, rng: &mut R) -> Self {
        let mut a = vec![input_dim];
        a.extend(&shape.actor_hidden);
        a.push(n_actions);
        let mut c = vec![input_dim];
        c.extend(&shape.critic_hidden);
        c.push(1);
        PolicyParams { actor: Mlp::new(&a, ACTOR_OUTPUT_GAIN, rng), critic: Mlp::new(&c, CRITIC_OUTPUT_GAIN, rng) }
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    fn check(&self, state: &[f64]) -> Result<Array2<f64>, PolicyError> {
        if state.len() != self.input_dim() {
            return Err(PolicyError::InputDim { got: state.len(), expected: self.input_dim() });
        }
        Ok(Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row shape"))
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let x = self.check(state)?;
        let out = self.actor.forward(x.view()).row(0).to_vec();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteLogits);
        }
        Ok(out)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, PolicyError> {
        let x = self.check(state)?;
        Ok(self.critic.forward(x.view())[[0, 0]])
    }

    /// `(action, log π(action), V(state))`. `Sample` draws by the
    /// Gumbel-max trick.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], mode: ActMode, rng: &mut R) -> Result<(usize, f64, f64), PolicyError> {
        let logits = self.logits(state)?;
        let lp = log_softmax(ArrayView1::from(&logits));
        let index = match mode {
            ActMode::Greedy => argmax(&logits),
            ActMode::Sample => gumbel_max(&logits, rng),
        };
        Ok((index, lp[index], self.value(state)?))
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(z: ArrayView1<f64>) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// First index of the maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Standard Gumbel draw `−ln(−ln U)`, `U ∈ (0, 1)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

pub fn gumbel_max<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let perturbed: Vec<f64> = logits.iter().map(|&z| z + gumbel(rng)).collect();
    argmax(&perturbed)
}

/// Up to `k` allowed indices in decreasing order of `scores`, ties to the
/// lower index.
pub fn top_k(scores: &[f64], allowed: &[bool], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| allowed[i]).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Ranks candidates with a policy: plain top-k of the logits, or top-k of
/// Gumbel-perturbed logits (sampling without replacement) for exploration.
pub struct PolicyProposer<'a> {
    pub params: &'a PolicyParams,
    pub explore: Option<ChaCha8Rng>,
}

impl<'a> PolicyProposer<'a> {
    pub fn greedy(params: &'a PolicyParams) -> Self {
        PolicyProposer { params, explore: None }
    }

    pub fn exploring(params: &'a PolicyParams, rng: ChaCha8Rng) -> Self {
        PolicyProposer { params, explore: Some(rng) }
    }
}

impl Propose for PolicyProposer<'_> {
    fn propose(&mut self, obs: &Observation, allowed: &[bool], k: usize) -> Proposal {
        let state = featurize(obs);
        let logits = match self.params.logits(&state) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("policy unavailable ({e}); proposing nothing");
                return Proposal { indices: vec![], log_probs: None, value: None, state: None };
            }
        };
        let scores: Vec<f64> = match &mut self.explore {
            Some(rng) => logits.iter().map(|&z| z + gumbel(rng)).collect(),
            None => logits.clone(),
        };
        let indices = top_k(&scores, allowed, k);
        let value = self.params.value(&state).ok();
        Proposal { indices, log_probs: Some(log_softmax(ArrayView1::from(&logits))), value, state: Some(state) }
    }
}
