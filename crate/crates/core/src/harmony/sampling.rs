use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{HarmonyError, VoiceRanges};

/// Note-token sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Softmax temperature. `0.0` selects greedy (argmax) decoding.
    pub temperature: f64,
    /// Nucleus mass in (0, 1].
    pub top_p: f64,
    pub seed: u64,
    /// Voice ranges that bound the candidate set.
    pub ranges: VoiceRanges,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { temperature: 1.0, top_p: 1.0, seed: 0, ranges: VoiceRanges::default() }
    }
}

impl SamplerConfig {
    pub fn greedy() -> Self {
        SamplerConfig { temperature: 0.0, ..Default::default() }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn validate(&self) -> Result<(), HarmonyError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(HarmonyError::InvalidConfig(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(HarmonyError::InvalidConfig(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

/// Picks an index from masked logits (`-inf` = masked). Returns the index
/// and the distribution it was drawn from; masked entries are exactly 0.
///
/// Greedy ties resolve to the lowest index, i.e. the lowest pitch.
pub(crate) fn choose(logits: &[f64], cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> (usize, Vec<f64>) {
    let allowed: Vec<usize> = (0..logits.len()).filter(|&i| logits[i] > f64::NEG_INFINITY).collect();
    assert!(!allowed.is_empty(), "sampling over an empty candidate set");

    if cfg.is_greedy() {
        let mut best = allowed[0];
        for &i in &allowed[1..] {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        let mut probs = vec![0.0; logits.len()];
        probs[best] = 1.0;
        return (best, probs);
    }

    let max = allowed.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| ((l - max) / cfg.temperature).exp()).collect();
    let total: f64 = allowed.iter().map(|&i| probs[i]).sum();
    for p in &mut probs {
        *p /= total;
    }

    if cfg.top_p < 1.0 {
        let mut order = allowed.clone();
        // stable: equal probabilities keep ascending index order
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
        let mut cum = 0.0;
        let mut keep = order.len();
        for (n, &i) in order.iter().enumerate() {
            cum += probs[i];
            if cum >= cfg.top_p {
                keep = n + 1;
                break;
            }
        }
        for &i in &order[keep..] {
            probs[i] = 0.0;
        }
        let kept: f64 = order[..keep].iter().map(|&i| probs[i]).sum();
        for p in &mut probs {
            *p /= kept;
        }
    }

    let u: f64 = rng.gen::<f64>();
    let mut cum = 0.0;
    let mut chosen = None;
    for &i in &allowed {
        if probs[i] == 0.0 {
            continue;
        }
        chosen = Some(i);
        cum += probs[i];
        if u < cum {
            break;
        }
    }
    (chosen.expect("at least one candidate has mass"), probs)
}
