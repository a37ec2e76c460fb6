//! Discriminators `W_j` that predict each `k_j` from its behavior feature,
//! their range-regularized loss, and the diversity reward built on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcapprox::{adaptive_update, AdamState, Activation, MlpSpec, ParamSet};
use crate::kspace::{AugmentedState, FeatureMap};
use crate::sac::ReplayBuffer;

/// Default `epsilon` in the range term of the loss.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Default floor `delta` on `|W - k|` inside the log of the diversity reward.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EpsilonConfig(f64);

impl EpsilonConfig {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps.is_finite() {
            Ok(Self(eps))
        } else {
            Err(Error::config(format!("epsilon must be positive, got {eps}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self(DEFAULT_EPSILON)
    }
}

impl TryFrom<f64> for EpsilonConfig {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EpsilonConfig> for f64 {
    fn from(e: EpsilonConfig) -> f64 {
        e.0
    }
}

/// Range-regularized loss on predictions alone:
/// `mean (p - k)^2 + 1 / (|max p - min p| + eps)`.
pub fn batch_loss(preds: &[f64], targets: &[f64], eps: f64) -> f64 {
    assert!(!preds.is_empty() && preds.len() == targets.len());
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, k)| (p - k) * (p - k))
        .sum::<f64>()
        / preds.len() as f64;
    let (lo, hi) = min_max(preds);
    mse + 1.0 / ((preds[hi] - preds[lo]).abs() + eps)
}

/// Indices of the first minimum and first maximum.
fn min_max(v: &[f64]) -> (usize, usize) {
    let (mut lo, mut hi) = (0, 0);
    for (i, x) in v.iter().enumerate() {
        if *x < v[lo] {
            lo = i;
        }
        if *x > v[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Gradient of [`batch_loss`] with respect to the predictions.
pub fn batch_loss_pred_grad(preds: &[f64], targets: &[f64], eps: f64) -> Vec<f64> {
    let n = preds.len() as f64;
    let mut g: Vec<f64> = preds
        .iter()
        .zip(targets)
        .map(|(p, k)| 2.0 * (p - k) / n)
        .collect();
    let (lo, hi) = min_max(preds);
    if lo != hi {
        let r = preds[hi] - preds[lo];
        let d = -1.0 / ((r + eps) * (r + eps));
        g[hi] += d;
        g[lo] -= d;
    }
    g
}

/// `(1/m) sum_j -ln(max(delta, |err_j|))` for per-feature errors `W_j - k_j`.
pub fn diversity_from_errors(errors: &[f64], delta: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().map(|e| -e.abs().max(delta).ln()).sum::<f64>() / errors.len() as f64
}

/// One scalar-input, sigmoid-output network.
#[derive(Debug, Clone)]
pub struct Discriminator {
    spec: MlpSpec,
    params: ParamSet,
    /// State coordinate this discriminator reads.
    pub feature_index: usize,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(feature_index: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::with_hidden(1, hidden, 1, Activation::Sigmoid)?;
        let mut params = spec.init(rng);
        // Start from a constant 0.5 output. A randomly signed output layer can
        // begin anti-correlated with k, and the range term then blocks the
        // sign flip (it would pass through zero spread).
        let last = hidden.last().copied().unwrap_or(1) + 1;
        let n = params.len();
        params.as_mut_slice()[n - last..].fill(0.0);
        Ok(Self {
            spec,
            params,
            feature_index,
        })
    }

    pub fn zeroed(feature_index: usize, hidden: &[usize]) -> Result<Self> {
        let spec = MlpSpec::with_hidden(1, hidden, 1, Activation::Sigmoid)?;
        Ok(Self {
            params: spec.zeros(),
            spec,
            feature_index,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn predict(&self, s_i: f64) -> f64 {
        self.predict_batch(&[s_i])[0]
    }

    pub fn predict_batch(&self, inputs: &[f64]) -> Vec<f64> {
        self.spec
            .forward_batch(self.params.as_slice(), inputs, inputs.len())
            .expect("scalar-input discriminator")
            .output()
            .to_vec()
    }

    /// Loss on `(inputs, targets)` under `params` and its parameter gradient.
    pub fn loss_and_grad(&self, params: &[f64], inputs: &[f64], targets: &[f64], eps: f64) -> (f64, Vec<f64>) {
        let tape = self
            .spec
            .forward_batch(params, inputs, inputs.len())
            .expect("scalar-input discriminator");
        let preds = tape.output();
        let loss = batch_loss(preds, targets, eps);
        let g = batch_loss_pred_grad(preds, targets, eps);
        (loss, self.spec.backward(params, &tape, &g).param_grad)
    }
}

/// Split of a loss evaluation into its two terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscLoss {
    pub total: f64,
    pub mse: f64,
    pub range: f64,
}

/// All `m` discriminators with their optimizers.
#[derive(Debug, Clone)]
pub struct DiscriminatorSet {
    map: FeatureMap,
    discs: Vec<Discriminator>,
    opts: Vec<AdamState>,
    pub eps: EpsilonConfig,
    pub lr: f64,
    pub batch_size: usize,
}

impl DiscriminatorSet {
    pub fn new<R: Rng + ?Sized>(
        map: FeatureMap,
        hidden: &[usize],
        eps: EpsilonConfig,
        lr: f64,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let discs = map
            .entries()
            .iter()
            .map(|e| Discriminator::new(e.state_index, hidden, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(map, discs, eps, lr, batch_size))
    }

    pub fn from_parts(map: FeatureMap, discs: Vec<Discriminator>, eps: EpsilonConfig, lr: f64, batch_size: usize) -> Self {
        let opts = discs.iter().map(|d| AdamState::new(d.params.len())).collect();
        Self {
            map,
            discs,
            opts,
            eps,
            lr,
            batch_size,
        }
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn discriminators(&self) -> &[Discriminator] {
        &self.discs
    }

    pub fn discriminators_mut(&mut self) -> &mut [Discriminator] {
        &mut self.discs
    }

    pub fn m(&self) -> usize {
        self.discs.len()
    }

    /// `W_j(s_{i_j})` for every `j`, reading features from an environment state.
    pub fn predictions(&self, env_state: &[f64]) -> Vec<f64> {
        self.discs
            .iter()
            .map(|d| d.predict(env_state[d.feature_index]))
            .collect()
    }

    /// Diversity reward for environment state `env_state` under target `k`.
    pub fn reward_for(&self, env_state: &[f64], k: &[f64], delta: f64) -> f64 {
        let errors: Vec<f64> = self
            .predictions(env_state)
            .iter()
            .zip(k)
            .map(|(w, k)| w - k)
            .collect();
        diversity_from_errors(&errors, delta)
    }

    /// One adaptive step for discriminator `j` on explicit pairs.
    pub fn step_on(&mut self, j: usize, inputs: &[f64], targets: &[f64]) -> DiscLoss {
        let d = &self.discs[j];
        let (total, g) = d.loss_and_grad(d.params.as_slice(), inputs, targets, self.eps.value());
        let preds = d.predict_batch(inputs);
        let mse = preds.iter().zip(targets).map(|(p, k)| (p - k) * (p - k)).sum::<f64>() / preds.len() as f64;
        adaptive_update(self.discs[j].params.as_mut_slice(), &g, &mut self.opts[j], self.lr);
        DiscLoss {
            total,
            mse,
            range: total - mse,
        }
    }

    /// Fits every discriminator toward the increasing map `s -> (s + 1) / 2`
    /// on uniform inputs over the normalized range `[-1, 1]`, then resets the
    /// optimizer state. Breaks the sign symmetry of the objective so the
    /// learned `k -> s` mapping comes out increasing.
    pub fn orient_increasing<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        let n = self.batch_size.max(2);
        for _ in 0..steps {
            let inputs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let targets: Vec<f64> = inputs.iter().map(|s| (s + 1.0) / 2.0).collect();
            for j in 0..self.m() {
                self.step_on(j, &inputs, &targets);
            }
        }
        for (o, d) in self.opts.iter_mut().zip(&self.discs) {
            *o = AdamState::new(d.params.len());
        }
    }

    /// Samples one batch from `buffer` and steps every discriminator. Inputs
    /// are the mapped features of each transition's next state; targets are
    /// the `k` stored with it. `None` when the buffer is short of a batch.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Option<Vec<DiscLoss>> {
        if buffer.len() < self.batch_size || self.batch_size == 0 {
            return None;
        }
        let batch = buffer.sample(self.batch_size, rng);
        let sd = buffer.state_dim();
        let m = self.m();
        let n_env = sd - m;
        let mut losses = Vec::with_capacity(m);
        for j in 0..m {
            let fi = self.discs[j].feature_index;
            let inputs: Vec<f64> = (0..batch.size).map(|b| batch.next_states[b * sd + fi]).collect();
            let targets: Vec<f64> = (0..batch.size).map(|b| batch.states[b * sd + n_env + j]).collect();
            losses.push(self.step_on(j, &inputs, &targets));
        }
        Some(losses)
    }
}

/// Diversity reward of an augmented state, reading `k` from the state itself.
pub fn diversity_reward(discs: &DiscriminatorSet, s: &AugmentedState, delta: f64) -> f64 {
    discs.reward_for(s.env_state(), s.k(), delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::check_gradient;
    use crate::kspace::{augment_state, BehaviorOversightVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn worked_losses() {
        assert!((batch_loss(&[0.0, 1.0], &[0.0, 1.0], 1e-3) - 1.0 / 1.001).abs() < 1e-12);
        assert!((batch_loss(&[0.5, 0.5], &[0.5, 0.5], 1e-3) - 1000.0).abs() < 1e-9);
        let expect = 0.1 + 1.0 / 0.401;
        assert!((batch_loss(&[0.2, 0.6], &[0.0, 1.0], 1e-3) - expect).abs() < 1e-12);
        assert!((expect - 2.594).abs() < 1e-3);
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity_from_errors(&[1.0, -1.0], 1e-3), 0.0);
        let r = diversity_from_errors(&[(-1.0f64).exp(), -(-2.0f64).exp()], 1e-3);
        assert!((r - 1.5).abs() < 1e-12);
        assert!((diversity_from_errors(&[0.0], 1e-3) - 1000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_net_predicts_half() {
        let d = Discriminator::zeroed(0, &[8, 8]).unwrap();
        assert_eq!(d.predict(3.7), 0.5);
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(EpsilonConfig::new(0.0).is_err());
        assert!(EpsilonConfig::new(-1.0).is_err());
        assert!(serde_json::from_str::<EpsilonConfig>("0.0").is_err());
        assert_eq!(serde_json::from_str::<EpsilonConfig>("0.01").unwrap().value(), 0.01);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Discriminator::new(0, &[16, 16], &mut rng).unwrap();
        *d.params_mut() = d.spec().init(&mut rng);
        let inputs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let p = d.params().as_slice();
        let (_, g) = d.loss_and_grad(p, &inputs, &targets, 1e-3);
        let r = check_gradient(p, &g, 1e-4, |q| d.loss_and_grad(q, &inputs, &targets, 1e-3).0);
        assert!(r.max_abs_rel_error < 1e-3, "{}", r.max_abs_rel_error);
    }

    #[test]
    fn orientation_gives_increasing_predictions() {
        let map = FeatureMap::from_pairs(&[(0, "a"), (1, "b")]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = DiscriminatorSet::new(map, &[64, 64], EpsilonConfig::default(), 3e-3, 128, &mut rng).unwrap();
        set.orient_increasing(200, &mut rng);
        for d in set.discriminators() {
            let xs: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
            let ys = d.predict_batch(&xs);
            assert!(ys.windows(2).all(|w| w[1] > w[0]), "{ys:?}");
            assert!(ys[0] < 0.15 && ys[20] > 0.85, "{ys:?}");
        }
    }

    #[test]
    fn empty_buffer_update_is_noop() {
        let map = FeatureMap::from_pairs(&[(0, "a")]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut set = DiscriminatorSet::new(map, &[8], EpsilonConfig::default(), 1e-3, 4, &mut rng).unwrap();
        let before = set.discriminators()[0].params().clone();
        assert!(set.update(&ReplayBuffer::new(2, 1, 10), &mut rng).is_none());
        assert_eq!(&before, set.discriminators()[0].params());
    }

    #[test]
    fn synthetic_identity_regression() {
        for seed in [11, 12, 13] {
            identity_regression(seed);
        }
    }

    fn identity_regression(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = FeatureMap::from_pairs(&[(0, "x")]).unwrap();
        let mut set = DiscriminatorSet::new(map, &[64, 64], EpsilonConfig::default(), 3e-3, 256, &mut rng).unwrap();
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut last = DiscLoss::default();
        for _ in 0..2000 {
            let targets: Vec<f64> = (0..256).map(|_| rng.random::<f64>()).collect();
            let inputs: Vec<f64> = targets.iter().map(|k| k + noise.sample(&mut rng)).collect();
            last = set.step_on(0, &inputs, &targets);
        }
        assert!(last.mse < 0.01, "seed {seed} mse {}", last.mse);

        let targets: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let inputs: Vec<f64> = targets.iter().map(|k| k + noise.sample(&mut rng)).collect();
        let preds = set.discriminators()[0].predict_batch(&inputs);
        let (lo, hi) = min_max(&preds);
        assert!(preds[hi] - preds[lo] >= 0.8);
        assert!(pearson(&preds, &targets) > 0.95);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn reward_reads_k_from_augmented_state() {
        let map = FeatureMap::from_pairs(&[(1, "b")]).unwrap();
        let d = Discriminator::zeroed(1, &[4]).unwrap();
        let set = DiscriminatorSet::from_parts(map.clone(), vec![d], EpsilonConfig::default(), 1e-3, 1);
        let k = BehaviorOversightVector::new(vec![0.5]).unwrap();
        let s = augment_state(&[9.0, 2.0], &k, &map).unwrap();
        assert!((diversity_reward(&set, &s, 1e-3) - 1000f64.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn loss_lower_bound(preds in prop::collection::vec(0.0f64..=1.0, 1..40), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let targets: Vec<f64> = preds.iter().map(|_| rng.random::<f64>()).collect();
            let eps = 1e-3;
            prop_assert!(batch_loss(&preds, &targets, eps) >= 1.0 / (1.0 + eps) - 1e-12);
        }

        #[test]
        fn wider_spread_never_costs_more(a in 0.0f64..0.5, spread1 in 0.0f64..0.5, extra in 0.0f64..0.5) {
            // identical per-sample errors, different spreads
            let spread2 = spread1 + extra;
            let p1 = [a, a + spread1];
            let p2 = [a, a + spread2];
            let t1 = [a + 0.1, a + spread1 + 0.1];
            let t2 = [a + 0.1, a + spread2 + 0.1];
            prop_assert!(batch_loss(&p2, &t2, 1e-3) <= batch_loss(&p1, &t1, 1e-3) + 1e-12);
        }

        #[test]
        fn diversity_is_bounded(errs in prop::collection::vec(-1.0f64..=1.0, 1..6)) {
            let r = diversity_from_errors(&errs, 1e-3);
            prop_assert!(r >= 0.0 && r <= -(1e-3f64).ln() + 1e-12);
        }
    }
}
