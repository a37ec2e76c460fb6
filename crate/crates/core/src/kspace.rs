//! Behavior oversight parameters: the user-facing `k` vector, the map from
//! `k` coordinates to the state coordinates they govern, and state
//! augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `[0, 1]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BehaviorOversightVector(Vec<f64>);

impl BehaviorOversightVector {
    /// Builds a vector, rejecting entries outside `[0, 1]` (or NaN) and the
    /// empty vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("behavior oversight vector needs m >= 1"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("k entry {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    /// Builds a vector from untrusted input (sliders, schedule files),
    /// clamping each entry into `[0, 1]`. NaN becomes 0.
    pub fn clamped(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("behavior oversight vector needs m >= 1"));
        }
        Ok(Self(
            values
                .iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        ))
    }

    pub fn uniform(m: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

impl TryFrom<Vec<f64>> for BehaviorOversightVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<BehaviorOversightVector> for Vec<f64> {
    fn from(k: BehaviorOversightVector) -> Self {
        k.0
    }
}

/// One `k_j -> s_i` assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub k_index: usize,
    pub state_index: usize,
    pub name: String,
}

/// Which environment state coordinate each `k_j` controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureEntry>", into = "Vec<FeatureEntry>")]
pub struct FeatureMap {
    entries: Vec<FeatureEntry>,
}

impl FeatureMap {
    /// Entries are sorted by `k_index`, which must be exactly `0..m`.
    pub fn new(mut entries: Vec<FeatureEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("feature map needs at least one entry"));
        }
        entries.sort_by_key(|e| e.k_index);
        for (j, e) in entries.iter().enumerate() {
            if e.k_index != j {
                return Err(Error::config(format!(
                    "feature map k indices must be 0..{}, found {}",
                    entries.len(),
                    e.k_index
                )));
            }
        }
        let mut seen: Vec<usize> = entries.iter().map(|e| e.state_index).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config(
                "feature map state indices must be distinct (one k per state coordinate)",
            ));
        }
        Ok(Self { entries })
    }

    /// Convenience constructor from `(state_index, name)` pairs in `k` order.
    pub fn from_pairs(pairs: &[(usize, &str)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .enumerate()
                .map(|(j, (i, name))| FeatureEntry {
                    k_index: j,
                    state_index: *i,
                    name: (*name).to_string(),
                })
                .collect(),
        )
    }

    pub fn m(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn state_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.state_index)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Checks the map against an environment of state dimension `n`.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.m() > n {
            return Err(Error::config(format!(
                "feature map has m = {} > n = {n}",
                self.m()
            )));
        }
        if let Some(e) = self.entries.iter().find(|e| e.state_index >= n) {
            return Err(Error::config(format!(
                "feature '{}' reads state index {} but the state has {n} coordinates",
                e.name, e.state_index
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<FeatureEntry>> for FeatureMap {
    type Error = Error;

    fn try_from(entries: Vec<FeatureEntry>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<FeatureMap> for Vec<FeatureEntry> {
    fn from(map: FeatureMap) -> Self {
        map.entries
    }
}

/// Environment state with `k` appended. Layout is `[env_state.., k..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    flat: Vec<f64>,
    n: usize,
}

impl AugmentedState {
    pub fn env_state(&self) -> &[f64] {
        &self.flat[..self.n]
    }

    pub fn k(&self) -> &[f64] {
        &self.flat[self.n..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.flat.len() - self.n
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.flat
    }

    /// Splits back into the environment state and `k`.
    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        (self.env_state().to_vec(), self.k().to_vec())
    }
}

/// Concatenates `env_state` and `k`, checking both against `map`.
pub fn augment_state(
    env_state: &[f64],
    k: &BehaviorOversightVector,
    map: &FeatureMap,
) -> Result<AugmentedState> {
    if k.len() != map.m() {
        return Err(Error::dim("augment_state (k)", map.m(), k.len()));
    }
    map.validate_for(env_state.len())?;
    let mut flat = Vec::with_capacity(env_state.len() + k.len());
    flat.extend_from_slice(env_state);
    flat.extend_from_slice(k.values());
    Ok(AugmentedState {
        flat,
        n: env_state.len(),
    })
}

/// Draws `k ~ Uniform(0, 1)^m`.
pub fn sample_k<R: Rng + ?Sized>(m: usize, rng: &mut R) -> BehaviorOversightVector {
    assert!(m >= 1, "sample_k needs m >= 1");
    BehaviorOversightVector((0..m).map(|_| rng.random::<f64>()).collect())
}

/// Picks `(s_{i_1}, .., s_{i_m})` out of the environment part of `s`.
pub fn extract_features(s: &AugmentedState, map: &FeatureMap) -> Result<Vec<f64>> {
    features_of(s.env_state(), map)
}

/// Same as [`extract_features`] on a bare environment state.
pub fn features_of(env_state: &[f64], map: &FeatureMap) -> Result<Vec<f64>> {
    map.state_indices()
        .map(|i| {
            env_state
                .get(i)
                .copied()
                .ok_or_else(|| Error::config(format!("feature index {i} out of range")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map1(i: usize) -> FeatureMap {
        FeatureMap::from_pairs(&[(i, "f")]).unwrap()
    }

    #[test]
    fn augment_concatenates() {
        let k = BehaviorOversightVector::new(vec![0.5]).unwrap();
        let s = augment_state(&[1.0, 2.0], &k, &map1(0)).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 2.0, 0.5]);
    }

    #[test]
    fn empty_k_rejected() {
        assert!(BehaviorOversightVector::new(vec![]).is_err());
        assert!(FeatureMap::new(vec![]).is_err());
    }

    #[test]
    fn walker_sized_state() {
        let map = FeatureMap::from_pairs(&[(2, "speed"), (0, "hull angle")]).unwrap();
        let k = BehaviorOversightVector::uniform(2, 0.1).unwrap();
        let s = augment_state(&[0.0; 24], &k, &map).unwrap();
        assert_eq!(s.as_slice().len(), 26);
    }

    #[test]
    fn augment_dimension_mismatch() {
        let k = BehaviorOversightVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            augment_state(&[1.0, 2.0], &k, &map1(0)),
            Err(Error::Dimension { .. })
        ));
        let k = BehaviorOversightVector::new(vec![0.5]).unwrap();
        assert!(augment_state(&[1.0, 2.0], &k, &map1(5)).is_err());
    }

    #[test]
    fn sample_k_is_seeded() {
        let a = sample_k(2, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_k(2, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(sample_k(3, &mut ChaCha8Rng::seed_from_u64(3)).len(), 3);
    }

    #[test]
    fn sample_k_mean_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean = (0..10_000).map(|_| sample_k(1, &mut rng).get(0)).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn extract_picks_coordinates() {
        let k = BehaviorOversightVector::new(vec![0.2]).unwrap();
        let s = augment_state(&[3.0, 7.0, 9.0], &k, &map1(2)).unwrap();
        assert_eq!(extract_features(&s, &map1(2)).unwrap(), vec![9.0]);
    }

    #[test]
    fn clamping_from_external_input() {
        let k = BehaviorOversightVector::clamped(&[1.4, -0.2]).unwrap();
        assert_eq!(k.values(), &[1.0, 0.0]);
        assert!(BehaviorOversightVector::new(vec![1.4]).is_err());
    }

    #[test]
    fn duplicate_state_indices_rejected() {
        assert!(FeatureMap::from_pairs(&[(1, "a"), (1, "b")]).is_err());
    }

    proptest! {
        #[test]
        fn augment_split_round_trip(
            env in prop::collection::vec(-10.0f64..10.0, 1..12),
            kv in prop::collection::vec(0.0f64..=1.0, 1..4),
        ) {
            prop_assume!(kv.len() <= env.len());
            let map = FeatureMap::from_pairs(
                &(0..kv.len()).map(|i| (i, "f")).collect::<Vec<_>>()
            ).unwrap();
            let k = BehaviorOversightVector::new(kv.clone()).unwrap();
            let s = augment_state(&env, &k, &map).unwrap();
            let (e2, k2) = s.split();
            prop_assert_eq!(e2, env);
            prop_assert_eq!(k2, kv);
        }

        #[test]
        fn sampled_k_is_valid(seed in any::<u64>(), m in 1usize..6) {
            let k = sample_k(m, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(BehaviorOversightVector::new(k.values().to_vec()).is_ok());
        }

        #[test]
        fn extraction_is_idempotent_projection(env in prop::collection::vec(-5.0f64..5.0, 3..8)) {
            let n = env.len();
            let map = FeatureMap::from_pairs(&[(n - 1, "a"), (0, "b")]).unwrap();
            let once = features_of(&env, &map).unwrap();
            let ident = FeatureMap::from_pairs(&[(0, "a"), (1, "b")]).unwrap();
            prop_assert_eq!(features_of(&once, &ident).unwrap(), once);
        }
    }
}
