//! Synthetic desk-scale datasets with known generating labels.
//!
//! * `clusters`: one Gaussian blob per class. Each class owns a few signal
//!   features whose mean is raised for its members; the remaining features
//!   are zero-mean noise shared by all classes.
//! * `sparse_text`: bag-of-words documents drawn from per-class multinomials
//!   over a vocabulary, where each class boosts its own block of topic words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseVector, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub classes: usize,
    pub per_class: usize,
    pub signal_dims: usize,
    /// Mean of a class's own signal features.
    pub signal: f64,
    /// Standard deviation of every signal feature.
    pub spread: f64,
    pub noise_dims: usize,
    pub noise_sd: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            classes: 4,
            per_class: 100,
            signal_dims: 2,
            signal: 1.0,
            spread: 0.3,
            noise_dims: 40,
            noise_sd: 0.7,
        }
    }
}

impl ClusterParams {
    pub fn feature_dim(&self) -> usize {
        self.classes * self.signal_dims + self.noise_dims
    }
}

/// Balanced labeled dataset of `classes × per_class` examples in random
/// order.
pub fn clusters(params: &ClusterParams, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = shuffled_labels(params.classes, params.per_class, &mut rng);
    let signal_noise = Normal::new(0.0, params.spread).expect("finite spread");
    let noise = Normal::new(0.0, params.noise_sd).expect("finite noise sd");
    let dim = params.feature_dim();
    let examples = labels
        .iter()
        .map(|&y| {
            let mut v = vec![0.0; dim];
            for (j, slot) in v.iter_mut().enumerate().take(params.classes * params.signal_dims) {
                let own = j / params.signal_dims == y;
                *slot = signal_noise.sample(&mut rng) + if own { params.signal } else { 0.0 };
            }
            for slot in v.iter_mut().skip(params.classes * params.signal_dims) {
                *slot = noise.sample(&mut rng);
            }
            SparseVector::from_dense(&v)
        })
        .collect();
    Dataset::new(examples, Some(labels), dim).expect("generated data is consistent")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextParams {
    pub classes: usize,
    pub per_class: usize,
    pub vocab: usize,
    /// Size of each class's topic-word block.
    pub topic_words: usize,
    pub doc_len: usize,
    /// Probability that a token comes from the class's topic block rather
    /// than the whole vocabulary.
    pub topic_mass: f64,
}

impl Default for TextParams {
    fn default() -> Self {
        TextParams {
            classes: 4,
            per_class: 100,
            vocab: 400,
            topic_words: 20,
            doc_len: 40,
            topic_mass: 0.25,
        }
    }
}

/// Balanced labeled bag-of-words dataset with L2-normalized term counts.
pub fn sparse_text(params: &TextParams, seed: u64) -> Result<Dataset> {
    if params.classes * params.topic_words > params.vocab {
        return Err(Error::Config(format!(
            "{} classes × {} topic words exceed the vocabulary of {}",
            params.classes, params.topic_words, params.vocab
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = shuffled_labels(params.classes, params.per_class, &mut rng);
    let examples = labels
        .iter()
        .map(|&y| {
            let mut counts = vec![0.0f64; params.vocab];
            for _ in 0..params.doc_len {
                let word = if rng.gen_bool(params.topic_mass) {
                    y * params.topic_words + rng.gen_range(0..params.topic_words)
                } else {
                    rng.gen_range(0..params.vocab)
                };
                counts[word] += 1.0;
            }
            let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 {
                counts.iter_mut().for_each(|c| *c /= norm);
            }
            SparseVector::from_dense(&counts)
        })
        .collect();
    Dataset::new(examples, Some(labels), params.vocab)
}

fn shuffled_labels(classes: usize, per_class: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..classes).flat_map(|y| std::iter::repeat_n(y, per_class)).collect();
    labels.shuffle(rng);
    labels
}

/// Per-class split: `labeled_per_class` and `unlabeled_per_class` examples
/// of every class go to the labeled and unlabeled parts, the rest to test.
pub fn stratified_split(
    data: &Dataset,
    classes: usize,
    labeled_per_class: usize,
    unlabeled_per_class: usize,
    seed: u64,
) -> Result<Split> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Config("stratified split needs labels".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut test = Vec::new();
    for y in 0..classes {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == y).collect();
        if idx.len() < labeled_per_class + unlabeled_per_class {
            return Err(Error::TooSmall(format!(
                "class {y} has {} examples, need {}",
                idx.len(),
                labeled_per_class + unlabeled_per_class
            )));
        }
        idx.shuffle(&mut rng);
        labeled.extend_from_slice(&idx[..labeled_per_class]);
        unlabeled.extend_from_slice(&idx[labeled_per_class..labeled_per_class + unlabeled_per_class]);
        test.extend_from_slice(&idx[labeled_per_class + unlabeled_per_class..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        labeled: data.subset(&labeled),
        unlabeled_gold: unlabeled.iter().map(|&i| labels[i]).collect(),
        unlabeled: data.subset(&unlabeled).without_labels(),
        test: data.subset(&test),
    })
}

/// Picks `size` indices from `labels`, cycling over classes in a shuffled
/// order so every class is represented once `size ≥ classes`.
pub fn stratified_sample(labels: &[usize], classes: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        pools[y].push(i);
    }
    for p in &mut pools {
        p.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.shuffle(&mut rng);
    let mut picked = Vec::with_capacity(size);
    let mut cursor = vec![0usize; classes];
    while picked.len() < size.min(labels.len()) {
        for &y in &order {
            if picked.len() == size {
                break;
            }
            if cursor[y] < pools[y].len() {
                picked.push(pools[y][cursor[y]]);
                cursor[y] += 1;
            }
        }
    }
    picked.sort_unstable();
    picked
}
