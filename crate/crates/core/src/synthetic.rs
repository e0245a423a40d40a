//! Seeded synthetic data for smoke tests and demos: Gaussian feature
//! sequences and key-phrase corpora with known category sizes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{Language, RawTweet};
use crate::features::FeatureSequence;
use crate::tensor::Tensor;
use crate::trainer::Example;

/// `n` sequences of `len` rows in `R^dim`, half per class. Every row of a
/// class-`c` sequence is `(2c − 1)·shift·u + ε` with `u` the normalised
/// all-ones direction and `ε ~ N(0, I)`. Ids are `{prefix}{index:05}`.
pub fn gaussian_sequences(n: usize, dim: usize, len: usize, shift: f32, seed: u64, prefix: &str) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = 1.0 / (dim as f32).sqrt();
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let centre = (2.0 * label as f32 - 1.0) * shift * unit;
            let data = (0..len * dim)
                .map(|_| {
                    let e: f32 = StandardNormal.sample(&mut rng);
                    centre + e
                })
                .collect::<Vec<f32>>();
            let matrix = Tensor::new(vec![len, dim], data).expect("shape matches data");
            Example::new(format!("{prefix}{i:05}"), FeatureSequence::new(matrix), label)
        })
        .collect()
}

const FILLER: [&str; 16] = [
    "the", "people", "today", "country", "news", "really", "think", "never", "city", "women", "vote", "night", "work",
    "school", "again", "world",
];

const IMMIGRATION: [&str; 4] = ["build the wall", "build that wall", "maga", "illegal aliens"];

/// `per_category` tweets in each of the six key-phrase × label categories,
/// shuffled. Each text has 4 to 14 filler words around at most one phrase.
pub fn phrase_corpus(per_category: usize, seed: u64) -> Vec<RawTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0f64, 2.0).expect("valid sd");
    let mut out = Vec::with_capacity(6 * per_category);
    for family in 0..3 {
        for label in 0..2u8 {
            for _ in 0..per_category {
                let words = (9.0 + jitter.sample(&mut rng)).clamp(4.0, 14.0) as usize;
                let mut parts: Vec<&str> = (0..words).map(|_| *FILLER.choose(&mut rng).expect("nonempty")).collect();
                let at = rng.gen_range(0..=parts.len());
                match family {
                    1 => parts.insert(at, IMMIGRATION.choose(&mut rng).expect("nonempty")),
                    2 => parts.insert(at, "bitch"),
                    _ => {}
                }
                out.push((parts.join(" "), label));
            }
        }
    }
    out.shuffle(&mut rng);
    out.into_iter()
        .enumerate()
        .map(|(i, (text, label))| RawTweet {
            id: format!("t{i:06}"),
            text,
            label,
            language: Language::En,
        })
        .collect()
}
