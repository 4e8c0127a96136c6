use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifest::{Label, Manifest, Sample, Split};

/// `(anchor, positive, negative)`: the positive shares the anchor's label, the negative
/// does not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<'a> {
    pub anchor: &'a Sample,
    pub positive: &'a Sample,
    pub negative: &'a Sample,
}

/// Manifest positions of a triplet's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletIndex {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// TRAIN-split manifest positions grouped by label.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    train: Vec<usize>,
    by_label: [Vec<usize>; 2],
}

impl TripletSampler {
    pub fn new(manifest: &Manifest) -> Result<Self> {
        let mut by_label = [Vec::new(), Vec::new()];
        let mut train = Vec::new();
        for (i, s) in manifest.samples.iter().enumerate() {
            if s.split == Split::Train {
                train.push(i);
                by_label[s.label as usize].push(i);
            }
        }
        for label in Label::ALL {
            let found = by_label[label as usize].len();
            // each class must supply an anchor plus a distinct positive
            if found < 2 {
                return Err(Error::InsufficientClass {
                    label: label.name(),
                    needed: 2,
                    found,
                });
            }
        }
        Ok(TripletSampler { train, by_label })
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    /// Anchor uniform over all TRAIN samples; positive uniform over the anchor's class
    /// minus the anchor; negative uniform over the other class.
    pub fn draw<R: Rng + ?Sized>(&self, manifest: &Manifest, rng: &mut R) -> TripletIndex {
        let anchor = *self.train.choose(rng).expect("non-empty by construction");
        let label = manifest.samples[anchor].label;
        let same = &self.by_label[label as usize];
        let positive = loop {
            let p = *same.choose(rng).expect("non-empty by construction");
            if p != anchor {
                break p;
            }
        };
        let negative = *self.by_label[label.other() as usize]
            .choose(rng)
            .expect("non-empty by construction");
        TripletIndex {
            anchor,
            positive,
            negative,
        }
    }
}

pub fn sample_triplet_indices(
    manifest: &Manifest,
    count: usize,
    seed: u64,
) -> Result<Vec<TripletIndex>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let sampler = TripletSampler::new(manifest)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.draw(manifest, &mut rng)).collect())
}

pub fn sample_triplets(manifest: &Manifest, count: usize, seed: u64) -> Result<Vec<Triplet<'_>>> {
    Ok(sample_triplet_indices(manifest, count, seed)?
        .into_iter()
        .map(|t| Triplet {
            anchor: &manifest.samples[t.anchor],
            positive: &manifest.samples[t.positive],
            negative: &manifest.samples[t.negative],
        })
        .collect())
}
