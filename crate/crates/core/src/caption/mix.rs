use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ManifestRecord;
use crate::error::{Error, Result};

/// Per-source sampling probabilities, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights {
    weights: BTreeMap<String, f64>,
}

impl MixWeights {
    pub fn new<I, S>(raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut weights = BTreeMap::new();
        for (name, w) in raw {
            let name = name.into();
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("weight for {name:?} must be finite and >= 0, got {w}")));
            }
            if weights.insert(name.clone(), w).is_some() {
                return Err(Error::Config(format!("source {name:?} listed twice")));
            }
        }
        let sum: f64 = weights.values().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::Config("mix weights must have a positive sum".into()));
        }
        weights.values_mut().for_each(|w| *w /= sum);
        Ok(Self { weights })
    }

    /// 0.6 / 0.1 / 0.3 over the object, driving and action recognition sets.
    pub fn hybrid_default() -> Self {
        Self::new([("n-imagenet", 0.6), ("dsec", 0.1), ("hardvs", 0.3)]).expect("valid weights")
    }

    pub fn get(&self, source: &str) -> Option<f64> {
        self.weights.get(source).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `name=weight` pairs separated by commas.
impl FromStr for MixWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (k, v) = p
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected name=weight, got {p:?}")))?;
                let w = v
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad weight in {p:?}")))?;
                Ok((k.trim().to_string(), w))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

impl fmt::Display for MixWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixDraw {
    pub source: String,
    pub record: ManifestRecord,
}

/// `total` independent draws: a source by weight, then a record of that
/// source uniformly with replacement.
pub fn build_training_mix(
    sources: &BTreeMap<String, Vec<ManifestRecord>>,
    weights: &MixWeights,
    total: usize,
    seed: u64,
) -> Result<Vec<MixDraw>> {
    if total == 0 {
        return Err(Error::Config("total must be at least 1".into()));
    }
    let mut names = Vec::new();
    let mut probs = Vec::new();
    for (name, w) in weights.iter() {
        if w == 0.0 {
            continue;
        }
        match sources.get(name) {
            Some(recs) if !recs.is_empty() => {}
            _ => return Err(Error::Config(format!("source {name:?} has weight {w} but no records"))),
        }
        names.push(name);
        probs.push(w);
    }
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..total)
        .map(|_| {
            let name = names[dist.sample(&mut rng)];
            let recs = &sources[name];
            MixDraw {
                source: name.to_string(),
                record: recs[rng.random_range(0..recs.len())].clone(),
            }
        })
        .collect())
}
