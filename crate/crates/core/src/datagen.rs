//! Synthetic outcome counts drawn from exact circuit probabilities, and the
//! JSON dataset format.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::circuits::{circuit_probabilities_raw, parse_circuit, Circuit, Design};
use crate::gateset::GateSet;
use crate::{Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
/// Generator identifier stored with every dataset: ChaCha20 with 20 rounds,
/// seeded through `seed_from_u64(seed)` and one stream per circuit index.
pub const RNG_ALGORITHM: &str = "chacha20/seed_from_u64/stream=circuit_index";
pub const OUTCOMES: [&str; 4] = ["00", "01", "10", "11"];

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub circuit: Circuit,
    pub counts: [u64; 4],
}

impl Record {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total() as f64;
        self.counts.map(|c| c as f64 / n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub seed: Option<u64>,
    pub rng_algorithm: String,
    /// Generating θ document, when the data are synthetic.
    pub theta: Option<serde_json::Value>,
}

/// Clamps tiny negative probabilities and renormalizes; larger negative
/// values are reported as an unphysical model.
pub fn sampling_distribution(p: [f64; 4]) -> Result<[f64; 4]> {
    if let Some(&bad) = p.iter().find(|&&x| x < -1e-10) {
        return Err(Error::Unphysical(bad));
    }
    let clamped = p.map(|x| x.max(0.0));
    let s: f64 = clamped.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Numerical("probabilities sum to zero".into()));
    }
    Ok(clamped.map(|x| x / s))
}

/// Multinomial draw as a chain of conditional binomials.
pub fn multinomial<R: rand::Rng>(rng: &mut R, n: u64, p: &[f64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..3 {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (p[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).expect("q is a probability").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= p[k];
    }
    out[3] = left;
    out
}

pub fn circuit_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample(design: &Design, gs: &GateSet, seed: u64) -> Result<Dataset> {
    if design.samples_per_circuit == 0 {
        return Err(Error::Design("samples per circuit must be positive".into()));
    }
    let records = design
        .circuits
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let p = sampling_distribution(circuit_probabilities_raw(c, gs)?)?;
            let counts = multinomial(&mut circuit_rng(seed, i), design.samples_per_circuit, &p);
            Ok(Record { circuit: c.clone(), counts })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records, seed: Some(seed), rng_algorithm: RNG_ALGORITHM.into(), theta: None })
}

/// Counts equal to round(p·N): the infinite-statistics limit, used to test
/// estimator consistency.
pub fn exact_counts(design: &Design, gs: &GateSet, n: u64) -> Result<Dataset> {
    let records = design
        .circuits
        .iter()
        .map(|c| {
            let p = sampling_distribution(circuit_probabilities_raw(c, gs)?)?;
            Ok(Record { circuit: c.clone(), counts: p.map(|x| (x * n as f64).round() as u64) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records, seed: None, rng_algorithm: "exact".into(), theta: None })
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Dataset("dataset has no circuits".into()));
        }
        if let Some(r) = self.records.iter().find(|r| r.total() == 0) {
            return Err(Error::Dataset(format!("circuit '{}' has no counts", r.circuit)));
        }
        Ok(())
    }

    pub fn circuits(&self) -> Vec<Circuit> {
        self.records.iter().map(|r| r.circuit.clone()).collect()
    }

    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(Record::total).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut counts = serde_json::Map::new();
        for r in &self.records {
            let mut m = serde_json::Map::new();
            for (label, n) in OUTCOMES.iter().zip(r.counts) {
                m.insert(label.to_string(), serde_json::json!(n));
            }
            counts.insert(r.circuit.to_string(), serde_json::Value::Object(m));
        }
        serde_json::json!({
            "schema_version": DATASET_SCHEMA_VERSION,
            "rng_algorithm": self.rng_algorithm,
            "seed": self.seed,
            "theta": self.theta,
            "counts": counts,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let version = v.get("schema_version").and_then(|x| x.as_u64());
        if version != Some(DATASET_SCHEMA_VERSION as u64) {
            return Err(Error::Dataset(format!("schema version {version:?} is not {DATASET_SCHEMA_VERSION}")));
        }
        let counts = v
            .get("counts")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::Dataset("missing 'counts' object".into()))?;
        let mut records = Vec::with_capacity(counts.len());
        for (text, per) in counts {
            let circuit = parse_circuit(text)?;
            let per = per.as_object().ok_or_else(|| Error::Dataset(format!("counts of '{text}' must be an object")))?;
            let mut c = [0u64; 4];
            for (k, label) in OUTCOMES.iter().enumerate() {
                c[k] = match per.get(*label) {
                    None => 0,
                    Some(x) => x.as_u64().ok_or_else(|| Error::Dataset(format!("count '{label}' of '{text}' is not a nonnegative integer")))?,
                };
            }
            if let Some(extra) = per.keys().find(|k| !OUTCOMES.contains(&k.as_str())) {
                return Err(Error::Dataset(format!("unknown outcome label '{extra}'")));
            }
            records.push(Record { circuit, counts: c });
        }
        let ds = Dataset {
            records,
            seed: v.get("seed").and_then(|s| s.as_u64()),
            rng_algorithm: v.get("rng_algorithm").and_then(|s| s.as_str()).unwrap_or("unknown").to_string(),
            theta: v.get("theta").filter(|t| !t.is_null()).cloned(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        Self::from_json(&v)
    }
}
