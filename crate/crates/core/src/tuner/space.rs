use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::MethodConfig;
use crate::error::{Error, Result};

/// A distribution over one hyperparameter. `randint` draws from
/// `low..high` (upper bound excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Loguniform { low: f64, high: f64 },
    Randint { low: i64, high: i64 },
    Choice { options: Vec<Value> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub dist: Distribution,
}

/// Search space for one method, e.g.
///
/// ```yaml
/// method: dmd
/// fixed: {delay: 0}
/// params:
///   - {name: rank, kind: randint, low: 1, high: 11}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParamSpace {
    pub method: String,
    #[serde(default)]
    pub fixed: BTreeMap<String, Value>,
    pub params: Vec<ParamSpec>,
}

/// A sampled assignment, parameter name to value.
pub type Sample = BTreeMap<String, Value>;

impl HyperParamSpace {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let space: Self = serde_yaml::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::Config(format!("parameter {name}: {why}")));
        let mut seen = BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) || self.fixed.contains_key(&p.name) {
                return bad(&p.name, "defined twice");
            }
            match &p.dist {
                Distribution::Uniform { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low <= high) {
                        return bad(&p.name, "uniform bounds must be finite with low <= high");
                    }
                }
                Distribution::Loguniform { low, high } => {
                    if !(low.is_finite() && high.is_finite() && *low > 0.0 && low <= high) {
                        return bad(&p.name, "loguniform bounds must be positive with low <= high");
                    }
                }
                Distribution::Randint { low, high } => {
                    if low >= high {
                        return bad(&p.name, "randint needs low < high");
                    }
                }
                Distribution::Choice { options } => {
                    if options.is_empty() {
                        return bad(&p.name, "choice needs at least one option");
                    }
                }
            }
        }
        MethodConfig::from_name(&self.method)?;
        Ok(())
    }

    /// Draws every parameter in declaration order from the stream
    /// `trial_id` of a generator seeded with `seed`.
    pub fn sample(&self, seed: u64, trial_id: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial_id);
        self.params
            .iter()
            .map(|p| (p.name.clone(), draw(&p.dist, &mut rng)))
            .collect()
    }

    /// Merges the fixed values and a sample into a method config.
    pub fn config(&self, sample: &Sample) -> Result<MethodConfig> {
        let base = match MethodConfig::from_name(&self.method)? {
            MethodConfig::Dmd(_) => "dmd",
            other => other.name(),
        };
        let mut obj = serde_json::Map::new();
        obj.insert("method".into(), Value::String(base.into()));
        if self.method == "hodmd" && !sample.contains_key("delay") && !self.fixed.contains_key("delay") {
            obj.insert("delay".into(), Value::from(5));
        }
        for (k, v) in self.fixed.iter().chain(sample) {
            obj.insert(k.clone(), v.clone());
        }
        if base == "dmd" && !obj.contains_key("rank") {
            obj.insert("rank".into(), Value::from(10));
        }
        if base == "esn" {
            let defaults = serde_json::to_value(MethodConfig::Esn(Default::default()))?;
            if let Value::Object(d) = defaults {
                for (k, v) in d {
                    obj.entry(k).or_insert(v);
                }
            }
        }
        Ok(serde_json::from_value(Value::Object(obj))?)
    }
}

fn draw(dist: &Distribution, rng: &mut ChaCha8Rng) -> Value {
    match dist {
        Distribution::Uniform { low, high } => {
            if low == high {
                Value::from(*low)
            } else {
                Value::from(rng.random_range(*low..*high))
            }
        }
        Distribution::Loguniform { low, high } => {
            if low == high {
                Value::from(*low)
            } else {
                let x: f64 = rng.random_range(low.ln()..high.ln());
                Value::from(x.exp().clamp(*low, *high))
            }
        }
        Distribution::Randint { low, high } => Value::from(rng.random_range(*low..*high)),
        Distribution::Choice { options } => options[rng.random_range(0..options.len())].clone(),
    }
}
