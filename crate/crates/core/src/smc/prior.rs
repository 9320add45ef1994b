use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SmcError;

/// One independent uniform marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// A parameter computed from sampled ones: `name = offset + Σ terms`.
///
/// With `replaces` set, reports show the derived value in place of that
/// sampled coordinate (e.g. `gamma = alpha + 1 + eta` is reported instead of `eta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRule {
    pub name: String,
    pub terms: Vec<String>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub replaces: Option<String>,
}

impl DerivedRule {
    /// `gamma = alpha + 1 + eta`, reported in place of `eta`.
    pub fn gamma_from_eta() -> Self {
        Self {
            name: "gamma".into(),
            terms: vec!["alpha".into(), "eta".into()],
            offset: 1.0,
            replaces: Some("eta".into()),
        }
    }
}

/// Product of independent uniform priors over the sampled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPriorSpec", into = "RawPriorSpec")]
pub struct PriorSpec {
    entries: Vec<PriorEntry>,
    derived: Vec<DerivedRule>,
    // per derived rule: indices of its terms among the entries
    term_index: Vec<Vec<usize>>,
    log_density: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPriorSpec {
    entries: Vec<PriorEntry>,
    #[serde(default)]
    derived: Vec<DerivedRule>,
}

impl TryFrom<RawPriorSpec> for PriorSpec {
    type Error = SmcError;
    fn try_from(raw: RawPriorSpec) -> Result<Self, SmcError> {
        PriorSpec::new(raw.entries, raw.derived)
    }
}

impl From<PriorSpec> for RawPriorSpec {
    fn from(p: PriorSpec) -> Self {
        RawPriorSpec {
            entries: p.entries,
            derived: p.derived,
        }
    }
}

impl PriorSpec {
    pub fn new(entries: Vec<PriorEntry>, derived: Vec<DerivedRule>) -> Result<Self, SmcError> {
        if entries.is_empty() {
            return Err(SmcError::InvalidPrior("no sampled coordinates".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if !(e.lower < e.upper) || !e.lower.is_finite() || !e.upper.is_finite() {
                return Err(SmcError::InvalidPrior(format!(
                    "{}: lower {} must be below upper {}",
                    e.name, e.lower, e.upper
                )));
            }
            if entries[..i].iter().any(|o| o.name == e.name) {
                return Err(SmcError::InvalidPrior(format!(
                    "duplicate coordinate {}",
                    e.name
                )));
            }
        }
        let mut term_index = Vec::with_capacity(derived.len());
        for rule in &derived {
            if entries.iter().any(|e| e.name == rule.name) {
                return Err(SmcError::InvalidPrior(format!(
                    "derived parameter {} is also a sampled coordinate",
                    rule.name
                )));
            }
            let idx = rule
                .terms
                .iter()
                .map(|t| {
                    entries.iter().position(|e| &e.name == t).ok_or_else(|| {
                        SmcError::InvalidPrior(format!(
                            "rule {} refers to unknown {}",
                            rule.name, t
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(r) = &rule.replaces {
                if !entries.iter().any(|e| &e.name == r) {
                    return Err(SmcError::InvalidPrior(format!(
                        "rule {} replaces unknown {}",
                        rule.name, r
                    )));
                }
            }
            term_index.push(idx);
        }
        let log_density = -entries
            .iter()
            .map(|e| (e.upper - e.lower).ln())
            .sum::<f64>();
        Ok(Self {
            entries,
            derived,
            term_index,
            log_density,
        })
    }

    pub fn entries(&self) -> &[PriorEntry] {
        &self.entries
    }

    pub fn derived(&self) -> &[DerivedRule] {
        &self.derived
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// One draw from the prior, in sampled coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| rng.random_range(e.lower..e.upper))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.entries.len()
            && self
                .entries
                .iter()
                .zip(theta)
                .all(|(e, &x)| x >= e.lower && x <= e.upper)
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            self.log_density.exp()
        } else {
            0.0
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            self.log_density
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Values of the derived parameters, in rule order.
    pub fn derived_values(&self, theta: &[f64]) -> Vec<f64> {
        self.derived
            .iter()
            .zip(&self.term_index)
            .map(|(rule, idx)| rule.offset + idx.iter().map(|&i| theta[i]).sum::<f64>())
            .collect()
    }

    /// Every sampled and derived parameter by name.
    pub fn resolve(&self, theta: &[f64]) -> BTreeMap<String, f64> {
        let mut map: BTreeMap<String, f64> = self
            .entries
            .iter()
            .zip(theta)
            .map(|(e, &x)| (e.name.clone(), x))
            .collect();
        for (rule, v) in self.derived.iter().zip(self.derived_values(theta)) {
            map.insert(rule.name.clone(), v);
        }
        map
    }

    /// Reported parameter names: sampled names with replaced coordinates swapped
    /// for their derived counterparts, then any remaining derived names.
    pub fn reported_names(&self) -> Vec<String> {
        self.reported_layout().into_iter().map(|(n, _)| n).collect()
    }

    /// Reported values in the order of [`reported_names`](Self::reported_names).
    pub fn reported_values(&self, theta: &[f64]) -> Vec<f64> {
        let derived = self.derived_values(theta);
        self.reported_layout()
            .into_iter()
            .map(|(_, slot)| match slot {
                Slot::Sampled(i) => theta[i],
                Slot::Derived(k) => derived[k],
            })
            .collect()
    }

    /// Range of each reported parameter implied by the prior box.
    pub fn reported_bounds(&self) -> Vec<(f64, f64)> {
        self.reported_layout()
            .into_iter()
            .map(|(_, slot)| match slot {
                Slot::Sampled(i) => (self.entries[i].lower, self.entries[i].upper),
                Slot::Derived(k) => {
                    let idx = &self.term_index[k];
                    let off = self.derived[k].offset;
                    (
                        off + idx.iter().map(|&i| self.entries[i].lower).sum::<f64>(),
                        off + idx.iter().map(|&i| self.entries[i].upper).sum::<f64>(),
                    )
                }
            })
            .collect()
    }

    fn reported_layout(&self) -> Vec<(String, Slot)> {
        let mut out = Vec::with_capacity(self.entries.len() + self.derived.len());
        for (i, e) in self.entries.iter().enumerate() {
            match self
                .derived
                .iter()
                .position(|r| r.replaces.as_deref() == Some(e.name.as_str()))
            {
                Some(k) => out.push((self.derived[k].name.clone(), Slot::Derived(k))),
                None => out.push((e.name.clone(), Slot::Sampled(i))),
            }
        }
        for (k, r) in self.derived.iter().enumerate() {
            if r.replaces.is_none() {
                out.push((r.name.clone(), Slot::Derived(k)));
            }
        }
        out
    }

    /// Completes a named parameter set by applying derived rules whose target
    /// is missing and whose terms are all present.
    pub fn complete(&self, values: &mut BTreeMap<String, f64>) {
        for rule in &self.derived {
            if values.contains_key(&rule.name) {
                continue;
            }
            let terms: Option<Vec<f64>> =
                rule.terms.iter().map(|t| values.get(t).copied()).collect();
            if let Some(terms) = terms {
                values.insert(rule.name.clone(), rule.offset + terms.iter().sum::<f64>());
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Sampled(usize),
    Derived(usize),
}
