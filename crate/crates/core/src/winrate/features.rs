use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector of a bid request.
///
/// Indices are strictly increasing and below `dim`; values are finite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureVector")]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

#[derive(Deserialize)]
struct RawFeatureVector {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

impl TryFrom<RawFeatureVector> for FeatureVector {
    type Error = Error;

    fn try_from(raw: RawFeatureVector) -> Result<Self> {
        FeatureVector::new(raw.entries, raw.dim)
    }
}

impl FeatureVector {
    pub fn new(entries: Vec<(u32, f64)>, dim: usize) -> Result<Self> {
        for (n, &(idx, value)) in entries.iter().enumerate() {
            if idx as usize >= dim {
                return Err(Error::Domain(format!(
                    "feature index {idx} out of range for dimension {dim}"
                )));
            }
            if n > 0 && entries[n - 1].0 >= idx {
                return Err(Error::Domain(
                    "feature indices must be strictly increasing".into(),
                ));
            }
            if !value.is_finite() {
                return Err(Error::Domain(format!("feature {idx} is not finite")));
            }
        }
        Ok(FeatureVector { entries, dim })
    }

    /// A vector with no active features.
    pub fn empty(dim: usize) -> Self {
        FeatureVector {
            entries: Vec::new(),
            dim,
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, x)| weights[i as usize] * x)
            .sum()
    }
}

/// `index:value` pairs joined by commas; `-` for an empty vector.
impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return f.write_str("-");
        }
        for (n, (i, x)) in self.entries.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}:{x}")?;
        }
        Ok(())
    }
}

impl FeatureVector {
    /// Parse the [`fmt::Display`] form back, given the dimension.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        if text == "-" || text.is_empty() {
            return Ok(FeatureVector::empty(dim));
        }
        let mut entries = Vec::new();
        for pair in text.split(',') {
            let (i, x) = pair
                .split_once(':')
                .ok_or_else(|| Error::format("features", format!("bad pair `{pair}`")))?;
            let i: u32 = i
                .parse()
                .map_err(|_| Error::format("features", format!("bad index `{i}`")))?;
            let x: f64 = x
                .parse()
                .map_err(|_| Error::format("features", format!("bad value `{x}`")))?;
            entries.push((i, x));
        }
        FeatureVector::new(entries, dim).map_err(|e| Error::format("features", e.to_string()))
    }
}

/// Frozen one-hot dictionary for categorical request attributes.
///
/// Indices are assigned attribute by attribute in declaration order, each
/// category in order. The last index is reserved for out-of-vocabulary
/// values (unknown attribute names or unseen categories).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct Vocabulary {
    attributes: Vec<Attribute>,
    offsets: Vec<u32>,
    dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: Vec<String>,
}

impl From<Vec<Attribute>> for Vocabulary {
    fn from(attributes: Vec<Attribute>) -> Self {
        let mut offsets = Vec::with_capacity(attributes.len());
        let mut next = 0u32;
        for a in &attributes {
            offsets.push(next);
            next += a.categories.len() as u32;
        }
        Vocabulary {
            attributes,
            offsets,
            dim: next as usize + 1,
        }
    }
}

impl From<Vocabulary> for Vec<Attribute> {
    fn from(v: Vocabulary) -> Self {
        v.attributes
    }
}

/// Counters collected while encoding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub encoded: u64,
    pub out_of_vocabulary: u64,
}

impl Vocabulary {
    pub fn new(attributes: Vec<Attribute>) -> Self {
        attributes.into()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_index(&self) -> u32 {
        (self.dim - 1) as u32
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn index_of(&self, attribute: &str, category: &str) -> Option<u32> {
        let a = self.attributes.iter().position(|a| a.name == attribute)?;
        let c = self.attributes[a]
            .categories
            .iter()
            .position(|c| c == category)?;
        Some(self.offsets[a] + c as u32)
    }

    /// Attribute name and category for an index, `None` for the OOV slot.
    pub fn describe(&self, index: u32) -> Option<(&str, &str)> {
        let a = self
            .offsets
            .partition_point(|&o| o <= index)
            .checked_sub(1)?;
        let attr = &self.attributes[a];
        let c = (index - self.offsets[a]) as usize;
        attr.categories
            .get(c)
            .map(|cat| (attr.name.as_str(), cat.as_str()))
    }

    /// Category of `attribute` active in `features`, if any.
    pub fn active_category<'a>(
        &'a self,
        features: &FeatureVector,
        attribute: &str,
    ) -> Option<&'a str> {
        let a = self.attributes.iter().position(|a| a.name == attribute)?;
        let lo = self.offsets[a];
        let hi = lo + self.attributes[a].categories.len() as u32;
        features
            .entries()
            .iter()
            .find(|&&(i, x)| i >= lo && i < hi && x != 0.0)
            .map(|&(i, _)| self.attributes[a].categories[(i - lo) as usize].as_str())
    }

    /// One-hot encode request attributes. Unknown names or categories set the
    /// OOV index (summed if several are unknown) and bump `stats`.
    pub fn encode(
        &self,
        attributes: &BTreeMap<String, String>,
        stats: &mut EncodeStats,
    ) -> FeatureVector {
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(attributes.len());
        let mut oov = 0.0;
        for (name, value) in attributes {
            match self.index_of(name, value) {
                Some(i) => entries.push((i, 1.0)),
                None => {
                    oov += 1.0;
                    stats.out_of_vocabulary += 1;
                }
            }
        }
        if oov > 0.0 {
            entries.push((self.oov_index(), oov));
        }
        entries.sort_by_key(|&(i, _)| i);
        stats.encoded += 1;
        FeatureVector {
            entries,
            dim: self.dim,
        }
    }
}
