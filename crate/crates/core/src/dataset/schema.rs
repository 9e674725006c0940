use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east (negative west).
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub latitude: f64,
    pub longitude: f64,
}

/// Measurement sites and the partition of weather features into categories.
///
/// Every site reports the same features. Weather columns of a
/// [`FeatureTensor`](super::FeatureTensor) are laid out site-major, and within a
/// site in category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub substation: Coordinates,
    pub sites: Vec<Site>,
    pub categories: Vec<Category>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.sites.is_empty() {
            return Err(Error::invalid("schema needs at least one site"));
        }
        if self.categories.is_empty() {
            return Err(Error::invalid("schema needs at least one category"));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.categories {
            if c.features.is_empty() {
                return Err(Error::invalid(format!("category '{}' has no features", c.id)));
            }
            for f in &c.features {
                if !seen.insert(f.name.as_str()) {
                    return Err(Error::invalid(format!(
                        "feature '{}' appears in more than one category",
                        f.name
                    )));
                }
            }
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.sites {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate site id '{}'", s.id)));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: FeatureSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }

    pub fn dims(&self) -> TensorDims {
        TensorDims {
            n_sites: self.sites.len(),
            category_sizes: self.categories.iter().map(|c| c.features.len()).collect(),
        }
    }

    /// Feature names in column order within one site.
    pub fn feature_names(&self) -> Vec<&str> {
        self.categories
            .iter()
            .flat_map(|c| c.features.iter().map(|f| f.name.as_str()))
            .collect()
    }
}

/// Shape of the weather block: D sites × W features partitioned into M categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDims {
    pub n_sites: usize,
    pub category_sizes: Vec<usize>,
}

impl TensorDims {
    pub fn n_categories(&self) -> usize {
        self.category_sizes.len()
    }

    /// W, features per site.
    pub fn features_per_site(&self) -> usize {
        self.category_sizes.iter().sum()
    }

    pub fn n_weather_columns(&self) -> usize {
        self.n_sites * self.features_per_site()
    }

    /// First within-site feature index of category `m`.
    pub fn category_offset(&self, m: usize) -> usize {
        self.category_sizes[..m].iter().sum()
    }

    /// Weather column of (site, category, feature-within-category).
    #[inline]
    pub fn column(&self, site: usize, category: usize, feature: usize) -> usize {
        site * self.features_per_site() + self.category_offset(category) + feature
    }

    /// Columns holding category `m` at site `d`.
    pub fn block(&self, site: usize, category: usize) -> Vec<usize> {
        (0..self.category_sizes[category])
            .map(|w| self.column(site, category, w))
            .collect()
    }

    /// Category of a within-site feature index.
    pub fn category_of(&self, feature: usize) -> usize {
        let mut acc = 0;
        for (m, &s) in self.category_sizes.iter().enumerate() {
            acc += s;
            if feature < acc {
                return m;
            }
        }
        panic!("feature index {feature} out of range");
    }
}
