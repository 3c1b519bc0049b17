use std::path::{Path, PathBuf};

use dmidas_core::data::{generate_synthetic, load_csv, preset, CsvSchema, TimeSeriesDataset};
use dmidas_core::eval::{Candidate, Protocol};
use dmidas_core::hypersearch::{NamedDimension, SearchSpace};
use dmidas_core::model::{ModelSpec, ModelTemplate};
use dmidas_core::training::{EnsembleConfig, TrainConfig};
use dmidas_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where the series come from: a CSV file or a named synthetic preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub preset: Option<String>,
    /// Dataset name used in reports; defaults to the file stem or preset.
    pub name: Option<String>,
    pub id_column: Option<String>,
    pub time_column: Option<String>,
    pub value_column: Option<String>,
    pub delimiter: Option<char>,
}

/// `[model]`: a horizon plus the model template keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub horizon: usize,
    #[serde(flatten)]
    pub template: ModelTemplate,
}

// hand-written so unknown template keys are still rejected
impl<'de> Deserialize<'de> for ModelSection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let horizon = match table.remove("horizon") {
            None => ModelSection::default().horizon,
            Some(v) => v
                .as_integer()
                .and_then(|h| usize::try_from(h).ok())
                .ok_or_else(|| D::Error::custom("`horizon` must be a non-negative integer"))?,
        };
        let template = toml::Value::Table(table).try_into().map_err(D::Error::custom)?;
        Ok(Self { horizon, template })
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            horizon: 24,
            template: ModelTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Defaults to the model horizon.
    pub horizons: Vec<usize>,
    pub val_len: usize,
    pub test_len: usize,
    /// Model families (`dmidas`, `nbeats-g`, `nbeats-i`, `mlp`) and
    /// baselines (`naive`, `seasonal-naive-<period>`); defaults to the
    /// configured model family.
    pub models: Vec<String>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            horizons: Vec::new(),
            val_len: 480,
            test_len: 960,
            models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub budget: usize,
    /// Empty means the built-in space.
    pub dimensions: Vec<NamedDimension>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            budget: 10,
            dimensions: Vec::new(),
        }
    }
}

/// The run configuration file: TOML with one table per section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub evaluation: EvaluationSection,
    pub search: SearchSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.ensemble.seeds(self.training.seed)?;
        self.model_spec()?;
        if let Some(space) = self.search_space() {
            space.validate()?;
        }
        if self.data.path.is_some() && self.data.preset.is_some() {
            return Err(Error::config("[data] takes either `path` or `preset`, not both"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.template.spec(self.model.horizon)
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.evaluation.horizons.is_empty() {
            vec![self.model.horizon]
        } else {
            self.evaluation.horizons.clone()
        }
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            val_len: self.evaluation.val_len,
            test_len: self.evaluation.test_len,
            train: self.training.clone(),
            ensemble: self.ensemble.clone(),
        }
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>> {
        if self.evaluation.models.is_empty() {
            return Ok(vec![Candidate::neural(self.model.template.clone())]);
        }
        self.evaluation.models.iter().map(|m| self.candidate(m)).collect()
    }

    fn candidate(&self, name: &str) -> Result<Candidate> {
        if name == "naive" {
            return Ok(Candidate::Naive);
        }
        if let Some(p) = name.strip_prefix("seasonal-naive-") {
            let period = p
                .parse()
                .map_err(|_| Error::config(format!("bad seasonal period in `{name}`")))?;
            return Ok(Candidate::SeasonalNaive { period });
        }
        let family = name.parse()?;
        Ok(Candidate::neural(ModelTemplate {
            family,
            ..self.model.template.clone()
        }))
    }

    pub fn search_space(&self) -> Option<SearchSpace> {
        (!self.search.dimensions.is_empty()).then(|| SearchSpace {
            dimensions: self.search.dimensions.clone(),
        })
    }

    pub fn csv_schema(&self) -> CsvSchema {
        let d = CsvSchema::default();
        CsvSchema {
            id_column: self.data.id_column.clone().unwrap_or(d.id_column),
            time_column: self.data.time_column.clone().or(d.time_column),
            value_column: self.data.value_column.clone().unwrap_or(d.value_column),
            delimiter: self.data.delimiter.unwrap_or(d.delimiter),
            frequency: d.frequency,
        }
    }

    /// Loads the dataset and its report name. Every failure here is a data
    /// error.
    pub fn load_data(&self) -> Result<(String, TimeSeriesDataset)> {
        let as_data = |e: Error| match e {
            Error::Data(_) | Error::Parse { .. } | Error::Csv(_) => e,
            other => Error::data(other.to_string()),
        };
        match (&self.data.path, &self.data.preset) {
            (Some(path), _) => {
                if !path.exists() {
                    return Err(Error::data(format!("data file {} does not exist", path.display())));
                }
                let ds = load_csv(path, &self.csv_schema()).map_err(as_data)?;
                let name = self.data.name.clone().unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "data".into())
                });
                Ok((name, ds))
            }
            (None, Some(p)) => {
                let ds = generate_synthetic(&preset(p)?)?;
                Ok((self.data.name.clone().unwrap_or_else(|| p.clone()), ds))
            }
            (None, None) => Err(Error::config("no data source: pass --data or set [data] path/preset")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmidas_core::model::Family;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            r#"
            [data]
            preset = "multifreq-v1"

            [model]
            family = "nbeats-g"
            horizon = 8
            mlp_width = 32

            [training]
            iterations = 50
            normalization = "per-window-last"
            loss_kind = "mse"

            [ensemble]
            n_members = 2

            [evaluation]
            horizons = [8, 16]
            models = ["dmidas", "seasonal-naive-24", "naive"]

            [search]
            budget = 3
            dimensions = [
              { name = "lr", kind = "log_uniform", lo = 1e-4, hi = 1e-2 },
              { name = "mlp_width", kind = "choice", values = [16, 32] },
            ]
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.model.template.family, Family::NbeatsG);
        assert_eq!(c.model.horizon, 8);
        assert_eq!(c.candidates().unwrap().len(), 3);
        assert_eq!(c.search_space().unwrap().dimensions.len(), 2);
        let again = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[training]\nlearning_rate = 0.1\n").is_err());
        assert!(RunConfig::parse("[model]\nwidth = 3\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[search]\ndimensions = [{ name = \"a\", kind = \"choice\", values = [1], extra = 2 }]\n").is_err());
    }
}
