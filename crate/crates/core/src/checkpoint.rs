//! JSON checkpoints of trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ArchConfig, GnnModel, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{AttributeEntry, AttributeSchema, NormalizationStats};
use crate::numeric::Matrix;
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// False for decoder weights, which inference never touches.
    pub inferential: bool,
    pub values: Vec<f64>,
}

/// Everything needed to rebuild a model and featurize new cells for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub arch: ArchConfig,
    pub input_dim: usize,
    pub seed: u64,
    pub schema_hash: String,
    pub schema: Vec<AttributeEntry>,
    pub normalization: NormalizationStats,
    pub sampler: SamplerConfig,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(
        model: &GnnModel,
        schema: &AttributeSchema,
        normalization: &NormalizationStats,
        sampler: &SamplerConfig,
    ) -> Self {
        let encoder_count = model.encoder_param_count();
        let params = model
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| ParamRecord {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                inferential: i < encoder_count,
                values: p.value.data().to_vec(),
            })
            .collect();
        Self {
            model: model.kind,
            arch: model.arch.clone(),
            input_dim: model.input_dim,
            seed: model.seed,
            schema_hash: schema.hash(),
            schema: schema.entries().to_vec(),
            normalization: normalization.clone(),
            sampler: *sampler,
            params,
        }
    }

    /// Copy with the non-inferential (decoder) parameters dropped.
    pub fn encoder_only(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .filter(|p| p.inferential)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    pub fn attribute_schema(&self) -> Result<AttributeSchema> {
        let schema = AttributeSchema::new(self.schema.clone())?;
        if schema.hash() != self.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found: schema.hash(),
            });
        }
        Ok(schema)
    }

    pub fn verify_schema(&self, schema: &AttributeSchema) -> Result<()> {
        let found = schema.hash();
        if found != self.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Rebuilds the model. A checkpoint without decoder parameters yields a
    /// model with no decoder.
    pub fn to_model(&self) -> Result<GnnModel> {
        let mut model = GnnModel::init(self.model, &self.arch, self.input_dim, self.seed)?;
        let encoder_count = model.encoder_param_count();
        let has_decoder = self.params.len() > encoder_count;
        if !has_decoder {
            model.params.truncate(encoder_count);
            model.decoder = None;
        }
        if self.params.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameters, architecture expects {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for (p, rec) in model.params.iter_mut().zip(&self.params) {
            if p.name != rec.name || p.value.shape() != (rec.rows, rec.cols) {
                return Err(Error::Shape(format!(
                    "parameter `{}` {}x{} does not match expected `{}` {}x{}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    p.name,
                    p.value.rows(),
                    p.value.cols()
                )));
            }
            p.value = Matrix::new(rec.rows, rec.cols, rec.values.clone())?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::json)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Aggregation, AttributeKind, Role, Technology};

    fn schema() -> AttributeSchema {
        let e = |name: &str, role, agg| AttributeEntry {
            name: name.into(),
            technology: Technology::Lte,
            role,
            kind: AttributeKind::Continuous,
            aggregation: agg,
        };
        AttributeSchema::new(vec![
            e("bw", Role::Predictor, None),
            e("p0", Role::Config, Some(Aggregation::Median)),
        ])
        .unwrap()
    }

    fn small_arch() -> ArchConfig {
        ArchConfig {
            layers: 1,
            heads: 2,
            head_dim: 3,
            ffn_hidden: 4,
            hidden_dim: 4,
            embedding_dim: 3,
            slope: 0.2,
        }
    }

    fn stats() -> NormalizationStats {
        NormalizationStats {
            predictors: vec![],
            configs: vec![],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let model = GnnModel::init(ModelKind::Gae, &small_arch(), 2, 9).unwrap();
        let ck = Checkpoint::new(
            &model,
            &schema(),
            &stats(),
            &SamplerConfig::new(8, 1).unwrap(),
        );
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn decoder_is_flagged_and_strippable() {
        let model = GnnModel::init(ModelKind::Gae, &small_arch(), 2, 9).unwrap();
        let ck = Checkpoint::new(
            &model,
            &schema(),
            &stats(),
            &SamplerConfig::new(8, 1).unwrap(),
        );
        let n_enc = model.encoder_param_count();
        assert!(n_enc < ck.params.len());
        assert!(ck
            .params
            .iter()
            .all(|p| p.inferential == p.name.starts_with("encoder")));
        let enc = ck.encoder_only().to_model().unwrap();
        assert!(enc.decoder.is_none());
        assert_eq!(enc.params[..], model.params[..n_enc]);
    }

    #[test]
    fn schema_hash_is_checked() {
        let model = GnnModel::init(ModelKind::Sgnn, &small_arch(), 2, 9).unwrap();
        let ck = Checkpoint::new(
            &model,
            &schema(),
            &stats(),
            &SamplerConfig::new(8, 1).unwrap(),
        );
        assert!(ck.verify_schema(&schema()).is_ok());
        let other = AttributeSchema::new(vec![schema().entries()[0].clone()]).unwrap();
        assert!(matches!(
            ck.verify_schema(&other),
            Err(Error::SchemaMismatch { .. })
        ));
        let mut tampered = ck.clone();
        tampered.schema.pop();
        assert!(tampered.attribute_schema().is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let model = GnnModel::init(ModelKind::Sgnn, &small_arch(), 2, 9).unwrap();
        let mut ck = Checkpoint::new(
            &model,
            &schema(),
            &stats(),
            &SamplerConfig::new(8, 1).unwrap(),
        );
        ck.params[0].rows += 1;
        assert!(ck.to_model().is_err());
    }
}
