//! Versioned JSON documents for every serializable model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::{DomainBox, LabelingModel, Policy, PolicyKind, QuadraticLabeler};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: String,
    pub feature_dim: usize,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_box: Option<DomainBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl ModelDocument {
    pub fn new(kind: &str, feature_dim: usize, params: Vec<f64>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            feature_dim,
            params,
            domain_box: None,
            activation: None,
            order: None,
            layers: None,
            extra: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub(crate) fn mlp(&self) -> Result<Mlp> {
        let layers = self
            .layers
            .clone()
            .ok_or_else(|| Error::Format("network document without layers".into()))?;
        let activation = self
            .activation
            .ok_or_else(|| Error::Format("network document without activation".into()))?;
        let output = match self.kind.as_str() {
            "mlp" => Activation::Sigmoid,
            _ => Activation::Identity,
        };
        Mlp::from_params(layers, activation, output, self.params.clone())
            .ok_or_else(|| Error::Format("parameter count does not match layers".into()))
    }
}

impl Policy {
    pub fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument::new(self.kind.name(), self.dim, self.params.clone());
        doc.domain_box = Some(self.domain_box.clone());
        doc.order = self.order();
        doc
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let kind = match doc.kind.as_str() {
            "linear-sigmoid" => PolicyKind::LinearSigmoid,
            "linear-raw" => PolicyKind::LinearRaw,
            "polynomial" => PolicyKind::Polynomial,
            other => return Err(Error::Format(format!("`{other}` is not a policy kind"))),
        };
        let p = Policy::from_params(kind, doc.feature_dim, doc.order, doc.params.clone())?;
        match &doc.domain_box {
            Some(b) => p.with_domain_box(b.clone()),
            None => Ok(p),
        }
    }
}

impl LabelingModel {
    pub fn to_document(&self) -> ModelDocument {
        match self {
            LabelingModel::ClosedQuadratic(q) => {
                let mut doc = ModelDocument::new("closed-quadratic", q.dim(), q.coeffs().to_vec());
                doc.order = Some(2);
                doc
            }
            LabelingModel::Mlp(m) => {
                let mut doc = ModelDocument::new("mlp", m.input_dim(), m.params().to_vec());
                doc.activation = Some(m.hidden_activation());
                doc.layers = Some(m.sizes().to_vec());
                doc
            }
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        match doc.kind.as_str() {
            "closed-quadratic" => Ok(LabelingModel::ClosedQuadratic(QuadraticLabeler::new(
                doc.feature_dim,
                doc.params.clone(),
            )?)),
            "mlp" => {
                let m = doc.mlp()?;
                if m.layers() != 3 || m.input_dim() != doc.feature_dim || m.output_dim() != 1 {
                    return Err(Error::Format("labeler network must be d -> h1 -> h2 -> 1".into()));
                }
                Ok(LabelingModel::Mlp(m))
            }
            other => Err(Error::Format(format!("`{other}` is not a labeler kind"))),
        }
    }
}

/// Wire form of [`DomainBox`]: open bounds are `null`.
#[derive(Serialize, Deserialize)]
pub(crate) struct RawBox {
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
}

impl From<DomainBox> for RawBox {
    fn from(b: DomainBox) -> Self {
        let wire = |v: Vec<f64>| v.into_iter().map(|x| x.is_finite().then_some(x)).collect();
        Self {
            lo: wire(b.lo),
            hi: wire(b.hi),
        }
    }
}

impl TryFrom<RawBox> for DomainBox {
    type Error = Error;

    fn try_from(r: RawBox) -> Result<Self> {
        let lo = r.lo.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect();
        let hi = r.hi.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
        DomainBox::new(lo, hi)
    }
}
