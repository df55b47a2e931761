use serde::{Deserialize, Serialize};

use super::{Linear, Mlp, ModelArtifact, ModelBody, ModelError, Task, Transform, TreeEnsemble};

/// On-disk layout: `{task, kind, arity, transforms, body}`. Body keys are
/// emitted in sorted order, so encoding is canonical.
#[derive(Serialize, Deserialize)]
struct Document {
    task: Task,
    kind: String,
    arity: usize,
    #[serde(default)]
    transforms: Vec<Transform>,
    body: serde_json::Value,
}

pub(super) fn decode(text: &str) -> Result<ModelArtifact, ModelError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| ModelError::invalid("$", e.to_string()))?;
    let body_err = |e: serde_json::Error| ModelError::invalid("body", e.to_string());
    let body = match doc.kind.as_str() {
        "linear" => ModelBody::Linear(serde_json::from_value::<Linear>(doc.body).map_err(body_err)?),
        "tree_ensemble" => ModelBody::TreeEnsemble(serde_json::from_value::<TreeEnsemble>(doc.body).map_err(body_err)?),
        "mlp" => ModelBody::Mlp(serde_json::from_value::<Mlp>(doc.body).map_err(body_err)?),
        "svm" => return Err(ModelError::ReservedKind(doc.kind)),
        _ => return Err(ModelError::UnknownKind(doc.kind)),
    };
    ModelArtifact::new(doc.task, doc.arity, doc.transforms, body)
}

pub(super) fn encode(model: &ModelArtifact) -> String {
    let body = match &model.body {
        ModelBody::Linear(m) => serde_json::to_value(m),
        ModelBody::TreeEnsemble(m) => serde_json::to_value(m),
        ModelBody::Mlp(m) => serde_json::to_value(m),
    }
    .expect("model bodies serialize");
    let doc = Document {
        task: model.task,
        kind: model.body.kind().to_string(),
        arity: model.arity,
        transforms: model.transforms.clone(),
        body,
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}
