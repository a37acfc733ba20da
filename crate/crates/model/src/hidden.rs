//! Per-layer SEQ_START representations for visualisation.

use rayon::prelude::*;
use usvsthem_core::aggregate::LabeledComment;
use usvsthem_core::embedviz::{HiddenMatrix, PointLabel};

use crate::error::{Error, Result};
use crate::train::Model;

/// `0` for the embeddings, `1..=layers_shared` for the shared layers, then
/// one tag per task-specific layer named after the task.
pub fn layer_tags(model: &Model) -> Vec<String> {
    (0..=model.encoder.layers_shared)
        .map(|l| l.to_string())
        .chain(model.tasks.iter().map(|t| t.kind.as_str().to_string()))
        .collect()
}

enum Tap {
    Trunk(usize),
    Task(usize),
}

fn resolve(model: &Model, tag: &str) -> Result<Tap> {
    if let Ok(l) = tag.parse::<usize>() {
        if l <= model.encoder.layers_shared {
            return Ok(Tap::Trunk(l));
        }
    }
    model
        .tasks
        .iter()
        .position(|t| t.kind.as_str() == tag)
        .map(Tap::Task)
        .ok_or_else(|| Error::Config(format!("unknown layer tag `{tag}`; expected one of {:?}", layer_tags(model))))
}

/// One row per comment, in input order, of width `model_dim`.
pub fn export_hidden(model: &Model, comments: &[LabeledComment], tag: &str) -> Result<HiddenMatrix> {
    let tap = resolve(model, tag)?;
    let d = model.encoder.model_dim;
    let rows = comments
        .par_iter()
        .map(|c| {
            let tr = model.trace(&model.encode(&c.body).ids);
            match tap {
                Tap::Trunk(l) => tr.trunk_hidden(l, d).expect("layer checked").to_vec(),
                Tap::Task(t) => tr.tasks[t].hidden.clone(),
            }
        })
        .collect();
    let labels = comments
        .iter()
        .map(|c| PointLabel { id: c.unit_id.clone(), usvsthem: c.usvsthem, group: c.group, emotions: c.emotions.clone() })
        .collect();
    Ok(HiddenMatrix { tag: tag.to_string(), labels, rows })
}

/// Every layer's matrix, in [`layer_tags`] order.
pub fn export_all_hidden(model: &Model, comments: &[LabeledComment]) -> Result<Vec<HiddenMatrix>> {
    layer_tags(model).iter().map(|t| export_hidden(model, comments, t)).collect()
}
