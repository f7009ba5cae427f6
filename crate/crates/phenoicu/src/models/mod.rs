//! From-scratch classifiers (random forest, LSTM) and their serialization.

pub mod forest;
pub mod lstm;
pub mod tree;

pub use forest::{train_forest, Forest, ForestConfig};
pub use lstm::{
    batch_loss, gradient_check, gradient_check_corrupted, predict_sequence, train_lstm,
    LstmConfig, LstmParams, Sequence, TrainedLstm,
};
pub use tree::{Node, TrainData, Tree, TreeParams};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Standardizer;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training input")]
    EmptyInput,
    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trained classifier ready for prediction and serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrainedModel {
    Forest(Forest),
    Lstm(LstmBundle),
}

/// LSTM parameters together with what prediction needs around them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmBundle {
    pub params: LstmParams,
    pub standardizer: Standardizer,
    pub loss_curve: Vec<f64>,
}

/// JSON header stored in front of the binary payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: String,
    pub schema_hash: String,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
}

const MODEL_MAGIC: &[u8; 4] = b"PHMD";
const MODEL_VERSION: u32 = 1;

fn write_f64s(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, ModelError> {
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Write magic, version, JSON header, then a fixed-layout binary payload.
/// Byte-identical for identical models.
pub fn save_model(
    mut w: impl Write,
    model: &TrainedModel,
    header: &ModelHeader,
) -> Result<(), ModelError> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    let header_bytes =
        serde_json::to_vec(header).map_err(|e| ModelError::Malformed(e.to_string()))?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    match model {
        TrainedModel::Forest(forest) => {
            w.write_all(&(forest.trees.len() as u32).to_le_bytes())?;
            w.write_all(&(forest.n_features as u32).to_le_bytes())?;
            w.write_all(&(forest.n_classes as u32).to_le_bytes())?;
            for tree in &forest.trees {
                w.write_all(&(tree.nodes.len() as u32).to_le_bytes())?;
                for node in &tree.nodes {
                    match node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            cover,
                        } => {
                            w.write_all(&[0u8])?;
                            w.write_all(&(*feature as u32).to_le_bytes())?;
                            w.write_all(&threshold.to_le_bytes())?;
                            w.write_all(&left.to_le_bytes())?;
                            w.write_all(&right.to_le_bytes())?;
                            w.write_all(&cover.to_le_bytes())?;
                        }
                        Node::Leaf { probs, cover } => {
                            w.write_all(&[1u8])?;
                            w.write_all(&cover.to_le_bytes())?;
                            write_f64s(&mut w, probs)?;
                        }
                    }
                }
            }
        }
        TrainedModel::Lstm(bundle) => {
            let p = &bundle.params;
            w.write_all(&(p.input_size as u32).to_le_bytes())?;
            w.write_all(&(p.hidden_size as u32).to_le_bytes())?;
            w.write_all(&(p.n_outputs as u32).to_le_bytes())?;
            write_f64s(&mut w, &p.w_x)?;
            write_f64s(&mut w, &p.w_h)?;
            write_f64s(&mut w, &p.b)?;
            write_f64s(&mut w, &p.w_out)?;
            write_f64s(&mut w, &p.b_out)?;
            write_f64s(&mut w, &bundle.standardizer.mean)?;
            write_f64s(&mut w, &bundle.standardizer.std)?;
            w.write_all(&(bundle.loss_curve.len() as u32).to_le_bytes())?;
            write_f64s(&mut w, &bundle.loss_curve)?;
        }
    }
    Ok(())
}

pub fn load_model(mut r: impl Read) -> Result<(TrainedModel, ModelHeader), ModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::Malformed("bad magic".into()));
    }
    if read_u32(&mut r)? != MODEL_VERSION {
        return Err(ModelError::Malformed("unsupported version".into()));
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: ModelHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| ModelError::Malformed(e.to_string()))?;

    let model = match header.kind.as_str() {
        "forest" => {
            let n_trees = read_u32(&mut r)? as usize;
            let n_features = read_u32(&mut r)? as usize;
            let n_classes = read_u32(&mut r)? as usize;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n_nodes = read_u32(&mut r)? as usize;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    let mut tag = [0u8; 1];
                    r.read_exact(&mut tag)?;
                    match tag[0] {
                        0 => {
                            let feature = read_u32(&mut r)? as usize;
                            let threshold = read_f64s(&mut r, 1)?[0];
                            let left = read_u32(&mut r)?;
                            let right = read_u32(&mut r)?;
                            let cover = read_f64s(&mut r, 1)?[0];
                            nodes.push(Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                                cover,
                            });
                        }
                        1 => {
                            let cover = read_f64s(&mut r, 1)?[0];
                            let probs = read_f64s(&mut r, n_classes)?;
                            nodes.push(Node::Leaf { probs, cover });
                        }
                        other => {
                            return Err(ModelError::Malformed(format!("bad node tag {other}")))
                        }
                    }
                }
                trees.push(Tree { nodes, n_classes });
            }
            TrainedModel::Forest(Forest {
                trees,
                n_features,
                n_classes,
            })
        }
        "lstm" => {
            let input_size = read_u32(&mut r)? as usize;
            let hidden_size = read_u32(&mut r)? as usize;
            let n_outputs = read_u32(&mut r)? as usize;
            let h4 = 4 * hidden_size;
            let params = LstmParams {
                input_size,
                hidden_size,
                n_outputs,
                w_x: read_f64s(&mut r, h4 * input_size)?,
                w_h: read_f64s(&mut r, h4 * hidden_size)?,
                b: read_f64s(&mut r, h4)?,
                w_out: read_f64s(&mut r, n_outputs * hidden_size)?,
                b_out: read_f64s(&mut r, n_outputs)?,
            };
            let standardizer = Standardizer {
                mean: read_f64s(&mut r, input_size)?,
                std: read_f64s(&mut r, input_size)?,
            };
            let curve_len = read_u32(&mut r)? as usize;
            let loss_curve = read_f64s(&mut r, curve_len)?;
            TrainedModel::Lstm(LstmBundle {
                params,
                standardizer,
                loss_curve,
            })
        }
        other => return Err(ModelError::Malformed(format!("unknown model kind {other}"))),
    };
    Ok((model, header))
}
