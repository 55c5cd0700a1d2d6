//! The full set of learnable parameters and its checkpoint format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderParams, DecoderVars};
use crate::encoder::{EncoderParams, EncoderVars, GinVars};
use crate::error::{GamcError, Result};
use crate::numerics::{Gradients, Tape, Tensor2, Var};
use crate::rng::SplitMix64;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub decoder_layers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    /// `1 x feature_dim`, substituted for masked input rows.
    pub mask_token: Tensor2,
    pub format_version: u32,
}

impl ModelParams {
    /// Glorot-initialized weights; biases, epsilons and both tokens start at zero.
    pub fn init(dims: ModelDims, rng: &mut SplitMix64) -> Result<Self> {
        if dims.feature_dim == 0 || dims.hidden_dim == 0 {
            return Err(GamcError::Config("feature and hidden dims must be positive".into()));
        }
        Ok(ModelParams {
            encoder: EncoderParams::new(dims.feature_dim, dims.hidden_dim, rng),
            decoder: DecoderParams::new(dims.hidden_dim, dims.feature_dim, dims.decoder_layers, rng)?,
            mask_token: Tensor2::zeros(1, dims.feature_dim),
            format_version: FORMAT_VERSION,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            feature_dim: self.encoder.feature_dim(),
            hidden_dim: self.encoder.output_dim(),
            decoder_layers: self.decoder.layers.len(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Every learnable tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        for (n, t) in self.encoder.layer1.tensors() {
            out.push((format!("encoder.layer1.{n}"), t));
        }
        for (n, t) in self.encoder.layer2.tensors() {
            out.push((format!("encoder.layer2.{n}"), t));
        }
        out.push(("decoder.remask_token".into(), &self.decoder.remask_token));
        for (i, l) in self.decoder.layers.iter().enumerate() {
            for (n, t) in l.tensors() {
                out.push((format!("decoder.layer{}.{n}", i + 1), t));
            }
        }
        out.push(("mask_token".into(), &self.mask_token));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor2)> {
        let mut out = Vec::new();
        for (n, t) in self.encoder.layer1.tensors_mut() {
            out.push((format!("encoder.layer1.{n}"), t));
        }
        for (n, t) in self.encoder.layer2.tensors_mut() {
            out.push((format!("encoder.layer2.{n}"), t));
        }
        out.push(("decoder.remask_token".into(), &mut self.decoder.remask_token));
        for (i, l) in self.decoder.layers.iter_mut().enumerate() {
            for (n, t) in l.tensors_mut() {
                out.push((format!("decoder.layer{}.{n}", i + 1), t));
            }
        }
        out.push(("mask_token".into(), &mut self.mask_token));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder: self.encoder.register(tape),
            decoder: self.decoder.register(tape),
            mask_token: tape.leaf(self.mask_token.clone()),
        }
    }
}

/// [`ModelParams`] registered on a tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub decoder: DecoderVars,
    pub mask_token: Var,
}

impl ModelVars {
    /// Vars in the same order as [`ModelParams::named_tensors`].
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = Vec::new();
        let layer = |l: &GinVars, out: &mut Vec<Var>| out.extend(l.vars());
        layer(&self.encoder.layer1, &mut out);
        layer(&self.encoder.layer2, &mut out);
        out.push(self.decoder.remask_token);
        for l in &self.decoder.layers {
            layer(l, &mut out);
        }
        out.push(self.mask_token);
        out
    }

    /// Gradients keyed by parameter name.
    pub fn collect(&self, params: &ModelParams, grads: &mut Gradients) -> BTreeMap<String, Tensor2> {
        params
            .named_tensors()
            .into_iter()
            .zip(self.ordered())
            .map(|((name, _), v)| (name, grads.take(v)))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    feature_dim: usize,
    hidden_dim: usize,
    decoder_layers: usize,
    tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// JSON checkpoint; floats are written with full round-trip precision.
pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(params)?).map_err(|e| GamcError::io(path, e))
}

pub fn checkpoint_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let dims = params.dims();
    let file = CheckpointFile {
        format_version: params.format_version,
        feature_dim: dims.feature_dim,
        hidden_dim: dims.hidden_dim,
        decoder_layers: dims.decoder_layers,
        tensors: params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.rows(),
                cols: t.cols(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_vec(&file).map_err(|e| GamcError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GamcError::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|e| match e {
        GamcError::Checkpoint(m) => GamcError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let file: CheckpointFile =
        serde_json::from_slice(bytes).map_err(|e| GamcError::Checkpoint(format!("corrupt checkpoint: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(GamcError::Checkpoint(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let dims = ModelDims {
        feature_dim: file.feature_dim,
        hidden_dim: file.hidden_dim,
        decoder_layers: file.decoder_layers,
    };
    // Build a template for names and shapes, then overwrite every tensor.
    let mut params = ModelParams::init(dims, &mut SplitMix64::new(0))
        .map_err(|e| GamcError::Checkpoint(e.to_string()))?;
    let mut stored: BTreeMap<String, NamedTensor> = file.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
    let expected = params.named_tensors().len();
    for (name, slot) in params.named_tensors_mut() {
        let t = stored
            .remove(&name)
            .ok_or_else(|| GamcError::Checkpoint(format!("missing tensor `{name}`")))?;
        if (t.rows, t.cols) != slot.shape() {
            return Err(GamcError::Checkpoint(format!(
                "tensor `{name}` is {}x{}, expected {}x{}",
                t.rows,
                t.cols,
                slot.rows(),
                slot.cols()
            )));
        }
        *slot = Tensor2::from_vec(t.rows, t.cols, t.data).map_err(|e| GamcError::Checkpoint(e.to_string()))?;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(GamcError::Checkpoint(format!(
            "unexpected tensor `{extra}` (expected {expected} tensors)"
        )));
    }
    if !params.is_finite() {
        return Err(GamcError::Checkpoint("non-finite weights".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            feature_dim: 3,
            hidden_dim: 5,
            decoder_layers: 1,
        }
    }

    #[test]
    fn names_and_vars_align() {
        let mut p = ModelParams::init(dims(), &mut SplitMix64::new(1)).unwrap();
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let names: Vec<(String, Tensor2)> = p.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        let ordered = vars.ordered();
        assert_eq!(names.len(), ordered.len());
        for ((_, t), v) in names.iter().zip(ordered) {
            assert_eq!(t, tape.value(v));
        }
        assert_eq!(p.named_tensors_mut().len(), names.len());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = ModelParams::init(dims(), &mut SplitMix64::new(9)).unwrap();
        let q = checkpoint_from_bytes(&checkpoint_bytes(&p).unwrap()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let p = ModelParams::init(dims(), &mut SplitMix64::new(9)).unwrap();
        let text = String::from_utf8(checkpoint_bytes(&p).unwrap()).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
        let err = checkpoint_from_bytes(bumped.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("format_version 99"), "{err}");
    }

    #[test]
    fn corrupt_file_is_rejected() {
        assert!(matches!(
            checkpoint_from_bytes(b"{not json"),
            Err(GamcError::Checkpoint(_))
        ));
    }
}
