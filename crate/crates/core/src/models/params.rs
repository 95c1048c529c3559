//! Parameter collections, deterministic initialization, and the checkpoint
//! container.

use serde::{Deserialize, Serialize};

use crate::numerics::{init_glorot, DenseMatrix, Parameter};

use super::config::{param_count, ModelConfig, Variant};
use super::ModelError;

pub const CHECKPOINT_FORMAT: &str = "ftm-checkpoint-v1";

/// Running statistics for one batch-normalization layer (non-learnable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormBuffers {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormBuffers {
    pub fn new(channels: usize) -> Self {
        BatchNormBuffers {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        let m = self.momentum;
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * batch_mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * batch_var[c];
        }
    }
}

/// How a tensor initializes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParamKind {
    /// Glorot-uniform weight matrix.
    Weight,
    /// Zero-initialized bias row.
    Bias,
    /// Ones (normalization scale).
    Scale,
    /// Zeros (normalization shift).
    Shift,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearIdx {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineIdx {
    pub scale: usize,
    pub shift: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadIdx {
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockIdx {
    pub gc1: LinearIdx,
    pub bn1: AffineIdx,
    pub gc2: LinearIdx,
    pub bn2: AffineIdx,
    /// Indices into `ModelParams::bn`.
    pub bn1_state: usize,
    pub bn2_state: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SaLayerIdx {
    pub heads: Vec<HeadIdx>,
    pub proj: LinearIdx,
    pub norm: AffineIdx,
}

#[derive(Debug, Clone)]
pub(crate) struct ReadoutIdx {
    pub fc: LinearIdx,
    pub out: LinearIdx,
}

#[derive(Debug, Clone)]
pub(crate) enum Structure {
    Gcn {
        layers: Vec<LinearIdx>,
        readout: ReadoutIdx,
    },
    Resgcn {
        input: LinearIdx,
        blocks: Vec<BlockIdx>,
        readout: ReadoutIdx,
    },
    Sagnn {
        input: LinearIdx,
        layers: Vec<SaLayerIdx>,
        readout: ReadoutIdx,
    },
}

/// Deterministic enumeration of every tensor in a model, with the structured
/// indices the forward pass navigates by.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub structure: Structure,
    pub num_bn: usize,
}

fn push_spec(specs: &mut Vec<ParamSpec>, name: String, rows: usize, cols: usize, kind: ParamKind) -> usize {
    specs.push(ParamSpec {
        name,
        rows,
        cols,
        kind,
    });
    specs.len() - 1
}

fn linear(specs: &mut Vec<ParamSpec>, prefix: &str, rows: usize, cols: usize) -> LinearIdx {
    LinearIdx {
        weight: push_spec(specs, format!("{prefix}.weight"), rows, cols, ParamKind::Weight),
        bias: push_spec(specs, format!("{prefix}.bias"), 1, cols, ParamKind::Bias),
    }
}

fn affine(specs: &mut Vec<ParamSpec>, prefix: &str, cols: usize) -> AffineIdx {
    AffineIdx {
        scale: push_spec(specs, format!("{prefix}.scale"), 1, cols, ParamKind::Scale),
        shift: push_spec(specs, format!("{prefix}.shift"), 1, cols, ParamKind::Shift),
    }
}

impl Layout {
    pub fn build(config: &ModelConfig) -> Layout {
        let mut specs: Vec<ParamSpec> = Vec::new();
        let h = config.hidden_dim;
        let d = config.input_dim;
        let mut num_bn = 0;
        let structure = match config.variant {
            Variant::Gcn => {
                let mut layers = Vec::with_capacity(config.depth);
                for l in 0..config.depth {
                    let input = if l == 0 { d } else { h };
                    layers.push(linear(&mut specs, &format!("gc{l}"), input, h));
                }
                Structure::Gcn {
                    layers,
                    readout: ReadoutIdx {
                        fc: linear(&mut specs, "readout.fc", h, h),
                        out: linear(&mut specs, "readout.out", h, 1),
                    },
                }
            }
            Variant::Resgcn => {
                let input = linear(&mut specs, "input_proj", d, h);
                let mut blocks = Vec::with_capacity(config.depth);
                for b in 0..config.depth {
                    let gc1 = linear(&mut specs, &format!("block{b}.gc1"), h, h);
                    let bn1 = affine(&mut specs, &format!("block{b}.bn1"), h);
                    let gc2 = linear(&mut specs, &format!("block{b}.gc2"), h, h);
                    let bn2 = affine(&mut specs, &format!("block{b}.bn2"), h);
                    blocks.push(BlockIdx {
                        gc1,
                        bn1,
                        gc2,
                        bn2,
                        bn1_state: num_bn,
                        bn2_state: num_bn + 1,
                    });
                    num_bn += 2;
                }
                Structure::Resgcn {
                    input,
                    blocks,
                    readout: ReadoutIdx {
                        fc: linear(&mut specs, "readout.fc", h, h),
                        out: linear(&mut specs, "readout.out", h, 1),
                    },
                }
            }
            Variant::Sagnn | Variant::MaskedSagnn => {
                let input = linear(&mut specs, "input_proj", d, h);
                let mut layers = Vec::with_capacity(config.depth);
                for l in 0..config.depth {
                    let mut heads = Vec::with_capacity(config.num_heads);
                    for m in 0..config.num_heads {
                        heads.push(HeadIdx {
                            q: linear(&mut specs, &format!("layer{l}.head{m}.q"), h, config.head_dim),
                            k: linear(&mut specs, &format!("layer{l}.head{m}.k"), h, config.head_dim),
                            v: linear(&mut specs, &format!("layer{l}.head{m}.v"), h, config.head_dim),
                        });
                    }
                    let proj = linear(&mut specs, &format!("layer{l}.proj"), h, h);
                    let norm = affine(&mut specs, &format!("layer{l}.norm"), h);
                    layers.push(SaLayerIdx { heads, proj, norm });
                }
                Structure::Sagnn {
                    input,
                    layers,
                    readout: ReadoutIdx {
                        fc: linear(&mut specs, "readout.fc", h, h),
                        out: linear(&mut specs, "readout.out", h, 1),
                    },
                }
            }
        };
        Layout {
            specs,
            structure,
            num_bn,
        }
    }
}

/// All learnable tensors of one model plus its batch-norm buffers.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: Vec<Parameter>,
    pub bn: Vec<BatchNormBuffers>,
}

impl ModelParams {
    /// Total learnable scalar count; equals [`param_count`] of the config.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::build(&self.config)
    }
}

/// Glorot-initialized weights, zero biases, unit scales — deterministic per
/// seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let layout = Layout::build(config);
    let params = layout
        .specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let value = match spec.kind {
                ParamKind::Weight => init_glorot(spec.rows, spec.cols, tensor_seed(seed, i)),
                ParamKind::Bias | ParamKind::Shift => DenseMatrix::zeros(spec.rows, spec.cols),
                ParamKind::Scale => {
                    DenseMatrix::from_vec(spec.rows, spec.cols, vec![1.0; spec.rows * spec.cols])
                }
            };
            Parameter::new(spec.name.clone(), value)
        })
        .collect::<Vec<_>>();
    let bn = (0..layout.num_bn)
        .map(|_| BatchNormBuffers::new(config.hidden_dim))
        .collect();
    let mp = ModelParams {
        config: config.clone(),
        params,
        bn,
    };
    debug_assert_eq!(mp.num_scalars(), param_count(config));
    Ok(mp)
}

fn tensor_seed(seed: u64, index: usize) -> u64 {
    // splitmix-style spread so every tensor gets an independent stream
    let x = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    parameters: Vec<CheckpointTensor>,
    batch_norm: Vec<BatchNormBuffers>,
}

/// Serialize to the JSON checkpoint container. Byte-stable for identical
/// parameters: tensors appear in layout order and floats print in shortest
/// round-trip form.
pub fn save_checkpoint(params: &ModelParams) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        config: params.config.clone(),
        parameters: params
            .params
            .iter()
            .map(|p| CheckpointTensor {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().to_vec(),
            })
            .collect(),
        batch_norm: params.bn.clone(),
    };
    serde_json::to_string_pretty(&file).expect("checkpoint serializes")
}

/// Parse and validate a checkpoint: every tensor must match the layout
/// implied by the stored config, by name and shape.
pub fn load_checkpoint(text: &str) -> Result<ModelParams, ModelError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ModelError::BadCheckpoint(format!(
            "unsupported format '{}'",
            file.format
        )));
    }
    file.config.validate()?;
    let layout = Layout::build(&file.config);
    if file.parameters.len() != layout.specs.len() {
        return Err(ModelError::BadCheckpoint(format!(
            "expected {} tensors for {}, got {}",
            layout.specs.len(),
            file.config.variant,
            file.parameters.len()
        )));
    }
    let mut params = Vec::with_capacity(layout.specs.len());
    for (spec, tensor) in layout.specs.iter().zip(file.parameters) {
        if spec.name != tensor.name || spec.rows != tensor.rows || spec.cols != tensor.cols {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor mismatch: expected {} [{}x{}], got {} [{}x{}]",
                spec.name, spec.rows, spec.cols, tensor.name, tensor.rows, tensor.cols
            )));
        }
        if tensor.data.len() != tensor.rows * tensor.cols {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} has {} values, expected {}",
                tensor.name,
                tensor.data.len(),
                tensor.rows * tensor.cols
            )));
        }
        if !tensor.data.iter().all(|v| v.is_finite()) {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} contains non-finite values",
                tensor.name
            )));
        }
        params.push(Parameter::new(
            tensor.name,
            DenseMatrix::from_vec(tensor.rows, tensor.cols, tensor.data),
        ));
    }
    if file.batch_norm.len() != layout.num_bn {
        return Err(ModelError::BadCheckpoint(format!(
            "expected {} batch-norm buffers, got {}",
            layout.num_bn,
            file.batch_norm.len()
        )));
    }
    for (i, bn) in file.batch_norm.iter().enumerate() {
        if bn.running_mean.len() != file.config.hidden_dim
            || bn.running_var.len() != file.config.hidden_dim
        {
            return Err(ModelError::BadCheckpoint(format!(
                "batch-norm buffer {i} has wrong channel count"
            )));
        }
        if bn.running_var.iter().any(|v| *v < 0.0) {
            return Err(ModelError::BadCheckpoint(format!(
                "batch-norm buffer {i} has negative running variance"
            )));
        }
    }
    Ok(ModelParams {
        config: file.config,
        params,
        bn: file.batch_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialized_scalar_count_matches_param_count() {
        for variant in Variant::all() {
            let cfg = ModelConfig::new(variant).with_depth(2);
            let mp = init_params(&cfg, 11).unwrap();
            assert_eq!(mp.num_scalars(), param_count(&cfg), "{variant}");
        }
    }

    #[test]
    fn gcn_depth_six_has_published_scalar_count() {
        let cfg = ModelConfig::new(Variant::Gcn).with_depth(6);
        let mp = init_params(&cfg, 0).unwrap();
        assert_eq!(mp.num_scalars(), 26_369);
    }

    #[test]
    fn same_seed_identical_params() {
        let cfg = ModelConfig::new(Variant::MaskedSagnn);
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        for (pa, pb) in a.params.iter().zip(&b.params) {
            assert_eq!(pa.value, pb.value);
        }
        let c = init_params(&cfg, 8).unwrap();
        assert!(a.params.iter().zip(&c.params).any(|(x, y)| x.value != y.value));
    }

    #[test]
    fn biases_zero_scales_one() {
        let cfg = ModelConfig::new(Variant::Resgcn).with_depth(1);
        let mp = init_params(&cfg, 3).unwrap();
        for p in &mp.params {
            if p.name.ends_with(".bias") || p.name.ends_with(".shift") {
                assert!(p.value.data().iter().all(|&v| v == 0.0), "{}", p.name);
            }
            if p.name.ends_with(".scale") {
                assert!(p.value.data().iter().all(|&v| v == 1.0), "{}", p.name);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_byte_stable() {
        let cfg = ModelConfig::new(Variant::MaskedSagnn).with_seed(5);
        let mp = init_params(&cfg, 5).unwrap();
        let text = save_checkpoint(&mp);
        let loaded = load_checkpoint(&text).unwrap();
        assert_eq!(save_checkpoint(&loaded), text);
        assert_eq!(loaded.config, cfg);
        for (a, b) in mp.params.iter().zip(&loaded.params) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let cfg = ModelConfig::new(Variant::Gcn).with_depth(1);
        let mp = init_params(&cfg, 1).unwrap();
        let text = save_checkpoint(&mp);
        // corrupt the declared depth so layout no longer matches tensors
        let corrupted = text.replace("\"depth\": 1", "\"depth\": 2");
        assert!(matches!(
            load_checkpoint(&corrupted),
            Err(ModelError::BadCheckpoint(_))
        ));
    }
}
