//! Architecture selection and exact parameter accounting.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// The four supported architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Gcn,
    Resgcn,
    Sagnn,
    MaskedSagnn,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::Resgcn => "resgcn",
            Variant::Sagnn => "sagnn",
            Variant::MaskedSagnn => "masked-sagnn",
        }
    }

    pub fn uses_attention(&self) -> bool {
        matches!(self, Variant::Sagnn | Variant::MaskedSagnn)
    }

    pub fn all() -> [Variant; 4] {
        [Variant::Gcn, Variant::Resgcn, Variant::Sagnn, Variant::MaskedSagnn]
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcn" => Ok(Variant::Gcn),
            "resgcn" => Ok(Variant::Resgcn),
            "sagnn" => Ok(Variant::Sagnn),
            "masked-sagnn" | "masked_sagnn" => Ok(Variant::MaskedSagnn),
            other => Err(format!(
                "unknown model '{other}' (expected gcn|resgcn|sagnn|masked-sagnn)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model architecture settings.
///
/// `depth` counts graph-convolution layers for `gcn`, residual blocks for
/// `resgcn`, and self-attention layers for the sagnn variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    /// Divide attention logits by √head_dim. Off by default: the attention
    /// products are used unscaled.
    pub attention_scaling: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_dim: 20,
            hidden_dim: 64,
            depth: match variant {
                Variant::Gcn => 6,
                Variant::Resgcn => 8,
                Variant::Sagnn | Variant::MaskedSagnn => 2,
            },
            num_heads: 4,
            head_dim: 16,
            attention_scaling: false,
            seed: 0,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depth < 1 {
            return Err(ModelError::InvalidConfig("depth must be >= 1".into()));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::InvalidConfig("dims must be positive".into()));
        }
        if self.variant.uses_attention() && self.num_heads * self.head_dim != self.hidden_dim {
            return Err(ModelError::InvalidConfig(format!(
                "num_heads ({}) x head_dim ({}) must equal hidden_dim ({})",
                self.num_heads, self.head_dim, self.hidden_dim
            )));
        }
        Ok(())
    }
}

/// Exact count of learnable scalars for a configuration.
///
/// All variants share the readout head (hidden FC + scalar output). The gcn
/// variant stacks `depth` graph convolutions with biases; resgcn projects the
/// input then stacks residual blocks of two convolutions with two
/// batch-norm scale/shift pairs; the sagnn variants project the input then
/// stack attention layers of per-head Q/K/V projections, an output
/// projection, and a per-layer scale/shift normalization.
pub fn param_count(config: &ModelConfig) -> usize {
    let d = config.input_dim;
    let h = config.hidden_dim;
    let readout = (h * h + h) + (h + 1);
    let input_proj = d * h + h;
    match config.variant {
        Variant::Gcn => {
            let first = d * h + h;
            let rest = (config.depth - 1) * (h * h + h);
            first + rest + readout
        }
        Variant::Resgcn => {
            let block = 2 * (h * h + h) + 2 * (2 * h);
            input_proj + config.depth * block + readout
        }
        Variant::Sagnn | Variant::MaskedSagnn => {
            let per_head = 3 * (h * config.head_dim + config.head_dim);
            let layer = config.num_heads * per_head + (h * h + h) + 2 * h;
            input_proj + config.depth * layer + readout
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcn_six_layers_matches_published_count() {
        let cfg = ModelConfig::new(Variant::Gcn).with_depth(6);
        assert_eq!(param_count(&cfg), 26_369);
        // decomposition: 20→64 layer, five 64→64 layers, readout FC + output
        assert_eq!(1_344 + 5 * 4_160 + 4_160 + 65, 26_369);
    }

    #[test]
    fn sagnn_two_layers_four_heads_matches_published_count() {
        for v in [Variant::Sagnn, Variant::MaskedSagnn] {
            let cfg = ModelConfig::new(v).with_depth(2);
            assert_eq!(param_count(&cfg), 39_105);
        }
        // decomposition: input projection, two SA layers, readout
        assert_eq!(1_344 + 2 * 16_768 + 4_160 + 65, 39_105);
    }

    #[test]
    fn gcn_depth_one() {
        let cfg = ModelConfig::new(Variant::Gcn).with_depth(1);
        assert_eq!(param_count(&cfg), 1_344 + 4_160 + 65);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::new(Variant::Sagnn);
        cfg.head_dim = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(Variant::Gcn);
        cfg.depth = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_parses_from_cli_names() {
        assert_eq!("masked-sagnn".parse::<Variant>().unwrap(), Variant::MaskedSagnn);
        assert!("bilstm".parse::<Variant>().is_err());
    }
}
