use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::numcore::{xavier_init, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub layers: usize,
    pub seq_len: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    /// Reuse the token embedding as the output head.
    #[serde(default)]
    pub tied_head: bool,
    #[serde(default = "default_rms_eps")]
    pub rms_eps: f64,
}

fn default_mlp_ratio() -> usize {
    4
}

fn default_rms_eps() -> f64 {
    1e-6
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            vocab: 16,
            d_model: 32,
            layers: 6,
            seq_len: 32,
            mlp_ratio: 4,
            tied_head: false,
            rms_eps: 1e-6,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.d_model == 0 || self.layers == 0 || self.seq_len == 0 || self.mlp_ratio == 0 {
            return Err(ModelError::Config(format!("degenerate dimensions {self:?}")));
        }
        if !(self.rms_eps > 0.0) {
            return Err(ModelError::Config("rms_eps must be > 0".into()));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.mlp_ratio * self.d_model
    }
}

/// Tensors inside one decoder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    AttnGain,
    Wq,
    Wk,
    Wv,
    Wo,
    MlpGain,
    MlpUp,
    MlpDown,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::AttnGain,
        Block::Wq,
        Block::Wk,
        Block::Wv,
        Block::Wo,
        Block::MlpGain,
        Block::MlpUp,
        Block::MlpDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::AttnGain => "attn_gain",
            Block::Wq => "wq",
            Block::Wk => "wk",
            Block::Wv => "wv",
            Block::Wo => "wo",
            Block::MlpGain => "mlp_gain",
            Block::MlpUp => "mlp_up",
            Block::MlpDown => "mlp_down",
        }
    }

    pub fn is_gain(self) -> bool {
        matches!(self, Block::AttnGain | Block::MlpGain)
    }
}

/// Address of one parameter tensor. Layers are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamId {
    TokenEmbedding,
    PositionEmbedding,
    Layer { layer: usize, block: Block },
    FinalGain,
    Head,
}

impl ParamId {
    pub fn name(&self) -> String {
        match self {
            ParamId::TokenEmbedding => "token_embedding".into(),
            ParamId::PositionEmbedding => "position_embedding".into(),
            ParamId::Layer { layer, block } => format!("layer{layer}.{}", block.name()),
            ParamId::FinalGain => "final_gain".into(),
            ParamId::Head => "head".into(),
        }
    }

    pub fn is_gain(&self) -> bool {
        match self {
            ParamId::Layer { block, .. } => block.is_gain(),
            ParamId::FinalGain => true,
            _ => false,
        }
    }
}

/// All weights of the decoder, in the fixed order given by [`DecoderParams::ids`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    config: DecoderConfig,
    tensors: Vec<Matrix>,
}

impl DecoderParams {
    /// Tensor layout for a configuration.
    pub fn layout(config: &DecoderConfig) -> Vec<(ParamId, (usize, usize))> {
        let (v, d, h) = (config.vocab, config.d_model, config.hidden());
        let mut out = vec![
            (ParamId::TokenEmbedding, (v, d)),
            (ParamId::PositionEmbedding, (config.seq_len, d)),
        ];
        for layer in 1..=config.layers {
            for block in Block::ALL {
                let shape = match block {
                    Block::AttnGain | Block::MlpGain => (1, d),
                    Block::Wq | Block::Wk | Block::Wv | Block::Wo => (d, d),
                    Block::MlpUp => (d, h),
                    Block::MlpDown => (h, d),
                };
                out.push((ParamId::Layer { layer, block }, shape));
            }
        }
        out.push((ParamId::FinalGain, (1, d)));
        if !config.tied_head {
            out.push((ParamId::Head, (d, v)));
        }
        out
    }

    /// Xavier-uniform matrices and unit gains.
    pub fn init(config: DecoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let tensors = Self::layout(&config)
            .into_iter()
            .map(|(id, (r, c))| fresh_tensor(id, r, c, rng))
            .collect();
        Ok(Self { config, tensors })
    }

    /// All-zero matrices and unit gains.
    pub fn zeros(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let tensors = Self::layout(&config)
            .into_iter()
            .map(|(id, (r, c))| if id.is_gain() { Matrix::filled(r, c, 1.0) } else { Matrix::zeros(r, c) })
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn from_tensors(config: DecoderConfig, tensors: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let layout = Self::layout(&config);
        if layout.len() != tensors.len() {
            return Err(ModelError::Config(format!("expected {} tensors, got {}", layout.len(), tensors.len())));
        }
        for ((id, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != *shape {
                return Err(ModelError::Config(format!("{} has shape {:?}, expected {shape:?}", id.name(), t.shape())));
            }
            if !t.is_finite() {
                return Err(ModelError::Config(format!("{} has non-finite entries", id.name())));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn ids(&self) -> Vec<ParamId> {
        Self::layout(&self.config).into_iter().map(|(id, _)| id).collect()
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn index_of(&self, id: ParamId) -> Option<usize> {
        self.ids().iter().position(|x| *x == id)
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.index_of(id).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Matrix> {
        self.index_of(id).map(move |i| &mut self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Weight-decay mask: gains are not decayed.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.ids().iter().map(|id| !id.is_gain()).collect()
    }
}

pub(crate) fn fresh_tensor(id: ParamId, rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    if id.is_gain() {
        Matrix::filled(rows, cols, 1.0)
    } else {
        xavier_init(rows, cols, rng)
    }
}
