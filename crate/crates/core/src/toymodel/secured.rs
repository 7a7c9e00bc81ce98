use std::fmt;

use serde::{Deserialize, Serialize};

use super::params::{fresh_tensor, Block, DecoderParams, ParamId};
use super::{ModelError, Result};
use crate::numcore::Rng;

/// One weight matrix inside a layer, for block-granular securing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecuredBlock {
    pub layer: usize,
    pub block: Block,
}

/// The parameters hidden from the attacker.
///
/// At layer granularity a secured layer hides all of its tensors. At block
/// granularity the listed matrices are hidden; a layer's pre-attention gain
/// follows its `wq` and its pre-MLP gain follows its `mlp_up`. Embeddings and
/// the output head stay public unless `embedding` is set (block granularity
/// only).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "granularity", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SecuredSet {
    Layers {
        layers: Vec<usize>,
    },
    Blocks {
        blocks: Vec<SecuredBlock>,
        #[serde(default)]
        embedding: bool,
    },
}

impl SecuredSet {
    pub fn empty() -> Self {
        SecuredSet::Layers { layers: vec![] }
    }

    /// Every decoder layer `1..=depth`.
    pub fn all(depth: usize) -> Self {
        SecuredSet::Layers {
            layers: (1..=depth).collect(),
        }
    }

    /// Bottom prefix `1..=l`.
    pub fn prefix(l: usize) -> Self {
        SecuredSet::Layers { layers: (1..=l).collect() }
    }

    /// Sorted, de-duplicated layer set.
    pub fn layers(layers: impl IntoIterator<Item = usize>) -> Self {
        let mut layers: Vec<usize> = layers.into_iter().collect();
        layers.sort_unstable();
        layers.dedup();
        SecuredSet::Layers { layers }
    }

    pub fn blocks(blocks: impl IntoIterator<Item = SecuredBlock>, embedding: bool) -> Self {
        let mut blocks: Vec<SecuredBlock> = blocks.into_iter().collect();
        blocks.sort_unstable();
        blocks.dedup();
        SecuredSet::Blocks { blocks, embedding }
    }

    /// Checks indices against a model of `depth` layers, and sortedness.
    pub fn validate(&self, depth: usize) -> Result<()> {
        match self {
            SecuredSet::Layers { layers } => {
                if layers.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ModelError::SecuredSet("layers must be sorted and unique".into()));
                }
                if let Some(bad) = layers.iter().find(|l| **l == 0 || **l > depth) {
                    return Err(ModelError::SecuredSet(format!("layer {bad} outside 1..={depth}")));
                }
            }
            SecuredSet::Blocks { blocks, .. } => {
                if blocks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ModelError::SecuredSet("blocks must be sorted and unique".into()));
                }
                for b in blocks {
                    if b.layer == 0 || b.layer > depth {
                        return Err(ModelError::SecuredSet(format!("layer {} outside 1..={depth}", b.layer)));
                    }
                    if b.block.is_gain() {
                        return Err(ModelError::SecuredSet(format!(
                            "{} is not a securable block; gains follow wq and mlp_up",
                            b.block.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SecuredSet::Layers { layers } => layers.is_empty(),
            SecuredSet::Blocks { blocks, embedding } => blocks.is_empty() && !embedding,
        }
    }

    /// Layers that hold at least one secured tensor.
    pub fn touched_layers(&self) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            SecuredSet::Layers { layers } => layers.clone(),
            SecuredSet::Blocks { blocks, .. } => blocks.iter().map(|b| b.layer).collect(),
        };
        out.dedup();
        out
    }

    /// Where the secured module's representation is read: the highest
    /// secured layer.
    pub fn highest_layer(&self) -> Option<usize> {
        self.touched_layers().last().copied()
    }

    /// True when the secured layers form `1..=l` for some `l ≥ 1`.
    pub fn is_bottom_prefix(&self) -> bool {
        let layers = self.touched_layers();
        !layers.is_empty() && layers.iter().enumerate().all(|(i, l)| *l == i + 1)
    }

    pub fn contains(&self, id: ParamId) -> bool {
        match self {
            SecuredSet::Layers { layers } => match id {
                ParamId::Layer { layer, .. } => layers.binary_search(&layer).is_ok(),
                _ => false,
            },
            SecuredSet::Blocks { blocks, embedding } => match id {
                ParamId::TokenEmbedding | ParamId::PositionEmbedding => *embedding,
                ParamId::Layer { layer, block } => {
                    let owner = match block {
                        Block::AttnGain => Block::Wq,
                        Block::MlpGain => Block::MlpUp,
                        b => b,
                    };
                    blocks.binary_search(&SecuredBlock { layer, block: owner }).is_ok()
                }
                ParamId::FinalGain | ParamId::Head => false,
            },
        }
    }
}

impl fmt::Display for SecuredSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecuredSet::Layers { layers } => {
                let parts: Vec<String> = layers.iter().map(|l| l.to_string()).collect();
                write!(f, "{{{}}}", parts.join(","))
            }
            SecuredSet::Blocks { blocks, embedding } => {
                let mut parts: Vec<String> = blocks.iter().map(|b| format!("{}.{}", b.layer, b.block.name())).collect();
                if *embedding {
                    parts.insert(0, "embedding".into());
                }
                write!(f, "{{{}}}", parts.join(","))
            }
        }
    }
}

/// Disjoint split of tensor indices into secured and public sides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub secured: Vec<usize>,
    pub unsecured: Vec<usize>,
    total: usize,
}

impl Partition {
    fn mask(&self, of: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.total];
        for i in of {
            m[*i] = true;
        }
        m
    }

    /// `true` on secured tensors.
    pub fn secured_mask(&self) -> Vec<bool> {
        self.mask(&self.secured)
    }

    /// Frozen mask that keeps the public side fixed (only secured tensors train).
    pub fn freeze_unsecured(&self) -> Vec<bool> {
        self.mask(&self.unsecured)
    }

    /// Frozen mask that keeps the secured side fixed (only public tensors train).
    pub fn freeze_secured(&self) -> Vec<bool> {
        self.mask(&self.secured)
    }

    pub fn count(&self, params: &DecoderParams, secured: bool) -> usize {
        let side = if secured { &self.secured } else { &self.unsecured };
        side.iter().map(|i| params.tensors()[*i].len()).sum()
    }
}

pub fn partition(params: &DecoderParams, secured: &SecuredSet) -> Result<Partition> {
    secured.validate(params.config().layers)?;
    let ids = params.ids();
    let (s, u): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|i| secured.contains(ids[*i]));
    Ok(Partition {
        secured: s,
        unsecured: u,
        total: ids.len(),
    })
}

/// Copy of the model with every secured tensor freshly Xavier-initialized
/// (gains reset to 1). Public tensors are copied bit-for-bit.
pub fn reinit_secured(params: &DecoderParams, secured: &SecuredSet, rng: &mut Rng) -> Result<DecoderParams> {
    let part = partition(params, secured)?;
    let ids = params.ids();
    let mut out = params.clone();
    for i in part.secured {
        let (r, c) = out.tensors()[i].shape();
        out.tensors_mut()[i] = fresh_tensor(ids[i], r, c, rng);
    }
    Ok(out)
}
