use super::params::{Block, DecoderConfig, DecoderParams, ParamId};
use super::{ModelError, Result};
use crate::autodiff::gradcheck::{check_gradients, Coords, GradCheck};
use crate::autodiff::{AdError, Tape, Target, Var};
use crate::numcore::{Matrix, Rng};

/// Tape handles for every tensor of a model, in layout order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Places the model on the tape; tensors with `trainable[i]` become
/// differentiable leaves, the rest constants.
pub fn bind(tape: &mut Tape, params: &DecoderParams, trainable: &[bool]) -> Result<Bound> {
    if trainable.len() != params.tensors().len() {
        return Err(ModelError::Config(format!(
            "trainable mask has {} entries for {} tensors",
            trainable.len(),
            params.tensors().len()
        )));
    }
    let vars = params
        .tensors()
        .iter()
        .zip(trainable)
        .map(|(t, train)| if *train { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    Ok(Bound { vars })
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `(batch·seq) × vocab`; absent when the pass stopped early.
    pub logits: Option<Var>,
    /// Residual stream after each layer; entry 0 is the embedding output.
    pub hidden: Vec<Var>,
}

fn flatten_tokens(params: &DecoderParams, tokens: &[Vec<usize>]) -> Result<Vec<usize>> {
    let cfg = params.config();
    if tokens.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut ids = Vec::with_capacity(tokens.len() * cfg.seq_len);
    for seq in tokens {
        if seq.len() != cfg.seq_len {
            return Err(ModelError::SequenceLength {
                got: seq.len(),
                expected: cfg.seq_len,
            });
        }
        for &t in seq {
            if t >= cfg.vocab {
                return Err(ModelError::TokenOutOfRange { token: t, vocab: cfg.vocab });
            }
            ids.push(t);
        }
    }
    Ok(ids)
}

/// Causal single-head pre-norm decoder. With `upto = Some(k)` only layers
/// `1..=k` run and no logits are produced.
pub fn forward(
    tape: &mut Tape,
    params: &DecoderParams,
    bound: &Bound,
    tokens: &[Vec<usize>],
    upto: Option<usize>,
) -> Result<ForwardOutput> {
    let cfg = *params.config();
    let ids = flatten_tokens(params, tokens)?;
    let last = upto.unwrap_or(cfg.layers);
    if last > cfg.layers {
        return Err(ModelError::Config(format!("layer {last} beyond depth {}", cfg.layers)));
    }
    let ids_order = params.ids();
    let var = |id: ParamId| -> Var { bound.vars[ids_order.iter().position(|x| *x == id).expect("layout id")] };
    let block = |layer: usize, block: Block| var(ParamId::Layer { layer, block });
    let seq = cfg.seq_len;
    let inv_sqrt_d = 1.0 / (cfg.d_model as f64).sqrt();

    let tok = tape.embedding_gather(var(ParamId::TokenEmbedding), &ids)?;
    let mut x = tape.add_tiled(tok, var(ParamId::PositionEmbedding))?;
    let mut hidden = vec![x];
    for layer in 1..=last {
        let h = tape.rms_norm(x, block(layer, Block::AttnGain), cfg.rms_eps)?;
        let q = tape.matmul(h, block(layer, Block::Wq))?;
        let k = tape.matmul(h, block(layer, Block::Wk))?;
        let v = tape.matmul(h, block(layer, Block::Wv))?;
        let scores = tape.block_matmul_nt(q, k, seq)?;
        let scores = tape.scale(scores, inv_sqrt_d);
        let masked = tape.causal_mask(scores, seq)?;
        let attn = tape.row_softmax(masked)?;
        let mixed = tape.block_matmul(attn, v, seq)?;
        let out = tape.matmul(mixed, block(layer, Block::Wo))?;
        x = tape.add(x, out)?;

        let h = tape.rms_norm(x, block(layer, Block::MlpGain), cfg.rms_eps)?;
        let up = tape.matmul(h, block(layer, Block::MlpUp))?;
        let act = tape.relu(up);
        let down = tape.matmul(act, block(layer, Block::MlpDown))?;
        x = tape.add(x, down)?;
        hidden.push(x);
    }
    if upto.is_some() {
        return Ok(ForwardOutput { logits: None, hidden });
    }
    let h = tape.rms_norm(x, var(ParamId::FinalGain), cfg.rms_eps)?;
    let logits = if cfg.tied_head {
        tape.matmul_nt(h, var(ParamId::TokenEmbedding))?
    } else {
        tape.matmul(h, var(ParamId::Head))?
    };
    Ok(ForwardOutput {
        logits: Some(logits),
        hidden,
    })
}

/// Logits of a frozen model, `(batch·seq) × vocab`.
pub fn logits(params: &DecoderParams, tokens: &[Vec<usize>]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, &vec![false; params.tensors().len()])?;
    let out = forward(&mut tape, params, &bound, tokens, None)?;
    Ok(tape.value(out.logits.expect("full pass")).clone())
}

/// Residual stream after `layer` (0 = embeddings), `(batch·seq) × d`.
pub fn hidden_at(params: &DecoderParams, tokens: &[Vec<usize>], layer: usize) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, &vec![false; params.tensors().len()])?;
    let out = forward(&mut tape, params, &bound, tokens, Some(layer))?;
    Ok(tape.value(out.hidden[layer]).clone())
}

/// Finite-difference check of the next-token cross-entropy of a freshly
/// initialized model on a random two-sequence batch, over `count` coordinates
/// drawn across all tensors.
pub fn decoder_gradcheck(config: DecoderConfig, seed: u64, count: usize) -> Result<GradCheck> {
    let mut rng = Rng::new(seed, 0x6465_636b);
    let params = DecoderParams::init(config, &mut rng)?;
    let tokens: Vec<Vec<usize>> = (0..2)
        .map(|_| (0..config.seq_len).map(|_| rng.below(config.vocab)).collect())
        .collect();
    let rows = 2 * config.seq_len;
    let labels: Vec<usize> = (0..rows).map(|_| rng.below(config.vocab)).collect();
    let mask: Vec<bool> = (0..rows).map(|i| i % 3 != 1).collect();
    let check = check_gradients(
        "decoder_loss",
        params.tensors(),
        Coords::Random { count, seed },
        &|tape, vars| {
            let bound = Bound { vars: vars.to_vec() };
            let out = forward(tape, &params, &bound, &tokens, None)
                .map_err(|e| AdError::InvalidArgument(e.to_string()))?;
            tape.cross_entropy(
                out.logits.expect("full pass"),
                Target::Hard {
                    labels: labels.clone(),
                    mask: mask.clone(),
                },
            )
        },
    )?;
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::DecoderConfig;
    use crate::numcore::Rng;

    fn small() -> DecoderConfig {
        DecoderConfig {
            vocab: 7,
            d_model: 8,
            layers: 2,
            seq_len: 5,
            ..DecoderConfig::default()
        }
    }

    #[test]
    fn zero_model_gives_uniform_positions() {
        let p = DecoderParams::zeros(small()).unwrap();
        let z = logits(&p, &[vec![1, 2, 3, 4, 5], vec![0, 0, 6, 6, 1]]).unwrap();
        assert_eq!(z.shape(), (10, 7));
        for r in 0..10 {
            assert!(z.row(r).iter().all(|v| *v == z.get(r, 0)));
        }
    }

    #[test]
    fn layer_zero_tap_is_embedding() {
        let p = DecoderParams::init(small(), &mut Rng::new(3, 0)).unwrap();
        let toks = vec![vec![3, 1, 4, 1, 5]];
        let h = hidden_at(&p, &toks, 0).unwrap();
        let emb = p.get(ParamId::TokenEmbedding).unwrap();
        let pos = p.get(ParamId::PositionEmbedding).unwrap();
        for (i, &t) in toks[0].iter().enumerate() {
            for c in 0..8 {
                assert_eq!(h.get(i, c), emb.get(t, c) + pos.get(i, c));
            }
        }
    }

    #[test]
    fn bad_tokens_rejected() {
        let p = DecoderParams::zeros(small()).unwrap();
        assert_eq!(
            logits(&p, &[vec![1, 2, 3, 4, 7]]),
            Err(ModelError::TokenOutOfRange { token: 7, vocab: 7 })
        );
        assert!(matches!(logits(&p, &[vec![1, 2]]), Err(ModelError::SequenceLength { .. })));
        assert_eq!(logits(&p, &[]), Err(ModelError::EmptyBatch));
    }

    #[test]
    fn causal_prefix_independence() {
        let p = DecoderParams::init(small(), &mut Rng::new(4, 0)).unwrap();
        let a = logits(&p, &[vec![1, 2, 3, 4, 5]]).unwrap();
        let b = logits(&p, &[vec![1, 2, 3, 0, 6]]).unwrap();
        for r in 0..3 {
            assert_eq!(a.row(r), b.row(r));
        }
        assert_ne!(a.row(3), b.row(3));
    }
}
