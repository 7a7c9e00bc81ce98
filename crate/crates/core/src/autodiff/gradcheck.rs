//! Central finite-difference verification of tape gradients.

use super::{Result, Tape, Target, Var};
use crate::numcore::{Matrix, Rng};

/// Which input entries to perturb.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coords {
    All,
    /// This many entries drawn uniformly over all inputs.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
}

/// Gradients with magnitude below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

fn step_for(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

fn eval(inputs: &[Matrix], build: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<(Tape, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    Ok((tape, vars, loss))
}

/// Compares reverse-mode gradients of the scalar built by `build` against
/// central differences with step `1e-6·(1+|x|)`.
pub fn check_gradients(
    name: &str,
    inputs: &[Matrix],
    coords: Coords,
    build: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    let (mut tape, vars, loss) = eval(inputs, build)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars.iter().map(|v| tape.grad(*v)).collect::<Result<_>>()?;

    let all: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, m)| (0..m.len()).map(move |k| (i, k)))
        .collect();
    let picked: Vec<(usize, usize)> = match coords {
        Coords::All => all,
        Coords::Random { count, seed } => {
            let mut rng = Rng::new(seed, 0x6772_6164);
            (0..count).map(|_| all[rng.below(all.len())]).collect()
        }
    };

    let value_at = |which: usize, k: usize, x: f64| -> Result<f64> {
        let mut moved = inputs.to_vec();
        moved[which].data_mut()[k] = x;
        let (tape, _, loss) = eval(&moved, build)?;
        Ok(tape.value(loss).get(0, 0))
    };
    let mut worst: f64 = 0.0;
    for &(which, k) in &picked {
        let x = inputs[which].data()[k];
        let h = step_for(x);
        let numeric = (value_at(which, k, x + h)? - value_at(which, k, x - h)?) / (2.0 * h);
        let a = analytic[which].data()[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    Ok(GradCheck {
        name: name.to_string(),
        checked: picked.len(),
        max_rel_error: worst,
    })
}

/// Weighted sum `Σ w ⊙ y` with fixed pseudo-random weights, so every output
/// entry receives a distinct upstream gradient.
fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(y).shape();
    let w = tape.constant(Rng::new(seed, 0x7072_6f62).normal_matrix(r, c));
    let prod = tape.hadamard(y, w)?;
    Ok(tape.sum(prod))
}

/// Gradient checks of every tape primitive on seeded 3×4-scale inputs.
pub fn primitive_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = Rng::new(seed, 0x7072_696d);
    let mut m = |r: usize, c: usize| rng.normal_matrix(r, c);
    let a34 = m(3, 4);
    let b34 = m(3, 4);
    let b42 = m(4, 2);
    let w42 = m(4, 2);
    let x64 = m(6, 4);
    let gain = m(1, 4);
    let s33 = m(6, 3);
    let p63 = m(6, 3);
    let v63 = m(6, 3);
    let logits = m(3, 4);
    let soft = {
        let raw = m(3, 4);
        let mut t = Tape::new();
        let v = t.constant(raw);
        let p = t.row_softmax(v)?;
        t.value(p).clone()
    };
    let labels = vec![2usize, 0, 3];
    let mask = vec![true, false, true];
    let mse_target = m(3, 4);
    let ids = vec![2usize, 0, 2, 1];
    let all = Coords::All;

    let mut out = Vec::new();
    out.push(check_gradients("matmul", &[a34.clone(), b42], all, &|t, v| {
        let y = t.matmul(v[0], v[1])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("matmul_nt", &[a34.clone(), b34.clone()], all, &|t, v| {
        let y = t.matmul_nt(v[0], v[1])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("add", &[a34.clone(), b34.clone()], all, &|t, v| {
        let y = t.add(v[0], v[1])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("add_tiled", &[x64.clone(), b34.clone()], all, &|t, v| {
        let y = t.add_tiled(v[0], v[1])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("scale", &[a34.clone()], all, &|t, v| {
        let y = t.scale(v[0], -2.5);
        probe(t, y, seed)
    })?);
    out.push(check_gradients("hadamard", &[a34.clone(), b34.clone()], all, &|t, v| {
        let y = t.hadamard(v[0], v[1])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("relu", &[a34.clone()], all, &|t, v| {
        let y = t.relu(v[0]);
        probe(t, y, seed)
    })?);
    out.push(check_gradients("row_softmax", &[a34.clone()], all, &|t, v| {
        let y = t.row_softmax(v[0])?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("rms_norm", &[a34.clone(), gain], all, &|t, v| {
        let y = t.rms_norm(v[0], v[1], 1e-6)?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("embedding_gather", &[a34.clone()], all, &|t, v| {
        let y = t.embedding_gather(v[0], &ids)?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("causal_mask", &[s33], all, &|t, v| {
        let y = t.causal_mask(v[0], 3)?;
        let p = t.row_softmax(y)?;
        probe(t, p, seed)
    })?);
    out.push(check_gradients("block_matmul_nt", &[x64.clone(), m(6, 4)], all, &|t, v| {
        let y = t.block_matmul_nt(v[0], v[1], 3)?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("block_matmul", &[p63, v63], all, &|t, v| {
        let y = t.block_matmul(v[0], v[1], 3)?;
        probe(t, y, seed)
    })?);
    out.push(check_gradients("cross_entropy_hard", &[logits.clone()], all, &|t, v| {
        t.cross_entropy(
            v[0],
            Target::Hard {
                labels: labels.clone(),
                mask: mask.clone(),
            },
        )
    })?);
    out.push(check_gradients("cross_entropy_soft", &[logits], all, &|t, v| {
        t.cross_entropy(
            v[0],
            Target::Soft {
                probs: soft.clone(),
                mask: vec![true; 3],
            },
        )
    })?);
    out.push(check_gradients("mse", &[a34.clone()], all, &|t, v| t.mse(v[0], mse_target.clone()))?);
    out.push(check_gradients("sum_relu_matmul", &[a34, w42], all, &|t, v| {
        let y = t.matmul(v[0], v[1])?;
        let r = t.relu(y);
        Ok(t.sum(r))
    })?);
    Ok(out)
}
