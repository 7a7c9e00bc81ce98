use serde::{Deserialize, Serialize};

use super::beta::complement_contraction;
use super::layer::{attention_matrix, AttnParams};
use super::{Result, TheoryError};
use crate::numcore::Matrix;

/// Family of `1ₙ`-orthogonal directions the construction is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharacterBasis {
    /// Walsh characters `(−1)^{popcount(i & c)}`; used when `n` is a power of two.
    Walsh,
    /// Real Fourier modes `cos`, `sin` of `2πji/n`; used otherwise.
    Fourier,
}

/// A victim layer `(K*, Q*)` and input `X*` whose deep iterates never align
/// with `1ₙ`.
///
/// Every column of `X*` is a unit eigen-direction of the attention matrix
/// `M*` lying in the complement of `1ₙ`. The score matrix of `X*` depends only
/// on a group difference of row indices, so `M*` is doubly stochastic and
/// `(I + M*)` maps each column onto a multiple of itself: the `1ₙ`-component
/// stays exactly zero through any number of `(K*, Q*)` layers. Several
/// distinct directions are used so the output has rank greater than one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialInstance {
    pub params: AttnParams,
    pub x: Matrix,
    pub basis: CharacterBasis,
    /// Number of distinct column directions.
    pub directions: usize,
    /// Eigenvalue of `M*` on each distinct direction.
    pub eigenvalues: Vec<f64>,
    /// `max_{v ⊥ 1ₙ} ‖M* v‖` at `X*`.
    pub contraction: f64,
    /// True when the construction is preserved bit-exactly by the
    /// order-independent layer evaluation (Walsh case).
    pub exact_symmetry: bool,
}

fn walsh(n: usize, c: usize) -> Vec<f64> {
    let s = 1.0 / (n as f64).sqrt();
    (0..n).map(|i| if (i & c).count_ones() % 2 == 0 { s } else { -s }).collect()
}

fn fourier_directions(n: usize, budget: usize) -> Vec<Vec<f64>> {
    let nf = n as f64;
    let scale = (2.0 / nf).sqrt();
    let mut dirs = Vec::new();
    let mut j = 1;
    while 2 * j < n && dirs.len() + 2 <= budget {
        let w = std::f64::consts::TAU * j as f64 / nf;
        dirs.push((0..n).map(|i| scale * (w * i as f64).cos()).collect());
        dirs.push((0..n).map(|i| scale * (w * i as f64).sin()).collect());
        j += 1;
    }
    if n % 2 == 0 && dirs.len() < budget {
        let s = 1.0 / nf.sqrt();
        dirs.push((0..n).map(|i| if i % 2 == 0 { s } else { -s }).collect());
    }
    if dirs.is_empty() {
        // Budget of one with odd n: a single cosine mode; symmetry is then approximate.
        let w = std::f64::consts::TAU / nf;
        dirs.push((0..n).map(|i| scale * (w * i as f64).cos()).collect());
    }
    dirs
}

/// Builds `(K*, Q*, X*)` with `‖K*‖₂ = ‖Q*‖₂ = budget`.
pub fn adversarial_construction(n: usize, d: usize, dq: usize, budget: f64) -> Result<AdversarialInstance> {
    if n < 2 || d == 0 || dq == 0 {
        return Err(TheoryError::InvalidArgument("need n >= 2 and d, d_Q >= 1".into()));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(TheoryError::InvalidArgument(format!("norm budget must be > 0, got {budget}")));
    }
    let slots = (n - 1).min(dq).min(d);
    let (basis, dirs) = if n.is_power_of_two() {
        (CharacterBasis::Walsh, (1..=slots).map(|c| walsh(n, c)).collect::<Vec<_>>())
    } else {
        (CharacterBasis::Fourier, fourier_directions(n, slots))
    };
    let r = dirs.len();

    let mut x = Matrix::zeros(n, d);
    let mut counts = vec![0usize; r];
    for p in 0..d {
        x.set_column(p, &dirs[p % r]);
        counts[p % r] += 1;
    }
    let mut w = Matrix::zeros(d, dq);
    for p in 0..d {
        let j = p % r;
        w.set(p, j, 1.0 / (counts[j] as f64).sqrt());
    }
    let k = w.scale(budget);
    let params = AttnParams::new(k.clone(), k)?;

    let m = attention_matrix(&x, &params)?;
    let eigenvalues = dirs
        .iter()
        .map(|v| {
            let mv: Vec<f64> = (0..n).map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect();
            mv.iter().zip(v).map(|(a, b)| a * b).sum()
        })
        .collect();
    let contraction = complement_contraction(&x, &params)?;
    Ok(AdversarialInstance {
        params,
        x,
        basis,
        directions: r,
        eigenvalues,
        contraction,
        exact_symmetry: basis == CharacterBasis::Walsh,
    })
}
