use serde::{Deserialize, Serialize};

use super::{Result, TheoryError};
use crate::numcore::{exact_sum, singular_values, softmax_rows, xavier_init, Matrix, Rng};

/// Key and query projections of one attention layer, both `d × d_Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnParams {
    key: Matrix,
    query: Matrix,
}

impl AttnParams {
    pub fn new(key: Matrix, query: Matrix) -> Result<Self> {
        if key.shape() != query.shape() {
            return Err(TheoryError::Shape(format!(
                "key {:?} and query {:?} must have equal shapes",
                key.shape(),
                query.shape()
            )));
        }
        Ok(Self { key, query })
    }

    /// Builds the layer and rescales each projection whose operator 2-norm
    /// exceeds `budget` down to exactly `budget`.
    pub fn with_norm_budget(key: Matrix, query: Matrix, budget: f64) -> Result<Self> {
        if !(budget >= 0.0) {
            return Err(TheoryError::InvalidArgument(format!("norm budget must be >= 0, got {budget}")));
        }
        let key = project_to_ball(key, budget)?;
        let query = project_to_ball(query, budget)?;
        Self::new(key, query)
    }

    pub fn zeros(d: usize, dq: usize) -> Self {
        Self {
            key: Matrix::zeros(d, dq),
            query: Matrix::zeros(d, dq),
        }
    }

    pub fn xavier(d: usize, dq: usize, rng: &mut Rng) -> Self {
        let key = xavier_init(d, dq, rng);
        let query = xavier_init(d, dq, rng);
        Self { key, query }
    }

    /// Gaussian directions rescaled to operator norm exactly `budget`.
    pub fn random_bounded(d: usize, dq: usize, budget: f64, rng: &mut Rng) -> Self {
        let key = rescale_to(rng.normal_matrix(d, dq), budget);
        let query = rescale_to(rng.normal_matrix(d, dq), budget);
        Self { key, query }
    }

    pub fn key(&self) -> &Matrix {
        &self.key
    }

    pub fn query(&self) -> &Matrix {
        &self.query
    }

    pub fn d(&self) -> usize {
        self.key.rows()
    }

    pub fn dq(&self) -> usize {
        self.key.cols()
    }

    /// Largest operator norm of the two projections.
    pub fn max_operator_norm(&self) -> f64 {
        op_norm(&self.key).max(op_norm(&self.query))
    }
}

pub(crate) fn op_norm(m: &Matrix) -> f64 {
    singular_values(m).map(|s| s[0]).unwrap_or(f64::NAN)
}

fn rescale_to(m: Matrix, target: f64) -> Matrix {
    let s = op_norm(&m);
    if s == 0.0 {
        m
    } else {
        m.scale(target / s)
    }
}

fn project_to_ball(m: Matrix, budget: f64) -> Result<Matrix> {
    m.ensure_finite("norm projection")?;
    let s = op_norm(&m);
    Ok(if s > budget { m.scale(budget / s) } else { m })
}

fn check_input(x: &Matrix, p: &AttnParams) -> Result<()> {
    if x.cols() != p.d() {
        return Err(TheoryError::Shape(format!(
            "input has {} columns but projections expect d = {}",
            x.cols(),
            p.d()
        )));
    }
    x.ensure_finite("phi_layer")?;
    if x.is_zero() {
        return Err(TheoryError::ZeroInput);
    }
    Ok(())
}

/// Row-stochastic attention matrix `softmax(XQ(XK)ᵀ / (√d_Q‖X‖_F²))`.
pub fn attention_matrix(x: &Matrix, p: &AttnParams) -> Result<Matrix> {
    check_input(x, p)?;
    let xq = x.matmul_exact(&p.query)?;
    let xk = x.matmul_exact(&p.key)?;
    let scores = xq.matmul_exact(&xk.transpose())?;
    let fro_sq = exact_sum(x.data().iter().map(|v| v * v));
    let denom = (p.dq() as f64).sqrt() * fro_sq;
    Ok(softmax_rows(&scores.map(|s| s / denom))?)
}

/// One normalized residual self-attention layer: `X + M·X`.
pub fn phi_layer(x: &Matrix, p: &AttnParams) -> Result<Matrix> {
    let m = attention_matrix(x, p)?;
    let mx = m.matmul_exact(x)?;
    Ok(x.add(&mx)?)
}

/// Per-column `|1ᵀφ(X)[p]| / |1ᵀX[p]|`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingProbe {
    /// `None` for columns whose `1ₙ`-component is zero.
    pub ratios: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

impl DoublingProbe {
    pub fn measured(&self) -> impl Iterator<Item = f64> + '_ {
        self.ratios.iter().flatten().copied()
    }

    pub fn max_abs_deviation_from_two(&self) -> f64 {
        self.measured().fold(0.0, |m, r| m.max((r - 2.0).abs()))
    }
}

pub fn doubling_ratio_probe(x: &Matrix, p: &AttnParams) -> Result<DoublingProbe> {
    let out = phi_layer(x, p)?;
    let before = x.column_sums();
    let after = out.column_sums();
    let mut ratios = Vec::with_capacity(before.len());
    let mut skipped = Vec::new();
    for (col, (b, a)) in before.iter().zip(&after).enumerate() {
        if *b == 0.0 {
            ratios.push(None);
            skipped.push(col);
        } else {
            ratios.push(Some(a.abs() / b.abs()));
        }
    }
    Ok(DoublingProbe { ratios, skipped })
}

/// Left-hand side of `√(1 − 1/√(1+x²)) ≤ x`.
pub fn technical_inequality_lhs(x: f64) -> f64 {
    (1.0 - 1.0 / (1.0 + x * x).sqrt()).sqrt()
}

/// Checks the inequality on `samples` uniform draws from `(0, 1)` plus the
/// points `1e-12` and `1 − 1e-12`.
pub fn technical_inequality_check(samples: usize, rng: &mut Rng) -> Result<bool> {
    if samples == 0 {
        return Err(TheoryError::InvalidArgument("samples must be >= 1".into()));
    }
    let holds = |x: f64| technical_inequality_lhs(x) <= x;
    let mut ok = holds(1e-12) && holds(1.0 - 1e-12);
    for _ in 0..samples {
        let x = loop {
            let u = rng.uniform();
            if u > 0.0 {
                break u;
            }
        };
        ok &= holds(x);
    }
    Ok(ok)
}
