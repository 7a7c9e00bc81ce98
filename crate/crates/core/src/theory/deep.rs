use serde::{Deserialize, Serialize};

use super::layer::{phi_layer, AttnParams};
use super::{Result, TheoryError};
use crate::numcore::{exact_sum, singular_values, Matrix, Rng};

/// Rank-one declaration threshold, applied to both the largest column
/// deviation and `σ₂/σ₁`.
pub const COLLAPSE_TOL: f64 = 1e-6;

/// How layers past the end of a stack are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Layer `k` reuses layer `((k − 1) mod L) + 1`.
    Cycle,
    /// Layer `k` is a fresh bounded draw from stream `k` of `seed`.
    Resample { seed: u64 },
}

/// Victim layer sequence `φ_1, …, φ_L` under a shared norm budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryStack {
    layers: Vec<AttnParams>,
    n: usize,
    d: usize,
    dq: usize,
    norm_budget: f64,
    extension: Extension,
}

impl TheoryStack {
    pub fn new(layers: Vec<AttnParams>, n: usize, norm_budget: f64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| TheoryError::InvalidArgument("stack needs at least one layer".into()))?;
        let (d, dq) = (first.d(), first.dq());
        if n == 0 {
            return Err(TheoryError::InvalidArgument("n must be positive".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if (l.d(), l.dq()) != (d, dq) {
                return Err(TheoryError::Shape(format!("layer {} has shape {:?}", i + 1, (l.d(), l.dq()))));
            }
            let norm = l.max_operator_norm();
            if norm > norm_budget * (1.0 + 1e-9) + 1e-15 {
                return Err(TheoryError::InvalidArgument(format!(
                    "layer {} has operator norm {norm} above budget {norm_budget}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            layers,
            n,
            d,
            dq,
            norm_budget,
            extension: Extension::Cycle,
        })
    }

    /// `depth` Gaussian layers, each projection rescaled to operator norm `budget`.
    pub fn random(n: usize, d: usize, dq: usize, budget: f64, depth: usize, rng: &mut Rng) -> Result<Self> {
        if depth == 0 {
            return Err(TheoryError::InvalidArgument("depth must be positive".into()));
        }
        let layers = (0..depth).map(|_| AttnParams::random_bounded(d, dq, budget, rng)).collect();
        Self::new(layers, n, budget)
    }

    /// Same layer repeated `depth` times.
    pub fn repeated(layer: AttnParams, n: usize, budget: f64, depth: usize) -> Result<Self> {
        Self::new(vec![layer; depth.max(1)], n, budget)
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = extension;
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.d, self.dq)
    }

    pub fn norm_budget(&self) -> f64 {
        self.norm_budget
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn layers(&self) -> &[AttnParams] {
        &self.layers
    }

    /// Victim layer at 1-based `depth`, extending past the stack as configured.
    pub fn layer_at(&self, depth: usize) -> std::borrow::Cow<'_, AttnParams> {
        let l = self.layers.len();
        if depth >= 1 && depth <= l {
            return std::borrow::Cow::Borrowed(&self.layers[depth - 1]);
        }
        match self.extension {
            Extension::Cycle => std::borrow::Cow::Borrowed(&self.layers[(depth.max(1) - 1) % l]),
            Extension::Resample { seed } => {
                let mut rng = Rng::new(seed, depth as u64);
                std::borrow::Cow::Owned(AttnParams::random_bounded(self.d, self.dq, self.norm_budget, &mut rng))
            }
        }
    }
}

/// A secured layer index (1-based) and the attacker's replacement for it.
#[derive(Clone, Debug, PartialEq)]
pub struct Securing {
    pub index: usize,
    pub replacement: AttnParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeepOptions {
    /// Stop once successive normalized iterates differ by less than this.
    pub tol: f64,
    pub max_layers: usize,
}

impl Default for DeepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_layers: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// `min_± ‖f̂[p]/‖f̂[p]‖ ∓ 1ₙ/√n‖₂` per column.
    pub deviation_per_column: Vec<f64>,
    /// `σ₂/σ₁` of the normalized output (0 when it has a single singular value).
    pub sigma_ratio: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Frobenius-normalized output at the last iterate.
    pub output: Matrix,
}

impl CollapseReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviation_per_column.iter().fold(0.0, |a, b| a.max(*b))
    }

    pub fn min_deviation(&self) -> f64 {
        self.deviation_per_column.iter().fold(f64::INFINITY, |a, b| a.min(*b))
    }

    pub fn mean_deviation(&self) -> f64 {
        self.deviation_per_column.iter().sum::<f64>() / self.deviation_per_column.len() as f64
    }

    /// Rank-one collapse: every column within `tol` of `±1ₙ/√n` and `σ₂/σ₁ < tol`.
    pub fn collapsed(&self, tol: f64) -> bool {
        self.max_deviation() < tol && self.sigma_ratio < tol
    }
}

/// Distance of each column's direction from the nearer of `±1ₙ/√n`.
/// Zero columns are parallel to every direction and report 0.
pub fn column_deviations(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    (0..x.cols())
        .map(|c| {
            let col = x.column(c);
            let norm = exact_sum(col.iter().map(|v| v * v)).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let plus = exact_sum(col.iter().map(|v| (v / norm - inv_sqrt_n).powi(2))).sqrt();
            let minus = exact_sum(col.iter().map(|v| (v / norm + inv_sqrt_n).powi(2))).sqrt();
            plus.min(minus)
        })
        .collect()
}

fn normalize(x: &Matrix) -> Result<Matrix> {
    let norm = exact_sum(x.data().iter().map(|v| v * v)).sqrt();
    if norm == 0.0 {
        return Err(TheoryError::ZeroInput);
    }
    Ok(x.map(|v| v / norm))
}

/// Iterates the stack with per-layer Frobenius renormalization, substituting
/// the replacement at the secured depth. Layers beyond the stack come from
/// its [`Extension`]. Convergence is only declared once the secured layer has
/// been applied.
pub fn deep_normalized_output(
    x0: &Matrix,
    stack: &TheoryStack,
    securing: Option<&Securing>,
    opts: &DeepOptions,
) -> Result<CollapseReport> {
    let (n, d, _) = stack.dims();
    if x0.shape() != (n, d) {
        return Err(TheoryError::Shape(format!("input is {:?}, stack expects {:?}", x0.shape(), (n, d))));
    }
    if !(opts.tol > 0.0) || opts.max_layers == 0 {
        return Err(TheoryError::InvalidArgument("tol must be > 0 and max_layers >= 1".into()));
    }
    if let Some(s) = securing {
        if s.index == 0 || s.index > opts.max_layers {
            return Err(TheoryError::InvalidArgument(format!(
                "secured index {} outside 1..={}",
                s.index, opts.max_layers
            )));
        }
        if (s.replacement.d(), s.replacement.dq()) != (stack.d, stack.dq) {
            return Err(TheoryError::Shape("replacement layer shape differs from the stack".into()));
        }
    }
    x0.ensure_finite("deep_normalized_output")?;
    let mut x = normalize(x0)?;
    let earliest_stop = securing.map_or(1, |s| s.index);

    let mut converged = false;
    let mut used = 0;
    for depth in 1..=opts.max_layers {
        let next = match securing {
            Some(s) if s.index == depth => phi_layer(&x, &s.replacement)?,
            _ => phi_layer(&x, &stack.layer_at(depth))?,
        };
        let next = normalize(&next)?;
        let change = next.sub(&x)?.frobenius_norm();
        x = next;
        used = depth;
        if depth >= earliest_stop && change < opts.tol {
            converged = true;
            break;
        }
    }

    let sv = singular_values(&x)?;
    let sigma_ratio = if sv.len() < 2 || sv[0] == 0.0 { 0.0 } else { sv[1] / sv[0] };
    Ok(CollapseReport {
        deviation_per_column: column_deviations(&x),
        sigma_ratio,
        iterations_used: used,
        converged,
        output: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_direction_is_fixed() {
        let mut rng = Rng::new(11, 0);
        let stack = TheoryStack::random(5, 4, 2, 1.0, 7, &mut rng).unwrap();
        let w = [0.5, -2.0, 1.5, 3.0];
        let x0 = Matrix::outer(&[1.0; 5], &w);
        for depth in [1, 10, 100, 1000] {
            let opts = DeepOptions {
                tol: 1e-300,
                max_layers: depth,
            };
            let rep = deep_normalized_output(&x0, &stack, None, &opts).unwrap();
            assert!(rep.max_deviation() < 1e-12, "depth {depth}: {}", rep.max_deviation());
        }
    }

    #[test]
    fn cycle_and_resample_extend() {
        let mut rng = Rng::new(1, 0);
        let stack = TheoryStack::random(3, 4, 2, 0.5, 2, &mut rng).unwrap();
        assert_eq!(*stack.layer_at(3), stack.layers()[0]);
        assert_eq!(*stack.layer_at(4), stack.layers()[1]);
        let re = stack.clone().with_extension(Extension::Resample { seed: 9 });
        assert_eq!(*re.layer_at(2), stack.layers()[1]);
        let a = re.layer_at(5).into_owned();
        assert_eq!(a, re.layer_at(5).into_owned());
        assert_ne!(a, *re.layer_at(6));
        assert!(a.max_operator_norm() <= 0.5 * (1.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_configuration() {
        let mut rng = Rng::new(2, 0);
        let stack = TheoryStack::random(3, 4, 2, 0.5, 2, &mut rng).unwrap();
        let x0 = rng.normal_matrix(3, 4);
        let opts = DeepOptions::default();
        assert!(deep_normalized_output(&Matrix::zeros(3, 4), &stack, None, &opts).is_err());
        assert!(deep_normalized_output(&rng.normal_matrix(4, 4), &stack, None, &opts).is_err());
        let s = Securing {
            index: 0,
            replacement: AttnParams::zeros(4, 2),
        };
        assert!(deep_normalized_output(&x0, &stack, Some(&s), &opts).is_err());
        let over = AttnParams::random_bounded(4, 2, 2.0, &mut rng);
        assert!(TheoryStack::new(vec![over], 3, 1.0).is_err());
    }

    #[test]
    fn deviations_take_nearer_sign() {
        let x = Matrix::from_rows(&[&[-1.0, 1.0], &[-1.0, -1.0]]).unwrap();
        let dev = column_deviations(&x);
        assert!(dev[0] < 1e-15);
        assert!((dev[1] - 2f64.sqrt()).abs() < 1e-15);
    }
}
