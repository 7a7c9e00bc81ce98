use serde::{Deserialize, Serialize};

use super::layer::{attention_matrix, op_norm, AttnParams};
use super::{Result, TheoryError};
use crate::numcore::{singular_values, Matrix, Rng};

/// Orthonormal (Helmert) basis of the complement of `1ₙ`, as an `n × (n−1)` matrix.
pub fn complement_basis(n: usize) -> Matrix {
    assert!(n >= 2, "complement of 1_n needs n >= 2");
    let mut b = Matrix::zeros(n, n - 1);
    for k in 1..n {
        let kf = k as f64;
        let norm = (kf * (kf + 1.0)).sqrt();
        for i in 0..k {
            b.set(i, k - 1, 1.0 / norm);
        }
        b.set(k, k - 1, -kf / norm);
    }
    b
}

/// `max_{‖v‖=1, v ⊥ 1ₙ} ‖M v‖₂` for the attention matrix of one instance.
pub fn complement_contraction(x: &Matrix, p: &AttnParams) -> Result<f64> {
    if x.rows() < 2 {
        return Ok(0.0);
    }
    let m = attention_matrix(x, p)?;
    let mb = m.matmul(&complement_basis(x.rows()))?;
    Ok(singular_values(&mb)?[0])
}

/// `α* = log₂(2 / (1 + β))`.
pub fn alpha_star(beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(TheoryError::InvalidArgument(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok((2.0 / (1.0 + beta)).log2())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaOptions {
    pub restarts: usize,
    pub ascent_steps: usize,
    pub fd_step: f64,
}

impl Default for BetaOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            ascent_steps: 200,
            fd_step: 1e-5,
        }
    }
}

/// Best contraction found by the search, with the instance that attains it.
/// `beta` is achieved by `(key, query, x)` and is therefore a lower bound on
/// the true supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub norm_budget: f64,
    pub params: AttnParams,
    pub x: Matrix,
    /// Unit maximizing direction in the complement of `1ₙ`.
    pub v: Vec<f64>,
    pub restarts: usize,
    pub ascent_steps: usize,
}

struct Instance {
    key: Matrix,
    query: Matrix,
    x: Matrix,
}

impl Instance {
    fn attention(&self) -> Matrix {
        fast_attention(&self.x, &self.key, &self.query)
    }
}

/// Attention matrix via plain loops; the search evaluates it millions of times.
fn fast_attention(x: &Matrix, key: &Matrix, query: &Matrix) -> Matrix {
    let n = x.rows();
    let dq = key.cols();
    let mut xq = vec![0.0; n * dq];
    let mut xk = vec![0.0; n * dq];
    let mut fro = 0.0;
    for i in 0..n {
        let row = x.row(i);
        for (a, xa) in row.iter().enumerate() {
            fro += xa * xa;
            let qa = query.row(a);
            let ka = key.row(a);
            for b in 0..dq {
                xq[i * dq + b] += xa * qa[b];
                xk[i * dq + b] += xa * ka[b];
            }
        }
    }
    let denom = (dq as f64).sqrt() * fro;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            let s: f64 = (0..dq).map(|b| xq[i * dq + b] * xk[j * dq + b]).sum::<f64>() / denom;
            m.set(i, j, s);
            max = max.max(s);
        }
        let row = m.row_mut(i);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    m
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn project_out_ones(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Power steps for `max ‖M v‖` over unit `v ⊥ 1ₙ`.
fn power_steps(m: &Matrix, v: &mut Vec<f64>, steps: usize) {
    let mt = m.transpose();
    for _ in 0..steps {
        let mv = mat_vec(m, v);
        let mut w = mat_vec(&mt, &mv);
        project_out_ones(&mut w);
        if normalize(&mut w) == 0.0 {
            return;
        }
        *v = w;
    }
}

fn objective(inst: &Instance, v: &[f64]) -> f64 {
    let mv = mat_vec(&inst.attention(), v);
    mv.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(inst: &mut Instance, budget: f64) {
    for m in [&mut inst.key, &mut inst.query] {
        let s = op_norm(m);
        if s > budget {
            *m = m.scale(budget / s);
        }
    }
    let f = inst.x.frobenius_norm();
    if f > 0.0 {
        inst.x = inst.x.scale(1.0 / f);
    }
}

fn group_mut(inst: &mut Instance, which: usize) -> &mut [f64] {
    match which {
        0 => inst.key.data_mut(),
        1 => inst.query.data_mut(),
        _ => inst.x.data_mut(),
    }
}

/// Central differences of the objective for the key, query and input groups.
fn gradient(inst: &mut Instance, v: &[f64], h: f64) -> [Vec<f64>; 3] {
    let mut grads: [Vec<f64>; 3] = Default::default();
    for (which, g) in grads.iter_mut().enumerate() {
        let len = group_mut(inst, which).len();
        g.reserve(len);
        for idx in 0..len {
            let orig = group_mut(inst, which)[idx];
            group_mut(inst, which)[idx] = orig + h;
            let up = objective(inst, v);
            group_mut(inst, which)[idx] = orig - h;
            let down = objective(inst, v);
            group_mut(inst, which)[idx] = orig;
            g.push((up - down) / (2.0 * h));
        }
    }
    grads
}

/// Multi-restart projected ascent on `‖M(X; K, Q) v‖` over `‖K‖₂, ‖Q‖₂ ≤ D`,
/// nonzero `X` and unit `v ⊥ 1ₙ`. Alternates power steps on `v` with central
/// finite-difference ascent on `(K, Q, X)` followed by projection back onto
/// the norm ball. Returns the best instance found.
pub fn estimate_beta(
    n: usize,
    d: usize,
    dq: usize,
    budget: f64,
    rng: &mut Rng,
    opts: &BetaOptions,
) -> Result<BetaEstimate> {
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(TheoryError::InvalidArgument(format!("norm budget must be >= 0, got {budget}")));
    }
    if n < 2 || d == 0 || dq == 0 || opts.restarts == 0 {
        return Err(TheoryError::InvalidArgument("need n >= 2, d, d_Q >= 1 and restarts >= 1".into()));
    }
    if budget == 0.0 {
        // Zero projections give uniform attention, which annihilates 1ₙ^⊥.
        let mut v = vec![0.0; n];
        v[0] = (0.5f64).sqrt();
        v[1] = -(0.5f64).sqrt();
        return Ok(BetaEstimate {
            beta: 0.0,
            norm_budget: 0.0,
            params: AttnParams::zeros(d, dq),
            x: Matrix::filled(n, d, 1.0 / ((n * d) as f64).sqrt()),
            v,
            restarts: opts.restarts,
            ascent_steps: opts.ascent_steps,
        });
    }

    let basis = complement_basis(n);
    let mut best: Option<(f64, Instance)> = None;
    for restart in 0..opts.restarts {
        let mut r = rng.fork(restart as u64);
        let rescale = |m: Matrix| {
            let s = op_norm(&m);
            m.scale(budget / s)
        };
        let mut inst = Instance {
            key: rescale(r.normal_matrix(d, dq)),
            query: rescale(r.normal_matrix(d, dq)),
            x: r.normal_matrix(n, d),
        };
        project(&mut inst, budget);
        let mut v: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        project_out_ones(&mut v);
        normalize(&mut v);
        power_steps(&inst.attention(), &mut v, 20);

        let mut value = objective(&inst, &v);
        let mut step = 0.2;
        for _ in 0..opts.ascent_steps {
            let grads = gradient(&mut inst, &v, opts.fd_step);
            let norms: Vec<f64> = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
            if norms.iter().all(|n| *n == 0.0) {
                break;
            }
            let mut trial = Instance {
                key: inst.key.clone(),
                query: inst.query.clone(),
                x: inst.x.clone(),
            };
            for ((m, g), gn) in [&mut trial.key, &mut trial.query, &mut trial.x].into_iter().zip(&grads).zip(&norms) {
                if *gn == 0.0 {
                    continue;
                }
                let scale = step * m.frobenius_norm().max(1e-12) / gn;
                for (a, b) in m.data_mut().iter_mut().zip(g) {
                    *a += scale * b;
                }
            }
            project(&mut trial, budget);
            let mut tv = v.clone();
            power_steps(&trial.attention(), &mut tv, 3);
            let tval = objective(&trial, &tv);
            if tval > value {
                inst = trial;
                v = tv;
                value = tval;
                step = (step * 1.2).min(0.5);
            } else {
                step *= 0.5;
                if step < 1e-8 {
                    break;
                }
            }
        }
        let certified = singular_values(&inst.attention().matmul(&basis)?)?[0];
        if best.as_ref().is_none_or(|(b, _)| certified > *b) {
            best = Some((certified, inst));
        }
    }

    let (_, inst) = best.expect("at least one restart");
    let params = AttnParams::new(inst.key.clone(), inst.query.clone())?;
    // Certificate on the exact evaluation path.
    let beta = complement_contraction(&inst.x, &params)?;
    let m = attention_matrix(&inst.x, &params)?;
    let mut v: Vec<f64> = basis.column(0);
    power_steps(&m, &mut v, 500);
    Ok(BetaEstimate {
        beta,
        norm_budget: budget,
        params,
        x: inst.x,
        v,
        restarts: opts.restarts,
        ascent_steps: opts.ascent_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmert_basis_is_orthonormal_and_centered() {
        let b = complement_basis(6);
        let g = b.matmul_tn(&b).unwrap();
        assert!(g.sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-14);
        for s in b.column_sums() {
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_star_values() {
        assert_eq!(alpha_star(0.0).unwrap(), 1.0);
        assert!((alpha_star(0.5).unwrap() - (4.0f64 / 3.0).log2()).abs() < 1e-15);
        assert!((alpha_star(0.5).unwrap() - 0.415).abs() < 1e-3);
        let near = alpha_star(1.0 - 1e-12).unwrap();
        assert!(near > 0.0 && near < 1e-11);
        assert!(alpha_star(1.0).is_err());
        assert!(alpha_star(-0.1).is_err());
    }

    #[test]
    fn zero_budget_gives_zero() {
        let est = estimate_beta(4, 8, 2, 0.0, &mut Rng::new(1, 0), &BetaOptions::default()).unwrap();
        assert_eq!(est.beta, 0.0);
    }

    #[test]
    fn fast_attention_matches_exact_path() {
        let mut rng = Rng::new(4, 0);
        let p = AttnParams::random_bounded(5, 2, 1.5, &mut rng);
        let x = rng.normal_matrix(4, 5);
        let a = fast_attention(&x, p.key(), p.query());
        let b = attention_matrix(&x, &p).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-14);
    }
}
