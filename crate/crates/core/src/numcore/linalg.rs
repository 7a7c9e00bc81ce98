use super::sum::exact_sum;
use super::{Matrix, NumError, Result, Rng};

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 1000;

/// Row-wise softmax with max subtraction. Row normalizers are correctly
/// rounded sums, so rows holding the same multiset of scores produce the same
/// probabilities regardless of column order.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    m.ensure_finite("softmax_rows")?;
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        for v in row.iter_mut() {
            *v = (*v - max).exp();
        }
        let z = exact_sum(row.iter().copied());
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Ok(out)
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.frobenius_norm()
}

/// Outcome of a power iteration run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The start vector comes from a fixed generator stream so that results are
/// reproducible. Stops when the estimate changes by less than `tol`
/// relative, or after `max_iter` steps with `converged = false`.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<PowerIteration> {
    if !(tol > 0.0) {
        return Err(NumError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    m.ensure_finite("spectral_norm")?;
    if m.is_zero() {
        return Ok(PowerIteration {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut rng = Rng::new(0x5eed_0f_5ec7, 0);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.normal()).collect();
    normalize(&mut v);

    let mut sigma = 0.0;
    for it in 1..=max_iter {
        let mv = mat_vec(m, &v);
        let next_sigma = norm(&mv);
        if next_sigma == 0.0 {
            // Start vector hit the null space; any direction orthogonal to it
            // is as good as another, but that is measure-zero for a random start.
            v = (0..m.cols()).map(|_| rng.normal()).collect();
            normalize(&mut v);
            continue;
        }
        let mut w = mat_t_vec(m, &mv);
        normalize(&mut w);
        v = w;
        let done = (next_sigma - sigma).abs() <= tol * next_sigma;
        sigma = next_sigma;
        if done {
            return Ok(PowerIteration {
                value: sigma,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(PowerIteration {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// Singular values in descending order via one-sided (Hestenes) Jacobi.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    m.ensure_finite("singular_values")?;
    // Orthogonalize the columns of the taller orientation.
    let a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (rows, cols) = a.shape();
    let mut colv: Vec<Vec<f64>> = (0..cols).map(|c| a.column(c)).collect();

    const MAX_SWEEPS: usize = 80;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha: f64 = colv[i].iter().map(|x| x * x).sum();
                let beta: f64 = colv[j].iter().map(|x| x * x).sum();
                let gamma: f64 = colv[i].iter().zip(&colv[j]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let xi = colv[i][r];
                    let xj = colv[j][r];
                    colv[i][r] = c * xi - s * xj;
                    colv[j][r] = s * xi + c * xj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = colv.iter().map(|c| norm(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn mat_t_vec(m: &Matrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (r, ur) in u.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(m.row(r)) {
            *o += a * ur;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let m = Matrix::from_rows(&[&[0.0, 0.0, 0.0]]).unwrap();
        let s = softmax_rows(&m).unwrap();
        for v in s.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&Matrix::from_rows(&[&[2f64.ln(), 0.0]]).unwrap()).unwrap();
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        let s = softmax_rows(&Matrix::from_rows(&[&[-1000.0, 0.0]]).unwrap()).unwrap();
        assert!(s.is_finite());
        assert!(s.get(0, 0) < 1e-300);
        assert_eq!(s.get(0, 1), 1.0);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let m = Matrix::from_rows(&[&[f64::NAN, 0.0]]).unwrap();
        assert!(matches!(softmax_rows(&m), Err(NumError::NonFinite { .. })));
        let m = Matrix::from_rows(&[&[f64::INFINITY, 0.0]]).unwrap();
        assert!(softmax_rows(&m).is_err());
    }

    #[test]
    fn spectral_norm_simple_cases() {
        let d = Matrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let p = spectral_norm(&d, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER).unwrap();
        assert!(p.converged);
        assert!((p.value - 3.0).abs() < 1e-9);
        let p = spectral_norm(&Matrix::identity(4), 1e-12, 10).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        let p = spectral_norm(&Matrix::zeros(3, 2), 1e-10, 10).unwrap();
        assert_eq!(p.value, 0.0);
        assert!(spectral_norm(&d, 0.0, 10).is_err());
    }

    #[test]
    fn spectral_norm_flags_non_convergence() {
        let m = Matrix::from_fn(6, 6, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let p = spectral_norm(&m, 1e-300, 3).unwrap();
        assert!(!p.converged);
        assert_eq!(p.iterations, 3);
    }

    #[test]
    fn singular_values_simple_cases() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 0.1, -0.7];
        let sv = singular_values(&Matrix::outer(&u, &v)).unwrap();
        assert!(sv[1] / sv[0] <= 1e-12);
        let sv = singular_values(&Matrix::identity(5)).unwrap();
        assert!(sv.iter().all(|s| (s - 1.0).abs() < 1e-15));
        let sv = singular_values(&Matrix::from_rows(&[&[0.0, 2.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(sv, vec![2.0]);
    }
}
