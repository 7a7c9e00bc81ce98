use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, NumError, Result};

/// Seedable, splittable generator. A `(seed, stream)` pair fully determines
/// the sample sequence on every platform (ChaCha8 keyed by the seed, with the
/// stream id selecting the ChaCha stream).
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent child generator. The child depends only on this
    /// generator's `(seed, stream)` and `label`, never on how many samples
    /// have been drawn.
    pub fn fork(&self, label: u64) -> Self {
        Self::new(self.seed, splitmix(self.stream ^ splitmix(label.wrapping_add(0x9e37))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer on `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal by Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Laplace(0, scale) by inversion.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        let u = loop {
            let u = self.uniform() - 0.5;
            if u > -0.5 {
                break u;
            }
        };
        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Xavier/Glorot uniform initialization on `±√(6/(rows+cols))`.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = xavier_bound(rows, cols);
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

/// I.i.d. Laplace(0, scale) entries.
pub fn laplace_sample(scale: f64, rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(NumError::InvalidArgument(format!(
            "laplace scale must be a finite non-negative number, got {scale}"
        )));
    }
    Ok(Matrix::from_fn(rows, cols, |_, _| rng.laplace(scale)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = {
            let mut r = Rng::new(42, 3);
            (0..16).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(42, 3);
            (0..16).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = Rng::new(42, 4);
            (0..16).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fork_ignores_draw_count() {
        let mut a = Rng::new(7, 0);
        let b = Rng::new(7, 0);
        a.uniform();
        assert_eq!(a.fork(5).next_u64(), b.fork(5).next_u64());
        assert_ne!(b.fork(5).next_u64(), b.fork(6).next_u64());
    }

    #[test]
    fn xavier_one_by_one_in_bounds() {
        for seed in 0..100 {
            let m = xavier_init(1, 1, &mut Rng::new(seed, 0));
            assert!(m.get(0, 0).abs() <= 3f64.sqrt());
        }
    }

    #[test]
    fn xavier_deterministic() {
        let a = xavier_init(5, 7, &mut Rng::new(20, 0));
        let b = xavier_init(5, 7, &mut Rng::new(20, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_variance_monte_carlo() {
        let mut rng = Rng::new(1234, 0);
        let mut draws = Vec::with_capacity(1_000_000);
        for _ in 0..100 {
            draws.extend_from_slice(xavier_init(100, 100, &mut rng).data());
        }
        let (_, var) = mean_var(&draws);
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() / expected < 0.05, "var {var}");
    }

    #[test]
    fn laplace_zero_scale_and_errors() {
        let mut rng = Rng::new(1, 0);
        assert!(laplace_sample(0.0, 3, 4, &mut rng).unwrap().is_zero());
        assert!(laplace_sample(-0.5, 3, 4, &mut rng).is_err());
        assert!(laplace_sample(f64::NAN, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn laplace_variance_and_median() {
        let mut rng = Rng::new(42, 0);
        let m = laplace_sample(0.5, 1000, 1000, &mut rng).unwrap();
        let (_, var) = mean_var(m.data());
        assert!((var - 0.5).abs() / 0.5 < 0.02, "var {var}");

        let mut xs = laplace_sample(0.5, 1000, 100, &mut rng).unwrap().into_data();
        xs.sort_by(f64::total_cmp);
        let median = 0.5 * (xs[49_999] + xs[50_000]);
        assert!(median.abs() < 0.01, "median {median}");
    }
}
