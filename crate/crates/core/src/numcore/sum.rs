//! Correctly rounded floating-point summation (Shewchuk partials, as in
//! CPython's `math.fsum`).

/// Sum of `values`, correctly rounded to nearest-even. The result is
/// independent of the order of the inputs.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Half-way case: the remaining partials decide the rounding direction.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_exactly() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1, 0.2, -0.3]), 2.7755575615628914e-17);
        assert_eq!(exact_sum(std::iter::repeat(0.1).take(10)), 1.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn order_independent() {
        let v = [1e-3, 3.3, -2.2, 1e16, 7.0, -1e16, 0.125, 1.0 / 3.0];
        let a = exact_sum(v);
        let mut w = v;
        w.reverse();
        assert_eq!(a, exact_sum(w));
        w.swap(0, 4);
        w.swap(2, 7);
        assert_eq!(a, exact_sum(w));
    }
}
