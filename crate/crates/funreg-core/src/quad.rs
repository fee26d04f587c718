//! Composite Simpson quadrature on the unit interval, used where an integral
//! of a smooth closed-form integrand is needed on a dense auxiliary grid.

/// Integrates `f` over `[0, 1]` with `intervals` panels (rounded up to even),
/// i.e. `intervals + 1` nodes.
pub fn simpson_unit(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals.max(2) } else { intervals + 1 };
    let h = 1.0 / n as f64;
    let mut sum = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        // Simpson is exact through cubics.
        let v = simpson_unit(|x| x * x * x, 2);
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn integrates_exponential() {
        let v = simpson_unit(|x| (-x).exp(), 2048);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-13);
    }
}
