/// Central-difference gradient of `f` at `x`.
pub fn finite_difference_grad<E>(
    mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, E> {
    assert!(h > 0.0, "step must be positive");
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Infallible convenience wrapper.
pub fn finite_difference_grad_pure(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    match finite_difference_grad::<std::convert::Infallible>(|p| Ok(f(p)), x, h) {
        Ok(g) => g,
        Err(e) => match e {},
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let g = finite_difference_grad_pure(|x| x[0] * x[0] + x[1] * x[1], &[1.0, 2.0], 1e-4);
        assert!((g[0] - 2.0).abs() < 1e-7 && (g[1] - 4.0).abs() < 1e-7);
    }

    #[test]
    fn sine_has_taylor_remainder() {
        // sin(h)/h = 1 - h²/6 + ...
        let g = finite_difference_grad_pure(|x| x[0].sin(), &[0.0], 1e-3);
        let expect = 1e-3f64.sin() / 1e-3;
        assert!((g[0] - expect).abs() < 1e-15);
        assert!((g[0] - 0.99999983).abs() < 1e-8);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_difference_grad_pure(|_| 4.2, &[0.3, -0.1, 9.0], 1e-4);
        assert_eq!(g, vec![0.0; 3]);
    }
}
