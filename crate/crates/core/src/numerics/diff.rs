/// Central-difference gradient `(f(x+h·e_i) − f(x−h·e_i)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_cases() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() <= 1e-6);
        assert_eq!(finite_diff_grad(|_| 4.2, &[1.0, 2.0], 1e-3), vec![0.0, 0.0]);
        let g = finite_diff_grad(|x| x[0].sin(), &[0.0], 1e-5);
        assert!((g[0] - 1.0).abs() <= 1e-8);
    }
}
