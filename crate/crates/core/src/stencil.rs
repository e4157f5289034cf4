//! Lagrange weights on explicit (possibly non-uniform) coordinate lists.

/// Weights `w_j` with `sum_j w_j f(nodes[j]) ~ f^(order)(at)`.
///
/// Fornberg's recursion; exact for polynomials of degree `< nodes.len()`.
pub fn derivative_weights(nodes: &[f64], at: f64, order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > order, "need more nodes than the derivative order");
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - at;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - at;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Interpolation weights (zeroth derivative).
pub fn interpolation_weights(nodes: &[f64], at: f64) -> Vec<f64> {
    derivative_weights(nodes, at, 0)
}

/// Start index of the `width`-point window of sorted `nodes` best centred on `at`.
pub fn window_start(nodes: &[f64], at: f64, width: usize) -> usize {
    let n = nodes.len();
    assert!(n >= width);
    let upper = nodes.partition_point(|&x| x < at);
    let half = width / 2;
    upper.saturating_sub(half).min(n - width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        let nodes = [0.0, 0.3, 0.7, 1.5, 2.0];
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x - 0.1 * x.powi(4);
        let dp = |x: f64| -2.0 + 1.5 * x * x - 0.4 * x.powi(3);
        let ddp = |x: f64| 3.0 * x - 1.2 * x * x;
        let at = 0.9;
        let vals: Vec<f64> = nodes.iter().map(|&x| p(x)).collect();
        let apply = |w: Vec<f64>| w.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>();
        assert!((apply(interpolation_weights(&nodes, at)) - p(at)).abs() < 1e-12);
        assert!((apply(derivative_weights(&nodes, at, 1)) - dp(at)).abs() < 1e-12);
        assert!((apply(derivative_weights(&nodes, at, 2)) - ddp(at)).abs() < 1e-11);
    }

    #[test]
    fn central_three_point() {
        let w = derivative_weights(&[-1.0, 0.0, 1.0], 0.0, 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = derivative_weights(&[-1.0, 0.0, 1.0], 0.0, 1);
        assert_eq!(w, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn windows() {
        let nodes = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(window_start(&nodes, 2.5, 4), 1);
        assert_eq!(window_start(&nodes, 0.1, 4), 0);
        assert_eq!(window_start(&nodes, 4.9, 4), 2);
    }
}
