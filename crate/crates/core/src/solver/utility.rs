use std::fmt::Debug;

/// A utility `U(x, y)` of one decision atom `x` and one environment atom `y`,
/// with its gradient (or a subgradient selection) in `x`.
pub trait Utility: Debug + Send + Sync {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    /// Writes `∂U/∂x (x, y)` into `grad`, which has the length of `x`.
    fn gradient(&self, x: &[f64], y: &[f64], grad: &mut [f64]);
}

/// `U(x, y) = ⟨x, y⟩`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearUtility;

impl Utility for LinearUtility {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, _x: &[f64], y: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(y);
    }
}

/// CARA utility `U(x, y) = −e^{−α(x+y)}/α` on scalar atoms.
#[derive(Debug, Clone, Copy)]
pub struct CaraUtility {
    pub risk_aversion: f64,
}

impl Utility for CaraUtility {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let a = self.risk_aversion;
        -(-a * (x[0] + y[0])).exp() / a
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        grad[0] = (-self.risk_aversion * (x[0] + y[0])).exp();
    }
}

/// `U(x, y) = −‖x − y‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticTracking;

impl Utility for QuadraticTracking {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        -x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        for ((g, a), b) in grad.iter_mut().zip(x).zip(y) {
            *g = -2.0 * (a - b);
        }
    }
}

/// Negated shortage `U(x, y) = −Σ_k max(y_k − x_k, 0)`.
///
/// Non-smooth at `x_k = y_k`; the gradient selects `1{x_k < y_k}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShortageUtility;

impl Utility for ShortageUtility {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        -x.iter().zip(y).map(|(a, b)| (b - a).max(0.0)).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        for ((g, a), b) in grad.iter_mut().zip(x).zip(y) {
            *g = if a < b { 1.0 } else { 0.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_difference(u: &dyn Utility, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[k] += h;
                dn[k] -= h;
                (u.value(&up, y) - u.value(&dn, y)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn smooth_gradients_match_finite_differences() {
        let cases: Vec<(Box<dyn Utility>, Vec<f64>, Vec<f64>)> = vec![
            (Box::new(CaraUtility { risk_aversion: 0.5 }), vec![0.7], vec![1.0]),
            (Box::new(CaraUtility { risk_aversion: 2.0 }), vec![-0.3], vec![0.0]),
            (Box::new(LinearUtility), vec![0.2, -1.0], vec![3.0, 0.5]),
            (Box::new(QuadraticTracking), vec![0.2, -1.0], vec![3.0, 0.5]),
        ];
        for (u, x, y) in cases {
            let mut g = vec![0.0; x.len()];
            u.gradient(&x, &y, &mut g);
            let fd = central_difference(u.as_ref(), &x, &y, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6, "{u:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shortage_subgradient_selection() {
        let mut g = [0.0; 3];
        ShortageUtility.gradient(&[1.0, 2.0, 0.5], &[2.0, 2.0, 0.0], &mut g);
        assert_eq!(g, [1.0, 0.0, 0.0]);
        assert_eq!(ShortageUtility.value(&[1.0, 2.0, 0.5], &[2.0, 2.0, 0.0]), -1.0);
    }
}
