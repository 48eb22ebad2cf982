//! Gradient reversal: identity forward, `-λ` times the upstream gradient
//! backward.

use ndarray::{Array2, ArrayView2};

pub fn grl_forward(h: ArrayView2<f64>) -> ArrayView2<f64> {
    h
}

pub fn grl_backward(upstream: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let c = -lambda;
    upstream.mapv(|g| c * g)
}

/// Linear ramp from 0 to `lambda_max` over training progress `p ∈ [0, 1]`.
pub fn grl_schedule(progress: f64, lambda_max: f64) -> f64 {
    lambda_max * progress.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_is_identity() {
        let h = array![[1.0, -2.0]];
        assert_eq!(grl_forward(h.view()), h.view());
    }

    #[test]
    fn backward_negates_and_scales() {
        assert_eq!(grl_backward(array![[2.0, 4.0]].view(), 0.5), array![[-1.0, -2.0]]);
        assert!(grl_backward(array![[2.0, 4.0]].view(), 0.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn schedule_is_linear() {
        assert_eq!(grl_schedule(0.0, 1.0), 0.0);
        assert_eq!(grl_schedule(0.5, 1.0), 0.5);
        assert_eq!(grl_schedule(1.0, 1.0), 1.0);
    }
}
