//! Small numeric helpers shared by the model and the losses.

use ndarray::{Array1, Array2, ArrayView1, Axis};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let s = softmax(row.view());
        row.assign(&s);
    }
    out
}

/// Backward through a row-wise softmax: given the softmax output `p` and the
/// upstream gradient `dp`, returns the gradient w.r.t. the logits.
pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner = (p * dp).sum_axis(Axis(1)).insert_axis(Axis(1));
    p * &(dp - &inner)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(array![0.2, 0.2, 0.1].view()), 0);
        assert_eq!(argmax(array![0.1, 0.3, 0.3].view()), 1);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(array![1000.0, 1001.0, -5.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-15);
        assert!(p[1] > p[0]);
    }
}
