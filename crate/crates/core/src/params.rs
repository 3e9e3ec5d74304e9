//! Uniform access to the named tensors of a parameter set, used by the
//! optimizer, the gradient checker and checkpoints.

use ndarray::{ArrayViewD, ArrayViewMutD, Zip};
use rand::Rng;

pub trait ParamSet {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;
    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)>;

    /// Same shapes, all zeros.
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for ((_, mut dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            Zip::from(&mut dst).and(&s).for_each(|d, &v| *d += scale * v);
        }
    }

    fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().map(|v| v * v).collect::<Vec<_>>())
            .sum()
    }

    fn fill_uniform<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|_| rng.gen_range(-scale..scale));
        }
    }
}
