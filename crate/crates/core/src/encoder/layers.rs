use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::distr::{Distribution, Uniform};

use crate::scalar::Scalar;

/// `max(x, 0)`, letting NaN through so divergence stays visible.
pub fn relu<F: Scalar>(x: F) -> F {
    if x < F::zero() {
        F::zero()
    } else {
        x
    }
}

/// `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Dense {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || F::of(dist.sample(rng))),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<'_, F>) -> Array1<F> {
        self.weight.dot(&x) + &self.bias
    }

    /// Row-wise forward over a `batch × in` matrix.
    pub fn forward_batch(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        x.dot(&self.weight.t()) + self.bias.view().insert_axis(Axis(0))
    }

    pub fn cast<G: Scalar>(&self) -> Dense<G> {
        Dense {
            weight: self.weight.mapv(|v| G::of(v.as_f64())),
            bias: self.bias.mapv(|v| G::of(v.as_f64())),
        }
    }
}

/// Affine → ReLU → affine.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead<F> {
    pub first: Dense<F>,
    pub second: Dense<F>,
}

impl<F: Scalar> ProjectionHead<F> {
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        ProjectionHead {
            first: Dense::glorot(inputs, hidden, rng),
            second: Dense::glorot(hidden, outputs, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.second.outputs()
    }

    /// Unnormalized projection of one feature vector.
    pub fn project(&self, feature: ArrayView1<'_, F>) -> Array1<F> {
        let hidden = self.first.forward(feature).mapv(relu);
        self.second.forward(hidden.view())
    }

    pub fn project_batch(&self, features: ArrayView2<'_, F>) -> Array2<F> {
        let hidden = self.first.forward_batch(features).mapv(relu);
        self.second.forward_batch(hidden.view())
    }

    pub fn cast<G: Scalar>(&self) -> ProjectionHead<G> {
        ProjectionHead {
            first: self.first.cast(),
            second: self.second.cast(),
        }
    }
}
