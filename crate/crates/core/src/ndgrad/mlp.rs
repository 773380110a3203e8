use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ops::{affine_apply, gemm, Activation, MatRef};
use super::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Checks that a layer stack is non-empty, every width is positive and
/// consecutive layers chain.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::param("network needs at least one layer"));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::param(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(Error::param(format!(
                "layer {} outputs {} but layer {i} expects {}",
                i - 1,
                specs[i - 1].out_dim,
                s.in_dim
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T = f64> {
    /// `in_dim × out_dim`
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Weights and biases of a dense feed-forward stack. Also used to hold
/// gradients, which share the exact same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T = f64> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(specs: &[LayerSpec]) -> Self {
        MlpParams {
            layers: specs
                .iter()
                .map(|s| Layer {
                    weights: Tensor::zeros(&[s.in_dim, s.out_dim]),
                    bias: Tensor::zeros(&[s.out_dim]),
                })
                .collect(),
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(specs: &[LayerSpec], rng: &mut Rng) -> Self {
        let mut p = Self::zeros(specs);
        for (layer, spec) in p.layers.iter_mut().zip(specs) {
            let bound = 1.0 / (spec.in_dim as f64).sqrt();
            for v in layer
                .weights
                .data_mut()
                .iter_mut()
                .chain(layer.bias.data_mut().iter_mut())
            {
                *v = T::of((2.0 * rng.uniform() - 1.0) * bound);
            }
        }
        p
    }

    pub fn check_shapes(&self, specs: &[LayerSpec]) -> Result<()> {
        if self.layers.len() != specs.len() {
            return Err(Error::dim(format!(
                "{} parameter layers for {} layer specs",
                self.layers.len(),
                specs.len()
            )));
        }
        for (i, (l, s)) in self.layers.iter().zip(specs).enumerate() {
            if l.weights.shape() != [s.in_dim, s.out_dim] || l.bias.shape() != [s.out_dim] {
                return Err(Error::dim(format!(
                    "layer {i}: weights {:?} / bias {:?} do not match {}→{}",
                    l.weights.shape(),
                    l.bias.shape(),
                    s.in_dim,
                    s.out_dim
                )));
            }
        }
        Ok(())
    }

    /// Parameter tensors in declaration order: `W0, b0, W1, b1, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    pub fn max_abs(&self) -> T {
        self.tensors().fold(T::zero(), |m, t| m.max(t.max_abs()))
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    /// Largest absolute entrywise difference to another parameter set of the
    /// same layout.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (*x - *y).abs()))
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }
}

/// Post-activation outputs of every layer; `outputs[0]` is the input.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T = f64> {
    pub outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("trace holds at least the input")
    }

    pub fn into_output(mut self) -> Tensor<T> {
        self.outputs.pop().expect("trace holds at least the input")
    }
}

pub fn forward_trace<T: Scalar>(
    specs: &[LayerSpec],
    params: &MlpParams<T>,
    input: &Tensor<T>,
) -> Result<ForwardTrace<T>> {
    params.check_shapes(specs)?;
    let mut outputs = Vec::with_capacity(specs.len() + 1);
    outputs.push(input.clone());
    for (spec, layer) in specs.iter().zip(&params.layers) {
        let prev = outputs.last().expect("non-empty");
        let mut out = affine_apply(prev, &layer.weights, &layer.bias)?;
        if spec.activation != Activation::Identity {
            for v in out.data_mut() {
                *v = spec.activation.apply(*v);
            }
        }
        outputs.push(out);
    }
    Ok(ForwardTrace { outputs })
}

pub fn forward<T: Scalar>(
    specs: &[LayerSpec],
    params: &MlpParams<T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>> {
    Ok(forward_trace(specs, params, input)?.into_output())
}

/// Reverse pass over a recorded trace.
///
/// `upstream` is the gradient of some scalar with respect to the network
/// output. Returns the parameter gradients (when `want_params`) and the
/// gradient with respect to the network input.
pub fn backward<T: Scalar>(
    specs: &[LayerSpec],
    params: &MlpParams<T>,
    trace: &ForwardTrace<T>,
    upstream: &Tensor<T>,
    want_params: bool,
) -> Result<(Option<MlpParams<T>>, Tensor<T>)> {
    params.check_shapes(specs)?;
    if trace.outputs.len() != specs.len() + 1 {
        return Err(Error::dim("forward trace does not match the layer stack"));
    }
    if upstream.shape() != trace.output().shape() {
        return Err(Error::dim(format!(
            "upstream gradient {:?} does not match network output {:?}",
            upstream.shape(),
            trace.output().shape()
        )));
    }
    let batch = upstream.rows();
    let mut grads = want_params.then(|| MlpParams::zeros(specs));
    let mut delta = upstream.data().to_vec();

    for li in (0..specs.len()).rev() {
        let spec = specs[li];
        let y = trace.outputs[li + 1].data();
        if spec.activation != Activation::Identity {
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= spec.activation.derivative_from_output(yv);
            }
        }
        let delta_view = MatRef::new(&delta, batch, spec.out_dim);
        if let Some(g) = grads.as_mut() {
            let x = MatRef::of(&trace.outputs[li]);
            let gl = &mut g.layers[li];
            gemm(T::one(), x.t(), delta_view, T::zero(), gl.weights.data_mut());
            let gb = gl.bias.data_mut();
            for row in delta.chunks_exact(spec.out_dim) {
                for (acc, &d) in gb.iter_mut().zip(row) {
                    *acc += d;
                }
            }
        }
        let mut next = vec![T::zero(); batch * spec.in_dim];
        gemm(
            T::one(),
            delta_view,
            MatRef::of(&params.layers[li].weights).t(),
            T::zero(),
            &mut next,
        );
        delta = next;
    }
    let grad_input = Tensor::matrix(batch, specs[0].in_dim, delta)?;
    Ok((grads, grad_input))
}

/// Exact reverse-mode gradients of the scalar whose output gradient is
/// `upstream`, with respect to both the parameters and the input.
pub fn backprop_mlp<T: Scalar>(
    specs: &[LayerSpec],
    params: &MlpParams<T>,
    input: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(MlpParams<T>, Tensor<T>)> {
    let trace = forward_trace(specs, params, input)?;
    let (grads, gin) = backward(specs, params, &trace, upstream, true)?;
    Ok((grads.expect("requested"), gin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_layer_chain_rule() {
        let specs = [LayerSpec::new(2, 1, Activation::Identity)];
        let params = MlpParams {
            layers: vec![Layer {
                weights: Tensor::matrix(2, 1, vec![0.7, -1.3]).unwrap(),
                bias: Tensor::vector(vec![0.2]),
            }],
        };
        let z = Tensor::matrix(1, 2, vec![0.4, 2.5]).unwrap();
        let up = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let (g, gin) = backprop_mlp(&specs, &params, &z, &up).unwrap();
        assert_eq!(gin.data(), &[0.7, -1.3]);
        assert_eq!(g.layers[0].weights.data(), &[0.4, 2.5]);
        assert_eq!(g.layers[0].bias.data(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let specs = [
            LayerSpec::new(3, 5, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Sigmoid),
        ];
        let params = MlpParams::<f64>::init(&specs, &mut Rng::new(1));
        let z = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 1.0, 0.5, -0.5]).unwrap();
        let up = Tensor::zeros(&[2, 2]);
        let (g, gin) = backprop_mlp(&specs, &params, &z, &up).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(gin.max_abs(), 0.0);
    }

    #[test]
    fn upstream_shape_checked() {
        let specs = [LayerSpec::new(2, 3, Activation::Identity)];
        let params = MlpParams::<f64>::zeros(&specs);
        let z = Tensor::zeros(&[4, 2]);
        let up = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            backprop_mlp(&specs, &params, &z, &up),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(validate_specs(&[]).is_err());
        assert!(validate_specs(&[LayerSpec::new(0, 2, Activation::Relu)]).is_err());
        assert!(validate_specs(&[
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Sigmoid)
        ])
        .is_err());
        assert!(validate_specs(&[
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(3, 1, Activation::Sigmoid)
        ])
        .is_ok());
    }

    #[test]
    fn init_bounds() {
        let specs = [LayerSpec::new(16, 4, Activation::Relu)];
        let p = MlpParams::<f64>::init(&specs, &mut Rng::new(9));
        assert!(p.max_abs() <= 0.25);
        assert!(p.max_abs() > 0.2);
    }
}
