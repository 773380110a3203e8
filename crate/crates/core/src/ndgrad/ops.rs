use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

/// Logistic function, branching on the sign so `exp` never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Borrowed strided matrix view used to feed the gemm kernel.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T: Scalar> MatRef<'a, T> {
    pub(crate) fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix view size");
        MatRef {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub(crate) fn of(t: &'a Tensor<T>) -> Self {
        Self::new(t.data(), t.rows(), t.cols())
    }

    pub(crate) fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c <- alpha * a * b + beta * c` with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(c.len(), a.rows * b.cols, "gemm output size");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the views were built from slices whose lengths match their
    // dimensions (asserted in `MatRef::new`); transposition only swaps strides.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// `input · weights + bias` for a `B×I` input, `I×O` weights and length-`O` bias.
pub fn affine_apply<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, i) = input.ensure_matrix("affine input")?;
    let (wi, o) = weights.ensure_matrix("affine weights")?;
    if wi != i {
        return Err(Error::dim(format!(
            "input has {i} features but weights expect {wi}"
        )));
    }
    if bias.len() != o {
        return Err(Error::dim(format!(
            "bias has {} entries, weights produce {o}",
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(b * o);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    gemm(
        T::one(),
        MatRef::of(input),
        MatRef::of(weights),
        T::one(),
        &mut out,
    );
    Tensor::matrix(b, o, out)
}

pub fn activation_apply<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|v| kind.apply(v))
}
