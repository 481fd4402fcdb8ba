use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Relu => z.map(|x| x.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiply `grad` in place by the derivative at `z`. The ReLU kink takes
    /// derivative 0.
    fn backprop(self, z: &Matrix, grad: &mut Matrix) {
        if self == Activation::Relu {
            grad.data_mut()
                .iter_mut()
                .zip(z.data())
                .for_each(|(g, &x)| if x <= 0.0 { *g = 0.0 });
        }
    }
}

/// Fully connected layer; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Matrix::zeros(output, input), b: vec![0.0; output] }
    }

    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        if w.rows() != b.len() {
            return Err(Error::Shape(format!(
                "weight has {} rows, bias has {} entries",
                w.rows(),
                b.len()
            )));
        }
        Ok(Self { w, b })
    }

    pub fn input_width(&self) -> usize {
        self.w.cols()
    }

    pub fn output_width(&self) -> usize {
        self.w.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w.data().len() + self.b.len()
    }

    /// `x W^T + b` for a batch `x`.
    pub fn pre_activation(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "dense layer expects width {}, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let mut z = x.matmul_t(&self.w)?;
        for i in 0..z.rows() {
            z.row_mut(i).iter_mut().zip(&self.b).for_each(|(v, b)| *v += b);
        }
        Ok(z)
    }

    /// Returns parameter gradients and the gradient w.r.t. the layer input.
    pub fn backward(
        &self,
        input: &Matrix,
        z: &Matrix,
        act: Activation,
        grad_out: &Matrix,
    ) -> Result<(DenseGrad, Matrix)> {
        if grad_out.shape() != z.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs activation {:?}",
                grad_out.shape(),
                z.shape()
            )));
        }
        let mut dz = grad_out.clone();
        act.backprop(z, &mut dz);
        let w = dz.t_matmul(input)?;
        let mut b = vec![0.0; self.output_width()];
        for i in 0..dz.rows() {
            b.iter_mut().zip(dz.row(i)).for_each(|(acc, g)| *acc += g);
        }
        let grad_in = dz.matmul(&self.w)?;
        Ok((DenseGrad { w, b }, grad_in))
    }
}

/// `act(x W^T + b)`.
pub fn dense_forward(x: &Matrix, w: &Matrix, b: &[f64], act: Activation) -> Result<Matrix> {
    let layer = Dense::new(w.clone(), b.to_vec())?;
    Ok(act.apply(&layer.pre_activation(x)?))
}

/// Residual block: ReLU dense chain applied to `x`, plus `x`.
pub fn resblock_forward(x: &Matrix, inner: &[Dense]) -> Result<Matrix> {
    let width = x.cols();
    if inner.is_empty() || inner.last().map(Dense::output_width) != Some(width) {
        return Err(Error::Shape(format!("residual block must map width {width} to itself")));
    }
    let mut h = x.clone();
    for layer in inner {
        h = Activation::Relu.apply(&layer.pre_activation(&h)?);
    }
    h.add_assign(x)?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_nonnegative_input() {
        let x = Matrix::row_vector(&[0.5, 2.0, 0.0]);
        let y = dense_forward(&x, &Matrix::identity(3), &[0.0; 3], Activation::Relu).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn negative_bias_is_clamped() {
        let x = Matrix::row_vector(&[3.0, -1.0]);
        let y = dense_forward(&x, &Matrix::zeros(2, 2), &[-1.0, -1.0], Activation::Relu).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn width_mismatch() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        assert!(matches!(
            dense_forward(&x, &Matrix::zeros(2, 3), &[0.0; 2], Activation::Relu),
            Err(Error::Shape(_))
        ));
        assert!(matches!(resblock_forward(&x, &[Dense::zeros(2, 3)]), Err(Error::Shape(_))));
    }

    #[test]
    fn residual_limits() {
        let x = Matrix::row_vector(&[0.3, -0.7, 1.1]);
        assert_eq!(resblock_forward(&x, &[Dense::zeros(3, 3)]).unwrap(), x);
        let pos = Matrix::row_vector(&[0.3, 0.7, 1.1]);
        let id = Dense::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(resblock_forward(&pos, &[id]).unwrap().data(), &[0.6, 1.4, 2.2]);
    }
}
