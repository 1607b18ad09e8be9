//! Dense tensors of up to three axes, batch-major.

use crate::num::Real;

/// Shape is `[batch]`, `[rows, steps]`, or `[batch, rows, steps]`; data is
/// row-major. A separate gradient buffer, when attached, shares the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert!(!shape.is_empty() && shape.len() <= 3, "1 to 3 axes supported");
        assert_eq!(data.len(), shape.iter().product::<usize>(), "shape/data mismatch");
        Tensor { shape, data, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![F::zero(); n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Flat view of sample `i` along the first axis.
    pub fn index(&self, i: usize) -> &[F] {
        let stride: usize = self.shape[1..].iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn alloc_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![F::zero(); self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [F]> {
        self.grad.as_deref_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_and_grad_buffer() {
        let mut t = Tensor::<f32>::new(vec![2, 3], (0..6).map(|i| i as f32).collect());
        assert_eq!(t.index(1), &[3.0, 4.0, 5.0]);
        assert!(t.grad().is_none());
        t.alloc_grad();
        assert_eq!(t.grad().unwrap().len(), 6);
    }

    #[test]
    #[should_panic(expected = "shape/data mismatch")]
    fn shape_mismatch_panics() {
        let _ = Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]);
    }
}
