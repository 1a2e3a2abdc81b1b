use super::NnError;

/// Dense row-major array of `f64` values with optional gradient storage.
///
/// Two-dimensional tensors are used as `[rows × cols]` matrices; a batch of
/// activations is `[batch × features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NnError::ShapeMismatch {
                context: "tensor construction",
                expected: format!("{expected} values for shape {shape:?}"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; len],
            grad: None,
        }
    }

    /// Builds a `[rows.len() × width]` matrix. All rows must share one width.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NnError> {
        let width = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(NnError::ShapeMismatch {
                    context: "tensor from rows",
                    expected: format!("row width {width}"),
                    found: format!("row width {}", row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), width], values)
    }

    /// A single observation as a `[1 × len]` batch.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            shape: vec![1, values.len()],
            values: values.to_vec(),
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    /// Gradient storage, allocated as zeros on first use.
    pub fn grad_or_zero(&mut self) -> &mut [f64] {
        let len = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Values and (possibly absent) gradient, borrowed together.
    pub fn split_mut(&mut self) -> (&mut [f64], Option<&mut [f64]>) {
        (&mut self.values, self.grad.as_deref_mut())
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Width of a matrix; `1` for vectors.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let cols = self.cols();
        &self.values[index * cols..(index + 1) * cols]
    }

    pub fn row_mut(&mut self, index: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.values[index * cols..(index + 1) * cols]
    }

    pub(crate) fn expect_cols(&self, cols: usize, context: &'static str) -> Result<(), NnError> {
        if self.shape.len() != 2 || self.shape[1] != cols {
            return Err(NnError::ShapeMismatch {
                context,
                expected: format!("[batch × {cols}]"),
                found: format!("{:?}", self.shape),
            });
        }
        Ok(())
    }

    /// Copies values from `other`, which must have the same shape. Gradients are untouched.
    pub fn copy_values_from(&mut self, other: &Tensor) -> Result<(), NnError> {
        if self.shape != other.shape {
            return Err(NnError::ShapeMismatch {
                context: "tensor copy",
                expected: format!("{:?}", self.shape),
                found: format!("{:?}", other.shape),
            });
        }
        self.values.copy_from_slice(&other.values);
        Ok(())
    }
}
