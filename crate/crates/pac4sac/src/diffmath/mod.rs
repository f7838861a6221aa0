//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Small define-by-run engine: a fresh [`Tape`] is built for every forward
//! pass, [`Tensor`] handles point into it, and [`Tensor::backward`] runs one
//! reverse sweep. Tensors whose parents are all detached skip recording
//! entirely, so the same forward code doubles as the no-gradient inference
//! path. Everything is 64-bit; the networks here are small enough that
//! precision wins over speed and keeps finite-difference checks tight.

mod tape;

pub mod gradcheck;

use std::rc::Rc;

pub use tape::Tape;
use tape::{sigmoid, BackOp, Src};

use crate::error::{Error, Result};

/// Dense real array, optionally recorded on a tape.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Rc<Vec<f64>>,
    node: Option<usize>,
    tape: Option<Tape>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("values", &self.values)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}


fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Detached tensor from raw values.
    pub fn from_values(values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if values.len() != shape_len(shape) {
            return Err(Error::Contract(format!(
                "value buffer of length {} does not match shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), values: Rc::new(values), node: None, tape: None })
    }

    /// Detached scalar.
    pub fn scalar(value: f64) -> Tensor {
        Tensor { shape: vec![], values: Rc::new(vec![value]), node: None, tape: None }
    }

    /// Detached tensor sharing an existing buffer.
    pub fn from_shared(values: Rc<Vec<f64>>, shape: &[usize]) -> Result<Tensor> {
        if values.len() != shape_len(shape) {
            return Err(Error::Contract(format!(
                "value buffer of length {} does not match shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), values, node: None, tape: None })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Scalar value; the tensor must hold exactly one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.values.len(), 1, "item() on non-scalar tensor");
        self.values[0]
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Copy of this tensor cut off from the tape; it never receives gradient.
    pub fn detach(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), values: self.values.clone(), node: None, tape: None }
    }

    /// Accumulated gradient, if this tensor is tracked.
    pub fn grad(&self) -> Option<Vec<f64>> {
        match (&self.tape, self.node) {
            (Some(tape), Some(node)) => Some(tape.grad_of(node)),
            _ => None,
        }
    }

    /// Reverse pass from this scalar output. Gradients accumulate into every
    /// tracked ancestor; call [`Tape::zero_grads`] between passes to reset.
    pub fn backward(&self) -> Result<()> {
        if self.values.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                self.shape
            )));
        }
        match (&self.tape, self.node) {
            (Some(tape), Some(node)) => {
                tape.backward_from(node);
                Ok(())
            }
            _ => Err(Error::Contract("backward on a detached tensor".into())),
        }
    }

    /// Same buffer viewed under a different shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape_len(shape) != self.values.len() {
            return Err(Error::ShapeMismatch { left: self.shape.clone(), right: shape.to_vec() });
        }
        let mut out = self.clone();
        out.shape = shape.to_vec();
        Ok(out)
    }

    fn src(&self) -> Src {
        Src { node: self.node, values: self.values.clone() }
    }

    fn rows_cols(&self) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::Contract(format!("expected a matrix, got shape {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

impl Tape {
    /// Tracked leaf holding `values`.
    pub fn leaf(&self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        self.leaf_shared(Rc::new(values), shape)
    }

    /// Tracked leaf sharing an existing buffer (no copy).
    pub fn leaf_shared(&self, values: Rc<Vec<f64>>, shape: &[usize]) -> Result<Tensor> {
        if values.len() != shape_len(shape) {
            return Err(Error::Contract(format!(
                "value buffer of length {} does not match shape {:?}",
                values.len(),
                shape
            )));
        }
        let node = self.push_node(values.len(), BackOp::Leaf);
        Ok(Tensor { shape: shape.to_vec(), values, node: Some(node), tape: Some(self.clone()) })
    }
}

fn joint_tape(a: &Tensor, b: &Tensor) -> Option<Tape> {
    match (&a.tape, &b.tape) {
        (Some(t1), Some(t2)) => {
            assert!(t1.same_tape(t2), "operands belong to different tapes");
            Some(t1.clone())
        }
        (Some(t), None) | (None, Some(t)) => Some(t.clone()),
        (None, None) => None,
    }
}

/// Record the result when any parent is tracked; otherwise stay detached.
fn emit(
    tape: Option<Tape>,
    values: Vec<f64>,
    shape: Vec<usize>,
    op: impl FnOnce(&Rc<Vec<f64>>) -> BackOp,
) -> Tensor {
    let values = Rc::new(values);
    match tape {
        Some(tape) => {
            let node = tape.push_node(values.len(), op(&values));
            Tensor { shape, values, node: Some(node), tape: Some(tape) }
        }
        None => Tensor { shape, values, node: None, tape: None },
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch { left: a.shape.clone(), right: b.shape.clone() });
    }
    Ok(())
}

impl Tensor {
    /// Matrix product `[m×k]·[k×n] → [m×n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols()?;
        let (k2, n) = rhs.rows_cols()?;
        if k != k2 {
            return Err(Error::ShapeMismatch { left: self.shape.clone(), right: rhs.shape.clone() });
        }
        let mut out = vec![0.0; m * n];
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.values.as_ptr(),
                k as isize,
                1,
                rhs.values.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(emit(joint_tape(self, rhs), out, vec![m, n], |_| BackOp::Matmul {
            a: self.src(),
            b: rhs.src(),
            m,
            k,
            n,
        }))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs)?;
        let out = self.values.iter().zip(rhs.values.iter()).map(|(a, b)| a + b).collect();
        Ok(emit(joint_tape(self, rhs), out, self.shape.clone(), |_| BackOp::Add {
            a: self.src(),
            b: rhs.src(),
        }))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs)?;
        let out = self.values.iter().zip(rhs.values.iter()).map(|(a, b)| a - b).collect();
        Ok(emit(joint_tape(self, rhs), out, self.shape.clone(), |_| BackOp::Sub {
            a: self.src(),
            b: rhs.src(),
        }))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs)?;
        let out = self.values.iter().zip(rhs.values.iter()).map(|(a, b)| a * b).collect();
        Ok(emit(joint_tape(self, rhs), out, self.shape.clone(), |_| BackOp::Mul {
            a: self.src(),
            b: rhs.src(),
        }))
    }

    /// Elementwise minimum; gradient follows the smaller operand (ties go left).
    pub fn minimum(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs)?;
        let out = self.values.iter().zip(rhs.values.iter()).map(|(a, b)| a.min(*b)).collect();
        Ok(emit(joint_tape(self, rhs), out, self.shape.clone(), |_| BackOp::Min {
            a: self.src(),
            b: rhs.src(),
        }))
    }

    /// Add a row vector `[n]` to every row of `[m×n]`.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.rows_cols()?;
        if row.shape != [n] {
            return Err(Error::ShapeMismatch { left: self.shape.clone(), right: row.shape.clone() });
        }
        let out = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v + row.values[i % n])
            .collect();
        Ok(emit(joint_tape(self, row), out, self.shape.clone(), |_| BackOp::AddRow {
            a: self.src(),
            row: row.src(),
            rows: m,
            cols: n,
        }))
    }

    /// Multiply every row of `[m×n]` elementwise by a row vector `[n]`.
    pub fn mul_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.rows_cols()?;
        if row.shape != [n] {
            return Err(Error::ShapeMismatch { left: self.shape.clone(), right: row.shape.clone() });
        }
        let out = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * row.values[i % n])
            .collect();
        Ok(emit(joint_tape(self, row), out, self.shape.clone(), |_| BackOp::MulRow {
            a: self.src(),
            row: row.src(),
            rows: m,
            cols: n,
        }))
    }

    pub fn square(&self) -> Tensor {
        let out = self.values.iter().map(|v| v * v).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Square { a: self.src() })
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("sqrt of negative value".into()));
        }
        let out: Vec<f64> = self.values.iter().map(|v| v.sqrt()).collect();
        Ok(emit(self.tape.clone(), out, self.shape.clone(), |out| BackOp::Sqrt {
            a: self.src(),
            out: out.clone(),
        }))
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.values.iter().map(|v| v.exp()).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |out| BackOp::Exp {
            a: self.src(),
            out: out.clone(),
        })
    }

    pub fn log(&self) -> Result<Tensor> {
        if self.values.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("log of non-positive value".into()));
        }
        let out = self.values.iter().map(|v| v.ln()).collect();
        Ok(emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Log { a: self.src() }))
    }

    /// Elementwise `x·sigmoid(x)`.
    pub fn silu(&self) -> Tensor {
        let out = self.values.iter().map(|&v| v * sigmoid(v)).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Silu { a: self.src() })
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.values.iter().map(|v| v.tanh()).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |out| BackOp::Tanh {
            a: self.src(),
            out: out.clone(),
        })
    }

    /// Clamp to `[lo, hi]`; gradient passes inside the interval and at the
    /// boundary, and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let out = self.values.iter().map(|v| v.clamp(lo, hi)).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Clamp {
            a: self.src(),
            lo,
            hi,
        })
    }

    /// Multiply by a scalar constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let out = self.values.iter().map(|v| v * factor).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Scale {
            a: self.src(),
            factor,
        })
    }

    /// Add a scalar constant.
    pub fn add_scalar(&self, offset: f64) -> Tensor {
        let out = self.values.iter().map(|v| v + offset).collect();
        emit(self.tape.clone(), out, self.shape.clone(), |_| BackOp::Shift { a: self.src() })
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    /// Mean over all elements, as a scalar.
    pub fn mean(&self) -> Tensor {
        let m = self.values.iter().sum::<f64>() / self.values.len() as f64;
        emit(self.tape.clone(), vec![m], vec![], |_| BackOp::Mean { a: self.src() })
    }

    /// Sum over all elements, as a scalar.
    pub fn sum(&self) -> Tensor {
        let s = self.values.iter().sum::<f64>();
        emit(self.tape.clone(), vec![s], vec![], |_| BackOp::Sum { a: self.src() })
    }

    /// Sum each row of `[m×n]`, yielding `[m]`.
    pub fn row_sum(&self) -> Result<Tensor> {
        let (m, n) = self.rows_cols()?;
        let out = (0..m).map(|r| self.values[r * n..(r + 1) * n].iter().sum()).collect();
        Ok(emit(self.tape.clone(), out, vec![m], |_| BackOp::RowSum { a: self.src(), cols: n }))
    }

    /// Columns `start..start+take` of `[m×n]`.
    pub fn narrow_cols(&self, start: usize, take: usize) -> Result<Tensor> {
        let (m, n) = self.rows_cols()?;
        if start + take > n {
            return Err(Error::Contract(format!(
                "column slice {}..{} out of bounds for width {}",
                start,
                start + take,
                n
            )));
        }
        let mut out = Vec::with_capacity(m * take);
        for r in 0..m {
            out.extend_from_slice(&self.values[r * n + start..r * n + start + take]);
        }
        Ok(emit(self.tape.clone(), out, vec![m, take], |_| BackOp::NarrowCols {
            a: self.src(),
            cols: n,
            start,
            take,
        }))
    }

    /// Concatenate two matrices with equal row counts along columns.
    pub fn concat_cols(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, p) = self.rows_cols()?;
        let (m2, q) = rhs.rows_cols()?;
        if m != m2 {
            return Err(Error::ShapeMismatch { left: self.shape.clone(), right: rhs.shape.clone() });
        }
        let mut out = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            out.extend_from_slice(&self.values[r * p..(r + 1) * p]);
            out.extend_from_slice(&rhs.values[r * q..(r + 1) * q]);
        }
        Ok(emit(joint_tape(self, rhs), out, vec![m, p + q], |_| BackOp::Concat {
            a: self.src(),
            b: rhs.src(),
            a_cols: p,
            b_cols: q,
        }))
    }

    /// Per-row normalization `(x − mean)/sqrt(var + eps)` over `[m×n]`.
    /// The learned gain/bias of a layer-norm block are applied by the caller.
    pub fn layer_norm(&self, eps: f64) -> Result<Tensor> {
        let (m, n) = self.rows_cols()?;
        if n < 1 {
            return Err(Error::Contract("layer_norm over empty rows".into()));
        }
        let mut out = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for r in 0..m {
            let row = &self.values[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[r] = s;
            for c in 0..n {
                out[r * n + c] = (row[c] - mean) * s;
            }
        }
        Ok(emit(self.tape.clone(), out, self.shape.clone(), |out| BackOp::LayerNorm {
            a: self.src(),
            normalized: out.clone(),
            inv_std,
            rows: m,
            cols: n,
        }))
    }
}

#[cfg(test)]
mod tests;
