use crate::error::{Result, ScrcError};
use crate::nncore::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ScrcError::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(ScrcError::shape(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<F> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Converts element type, e.g. `f32` training weights to `f64` for verification.
    pub fn cast<G: Scalar>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn matvec(&self, v: &[F]) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.rows];
        self.matvec_acc(v, &mut out)?;
        Ok(out)
    }

    /// `out += self · v`
    pub fn matvec_acc(&self, v: &[F], out: &mut [F]) -> Result<()> {
        if v.len() != self.cols || out.len() != self.rows {
            return Err(ScrcError::shape(
                "matvec",
                format!("{}x{} · [{}] -> [{}]", self.rows, self.cols, self.cols, self.rows),
                format!("[{}] -> [{}]", v.len(), out.len()),
            ));
        }
        for (row, o) in self.data.chunks_exact(self.cols.max(1)).zip(out.iter_mut()) {
            let dot: F = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
            *o = *o + dot;
        }
        Ok(())
    }

    /// `out += selfᵀ · v`
    pub fn matvec_t_acc(&self, v: &[F], out: &mut [F]) -> Result<()> {
        if v.len() != self.rows || out.len() != self.cols {
            return Err(ScrcError::shape(
                "matvec_t",
                format!("{}x{}ᵀ · [{}] -> [{}]", self.rows, self.cols, self.rows, self.cols),
                format!("[{}] -> [{}]", v.len(), out.len()),
            ));
        }
        for (row, &s) in self.data.chunks_exact(self.cols.max(1)).zip(v) {
            if s == F::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * s;
            }
        }
        Ok(())
    }

    /// `self += scale · (left ⊗ right)`
    pub fn add_outer(&mut self, left: &[F], right: &[F], scale: F) -> Result<()> {
        if left.len() != self.rows || right.len() != self.cols {
            return Err(ScrcError::shape(
                "add_outer",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", left.len(), right.len()),
            ));
        }
        for (row, &l) in self.data.chunks_exact_mut(self.cols.max(1)).zip(left) {
            let ls = l * scale;
            for (x, &r) in row.iter_mut().zip(right) {
                *x = *x + ls * r;
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &Matrix<F>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(ScrcError::shape(
                "copy_from",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        self.data.copy_from_slice(&other.data);
        Ok(())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64() * x.as_f64()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Learnable tensor: current value plus the gradient accumulated since the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<F> {
    pub value: Matrix<F>,
    pub grad: Matrix<F>,
}

impl<F: Scalar> ParamTensor<F> {
    pub fn new(value: Matrix<F>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamTensor { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn cast<G: Scalar>(&self) -> ParamTensor<G> {
        ParamTensor {
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}
