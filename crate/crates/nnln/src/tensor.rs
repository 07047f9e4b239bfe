//! Dense row-major tensors of `f64` and the windowed operations
//! (padding, cross-correlation, convolution) that the convolutional
//! layers are built from.
//!
//! Values are immutable in spirit: every operation is a pure function
//! returning a fresh tensor. Reductions accumulate strictly left-to-right
//! in row-major order so results are bit-reproducible.

use crate::error::{Error, Result};

/// Dense n-dimensional array, row-major, 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Hyperparameters of a windowed operation: square kernel extent `m`,
/// stride `s` and symmetric zero padding `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(kernel >= 1, "kernel extent must be positive");
        assert!(stride >= 1, "stride must be at least 1");
        ConvGeometry {
            kernel,
            stride,
            padding,
        }
    }
}

/// Spatial output extents of a windowed op, plus a flag raised when the
/// stride does not divide evenly and the ragged edge was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutShape {
    pub rows: usize,
    pub cols: usize,
    /// False when `(n + 2p - m)` was not a multiple of the stride.
    pub exact: bool,
}

/// Output extents `(floor((n + 2p - m) / s) + 1)` per dimension.
pub fn out_shape(n1: usize, n2: usize, geom: ConvGeometry) -> Result<OutShape> {
    let m = geom.kernel;
    let (p, s) = (geom.padding, geom.stride);
    let h_span = n1 + 2 * p;
    let w_span = n2 + 2 * p;
    if m > h_span || m > w_span {
        return Err(Error::KernelTooLarge {
            kernel: m,
            rows: h_span,
            cols: w_span,
        });
    }
    let exact = (h_span - m) % s == 0 && (w_span - m) % s == 0;
    Ok(OutShape {
        rows: (h_span - m) / s + 1,
        cols: (w_span - m) / s + 1,
        exact,
    })
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape {
                op: "Tensor::new",
                shape,
                reason: "extents must be positive".into(),
            });
        }
        if data.len() != count {
            return Err(Error::InvalidShape {
                op: "Tensor::new",
                shape,
                reason: format!("data length {} != element count {}", data.len(), count),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count: usize = shape.iter().product();
        assert!(shape.iter().all(|&e| e > 0), "extents must be positive");
        Tensor {
            shape,
            data: vec![0.0; count],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.iter_mut().for_each(|x| *x = value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from rows; all rows must have equal length.
    pub fn matrix(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Tensor {
            shape: vec![r, c],
            data: rows.concat(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// New value with identical data and a different shape of equal count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let count: usize = shape.iter().product();
        if count != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape,
                reason: format!("element count must stay {}", self.data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f64) {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k] = v;
    }

    fn check_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Elementwise (Hadamard) product of equally shaped tensors.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// In-place `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Tensor, factor: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    /// Matrix product of 2-D tensors. Inner accumulation runs over the
    /// shared index in ascending order.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || v.rank() != 1 || self.shape[1] != v.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                lhs: self.shape.clone(),
                rhs: v.shape.clone(),
            });
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..k {
                acc += self.data[i * k + j] * v.data[j];
            }
            out[i] = acc;
        }
        Ok(Tensor {
            shape: vec![m],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "transpose",
                shape: self.shape.clone(),
                reason: "expects a matrix".into(),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate().skip(1) {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn norm_l2(&self) -> f64 {
        let mut acc = 0.0;
        for &x in &self.data {
            acc += x * x;
        }
        acc.sqrt()
    }

    pub fn sum_squares(&self) -> f64 {
        let mut acc = 0.0;
        for &x in &self.data {
            acc += x * x;
        }
        acc
    }

    /// Kernel flipped along rows and columns; turns convolution into
    /// cross-correlation and vice versa.
    pub fn flip2(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "flip2",
                shape: self.shape.clone(),
                reason: "expects a matrix".into(),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[(r - 1 - i) * c + (c - 1 - j)] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![r, c],
            data: out,
        })
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&self, j: usize) -> Tensor {
        debug_assert_eq!(self.rank(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let data = (0..r).map(|i| self.data[i * c + j]).collect();
        Tensor {
            shape: vec![r],
            data,
        }
    }

    pub fn set_column(&mut self, j: usize, v: &Tensor) {
        debug_assert_eq!(self.rank(), 2);
        debug_assert_eq!(v.rank(), 1);
        debug_assert_eq!(self.shape[0], v.shape[0]);
        let c = self.shape[1];
        for i in 0..self.shape[0] {
            self.data[i * c + j] = v.data[i];
        }
    }

    /// Builds a matrix whose columns are the given equally sized vectors.
    pub fn from_columns(columns: &[Tensor]) -> Result<Tensor> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("from_columns: no columns".into()));
        }
        let rows = columns[0].len();
        let mut out = Tensor::zeros(vec![rows, columns.len()]);
        for (j, col) in columns.iter().enumerate() {
            if col.rank() != 1 || col.len() != rows {
                return Err(Error::ShapeMismatch {
                    op: "from_columns",
                    lhs: vec![rows],
                    rhs: col.shape.clone(),
                });
            }
            out.set_column(j, col);
        }
        Ok(out)
    }
}

/// Zero padding with border width `p`. Matrices pad both dimensions;
/// rank-3 tensors pad the two spatial dimensions and keep depth.
pub fn pad_zero(y: &Tensor, p: usize) -> Result<Tensor> {
    match y.rank() {
        2 => {
            let (n1, n2) = (y.shape()[0], y.shape()[1]);
            let mut out = Tensor::zeros(vec![n1 + 2 * p, n2 + 2 * p]);
            for i in 0..n1 {
                for j in 0..n2 {
                    out.set2(i + p, j + p, y.at2(i, j));
                }
            }
            Ok(out)
        }
        3 => {
            let (n1, n2, n3) = (y.shape()[0], y.shape()[1], y.shape()[2]);
            let mut out = Tensor::zeros(vec![n1 + 2 * p, n2 + 2 * p, n3]);
            for i in 0..n1 {
                for j in 0..n2 {
                    for k in 0..n3 {
                        out.set3(i + p, j + p, k, y.at3(i, j, k));
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::InvalidShape {
            op: "pad_zero",
            shape: y.shape().to_vec(),
            reason: "expects rank 2 or 3".into(),
        }),
    }
}

fn check_window_inputs(y: &Tensor, k: &Tensor, geom: ConvGeometry) -> Result<()> {
    if y.rank() != 2 {
        return Err(Error::InvalidShape {
            op: "cross_correlate",
            shape: y.shape().to_vec(),
            reason: "input must be a matrix".into(),
        });
    }
    if k.rank() != 2 || k.shape()[0] != geom.kernel || k.shape()[1] != geom.kernel {
        return Err(Error::InvalidShape {
            op: "cross_correlate",
            shape: k.shape().to_vec(),
            reason: format!("kernel must be {0}x{0}", geom.kernel),
        });
    }
    Ok(())
}

/// Sliding inner product without kernel flipping:
/// `out[i,j] = sum_{k,l} K[k,l] * Yp[i*s + k, j*s + l]` on the padded input.
pub fn cross_correlate(y: &Tensor, k: &Tensor, geom: ConvGeometry) -> Result<Tensor> {
    check_window_inputs(y, k, geom)?;
    let os = out_shape(y.shape()[0], y.shape()[1], geom)?;
    let padded = pad_zero(y, geom.padding)?;
    let m = geom.kernel;
    let mut out = Tensor::zeros(vec![os.rows, os.cols]);
    for i in 0..os.rows {
        for j in 0..os.cols {
            let mut acc = 0.0;
            for a in 0..m {
                for b in 0..m {
                    acc += k.at2(a, b) * padded.at2(i * geom.stride + a, j * geom.stride + b);
                }
            }
            out.set2(i, j, acc);
        }
    }
    Ok(out)
}

/// True convolution: the sliding inner product with the kernel flipped in
/// both dimensions, `Y * K = Y (x) flip(K)`.
pub fn convolve(y: &Tensor, k: &Tensor, geom: ConvGeometry) -> Result<Tensor> {
    cross_correlate(y, &k.flip2()?, geom)
}
