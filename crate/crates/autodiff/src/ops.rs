//! Forward rules. Each op checks shapes, computes its value eagerly and
//! records itself so that [`Tape::backward`] can apply the matching rule.

use crate::error::{AutodiffError, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Shape;

impl<T: Scalar> Tape<'_, T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(sa)
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let shape = self.shape(a);
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(shape, value, op)
    }

    fn map(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let shape = self.shape(a);
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(shape, value, op)
    }

    /// `[m×k] · [k×n] → [m×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(&mut out, self.value(a), self.value(b), m, k, n);
        Ok(self.push(Shape::new(m, n), out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a `1×n` bias row to every row of an `m×n` input.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.rows != 1 || sb.cols != sa.cols {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_bias",
                left: sa,
                right: sb,
            });
        }
        let n = sa.cols;
        let bv = self.value(bias);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(n.max(1)) {
            for (o, &b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        Ok(self.push(sa, out, Op::AddBias(a, bias)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), kernels::sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    /// Natural log; every input value must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).iter().find(|&&x| x <= T::zero()) {
            return Err(AutodiffError::LogDomain(bad.as_f64()));
        }
        Ok(self.map(a, Op::Log(a), |x| x.ln()))
    }

    /// Sum of all elements as a `1×1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).iter().copied().sum();
        self.push(Shape::scalar(), vec![s], Op::Sum(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(shape.cols.max(1)) {
            let lse = kernels::log_sum_exp(row);
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        self.push(shape, out, Op::Softmax(a))
    }

    /// Concatenation along columns; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(AutodiffError::EmptyInput("concat"))?;
        let rows = self.shape(first).rows;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.rows != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(first),
                    right: s,
                });
            }
            cols += s.cols;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).cols;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(Shape::new(rows, cols), out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(src);
        if start + len > s.cols {
            return Err(AutodiffError::SliceOutOfRange {
                start,
                end: start + len,
                cols: s.cols,
            });
        }
        let v = self.value(src);
        let mut out = Vec::with_capacity(s.rows * len);
        for r in 0..s.rows {
            out.extend_from_slice(&v[r * s.cols + start..r * s.cols + start + len]);
        }
        Ok(self.push(Shape::new(s.rows, len), out, Op::SliceCols { src, start }))
    }

    /// Row lookup: output row `q` is the concatenation of source rows
    /// `indices[q*per_row .. (q+1)*per_row]`. With `per_row = 1` this is a
    /// plain row selection; larger values lay several embeddings side by side.
    pub fn gather(&mut self, src: Var, indices: &[usize], per_row: usize) -> Result<Var> {
        let s = self.shape(src);
        if per_row == 0 || indices.len() % per_row != 0 {
            return Err(AutodiffError::DataLength {
                len: indices.len(),
                shape: Shape::new(indices.len() / per_row.max(1), per_row),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= s.rows) {
            return Err(AutodiffError::IndexOutOfRange {
                index: bad,
                len: s.rows,
            });
        }
        let v = self.value(src);
        let mut out = Vec::with_capacity(indices.len() * s.cols);
        for &i in indices {
            out.extend_from_slice(&v[i * s.cols..(i + 1) * s.cols]);
        }
        let shape = Shape::new(indices.len() / per_row, per_row * s.cols);
        Ok(self.push(
            shape,
            out,
            Op::Gather {
                src,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Selects rows of `src` in the given order.
    pub fn select_rows(&mut self, src: Var, rows: &[usize]) -> Result<Var> {
        self.gather(src, rows, 1)
    }

    /// Keeps the first `n` rows.
    pub fn head_rows(&mut self, src: Var, n: usize) -> Result<Var> {
        if n == self.shape(src).rows {
            return Ok(src);
        }
        let rows: Vec<usize> = (0..n).collect();
        self.gather(src, &rows, 1)
    }

    /// Per-row `−log softmax(logits)[target]` as an `m×1` column.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if targets.len() != s.rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                left: s,
                right: Shape::new(targets.len(), 1),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= s.cols) {
            return Err(AutodiffError::TargetOutOfRange {
                target: bad,
                classes: s.cols,
            });
        }
        let v = self.value(logits);
        let mut probs = Vec::with_capacity(s.len());
        let mut losses = Vec::with_capacity(s.rows);
        for (row, &t) in v.chunks_exact(s.cols.max(1)).zip(targets) {
            let (max, tail) = kernels::log_sum_exp_parts(row);
            losses.push((max - row[t]) + tail);
            let lse = max + tail;
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        Ok(self.push(
            Shape::new(s.rows, 1),
            losses,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Cross-entropy of a single `1×K` logit row against one class, as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let s = self.shape(logits);
        if s.rows != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: s,
                right: Shape::new(1, s.cols),
            });
        }
        let ce = self.cross_entropy(logits, &[target])?;
        Ok(self.sum(ce))
    }
}
