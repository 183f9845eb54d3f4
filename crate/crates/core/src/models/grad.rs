use crate::math::Matrix;

/// Row-sparse gradient buffer for one parameter tensor. Storage is dense but
/// only touched rows are ever read, merged or cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrad {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    touched: Vec<bool>,
    touched_rows: Vec<usize>,
}

impl TensorGrad {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            touched: vec![false; rows],
            touched_rows: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Mutable access to row `r`, marking it touched.
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        if !self.touched[r] {
            self.touched[r] = true;
            self.touched_rows.push(r);
        }
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_touched(&self, r: usize) -> bool {
        self.touched[r]
    }

    /// Touched rows in first-touch order.
    pub fn touched_rows(&self) -> &[usize] {
        &self.touched_rows
    }

    pub fn touch_all(&mut self) {
        for r in 0..self.rows {
            self.row_mut(r);
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn clear(&mut self) {
        for &r in &self.touched_rows {
            self.data[r * self.cols..(r + 1) * self.cols].fill(0.0);
            self.touched[r] = false;
        }
        self.touched_rows.clear();
    }

    pub fn merge(&mut self, other: &TensorGrad) {
        assert_eq!(self.shape(), other.shape(), "gradient shape mismatch");
        for &r in &other.touched_rows {
            let src = other.row(r).to_vec();
            for (d, s) in self.row_mut(r).iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, f: f64) {
        for &r in &self.touched_rows {
            for x in &mut self.data[r * self.cols..(r + 1) * self.cols] {
                *x *= f;
            }
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.touched_rows
            .iter()
            .flat_map(|&r| self.row(r))
            .map(|x| x * x)
            .sum()
    }

    /// Dense copy (untouched rows are zero).
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

/// Gradient accumulator over all tensors of a model, in the model's order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<TensorGrad>,
}

impl Gradients {
    pub fn for_tensors(tensors: &[&Matrix]) -> Self {
        Self {
            tensors: tensors
                .iter()
                .map(|m| TensorGrad::new(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.clear();
        }
    }

    /// Adds another accumulator. Addition is associative, so partial
    /// accumulators from parallel workers can be merged in any order.
    pub fn merge(&mut self, other: &Gradients) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.merge(b);
        }
    }

    pub fn scale(&mut self, f: f64) {
        for t in &mut self.tensors {
            t.scale(f);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(TensorGrad::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.global_norm().is_finite()
    }
}
