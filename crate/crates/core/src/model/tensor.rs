use crate::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    /// `x · self` for `n` input rows packed in `x`. Each output row depends
    /// only on its own input row, so results do not vary with batch size.
    pub fn left_mul(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len() % self.rows, 0);
        let n = x.len() / self.rows;
        let mut out = vec![T::zero(); n * self.cols];
        for (xi, oi) in x.chunks_exact(self.rows).zip(out.chunks_exact_mut(self.cols)) {
            for (k, &a) in xi.iter().enumerate() {
                let w = self.row(k);
                for (o, &b) in oi.iter_mut().zip(w) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// Dot product of `x` with column `c`.
    pub fn column_dot(&self, x: &[T], c: usize) -> T {
        x.iter().enumerate().fold(T::zero(), |acc, (k, &a)| acc + a * self.data[k * self.cols + c])
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
