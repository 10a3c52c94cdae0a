//! Bounds-checked wrapper over `matrixmultiply::dgemm`.

#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    /// Row-major `rows × cols` block starting at `offset`.
    pub fn rows(data: &'a [f64], offset: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], offset: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            row_stride: 1,
            col_stride: cols,
        }
    }

    pub fn strided(data: &'a [f64], offset: usize, row_stride: usize, col_stride: usize) -> Self {
        Self {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }

    fn check(&self, rows: usize, cols: usize) {
        let last = self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride;
        assert!(last < self.data.len(), "matrix view out of bounds");
    }
}

pub(crate) struct MatMut<'a> {
    pub data: &'a mut [f64],
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatMut<'a> {
    pub fn rows(data: &'a mut [f64], offset: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn strided(data: &'a mut [f64], offset: usize, row_stride: usize, col_stride: usize) -> Self {
        Self {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }
}

/// `c = a · b + beta · c` for an `m × k` by `k × n` product.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: MatRef, b: MatRef, beta: f64, c: MatMut) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // product is empty; only the beta scaling applies
        for i in 0..m {
            for j in 0..n {
                let idx = c.offset + i * c.row_stride + j * c.col_stride;
                c.data[idx] *= beta;
            }
        }
        return;
    }
    a.check(m, k);
    b.check(k, n);
    let last = c.offset + (m - 1) * c.row_stride + (n - 1) * c.col_stride;
    assert!(last < c.data.len(), "output view out of bounds");
    // SAFETY: all three views were bounds-checked above, and `c` is a unique
    // borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.row_stride as isize,
            c.col_stride as isize,
        );
    }
}
