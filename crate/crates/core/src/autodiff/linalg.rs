//! Strided matrix views over `f64` slices and a checked GEMM on top of
//! `matrixmultiply`.

#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

pub(crate) struct MatMut<'a> {
    pub data: &'a mut [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

fn last_index(offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    offset + (rows - 1) * rs + (cols - 1) * cs
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major `rows x cols` matrix starting at `offset`.
    pub fn rows(data: &'a [f64], offset: usize, rows: usize, cols: usize) -> Self {
        MatRef { data, offset, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn strided(data: &'a [f64], offset: usize, rows: usize, cols: usize, row_stride: usize) -> Self {
        MatRef { data, offset, rows, cols, row_stride, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        MatRef {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }
}

impl<'a> MatMut<'a> {
    pub fn rows(data: &'a mut [f64], offset: usize, rows: usize, cols: usize) -> Self {
        MatMut { data, offset, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn strided(data: &'a mut [f64], offset: usize, rows: usize, cols: usize, row_stride: usize) -> Self {
        MatMut { data, offset, rows, cols, row_stride, col_stride: 1 }
    }
}

/// `c = alpha * a @ b + beta * c`.
pub(crate) fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = c.offset + i * c.row_stride + j * c.col_stride;
                c.data[idx] *= beta;
            }
        }
        return;
    }
    assert!(last_index(a.offset, m, k, a.row_stride, a.col_stride) < a.data.len());
    assert!(last_index(b.offset, k, n, b.row_stride, b.col_stride) < b.data.len());
    assert!(last_index(c.offset, m, n, c.row_stride, c.col_stride) < c.data.len());
    // SAFETY: every index the kernel touches lies inside the slices, as
    // checked above; `c` is borrowed mutably and cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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
