use super::Float;

/// Strided view into a flat buffer: element `(i, j)` lives at
/// `offset + i * row_stride + j * col_stride`.
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl View {
    pub const fn row_major(offset: usize, row_stride: usize) -> Self {
        View {
            offset,
            row_stride,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix stored with `row_stride`.
    pub const fn transposed(offset: usize, row_stride: usize) -> Self {
        View {
            offset,
            row_stride: 1,
            col_stride: row_stride,
        }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return self.offset;
        }
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// Bounds-checked `C = A * B + beta * C` on strided views.
///
/// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    av: View,
    b: &[T],
    bv: View,
    beta: T,
    c: &mut [T],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(
        k == 0 || av.last_index(m, k) < a.len(),
        "gemm: A out of bounds"
    );
    assert!(
        k == 0 || bv.last_index(k, n) < b.len(),
        "gemm: B out of bounds"
    );
    assert!(cv.last_index(m, n) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = cv.offset + i * cv.row_stride + j * cv.col_stride;
                c[idx] = if beta == T::zero() {
                    T::zero()
                } else {
                    c[idx] * beta
                };
            }
        }
        return;
    }
    // SAFETY: every index touched by the kernel is bounded by the
    // last_index checks above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(av.offset),
            av.row_stride as isize,
            av.col_stride as isize,
            b.as_ptr().add(bv.offset),
            bv.row_stride as isize,
            bv.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.row_stride as isize,
            cv.col_stride as isize,
        );
    }
}
