/// Largest linear offset touched by an `rows × cols` strided view.
fn max_offset(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    assert!(rs >= 0 && cs >= 0, "negative strides are not used");
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize
}

pub(super) fn check_bounds<T>(
    m: usize,
    k: usize,
    n: usize,
    a: &(&[T], isize, isize),
    b: &(&[T], isize, isize),
    c: &(&mut [T], isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(max_offset(m, k, a.1, a.2) < a.0.len(), "gemm: lhs out of bounds");
        assert!(max_offset(k, n, b.1, b.2) < b.0.len(), "gemm: rhs out of bounds");
    }
    assert!(max_offset(m, n, c.1, c.2) < c.0.len(), "gemm: output out of bounds");
}
