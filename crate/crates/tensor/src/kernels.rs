//! Raw loops shared by forward and backward passes.

use crate::scalar::Scalar;

/// Strides of a matrix operand: (row stride, column stride).
pub(crate) type Strides = (isize, isize);

pub(crate) const ROW_MAJOR: fn(usize) -> Strides = |cols| (cols as isize, 1);

/// `c[m, n] (+)= a[m, k] * b[k, n]` with `c` row-major and contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    sa: Strides,
    b: &[T],
    sb: Strides,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    let reach = |s: Strides, rows: usize, cols: usize| {
        (rows.saturating_sub(1)) as isize * s.0 + (cols.saturating_sub(1)) as isize * s.1
    };
    assert!((reach(sa, m, k) as usize) < a.len().max(1), "gemm lhs out of bounds");
    assert!((reach(sb, k, n) as usize) < b.len().max(1), "gemm rhs out of bounds");
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: operand extents were bounds-checked above and `c` is a distinct
    // mutable slice.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (shape `shape`) into the axis order `axes`.
pub(crate) fn permute<T: Copy>(src: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = shape.len();
    if rank == 0 {
        return src.to_vec();
    }
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(src.len());
    let last = out_shape[rank - 1];
    let last_stride = src_strides[rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let outer: usize = out_shape[..rank - 1].iter().product();
    for _ in 0..outer {
        let base: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        if last_stride == 1 {
            out.extend_from_slice(&src[base..base + last]);
        } else {
            out.extend((0..last).map(|j| src[base + j * last_stride]));
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

pub(crate) fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Rotates along `axis` so that `out[j] = src[(j + shift) mod len]`.
pub(crate) fn roll<T: Copy>(src: &[T], shape: &[usize], axis: usize, shift: usize) -> Vec<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let shift = shift % len;
    let mut out = Vec::with_capacity(src.len());
    for o in 0..outer {
        let block = &src[o * len * inner..(o + 1) * len * inner];
        out.extend_from_slice(&block[shift * inner..]);
        out.extend_from_slice(&block[..shift * inner]);
    }
    out
}

/// Sums a tensor whose trailing extent is `inner` down to `inner` elements.
pub(crate) fn reduce_to_suffix<T: Scalar>(g: &[T], inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); inner];
    for chunk in g.chunks_exact(inner) {
        out.iter_mut().zip(chunk).for_each(|(o, &v)| *o += v);
    }
    out
}

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let (k, c) = gelu_consts::<T>();
    let half = T::from_f64_lossy(0.5);
    let u = k * (x + c * x * x * x);
    half * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let (k, c) = gelu_consts::<T>();
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let u = k * (x + c * x * x * x);
    let t = u.tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three * c * x * x)
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (
        T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt()),
        T::from_f64_lossy(0.044715),
    )
}
