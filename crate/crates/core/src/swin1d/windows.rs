use xinet_tensor::{Scalar, Var};

use crate::error::{Error, Result};
use crate::nn::Graph;

/// Additive value for masked attention pairs. Finite so softmax never sees
/// `-inf - -inf`.
pub const MASK_VALUE: f64 = -1e9;

fn dims<T: Scalar>(g: &Graph<T>, x: Var) -> Result<[usize; 3]> {
    match *g.tape.shape(x) {
        [b, n, d] => Ok([b, n, d]),
        ref s => Err(Error::InvalidInput(format!("expected [B, N, D] tokens, got {s:?}"))),
    }
}

/// `[B, N, D] -> [B * N/M, M, D]`. Windows are contiguous runs of tokens.
pub fn window_partition<T: Scalar>(g: &mut Graph<T>, x: Var, window: usize) -> Result<Var> {
    let [b, n, d] = dims(g, x)?;
    if window == 0 || n % window != 0 {
        return Err(Error::InvalidInput(format!(
            "token count {n} is not divisible by window {window}"
        )));
    }
    Ok(g.tape.reshape(x, [b * n / window, window, d])?)
}

/// Inverse of [`window_partition`].
pub fn window_reverse<T: Scalar>(g: &mut Graph<T>, windows: Var, batch: usize) -> Result<Var> {
    let [bw, m, d] = dims(g, windows)?;
    if batch == 0 || bw % batch != 0 {
        return Err(Error::InvalidInput(format!("{bw} windows do not split into batch {batch}")));
    }
    Ok(g.tape.reshape(windows, [batch, bw / batch * m, d])?)
}

/// Rotates the token axis: token `i` moves to `(i - shift) mod N`. A negative
/// shift undoes a positive one.
pub fn cyclic_shift<T: Scalar>(g: &mut Graph<T>, x: Var, shift: isize) -> Result<Var> {
    let [_, n, _] = dims(g, x)?;
    let s = shift.rem_euclid(n as isize) as usize;
    Ok(g.tape.roll(x, 1, s)?)
}

/// Segment id of every position of the shifted sequence. After a left
/// rotation by `shift`, the last window holds the old tail (`N-M..N-s`) and
/// the wrapped-around head (`N-s..N`); those must not attend to each other.
pub fn segment_ids(n: usize, window: usize, shift: usize) -> Vec<u8> {
    (0..n)
        .map(|i| {
            if shift == 0 || i < n - window {
                0
            } else if i < n - shift {
                1
            } else {
                2
            }
        })
        .collect()
}

/// Per-window additive attention mask, `[N/M, M, M]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMask {
    pub windows: usize,
    pub window: usize,
    pub values: Vec<f64>,
}

impl WindowMask {
    pub fn at(&self, w: usize, i: usize, j: usize) -> f64 {
        self.values[(w * self.window + i) * self.window + j]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Mask for shifted-window attention; all zeros when `shift == 0`.
pub fn attention_mask(n: usize, window: usize, shift: usize) -> Result<WindowMask> {
    if window == 0 || !n.is_multiple_of(window) {
        return Err(Error::InvalidInput(format!(
            "token count {n} is not divisible by window {window}"
        )));
    }
    if shift >= window {
        return Err(Error::InvalidInput(format!("shift {shift} must be below window {window}")));
    }
    let ids = segment_ids(n, window, shift);
    let windows = n / window;
    let mut values = Vec::with_capacity(windows * window * window);
    for w in 0..windows {
        let seg = &ids[w * window..(w + 1) * window];
        for &a in seg {
            values.extend(seg.iter().map(|&b| if a == b { 0.0 } else { MASK_VALUE }));
        }
    }
    Ok(WindowMask {
        windows,
        window,
        values,
    })
}
