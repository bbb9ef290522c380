use std::f64::consts::PI;

use num_complex::Complex64;

/// Iterative radix-2 FFT. `buf.len()` must be a power of two.
///
/// Forward uses `e^{-i2πkn/L}`; `inverse` flips the sign and does not scale.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "radix-2 FFT needs a power-of-two length, got {n}");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    // Twiddles from a table rather than by repeated multiplication.
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Unscaled DFT of any length: radix-2 for powers of two, Bluestein's chirp-z
/// otherwise.
pub fn transform(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_in_place(&mut buf, inverse);
        return buf;
    }
    bluestein(x, inverse)
}

fn bluestein(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    // k² mod 2n keeps the chirp argument small and exact.
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
            Complex64::from_polar(1.0, sign * PI * k2 / n as f64)
        })
        .collect();
    let m = (2 * n - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    fft_in_place(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_one_and_two() {
        let x = [Complex64::new(3.0, -1.0)];
        assert_eq!(transform(&x, false), x.to_vec());
        let y = transform(&[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)], false);
        assert_eq!(y, vec![Complex64::new(3.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn bluestein_dc() {
        let x = vec![Complex64::new(1.0, 0.0); 6];
        let y = transform(&x, false);
        assert!((y[0].re - 6.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|c| c.norm() < 1e-12));
    }
}
