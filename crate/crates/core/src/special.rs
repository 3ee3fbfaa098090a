//! Bessel functions of integer order and the Hankel function of the first
//! kind. Ascending series below `SWITCH`, Hankel asymptotic expansion for
//! orders 0 and 1 above it, then recurrence to higher orders.

use crate::error::{NceError, Result};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

const SWITCH: f64 = 12.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// J_n(x). Negative arguments use J_n(−x) = (−1)ⁿ J_n(x).
pub fn bessel_j(n: usize, x: f64) -> f64 {
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x <= SWITCH {
        j_series(n, x)
    } else {
        bessel_j_upto(n, x)[n]
    }
}

/// J_0(x) … J_nmax(x) in one pass.
pub fn bessel_j_upto(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x <= SWITCH {
        for (n, v) in out.iter_mut().enumerate() {
            *v = j_series(n, x);
        }
        return out;
    }
    let (j0, _) = hankel_asymptotic(0, x);
    let (j1, _) = hankel_asymptotic(1, x);
    out[0] = j0;
    if nmax == 0 {
        return out;
    }
    out[1] = j1;
    // Forward recurrence is stable while n < x.
    let n_fwd = nmax.min(x.floor() as usize);
    for n in 1..n_fwd {
        out[n + 1] = 2.0 * n as f64 / x * out[n] - out[n - 1];
    }
    if nmax > n_fwd {
        miller_tail(&mut out, n_fwd, x);
    }
    out
}

/// Backward (Miller) recurrence for orders above `n0`, scaled to match the
/// forward values already stored at `n0 - 1` and `n0`.
fn miller_tail(out: &mut [f64], n0: usize, x: f64) {
    let nmax = out.len() - 1;
    let start = nmax + 20 + (x.sqrt() * 10.0) as usize;
    let mut hi = 0.0;
    let mut cur = 1e-300;
    let mut tail = vec![0.0; nmax + 1];
    for n in (1..=start).rev() {
        let lo = 2.0 * n as f64 / x * cur - hi;
        hi = cur;
        cur = lo;
        // `hi` now holds the value for order n, `cur` for order n-1.
        if n <= nmax {
            tail[n] = hi;
        }
        if n - 1 <= nmax {
            tail[n - 1] = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            hi *= 1e-250;
            tail.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let anchor = if out[n0].abs() >= out[n0 - 1].abs() { n0 } else { n0 - 1 };
    let scale = out[anchor] / tail[anchor];
    for n in n0 + 1..=nmax {
        out[n] = tail[n] * scale;
    }
}

/// Y_n(x) for x > 0.
pub fn bessel_y(n: usize, x: f64) -> Result<f64> {
    Ok(bessel_y_upto(n, x)?[n])
}

/// Y_0(x) … Y_nmax(x) for x > 0 (forward recurrence is stable for Y).
pub fn bessel_y_upto(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if !(x > 0.0) {
        return Err(NceError::Domain(format!("Y_n undefined at x = {x}")));
    }
    let (y0, y1) = if x <= SWITCH {
        (y_series(0, x), y_series(1, x))
    } else {
        (hankel_asymptotic(0, x).1, hankel_asymptotic(1, x).1)
    };
    let mut out = vec![0.0; nmax + 1];
    out[0] = y0;
    if nmax >= 1 {
        out[1] = y1;
    }
    for n in 1..nmax {
        out[n + 1] = 2.0 * n as f64 / x * out[n] - out[n - 1];
    }
    Ok(out)
}

/// Hankel function of the first kind, J_n(x) + i Y_n(x).
pub fn hankel1(n: usize, x: f64) -> Result<Complex64> {
    let y = bessel_y(n, x)?;
    Ok(Complex64::new(bessel_j(n, x), y))
}

/// H⁽¹⁾_0 … H⁽¹⁾_nmax at one argument.
pub fn hankel1_upto(nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    let y = bessel_y_upto(nmax, x)?;
    let j = bessel_j_upto(nmax, x);
    Ok(j.iter().zip(&y).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

fn j_series(n: usize, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    let q = -h * h;
    let mut sum = term;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k as f64 > h {
            break;
        }
        if k > 300 {
            break;
        }
    }
    sum
}

/// Ascending series for Y_n (n = 0 or 1 in practice, valid for any n).
fn y_series(n: usize, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut lead = 0.0;
    if n > 0 {
        // -(1/π) Σ_{k<n} (n-k-1)!/k! (x/2)^{2k-n}
        for k in 0..n {
            let mut f = 1.0;
            for i in 1..n - k {
                f *= i as f64;
            }
            for i in 1..=k {
                f /= i as f64;
            }
            lead += f * h.powi(2 * k as i32 - n as i32);
        }
        lead = -lead / PI;
    }
    let jn = j_series(n, x);
    let log_part = 2.0 / PI * h.ln() * jn;
    // -(1/π) Σ_k [ψ(k+1) + ψ(n+k+1)] (−x²/4)^k (x/2)^n / (k! (n+k)!)
    let mut psi_a = -EULER_GAMMA;
    let mut psi_b = -EULER_GAMMA + (1..=n).map(|i| 1.0 / i as f64).sum::<f64>();
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    let q = -h * h;
    let mut sum = term * (psi_a + psi_b);
    let mut k = 0usize;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        psi_a += 1.0 / k as f64;
        psi_b += 1.0 / (k + n) as f64;
        let t = term * (psi_a + psi_b);
        sum += t;
        if t.abs() <= 1e-17 * sum.abs().max(1e-300) && k as f64 > h {
            break;
        }
        if k > 300 {
            break;
        }
    }
    lead + log_part - sum / PI
}

/// (J_ν(x), Y_ν(x)) from the Hankel asymptotic expansion, summed until the
/// terms stop decreasing.
fn hankel_asymptotic(nu: usize, x: f64) -> (f64, f64) {
    let mu = 4.0 * (nu * nu) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if a.abs() >= last || a == 0.0 {
            break;
        }
        last = a.abs();
        // a_k carries the (−1)^{⌊k/2⌋} pattern through its index parity.
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (nu as f64 * FRAC_PI_2 + FRAC_PI_4);
    let (s, c) = chi.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}
