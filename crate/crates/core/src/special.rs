//! Bessel functions of integer order 0 and 1 and the Hankel function of the
//! second kind, H_m^(2)(x) = J_m(x) - i Y_m(x), for real x > 0.
//!
//! Up to x = 25 the J_n come from Miller's backward recurrence normalised by
//! J_0 + 2 Σ J_2k = 1, and Y_0, Y_1 from the Neumann series over the same
//! J_n. Beyond that the Hankel asymptotic expansion is used directly.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ASYMPTOTIC_FROM: f64 = 25.0;

/// (J0, J1, Y0, Y1) at x > 0.
pub fn bessel_01(x: f64) -> (f64, f64, f64, f64) {
    debug_assert!(x > 0.0);
    if x >= ASYMPTOTIC_FROM {
        let h0 = hankel2_asymptotic(0, x);
        let h1 = hankel2_asymptotic(1, x);
        return (h0.re, h1.re, -h0.im, -h1.im);
    }
    let start = 2 * (((x + 20.0 + 4.0 * x.cbrt()) / 2.0).ceil() as usize) + 2;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-30;
    for n in (1..=start).rev() {
        j[n - 1] = 2.0 * n as f64 / x * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * j[k];
        k += 2;
    }
    for v in j.iter_mut() {
        *v /= norm;
    }
    let lg = (x / 2.0).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut sign = -1.0;
    for kk in 1..=(start / 2) {
        let n = 2 * kk;
        s0 += sign * j[n] / kk as f64;
        s1 += sign * (j[n - 1] - j[n + 1]) / kk as f64;
        sign = -sign;
    }
    let y0 = 2.0 / PI * lg * j[0] - 4.0 / PI * s0;
    let y1 = 2.0 / PI * (lg * j[1] - j[0] / x) + 2.0 / PI * s1;
    (j[0], j[1], y0, y1)
}

fn hankel2_asymptotic(order: u32, x: f64) -> C64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mi = C64::new(0.0, -1.0);
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term = term * (mu - odd * odd) / (k as f64 * 8.0 * x) * mi;
        let t = term.norm();
        if t > prev {
            break;
        }
        sum += term;
        prev = t;
        if t < 1e-17 {
            break;
        }
    }
    let w = x - order as f64 * PI / 2.0 - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * C64::new(w.cos(), -w.sin()) * sum
}

/// H_m^(2)(x) for m ∈ {0, 1}.
pub fn hankel2(order: u32, x: f64) -> Result<C64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("hankel2 needs a finite x > 0, got {x}")));
    }
    let (j0, j1, y0, y1) = bessel_01(x);
    match order {
        0 => Ok(C64::new(j0, -y0)),
        1 => Ok(C64::new(j1, -y1)),
        m => Err(Error::Domain(format!("hankel2 order {m} not supported"))),
    }
}

/// Both orders at once, (H0, H1).
pub fn hankel2_pair(x: f64) -> (C64, C64) {
    let (j0, j1, y0, y1) = bessel_01(x);
    (C64::new(j0, -y0), C64::new(j1, -y1))
}
