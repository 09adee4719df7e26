//! Globally adaptive Gauss–Kronrod (10/21) quadrature for vector-valued
//! complex integrands, plus Gauss–Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_351_996,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 20_000 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    val: Vec<C64>,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err && self.a == o.a
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err).then(o.a.total_cmp(&self.a))
    }
}

fn gk21<F: Fn(f64, &mut [C64])>(f: &F, a: f64, b: f64, dim: usize, buf: &mut [C64]) -> (Vec<C64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut g = vec![C64::new(0.0, 0.0); dim];
    f(c, buf);
    for d in 0..dim {
        k[d] += buf[d] * WGK[10];
    }
    for i in 0..10 {
        let x = h * XGK[i];
        let wk = WGK[i];
        let gauss = i % 2 == 1;
        for s in [-1.0, 1.0] {
            f(c + s * x, buf);
            for d in 0..dim {
                k[d] += buf[d] * wk;
                if gauss {
                    g[d] += buf[d] * WG[i / 2];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        err = err.max((k[d] - g[d]).norm());
    }
    (k, err)
}

/// Integrate `f` over [breaks[0], breaks.last()] with mandatory breakpoints.
///
/// `f(t, out)` writes `dim` values. Convergence is declared when the summed
/// error estimate falls below `max(abs_tol, rel_tol * max_d |I_d|)`.
pub fn integrate<F>(f: F, breaks: &[f64], dim: usize, opts: QuadOptions) -> Result<(Vec<C64>, f64)>
where
    F: Fn(f64, &mut [C64]),
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("quadrature breakpoints must be strictly increasing".into()));
    }
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        let (val, err) = gk21(&f, w[0], w[1], dim, &mut buf);
        heap.push(Piece { a: w[0], b: w[1], val, err });
    }
    loop {
        let mut total = vec![C64::new(0.0, 0.0); dim];
        let mut err_sum = 0.0;
        for p in heap.iter() {
            err_sum += p.err;
            for d in 0..dim {
                total[d] += p.val[d];
            }
        }
        let scale = total.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let target = opts.abs_tol.max(opts.rel_tol * scale);
        if err_sum <= target {
            return Ok(finalize(heap, dim, err_sum));
        }
        if heap.len() >= opts.max_intervals {
            let worst = heap.peek().expect("non-empty");
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge: error {err_sum:.3e} > target {target:.3e} (worst piece near {:.6e})",
                worst.a
            )));
        }
        // refine the worst pieces in one sweep
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let worst = heap.pop().expect("non-empty");
            let m = 0.5 * (worst.a + worst.b);
            if !(m > worst.a && m < worst.b) {
                return Err(Error::Numerical("adaptive quadrature exhausted floating-point resolution".into()));
            }
            let (v1, e1) = gk21(&f, worst.a, m, dim, &mut buf);
            let (v2, e2) = gk21(&f, m, worst.b, dim, &mut buf);
            heap.push(Piece { a: worst.a, b: m, val: v1, err: e1 });
            heap.push(Piece { a: m, b: worst.b, val: v2, err: e2 });
        }
    }
}

/// Sum the pieces in a fixed order (by left endpoint) with compensation.
fn finalize(heap: BinaryHeap<Piece>, dim: usize, err: f64) -> (Vec<C64>, f64) {
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut sum = vec![C64::new(0.0, 0.0); dim];
    let mut comp = vec![C64::new(0.0, 0.0); dim];
    for p in &pieces {
        for d in 0..dim {
            let y = p.val[d] - comp[d];
            let t = sum[d] + y;
            comp[d] = (t - sum[d]) - y;
            sum[d] = t;
        }
    }
    (sum, err)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_for_polynomials() {
        for deg in 0..=31 {
            let (v, _) = gk21(&|t: f64, o: &mut [C64]| o[0] = C64::new(t.powi(deg), 0.0), -1.0, 1.0, 1, &mut [C64::new(0.0, 0.0)]);
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((v[0].re - exact).abs() < 1e-14, "degree {deg}");
        }
        // the embedded Gauss rule is exact to degree 19
        let s: f64 = WG.iter().sum::<f64>() * 2.0;
        assert!((s - 2.0).abs() < 1e-14);
        let s2: f64 = (0..5).map(|i| 2.0 * WG[i] * XGK[2 * i + 1].powi(18)).sum();
        assert!((s2 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn lorentzian_near_pole() {
        // ∫_{-1}^{1} dx / (x + i e) = -2i atan(1/e)
        let e = 1e-6;
        let (v, _) = integrate(
            |t, o| o[0] = C64::new(1.0, 0.0) / C64::new(t, e),
            &[-1.0, 0.0, 1.0],
            1,
            QuadOptions { rel_tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        let exact = C64::new(0.0, -2.0 * (1.0 / e).atan());
        assert!((v[0] - exact).norm() < 1e-10);
    }

    #[test]
    fn vector_valued() {
        let (v, _) = integrate(
            |t, o| {
                o[0] = C64::new(t.cos(), t.sin());
                o[1] = C64::new(t * t, 0.0);
            },
            &[0.0, 3.0],
            2,
            Default::default(),
        )
        .unwrap();
        assert!((v[0] - C64::new(3f64.sin(), 1.0 - 3f64.cos())).norm() < 1e-12);
        assert!((v[1].re - 9.0).abs() < 1e-12);
        assert!(integrate(|_, o| o[0] = C64::new(1.0, 0.0), &[1.0, 1.0], 1, Default::default()).is_err());
    }

    #[test]
    fn legendre_rules() {
        for n in [1, 2, 5, 12] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }
}
