//! Real-space Green's function of the cone model, its on-site term, and the
//! mixed representation g(p_long; x_perp) used by stripe geometries.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::env::{field_structure, plus_structure, valley_entries, valley_images, Branch, DiracConeModel};
use crate::error::{Error, Result};
use crate::lattice::{dot, norm, sub, Basis, GreensMatrix, LatticeGeometry, Valley, Vec2};
use crate::quad::{integrate, QuadOptions};
use crate::special::hankel2_pair;
use crate::units::PhysicalParams;

/// G(r) in the circular basis, in units of 1/a (multiply by g_pref for gamma).
pub fn greens_real(r: Vec2, params: &PhysicalParams) -> Result<GreensMatrix> {
    let s = params.scaled();
    let geom = LatticeGeometry::new(s.wavelength);
    greens_real_scaled(r, s.k_amp, s.xi, &geom)
}

pub(crate) fn greens_real_scaled(r: Vec2, k_amp: f64, xi: f64, geom: &LatticeGeometry) -> Result<GreensMatrix> {
    let d = norm(r);
    if d == 0.0 {
        return Err(Error::Domain("greens_real is singular at r = 0; use onsite_term".into()));
    }
    let (h0, h1) = hankel2_pair(d / xi);
    let ek = C64::from_polar(1.0, dot(geom.pk, r));
    let ekp = C64::from_polar(1.0, dot(geom.pk_prime, r));
    let i_k = C64::new(0.0, k_amp);
    let p_plus = i_k * (ek + ekp);
    let p_minus = i_k * (ek - ekp);
    let phase = C64::new(r[0] / d, r[1] / d);
    let diag = -p_plus * h0;
    Ok(GreensMatrix::new([[diag, phase * p_minus * h1], [-phase.conj() * p_minus * h1, diag]], Basis::Circular))
}

/// Finite part of the on-site term, -i Γ_PC / 2, in units of gamma.
///
/// The logarithmically divergent real part is a Lamb shift that is taken to be
/// already contained in ω_A.
pub fn onsite_term(params: &PhysicalParams) -> C64 {
    // Im[-P+(0) H0(0)] = -2 K_amp J0(0)
    C64::new(0.0, -2.0 * params.scaled().coupling)
}

/// Γ_PC in units of gamma.
pub fn gamma_pc(params: &PhysicalParams) -> f64 {
    -2.0 * onsite_term(params).im
}

/// Stripe orientation. `X`: period a along a nearest-neighbour direction;
/// `Y`: period √3 a along the perpendicular direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    X,
    Y,
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Orientation::X),
            "y" | "Y" => Ok(Orientation::Y),
            other => Err(Error::Config(format!("unknown stripe orientation `{other}` (expected x or y)"))),
        }
    }
}

/// Frame and site layout of a stripe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeFrame {
    pub orientation: Orientation,
    /// Unit vector along the periodic direction.
    pub t: Vec2,
    /// Unit transverse vector.
    pub n: Vec2,
    /// Longitudinal period R.
    pub period: f64,
    /// Transverse distance between adjacent rows.
    pub row_spacing: f64,
    /// Reciprocal vector with g_t · t = 2π / R.
    pub g_t: Vec2,
}

impl StripeFrame {
    pub fn new(orientation: Orientation) -> Self {
        let s3 = 3f64.sqrt();
        let geom = LatticeGeometry::new(3.0);
        match orientation {
            // t = R1 - R2, rows at b R1
            Orientation::X => Self { orientation, t: [0.0, 1.0], n: [1.0, 0.0], period: 1.0, row_spacing: s3 / 2.0, g_t: geom.g1 },
            // t = (R1 + R2)/√3, rows alternate between 0 and R1
            Orientation::Y => Self {
                orientation,
                t: [1.0, 0.0],
                n: [0.0, 1.0],
                period: s3,
                row_spacing: 0.5,
                g_t: geom.g1,
            },
        }
    }

    /// Transverse period of the momentum integrand, 2π / row_spacing.
    pub fn window(&self) -> f64 {
        2.0 * PI / self.row_spacing
    }

    /// Half-width of the 1-D Brillouin zone, π / R.
    pub fn bz_half_width(&self) -> f64 {
        PI / self.period
    }

    /// (transverse, longitudinal) coordinates of row b.
    pub fn site(&self, b: usize) -> (f64, f64) {
        match self.orientation {
            Orientation::X => (b as f64 * self.row_spacing, b as f64 * 0.5),
            Orientation::Y => (b as f64 * self.row_spacing, (b % 2) as f64 * 3f64.sqrt() / 2.0),
        }
    }

    pub fn global(&self, longitudinal: f64, transverse: f64) -> Vec2 {
        [longitudinal * self.t[0] + transverse * self.n[0], longitudinal * self.t[1] + transverse * self.n[1]]
    }

    /// Fold a longitudinal momentum into (-π/R, π/R].
    pub fn fold(&self, k: f64) -> f64 {
        let p = 2.0 * PI / self.period;
        let mut f = k - p * (k / p).round();
        if f <= -PI / self.period {
            f += p;
        }
        f
    }

    /// Longitudinal offset of the nearest valley image and that image's
    /// transverse abscissa, for a given longitudinal momentum.
    pub fn valley_column(&self, k: f64, valley_point: Vec2) -> (f64, f64) {
        let vl = dot(valley_point, self.t);
        let dl = self.fold(k - vl);
        // column image: valley + j g_t with longitudinal coordinate k - dl
        let j = ((k - dl - vl) / dot(self.g_t, self.t)).round();
        let img = [valley_point[0] + j * self.g_t[0], valley_point[1] + j * self.g_t[1]];
        (dl, dot(img, self.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourMethod {
    /// Real axis with +iε, ε → 0 by Richardson extrapolation.
    RealAxis,
    /// Complex detour around the poles, ε = 0.
    Deformed,
}

/// How to evaluate the transverse integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub method: ContourMethod,
    /// Regulator for the real-axis method (gamma^2); halved once for extrapolation.
    pub epsilon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl ContourSpec {
    pub fn real_axis(model: &DiracConeModel) -> Self {
        Self { method: ContourMethod::RealAxis, epsilon: model.epsilon_reg, rel_tol: 1e-10, abs_tol: 0.0 }
    }
    pub fn deformed() -> Self {
        Self { method: ContourMethod::Deformed, epsilon: 0.0, rel_tol: 1e-10, abs_tol: 0.0 }
    }
}

/// Integration window of one valley term along the transverse axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyWindow {
    pub valley: Valley,
    /// Longitudinal offset from the valley image.
    pub delta_long: f64,
    /// Transverse abscissa of the valley image (the split point).
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    /// Real transverse positions of the resonance poles, if any.
    pub poles: Vec<f64>,
}

pub fn valley_windows(k: f64, frame: &StripeFrame, model: &DiracConeModel) -> Vec<ValleyWindow> {
    let w = frame.window();
    let q0 = model.ring_radius();
    Valley::BOTH
        .iter()
        .map(|&v| {
            let (dl, s) = frame.valley_column(k, model.valley(v));
            let poles = if dl.abs() < q0 {
                let p0 = (q0 * q0 - dl * dl).sqrt();
                vec![s - p0, s + p0]
            } else {
                vec![]
            };
            ValleyWindow { valley: v, delta_long: dl, center: s, lo: s - w / 2.0, hi: s + w / 2.0, poles }
        })
        .collect()
}

/// Σ_{branch} S/(ω_A² − ω² + iε) for the single nearest image of one valley
/// (the other images carry negligible weight near a resonance), at complex
/// transverse offset
/// `dt` from the valley image (global Cartesian components of the offset
/// given by the frame). Returns (xx, xy, yy) without the prefactor.
fn valley_term(model: &DiracConeModel, frame: &StripeFrame, valley: Valley, dl: f64, dt: C64, eps: f64) -> [C64; 3] {
    let dx = frame.t[0] * dl + frame.n[0] * dt;
    let dy = frame.t[1] * dl + frame.n[1] * dt;
    let rho2 = dx * dx + dy * dy;
    let rho = rho2.sqrt();
    let (cp, sp) = if rho.norm() > 0.0 { (dx / rho, dy / rho) } else { (C64::new(1.0, 0.0), C64::new(0.0, 0.0)) };
    let mut out = [C64::new(0.0, 0.0); 3];
    for b in Branch::BOTH {
        let s = b.sign();
        let minus = -(rho * model.v_s * s) - model.delta_a;
        let plus = rho * model.v_s * s + (2.0 * model.omega_a + model.delta_a);
        let den = minus * plus + C64::new(0.0, eps);
        let st = field_structure(plus_structure(valley, b), cp, sp);
        for i in 0..3 {
            out[i] += st[i] / den;
        }
    }
    out
}

fn sorted_breaks(mut pts: Vec<f64>) -> Vec<f64> {
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    pts
}

/// g(k; x) for every x in `xs`, Cartesian basis, scaled units
/// (multiply by g_pref / R for a rate in gamma).
pub fn mixed_greens_many(
    k: f64,
    xs: &[f64],
    frame: &StripeFrame,
    model: &DiracConeModel,
    spec: &ContourSpec,
) -> Result<Vec<GreensMatrix>> {
    if !(spec.rel_tol > 0.0) {
        return Err(Error::Domain("quadrature tolerance must be positive".into()));
    }
    let half = frame.bz_half_width();
    if !(k.abs() <= half * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("k = {k} outside the 1-D zone ±{half}")));
    }
    let entries = match spec.method {
        ContourMethod::RealAxis => {
            if !(spec.epsilon > 0.0) {
                return Err(Error::Domain("real-axis method needs epsilon > 0".into()));
            }
            let a = real_axis(k, xs, frame, model, spec, spec.epsilon)?;
            let b = real_axis(k, xs, frame, model, spec, spec.epsilon / 2.0)?;
            a.iter().zip(&b).map(|(a, b)| b * 2.0 - a).collect::<Vec<_>>()
        }
        ContourMethod::Deformed => deformed(k, xs, frame, model, spec)?,
    };
    let pref = model.cell_area * model.c * model.c * model.e0 * model.e0 / (2.0 * PI);
    Ok(xs
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let e = [entries[3 * j] * pref, entries[3 * j + 1] * pref, entries[3 * j + 2] * pref];
            GreensMatrix::new([[e[0], e[1]], [e[1], e[2]]], Basis::Cartesian)
        })
        .collect())
}

pub fn mixed_greens(k: f64, x: f64, frame: &StripeFrame, model: &DiracConeModel, spec: &ContourSpec) -> Result<GreensMatrix> {
    Ok(mixed_greens_many(k, &[x], frame, model, spec)?.remove(0))
}

fn accumulate(acc: &mut [C64], term: [C64; 3], p: C64, xs: &[f64], weight: C64) {
    let i = C64::new(0.0, 1.0);
    match uniform_step(xs) {
        // equally spaced abscissae: advance the phase by recurrence
        Some(h) => {
            let step = (i * p * h).exp();
            let mut e = (i * p * xs[0]).exp() * weight;
            for j in 0..xs.len() {
                acc[3 * j] += term[0] * e;
                acc[3 * j + 1] += term[1] * e;
                acc[3 * j + 2] += term[2] * e;
                e *= step;
            }
        }
        None => {
            for (j, &x) in xs.iter().enumerate() {
                let e = (i * p * x).exp() * weight;
                acc[3 * j] += term[0] * e;
                acc[3 * j + 1] += term[1] * e;
                acc[3 * j + 2] += term[2] * e;
            }
        }
    }
}

fn uniform_step(xs: &[f64]) -> Option<f64> {
    if xs.len() < 8 {
        return None;
    }
    let h = xs[1] - xs[0];
    let tol = 1e-12 * (h.abs() + xs[0].abs());
    xs.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= tol).then_some(h)
}

fn blended_term(model: &DiracConeModel, geom: &LatticeGeometry, valley: Valley, q: Vec2, eps: f64) -> [C64; 3] {
    let im = valley_images(geom, q);
    let mut out = [C64::new(0.0, 0.0); 3];
    for i in 0..im.n {
        let t = valley_entries(model, valley, im.d[i], eps);
        for c in 0..3 {
            out[c] += t[c] * im.w[i];
        }
    }
    out
}

fn real_axis(k: f64, xs: &[f64], frame: &StripeFrame, model: &DiracConeModel, spec: &ContourSpec, eps: f64) -> Result<Vec<C64>> {
    let dim = 3 * xs.len();
    let mut total = vec![C64::new(0.0, 0.0); dim];
    let geom = model.geometry;
    for w in valley_windows(k, frame, model) {
        let vp = model.valley(w.valley);
        let mut pts = vec![w.lo, w.center, w.hi];
        pts.extend(w.poles.iter().copied());
        let breaks = sorted_breaks(pts);
        let f = |p: f64, out: &mut [C64]| {
            out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            let term = blended_term(model, &geom, w.valley, sub(frame.global(k, p), vp), eps);
            accumulate(out, term, C64::new(p, 0.0), xs, C64::new(1.0, 0.0));
        };
        let (v, _) = integrate(f, &breaks, dim, QuadOptions { abs_tol: spec.abs_tol, rel_tol: spec.rel_tol, max_intervals: 200_000 })?;
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    Ok(total)
}

fn deformed(k: f64, xs: &[f64], frame: &StripeFrame, model: &DiracConeModel, spec: &ContourSpec) -> Result<Vec<C64>> {
    let dim = 3 * xs.len();
    let mut total = vec![C64::new(0.0, 0.0); dim];
    let geom = model.geometry;
    let q0 = model.ring_radius();
    for w in valley_windows(k, frame, model) {
        let vp = model.valley(w.valley);
        // detours: (lo, hi, upward)
        let mut detours = Vec::new();
        if !w.poles.is_empty() {
            let p0 = w.poles[1] - w.center;
            if p0 < 1e-9 * q0 {
                return Err(Error::Numerical("resonance pole coincides with the valley split point".into()));
            }
            let half = (0.5 * p0).min(0.25 * q0);
            detours.push((w.poles[0] - half, w.poles[0] + half, false));
            detours.push((w.poles[1] - half, w.poles[1] + half, true));
        }
        let mut pts = vec![w.lo, w.center, w.hi];
        for d in &detours {
            pts.push(d.0);
            pts.push(d.1);
        }
        let breaks = sorted_breaks(pts);
        let f = |t: f64, out: &mut [C64]| {
            out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            if let Some(&(a, b, up)) = detours.iter().find(|d| t > d.0 && t < d.1) {
                // p(t) = t ± i h sin(π (t - a)/(b - a)); single valley image near the pole
                let h = 0.5 * (b - a);
                let sgn = if up { 1.0 } else { -1.0 };
                let arg = PI * (t - a) / (b - a);
                let p = C64::new(t, sgn * h * arg.sin());
                let dp = C64::new(1.0, sgn * h * PI / (b - a) * arg.cos());
                let dt = p - w.center;
                let term = valley_term(model, frame, w.valley, w.delta_long, dt, 0.0);
                accumulate(out, term, p, xs, dp);
            } else {
                let term = blended_term(model, &geom, w.valley, sub(frame.global(k, t), vp), 0.0);
                accumulate(out, term, C64::new(t, 0.0), xs, C64::new(1.0, 0.0));
            }
        };
        let (v, _) = integrate(f, &breaks, dim, QuadOptions { abs_tol: spec.abs_tol, rel_tol: spec.rel_tol, max_intervals: 200_000 })?;
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist2, norm2};
    use crate::units::standard_params;

    #[test]
    fn circular_diagonal_equal_and_axis_phase() {
        let p = standard_params(18.73, 0.5);
        for r in [[1.0, 0.0], [0.3, -2.2], [5.0, 7.0]] {
            let g = greens_real(r, &p).unwrap().m;
            assert_eq!(g[0][0], g[1][1]);
        }
        let g = greens_real([2.0, 0.0], &p).unwrap().m;
        assert!((g[0][1] + g[1][0]).norm() < 1e-15 * g[0][1].norm());
        assert!(greens_real([0.0, 0.0], &p).is_err());
    }

    #[test]
    fn term_by_term_at_r1() {
        let p = standard_params(18.73, 0.5);
        let s = p.scaled();
        let g = greens_real([3f64.sqrt() / 2.0, 0.5], &p).unwrap().m;
        // by hand: p_K·R1 = 2π/3 + π/3... evaluate the pieces independently
        let geom = LatticeGeometry::new(3.0);
        let r1 = geom.r1;
        let a = dot(geom.pk, r1);
        let b = dot(geom.pk_prime, r1);
        let (h0, h1) = (crate::special::hankel2(0, 1.0 / s.xi).unwrap(), crate::special::hankel2(1, 1.0 / s.xi).unwrap());
        let pp = C64::new(0.0, s.k_amp) * (C64::from_polar(1.0, a) + C64::from_polar(1.0, b));
        let pm = C64::new(0.0, s.k_amp) * (C64::from_polar(1.0, a) - C64::from_polar(1.0, b));
        let phi = PI / 6.0;
        assert!((g[0][0] + pp * h0).norm() < 1e-15);
        assert!((g[0][1] - C64::from_polar(1.0, phi) * pm * h1).norm() < 1e-15);
        assert!((g[1][0] + C64::from_polar(1.0, -phi) * pm * h1).norm() < 1e-15);
    }

    #[test]
    fn envelope_decays_as_inverse_sqrt() {
        let p = standard_params(18.73, 0.5);
        let xi = p.scaled().xi;
        // |H0| sampled along a direction where e^{ip_K r} + e^{ip_K' r} has constant modulus
        let env = |r: f64| {
            let g = greens_real([0.0, 3.0 * r], &p).unwrap().m;
            g[0][0].norm().hypot(g[0][1].norm())
        };
        let (r1, r2) = (20.0 * xi, 200.0 * xi);
        let slope = (env(r2 / 3.0).ln() - env(r1 / 3.0).ln()) / ((r2 / r1).ln());
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn onsite_is_decay_and_linear_in_detuning() {
        let a = onsite_term(&standard_params(1.0, 0.0));
        let b = onsite_term(&standard_params(2.0, 0.0));
        assert!(a.im < 0.0 && a.re == 0.0);
        assert!((b.im / a.im - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frame_sites_are_lattice_points() {
        let geom = LatticeGeometry::new(3.0);
        for o in [Orientation::X, Orientation::Y] {
            let f = StripeFrame::new(o);
            for b in 0..7 {
                let (x, l) = f.site(b);
                let r = f.global(l, x);
                let c = geom.reciprocal_coords(r);
                // integer lattice coordinates <=> r·G_i / 2π integer
                let n1 = dot(r, geom.g1) / (2.0 * PI);
                let n2 = dot(r, geom.g2) / (2.0 * PI);
                assert!((n1 - n1.round()).abs() < 1e-12 && (n2 - n2.round()).abs() < 1e-12, "{o:?} b={b} {c:?}");
            }
            let t = f.global(f.period, 0.0);
            assert!((dot(t, geom.g1) / (2.0 * PI)).fract().abs() < 1e-12);
            assert!((dot(f.g_t, f.t) - 2.0 * PI / f.period).abs() < 1e-12);
            let gc = [dot(f.g_t, geom.r1) / (2.0 * PI), dot(f.g_t, geom.r2) / (2.0 * PI)];
            assert!((gc[0] - gc[0].round()).abs() < 1e-12 && (gc[1] - gc[1].round()).abs() < 1e-12);
            // the transverse window is a reciprocal-lattice vector
            let wv = f.global(0.0, f.window());
            let m1 = dot(wv, geom.r1) / (2.0 * PI);
            let m2 = dot(wv, geom.r2) / (2.0 * PI);
            assert!((m1 - m1.round()).abs() < 1e-12 && (m2 - m2.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn nonresonant_is_epsilon_independent() {
        let m = DiracConeModel::from_params(&standard_params(18.73, 0.5));
        let f = StripeFrame::new(Orientation::Y);
        let xs: Vec<f64> = (0..5).map(|j| j as f64 * f.row_spacing).collect();
        let k = f.bz_half_width(); // both valleys project onto k = 0 for this stripe
        assert!(valley_windows(k, &f, &m).iter().all(|w| w.poles.is_empty()));
        let spec = ContourSpec::real_axis(&m);
        let a = mixed_greens_many(k, &xs, &f, &m, &spec).unwrap();
        let b = mixed_greens_many(k, &xs, &f, &m, &ContourSpec { epsilon: spec.epsilon / 2.0, ..spec }).unwrap();
        let scale = norm2(&a[0].m);
        for (a, b) in a.iter().zip(&b) {
            assert!(dist2(&a.m, &b.m) < 1e-8 * scale);
        }
    }

    #[test]
    fn resonant_methods_agree() {
        let m = DiracConeModel::from_params(&standard_params(18.73, 0.5));
        for o in [Orientation::X, Orientation::Y] {
            let f = StripeFrame::new(o);
            let vk = dot(m.pk, f.t);
            let k = f.fold(vk + 0.4 * m.ring_radius());
            let w = valley_windows(k, &f, &m);
            assert!(w.iter().any(|w| !w.poles.is_empty()));
            let xs: Vec<f64> = (0..6).map(|j| j as f64 * f.row_spacing).collect();
            let a = mixed_greens_many(k, &xs, &f, &m, &ContourSpec::real_axis(&m)).unwrap();
            let b = mixed_greens_many(k, &xs, &f, &m, &ContourSpec::deformed()).unwrap();
            let scale = norm2(&a[0].m);
            for (j, (a, b)) in a.iter().zip(&b).enumerate() {
                assert!(dist2(&a.m, &b.m) < 1e-6 * scale, "{o:?} x#{j}: {:e}", dist2(&a.m, &b.m) / scale);
            }
        }
    }

    #[test]
    fn golden_rule_rate() {
        // Γ = 2π Σ_valleys ρ(ω_A) <|σ+ · E|^2> g_pref 𝒜 c^2 / (2 ω_A), with the
        // density of states from the area enclosed by the iso-frequency ring
        // and the polarisation average by direct angular quadrature.
        for thz in [0.321, 18.73] {
            let p = standard_params(thz, 0.0);
            let s = p.scaled();
            let m = DiracConeModel::from_params(&p);
            let q_of = |w: f64| (m.omega_dirac() - w) / m.v_s; // lower branch
            let h = 1e-3 * s.delta_a;
            let area = |w: f64| PI * q_of(w).powi(2) / (4.0 * PI * PI);
            let rho = (area(s.omega_a - h) - area(s.omega_a + h)) / (2.0 * h);
            let mut avg = 0.0;
            let n = 720;
            for v in Valley::BOTH {
                let mut acc = 0.0;
                for i in 0..n {
                    let phi = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                    let pt = [m.valley(v)[0] + q_of(s.omega_a) * phi.cos(), m.valley(v)[1] + q_of(s.omega_a) * phi.sin()];
                    let e = crate::env::cone_field(&m, pt, v, Branch::Lower).unwrap();
                    // σ+ = -(x + i y)/√2
                    acc += (e[0] * e[0] + e[1] * e[1]) / 2.0;
                }
                avg += acc / n as f64;
            }
            let oracle = 2.0 * PI * rho * avg * s.g_pref * s.cell_area * s.c * s.c / (2.0 * s.omega_a);
            let g = gamma_pc(&p);
            assert!((g - oracle).abs() < 1e-6 * oracle, "{thz}: {g} vs {oracle}");
        }
    }

    #[test]
    fn transverse_poisson_sum_recovers_bloch_kernel() {
        // Σ_j g(k; jΔ) e^{-iqjΔ} Δ = g(k t + q n) for an off-resonant line
        let m = DiracConeModel::from_params(&standard_params(18.73, 0.5));
        let f = StripeFrame::new(Orientation::X);
        let k = 0.0;
        assert!(valley_windows(k, &f, &m).iter().all(|w| w.poles.is_empty()));
        let jmax = 400;
        let xs: Vec<f64> = (0..=jmax).map(|j| j as f64 * f.row_spacing).collect();
        let g = mixed_greens_many(k, &xs, &f, &m, &ContourSpec::real_axis(&m)).unwrap();
        let env = crate::env::PhotonicEnv::Cone(m);
        for q in [0.3, 1.1, 2.5] {
            let mut sum = crate::linalg::ZERO2;
            for j in -(jmax as i64)..=(jmax as i64) {
                let gj = &g[j.unsigned_abs() as usize].m;
                // g(k; -x) = g(k; x) with the transverse field components odd
                let sgn = if j < 0 { -1.0 } else { 1.0 };
                let ph = C64::from_polar(f.row_spacing, -q * j as f64 * f.row_spacing);
                let flip = [[gj[0][0], gj[0][1] * sgn], [gj[1][0] * sgn, gj[1][1]]];
                sum = crate::linalg::add2(&sum, &crate::linalg::scale2(&flip, ph));
            }
            let direct = crate::env::momentum_greens(f.global(k, q), &env).unwrap().m;
            assert!(dist2(&sum, &direct) < 1e-4 * norm2(&direct), "q={q}: {:e}", dist2(&sum, &direct) / norm2(&direct));
        }
    }
}
