//! Photonic environment: the analytic Dirac-cone model, tabulated band data,
//! and the momentum-space Green's function g(k).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{norm, sub, Basis, GreensMatrix, LatticeGeometry, Valley, Vec2};
use crate::linalg::{Mat2, ZERO2};
use crate::units::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Upper, Branch::Lower];
    pub fn sign(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }
}

/// Analytic cone environment in scaled units (a = 1, gamma = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracConeModel {
    pub omega_a: f64,
    /// omega_Dirac - omega_A.
    pub delta_a: f64,
    pub v_s: f64,
    /// Real field amplitude at the emitter, a^{-3/2}.
    pub e0: f64,
    pub pk: Vec2,
    pub pk_prime: Vec2,
    /// +i epsilon in the squared-frequency denominator (gamma^2).
    pub epsilon_reg: f64,
    pub c: f64,
    pub cell_area: f64,
    pub geometry: LatticeGeometry,
}

impl DiracConeModel {
    pub fn from_params(params: &PhysicalParams) -> Self {
        let s = params.scaled();
        let geometry = LatticeGeometry::new(s.wavelength);
        Self {
            omega_a: s.omega_a,
            delta_a: s.delta_a,
            v_s: s.v_s,
            e0: s.e0_sq.sqrt(),
            pk: geometry.pk,
            pk_prime: geometry.pk_prime,
            epsilon_reg: default_epsilon(s.omega_a, s.delta_a) * params.primaries.epsilon_scale,
            c: s.c,
            cell_area: s.cell_area,
            geometry,
        }
    }

    pub fn omega_dirac(&self) -> f64 {
        self.omega_a + self.delta_a
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon_reg = eps;
        self
    }

    pub fn valley(&self, v: Valley) -> Vec2 {
        match v {
            Valley::K => self.pk,
            Valley::KPrime => self.pk_prime,
        }
    }

    /// Radius of the resonance ring, delta_A / v_s.
    pub fn ring_radius(&self) -> f64 {
        self.delta_a / self.v_s
    }
}

/// 2 omega_A (1e-4 delta_A).
pub fn default_epsilon(omega_a: f64, delta_a: f64) -> f64 {
    2.0 * omega_a * 1e-4 * delta_a
}

pub fn cone_dispersion(model: &DiracConeModel, p: Vec2, valley: Valley, branch: Branch) -> f64 {
    model.omega_dirac() + branch.sign() * model.v_s * norm(sub(p, model.valley(valley)))
}

/// Angle of a displacement from a valley, in (-π, π].
pub fn valley_angle(d: Vec2) -> f64 {
    d[1].atan2(d[0])
}

/// Field of the guided mode at the emitter site (real, Cartesian).
pub fn cone_field(model: &DiracConeModel, p: Vec2, valley: Valley, branch: Branch) -> Result<[f64; 2]> {
    let d = sub(p, model.valley(valley));
    if norm(d) == 0.0 {
        return Err(Error::Domain("field angle undefined at the valley point".into()));
    }
    let h = valley_angle(d) / 2.0;
    let e = model.e0;
    Ok(match (valley, branch) {
        (Valley::K, Branch::Upper) => [e * (h - FRAC_PI_4).sin(), e * (h + FRAC_PI_4).sin()],
        (Valley::K, Branch::Lower) => [e * (h + FRAC_PI_4).sin(), -e * (h - FRAC_PI_4).sin()],
        (Valley::KPrime, Branch::Upper) => [e * (h + FRAC_PI_4).sin(), -e * (h - FRAC_PI_4).sin()],
        (Valley::KPrime, Branch::Lower) => [e * (h - FRAC_PI_4).sin(), e * (h + FRAC_PI_4).sin()],
    })
}

/// Whether the (valley, branch) field has the `(1 + sin Φ, cos Φ)` structure.
pub(crate) fn plus_structure(valley: Valley, branch: Branch) -> bool {
    matches!((valley, branch), (Valley::K, Branch::Lower) | (Valley::KPrime, Branch::Upper))
}

/// E E^T / E0^2 from the displacement's cos Φ and sin Φ (complex to allow
/// analytic continuation off the real axis).
pub(crate) fn field_structure(plus: bool, cos_phi: C64, sin_phi: C64) -> [C64; 3] {
    let one = C64::new(1.0, 0.0);
    if plus {
        [(one + sin_phi) * 0.5, cos_phi * 0.5, (one - sin_phi) * 0.5]
    } else {
        [(one - sin_phi) * 0.5, -cos_phi * 0.5, (one + sin_phi) * 0.5]
    }
}

/// Externally tabulated band data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedBands {
    /// Momenta in units of 1/a.
    pub k: Vec<Vec2>,
    pub bands: Vec<TabulatedBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedBand {
    pub index: usize,
    /// omega a / (2 pi c) per k point.
    pub omega: Vec<f64>,
    pub ux: Vec<C64>,
    pub uy: Vec<C64>,
}

/// Photonic environment used by the band and edge modules.
#[derive(Debug, Clone)]
pub enum PhotonicEnv {
    Cone(DiracConeModel),
    Tabulated {
        bands: TabulatedBands,
        omega_a: f64,
        c: f64,
        cell_area: f64,
        epsilon_reg: f64,
    },
}

impl PhotonicEnv {
    pub fn tabulated(bands: TabulatedBands, params: &PhysicalParams) -> Self {
        let s = params.scaled();
        PhotonicEnv::Tabulated {
            bands,
            omega_a: s.omega_a,
            c: s.c,
            cell_area: s.cell_area,
            epsilon_reg: default_epsilon(s.omega_a, s.delta_a) * params.primaries.epsilon_scale,
        }
    }
}

/// Width (1/a)^2 of the blend between valley images.
///
/// Each valley term is periodised by a soft-min over nearby reciprocal-lattice
/// images, weight ∝ exp(-|Δ|²/w). Near a valley the nearest image carries all
/// the weight to exp(-40) or better; on zone boundaries the blend is smooth and
/// keeps the threefold symmetry that a hard minimum-image rule breaks.
pub const IMAGE_BLEND: f64 = 1.0;

/// Weighted images of a valley offset.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Images {
    pub n: usize,
    pub d: [Vec2; 9],
    pub w: [f64; 9],
}

pub(crate) fn valley_images(geom: &LatticeGeometry, q: Vec2) -> Images {
    let base = geom.min_image(q);
    let b2 = base[0] * base[0] + base[1] * base[1];
    let mut out = Images { n: 0, d: [[0.0; 2]; 9], w: [0.0; 9] };
    let mut total = 0.0;
    for n1 in -1..=1 {
        for n2 in -1..=1 {
            let d = [
                base[0] + n1 as f64 * geom.g1[0] + n2 as f64 * geom.g2[0],
                base[1] + n1 as f64 * geom.g1[1] + n2 as f64 * geom.g2[1],
            ];
            let w = (-(d[0] * d[0] + d[1] * d[1] - b2) / IMAGE_BLEND).exp();
            if w > 1e-18 {
                out.d[out.n] = d;
                out.w[out.n] = w;
                out.n += 1;
                total += w;
            }
        }
    }
    for w in out.w.iter_mut().take(out.n) {
        *w /= total;
    }
    out
}

/// Both branches of one valley at offset d, without the prefactor.
pub(crate) fn valley_entries(model: &DiracConeModel, valley: Valley, d: Vec2, eps: f64) -> [C64; 3] {
    let q = norm(d);
    let (cp, sp) = if q > 0.0 { (d[0] / q, d[1] / q) } else { (1.0, 0.0) };
    let mut out = [C64::new(0.0, 0.0); 3];
    for branch in Branch::BOTH {
        let s = branch.sign();
        // omega_A^2 - omega^2 factored to avoid cancellation
        let minus = -model.delta_a - s * model.v_s * q;
        let plus = 2.0 * model.omega_a + model.delta_a + s * model.v_s * q;
        let den = C64::new(minus * plus, eps);
        let st = field_structure(plus_structure(valley, branch), C64::new(cp, 0.0), C64::new(sp, 0.0));
        for i in 0..3 {
            out[i] += st[i] / den;
        }
    }
    out
}

/// g(k) for the analytic model, Cartesian (xx, xy, yy), in scaled units.
pub(crate) fn cone_greens_entries(model: &DiracConeModel, k: Vec2, eps: f64) -> [C64; 3] {
    let pref = model.cell_area * model.c * model.c * model.e0 * model.e0;
    let mut out = [C64::new(0.0, 0.0); 3];
    for valley in Valley::BOTH {
        let im = valley_images(&model.geometry, sub(k, model.valley(valley)));
        for i in 0..im.n {
            let e = valley_entries(model, valley, im.d[i], eps);
            for c in 0..3 {
                out[c] += e[c] * (pref * im.w[i]);
            }
        }
    }
    out
}

pub(crate) fn entries_to_mat(e: [C64; 3]) -> Mat2 {
    [[e[0], e[1]], [e[1], e[2]]]
}

/// Momentum-space Green's function g(k), Cartesian basis, scaled units
/// (multiply by g_pref / cell_area to get a rate in gamma).
pub fn momentum_greens(k: Vec2, env: &PhotonicEnv) -> Result<GreensMatrix> {
    match env {
        PhotonicEnv::Cone(model) => {
            if !(model.epsilon_reg > 0.0) {
                let on_ring = Valley::BOTH.iter().any(|&v| {
                    let q = norm(model.geometry.min_image(sub(k, model.valley(v))));
                    (model.v_s * q - model.delta_a).abs() <= 1e-12 * model.delta_a
                });
                if on_ring {
                    return Err(Error::Domain("k on the resonance ring requires epsilon_reg > 0".into()));
                }
            }
            Ok(GreensMatrix::new(entries_to_mat(cone_greens_entries(model, k, model.epsilon_reg)), Basis::Cartesian))
        }
        PhotonicEnv::Tabulated { bands, omega_a, c, cell_area, epsilon_reg } => {
            let idx = bands
                .k
                .iter()
                .position(|q| norm(sub(*q, k)) < 1e-9)
                .ok_or_else(|| Error::Domain(format!("k = ({:.6}, {:.6}) is not a tabulated point", k[0], k[1])))?;
            let mut m = ZERO2;
            for b in &bands.bands {
                let w = 2.0 * PI * c * b.omega[idx];
                let den = C64::new((omega_a - w) * (omega_a + w), *epsilon_reg);
                let e = [b.ux[idx], b.uy[idx]];
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] += e[i].conj() * e[j] * (cell_area * c * c) / den;
                    }
                }
            }
            Ok(GreensMatrix::new(m, Basis::Cartesian))
        }
    }
}

const HEADER_KEYS: [(&str, &str); 3] = [
    ("frequency_unit", "omega_a_over_2pi_c"),
    ("momentum_unit", "two_pi_over_a"),
    ("field_normalization", "bloch_u_over_a3_2"),
];

/// Parse the tabulated band format (see `docs/formats/tabulated-bands.md`).
pub fn parse_tabulated(text: &str, origin: &str) -> Result<TabulatedBands> {
    let fmt_err = |msg: String| Error::Format { path: origin.to_string(), msg };
    let mut header = BTreeMap::new();
    let mut rows: BTreeMap<usize, BTreeMap<(i64, i64), (Vec2, f64, C64, C64)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            if let Some((k, v)) = h.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if t.starts_with("kx") {
            continue;
        }
        let cols: Vec<&str> = t.split_whitespace().collect();
        if cols.len() != 8 {
            return Err(fmt_err(format!("line {}: expected 8 columns, found {}", n + 1, cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| fmt_err(format!("line {}: bad number `{}`", n + 1, cols[i])))
        };
        let band: usize = cols[2].parse().map_err(|_| fmt_err(format!("line {}: bad band index `{}`", n + 1, cols[2])))?;
        let k = [num(0)? * 2.0 * PI, num(1)? * 2.0 * PI];
        let w = num(3)?;
        if w <= 0.0 {
            return Err(fmt_err(format!("line {}: frequency must be positive", n + 1)));
        }
        let key = ((k[0] * 1e9).round() as i64, (k[1] * 1e9).round() as i64);
        let entry = (k, w, C64::new(num(4)?, num(5)?), C64::new(num(6)?, num(7)?));
        if rows.entry(band).or_default().insert(key, entry).is_some() {
            return Err(fmt_err(format!("line {}: duplicate row for band {band} at this k", n + 1)));
        }
    }
    for (k, v) in HEADER_KEYS {
        match header.get(k) {
            None => return Err(fmt_err(format!("missing header `{k}`"))),
            Some(x) if x != v => return Err(fmt_err(format!("header `{k}` must be `{v}`, found `{x}`"))),
            _ => {}
        }
    }
    if rows.is_empty() {
        return Err(fmt_err("no band rows".into()));
    }
    let first: Vec<(i64, i64)> = rows.values().next().unwrap().keys().copied().collect();
    let k: Vec<Vec2> = rows.values().next().unwrap().values().map(|r| r.0).collect();
    let mut bands = Vec::new();
    for (index, r) in rows {
        if r.keys().copied().collect::<Vec<_>>() != first {
            return Err(fmt_err(format!("band {index} is sampled on a different k grid")));
        }
        bands.push(TabulatedBand {
            index,
            omega: r.values().map(|x| x.1).collect(),
            ux: r.values().map(|x| x.2).collect(),
            uy: r.values().map(|x| x.3).collect(),
        });
    }
    Ok(TabulatedBands { k, bands })
}

pub fn load_tabulated(path: impl AsRef<Path>) -> Result<TabulatedBands> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    parse_tabulated(&text, &p.display().to_string())
}

/// Result of a cone fit; frequencies in omega a / (2 pi c), momenta in 1/a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracFit {
    pub omega_dirac: f64,
    /// d(omega a / 2 pi c) / d(|k| a).
    pub slope: f64,
    /// Mean |u|^2, i.e. E0^2 in units of 1/a^3.
    pub e0_sq: f64,
    pub rms_residual: f64,
    pub points: usize,
    pub model: DiracConeModel,
}

/// Least-squares cone fit ω = ω_D ± v|k − K| within `radius` of the valley.
///
/// `lower`/`upper` are the band indices of the two cone branches; `max_rel_rms`
/// bounds the residual relative to the fitted cone excursion v·radius.
pub fn dirac_fit(
    bands: &TabulatedBands,
    params: &PhysicalParams,
    valley: Valley,
    radius: f64,
    (lower, upper): (usize, usize),
    max_rel_rms: f64,
) -> Result<DiracFit> {
    let s = params.scaled();
    let geom = LatticeGeometry::new(s.wavelength);
    let find = |i: usize| {
        bands.bands.iter().find(|b| b.index == i).ok_or_else(|| Error::Domain(format!("band {i} not tabulated")))
    };
    let (bl, bu) = (find(lower)?, find(upper)?);
    // normal equations for y = w_D + s v q
    let (mut n, mut sq, mut sqq, mut sy, mut syq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut samples = Vec::new();
    let mut intensity = 0.0;
    let mut n_int = 0usize;
    for (i, k) in bands.k.iter().enumerate() {
        let q = norm(geom.min_image(sub(*k, geom.valley(valley))));
        if q > radius {
            continue;
        }
        for (b, sgn) in [(bl, -1.0), (bu, 1.0)] {
            let y = b.omega[i];
            let x = sgn * q;
            n += 1.0;
            sq += x;
            sqq += x * x;
            sy += y;
            syq += x * y;
            samples.push((x, y));
            if q > 0.0 {
                intensity += b.ux[i].norm_sqr() + b.uy[i].norm_sqr();
                n_int += 1;
            }
        }
    }
    if samples.len() < 6 || n_int == 0 {
        return Err(Error::Domain(format!("insufficient points within radius {radius}: {}", samples.len())));
    }
    let det = n * sqq - sq * sq;
    if det.abs() < 1e-300 {
        return Err(Error::Domain("degenerate fit geometry".into()));
    }
    let w_d = (sqq * sy - sq * syq) / det;
    let slope = (n * syq - sq * sy) / det;
    let rms = (samples.iter().map(|(x, y)| (y - w_d - slope * x).powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    let excursion = slope * radius;
    if !(slope > 0.0) || excursion <= 1e-9 * w_d.abs() || rms > max_rel_rms * excursion {
        return Err(Error::Domain(format!(
            "data are not conical: slope {slope:.3e}, rms residual {rms:.3e}, excursion {excursion:.3e}"
        )));
    }
    let e0_sq = intensity / n_int as f64;
    let omega_d = 2.0 * PI * s.c * w_d;
    let model = DiracConeModel {
        omega_a: s.omega_a,
        delta_a: omega_d - s.omega_a,
        v_s: 2.0 * PI * s.c * slope,
        e0: e0_sq.sqrt(),
        pk: geom.pk,
        pk_prime: geom.pk_prime,
        epsilon_reg: default_epsilon(s.omega_a, (omega_d - s.omega_a).abs()) * params.primaries.epsilon_scale,
        c: s.c,
        cell_area: s.cell_area,
        geometry: geom,
    };
    Ok(DiracFit { omega_dirac: w_d, slope, e0_sq, rms_residual: rms, points: samples.len(), model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::add;
    use crate::linalg::dist2;
    use crate::units::standard_params;
    use rand::{Rng, SeedableRng};

    fn fig4() -> DiracConeModel {
        DiracConeModel::from_params(&standard_params(18.73, 0.5))
    }

    #[test]
    fn dispersion_examples() {
        let m = fig4();
        for b in Branch::BOTH {
            assert_eq!(cone_dispersion(&m, m.pk, Valley::K, b), m.omega_dirac());
        }
        let q = 0.1;
        let w = cone_dispersion(&m, add(m.pk, [q, 0.0]), Valley::K, Branch::Lower);
        assert!((w - (m.omega_dirac() - m.v_s * q)).abs() < 1e-6);
        let ring = add(m.pk, [0.0, m.ring_radius()]);
        let w = cone_dispersion(&m, ring, Valley::K, Branch::Lower);
        assert!((w - m.omega_a).abs() < 1e-6 * m.omega_a * 1e-3);
    }

    #[test]
    fn field_examples() {
        let m = fig4();
        let f = cone_field(&m, add(m.pk, [0.0, 0.3]), Valley::K, Branch::Upper).unwrap();
        assert!((f[0]).abs() < 1e-15 && (f[1] - m.e0).abs() < 1e-15);
        let f = cone_field(&m, add(m.pk, [0.0, -0.3]), Valley::K, Branch::Upper).unwrap();
        assert!((f[0].hypot(f[1]) - m.e0).abs() < 1e-15);
        assert!(cone_field(&m, m.pk, Valley::K, Branch::Lower).is_err());
    }

    #[test]
    fn field_products_match_structure() {
        let m = fig4();
        for v in Valley::BOTH {
            for b in Branch::BOTH {
                for t in 0..12 {
                    let phi = -3.0 + 0.5 * t as f64;
                    let d = [0.2 * phi.cos(), 0.2 * phi.sin()];
                    let f = cone_field(&m, add(m.valley(v), d), v, b).unwrap();
                    let st = field_structure(plus_structure(v, b), C64::new(phi.cos(), 0.0), C64::new(phi.sin(), 0.0));
                    let e2 = m.e0 * m.e0;
                    assert!((st[0].re * e2 - f[0] * f[0]).abs() < 1e-12);
                    assert!((st[1].re * e2 - f[0] * f[1]).abs() < 1e-12);
                    assert!((st[2].re * e2 - f[1] * f[1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn greens_even_in_k() {
        let env = PhotonicEnv::Cone(fig4());
        for (x, y) in [(0.3, 0.1), (2.0, 1.1), (-1.7, 2.9), (3.6, 2.0)] {
            let a = momentum_greens([x, y], &env).unwrap();
            let b = momentum_greens([-x, -y], &env).unwrap();
            assert!(dist2(&a.m, &b.m) <= 1e-10 * crate::linalg::norm2(&a.m));
        }
    }

    #[test]
    fn greens_bounded_far_from_valleys() {
        let m = fig4();
        let env = PhotonicEnv::Cone(m);
        let g = momentum_greens([0.0, 0.0], &env).unwrap();
        let pref = m.cell_area * m.c * m.c * m.e0 * m.e0;
        let mut bound = 0.0;
        for v in Valley::BOTH {
            let q = norm(m.geometry.min_image(sub([0.0, 0.0], m.valley(v))));
            for b in Branch::BOTH {
                let w = m.omega_dirac() + b.sign() * m.v_s * q;
                bound += 2.0 / ((m.omega_a - w) * (m.omega_a + w)).abs();
            }
        }
        assert!(crate::linalg::norm2(&g.m) <= pref * bound);
    }

    #[test]
    fn epsilon_halving_off_ring() {
        let m = fig4();
        let k = add(m.pk, [0.5 * m.ring_radius(), 0.2 * m.ring_radius()]);
        let a = momentum_greens(k, &PhotonicEnv::Cone(m)).unwrap();
        let b = momentum_greens(k, &PhotonicEnv::Cone(m.with_epsilon(m.epsilon_reg / 2.0))).unwrap();
        // the anti-Hermitian part is O(eps) off the ring, the Hermitian part O(eps^2)
        assert!(dist2(&a.m, &b.m) < 1e-3 * crate::linalg::norm2(&a.m));
        let herm = |g: &Mat2| {
            let mut h = *g;
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] = (g[i][j] + g[j][i].conj()) * 0.5;
                }
            }
            h
        };
        assert!(dist2(&herm(&a.m), &herm(&b.m)) < 1e-6 * crate::linalg::norm2(&a.m));
        let ring = add(m.pk, [m.ring_radius(), 0.0]);
        assert!(momentum_greens(ring, &PhotonicEnv::Cone(m.with_epsilon(0.0))).is_err());
    }

    /// Direct 2-D quadrature of the same integrand over a small cell around
    /// k, divided by its area, approaches g(k) as the cell shrinks.
    #[test]
    fn dense_quadrature_oracle_near_k() {
        let m = fig4();
        let env = PhotonicEnv::Cone(m);
        let k = add(m.pk, [0.4 * m.ring_radius(), -0.3 * m.ring_radius()]);
        let g = momentum_greens(k, &env).unwrap().m;
        let h = 1e-4;
        let (x, w) = crate::quad::gauss_legendre(8);
        let mut acc = ZERO2;
        for i in 0..8 {
            for j in 0..8 {
                let p = [k[0] + h * x[i], k[1] + h * x[j]];
                let v = momentum_greens(p, &env).unwrap().m;
                for a in 0..2 {
                    for b in 0..2 {
                        acc[a][b] += v[a][b] * (w[i] * w[j] / 4.0);
                    }
                }
            }
        }
        assert!(dist2(&acc, &g) < 1e-6 * crate::linalg::norm2(&g));
    }

    fn synthetic_file(w_d: f64, slope: f64, noise: f64, seed: u64) -> String {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = LatticeGeometry::new(3.0);
        let mut s = String::from(
            "# frequency_unit = omega_a_over_2pi_c\n# momentum_unit = two_pi_over_a\n# field_normalization = bloch_u_over_a3_2\nkx ky band_index omega Re_ux Im_ux Re_uy Im_uy\n",
        );
        let u = (0.1855f64 / 2.0).sqrt();
        for i in -10..=10 {
            for j in -10..=10 {
                let d = [0.03 * i as f64, 0.03 * j as f64];
                let k = add(g.pk, d);
                let q = norm(d);
                for (band, sgn) in [(0, -1.0), (1, 1.0)] {
                    let exc = sgn * slope * q;
                    let y = w_d + exc * (1.0 + noise * rng.random_range(-1.0..1.0) * 3f64.sqrt());
                    s += &format!(
                        "{} {} {band} {y} {u} 0 {u} 0\n",
                        k[0] / (2.0 * PI),
                        k[1] / (2.0 * PI)
                    );
                }
            }
        }
        s
    }

    #[test]
    fn fit_recovers_exact_cone() {
        let p = standard_params(18.73, 0.5);
        let slope = 0.25 / (2.0 * PI);
        let t = parse_tabulated(&synthetic_file(0.32545, slope, 0.0, 1), "mem").unwrap();
        let fit = dirac_fit(&t, &p, Valley::K, 0.25, (0, 1), 0.05).unwrap();
        assert!((fit.omega_dirac - 0.32545).abs() < 1e-12);
        assert!((fit.slope / slope - 1.0).abs() < 1e-10);
        assert!((fit.model.v_s / p.scaled().v_s - 1.0).abs() < 1e-10);
        assert!((fit.e0_sq - 0.1855).abs() < 1e-12);
    }

    #[test]
    fn fit_with_noise_monte_carlo() {
        let p = standard_params(18.73, 0.5);
        let slope = 0.25 / (2.0 * PI);
        for seed in 0..20 {
            let t = parse_tabulated(&synthetic_file(0.32545, slope, 0.01, seed), "mem").unwrap();
            let fit = dirac_fit(&t, &p, Valley::K, 0.25, (0, 1), 0.05).unwrap();
            assert!((fit.slope / slope - 1.0).abs() < 0.02, "seed {seed}");
        }
    }

    #[test]
    fn flat_band_rejected() {
        let p = standard_params(18.73, 0.5);
        let t = parse_tabulated(&synthetic_file(0.32545, 0.0, 0.0, 1), "mem").unwrap();
        assert!(dirac_fit(&t, &p, Valley::K, 0.25, (0, 1), 0.05).is_err());
        assert!(dirac_fit(&t, &p, Valley::K, 1e-6, (0, 1), 0.05).is_err(), "too few points");
    }

    #[test]
    fn tabulated_format_errors() {
        let good = synthetic_file(0.3, 0.04, 0.0, 1);
        assert!(parse_tabulated(&good, "mem").is_ok());
        let no_header: String = good.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        assert!(parse_tabulated(&no_header, "mem").is_err());
        let header_only: String = good.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(parse_tabulated(&header_only, "mem").is_err());
        let first_row = good.lines().nth(4).unwrap();
        assert!(parse_tabulated(&format!("{good}{first_row}\n"), "mem").is_err(), "duplicate row");
        assert!(parse_tabulated(&format!("{good}1 2 3\n"), "mem").is_err(), "malformed row");
        let ragged = format!("{good}0.9 0.9 0 0.3 0 0 0 0\n");
        assert!(parse_tabulated(&ragged, "mem").is_err(), "inconsistent grid");
    }

    #[test]
    fn tabulated_greens_matches_cone_terms() {
        // a table holding exactly the cone branches of every weighted image
        // reproduces the analytic g(k)
        let p = standard_params(18.73, 0.5);
        let m = DiracConeModel::from_params(&p);
        let k = add(m.pk, [0.05, 0.02]);
        let mut bands = Vec::new();
        let mut idx = 0;
        for v in Valley::BOTH {
            let im = valley_images(&m.geometry, sub(k, m.valley(v)));
            assert!(im.n >= 1);
            for i in 0..im.n {
                for b in Branch::BOTH {
                    let kk = im.d[i];
                    let w = m.omega_dirac() + b.sign() * m.v_s * norm(kk);
                    let f = cone_field(&m, add(m.valley(v), kk), v, b).unwrap();
                    let sw = im.w[i].sqrt();
                    bands.push(TabulatedBand {
                        index: idx,
                        omega: vec![w / (2.0 * PI * m.c)],
                        ux: vec![C64::new(f[0] * sw, 0.0)],
                        uy: vec![C64::new(f[1] * sw, 0.0)],
                    });
                    idx += 1;
                }
            }
        }
        let env = PhotonicEnv::tabulated(TabulatedBands { k: vec![k], bands }, &p);
        let a = momentum_greens(k, &env).unwrap();
        let b = momentum_greens(k, &PhotonicEnv::Cone(m)).unwrap();
        assert!(dist2(&a.m, &b.m) < 1e-9 * crate::linalg::norm2(&b.m));
        assert!(momentum_greens([0.0, 0.0], &env).is_err());
    }

    #[test]
    fn blended_images_are_threefold_symmetric_at_k() {
        // at K the K' term sits on a zone corner shared by three images
        let m = DiracConeModel::from_params(&standard_params(0.321, 25.0));
        let im = valley_images(&m.geometry, sub(m.pk, m.pk_prime));
        let heavy: Vec<f64> = im.w[..im.n].iter().copied().filter(|w| *w > 0.1).collect();
        assert_eq!(heavy.len(), 3);
        assert!(heavy.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
        let g = cone_greens_entries(&m, m.pk, m.epsilon_reg);
        assert!((g[0] - g[2]).norm() < 1e-12 * g[0].norm() && g[1].norm() < 1e-12 * g[0].norm());
        // deep inside a valley region the nearest image carries everything
        let near = valley_images(&m.geometry, [0.3, -0.2]);
        assert!(near.w[..near.n].iter().cloned().fold(0.0, f64::max) > 1.0 - 1e-15);
    }
}
